//! The coded-dispersal consensus engine.
//!
//! Each height moves through three beats under a stable leader: the leader
//! codes the block into n chunks and sends every node its own chunk plus the
//! parent certificate; every node forwards the first chunk it sees (and its
//! tailored one, if different); once f+1 distinct chunks of one identifier
//! arrive, a node reconstructs the payload, re-codes it, checks the Merkle
//! root, and broadcasts a vote on the identifier alone. f+1 votes certify
//! the identifier, the leader pipelines the next height, and a 2-delta quiet
//! period after seeing the next proposal commits the parent. Nodes never
//! need the full block to agree: a committed identifier is redeemed later by
//! an unsigned chunk hand-off authenticated against the committed root.
//!
//! Misbehavior never stalls the view silently: conflicting leader
//! signatures, provably mis-coded chunks, or a quorum of blames each form
//! portable evidence that quits the view and seats the next leader. An
//! optional mode for mobile sluggish faults replaces the local commit
//! timeout with an explicit f+1 commit-message quorum.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::codec::{Chunk, CodecParams};
use crate::crypto::{assemble_quorum, CryptoEnv, NodeId, Signature};
use crate::merkle::{self, Digest, MerkleTree};
use crate::messages::{
    blame_digest, commit_digest, new_view_digest, proposal_digest, Blame, CodingErrorEvidence,
    Commit, EquivocationEvidence, Evidence, Follow, HamsterMsg, LeaderMsg, Msg, NewView,
    Proposal, QuitView, SilenceEvidence, Status, Vote,
};
use crate::sim::{Actor, Event, EvidenceKind, Note, Output, TimerTag};
use crate::types::{
    encode_block, leader_of, reconstruct_and_check, vote_digest, Block, Certificate, Height,
    IdStore, IdentifierBlock, Segment, View,
};
use crate::wire::Wire;

/// Per-operation compute charges, in nanoseconds (fractional allowed).
#[derive(Debug, Clone, Copy, Default)]
pub struct ComputeCosts {
    pub field_op_ns: f64,
    pub hash_ns: f64,
    pub sig_ns: f64,
    pub verify_ns: f64,
}

impl ComputeCosts {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn charge(&self, field_ops: f64, hashes: f64, sigs: f64, verifies: f64) -> u64 {
        (field_ops * self.field_op_ns
            + hashes * self.hash_ns
            + sigs * self.sig_ns
            + verifies * self.verify_ns)
            .round() as u64
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProtocolConfig {
    pub n: usize,
    pub f: usize,
    pub delta_ns: u64,
    /// Replace the commit timeout with an explicit commit-message quorum
    /// and gate pre-commit on f+1 distinct proposal relayers.
    pub sluggish_mode: bool,
    pub follow_enabled: bool,
    pub costs: ComputeCosts,
}

impl ProtocolConfig {
    pub fn quorum(&self) -> usize {
        self.f + 1
    }
}

const PENDING_CAP: usize = 4096;

/// Per-(view, height) bookkeeping.
#[derive(Default)]
struct Book {
    /// identifier hash -> chunk index -> first proposal carrying it.
    segments: BTreeMap<Digest, BTreeMap<u32, Proposal>>,
    /// Transport-level senders of valid proposals at this height.
    relayers: BTreeSet<NodeId>,
    forwarded_first: bool,
    forwarded_own: bool,
    voted: bool,
    /// identifier hash -> voter -> signature.
    votes: BTreeMap<Digest, BTreeMap<NodeId, Signature>>,
    vote_ids: BTreeMap<Digest, IdentifierBlock>,
    certified: BTreeSet<Digest>,
    decode_attempted: BTreeSet<Digest>,
    timer_armed: bool,
    commit_target: Option<IdentifierBlock>,
}

#[derive(Default)]
struct FollowBook {
    chunks: BTreeMap<u32, Chunk>,
    forwarded_own: bool,
    done: bool,
}

pub struct HamsterNode {
    id: NodeId,
    cfg: ProtocolConfig,
    env: CryptoEnv,
    params: CodecParams,
    view: View,
    entered_at: u64,
    lock: Certificate,
    ids: IdStore,
    blocks: BTreeMap<Digest, Block>,
    chunk_sets: BTreeMap<Digest, Vec<Chunk>>,
    committed: BTreeMap<Height, IdentifierBlock>,
    committed_ids: BTreeSet<Digest>,
    books: BTreeMap<(View, Height), Book>,
    leader_seen: BTreeMap<View, BTreeMap<Height, LeaderMsg>>,
    votes_in_view: u64,
    blamed_levels: BTreeSet<(View, u32)>,
    blames: BTreeMap<View, BTreeMap<NodeId, Signature>>,
    quit_sent: BTreeSet<View>,
    status_best: Option<Certificate>,
    new_view_done: BTreeSet<View>,
    proposed: BTreeSet<(View, Height)>,
    pending_propose: Option<(Height, Certificate)>,
    pending: VecDeque<(NodeId, HamsterMsg)>,
    follows: BTreeMap<Digest, FollowBook>,
    pending_follows: VecDeque<(NodeId, Follow)>,
    commit_tally: BTreeMap<(Digest, View), BTreeMap<NodeId, Signature>>,
}

impl HamsterNode {
    pub fn new(id: NodeId, cfg: ProtocolConfig, env: CryptoEnv) -> Self {
        assert!(cfg.n >= 2 * cfg.f + 1, "need an honest majority");
        let params = CodecParams::new(cfg.n, cfg.f + 1).expect("valid codec shape");
        HamsterNode {
            id,
            cfg,
            env,
            params,
            view: 0,
            entered_at: 0,
            lock: Certificate::genesis(),
            ids: IdStore::new(),
            blocks: BTreeMap::new(),
            chunk_sets: BTreeMap::new(),
            committed: BTreeMap::new(),
            committed_ids: BTreeSet::new(),
            books: BTreeMap::new(),
            leader_seen: BTreeMap::new(),
            votes_in_view: 0,
            blamed_levels: BTreeSet::new(),
            blames: BTreeMap::new(),
            quit_sent: BTreeSet::new(),
            status_best: None,
            new_view_done: BTreeSet::new(),
            proposed: BTreeSet::new(),
            pending_propose: None,
            pending: VecDeque::new(),
            follows: BTreeMap::new(),
            pending_follows: VecDeque::new(),
            commit_tally: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn lock(&self) -> &Certificate {
        &self.lock
    }

    pub fn committed_chain(&self) -> &BTreeMap<Height, IdentifierBlock> {
        &self.committed
    }

    pub fn codec_params(&self) -> CodecParams {
        self.params
    }

    pub fn crypto(&self) -> &CryptoEnv {
        &self.env
    }

    fn is_leader(&self) -> bool {
        leader_of(self.view, self.cfg.n) == self.id
    }

    fn delta(&self) -> u64 {
        self.cfg.delta_ns
    }

    fn book(&mut self, view: View, height: Height) -> &mut Book {
        self.books.entry((view, height)).or_default()
    }

    /// Silence checkpoint `level` falls (3 * level + 4) * delta into a view.
    fn silence_deadline(&self, level: u32) -> u64 {
        (3 * level as u64 + 4) * self.delta()
    }

    fn buffer(&mut self, from: NodeId, msg: HamsterMsg) {
        if self.pending.len() < PENDING_CAP {
            self.pending.push_back((from, msg));
        }
    }

    fn enter_view(&mut self, view: View, now: u64, out: &mut Output) {
        if view <= self.view {
            return;
        }
        self.view = view;
        self.entered_at = now;
        self.votes_in_view = 0;
        self.status_best = None;
        out.note(Note::ViewEntered { view });
        let leader = leader_of(view, self.cfg.n);
        if leader == self.id {
            self.status_best = Some(self.lock.clone());
            out.timer(2 * self.delta(), TimerTag::NewViewWait { view });
        } else {
            out.send(
                leader,
                Msg::Hamster(HamsterMsg::Status(Status {
                    view,
                    lock: self.lock.clone(),
                })),
            );
        }
        out.timer(self.silence_deadline(1), TimerTag::Silence { view, level: 1 });
        let pending: Vec<_> = self.pending.drain(..).collect();
        for (from, msg) in pending {
            self.handle_msg(from, msg, now, out);
        }
    }

    /// Track a certificate seen anywhere; raise the lock if it outranks it.
    fn observe_cert(&mut self, cert: &Certificate, out: &mut Output) {
        self.ids.insert(cert.identifier.clone());
        if cert.rank() > self.lock.rank() {
            self.lock = cert.clone();
            out.note(Note::LockRaised { rank: cert.rank() });
        }
    }

    fn quit_view(&mut self, evidence: Evidence, kind: EvidenceKind, now: u64, out: &mut Output) {
        let view = evidence.view();
        if view < self.view {
            return;
        }
        out.note(Note::EvidenceDetected { view, kind });
        if !self.quit_sent.contains(&view) {
            self.quit_sent.insert(view);
            out.broadcast(Msg::Hamster(HamsterMsg::QuitView(QuitView {
                view,
                evidence,
            })));
        }
        self.enter_view(view + 1, now, out);
    }

    /// Record a leader-signed message and, when it provably conflicts with
    /// an earlier one from the same view, quit on equivocation evidence.
    /// Returns true when the view changed.
    fn record_leader_msg(&mut self, msg: LeaderMsg, now: u64, out: &mut Output) -> bool {
        let view = msg.view();
        let height = msg.identifier().height;
        let seen = self.leader_seen.entry(view).or_default();
        if let Some(prev) = seen.get(&height) {
            if prev.identifier() != msg.identifier() {
                let ev = Evidence::Equivocation(EquivocationEvidence {
                    view,
                    first: prev.clone(),
                    second: msg,
                    link: vec![],
                });
                self.quit_view(ev, EvidenceKind::Equivocation, now, out);
                return true;
            }
            return false;
        }
        // Check chain consistency against the nearest recorded heights.
        let lower = seen.range(..height).next_back().map(|(_, m)| m.clone());
        let higher = seen.range(height + 1..).next().map(|(_, m)| m.clone());
        seen.insert(height, msg.clone());
        for other in [lower, higher].into_iter().flatten() {
            let (hi, lo) = if other.identifier().height > height {
                (other.clone(), msg.clone())
            } else {
                (msg.clone(), other.clone())
            };
            if let Some(link) = self.non_extension_link(hi.identifier(), lo.identifier()) {
                let ev = Evidence::Equivocation(EquivocationEvidence {
                    view,
                    first: hi,
                    second: lo,
                    link,
                });
                self.quit_view(ev, EvidenceKind::Equivocation, now, out);
                return true;
            }
        }
        false
    }

    /// Walk `hi` down to `lo`'s height through known identifiers. Some(path)
    /// proves the endpoint differs from `lo`; None means consistent or not
    /// provable from what this node knows.
    fn non_extension_link(
        &self,
        hi: &IdentifierBlock,
        lo: &IdentifierBlock,
    ) -> Option<Vec<IdentifierBlock>> {
        let mut link = Vec::new();
        let mut cur = hi.clone();
        while cur.height > lo.height {
            let pred = cur.predecessor.as_ref()?;
            let next = self.ids.get(pred)?.clone();
            if next.height + 1 != cur.height {
                return None;
            }
            link.push(next.clone());
            cur = next;
        }
        if cur == *lo {
            None
        } else {
            Some(link)
        }
    }

    fn handle_msg(&mut self, from: NodeId, msg: HamsterMsg, now: u64, out: &mut Output) {
        // Follows and commits are view-independent; quit-views may fast-
        // forward; the rest act in their own view only.
        match &msg {
            HamsterMsg::Follow(_) | HamsterMsg::Commit(_) | HamsterMsg::QuitView(_) => {}
            HamsterMsg::Proposal(m) if m.view != self.view => {
                if m.view > self.view {
                    self.buffer(from, msg);
                }
                return;
            }
            HamsterMsg::Vote(m) if m.view != self.view => {
                if m.view > self.view {
                    self.buffer(from, msg);
                }
                return;
            }
            HamsterMsg::Status(m) if m.view != self.view => {
                if m.view > self.view {
                    self.buffer(from, msg);
                }
                return;
            }
            HamsterMsg::NewView(m) if m.view != self.view => {
                if m.view > self.view {
                    self.buffer(from, msg);
                }
                return;
            }
            HamsterMsg::Blame(m) if m.view != self.view => {
                if m.view > self.view {
                    self.buffer(from, msg);
                }
                return;
            }
            _ => {}
        }
        match msg {
            HamsterMsg::Proposal(m) => self.on_proposal(from, m, now, out),
            HamsterMsg::Vote(m) => self.on_vote(m, now, out),
            HamsterMsg::QuitView(m) => self.on_quit_view(m, now, out),
            HamsterMsg::Status(m) => self.on_status(m, out),
            HamsterMsg::NewView(m) => self.on_new_view(m, now, out),
            HamsterMsg::Blame(m) => self.on_blame(m, now, out),
            HamsterMsg::Commit(m) => self.on_commit_msg(m, now, out),
            HamsterMsg::Follow(m) => self.on_follow(from, m, now, out),
        }
    }

    fn on_proposal(&mut self, from: NodeId, p: Proposal, now: u64, out: &mut Output) {
        out.busy += self.cfg.costs.charge(0.0, 1.0, 0.0, 1.0);
        let n = self.cfg.n;
        let identifier = p.identifier().clone();
        let index = p.segment.chunk.index;
        if (index as usize) >= n
            || !p.verify_sig(&self.env, n)
            || !p.cert.verify(&self.env, self.cfg.quorum())
            || p.cert.view != p.view
            || identifier.height != p.cert.identifier.height + 1
        {
            return;
        }
        let expected_pred = if p.cert.identifier.is_bottom() {
            None
        } else {
            Some(p.cert.identifier.hash())
        };
        if identifier.predecessor != expected_pred {
            return;
        }
        self.observe_cert(&p.cert.clone(), out);
        let view = p.view;
        let height = identifier.height;
        let id_hash = identifier.hash();
        let msg_clone = HamsterMsg::Proposal(p.clone());
        {
            let book = self.book(view, height);
            book.relayers.insert(from);
            book.segments
                .entry(id_hash)
                .or_default()
                .entry(index)
                .or_insert_with(|| p.clone());
        }
        if self.record_leader_msg(LeaderMsg::Proposal(p.clone()), now, out) {
            return;
        }
        self.ids.insert(identifier.clone());
        let is_own_index = index == self.id;
        {
            let book = self.book(view, height);
            if !book.forwarded_first {
                book.forwarded_first = true;
                if is_own_index {
                    book.forwarded_own = true;
                }
                out.broadcast(Msg::Hamster(msg_clone));
            } else if is_own_index && !book.forwarded_own {
                book.forwarded_own = true;
                out.broadcast(Msg::Hamster(msg_clone));
            }
        }
        self.maybe_arm_precommit(view, height, &p.cert.identifier, out);
        self.maybe_vote(view, height, id_hash, now, out);
    }

    /// Proposals at height h gate the commit of their parent at h - 1:
    /// plain mode arms a 2-delta timer at the first one, sluggish mode
    /// waits for f+1 distinct relayers.
    fn maybe_arm_precommit(
        &mut self,
        view: View,
        height: Height,
        parent: &IdentifierBlock,
        out: &mut Output,
    ) {
        if parent.is_bottom() {
            return;
        }
        let quorum = self.cfg.quorum();
        let enough = if self.cfg.sluggish_mode {
            self.book(view, height).relayers.len() >= quorum
        } else {
            true
        };
        if !enough {
            return;
        }
        let delay = 2 * self.delta();
        let book = self.book(view, parent.height);
        if book.timer_armed {
            return;
        }
        book.timer_armed = true;
        book.commit_target = Some(parent.clone());
        out.timer(
            delay,
            TimerTag::CommitTimer {
                view,
                height: parent.height,
            },
        );
    }

    fn maybe_vote(&mut self, view: View, height: Height, id_hash: Digest, now: u64, out: &mut Output) {
        let k = self.cfg.quorum();
        let book = self.book(view, height);
        if book.voted || book.decode_attempted.contains(&id_hash) {
            return;
        }
        let Some(segs) = book.segments.get(&id_hash) else {
            return;
        };
        if segs.len() < k {
            return;
        }
        book.decode_attempted.insert(id_hash);
        let used: Vec<Proposal> = segs.values().take(k).cloned().collect();
        let chunks: Vec<Chunk> = used.iter().map(|p| p.segment.chunk.clone()).collect();
        let identifier = used[0].identifier().clone();
        match reconstruct_and_check(self.params, &chunks, &identifier) {
            Ok(rec) => {
                let n = self.cfg.n as f64;
                let m = rec.payload.len() as f64;
                out.busy += self.cfg.costs.charge(n * m, 2.0 * n, 1.0, 0.0);
                if let Ok(block) = Block::from_bytes(&rec.payload) {
                    self.blocks.insert(id_hash, block);
                }
                self.chunk_sets.insert(id_hash, rec.chunks);
                let book = self.book(view, height);
                book.voted = true;
                self.votes_in_view += 1;
                let digest = vote_digest(&identifier, view);
                let sig = self.env.sign(self.id, &digest);
                out.broadcast(Msg::Hamster(HamsterMsg::Vote(Vote {
                    view,
                    identifier: identifier.clone(),
                    voter: self.id,
                    sig: sig.clone(),
                })));
                out.note(Note::VoteCast {
                    view,
                    identifier: identifier.clone(),
                });
                self.tally_vote(view, identifier, self.id, sig, out);
            }
            Err(_) => {
                let ev = Evidence::CodingError(CodingErrorEvidence {
                    view,
                    proposals: used,
                });
                self.quit_view(ev, EvidenceKind::Coding, now, out);
            }
        }
    }

    fn tally_vote(
        &mut self,
        view: View,
        identifier: IdentifierBlock,
        voter: NodeId,
        sig: Signature,
        out: &mut Output,
    ) {
        let quorum = self.cfg.quorum();
        let height = identifier.height;
        let id_hash = identifier.hash();
        let book = self.book(view, height);
        book.vote_ids.entry(id_hash).or_insert(identifier.clone());
        book.votes.entry(id_hash).or_default().insert(voter, sig);
        let count = book.votes[&id_hash].len();
        if count < quorum || book.certified.contains(&id_hash) {
            return;
        }
        book.certified.insert(id_hash);
        let votes: Vec<(NodeId, Signature)> = book.votes[&id_hash]
            .iter()
            .map(|(id, s)| (*id, s.clone()))
            .collect();
        let cert = Certificate {
            view,
            identifier,
            quorum: assemble_quorum(&votes, quorum).expect("tally reached quorum"),
        };
        out.note(Note::CertFormed { cert: cert.clone() });
        self.observe_cert(&cert, out);
        if self.is_leader()
            && view == self.view
            && !self.proposed.contains(&(view, height + 1))
        {
            self.proposed.insert((view, height + 1));
            self.pending_propose = Some((height + 1, cert));
            out.note(Note::BatchNeeded { height: height + 1 });
        }
    }

    fn on_vote(&mut self, v: Vote, _now: u64, out: &mut Output) {
        out.busy += self.cfg.costs.charge(0.0, 0.0, 0.0, 1.0);
        if !v.verify_sig(&self.env) {
            return;
        }
        self.tally_vote(v.view, v.identifier, v.voter, v.sig, out);
    }

    fn on_status(&mut self, st: Status, out: &mut Output) {
        out.busy += self.cfg.costs.charge(0.0, 0.0, 0.0, 1.0);
        if leader_of(st.view, self.cfg.n) != self.id
            || self.new_view_done.contains(&st.view)
            || !st.lock.verify(&self.env, self.cfg.quorum())
        {
            return;
        }
        let better = match &self.status_best {
            Some(best) => st.lock.rank() > best.rank(),
            None => true,
        };
        if better {
            self.status_best = Some(st.lock);
        }
    }

    fn on_new_view(&mut self, nv: NewView, now: u64, out: &mut Output) {
        out.busy += self.cfg.costs.charge(0.0, 0.0, 0.0, 2.0);
        if self.new_view_done.contains(&nv.view)
            || !nv.verify_sig(&self.env, self.cfg.n)
            || !nv.cert.verify(&self.env, self.cfg.quorum())
            || nv.cert.view >= nv.view
        {
            return;
        }
        if self.record_leader_msg(LeaderMsg::NewView(nv.clone()), now, out) {
            return;
        }
        self.accept_new_view(nv, true, out);
    }

    /// Adopt a view-opening certificate: forward it (receivers only), vote
    /// on its identifier under the new view, and note the acceptance.
    fn accept_new_view(&mut self, nv: NewView, forward: bool, out: &mut Output) {
        let view = nv.view;
        self.new_view_done.insert(view);
        if nv.cert.rank() < self.lock.rank() {
            return;
        }
        self.observe_cert(&nv.cert.clone(), out);
        if forward {
            out.broadcast(Msg::Hamster(HamsterMsg::NewView(nv.clone())));
        }
        out.note(Note::NewViewAccepted { view });
        let identifier = nv.cert.identifier.clone();
        let height = identifier.height;
        let book = self.book(view, height);
        if book.voted {
            return;
        }
        book.voted = true;
        self.votes_in_view += 1;
        out.busy += self.cfg.costs.charge(0.0, 1.0, 1.0, 0.0);
        let digest = vote_digest(&identifier, view);
        let sig = self.env.sign(self.id, &digest);
        out.broadcast(Msg::Hamster(HamsterMsg::Vote(Vote {
            view,
            identifier: identifier.clone(),
            voter: self.id,
            sig: sig.clone(),
        })));
        out.note(Note::VoteCast {
            view,
            identifier: identifier.clone(),
        });
        self.tally_vote(view, identifier, self.id, sig, out);
    }

    fn on_blame(&mut self, b: Blame, now: u64, out: &mut Output) {
        out.busy += self.cfg.costs.charge(0.0, 0.0, 0.0, 1.0);
        if !b.verify_sig(&self.env) {
            return;
        }
        let view = b.view;
        self.blames
            .entry(view)
            .or_default()
            .insert(b.blamer, b.sig);
        if self.blames[&view].len() >= self.cfg.quorum() && view == self.view {
            let blames: Vec<Blame> = self.blames[&view]
                .iter()
                .map(|(id, sig)| Blame {
                    view,
                    blamer: *id,
                    sig: sig.clone(),
                })
                .collect();
            let ev = Evidence::Silence(SilenceEvidence { view, blames });
            self.quit_view(ev, EvidenceKind::Silence, now, out);
        }
    }

    fn on_quit_view(&mut self, qv: QuitView, now: u64, out: &mut Output) {
        if qv.view < self.view || qv.evidence.view() != qv.view {
            return;
        }
        out.busy += self
            .cfg
            .costs
            .charge(0.0, 0.0, 0.0, (1 + self.cfg.quorum()) as f64);
        if !qv.evidence.verify(&self.env, self.params, self.cfg.f) {
            return;
        }
        let kind = match &qv.evidence {
            Evidence::Equivocation(_) => EvidenceKind::Equivocation,
            Evidence::CodingError(_) => EvidenceKind::Coding,
            Evidence::Silence(_) => EvidenceKind::Silence,
        };
        self.quit_view(qv.evidence, kind, now, out);
    }

    fn on_commit_msg(&mut self, c: Commit, now: u64, out: &mut Output) {
        if !self.cfg.sluggish_mode {
            return;
        }
        out.busy += self.cfg.costs.charge(0.0, 0.0, 0.0, 1.0);
        if !c.verify_sig(&self.env) {
            return;
        }
        self.ids.insert(c.identifier.clone());
        let key = (c.identifier.hash(), c.view);
        self.commit_tally
            .entry(key)
            .or_default()
            .insert(c.committer, c.sig);
        if self.commit_tally[&key].len() >= self.cfg.quorum() {
            self.do_commit(c.identifier, c.view, now, out);
        }
    }

    fn on_follow(&mut self, from: NodeId, fl: Follow, now: u64, out: &mut Output) {
        let identifier = fl.segment.identifier.clone();
        let id_hash = identifier.hash();
        if !self.committed_ids.contains(&id_hash) {
            if self.pending_follows.len() < PENDING_CAP {
                self.pending_follows.push_back((from, fl));
            }
            return;
        }
        let n = self.cfg.n;
        let logn = (n as f64).log2().ceil().max(1.0);
        out.busy += self.cfg.costs.charge(0.0, logn + 1.0, 0.0, 0.0);
        let chunk = fl.segment.chunk.clone();
        if (chunk.index as usize) >= n
            || fl.proof.leaf_index != chunk.index
            || !merkle::verify(&identifier.content_root, n, &chunk.data, &fl.proof)
        {
            return;
        }
        // A node's own-index chunk is relayed once even after its own
        // instance closed: peers that missed the block depend on every
        // index circulating, not just the ones held by other laggards.
        let book = self.follows.entry(id_hash).or_default();
        let is_own = chunk.index == self.id;
        if is_own && !book.forwarded_own {
            book.forwarded_own = true;
            out.broadcast(Msg::Hamster(HamsterMsg::Follow(fl.clone())));
        }
        if book.done {
            return;
        }
        book.chunks.insert(chunk.index, chunk);
        let k = self.cfg.quorum();
        let book = self.follows.get_mut(&id_hash).expect("just inserted");
        if book.chunks.len() < k {
            return;
        }
        let chunks: Vec<Chunk> = book.chunks.values().take(k).cloned().collect();
        book.done = true;
        book.chunks.clear();
        if let Ok(rec) = reconstruct_and_check(self.params, &chunks, &identifier) {
            let m = rec.payload.len() as f64;
            out.busy += self
                .cfg
                .costs
                .charge(k as f64 * m, n as f64, 0.0, 0.0);
            if let Ok(block) = Block::from_bytes(&rec.payload) {
                out.note(Note::FollowCommitted { identifier, block });
            }
        }
        let _ = now;
    }

    /// Commit an identifier plus every known uncommitted ancestor,
    /// lowest first.
    fn do_commit(&mut self, identifier: IdentifierBlock, view: View, now: u64, out: &mut Output) {
        if self.committed_ids.contains(&identifier.hash()) || identifier.is_bottom() {
            return;
        }
        let mut chain = Vec::new();
        let mut cur = identifier;
        loop {
            if cur.is_bottom() || self.committed_ids.contains(&cur.hash()) {
                break;
            }
            chain.push(cur.clone());
            match &cur.predecessor {
                None => break,
                Some(h) => match self.ids.get(h) {
                    Some(p) => cur = p.clone(),
                    None => break,
                },
            }
        }
        for id in chain.into_iter().rev() {
            let id_hash = id.hash();
            self.committed_ids.insert(id_hash);
            self.committed.entry(id.height).or_insert_with(|| id.clone());
            out.note(Note::Committed {
                view,
                identifier: id.clone(),
                block: self.blocks.get(&id_hash).cloned(),
            });
            if self.cfg.follow_enabled {
                self.start_follow(&id, out);
            }
            let pending: Vec<_> = self.pending_follows.drain(..).collect();
            for (from, fl) in pending {
                if fl.segment.identifier.hash() == id_hash {
                    self.on_follow(from, fl, now, out);
                } else if self.pending_follows.len() < PENDING_CAP {
                    self.pending_follows.push_back((from, fl));
                }
            }
            self.chunk_sets.remove(&id_hash);
            self.blocks.remove(&id_hash);
        }
        // Shed the bulky segment and vote payloads of long-settled
        // heights, but keep each book's flags: a late proposal must
        // still see that this height was already voted and forwarded.
        if let Some(&horizon) = self.committed.keys().next_back() {
            for (&(_, h), book) in self.books.iter_mut() {
                if h + 2 <= horizon {
                    book.segments.clear();
                    book.votes.clear();
                }
            }
        }
    }

    /// Post-commit dispersal: a node holding the block hands every peer its
    /// tailored chunk with an inclusion proof, then closes its own instance.
    fn start_follow(&mut self, identifier: &IdentifierBlock, out: &mut Output) {
        let id_hash = identifier.hash();
        let book = self.follows.entry(id_hash).or_default();
        if book.done {
            return;
        }
        let Some(chunks) = self.chunk_sets.get(&id_hash) else {
            return;
        };
        let n = self.cfg.n;
        let k = self.cfg.quorum();
        let tree = MerkleTree::build(&chunks.iter().map(|c| c.data.as_slice()).collect::<Vec<_>>());
        let m = self
            .blocks
            .get(&id_hash)
            .map(|b| b.wire_len())
            .unwrap_or(chunks[0].data.len() * k) as f64;
        out.busy += self
            .cfg
            .costs
            .charge((n - k) as f64 * m, 3.0 * n as f64, 0.0, 0.0);
        for r in 0..n as NodeId {
            if r == self.id {
                continue;
            }
            out.send(
                r,
                Msg::Hamster(HamsterMsg::Follow(Follow {
                    segment: Segment {
                        chunk: chunks[r as usize].clone(),
                        identifier: identifier.clone(),
                    },
                    proof: tree.proof(r),
                })),
            );
        }
        let book = self.follows.get_mut(&id_hash).expect("just inserted");
        book.done = true;
        if let Some(block) = self.blocks.get(&id_hash) {
            out.note(Note::FollowCommitted {
                identifier: identifier.clone(),
                block: block.clone(),
            });
        }
    }

    fn on_timer(&mut self, tag: TimerTag, now: u64, out: &mut Output) {
        match tag {
            TimerTag::CommitTimer { view, height } => {
                if self.view != view {
                    return;
                }
                let Some(target) = self
                    .books
                    .get(&(view, height))
                    .and_then(|b| b.commit_target.clone())
                else {
                    return;
                };
                if self.cfg.sluggish_mode {
                    out.busy += self.cfg.costs.charge(0.0, 0.0, 1.0, 0.0);
                    let digest = commit_digest(&target, view);
                    let sig = self.env.sign(self.id, &digest);
                    out.broadcast(Msg::Hamster(HamsterMsg::Commit(Commit {
                        view,
                        identifier: target.clone(),
                        committer: self.id,
                        sig: sig.clone(),
                    })));
                    let key = (target.hash(), view);
                    self.commit_tally
                        .entry(key)
                        .or_default()
                        .insert(self.id, sig);
                    if self.commit_tally[&key].len() >= self.cfg.quorum() {
                        self.do_commit(target, view, now, out);
                    }
                } else {
                    self.do_commit(target, view, now, out);
                }
            }
            TimerTag::NewViewWait { view } => {
                if self.view != view || self.new_view_done.contains(&view) {
                    return;
                }
                let best = self.status_best.clone().unwrap_or_else(|| self.lock.clone());
                out.busy += self.cfg.costs.charge(0.0, 1.0, 1.0, 0.0);
                let digest = new_view_digest(view, &best);
                let nv = NewView {
                    view,
                    cert: best,
                    sig: self.env.sign(self.id, &digest),
                };
                out.broadcast(Msg::Hamster(HamsterMsg::NewView(nv.clone())));
                self.leader_seen
                    .entry(view)
                    .or_default()
                    .insert(nv.cert.identifier.height, LeaderMsg::NewView(nv.clone()));
                self.accept_new_view(nv, false, out);
            }
            TimerTag::Silence { view, level } => {
                if self.view != view {
                    return;
                }
                if self.votes_in_view < level as u64
                    && !self.blamed_levels.contains(&(view, level))
                {
                    self.blamed_levels.insert((view, level));
                    out.busy += self.cfg.costs.charge(0.0, 0.0, 1.0, 0.0);
                    let sig = self.env.sign(self.id, &blame_digest(view));
                    let blame = Blame {
                        view,
                        blamer: self.id,
                        sig: sig.clone(),
                    };
                    out.broadcast(Msg::Hamster(HamsterMsg::Blame(blame.clone())));
                    out.note(Note::BlameSent { view, level });
                    self.on_blame(blame, now, out);
                }
                if self.view == view {
                    out.timer(
                        3 * self.delta(),
                        TimerTag::Silence {
                            view,
                            level: level + 1,
                        },
                    );
                }
            }
        }
    }

    fn on_batch(&mut self, height: Height, requests: Vec<Digest>, now: u64, out: &mut Output) {
        let Some((h, cert)) = self.pending_propose.take() else {
            return;
        };
        if h != height || cert.view != self.view || !self.is_leader() {
            return;
        }
        let parent = cert.identifier.clone();
        let predecessor_root = if parent.is_bottom() {
            None
        } else {
            Some(parent.content_root)
        };
        let block = Block::new(height, requests, predecessor_root);
        let pred_ref = if parent.is_bottom() {
            None
        } else {
            Some(&parent)
        };
        let enc = encode_block(block.clone(), self.params, pred_ref).expect("leader encoding");
        let n = self.cfg.n;
        let k = self.cfg.quorum();
        let m = block.wire_len() as f64;
        out.busy += self
            .cfg
            .costs
            .charge((n - k) as f64 * m, 3.0 * n as f64, n as f64, 0.0);
        let id_hash = enc.identifier.hash();
        self.ids.insert(enc.identifier.clone());
        self.blocks.insert(id_hash, block);
        self.chunk_sets.insert(id_hash, enc.chunks.clone());
        let view = self.view;
        let mut own = None;
        for r in 0..n as NodeId {
            let segment = Segment {
                chunk: enc.chunks[r as usize].clone(),
                identifier: enc.identifier.clone(),
            };
            let digest = proposal_digest(view, &segment, &cert);
            let proposal = Proposal {
                view,
                segment,
                cert: cert.clone(),
                sig: self.env.sign(self.id, &digest),
            };
            if r == self.id {
                own = Some(proposal);
            } else {
                out.send(r, Msg::Hamster(HamsterMsg::Proposal(proposal)));
            }
        }
        // Process the self-tailored proposal inline: it forwards the
        // leader's own chunk to everyone and arms the parent's pre-commit.
        if let Some(own) = own {
            self.on_proposal(self.id, own, now, out);
        }
    }
}

impl Actor for HamsterNode {
    fn on_event(&mut self, now: u64, ev: Event) -> Output {
        let mut out = Output::default();
        match ev {
            Event::Init => self.enter_view(1, now, &mut out),
            Event::Deliver { from, msg } => {
                if let Msg::Hamster(m) = msg {
                    self.handle_msg(from, m, now, &mut out);
                }
            }
            Event::Timer { tag } => self.on_timer(tag, now, &mut out),
            Event::Batch { height, requests } => self.on_batch(height, requests, now, &mut out),
        }
        out
    }
}
