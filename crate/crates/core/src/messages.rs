//! Wire messages for both protocols, and the self-certifying evidence
//! packages that justify a view change.
//!
//! Every signed message exposes its signing digest, computed over the
//! canonical encoding with a domain-separating tag byte. Evidence carries
//! the offending signed messages inside it, so any node can verify a
//! misbehavior claim without trusting the reporter.

use crate::codec::CodecParams;
use crate::crypto::{self, CryptoEnv, NodeId, Signature};
use crate::merkle::{Digest, MerkleProof};
use crate::types::{
    self, leader_of, reconstruct_and_check, Block, Certificate, Height, IdentifierBlock, Segment,
    View,
};
use crate::wire::{self, Reader, Wire, WireError};

impl Wire for MerkleProof {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u32(out, self.leaf_index);
        wire::put_u32(out, self.path.len() as u32);
        for d in &self.path {
            wire::put_digest(out, d);
        }
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        let leaf_index = r.u32()?;
        let count = r.count()?;
        let mut path = Vec::with_capacity(count);
        for _ in 0..count {
            path.push(r.digest()?);
        }
        Ok(MerkleProof { leaf_index, path })
    }
}

pub fn proposal_digest(view: View, segment: &Segment, cert: &Certificate) -> Digest {
    let mut buf = vec![0x01u8];
    wire::put_u64(&mut buf, view);
    segment.write(&mut buf);
    cert.write(&mut buf);
    crypto::hash(&buf)
}

pub fn new_view_digest(view: View, cert: &Certificate) -> Digest {
    let mut buf = vec![0x05u8];
    wire::put_u64(&mut buf, view);
    cert.write(&mut buf);
    crypto::hash(&buf)
}

pub fn blame_digest(view: View) -> Digest {
    let mut buf = vec![0x06u8];
    wire::put_u64(&mut buf, view);
    crypto::hash(&buf)
}

pub fn commit_digest(identifier: &IdentifierBlock, view: View) -> Digest {
    let mut buf = vec![0x07u8];
    identifier.write(&mut buf);
    wire::put_u64(&mut buf, view);
    crypto::hash(&buf)
}

/// Leader's coded proposal tailored to one recipient: that recipient's
/// chunk, the identifier it belongs to, and the certificate for the parent.
/// The signature covers the chunk too, so a signed proposal pins exactly
/// which bytes the leader handed out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposal {
    pub view: View,
    pub segment: Segment,
    pub cert: Certificate,
    pub sig: Signature,
}

impl Proposal {
    pub fn identifier(&self) -> &IdentifierBlock {
        &self.segment.identifier
    }

    pub fn signing_digest(&self) -> Digest {
        proposal_digest(self.view, &self.segment, &self.cert)
    }

    pub fn verify_sig(&self, env: &CryptoEnv, n: usize) -> bool {
        env.verify(leader_of(self.view, n), &self.signing_digest(), &self.sig)
    }
}

impl Wire for Proposal {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u64(out, self.view);
        self.segment.write(out);
        self.cert.write(out);
        self.sig.write(out);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        Ok(Proposal {
            view: r.u64()?,
            segment: Segment::read(r)?,
            cert: Certificate::read(r)?,
            sig: Signature::read(r)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vote {
    pub view: View,
    pub identifier: IdentifierBlock,
    pub voter: NodeId,
    pub sig: Signature,
}

impl Vote {
    pub fn signing_digest(&self) -> Digest {
        types::vote_digest(&self.identifier, self.view)
    }

    pub fn verify_sig(&self, env: &CryptoEnv) -> bool {
        env.verify(self.voter, &self.signing_digest(), &self.sig)
    }
}

impl Wire for Vote {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u64(out, self.view);
        self.identifier.write(out);
        wire::put_u32(out, self.voter);
        self.sig.write(out);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        Ok(Vote {
            view: r.u64()?,
            identifier: IdentifierBlock::read(r)?,
            voter: r.u32()?,
            sig: Signature::read(r)?,
        })
    }
}

/// Leader's view-opening message: the highest certificate it knows, for
/// everyone to re-vote under the new view number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewView {
    pub view: View,
    pub cert: Certificate,
    pub sig: Signature,
}

impl NewView {
    pub fn signing_digest(&self) -> Digest {
        new_view_digest(self.view, &self.cert)
    }

    pub fn verify_sig(&self, env: &CryptoEnv, n: usize) -> bool {
        env.verify(leader_of(self.view, n), &self.signing_digest(), &self.sig)
    }
}

impl Wire for NewView {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u64(out, self.view);
        self.cert.write(out);
        self.sig.write(out);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        Ok(NewView {
            view: r.u64()?,
            cert: Certificate::read(r)?,
            sig: Signature::read(r)?,
        })
    }
}

/// Either message kind a leader signs within a view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeaderMsg {
    Proposal(Proposal),
    NewView(NewView),
}

impl LeaderMsg {
    pub fn view(&self) -> View {
        match self {
            LeaderMsg::Proposal(p) => p.view,
            LeaderMsg::NewView(m) => m.view,
        }
    }

    pub fn identifier(&self) -> &IdentifierBlock {
        match self {
            LeaderMsg::Proposal(p) => p.identifier(),
            LeaderMsg::NewView(m) => &m.cert.identifier,
        }
    }

    pub fn verify_sig(&self, env: &CryptoEnv, n: usize) -> bool {
        match self {
            LeaderMsg::Proposal(p) => p.verify_sig(env, n),
            LeaderMsg::NewView(m) => m.verify_sig(env, n),
        }
    }
}

impl Wire for LeaderMsg {
    fn write(&self, out: &mut Vec<u8>) {
        match self {
            LeaderMsg::Proposal(p) => {
                wire::put_u8(out, 1);
                p.write(out);
            }
            LeaderMsg::NewView(m) => {
                wire::put_u8(out, 5);
                m.write(out);
            }
        }
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        match r.u8()? {
            1 => Ok(LeaderMsg::Proposal(Proposal::read(r)?)),
            5 => Ok(LeaderMsg::NewView(NewView::read(r)?)),
            t => Err(WireError::BadTag(t)),
        }
    }
}

/// Two leader-signed messages of one view whose identifiers conflict.
///
/// For identifiers at different heights, `link` lists the higher one's
/// ancestors down to the lower height; its end differing from the lower
/// identifier proves the two do not sit on one chain. Equal heights need
/// no link: distinct identifiers conflict outright.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivocationEvidence {
    pub view: View,
    pub first: LeaderMsg,
    pub second: LeaderMsg,
    pub link: Vec<IdentifierBlock>,
}

impl EquivocationEvidence {
    pub fn verify(&self, env: &CryptoEnv, n: usize) -> bool {
        if self.first.view() != self.view || self.second.view() != self.view {
            return false;
        }
        if !self.first.verify_sig(env, n) || !self.second.verify_sig(env, n) {
            return false;
        }
        let a = self.first.identifier();
        let b = self.second.identifier();
        let (hi, lo) = if a.height >= b.height { (a, b) } else { (b, a) };
        if hi.height == lo.height {
            return hi != lo && self.link.is_empty();
        }
        if self.link.len() as u64 != hi.height - lo.height {
            return false;
        }
        let mut cur = hi.clone();
        for next in &self.link {
            if cur.predecessor != Some(next.hash()) || next.height + 1 != cur.height {
                return false;
            }
            cur = next.clone();
        }
        cur != *lo
    }
}

/// Enough leader-signed chunks of one identifier to prove its coding wrong:
/// the chunks reconstruct a payload whose re-coding misses the claimed root
/// (or they fail to decode at all).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingErrorEvidence {
    pub view: View,
    pub proposals: Vec<Proposal>,
}

impl CodingErrorEvidence {
    pub fn verify(&self, env: &CryptoEnv, params: CodecParams, f: usize) -> bool {
        let Some(first) = self.proposals.first() else {
            return false;
        };
        let identifier = first.identifier().clone();
        let mut chunks = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.proposals {
            if p.view != self.view
                || p.identifier() != &identifier
                || !p.verify_sig(env, params.n)
            {
                return false;
            }
            if seen.insert(p.segment.chunk.index) {
                chunks.push(p.segment.chunk.clone());
            }
        }
        if chunks.len() < f + 1 {
            return false;
        }
        reconstruct_and_check(params, &chunks, &identifier).is_err()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blame {
    pub view: View,
    pub blamer: NodeId,
    pub sig: Signature,
}

impl Blame {
    pub fn verify_sig(&self, env: &CryptoEnv) -> bool {
        env.verify(self.blamer, &blame_digest(self.view), &self.sig)
    }
}

impl Wire for Blame {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u64(out, self.view);
        wire::put_u32(out, self.blamer);
        self.sig.write(out);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        Ok(Blame {
            view: r.u64()?,
            blamer: r.u32()?,
            sig: Signature::read(r)?,
        })
    }
}

/// A quorum of blames against one view's leader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SilenceEvidence {
    pub view: View,
    pub blames: Vec<Blame>,
}

impl SilenceEvidence {
    pub fn verify(&self, env: &CryptoEnv, f: usize) -> bool {
        let mut signers = std::collections::BTreeSet::new();
        for b in &self.blames {
            if b.view != self.view || !b.verify_sig(env) {
                return false;
            }
            signers.insert(b.blamer);
        }
        signers.len() >= f + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Evidence {
    Equivocation(EquivocationEvidence),
    CodingError(CodingErrorEvidence),
    Silence(SilenceEvidence),
}

impl Evidence {
    pub fn view(&self) -> View {
        match self {
            Evidence::Equivocation(e) => e.view,
            Evidence::CodingError(e) => e.view,
            Evidence::Silence(e) => e.view,
        }
    }

    pub fn verify(&self, env: &CryptoEnv, params: CodecParams, f: usize) -> bool {
        match self {
            Evidence::Equivocation(e) => e.verify(env, params.n),
            Evidence::CodingError(e) => e.verify(env, params, f),
            Evidence::Silence(e) => e.verify(env, f),
        }
    }
}

impl Wire for Evidence {
    fn write(&self, out: &mut Vec<u8>) {
        match self {
            Evidence::Equivocation(e) => {
                wire::put_u8(out, 1);
                wire::put_u64(out, e.view);
                e.first.write(out);
                e.second.write(out);
                wire::put_u32(out, e.link.len() as u32);
                for id in &e.link {
                    id.write(out);
                }
            }
            Evidence::CodingError(e) => {
                wire::put_u8(out, 2);
                wire::put_u64(out, e.view);
                wire::put_u32(out, e.proposals.len() as u32);
                for p in &e.proposals {
                    p.write(out);
                }
            }
            Evidence::Silence(e) => {
                wire::put_u8(out, 3);
                wire::put_u64(out, e.view);
                wire::put_u32(out, e.blames.len() as u32);
                for b in &e.blames {
                    b.write(out);
                }
            }
        }
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        match r.u8()? {
            1 => {
                let view = r.u64()?;
                let first = LeaderMsg::read(r)?;
                let second = LeaderMsg::read(r)?;
                let count = r.count()?;
                let mut link = Vec::with_capacity(count);
                for _ in 0..count {
                    link.push(IdentifierBlock::read(r)?);
                }
                Ok(Evidence::Equivocation(EquivocationEvidence {
                    view,
                    first,
                    second,
                    link,
                }))
            }
            2 => {
                let view = r.u64()?;
                let count = r.count()?;
                let mut proposals = Vec::with_capacity(count);
                for _ in 0..count {
                    proposals.push(Proposal::read(r)?);
                }
                Ok(Evidence::CodingError(CodingErrorEvidence {
                    view,
                    proposals,
                }))
            }
            3 => {
                let view = r.u64()?;
                let count = r.count()?;
                let mut blames = Vec::with_capacity(count);
                for _ in 0..count {
                    blames.push(Blame::read(r)?);
                }
                Ok(Evidence::Silence(SilenceEvidence { view, blames }))
            }
            t => Err(WireError::BadTag(t)),
        }
    }
}

/// Verified misbehavior plus the view it abandons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuitView {
    pub view: View,
    pub evidence: Evidence,
}

impl Wire for QuitView {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u64(out, self.view);
        self.evidence.write(out);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        Ok(QuitView {
            view: r.u64()?,
            evidence: Evidence::read(r)?,
        })
    }
}

/// Highest certificate a node holds, reported to the incoming leader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Status {
    pub view: View,
    pub lock: Certificate,
}

impl Wire for Status {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u64(out, self.view);
        self.lock.write(out);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        Ok(Status {
            view: r.u64()?,
            lock: Certificate::read(r)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Commit {
    pub view: View,
    pub identifier: IdentifierBlock,
    pub committer: NodeId,
    pub sig: Signature,
}

impl Commit {
    pub fn verify_sig(&self, env: &CryptoEnv) -> bool {
        env.verify(
            self.committer,
            &commit_digest(&self.identifier, self.view),
            &self.sig,
        )
    }
}

impl Wire for Commit {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u64(out, self.view);
        self.identifier.write(out);
        wire::put_u32(out, self.committer);
        self.sig.write(out);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        Ok(Commit {
            view: r.u64()?,
            identifier: IdentifierBlock::read(r)?,
            committer: r.u32()?,
            sig: Signature::read(r)?,
        })
    }
}

/// Post-commit chunk hand-off: one coded chunk of a committed block plus
/// its inclusion proof against the committed content root. Authenticated by
/// the proof alone, so it carries no signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Follow {
    pub segment: Segment,
    pub proof: MerkleProof,
}

impl Wire for Follow {
    fn write(&self, out: &mut Vec<u8>) {
        self.segment.write(out);
        self.proof.write(out);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        Ok(Follow {
            segment: Segment::read(r)?,
            proof: MerkleProof::read(r)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HamsterMsg {
    Proposal(Proposal),
    Vote(Vote),
    QuitView(QuitView),
    Status(Status),
    NewView(NewView),
    Blame(Blame),
    Commit(Commit),
    Follow(Follow),
}

impl Wire for HamsterMsg {
    fn write(&self, out: &mut Vec<u8>) {
        match self {
            HamsterMsg::Proposal(m) => {
                wire::put_u8(out, 1);
                m.write(out);
            }
            HamsterMsg::Vote(m) => {
                wire::put_u8(out, 2);
                m.write(out);
            }
            HamsterMsg::QuitView(m) => {
                wire::put_u8(out, 3);
                m.write(out);
            }
            HamsterMsg::Status(m) => {
                wire::put_u8(out, 4);
                m.write(out);
            }
            HamsterMsg::NewView(m) => {
                wire::put_u8(out, 5);
                m.write(out);
            }
            HamsterMsg::Blame(m) => {
                wire::put_u8(out, 6);
                m.write(out);
            }
            HamsterMsg::Commit(m) => {
                wire::put_u8(out, 7);
                m.write(out);
            }
            HamsterMsg::Follow(m) => {
                wire::put_u8(out, 8);
                m.write(out);
            }
        }
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        match r.u8()? {
            1 => Ok(HamsterMsg::Proposal(Proposal::read(r)?)),
            2 => Ok(HamsterMsg::Vote(Vote::read(r)?)),
            3 => Ok(HamsterMsg::QuitView(QuitView::read(r)?)),
            4 => Ok(HamsterMsg::Status(Status::read(r)?)),
            5 => Ok(HamsterMsg::NewView(NewView::read(r)?)),
            6 => Ok(HamsterMsg::Blame(Blame::read(r)?)),
            7 => Ok(HamsterMsg::Commit(Commit::read(r)?)),
            8 => Ok(HamsterMsg::Follow(Follow::read(r)?)),
            t => Err(WireError::BadTag(t)),
        }
    }
}

pub fn shs_block_digest(block: &Block) -> Digest {
    crypto::hash(&block.to_bytes())
}

pub fn shs_vote_digest(view: View, height: Height, block_digest: &Digest) -> Digest {
    let mut buf = vec![0x52u8];
    wire::put_u64(&mut buf, view);
    wire::put_u64(&mut buf, height);
    wire::put_digest(&mut buf, block_digest);
    crypto::hash(&buf)
}

pub fn shs_proposal_digest(view: View, block_digest: &Digest, cert: &ShsCert) -> Digest {
    let mut buf = vec![0x51u8];
    wire::put_u64(&mut buf, view);
    wire::put_digest(&mut buf, block_digest);
    cert.write(&mut buf);
    crypto::hash(&buf)
}

/// Baseline certificate over a full-block digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShsCert {
    pub view: View,
    pub height: Height,
    pub block_digest: Digest,
    pub quorum: crate::crypto::QuorumSig,
}

impl ShsCert {
    pub fn genesis() -> Self {
        ShsCert {
            view: 0,
            height: 0,
            block_digest: [0; 32],
            quorum: crate::crypto::QuorumSig::default(),
        }
    }

    pub fn is_genesis(&self) -> bool {
        *self == Self::genesis()
    }

    pub fn verify(&self, env: &CryptoEnv, threshold: usize) -> bool {
        if self.is_genesis() {
            return true;
        }
        let d = shs_vote_digest(self.view, self.height, &self.block_digest);
        self.quorum.verify(env, &d, threshold)
    }
}

impl Wire for ShsCert {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u64(out, self.view);
        wire::put_u64(out, self.height);
        wire::put_digest(out, &self.block_digest);
        self.quorum.write(out);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        Ok(ShsCert {
            view: r.u64()?,
            height: r.u64()?,
            block_digest: r.digest()?,
            quorum: crate::crypto::QuorumSig::read(r)?,
        })
    }
}

/// Baseline proposal: the full block travels to everyone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShsProposal {
    pub view: View,
    pub block: Block,
    pub cert: ShsCert,
    pub sig: Signature,
}

impl ShsProposal {
    pub fn signing_digest(&self) -> Digest {
        shs_proposal_digest(self.view, &shs_block_digest(&self.block), &self.cert)
    }

    pub fn verify_sig(&self, env: &CryptoEnv, n: usize) -> bool {
        env.verify(leader_of(self.view, n), &self.signing_digest(), &self.sig)
    }
}

impl Wire for ShsProposal {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u64(out, self.view);
        self.block.write(out);
        self.cert.write(out);
        self.sig.write(out);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        Ok(ShsProposal {
            view: r.u64()?,
            block: Block::read(r)?,
            cert: ShsCert::read(r)?,
            sig: Signature::read(r)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShsVote {
    pub view: View,
    pub height: Height,
    pub block_digest: Digest,
    pub voter: NodeId,
    pub sig: Signature,
}

impl ShsVote {
    pub fn signing_digest(&self) -> Digest {
        shs_vote_digest(self.view, self.height, &self.block_digest)
    }

    pub fn verify_sig(&self, env: &CryptoEnv) -> bool {
        env.verify(self.voter, &self.signing_digest(), &self.sig)
    }
}

impl Wire for ShsVote {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u64(out, self.view);
        wire::put_u64(out, self.height);
        wire::put_digest(out, &self.block_digest);
        wire::put_u32(out, self.voter);
        self.sig.write(out);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        Ok(ShsVote {
            view: r.u64()?,
            height: r.u64()?,
            block_digest: r.digest()?,
            voter: r.u32()?,
            sig: Signature::read(r)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShsMsg {
    Proposal(ShsProposal),
    Vote(ShsVote),
}

impl Wire for ShsMsg {
    fn write(&self, out: &mut Vec<u8>) {
        match self {
            ShsMsg::Proposal(m) => {
                wire::put_u8(out, 1);
                m.write(out);
            }
            ShsMsg::Vote(m) => {
                wire::put_u8(out, 2);
                m.write(out);
            }
        }
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        match r.u8()? {
            1 => Ok(ShsMsg::Proposal(ShsProposal::read(r)?)),
            2 => Ok(ShsMsg::Vote(ShsVote::read(r)?)),
            t => Err(WireError::BadTag(t)),
        }
    }
}

/// Transport envelope: one type the simulator can carry for either
/// protocol. Byte accounting charges the inner message's encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Msg {
    Hamster(HamsterMsg),
    Shs(ShsMsg),
}

impl Msg {
    pub fn wire_len(&self) -> usize {
        match self {
            Msg::Hamster(m) => m.wire_len(),
            Msg::Shs(m) => m.wire_len(),
        }
    }
}
