//! End-to-end scenario execution.
//!
//! A scenario wires a cluster of protocol actors into the network
//! simulator, feeds them client requests from a bounded pool, audits
//! every report the nodes emit against the safety and liveness
//! invariants, and distills the run into throughput, latency, and
//! traffic figures that can be compared against the analytical model.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{build_hamster_actor, build_shs_actor, AdversarySpec};
use crate::crypto::{self, CryptoEnv, NodeId};
use crate::merkle::{Digest, MerkleRoot};
use crate::perf::{self, Breakdown, ModelParams, Regime};
use crate::protocol::{ComputeCosts, ProtocolConfig};
use crate::sim::{
    ns_to_secs, secs_to_ns, Actor, Event, NetParams, Note, SimCore, SluggishSchedule,
};
use crate::types::{Block, Height, Rank, View};
use crate::wire::Wire as _;

pub const CONFIG_VERSION: u32 = 1;

/// Which consensus engine a run exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Hamster,
    SyncBaseline,
}

impl Protocol {
    pub fn label(&self) -> &'static str {
        match self {
            Protocol::Hamster => "hamster",
            Protocol::SyncBaseline => "sync_baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryAssignment {
    pub node: NodeId,
    pub spec: AdversarySpec,
}

/// One interval during which a node's outbound messages stay buffered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SluggishWindow {
    pub node: NodeId,
    pub start_s: f64,
    pub end_s: f64,
}

/// Complete, reproducible description of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub version: u32,
    pub name: String,
    pub protocol: Protocol,
    pub n: usize,
    pub f: usize,
    /// Commit by message quorum instead of a local timeout.
    pub sluggish_mode: bool,
    /// Re-disperse committed blocks so every node ends up storing one.
    pub follow_enabled: bool,
    /// Synchrony bound used by the protocol timers, in seconds.
    pub delta_s: f64,
    /// Upper bound on simulated propagation delay; must not exceed delta_s.
    pub prop_delay_max_s: f64,
    pub bandwidth_bytes_per_sec: f64,
    pub t_field_op_s: f64,
    pub t_hash_s: f64,
    pub t_sig_s: f64,
    pub t_verify_s: f64,
    /// Client-side costs, used only by the analytical latency figure.
    pub t_req_s: f64,
    pub t_res_s: f64,
    pub batch_size: usize,
    /// Outstanding client requests kept in flight.
    pub pool_size: usize,
    pub duration_s: f64,
    pub seed: u64,
    pub record_trace: bool,
    pub adversaries: Vec<AdversaryAssignment>,
    pub sluggish_windows: Vec<SluggishWindow>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            version: CONFIG_VERSION,
            name: "unnamed".to_string(),
            protocol: Protocol::Hamster,
            n: 5,
            f: 2,
            sluggish_mode: false,
            follow_enabled: true,
            delta_s: 0.05,
            prop_delay_max_s: 0.03,
            bandwidth_bytes_per_sec: 25e6,
            t_field_op_s: 1e-9,
            t_hash_s: 1e-6,
            t_sig_s: 2e-5,
            t_verify_s: 4e-5,
            t_req_s: 5e-5,
            t_res_s: 5e-5,
            batch_size: 8,
            pool_size: 64,
            duration_s: 3.0,
            seed: 7,
            record_trace: false,
            adversaries: Vec::new(),
            sluggish_windows: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.version != CONFIG_VERSION {
            return Err(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if self.n < 3 || self.n > 255 {
            return Err(format!("n = {} out of range [3, 255]", self.n));
        }
        if self.f == 0 || self.n < 2 * self.f + 1 {
            return Err(format!("need n >= 2f+1 with f >= 1, got n={} f={}", self.n, self.f));
        }
        if self.batch_size == 0 || self.pool_size < self.batch_size {
            return Err("need pool_size >= batch_size >= 1".to_string());
        }
        if !(self.duration_s > 0.0) || !(self.bandwidth_bytes_per_sec > 0.0) {
            return Err("duration and bandwidth must be positive".to_string());
        }
        if !(self.prop_delay_max_s > 0.0) || self.prop_delay_max_s > self.delta_s {
            return Err("need 0 < prop_delay_max_s <= delta_s".to_string());
        }
        let mut seen = BTreeSet::new();
        for a in &self.adversaries {
            if a.node as usize >= self.n {
                return Err(format!("adversary node {} out of range", a.node));
            }
            if !seen.insert(a.node) {
                return Err(format!("node {} assigned twice", a.node));
            }
        }
        let corrupt: BTreeSet<NodeId> = self
            .adversaries
            .iter()
            .filter(|a| !is_honest(a.spec))
            .map(|a| a.node)
            .collect();
        if corrupt.len() > self.f {
            return Err(format!(
                "{} corrupt nodes exceed the tolerated f = {}",
                corrupt.len(),
                self.f
            ));
        }
        let sluggish: BTreeSet<NodeId> = self.sluggish_windows.iter().map(|w| w.node).collect();
        for w in &self.sluggish_windows {
            if w.node as usize >= self.n {
                return Err(format!("sluggish node {} out of range", w.node));
            }
            if !(w.end_s > w.start_s) || w.start_s < 0.0 {
                return Err("sluggish windows need 0 <= start < end".to_string());
            }
        }
        if self.sluggish_mode {
            if self.protocol != Protocol::Hamster {
                return Err("quorum-commit mode applies to the coded protocol only".to_string());
            }
            if sluggish.intersection(&corrupt).next().is_some() {
                return Err("a node cannot be both corrupt and sluggish".to_string());
            }
            // The combined fault budget must stay within the tolerated f,
            // which keeps n >= 2(byzantine + sluggish) + 1.
            if corrupt.len() + sluggish.len() > self.f {
                return Err(format!(
                    "corrupt ({}) + sluggish ({}) nodes exceed f = {}",
                    corrupt.len(),
                    sluggish.len(),
                    self.f
                ));
            }
        }
        if self.protocol == Protocol::SyncBaseline {
            if self.sluggish_mode {
                return Err("the baseline has no quorum-commit mode".to_string());
            }
            for a in &self.adversaries {
                if !matches!(a.spec, AdversarySpec::Honest | AdversarySpec::CrashNode { .. }) {
                    return Err("baseline runs support honest and crash nodes only".to_string());
                }
            }
        }
        Ok(())
    }

    pub fn quorum(&self) -> usize {
        self.f + 1
    }

    /// Wire size of a block holding a full batch of request digests.
    pub fn block_bytes(&self) -> usize {
        let root = if self.protocol == Protocol::Hamster {
            Some(MerkleRoot([0; 32]))
        } else {
            // The baseline links blocks by a digest of the predecessor.
            Some(MerkleRoot([0; 32]))
        };
        Block::new(2, vec![[0; 32]; self.batch_size], root).wire_len()
    }

    /// Analytical-model parameters matching this run. Propagation in the
    /// simulator is uniform on [max/2, max], so the model sees its mean.
    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            n: self.n,
            k: self.quorum(),
            m_bytes: self.block_bytes() as f64,
            bandwidth_bytes_per_sec: self.bandwidth_bytes_per_sec,
            delta_p_s: 0.75 * self.prop_delay_max_s,
            t_field_op_s: self.t_field_op_s,
            t_hash_s: self.t_hash_s,
            t_sig_s: self.t_sig_s,
            t_verify_s: self.t_verify_s,
        }
    }
}

fn is_honest(spec: AdversarySpec) -> bool {
    matches!(spec, AdversarySpec::Honest | AdversarySpec::HonestMirror)
}

/// Everything measured over one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub protocol: Protocol,
    pub n: usize,
    pub f: usize,
    pub batch_size: usize,
    pub bandwidth_bytes_per_sec: f64,
    pub delta_s: f64,
    pub duration_s: f64,
    /// Safety-invariant breaches observed among honest nodes. Empty on
    /// every correct run, whatever the adversary does.
    pub violations: Vec<String>,
    pub completed_requests: u64,
    pub throughput_kops: f64,
    pub mean_latency_s: f64,
    /// Bytes sent across the network, each counted once at the sender.
    pub bytes_total: u64,
    /// Per-node pipe usage: bytes sent plus bytes received.
    pub per_node_bytes: Vec<u64>,
    pub bytes_max_node: u64,
    pub bytes_mean_node: f64,
    /// Highest height committed by a quorum of honest nodes.
    pub max_height_quorum: Height,
    /// Mean gap between consecutive quorum commits, past warmup.
    pub mean_round_s: Option<f64>,
    pub trace_hash: Option<String>,
    pub delta_violations: u64,
    pub honest_blames: u64,
    pub evidence_events: u64,
    pub max_view: View,
    /// Worst lateness of the p-th vote in a view against its
    /// (3p+4)*delta checkpoint; negative means every vote was early.
    pub vote_margin_s: Option<f64>,
    /// Worst lateness of new-view acceptance against entry + 4*delta.
    pub new_view_margin_s: Option<f64>,
    /// Quorum-committed identifiers an honest node never redeemed a
    /// block for, despite enough remaining run time.
    pub unredeemed_commits: u64,
    /// Views an honest node sat in well before the trace ended without
    /// receiving the new leader's opening message.
    pub missed_new_views: u64,
    pub block_bytes: usize,
}

pub fn csv_header() -> &'static str {
    "scenario,n,f,protocol,batch_size,bandwidth_bps,delta_s,throughput_kops,mean_latency_s,bytes_total,bytes_max_node"
}

impl RunReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.name,
            self.n,
            self.f,
            self.protocol.label(),
            self.batch_size,
            self.bandwidth_bytes_per_sec * 8.0,
            self.delta_s,
            self.throughput_kops,
            self.mean_latency_s,
            self.bytes_total,
            self.bytes_max_node,
        )
    }

    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Bounded client: keeps `pool_size` requests outstanding, hands a batch
/// to whichever node asks for one, and counts a request complete when a
/// quorum of honest nodes reports its batch committed.
struct ClientPool {
    batch_size: usize,
    quorum: usize,
    follow_based: bool,
    honest: Vec<bool>,
    available: VecDeque<Digest>,
    entry: BTreeMap<Digest, u64>,
    issued_view: BTreeMap<Digest, View>,
    node_view: Vec<View>,
    view_seen: BTreeMap<View, BTreeSet<NodeId>>,
    counter: u64,
    completed: u64,
    latency_sum_ns: u128,
    id_nodes: BTreeMap<Digest, BTreeSet<NodeId>>,
    id_batch: BTreeMap<Digest, Vec<Digest>>,
    id_done: BTreeSet<Digest>,
}

impl ClientPool {
    fn new(cfg: &ScenarioConfig, honest: Vec<bool>) -> Self {
        let mut pool = ClientPool {
            batch_size: cfg.batch_size,
            quorum: cfg.quorum(),
            follow_based: cfg.follow_enabled && cfg.protocol == Protocol::Hamster,
            honest,
            available: VecDeque::new(),
            entry: BTreeMap::new(),
            issued_view: BTreeMap::new(),
            node_view: vec![1; cfg.n],
            view_seen: BTreeMap::new(),
            counter: 0,
            completed: 0,
            latency_sum_ns: 0,
            id_nodes: BTreeMap::new(),
            id_batch: BTreeMap::new(),
            id_done: BTreeSet::new(),
        };
        for _ in 0..cfg.pool_size {
            pool.fresh_request(0);
        }
        pool
    }

    fn fresh_request(&mut self, now: u64) {
        let mut bytes = b"request-".to_vec();
        bytes.extend_from_slice(&self.counter.to_be_bytes());
        self.counter += 1;
        let d = crypto::hash(&bytes);
        self.entry.insert(d, now);
        self.available.push_back(d);
    }

    fn on_note(&mut self, sim: &mut SimCore, now: u64, node: NodeId, note: &Note) {
        if !self.honest[node as usize] {
            return;
        }
        match note {
            Note::ViewEntered { view } => {
                let nv = &mut self.node_view[node as usize];
                *nv = (*nv).max(*view);
                let set = self.view_seen.entry(*view).or_default();
                set.insert(node);
                if set.len() == self.quorum {
                    self.repool_older(*view);
                }
            }
            Note::BatchNeeded { height } => {
                let view = self.node_view[node as usize];
                let mut batch = Vec::new();
                while batch.len() < self.batch_size {
                    let Some(d) = self.available.pop_front() else {
                        break;
                    };
                    // Skip requests that completed while waiting to be
                    // re-issued after a view change.
                    if !self.entry.contains_key(&d) || self.issued_view.contains_key(&d) {
                        continue;
                    }
                    self.issued_view.insert(d, view);
                    batch.push(d);
                }
                sim.push_event(
                    now,
                    node,
                    Event::Batch {
                        height: *height,
                        requests: batch,
                    },
                );
            }
            Note::Committed {
                identifier, block, ..
            } if !self.follow_based => {
                self.record(now, node, identifier.hash(), block.as_ref());
            }
            Note::Committed {
                identifier, block, ..
            } => {
                // Follow-based runs count completion on redeemed blocks,
                // but a block seen at commit time still teaches us the
                // batch contents early.
                if let (Some(b), false) = (block, self.id_batch.contains_key(&identifier.hash())) {
                    self.id_batch.insert(identifier.hash(), b.batch.clone());
                }
            }
            Note::FollowCommitted { identifier, block } if self.follow_based => {
                self.record(now, node, identifier.hash(), Some(block));
            }
            _ => {}
        }
    }

    fn record(&mut self, now: u64, node: NodeId, id_hash: Digest, block: Option<&Block>) {
        if self.id_done.contains(&id_hash) {
            return;
        }
        if let Some(b) = block {
            self.id_batch.entry(id_hash).or_insert_with(|| b.batch.clone());
        }
        let nodes = self.id_nodes.entry(id_hash).or_default();
        nodes.insert(node);
        if nodes.len() < self.quorum || !self.id_batch.contains_key(&id_hash) {
            return;
        }
        self.id_done.insert(id_hash);
        let batch = self.id_batch.remove(&id_hash).unwrap_or_default();
        self.id_nodes.remove(&id_hash);
        for d in batch {
            let Some(t0) = self.entry.remove(&d) else {
                continue;
            };
            self.issued_view.remove(&d);
            self.latency_sum_ns += (now - t0) as u128;
            self.completed += 1;
            self.fresh_request(now);
        }
    }

    /// A quorum reached `view`: requests stuck in older views go back to
    /// the front of the pool, keeping their original entry times.
    fn repool_older(&mut self, view: View) {
        let stale: Vec<Digest> = self
            .issued_view
            .iter()
            .filter(|&(_, v)| *v < view)
            .map(|(d, _)| *d)
            .collect();
        for d in stale {
            self.issued_view.remove(&d);
            if self.entry.contains_key(&d) {
                self.available.push_front(d);
            }
        }
    }

    fn mean_latency_s(&self) -> f64 {
        if self.completed == 0 {
            return 0.0;
        }
        ns_to_secs((self.latency_sum_ns / self.completed as u128) as u64)
    }
}

/// Audits the notes of honest nodes for safety breaches and collects the
/// timing/liveness statistics a report needs. Faulty nodes' reports are
/// ignored: the guarantees quantify over honest nodes only.
struct Observer {
    quorum: usize,
    delta_ns: u64,
    follow_on: bool,
    honest: Vec<bool>,
    violations: Vec<String>,
    entered: Vec<BTreeMap<View, u64>>,
    votes_in_view: Vec<BTreeMap<View, u64>>,
    vote_keys: Vec<BTreeSet<(View, Height)>>,
    locks: Vec<Option<Rank>>,
    chains: Vec<BTreeMap<Height, Digest>>,
    commit_times: Vec<BTreeMap<Digest, u64>>,
    follow_done: Vec<BTreeSet<Digest>>,
    nv_views: Vec<BTreeSet<View>>,
    first_commit: BTreeMap<Digest, u64>,
    commit_blocks: BTreeMap<Digest, Digest>,
    height_ids: BTreeMap<Height, BTreeMap<Digest, BTreeSet<NodeId>>>,
    certs: BTreeMap<(View, Height), Digest>,
    quorum_commit_time: BTreeMap<Height, u64>,
    vote_margin_ns: Option<i128>,
    nv_margin_ns: Option<i128>,
    blames: u64,
    evidence: u64,
    max_view: View,
}

impl Observer {
    fn new(cfg: &ScenarioConfig, honest: Vec<bool>) -> Self {
        let n = cfg.n;
        Observer {
            quorum: cfg.quorum(),
            delta_ns: secs_to_ns(cfg.delta_s),
            follow_on: cfg.follow_enabled && cfg.protocol == Protocol::Hamster,
            honest,
            violations: Vec::new(),
            entered: vec![BTreeMap::new(); n],
            votes_in_view: vec![BTreeMap::new(); n],
            vote_keys: vec![BTreeSet::new(); n],
            locks: vec![None; n],
            chains: vec![BTreeMap::new(); n],
            commit_times: vec![BTreeMap::new(); n],
            follow_done: vec![BTreeSet::new(); n],
            nv_views: vec![BTreeSet::new(); n],
            first_commit: BTreeMap::new(),
            commit_blocks: BTreeMap::new(),
            height_ids: BTreeMap::new(),
            certs: BTreeMap::new(),
            quorum_commit_time: BTreeMap::new(),
            vote_margin_ns: None,
            nv_margin_ns: None,
            blames: 0,
            evidence: 0,
            max_view: 0,
        }
    }

    fn violation(&mut self, msg: String) {
        if self.violations.len() < 64 {
            self.violations.push(msg);
        }
    }

    fn check_block(&mut self, node: NodeId, id_hash: Digest, block: &Block) {
        let bh = crypto::hash(&block.to_bytes());
        match self.commit_blocks.get(&id_hash) {
            Some(prev) if *prev != bh => self.violation(format!(
                "node {node} committed a different block body for an identifier already \
                 resolved elsewhere (height {})",
                block.height
            )),
            Some(_) => {}
            None => {
                self.commit_blocks.insert(id_hash, bh);
            }
        }
    }

    fn on_note(&mut self, t: u64, node: NodeId, note: &Note) {
        if !self.honest[node as usize] {
            return;
        }
        let i = node as usize;
        match note {
            Note::ViewEntered { view } => {
                self.entered[i].entry(*view).or_insert(t);
                self.max_view = self.max_view.max(*view);
            }
            Note::VoteCast { view, identifier } => {
                if !self.vote_keys[i].insert((*view, identifier.height)) {
                    self.violation(format!(
                        "node {node} voted twice at view {view} height {}",
                        identifier.height
                    ));
                }
                let count = self.votes_in_view[i].entry(*view).or_insert(0);
                *count += 1;
                if let Some(&entry) = self.entered[i].get(view) {
                    let deadline = entry as i128 + (3 * *count as i128 + 4) * self.delta_ns as i128;
                    let margin = t as i128 - deadline;
                    self.vote_margin_ns = Some(self.vote_margin_ns.map_or(margin, |m| m.max(margin)));
                }
            }
            Note::NewViewAccepted { view } => {
                self.nv_views[i].insert(*view);
                if let Some(&entry) = self.entered[i].get(view) {
                    let deadline = entry as i128 + 4 * self.delta_ns as i128;
                    let margin = t as i128 - deadline;
                    self.nv_margin_ns = Some(self.nv_margin_ns.map_or(margin, |m| m.max(margin)));
                }
            }
            Note::LockRaised { rank } => {
                if let Some(prev) = self.locks[i] {
                    if *rank <= prev {
                        self.violation(format!("node {node} lowered its lock"));
                    }
                }
                self.locks[i] = Some(*rank);
            }
            Note::CertFormed { cert } => {
                let key = (cert.view, cert.identifier.height);
                let idh = cert.identifier.hash();
                match self.certs.get(&key) {
                    Some(prev) if *prev != idh => self.violation(format!(
                        "conflicting certificates at view {} height {}",
                        cert.view, cert.identifier.height
                    )),
                    Some(_) => {}
                    None => {
                        self.certs.insert(key, idh);
                    }
                }
            }
            Note::Committed {
                identifier, block, ..
            } => {
                let h = identifier.height;
                let idh = identifier.hash();
                if let Some(prev) = self.chains[i].get(&h) {
                    if *prev != idh {
                        self.violation(format!("node {node} committed twice at height {h}"));
                    }
                } else {
                    self.chains[i].insert(h, idh);
                }
                if let Some(prev) = self.chains[i].get(&(h.wrapping_sub(1))) {
                    if h >= 2 && identifier.predecessor != Some(*prev) {
                        self.violation(format!(
                            "node {node} committed height {h} not extending its height {}",
                            h - 1
                        ));
                    }
                }
                if let Some(b) = block {
                    self.check_block(node, idh, b);
                }
                self.commit_times[i].entry(idh).or_insert(t);
                self.first_commit.entry(idh).or_insert(t);
                let ids = self.height_ids.entry(h).or_default();
                ids.entry(idh).or_default().insert(node);
                let conflicting = ids.len() > 1;
                let at_quorum = ids.get(&idh).map(|s| s.len()) == Some(self.quorum);
                if conflicting {
                    self.violation(format!("conflicting commits at height {h}"));
                }
                if at_quorum {
                    self.quorum_commit_time.entry(h).or_insert(t);
                }
            }
            Note::FollowCommitted { identifier, block } => {
                let idh = identifier.hash();
                if !self.commit_times[i].contains_key(&idh) {
                    self.violation(format!(
                        "node {node} redeemed a block it never committed (height {})",
                        identifier.height
                    ));
                }
                self.check_block(node, idh, block);
                self.follow_done[i].insert(idh);
            }
            Note::EvidenceDetected { .. } => self.evidence += 1,
            Note::BlameSent { .. } => self.blames += 1,
            Note::BatchNeeded { .. } => {}
        }
    }

    /// Commits old enough that every honest node must hold the block:
    /// counts (node, block) pairs where the first commit anywhere is
    /// older than the grace window yet the node never redeemed it.
    fn unredeemed(&self, end_ns: u64, grace_ns: u64) -> u64 {
        if !self.follow_on {
            return 0;
        }
        let mut count = 0;
        for (idh, &t) in &self.first_commit {
            if t.saturating_add(grace_ns) > end_ns {
                continue;
            }
            for i in 0..self.honest.len() {
                if self.honest[i] && !self.follow_done[i].contains(idh) {
                    count += 1;
                }
            }
        }
        count
    }

    /// Views an honest node entered long before the trace ended without
    /// ever accepting the new leader's opening message.
    fn missed_new_views(&self, end_ns: u64) -> u64 {
        let mut count = 0;
        let slack = 5 * self.delta_ns;
        for i in 0..self.honest.len() {
            if !self.honest[i] {
                continue;
            }
            for (&v, &entry) in &self.entered[i] {
                if v >= 2
                    && entry.saturating_add(slack) <= end_ns
                    && !self.nv_views[i].contains(&v)
                {
                    count += 1;
                }
            }
        }
        count
    }

    fn max_height_quorum(&self) -> Height {
        self.quorum_commit_time.keys().next_back().copied().unwrap_or(0)
    }

    /// Mean gap between consecutive quorum commits, skipping warmup.
    fn mean_round_s(&self) -> Option<f64> {
        let mut gaps = Vec::new();
        let times: Vec<(Height, u64)> = self
            .quorum_commit_time
            .iter()
            .map(|(&h, &t)| (h, t))
            .collect();
        for w in times.windows(2) {
            let ((h0, t0), (h1, t1)) = (w[0], w[1]);
            if h0 >= 3 && h1 == h0 + 1 {
                gaps.push((t1 - t0) as f64);
            }
        }
        if gaps.len() < 3 {
            return None;
        }
        Some(ns_to_secs(1) * gaps.iter().sum::<f64>() / gaps.len() as f64)
    }
}

fn hex(d: &Digest) -> String {
    let mut s = String::with_capacity(64);
    for b in d {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport, String> {
    cfg.validate()?;
    let n = cfg.n;
    let env = CryptoEnv::seeded(cfg.seed, n);
    let costs = ComputeCosts {
        field_op_ns: cfg.t_field_op_s * 1e9,
        hash_ns: cfg.t_hash_s * 1e9,
        sig_ns: cfg.t_sig_s * 1e9,
        verify_ns: cfg.t_verify_s * 1e9,
    };
    let pcfg = ProtocolConfig {
        n,
        f: cfg.f,
        delta_ns: secs_to_ns(cfg.delta_s),
        sluggish_mode: cfg.sluggish_mode,
        follow_enabled: cfg.follow_enabled && cfg.protocol == Protocol::Hamster,
        costs,
    };
    let specs: Vec<AdversarySpec> = (0..n)
        .map(|i| {
            cfg.adversaries
                .iter()
                .find(|a| a.node == i as NodeId)
                .map(|a| a.spec)
                .unwrap_or(AdversarySpec::Honest)
        })
        .collect();
    let mut actors: Vec<Box<dyn Actor>> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| match cfg.protocol {
            Protocol::Hamster => build_hamster_actor(*s, i as NodeId, pcfg, env.clone()),
            Protocol::SyncBaseline => build_shs_actor(*s, i as NodeId, pcfg, env.clone()),
        })
        .collect();
    let schedules: Vec<SluggishSchedule> = (0..n)
        .map(|i| {
            SluggishSchedule::new(
                cfg.sluggish_windows
                    .iter()
                    .filter(|w| w.node == i as NodeId)
                    .map(|w| (secs_to_ns(w.start_s), secs_to_ns(w.end_s)))
                    .collect(),
            )
        })
        .collect();
    let net = NetParams {
        n,
        bandwidth_bytes_per_sec: cfg.bandwidth_bytes_per_sec,
        prop_max_ns: secs_to_ns(cfg.prop_delay_max_s),
        prop_min_frac: 0.5,
        delta_ns: secs_to_ns(cfg.delta_s),
    };
    let mut sim = SimCore::new(net, schedules, cfg.seed);
    sim.schedule_init();

    let honest: Vec<bool> = specs.iter().map(|s| is_honest(*s)).collect();
    let mut pool = ClientPool::new(cfg, honest.clone());
    let mut obs = Observer::new(cfg, honest);
    let end_ns = secs_to_ns(cfg.duration_s);

    while let Some(t) = sim.peek_time() {
        if t > end_ns {
            break;
        }
        let Some(report) = sim.step(&mut actors) else {
            break;
        };
        for note in &report.notes {
            obs.on_note(report.time, report.node, note);
            pool.on_note(&mut sim, report.time, report.node, note);
        }
    }

    let bytes_total: u64 = sim.bytes_tx().iter().sum();
    let per_node_bytes: Vec<u64> = sim
        .bytes_tx()
        .iter()
        .zip(sim.bytes_rx())
        .map(|(tx, rx)| tx + rx)
        .collect();
    let bytes_max_node = per_node_bytes.iter().copied().max().unwrap_or(0);
    let bytes_mean_node =
        per_node_bytes.iter().sum::<u64>() as f64 / per_node_bytes.len().max(1) as f64;

    // How long a committed identifier may reasonably stay unredeemed:
    // dispersal and decode round trips, plus any sluggish buffering.
    let tx_block_ns = secs_to_ns(
        4.0 * cfg.block_bytes() as f64 * n as f64
            / (cfg.quorum() as f64 * cfg.bandwidth_bytes_per_sec),
    );
    let max_window_ns = cfg
        .sluggish_windows
        .iter()
        .map(|w| secs_to_ns(w.end_s - w.start_s))
        .max()
        .unwrap_or(0);
    // Sixteen beats covers a view change plus the catch-up commit that
    // drags stragglers forward; transmission and buffering add the rest.
    let grace_ns = 16 * secs_to_ns(cfg.delta_s) + tx_block_ns + max_window_ns;

    Ok(RunReport {
        name: cfg.name.clone(),
        protocol: cfg.protocol,
        n,
        f: cfg.f,
        batch_size: cfg.batch_size,
        bandwidth_bytes_per_sec: cfg.bandwidth_bytes_per_sec,
        delta_s: cfg.delta_s,
        duration_s: cfg.duration_s,
        violations: obs.violations.clone(),
        completed_requests: pool.completed,
        throughput_kops: pool.completed as f64 / cfg.duration_s / 1e3,
        mean_latency_s: pool.mean_latency_s(),
        bytes_total,
        bytes_max_node,
        bytes_mean_node,
        per_node_bytes,
        max_height_quorum: obs.max_height_quorum(),
        mean_round_s: obs.mean_round_s(),
        trace_hash: cfg.record_trace.then(|| hex(&sim.trace_hash())),
        delta_violations: sim.delta_violations(),
        honest_blames: obs.blames,
        evidence_events: obs.evidence,
        max_view: obs.max_view,
        vote_margin_s: obs.vote_margin_ns.map(|m| m as f64 / 1e9),
        new_view_margin_s: obs.nv_margin_ns.map(|m| m as f64 / 1e9),
        unredeemed_commits: obs.unredeemed(end_ns, grace_ns),
        missed_new_views: obs.missed_new_views(end_ns),
        block_bytes: cfg.block_bytes(),
    })
}

/// Side-by-side of a simulated run and the closed-form model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelComparison {
    pub model_round_s: f64,
    pub sim_round_s: Option<f64>,
    /// sim / model; 1.0 means the model nailed it.
    pub ratio: Option<f64>,
    pub regime: Regime,
    pub breakdown: Breakdown,
    pub report: RunReport,
}

pub fn compare_model(cfg: &ScenarioConfig) -> Result<ModelComparison, String> {
    let report = run_scenario(cfg)?;
    let p = cfg.model_params();
    let (model_round_s, breakdown) = match cfg.protocol {
        Protocol::Hamster => (perf::round_time(&p), perf::breakdown(&p)),
        Protocol::SyncBaseline => (perf::sync_round_time(&p), perf::sync_breakdown(&p)),
    };
    let sim_round_s = report.mean_round_s;
    Ok(ModelComparison {
        model_round_s,
        sim_round_s,
        ratio: sim_round_s.map(|s| s / model_round_s),
        regime: breakdown.dominant(),
        breakdown,
        report,
    })
}

fn fuzz_rng(n: usize, seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ n as u64)
}

fn any_spec(rng: &mut ChaCha12Rng, duration_s: f64) -> AdversarySpec {
    match rng.random_range(0..5) {
        0 => AdversarySpec::EquivocatingLeader,
        1 => AdversarySpec::MiscodingLeader,
        2 => AdversarySpec::SilentLeader,
        3 => AdversarySpec::VoteWithholder,
        _ => AdversarySpec::CrashNode {
            at_ns: rng.random_range(0..secs_to_ns(duration_s)),
        },
    }
}

/// A randomized adversarial run: exactly f corrupt nodes, each with a
/// strategy drawn from the full palette. The first-view leader is
/// usually among them so detection and view changes get exercised.
pub fn adversarial_config(n: usize, seed: u64) -> ScenarioConfig {
    assert!(n >= 3 && n % 2 == 1);
    let f = (n - 1) / 2;
    let mut rng = fuzz_rng(n, seed);
    let duration_s = 3.0;
    let mut adversaries = Vec::new();
    let mut remaining: Vec<NodeId> = (0..n as NodeId).collect();
    if rng.random_range(0..4) > 0 {
        adversaries.push(AdversaryAssignment {
            node: 1,
            spec: any_spec(&mut rng, duration_s),
        });
        remaining.retain(|&x| x != 1);
    }
    while adversaries.len() < f {
        let pick = rng.random_range(0..remaining.len());
        let node = remaining.swap_remove(pick);
        adversaries.push(AdversaryAssignment {
            node,
            spec: any_spec(&mut rng, duration_s),
        });
    }
    ScenarioConfig {
        name: format!("fuzz-n{n}-s{seed}"),
        protocol: Protocol::Hamster,
        n,
        f,
        sluggish_mode: false,
        follow_enabled: true,
        delta_s: 0.04,
        prop_delay_max_s: 0.03,
        bandwidth_bytes_per_sec: 25e6,
        batch_size: 4,
        pool_size: 48,
        duration_s,
        seed,
        adversaries,
        ..ScenarioConfig::default()
    }
}

/// A randomized run mixing byzantine nodes with sluggish honest nodes,
/// sized so that n >= 2(byzantine + sluggish) + 1.
pub fn sluggish_config(n: usize, seed: u64) -> ScenarioConfig {
    assert!(n >= 5 && n % 2 == 1);
    let f = (n - 1) / 2;
    let s = f / 2;
    let f_byz = f - s;
    let mut rng = fuzz_rng(n, seed ^ 0x5175_6f72_756d);
    let duration_s = 4.0;
    let mut adversaries = Vec::new();
    let mut remaining: Vec<NodeId> = (0..n as NodeId).collect();
    if f_byz > 0 {
        adversaries.push(AdversaryAssignment {
            node: 1,
            spec: any_spec(&mut rng, duration_s),
        });
        remaining.retain(|&x| x != 1);
        while adversaries.len() < f_byz {
            let pick = rng.random_range(0..remaining.len());
            let node = remaining.swap_remove(pick);
            adversaries.push(AdversaryAssignment {
                node,
                spec: any_spec(&mut rng, duration_s),
            });
        }
    }
    let mut sluggish_windows = Vec::new();
    for _ in 0..s {
        let pick = rng.random_range(0..remaining.len());
        let node = remaining.swap_remove(pick);
        let start_s = rng.random_range(0.4..2.4);
        let len_s = rng.random_range(0.3..1.0);
        sluggish_windows.push(SluggishWindow {
            node,
            start_s,
            end_s: start_s + len_s,
        });
    }
    ScenarioConfig {
        name: format!("sluggish-n{n}-s{seed}"),
        protocol: Protocol::Hamster,
        n,
        f,
        sluggish_mode: true,
        follow_enabled: true,
        delta_s: 0.04,
        prop_delay_max_s: 0.03,
        bandwidth_bytes_per_sec: 25e6,
        batch_size: 4,
        pool_size: 48,
        duration_s,
        seed,
        adversaries,
        sluggish_windows,
        ..ScenarioConfig::default()
    }
}
