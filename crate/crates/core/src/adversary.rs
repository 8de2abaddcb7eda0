//! Faulty-node strategies for adversarial runs.
//!
//! Each strategy wraps the honest engine and distorts only its outbound
//! traffic, so a corrupt node always speaks in well-signed messages under
//! its own identity; it never forges anyone else's signature.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::baseline::ShsNode;
use crate::codec::CodecParams;
use crate::crypto::{CryptoEnv, NodeId};
use crate::merkle::MerkleTree;
use crate::messages::{proposal_digest, HamsterMsg, Msg, Proposal, ShsMsg};
use crate::protocol::{HamsterNode, ProtocolConfig};
use crate::sim::{Actor, Dest, Event, Output};
use crate::types::{encode_block, Block, Certificate, Height, IdentifierBlock, Segment, View};

/// How a node misbehaves. At most f nodes per run should be non-honest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversarySpec {
    /// The plain engine.
    Honest,
    /// A wrapper that changes nothing; checks the harness itself.
    HonestMirror,
    /// As leader, sends one block to low node ids and a different one to
    /// high node ids, both correctly signed.
    EquivocatingLeader,
    /// As leader, corrupts every parity chunk and roots the identifier
    /// over the corrupted set, so no chunk subset survives the root check.
    MiscodingLeader,
    /// Never sends anything to the f lowest-id peers.
    SilentLeader,
    /// Goes permanently dark at a fixed time.
    CrashNode { at_ns: u64 },
    /// Participates fully but never casts votes.
    VoteWithholder,
}

pub fn build_hamster_actor(
    spec: AdversarySpec,
    id: NodeId,
    cfg: ProtocolConfig,
    env: CryptoEnv,
) -> Box<dyn Actor> {
    let inner = HamsterNode::new(id, cfg, env.clone());
    match spec {
        AdversarySpec::Honest => Box::new(inner),
        AdversarySpec::HonestMirror => Box::new(Mirror { inner }),
        AdversarySpec::EquivocatingLeader => Box::new(Equivocator {
            inner,
            id,
            cfg,
            env,
        }),
        AdversarySpec::MiscodingLeader => Box::new(Miscoder {
            inner,
            id,
            cfg,
            env,
        }),
        AdversarySpec::SilentLeader => Box::new(Snubber::new(inner, id, cfg)),
        AdversarySpec::CrashNode { at_ns } => Box::new(Crasher { inner, at_ns }),
        AdversarySpec::VoteWithholder => Box::new(Withholder { inner }),
    }
}

pub fn build_shs_actor(
    spec: AdversarySpec,
    id: NodeId,
    cfg: ProtocolConfig,
    env: CryptoEnv,
) -> Box<dyn Actor> {
    let inner = ShsNode::new(id, cfg, env);
    match spec {
        AdversarySpec::Honest => Box::new(inner),
        AdversarySpec::CrashNode { at_ns } => Box::new(Crasher { inner, at_ns }),
        other => panic!("baseline runs support honest and crash nodes only, got {other:?}"),
    }
}

struct Mirror {
    inner: HamsterNode,
}

impl Actor for Mirror {
    fn on_event(&mut self, now: u64, ev: Event) -> Output {
        self.inner.on_event(now, ev)
    }
}

struct Crasher<A: Actor> {
    inner: A,
    at_ns: u64,
}

impl<A: Actor> Actor for Crasher<A> {
    fn on_event(&mut self, now: u64, ev: Event) -> Output {
        if now >= self.at_ns {
            return Output::default();
        }
        self.inner.on_event(now, ev)
    }
}

struct Withholder {
    inner: HamsterNode,
}

impl Actor for Withholder {
    fn on_event(&mut self, now: u64, ev: Event) -> Output {
        let mut out = self.inner.on_event(now, ev);
        out.sends.retain(|(_, m)| {
            !matches!(
                m,
                Msg::Hamster(HamsterMsg::Vote(_)) | Msg::Shs(ShsMsg::Vote(_))
            )
        });
        out
    }
}

struct Snubber {
    inner: HamsterNode,
    id: NodeId,
    n: usize,
    victims: BTreeSet<NodeId>,
}

impl Snubber {
    fn new(inner: HamsterNode, id: NodeId, cfg: ProtocolConfig) -> Self {
        let victims = (0..cfg.n as NodeId)
            .filter(|r| *r != id)
            .take(cfg.f)
            .collect();
        Snubber {
            inner,
            id,
            n: cfg.n,
            victims,
        }
    }
}

impl Actor for Snubber {
    fn on_event(&mut self, now: u64, ev: Event) -> Output {
        let mut out = self.inner.on_event(now, ev);
        let mut sends = Vec::new();
        for (dest, msg) in out.sends.drain(..) {
            match dest {
                Dest::To(r) => {
                    if !self.victims.contains(&r) {
                        sends.push((Dest::To(r), msg));
                    }
                }
                Dest::Broadcast => {
                    for r in 0..self.n as NodeId {
                        if r != self.id && !self.victims.contains(&r) {
                            sends.push((Dest::To(r), msg.clone()));
                        }
                    }
                }
            }
        }
        out.sends = sends;
        out
    }
}

/// The (view, cert, parent) frame shared by all tailored proposals of one
/// batch, lifted from whichever proposal the honest engine emitted first.
fn proposal_frame(out: &Output) -> Option<(View, Certificate, IdentifierBlock)> {
    out.sends.iter().find_map(|(_, m)| match m {
        Msg::Hamster(HamsterMsg::Proposal(p)) => {
            Some((p.view, p.cert.clone(), p.cert.identifier.clone()))
        }
        _ => None,
    })
}

fn tailored_proposal(
    env: &CryptoEnv,
    signer: NodeId,
    view: View,
    cert: &Certificate,
    chunks: &[crate::codec::Chunk],
    identifier: &IdentifierBlock,
    index: NodeId,
) -> Proposal {
    let segment = Segment {
        chunk: chunks[index as usize].clone(),
        identifier: identifier.clone(),
    };
    let digest = proposal_digest(view, &segment, cert);
    Proposal {
        view,
        segment,
        cert: cert.clone(),
        sig: env.sign(signer, &digest),
    }
}

struct Equivocator {
    inner: HamsterNode,
    id: NodeId,
    cfg: ProtocolConfig,
    env: CryptoEnv,
}

impl Actor for Equivocator {
    fn on_event(&mut self, now: u64, ev: Event) -> Output {
        let Event::Batch { height, requests } = ev else {
            return self.inner.on_event(now, ev);
        };
        let mut out = self.inner.on_event(
            now,
            Event::Batch {
                height,
                requests: requests.clone(),
            },
        );
        let Some((view, cert, parent)) = proposal_frame(&out) else {
            return out;
        };
        let mut alt = requests.clone();
        alt.reverse();
        if alt == requests {
            alt.push([0xee; 32]);
        }
        let (_, enc2) = encode_conflicting(height, alt, &parent, self.cfg);
        let split = (self.cfg.n / 2) as NodeId;
        for (dest, msg) in out.sends.iter_mut() {
            let Msg::Hamster(HamsterMsg::Proposal(_)) = msg else {
                continue;
            };
            if let Dest::To(r) = *dest {
                if r >= split {
                    *msg = Msg::Hamster(HamsterMsg::Proposal(tailored_proposal(
                        &self.env,
                        self.id,
                        view,
                        &cert,
                        &enc2.chunks,
                        &enc2.identifier,
                        r,
                    )));
                }
            }
        }
        out
    }
}

struct Miscoder {
    inner: HamsterNode,
    id: NodeId,
    cfg: ProtocolConfig,
    env: CryptoEnv,
}

impl Actor for Miscoder {
    fn on_event(&mut self, now: u64, ev: Event) -> Output {
        let Event::Batch { height, requests } = ev else {
            return self.inner.on_event(now, ev);
        };
        let mut out = self.inner.on_event(
            now,
            Event::Batch {
                height,
                requests: requests.clone(),
            },
        );
        let Some((view, cert, parent)) = proposal_frame(&out) else {
            return out;
        };
        let (_, enc) = encode_conflicting(height, requests, &parent, self.cfg);
        let mut chunks = enc.chunks;
        let k = self.cfg.quorum();
        for c in chunks.iter_mut().skip(k) {
            c.data[0] ^= 0xff;
        }
        let tree =
            MerkleTree::build(&chunks.iter().map(|c| c.data.as_slice()).collect::<Vec<_>>());
        let bad_id = IdentifierBlock {
            height,
            content_root: tree.root(),
            predecessor: enc.identifier.predecessor,
        };
        for (dest, msg) in out.sends.iter_mut() {
            let Msg::Hamster(HamsterMsg::Proposal(_)) = msg else {
                continue;
            };
            let index = match *dest {
                Dest::To(r) => r,
                Dest::Broadcast => self.id,
            };
            *msg = Msg::Hamster(HamsterMsg::Proposal(tailored_proposal(
                &self.env, self.id, view, &cert, &chunks, &bad_id, index,
            )));
        }
        out
    }
}

/// Build and encode a block on the honest parent frame.
fn encode_conflicting(
    height: Height,
    batch: Vec<crate::merkle::Digest>,
    parent: &IdentifierBlock,
    cfg: ProtocolConfig,
) -> (Block, crate::types::EncodedBlock) {
    let predecessor_root = if parent.is_bottom() {
        None
    } else {
        Some(parent.content_root)
    };
    let block = Block::new(height, batch, predecessor_root);
    let params = CodecParams::new(cfg.n, cfg.quorum()).expect("valid codec shape");
    let pred_ref = if parent.is_bottom() {
        None
    } else {
        Some(parent)
    };
    let enc = encode_block(block.clone(), params, pred_ref).expect("encoding");
    (block, enc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ComputeCosts;
    use crate::types::reconstruct_and_check;

    const DELTA: u64 = 1_000_000;

    fn cfg(n: usize, f: usize) -> ProtocolConfig {
        ProtocolConfig {
            n,
            f,
            delta_ns: DELTA,
            sluggish_mode: false,
            follow_enabled: false,
            costs: ComputeCosts::zero(),
        }
    }

    /// Drive a wrapped leader of a 3-node group to its first batch and
    /// return what it emits for height 1.
    fn first_batch(actor: &mut dyn Actor, env: &CryptoEnv) -> Output {
        actor.on_event(0, Event::Init);
        let mut honest: Vec<HamsterNode> = [0u32, 2]
            .iter()
            .map(|&id| HamsterNode::new(id, cfg(3, 1), env.clone()))
            .collect();
        let mut votes = Vec::new();
        for node in honest.iter_mut() {
            node.on_event(0, Event::Init);
        }
        let out = actor.on_event(
            2 * DELTA,
            Event::Timer {
                tag: crate::sim::TimerTag::NewViewWait { view: 1 },
            },
        );
        let nv = out
            .sends
            .iter()
            .find_map(|(_, m)| match m {
                Msg::Hamster(HamsterMsg::NewView(nv)) => Some(nv.clone()),
                _ => None,
            })
            .expect("view opens");
        for node in honest.iter_mut() {
            let out = node.on_event(
                3 * DELTA,
                Event::Deliver {
                    from: 1,
                    msg: Msg::Hamster(HamsterMsg::NewView(nv.clone())),
                },
            );
            for (_, m) in out.sends {
                if let Msg::Hamster(HamsterMsg::Vote(v)) = m {
                    votes.push(v);
                }
            }
        }
        for v in votes {
            actor.on_event(
                4 * DELTA,
                Event::Deliver {
                    from: v.voter,
                    msg: Msg::Hamster(HamsterMsg::Vote(v)),
                },
            );
        }
        actor.on_event(
            4 * DELTA,
            Event::Batch {
                height: 1,
                requests: vec![[0xa1; 32], [0xa2; 32]],
            },
        )
    }

    #[test]
    fn mirror_is_transparent() {
        let env = CryptoEnv::seeded(5, 3);
        let mut plain = HamsterNode::new(1, cfg(3, 1), env.clone());
        let mut mirror = build_hamster_actor(AdversarySpec::HonestMirror, 1, cfg(3, 1), env);
        for ev in [
            Event::Init,
            Event::Timer {
                tag: crate::sim::TimerTag::NewViewWait { view: 1 },
            },
        ] {
            let a = plain.on_event(0, ev.clone());
            let b = mirror.on_event(0, ev);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn equivocator_splits_the_audience_and_is_caught() {
        let env = CryptoEnv::seeded(5, 3);
        let mut actor = build_hamster_actor(AdversarySpec::EquivocatingLeader, 1, cfg(3, 1), env.clone());
        let out = first_batch(actor.as_mut(), &env);
        let mut low = None;
        let mut high = None;
        let mut own = None;
        for (dest, msg) in &out.sends {
            if let Msg::Hamster(HamsterMsg::Proposal(p)) = msg {
                match dest {
                    Dest::To(0) => low = Some(p.clone()),
                    Dest::To(2) => high = Some(p.clone()),
                    Dest::Broadcast => own = Some(p.clone()),
                    _ => {}
                }
            }
        }
        let (low, high, own) = (low.unwrap(), high.unwrap(), own.unwrap());
        assert_ne!(low.identifier(), high.identifier(), "two stories");
        assert_eq!(own.identifier(), low.identifier(), "own chunk tells story A");
        assert!(low.verify_sig(&env, 3) && high.verify_sig(&env, 3));

        // The high-side node sees story B, then story A, and quits.
        let mut node2 = HamsterNode::new(2, cfg(3, 1), env.clone());
        node2.on_event(0, Event::Init);
        node2.on_event(
            5 * DELTA,
            Event::Deliver {
                from: 1,
                msg: Msg::Hamster(HamsterMsg::Proposal(high)),
            },
        );
        let out = node2.on_event(
            5 * DELTA,
            Event::Deliver {
                from: 1,
                msg: Msg::Hamster(HamsterMsg::Proposal(own)),
            },
        );
        let quit = out
            .sends
            .iter()
            .find_map(|(_, m)| match m {
                Msg::Hamster(HamsterMsg::QuitView(q)) => Some(q.clone()),
                _ => None,
            })
            .expect("conflict detected");
        assert!(quit
            .evidence
            .verify(&env, CodecParams::new(3, 2).unwrap(), 1));
        assert_eq!(node2.view(), 2);
    }

    #[test]
    fn miscoder_defeats_every_decode_subset() {
        let env = CryptoEnv::seeded(5, 3);
        let mut actor = build_hamster_actor(AdversarySpec::MiscodingLeader, 1, cfg(3, 1), env.clone());
        let out = first_batch(actor.as_mut(), &env);
        let proposals: Vec<Proposal> = out
            .sends
            .iter()
            .filter_map(|(_, m)| match m {
                Msg::Hamster(HamsterMsg::Proposal(p)) => Some(p.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(proposals.len(), 3);
        let id = proposals[0].identifier().clone();
        assert!(proposals.iter().all(|p| *p.identifier() == id));
        assert!(proposals.iter().all(|p| p.verify_sig(&env, 3)));
        let params = CodecParams::new(3, 2).unwrap();
        for a in 0..3 {
            for b in (a + 1)..3 {
                let chunks = vec![
                    proposals[a].segment.chunk.clone(),
                    proposals[b].segment.chunk.clone(),
                ];
                assert!(
                    reconstruct_and_check(params, &chunks, &id).is_err(),
                    "subset ({a},{b}) must fail the root check"
                );
            }
        }
    }

    #[test]
    fn snubber_never_addresses_victims() {
        let env = CryptoEnv::seeded(8, 5);
        // Node 0's victims are the two lowest other ids, 1 and 2.
        let mut actor = build_hamster_actor(AdversarySpec::SilentLeader, 0, cfg(5, 2), env);
        let out = actor.on_event(0, Event::Init);
        assert!(
            out.sends.is_empty(),
            "the status message to leader 1 is swallowed"
        );
        // A blame would normally broadcast; it comes out as two targeted
        // sends to the non-victims.
        let out = actor.on_event(
            7 * DELTA,
            Event::Timer {
                tag: crate::sim::TimerTag::Silence { view: 1, level: 1 },
            },
        );
        let dests: Vec<Dest> = out.sends.iter().map(|(d, _)| *d).collect();
        assert_eq!(dests, vec![Dest::To(3), Dest::To(4)]);
    }

    #[test]
    fn crash_node_goes_dark_on_schedule() {
        let env = CryptoEnv::seeded(5, 3);
        let mut actor = build_hamster_actor(
            AdversarySpec::CrashNode { at_ns: 10 * DELTA },
            0,
            cfg(3, 1),
            env,
        );
        let out = actor.on_event(0, Event::Init);
        assert!(!out.sends.is_empty(), "alive before the crash");
        let out = actor.on_event(
            10 * DELTA,
            Event::Timer {
                tag: crate::sim::TimerTag::Silence { view: 1, level: 1 },
            },
        );
        assert_eq!(out, Output::default());
    }

    #[test]
    fn withholder_swallows_only_votes() {
        let env = CryptoEnv::seeded(5, 3);
        let mut actor = build_hamster_actor(AdversarySpec::VoteWithholder, 0, cfg(3, 1), env.clone());
        actor.on_event(0, Event::Init);
        // A new-view from the leader normally produces a forward plus a
        // vote; the withholder keeps the forward and drops the vote.
        let lock = Certificate::genesis();
        let nv = crate::messages::NewView {
            view: 1,
            cert: lock.clone(),
            sig: env.sign(1, &crate::messages::new_view_digest(1, &lock)),
        };
        let out = actor.on_event(
            3 * DELTA,
            Event::Deliver {
                from: 1,
                msg: Msg::Hamster(HamsterMsg::NewView(nv)),
            },
        );
        assert!(out
            .sends
            .iter()
            .any(|(_, m)| matches!(m, Msg::Hamster(HamsterMsg::NewView(_)))));
        assert!(!out
            .sends
            .iter()
            .any(|(_, m)| matches!(m, Msg::Hamster(HamsterMsg::Vote(_)))));
        // The vote was still cast internally (it counts toward silence
        // bookkeeping), only its transmission is suppressed.
        assert!(out
            .notes
            .iter()
            .any(|n| matches!(n, crate::sim::Note::VoteCast { .. })));
    }
}
