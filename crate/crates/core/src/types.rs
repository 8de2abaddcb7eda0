//! Chain data structures: payload blocks, coded identifier blocks, segments,
//! certificates, and the rank and extension relations that order them.
//!
//! A block carries a batch of request digests plus the coded root of its
//! predecessor. Its identifier pairs the Merkle root of the block's n coded
//! chunks with the hash of the predecessor identifier, so identifiers form a
//! hash chain that can be agreed on without any node holding full blocks.
//! A distinguished bottom identifier at height 0 roots every chain, and a
//! distinguished empty certificate on it boots the first view.

use std::collections::BTreeMap;

use crate::codec::{self, Chunk, CodecError, CodecParams};
use crate::crypto::{self, CryptoEnv, NodeId, QuorumSig};
use crate::merkle::{Digest, MerkleRoot, MerkleTree};
use crate::wire::{self, Reader, Wire, WireError};

pub type View = u64;
pub type Height = u64;

/// Round-robin leader rotation over 0-based node ids.
pub fn leader_of(view: View, n: usize) -> NodeId {
    (view % n as u64) as NodeId
}

/// Full payload block: a batch of request digests chained to the coded root
/// of the previous block (absent at height 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: Height,
    pub batch: Vec<Digest>,
    pub predecessor_root: Option<MerkleRoot>,
}

impl Block {
    pub fn new(height: Height, batch: Vec<Digest>, predecessor_root: Option<MerkleRoot>) -> Self {
        debug_assert_eq!(height == 1, predecessor_root.is_none());
        Block {
            height,
            batch,
            predecessor_root,
        }
    }
}

impl Wire for Block {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u64(out, self.height);
        wire::put_u32(out, self.batch.len() as u32);
        for d in &self.batch {
            wire::put_digest(out, d);
        }
        wire::put_opt_digest(out, &self.predecessor_root.as_ref().map(|r| r.0));
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        let height = r.u64()?;
        let count = r.count()?;
        let mut batch = Vec::with_capacity(count);
        for _ in 0..count {
            batch.push(r.digest()?);
        }
        let predecessor_root = wire::read_opt_digest(r)?.map(MerkleRoot);
        Ok(Block {
            height,
            batch,
            predecessor_root,
        })
    }
}

/// Compact stand-in for a block: the Merkle root over its coded chunks plus
/// the hash link to the previous identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IdentifierBlock {
    pub height: Height,
    pub content_root: MerkleRoot,
    pub predecessor: Option<Digest>,
}

impl IdentifierBlock {
    /// Height-0 root of every chain.
    pub fn bottom() -> Self {
        IdentifierBlock {
            height: 0,
            content_root: MerkleRoot([0; 32]),
            predecessor: None,
        }
    }

    pub fn is_bottom(&self) -> bool {
        *self == Self::bottom()
    }

    pub fn hash(&self) -> Digest {
        crypto::hash(&self.to_bytes())
    }
}

impl Wire for IdentifierBlock {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u64(out, self.height);
        wire::put_digest(out, &self.content_root.0);
        wire::put_opt_digest(out, &self.predecessor);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        Ok(IdentifierBlock {
            height: r.u64()?,
            content_root: MerkleRoot(r.digest()?),
            predecessor: wire::read_opt_digest(r)?,
        })
    }
}

/// One coded chunk bound to the identifier it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub chunk: Chunk,
    pub identifier: IdentifierBlock,
}

impl Wire for Segment {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u32(out, self.chunk.index);
        wire::put_bytes(out, &self.chunk.data);
        self.identifier.write(out);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        let index = r.u32()?;
        let data = r.bytes()?;
        Ok(Segment {
            chunk: Chunk { index, data },
            identifier: IdentifierBlock::read(r)?,
        })
    }
}

/// View-major ordering key for certificates and locks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rank {
    pub view: View,
    pub height: Height,
}

/// Quorum of votes on one identifier within one view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub view: View,
    pub identifier: IdentifierBlock,
    pub quorum: QuorumSig,
}

impl Certificate {
    /// The empty certificate on bottom that boots view 1. It is the only
    /// certificate accepted without signatures, and only in this exact form.
    pub fn genesis() -> Self {
        Certificate {
            view: 0,
            identifier: IdentifierBlock::bottom(),
            quorum: QuorumSig::default(),
        }
    }

    pub fn is_genesis(&self) -> bool {
        *self == Self::genesis()
    }

    pub fn rank(&self) -> Rank {
        Rank {
            view: self.view,
            height: self.identifier.height,
        }
    }

    /// Genesis passes as-is; anything else needs a valid quorum at the
    /// threshold over the vote digest for (identifier, view).
    pub fn verify(&self, env: &CryptoEnv, threshold: usize) -> bool {
        if self.is_genesis() {
            return true;
        }
        let digest = vote_digest(&self.identifier, self.view);
        self.quorum.verify(env, &digest, threshold)
    }
}

impl Wire for Certificate {
    fn write(&self, out: &mut Vec<u8>) {
        wire::put_u64(out, self.view);
        self.identifier.write(out);
        self.quorum.write(out);
    }

    fn read(r: &mut Reader) -> Result<Self, WireError> {
        Ok(Certificate {
            view: r.u64()?,
            identifier: IdentifierBlock::read(r)?,
            quorum: QuorumSig::read(r)?,
        })
    }
}

/// Signing preimage digest for a vote on (identifier, view). Certificates
/// collect signatures over this same digest.
pub fn vote_digest(identifier: &IdentifierBlock, view: View) -> Digest {
    let mut buf = vec![0x02u8];
    identifier.write(&mut buf);
    wire::put_u64(&mut buf, view);
    crypto::hash(&buf)
}

/// Identifier lookup by hash, seeded with bottom.
#[derive(Debug, Clone, Default)]
pub struct IdStore {
    map: BTreeMap<Digest, IdentifierBlock>,
}

impl IdStore {
    pub fn new() -> Self {
        let mut s = IdStore {
            map: BTreeMap::new(),
        };
        s.insert(IdentifierBlock::bottom());
        s
    }

    pub fn insert(&mut self, id: IdentifierBlock) {
        self.map.insert(id.hash(), id);
    }

    pub fn get(&self, hash: &Digest) -> Option<&IdentifierBlock> {
        self.map.get(hash)
    }

    pub fn contains(&self, id: &IdentifierBlock) -> bool {
        self.map.contains_key(&id.hash())
    }
}

/// Whether `a` sits on the chain through `b`, walking predecessor links
/// known to `store`. Every identifier extends bottom; an unknown ancestor
/// link means the relation cannot be shown and counts as false.
pub fn extends(a: &IdentifierBlock, b: &IdentifierBlock, store: &IdStore) -> bool {
    if b.is_bottom() {
        return true;
    }
    let mut cur = a.clone();
    while cur.height > b.height {
        match &cur.predecessor {
            Some(h) => match store.get(h) {
                Some(p) => cur = p.clone(),
                None => return false,
            },
            // Height-1 identifiers link implicitly to bottom; anything else
            // without a predecessor is malformed and extends nothing.
            None => return cur.height == 1 && b.is_bottom(),
        }
    }
    cur == *b
}

/// A block together with its coded chunks, their Merkle tree, and the
/// identifier derived from them.
#[derive(Debug, Clone)]
pub struct EncodedBlock {
    pub block: Block,
    pub chunks: Vec<Chunk>,
    pub tree: MerkleTree,
    pub identifier: IdentifierBlock,
}

/// Leader-side tailoring: code the block into n chunks, build the tree,
/// and derive the identifier chained to `predecessor`.
pub fn encode_block(
    block: Block,
    params: CodecParams,
    predecessor: Option<&IdentifierBlock>,
) -> Result<EncodedBlock, CodecError> {
    debug_assert_eq!(
        block.height,
        predecessor.map(|p| p.height + 1).unwrap_or(1)
    );
    let chunks = codec::encode(params, &block.to_bytes());
    let tree = MerkleTree::build(&chunks.iter().map(|c| c.data.as_slice()).collect::<Vec<_>>());
    let identifier = IdentifierBlock {
        height: block.height,
        content_root: tree.root(),
        predecessor: predecessor.map(|p| p.hash()),
    };
    Ok(EncodedBlock {
        block,
        chunks,
        tree,
        identifier,
    })
}

/// Why a set of segments fails the coding check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodingFault {
    DecodeFailed(CodecError),
    RootMismatch,
}

/// Result of a successful decode-and-recode check: the payload, the full
/// chunk set recomputed from it, and its tree (root already matched).
#[derive(Debug, Clone)]
pub struct Reconstructed {
    pub payload: Vec<u8>,
    pub chunks: Vec<Chunk>,
    pub tree: MerkleTree,
}

/// Decode k chunks, re-code the payload, and require the recomputed Merkle
/// root to equal the identifier's content root.
pub fn reconstruct_and_check(
    params: CodecParams,
    chunks: &[Chunk],
    identifier: &IdentifierBlock,
) -> Result<Reconstructed, CodingFault> {
    let payload = codec::decode(params, chunks).map_err(CodingFault::DecodeFailed)?;
    let recoded = codec::encode(params, &payload);
    let tree = MerkleTree::build(&recoded.iter().map(|c| c.data.as_slice()).collect::<Vec<_>>());
    if tree.root() != identifier.content_root {
        return Err(CodingFault::RootMismatch);
    }
    Ok(Reconstructed {
        payload,
        chunks: recoded,
        tree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn root(byte: u8) -> MerkleRoot {
        MerkleRoot([byte; 32])
    }

    fn id_at(height: Height, byte: u8, pred: Option<&IdentifierBlock>) -> IdentifierBlock {
        IdentifierBlock {
            height,
            content_root: root(byte),
            predecessor: pred.map(|p| p.hash()),
        }
    }

    // Layout oracle built field by field: u64 height, u32 count plus raw
    // digests, a one-byte presence flag, then the 32-byte root.
    #[test]
    fn golden_block_encoding() {
        let block = Block::new(2, vec![[0x11; 32], [0x22; 32]], Some(root(0x33)));
        let expected = format!(
            "{}{}{}{}{}{}",
            "0000000000000002",
            "00000002",
            "11".repeat(32),
            "22".repeat(32),
            "01",
            "33".repeat(32)
        );
        assert_eq!(hex::encode(block.to_bytes()), expected);
        assert_eq!(Block::from_bytes(&block.to_bytes()).unwrap(), block);
    }

    #[test]
    fn golden_identifier_encoding() {
        let id = IdentifierBlock {
            height: 1,
            content_root: root(0xaa),
            predecessor: None,
        };
        let expected = format!("{}{}{}", "0000000000000001", "aa".repeat(32), "00");
        assert_eq!(hex::encode(id.to_bytes()), expected);
        let bottom = IdentifierBlock::bottom();
        assert_eq!(
            hex::encode(bottom.to_bytes()),
            format!("{}{}{}", "0000000000000000", "00".repeat(32), "00")
        );
    }

    #[test]
    fn wire_roundtrips() {
        let id = id_at(3, 0x44, Some(&id_at(2, 0x45, None)));
        let seg = Segment {
            chunk: Chunk {
                index: 7,
                data: vec![1, 2, 3],
            },
            identifier: id.clone(),
        };
        assert_eq!(Segment::from_bytes(&seg.to_bytes()).unwrap(), seg);

        let env = CryptoEnv::seeded(3, 4);
        let d = vote_digest(&id, 9);
        let votes: Vec<_> = (0..3u32).map(|i| (i, env.sign(i, &d))).collect();
        let cert = Certificate {
            view: 9,
            identifier: id,
            quorum: crypto::assemble_quorum(&votes, 3).unwrap(),
        };
        assert_eq!(Certificate::from_bytes(&cert.to_bytes()).unwrap(), cert);
        assert!(cert.verify(&env, 3));
        assert!(!cert.verify(&env, 4));
    }

    #[test]
    fn genesis_certificate_is_exact() {
        let env = CryptoEnv::seeded(1, 3);
        let g = Certificate::genesis();
        assert!(g.is_genesis());
        assert!(g.verify(&env, 2));

        let mut wrong_view = g.clone();
        wrong_view.view = 1;
        assert!(!wrong_view.is_genesis());
        assert!(!wrong_view.verify(&env, 2), "empty quorum only at genesis");

        let mut wrong_id = g.clone();
        wrong_id.identifier = id_at(1, 1, None);
        assert!(!wrong_id.verify(&env, 2));
    }

    // Oracle: rank order must agree with tuple comparison on a full grid,
    // and a higher view beats any height from a lower view.
    #[test]
    fn rank_order_matches_tuple_oracle() {
        for v1 in 0..4u64 {
            for h1 in 0..4u64 {
                for v2 in 0..4u64 {
                    for h2 in 0..4u64 {
                        let a = Rank {
                            view: v1,
                            height: h1,
                        };
                        let b = Rank {
                            view: v2,
                            height: h2,
                        };
                        assert_eq!(a.cmp(&b), (v1, h1).cmp(&(v2, h2)));
                    }
                }
            }
        }
        let late = Rank { view: 2, height: 1 };
        let early = Rank { view: 1, height: 9 };
        assert!(late > early);
    }

    #[test]
    fn extends_walks_known_chain() {
        let i1 = id_at(1, 1, None);
        let i2 = id_at(2, 2, Some(&i1));
        let i3 = id_at(3, 3, Some(&i2));
        let i3_fork = id_at(3, 0x33, Some(&i2));
        let i4 = id_at(4, 4, Some(&i3));
        let i5 = id_at(5, 5, Some(&i4));

        let mut store = IdStore::new();
        for id in [&i1, &i2, &i3, &i3_fork, &i4, &i5] {
            store.insert((*id).clone());
        }

        let bottom = IdentifierBlock::bottom();
        for id in [&bottom, &i1, &i3, &i3_fork, &i5] {
            assert!(extends(id, &bottom, &store), "everything extends bottom");
            assert!(extends(id, id, &store), "extension is reflexive");
        }
        assert!(extends(&i5, &i3, &store));
        assert!(extends(&i5, &i1, &store));
        assert!(!extends(&i3, &i5, &store), "not symmetric");
        assert!(extends(&i3_fork, &i2, &store));
        assert!(!extends(&i3_fork, &i3, &store), "fork siblings unrelated");
        assert!(!extends(&i5, &i3_fork, &store));
        assert!(!extends(&i1, &i3_fork, &store));

        let sparse = IdStore::new();
        assert!(!extends(&i5, &i1, &sparse), "unknown ancestry is false");
        assert!(extends(&i5, &bottom, &sparse));
    }

    #[test]
    fn leader_rotation_wraps() {
        assert_eq!(leader_of(0, 5), 0);
        assert_eq!(leader_of(1, 5), 1);
        assert_eq!(leader_of(5, 5), 0);
        assert_eq!(leader_of(12, 5), 2);
    }

    #[test]
    fn encode_block_chains_and_reconstructs() {
        let params = CodecParams::new(5, 3).unwrap();
        let b1 = Block::new(1, vec![[1; 32]], None);
        let e1 = encode_block(b1, params, None).unwrap();
        assert_eq!(e1.identifier.height, 1);
        assert_eq!(e1.identifier.predecessor, None);
        assert_eq!(e1.chunks.len(), 5);
        assert_eq!(e1.tree.root(), e1.identifier.content_root);

        let b2 = Block::new(2, vec![[2; 32], [3; 32]], Some(e1.identifier.content_root));
        let e2 = encode_block(b2.clone(), params, Some(&e1.identifier)).unwrap();
        assert_eq!(e2.identifier.predecessor, Some(e1.identifier.hash()));

        // Any k chunks reconstruct the payload and pass the root check.
        let picked = vec![
            e2.chunks[4].clone(),
            e2.chunks[1].clone(),
            e2.chunks[3].clone(),
        ];
        let rec = reconstruct_and_check(params, &picked, &e2.identifier).unwrap();
        assert_eq!(Block::from_bytes(&rec.payload).unwrap(), b2);
        assert_eq!(rec.chunks, e2.chunks);

        // A corrupted chunk either fails the root check or the decode.
        let mut bad = picked.clone();
        bad[0].data[0] ^= 1;
        assert!(matches!(
            reconstruct_and_check(params, &bad, &e2.identifier),
            Err(CodingFault::RootMismatch) | Err(CodingFault::DecodeFailed(_))
        ));

        // The right chunks against the wrong identifier also mismatch.
        assert_eq!(
            reconstruct_and_check(params, &picked, &e1.identifier).unwrap_err(),
            CodingFault::RootMismatch
        );
    }

    #[test]
    fn identifier_hash_binds_every_field() {
        let base = id_at(2, 7, Some(&id_at(1, 6, None)));
        let mut h_changed = base.clone();
        h_changed.height = 3;
        let mut r_changed = base.clone();
        r_changed.content_root = root(8);
        let mut p_changed = base.clone();
        p_changed.predecessor = None;
        let hashes = [
            base.hash(),
            h_changed.hash(),
            r_changed.hash(),
            p_changed.hash(),
        ];
        for i in 0..hashes.len() {
            for j in i + 1..hashes.len() {
                assert_ne!(hashes[i], hashes[j]);
            }
        }
    }
}
