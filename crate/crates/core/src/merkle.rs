//! Merkle tree over indexed chunks.
//!
//! Leaf i hashes the 4-byte big-endian index followed by the chunk bytes,
//! binding each chunk to its position. Odd-width levels duplicate their last
//! node. The root doubles as the block identifier digest: committing to the
//! root commits to the exact chunk sequence of one encoding.

use sha2::{Digest as _, Sha256};

pub type Digest = [u8; 32];

/// Root digest of a chunk tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MerkleRoot(pub Digest);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleProof {
    pub leaf_index: u32,
    pub path: Vec<Digest>,
}

#[derive(Debug, Clone)]
pub struct MerkleTree {
    leaf_count: usize,
    levels: Vec<Vec<Digest>>,
}

pub fn hash_bytes(data: &[u8]) -> Digest {
    Sha256::digest(data).into()
}

fn leaf_hash(index: u32, data: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(index.to_be_bytes());
    h.update(data);
    h.finalize().into()
}

fn node_hash(left: &Digest, right: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update(left);
    h.update(right);
    h.finalize().into()
}

impl MerkleTree {
    /// Build over chunks in index order (leaf i covers chunks[i] with index i).
    pub fn build<T: AsRef<[u8]>>(chunks: &[T]) -> MerkleTree {
        assert!(!chunks.is_empty(), "cannot build a tree over zero chunks");
        let mut levels = Vec::new();
        let leaves: Vec<Digest> = chunks
            .iter()
            .enumerate()
            .map(|(i, c)| leaf_hash(i as u32, c.as_ref()))
            .collect();
        levels.push(leaves);
        while levels.last().unwrap().len() > 1 {
            let prev = levels.last().unwrap();
            let next: Vec<Digest> = prev
                .chunks(2)
                .map(|pair| {
                    let right = pair.get(1).unwrap_or(&pair[0]);
                    node_hash(&pair[0], right)
                })
                .collect();
            levels.push(next);
        }
        MerkleTree { leaf_count: chunks.len(), levels }
    }

    pub fn root(&self) -> MerkleRoot {
        MerkleRoot(self.levels.last().unwrap()[0])
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// Sibling path for the given leaf. Levels where the node is its own
    /// sibling (duplicated last node) still contribute a path entry, so the
    /// path length is always the tree height.
    pub fn proof(&self, leaf_index: u32) -> MerkleProof {
        assert!((leaf_index as usize) < self.leaf_count, "leaf index out of range");
        let mut path = Vec::new();
        let mut idx = leaf_index as usize;
        for level in &self.levels[..self.levels.len() - 1] {
            let sib = if idx % 2 == 0 {
                (idx + 1).min(level.len() - 1)
            } else {
                idx - 1
            };
            path.push(level[sib]);
            idx /= 2;
        }
        MerkleProof { leaf_index, path }
    }
}

/// Check a chunk against a root. `leaf_count` fixes the tree shape, so a
/// proof cannot smuggle a different structure past the verifier.
pub fn verify(root: &MerkleRoot, leaf_count: usize, data: &[u8], proof: &MerkleProof) -> bool {
    if leaf_count == 0 || (proof.leaf_index as usize) >= leaf_count {
        return false;
    }
    let mut width = leaf_count;
    let mut idx = proof.leaf_index as usize;
    let mut acc = leaf_hash(proof.leaf_index, data);
    let mut depth = 0usize;
    while width > 1 {
        let Some(sib) = proof.path.get(depth) else {
            return false;
        };
        if idx % 2 == 0 {
            // when the node is the duplicated last one, the sibling must be itself
            if idx + 1 >= width && *sib != acc {
                return false;
            }
            acc = node_hash(&acc, sib);
        } else {
            acc = node_hash(sib, &acc);
        }
        idx /= 2;
        width = width.div_ceil(2);
        depth += 1;
    }
    depth == proof.path.len() && acc == root.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sha(parts: &[&[u8]]) -> Digest {
        let mut h = Sha256::new();
        for p in parts {
            h.update(p);
        }
        h.finalize().into()
    }

    #[test]
    fn two_leaf_root_is_hash_of_prefixed_leaves() {
        let tree = MerkleTree::build(&[b"a".as_slice(), b"b".as_slice()]);
        let l0 = sha(&[&0u32.to_be_bytes(), b"a"]);
        let l1 = sha(&[&1u32.to_be_bytes(), b"b"]);
        assert_eq!(tree.root().0, sha(&[&l0, &l1]));
    }

    // Hand-layered two-level computation, written against the raw hash
    // primitive rather than the tree builder.
    #[test]
    fn four_leaf_root_matches_hand_layering() {
        let chunks: [&[u8]; 4] = [b"spring", b"summer", b"autumn", b"winter"];
        let l: Vec<Digest> = chunks
            .iter()
            .enumerate()
            .map(|(i, c)| sha(&[&(i as u32).to_be_bytes(), c]))
            .collect();
        let n01 = sha(&[&l[0], &l[1]]);
        let n23 = sha(&[&l[2], &l[3]]);
        let hand_root = sha(&[&n01, &n23]);

        let tree = MerkleTree::build(&chunks);
        assert_eq!(tree.root().0, hand_root);

        for i in 0..4u32 {
            let proof = tree.proof(i);
            assert!(verify(&tree.root(), 4, chunks[i as usize], &proof), "leaf {i}");
        }
    }

    #[test]
    fn single_leaf_tree() {
        let tree = MerkleTree::build(&[b"only".as_slice()]);
        assert_eq!(tree.root().0, sha(&[&0u32.to_be_bytes(), b"only"]));
        let proof = tree.proof(0);
        assert!(proof.path.is_empty());
        assert!(verify(&tree.root(), 1, b"only", &proof));
        assert!(!verify(&tree.root(), 1, b"fake", &proof));
    }

    #[test]
    fn odd_width_duplicates_last_node() {
        let chunks: [&[u8]; 3] = [b"x", b"y", b"z"];
        let l: Vec<Digest> = chunks
            .iter()
            .enumerate()
            .map(|(i, c)| sha(&[&(i as u32).to_be_bytes(), c]))
            .collect();
        let n01 = sha(&[&l[0], &l[1]]);
        let n22 = sha(&[&l[2], &l[2]]);
        let hand_root = sha(&[&n01, &n22]);
        let tree = MerkleTree::build(&chunks);
        assert_eq!(tree.root().0, hand_root);
        for i in 0..3u32 {
            assert!(verify(&tree.root(), 3, chunks[i as usize], &tree.proof(i)));
        }
    }

    #[test]
    fn proof_bound_to_index() {
        let chunks: [&[u8]; 4] = [b"c0", b"c1", b"c2", b"c3"];
        let tree = MerkleTree::build(&chunks);
        let mut proof = tree.proof(2);
        proof.leaf_index = 1;
        assert!(!verify(&tree.root(), 4, chunks[2], &proof));
        assert!(!verify(&tree.root(), 4, chunks[1], &proof));
    }

    #[test]
    fn wrong_leaf_count_rejected() {
        let chunks: [&[u8]; 4] = [b"c0", b"c1", b"c2", b"c3"];
        let tree = MerkleTree::build(&chunks);
        let proof = tree.proof(0);
        assert!(!verify(&tree.root(), 5, chunks[0], &proof));
        assert!(!verify(&tree.root(), 2, chunks[0], &proof));
        assert!(!verify(&tree.root(), 0, chunks[0], &proof));
    }

    #[test]
    fn truncated_and_extended_paths_rejected() {
        let chunks: [&[u8]; 5] = [b"c0", b"c1", b"c2", b"c3", b"c4"];
        let tree = MerkleTree::build(&chunks);
        let good = tree.proof(3);
        let mut short = good.clone();
        short.path.pop();
        assert!(!verify(&tree.root(), 5, chunks[3], &short));
        let mut long = good.clone();
        long.path.push([0u8; 32]);
        assert!(!verify(&tree.root(), 5, chunks[3], &long));
        assert!(verify(&tree.root(), 5, chunks[3], &good));
    }

    #[test]
    fn every_single_bit_mutation_rejected_small() {
        let chunks: [&[u8]; 3] = [b"alpha", b"beta!", b"gamma"];
        let tree = MerkleTree::build(&chunks);
        let root = tree.root();
        for i in 0..3u32 {
            let proof = tree.proof(i);
            let data = chunks[i as usize];
            // flip each data bit
            for byte in 0..data.len() {
                for bit in 0..8 {
                    let mut mutated = data.to_vec();
                    mutated[byte] ^= 1 << bit;
                    assert!(!verify(&root, 3, &mutated, &proof));
                }
            }
            // flip each proof path bit
            for e in 0..proof.path.len() {
                for byte in 0..32 {
                    for bit in 0..8 {
                        let mut p = proof.clone();
                        p.path[e][byte] ^= 1 << bit;
                        assert!(!verify(&root, 3, data, &p));
                    }
                }
            }
            // flip each index bit (stay in range or not, both must fail)
            for bit in 0..32 {
                let mut p = proof.clone();
                p.leaf_index ^= 1 << bit;
                assert!(!verify(&root, 3, data, &p));
            }
        }
    }
}
