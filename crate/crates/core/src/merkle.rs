//! Perfect Merkle trees over SHA-256, their proofs, and the swapped tree in
//! which every node trades places with its sibling. In the swapped tree the
//! root-to-leaf path of leaf `j` holds exactly the Merkle proof of `j`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;

/// Magic bytes of the binary tree file.
pub const TREE_MAGIC: &[u8; 4] = b"MTRE";

/// Marker byte prefixed to the ordinal of a padding leaf.
pub const PADDING_MARKER: u8 = 0xFF;

/// Largest tree height that can be built in memory.
pub const MAX_TREE_HEIGHT: u32 = 26;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn xor_assign(&mut self, other: &Digest) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a ^= b;
        }
    }
}

impl std::ops::BitXor for Digest {
    type Output = Digest;

    fn bitxor(mut self, rhs: Digest) -> Digest {
        self.xor_assign(&rhs);
        self
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = MerkleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s.trim().trim_start_matches("0x"))
            .map_err(|e| MerkleError::Hex(e.to_string()))?;
        let arr: [u8; DIGEST_LEN] = bytes
            .try_into()
            .map_err(|_| MerkleError::Hex("digest must be 32 bytes".into()))?;
        Ok(Digest(arr))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MerkleError {
    #[error("cannot build a tree from zero items")]
    Empty,
    #[error("{0} items need a tree taller than {MAX_TREE_HEIGHT}")]
    TooMany(usize),
    #[error("leaf position {j} outside 1..={n}")]
    LeafOutOfRange { j: u64, n: u64 },
    #[error("proof has {got} digests, tree height is {want}")]
    ProofLength { got: usize, want: usize },
    #[error("bad hex: {0}")]
    Hex(String),
    #[error("malformed tree file: {0}")]
    Format(String),
}

/// SHA-256 once (default) or twice per hash, as Bitcoin does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashMode {
    #[default]
    Single,
    Double,
}

impl HashMode {
    pub fn hash(self, data: &[u8]) -> Digest {
        let once: [u8; 32] = Sha256::digest(data).into();
        match self {
            HashMode::Single => Digest(once),
            HashMode::Double => Digest(Sha256::digest(once).into()),
        }
    }

    pub fn combine(self, left: &Digest, right: &Digest) -> Digest {
        let mut buf = [0u8; 2 * DIGEST_LEN];
        buf[..DIGEST_LEN].copy_from_slice(&left.0);
        buf[DIGEST_LEN..].copy_from_slice(&right.0);
        self.hash(&buf)
    }

    /// Digest of the padding leaf at 1-based position `ordinal`.
    pub fn padding_leaf(self, ordinal: u64) -> Digest {
        let mut buf = [0u8; 9];
        buf[0] = PADDING_MARKER;
        buf[1..].copy_from_slice(&ordinal.to_be_bytes());
        self.hash(&buf)
    }
}

/// Heap index of leaf position `j` (1-based) in a tree of height `h`.
pub fn leaf_node(h: u32, j: u64) -> u64 {
    (1u64 << h) + j - 1
}

/// A perfect Merkle tree stored as a heap array (index 0 unused).
#[derive(Clone, PartialEq, Eq)]
pub struct MerkleTree {
    height: u32,
    nodes: Vec<Digest>,
    mode: HashMode,
}

impl fmt::Debug for MerkleTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MerkleTree")
            .field("height", &self.height)
            .field("root", &self.root())
            .finish()
    }
}

impl MerkleTree {
    pub fn build<T: AsRef<[u8]> + Sync>(items: &[T]) -> Result<Self, MerkleError> {
        Self::build_with(items, HashMode::Single)
    }

    /// Pads `items` with dummy leaves up to the next power of two (at least
    /// two leaves) and hashes bottom-up.
    pub fn build_with<T: AsRef<[u8]> + Sync>(
        items: &[T],
        mode: HashMode,
    ) -> Result<Self, MerkleError> {
        if items.is_empty() {
            return Err(MerkleError::Empty);
        }
        let height = items.len().next_power_of_two().trailing_zeros().max(1);
        if height > MAX_TREE_HEIGHT {
            return Err(MerkleError::TooMany(items.len()));
        }
        let n = 1usize << height;
        let leaves: Vec<Digest> = (0..n)
            .into_par_iter()
            .map(|i| match items.get(i) {
                Some(item) => mode.hash(item.as_ref()),
                None => mode.padding_leaf(i as u64 + 1),
            })
            .collect();
        Ok(Self::from_leaves(height, leaves, mode))
    }

    fn from_leaves(height: u32, leaves: Vec<Digest>, mode: HashMode) -> Self {
        let n = leaves.len();
        let mut nodes = vec![Digest::ZERO; 2 * n];
        nodes[n..].copy_from_slice(&leaves);
        let mut lo = n / 2;
        while lo >= 1 {
            let (upper, lower) = nodes.split_at_mut(2 * lo);
            upper[lo..2 * lo]
                .par_iter_mut()
                .enumerate()
                .for_each(|(i, slot)| *slot = mode.combine(&lower[2 * i], &lower[2 * i + 1]));
            lo /= 2;
        }
        MerkleTree {
            height,
            nodes,
            mode,
        }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn leaf_count(&self) -> u64 {
        1u64 << self.height
    }

    pub fn mode(&self) -> HashMode {
        self.mode
    }

    pub fn root(&self) -> Digest {
        self.nodes[1]
    }

    pub fn node(&self, v: u64) -> Digest {
        self.nodes[v as usize]
    }

    /// Digests in heap order, starting at node 1.
    pub fn nodes(&self) -> &[Digest] {
        &self.nodes[1..]
    }

    pub fn leaf(&self, j: u64) -> Result<Digest, MerkleError> {
        self.check_leaf(j)?;
        Ok(self.node(leaf_node(self.height, j)))
    }

    fn check_leaf(&self, j: u64) -> Result<(), MerkleError> {
        let n = self.leaf_count();
        if j == 0 || j > n {
            return Err(MerkleError::LeafOutOfRange { j, n });
        }
        Ok(())
    }

    /// The sibling digests on the path from leaf `j` up to the root,
    /// deepest first.
    pub fn prove(&self, j: u64) -> Result<MerkleProof, MerkleError> {
        self.check_leaf(j)?;
        let mut v = leaf_node(self.height, j);
        let mut digests = Vec::with_capacity(self.height as usize);
        while v > 1 {
            digests.push(self.node(v ^ 1));
            v >>= 1;
        }
        Ok(MerkleProof {
            leaf_index: j,
            digests,
        })
    }

    pub fn swap(&self) -> SwappedTree {
        SwappedTree(MerkleTree {
            height: self.height,
            nodes: swap_nodes(&self.nodes),
            mode: self.mode,
        })
    }

    /// Binary form: `MTRE`, big-endian `u32` height, then every digest in
    /// heap order from node 1.
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_tree(self.height, &self.nodes)
    }

    /// Parses the binary form. The hash mode is not stored; pass the one
    /// the tree was built with.
    pub fn from_bytes(bytes: &[u8], mode: HashMode) -> Result<Self, MerkleError> {
        let (height, nodes) = decode_tree(bytes)?;
        let tree = MerkleTree {
            height,
            nodes,
            mode,
        };
        let bad = (1..(1u64 << height))
            .find(|&v| tree.node(v) != mode.combine(&tree.node(2 * v), &tree.node(2 * v + 1)));
        if let Some(v) = bad {
            return Err(MerkleError::Format(format!(
                "node {v} is not the hash of its children"
            )));
        }
        Ok(tree)
    }
}

fn swap_nodes(nodes: &[Digest]) -> Vec<Digest> {
    let mut out = nodes.to_vec();
    for v in 2..nodes.len() {
        out[v] = nodes[v ^ 1];
    }
    out
}

fn encode_tree(height: u32, nodes: &[Digest]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + (nodes.len() - 1) * DIGEST_LEN);
    out.extend_from_slice(TREE_MAGIC);
    out.extend_from_slice(&height.to_be_bytes());
    for d in &nodes[1..] {
        out.extend_from_slice(&d.0);
    }
    out
}

fn decode_tree(bytes: &[u8]) -> Result<(u32, Vec<Digest>), MerkleError> {
    let fmt = |m: &str| MerkleError::Format(m.to_string());
    if bytes.len() < 8 || &bytes[..4] != TREE_MAGIC {
        return Err(fmt("missing MTRE header"));
    }
    let height = u32::from_be_bytes(bytes[4..8].try_into().unwrap());
    if height == 0 || height > MAX_TREE_HEIGHT {
        return Err(fmt("height out of range"));
    }
    let count = (1usize << (height + 1)) - 1;
    let body = &bytes[8..];
    if body.len() != count * DIGEST_LEN {
        return Err(MerkleError::Format(format!(
            "expected {count} digests, found {} bytes",
            body.len()
        )));
    }
    let mut nodes = Vec::with_capacity(count + 1);
    nodes.push(Digest::ZERO);
    nodes.extend(
        body.chunks_exact(DIGEST_LEN)
            .map(|c| Digest(c.try_into().unwrap())),
    );
    Ok((height, nodes))
}

/// The tree with every non-root node exchanged with its sibling.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SwappedTree(MerkleTree);

impl SwappedTree {
    pub fn height(&self) -> u32 {
        self.0.height
    }

    pub fn root(&self) -> Digest {
        self.0.root()
    }

    pub fn node(&self, v: u64) -> Digest {
        self.0.node(v)
    }

    pub fn nodes(&self) -> &[Digest] {
        self.0.nodes()
    }

    /// Digests on the root-to-leaf path `k_1..k_h` of leaf position `j`.
    pub fn path(&self, j: u64) -> Result<Vec<Digest>, MerkleError> {
        self.0.check_leaf(j)?;
        let leaf = leaf_node(self.height(), j);
        Ok((1..=self.height())
            .map(|l| self.node(leaf >> (self.height() - l)))
            .collect())
    }

    /// Swapping again restores the original tree.
    pub fn unswap(&self) -> MerkleTree {
        MerkleTree {
            height: self.0.height,
            nodes: swap_nodes(&self.0.nodes),
            mode: self.0.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    /// 1-based leaf position.
    pub leaf_index: u64,
    /// Sibling digests, deepest first.
    pub digests: Vec<Digest>,
}

/// Recomputes the root from `item` and checks it against `root`.
pub fn verify(
    root: &Digest,
    item: &[u8],
    j: u64,
    proof: &MerkleProof,
) -> Result<bool, MerkleError> {
    verify_with(HashMode::Single, root, item, j, proof)
}

pub fn verify_with(
    mode: HashMode,
    root: &Digest,
    item: &[u8],
    j: u64,
    proof: &MerkleProof,
) -> Result<bool, MerkleError> {
    verify_leaf_digest(mode, root, &mode.hash(item), j, proof)
}

/// Like [`verify`] but starting from an already hashed leaf.
pub fn verify_leaf_digest(
    mode: HashMode,
    root: &Digest,
    leaf: &Digest,
    j: u64,
    proof: &MerkleProof,
) -> Result<bool, MerkleError> {
    let h = proof.digests.len();
    if h == 0 || h > MAX_TREE_HEIGHT as usize {
        return Err(MerkleError::ProofLength {
            got: h,
            want: h.clamp(1, MAX_TREE_HEIGHT as usize),
        });
    }
    let n = 1u64 << h;
    if j == 0 || j > n {
        return Err(MerkleError::LeafOutOfRange { j, n });
    }
    let mut v = leaf_node(h as u32, j);
    let mut acc = *leaf;
    for d in &proof.digests {
        acc = if v & 1 == 0 {
            mode.combine(&acc, d)
        } else {
            mode.combine(d, &acc)
        };
        v >>= 1;
    }
    Ok(acc == *root)
}

/// [`verify`] with the proof height pinned to `h`.
pub fn verify_height(
    h: u32,
    root: &Digest,
    item: &[u8],
    j: u64,
    proof: &MerkleProof,
) -> Result<bool, MerkleError> {
    if proof.digests.len() != h as usize {
        return Err(MerkleError::ProofLength {
            got: proof.digests.len(),
            want: h as usize,
        });
    }
    verify(root, item, j, proof)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn items(n: usize) -> Vec<Vec<u8>> {
        (1..=n).map(|i| format!("T{i}").into_bytes()).collect()
    }

    fn h(d: &[u8]) -> Digest {
        HashMode::Single.hash(d)
    }

    fn hc(a: Digest, b: Digest) -> Digest {
        HashMode::Single.combine(&a, &b)
    }

    #[test]
    fn eight_transactions() {
        let t = MerkleTree::build(&items(8)).unwrap();
        assert_eq!(t.height(), 3);
        assert_eq!(t.nodes().len(), 15);
        let l: Vec<Digest> = items(8).iter().map(|i| h(i)).collect();
        let h12 = hc(l[0], l[1]);
        let h34 = hc(l[2], l[3]);
        let h5678 = hc(hc(l[4], l[5]), hc(l[6], l[7]));
        let root = hc(hc(h12, h34), h5678);
        assert_eq!(t.root(), root);

        let p = t.prove(3).unwrap();
        assert_eq!(p.digests, vec![l[3], h12, h5678]);
        assert!(verify(&root, b"T3", 3, &p).unwrap());
        assert!(!verify(&root, b"T4", 3, &p).unwrap());
        assert!(verify_height(3, &root, b"T3", 3, &p).unwrap());
        assert!(verify_height(4, &root, b"T3", 3, &p).is_err());
    }

    #[test]
    fn padding() {
        let t = MerkleTree::build(&items(1)).unwrap();
        assert_eq!((t.height(), t.nodes().len()), (1, 3));
        assert_eq!(t.leaf(2).unwrap(), HashMode::Single.padding_leaf(2));

        let t5 = MerkleTree::build(&items(5)).unwrap();
        assert_eq!(t5.height(), 3);
        assert_eq!(t5.leaf(8).unwrap(), HashMode::Single.padding_leaf(8));
        let mut changed = items(5);
        changed[2][0] ^= 1;
        assert_ne!(MerkleTree::build(&changed).unwrap().root(), t5.root());
        assert_eq!(MerkleTree::build(&items(5)).unwrap().root(), t5.root());

        assert_eq!(
            MerkleTree::build::<Vec<u8>>(&[]).unwrap_err(),
            MerkleError::Empty
        );
    }

    #[test]
    fn two_leaf_proof() {
        let t = MerkleTree::build(&items(2)).unwrap();
        assert_eq!(t.prove(1).unwrap().digests, vec![t.leaf(2).unwrap()]);
        assert!(t.prove(0).is_err());
        assert!(t.prove(3).is_err());
    }

    #[test]
    fn swap_layout() {
        let t = MerkleTree::build(&items(8)).unwrap();
        let s = t.swap();
        assert_eq!(s.root(), t.root());
        assert_eq!(s.node(2), t.node(3));
        assert_eq!(s.node(3), t.node(2));
        assert_eq!(s.unswap(), t);

        let t1 = MerkleTree::build(&items(2)).unwrap();
        let s1 = t1.swap();
        assert_eq!((s1.node(2), s1.node(3)), (t1.node(3), t1.node(2)));
    }

    #[test]
    fn proofs_are_swapped_paths() {
        for height in 1..=8 {
            let t = MerkleTree::build(&items(1 << height)).unwrap();
            let s = t.swap();
            for j in 1..=t.leaf_count() {
                let mut path = s.path(j).unwrap();
                path.reverse();
                assert_eq!(path, t.prove(j).unwrap().digests);
            }
        }
    }

    #[test]
    fn mutated_proofs_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = MerkleTree::build(&items(64)).unwrap();
        for _ in 0..100 {
            let j = rng.gen_range(1..=64u64);
            let mut p = t.prove(j).unwrap();
            let a = rng.gen_range(0..6);
            let b = (a + rng.gen_range(1..6)) % 6;
            p.digests.swap(a, b);
            let item = format!("T{j}");
            assert!(!verify(&t.root(), item.as_bytes(), j, &p).unwrap());
        }
        let p = MerkleTree::build(&items(8)).unwrap().prove(1).unwrap();
        assert!(verify(&t.root(), b"T1", 100, &p).is_err());
    }

    #[test]
    fn double_hashing() {
        let t = MerkleTree::build_with(&items(4), HashMode::Double).unwrap();
        assert_ne!(t.root(), MerkleTree::build(&items(4)).unwrap().root());
        let p = t.prove(2).unwrap();
        assert!(verify_with(HashMode::Double, &t.root(), b"T2", 2, &p).unwrap());
        assert!(!verify(&t.root(), b"T2", 2, &p).unwrap());
    }

    #[test]
    fn tree_file_round_trip() {
        let t = MerkleTree::build(&items(6)).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], b"MTRE");
        assert_eq!(&bytes[4..8], &3u32.to_be_bytes());
        assert_eq!(bytes.len(), 8 + 15 * 32);
        assert_eq!(MerkleTree::from_bytes(&bytes, HashMode::Single).unwrap(), t);
        let mut bad = bytes.clone();
        bad[40] ^= 1;
        assert!(MerkleTree::from_bytes(&bad, HashMode::Single).is_err());
        assert!(MerkleTree::from_bytes(&bytes[..100], HashMode::Single).is_err());
    }

    #[test]
    fn digest_hex() {
        let d = h(b"x");
        assert_eq!(d.to_hex().parse::<Digest>().unwrap(), d);
        assert_eq!(
            serde_json::from_str::<Digest>(&serde_json::to_string(&d).unwrap()).unwrap(),
            d
        );
        assert!("abcd".parse::<Digest>().is_err());
    }
}
