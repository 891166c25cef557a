//! Per-color sub-databases and the PIR primitives that query them.
//!
//! Two backends are provided. `xor2` is the classic two-server
//! information-theoretic scheme: the client sends a uniformly random subset
//! `I` to one server and `I` with the target flipped to the other; the XOR of
//! the two answers is the target item. `plaintext` sends the index in the
//! clear and stands in for a single-server computational PIR whose server
//! must touch its whole database per query.

use std::fmt;
use std::str::FromStr;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color_seq::ColorId;
use crate::csa::AncestralColoring;
use crate::merkle::{Digest, SwappedTree};

pub mod bench;
pub mod cost;
pub mod retrieve;

pub use bench::{
    bench_retrieval, run_bench, BenchError, BenchMetadata, BenchReport, BenchRow, MAX_BENCH_HEIGHT,
};
pub use cost::{scheme_cost, Scheme, SchemeCost};
pub use retrieve::{
    retrieve_proof, ClientView, Cluster, LocalServer, PirServer, PlanRecord, RetrievalPlan,
    RetrieveError, ServerError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PirError {
    #[error("target {target} outside 1..={size}")]
    TargetOutOfRange { target: u64, size: u64 },
    #[error("indicator has {got} positions, database has {want}")]
    LengthMismatch { got: u64, want: u64 },
    #[error("coloring height {coloring} does not match tree height {tree}")]
    HeightMismatch { coloring: u32, tree: u32 },
    #[error("malformed indicator: {0}")]
    Indicator(String),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Xor2,
    Plaintext,
}

impl Backend {
    /// Replicas each color needs.
    pub fn replicas(self) -> usize {
        match self {
            Backend::Xor2 => 2,
            Backend::Plaintext => 1,
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Xor2 => "xor2",
            Backend::Plaintext => "plaintext",
        })
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xor2" => Ok(Backend::Xor2),
            "plaintext" => Ok(Backend::Plaintext),
            other => Err(format!(
                "unknown backend {other:?} (expected xor2 or plaintext)"
            )),
        }
    }
}

/// The digests of one color class, in left-to-right class order. Position
/// `k` (1-based) holds the swapped-tree digest of the `k`-th class node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubDatabase {
    pub color: ColorId,
    pub items: Vec<Digest>,
}

impl SubDatabase {
    pub fn size(&self) -> u64 {
        self.items.len() as u64
    }

    pub fn get(&self, index: u64) -> Result<Digest, PirError> {
        match index
            .checked_sub(1)
            .and_then(|i| self.items.get(i as usize))
        {
            Some(d) => Ok(*d),
            None => Err(PirError::TargetOutOfRange {
                target: index,
                size: self.size(),
            }),
        }
    }
}

/// Splits the swapped tree into one sub-database per color class.
pub fn partition(
    swapped: &SwappedTree,
    coloring: &AncestralColoring,
) -> Result<Vec<SubDatabase>, PirError> {
    if swapped.height() != coloring.height() {
        return Err(PirError::HeightMismatch {
            coloring: coloring.height(),
            tree: swapped.height(),
        });
    }
    Ok(coloring
        .classes()
        .map(|(color, nodes)| SubDatabase {
            color,
            items: nodes.iter().map(|&v| swapped.node(v)).collect(),
        })
        .collect())
}

/// A subset of `1..=len`, packed MSB-first.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Indicator {
    len: u64,
    bits: Vec<u8>,
}

impl fmt::Debug for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Indicator(len={}, ones={})", self.len, self.popcount())
    }
}

impl Indicator {
    pub fn empty(len: u64) -> Self {
        Indicator {
            len,
            bits: vec![0; byte_len(len)],
        }
    }

    pub fn full(len: u64) -> Self {
        let mut ind = Indicator {
            len,
            bits: vec![0xFF; byte_len(len)],
        };
        ind.clear_tail();
        ind
    }

    /// Parses a packed bitset; bits past `len` must be zero.
    pub fn from_bytes(len: u64, bits: Vec<u8>) -> Result<Self, PirError> {
        if bits.len() != byte_len(len) {
            return Err(PirError::Indicator(format!(
                "{} bytes for {len} positions",
                bits.len()
            )));
        }
        let ind = Indicator { len, bits };
        let mut check = ind.clone();
        check.clear_tail();
        if check != ind {
            return Err(PirError::Indicator("bits set past the end".into()));
        }
        Ok(ind)
    }

    pub fn from_positions(len: u64, positions: &[u64]) -> Result<Self, PirError> {
        let mut ind = Indicator::empty(len);
        for &p in positions {
            if p == 0 || p > len {
                return Err(PirError::TargetOutOfRange {
                    target: p,
                    size: len,
                });
            }
            ind.set(p, true);
        }
        Ok(ind)
    }

    fn random<R: RngCore + CryptoRng + ?Sized>(len: u64, rng: &mut R) -> Self {
        let mut bits = vec![0u8; byte_len(len)];
        rng.fill_bytes(&mut bits);
        let mut ind = Indicator { len, bits };
        ind.clear_tail();
        ind
    }

    fn clear_tail(&mut self) {
        let rem = (self.len % 8) as u32;
        if rem != 0 {
            if let Some(last) = self.bits.last_mut() {
                *last &= 0xFFu8 << (8 - rem);
            }
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    /// Membership of 1-based position `p`.
    pub fn contains(&self, p: u64) -> bool {
        let i = p - 1;
        self.bits[(i / 8) as usize] & (0x80 >> (i % 8)) != 0
    }

    pub fn set(&mut self, p: u64, on: bool) {
        let i = p - 1;
        let mask = 0x80 >> (i % 8);
        let byte = &mut self.bits[(i / 8) as usize];
        if on {
            *byte |= mask;
        } else {
            *byte &= !mask;
        }
    }

    pub fn flip(&mut self, p: u64) {
        let i = p - 1;
        self.bits[(i / 8) as usize] ^= 0x80 >> (i % 8);
    }

    pub fn popcount(&self) -> u64 {
        self.bits.iter().map(|b| b.count_ones() as u64).sum()
    }

    /// 1-based positions in the set, ascending.
    pub fn positions(&self) -> impl Iterator<Item = u64> + '_ {
        (1..=self.len).filter(|&p| self.contains(p))
    }

    /// Positions where `self` and `other` differ.
    pub fn difference_count(&self, other: &Indicator) -> u64 {
        self.bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a ^ b).count_ones() as u64)
            .sum()
    }
}

fn byte_len(len: u64) -> usize {
    len.div_ceil(8) as usize
}

#[derive(Serialize, Deserialize)]
struct IndicatorRepr {
    len: u64,
    bits: String,
}

impl Serialize for Indicator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        IndicatorRepr {
            len: self.len,
            bits: hex::encode(&self.bits),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Indicator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = IndicatorRepr::deserialize(d)?;
        let bits = hex::decode(&r.bits).map_err(serde::de::Error::custom)?;
        Indicator::from_bytes(r.len, bits).map_err(serde::de::Error::custom)
    }
}

/// What the client sends for one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum PirQuery {
    Xor2 {
        server1: Indicator,
        server2: Indicator,
    },
    Plaintext {
        target: u64,
    },
}

impl PirQuery {
    /// The request each replica receives, in replica order.
    pub fn requests(&self) -> Vec<ServerRequest> {
        match self {
            PirQuery::Xor2 { server1, server2 } => vec![
                ServerRequest::Xor(server1.clone()),
                ServerRequest::Xor(server2.clone()),
            ],
            PirQuery::Plaintext { target } => vec![ServerRequest::Plain(*target)],
        }
    }
}

/// What one server receives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ServerRequest {
    Xor(Indicator),
    Plain(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PirAnswer {
    pub digest: Digest,
    /// Items read to produce the answer.
    pub touched: u64,
}

/// Builds the two server views for `target` in a database of `size` items.
/// The random subset is drawn independently of `target`.
pub fn xor2_make_query<R: RngCore + CryptoRng + ?Sized>(
    size: u64,
    target: u64,
    rng: &mut R,
) -> Result<PirQuery, PirError> {
    if target == 0 || target > size {
        return Err(PirError::TargetOutOfRange { target, size });
    }
    let server1 = Indicator::random(size, rng);
    let mut server2 = server1.clone();
    server2.flip(target);
    Ok(PirQuery::Xor2 { server1, server2 })
}

/// XOR of the selected items; the zero digest for an empty selection.
pub fn xor2_answer(db: &SubDatabase, indicator: &Indicator) -> Result<PirAnswer, PirError> {
    if indicator.len() != db.size() {
        return Err(PirError::LengthMismatch {
            got: indicator.len(),
            want: db.size(),
        });
    }
    let mut acc = Digest::ZERO;
    let mut touched = 0;
    for (byte_idx, &byte) in indicator.as_bytes().iter().enumerate() {
        if byte == 0 {
            continue;
        }
        for bit in 0..8 {
            if byte & (0x80 >> bit) != 0 {
                acc.xor_assign(&db.items[byte_idx * 8 + bit]);
                touched += 1;
            }
        }
    }
    Ok(PirAnswer {
        digest: acc,
        touched,
    })
}

pub fn xor2_reconstruct(first: &PirAnswer, second: &PirAnswer) -> Digest {
    first.digest ^ second.digest
}

/// Returns the item; `touched` is the whole database, the cost a
/// single-server PIR pays per query.
pub fn plaintext_answer(db: &SubDatabase, target: u64) -> Result<PirAnswer, PirError> {
    Ok(PirAnswer {
        digest: db.get(target)?,
        touched: db.size(),
    })
}

/// Answers any request against a local database.
pub fn answer(db: &SubDatabase, request: &ServerRequest) -> Result<PirAnswer, PirError> {
    match request {
        ServerRequest::Xor(ind) => xor2_answer(db, ind),
        ServerRequest::Plain(t) => plaintext_answer(db, *t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color_seq::balanced_sequence;
    use crate::csa::{color_splitting, layer_coloring};
    use crate::merkle::{HashMode, MerkleTree};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_db(size: usize, rng: &mut impl Rng) -> SubDatabase {
        SubDatabase {
            color: ColorId(1),
            items: (0..size).map(|_| Digest(rng.gen())).collect(),
        }
    }

    fn tree(h: u32) -> MerkleTree {
        let items: Vec<Vec<u8>> = (0..1u32 << h).map(|i| i.to_be_bytes().to_vec()).collect();
        MerkleTree::build(&items).unwrap()
    }

    #[test]
    fn partition_worked_example() {
        let t = tree(3);
        let s = t.swap();
        let col = color_splitting(&balanced_sequence(3).unwrap()).unwrap();
        let dbs = partition(&s, &col).unwrap();
        assert_eq!(
            dbs.iter().map(SubDatabase::size).collect::<Vec<_>>(),
            vec![4, 5, 5]
        );
        let green: Vec<Digest> = [8, 9, 10, 11, 3].iter().map(|&v| s.node(v)).collect();
        assert_eq!(dbs[1].items, green);
        assert_eq!(dbs[1].color, ColorId(2));

        let layers = partition(&s, &layer_coloring(3).unwrap()).unwrap();
        assert_eq!(
            layers.iter().map(SubDatabase::size).collect::<Vec<_>>(),
            vec![2, 4, 8]
        );

        assert!(partition(&tree(2).swap(), &col).is_err());
    }

    #[test]
    fn partition_is_a_bijection() {
        for h in [1, 4, 7, 10] {
            let t = tree(h);
            let s = t.swap();
            let col = color_splitting(&balanced_sequence(h).unwrap()).unwrap();
            let mut all: Vec<Digest> = partition(&s, &col)
                .unwrap()
                .into_iter()
                .flat_map(|d| d.items)
                .collect();
            let mut expect: Vec<Digest> = s.nodes()[1..].to_vec();
            all.sort();
            expect.sort();
            assert_eq!(all, expect);
        }
    }

    #[test]
    fn query_by_symmetric_difference() {
        let i = Indicator::from_positions(4, &[1, 3]).unwrap();
        let mut j = i.clone();
        j.flip(2);
        assert_eq!(j.positions().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(i.difference_count(&j), 1);
    }

    #[test]
    fn server_one_view_ignores_target() {
        let views: Vec<Indicator> = (1..=64)
            .map(
                |t| match xor2_make_query(64, t, &mut ChaCha20Rng::seed_from_u64(99)).unwrap() {
                    PirQuery::Xor2 { server1, .. } => server1,
                    _ => unreachable!(),
                },
            )
            .collect();
        assert!(views.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn reconstruction_matches_target() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let size = rng.gen_range(1..=200u64);
            let target = rng.gen_range(1..=size);
            let db = random_db(size as usize, &mut rng);
            let PirQuery::Xor2 { server1, server2 } =
                xor2_make_query(size, target, &mut rng).unwrap()
            else {
                unreachable!()
            };
            assert_eq!(server1.difference_count(&server2), 1);
            let a = xor2_answer(&db, &server1).unwrap();
            let b = xor2_answer(&db, &server2).unwrap();
            // independent oracle: fold the selected positions directly
            let fold = |ind: &Indicator| {
                ind.positions()
                    .fold(Digest::ZERO, |acc, p| acc ^ db.items[p as usize - 1])
            };
            assert_eq!(a.digest, fold(&server1));
            assert_eq!(xor2_reconstruct(&a, &b), db.items[target as usize - 1]);
        }
        assert!(xor2_make_query(4, 5, &mut rng).is_err());
        assert!(xor2_make_query(4, 0, &mut rng).is_err());
    }

    #[test]
    fn answer_edge_cases() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let db = random_db(3, &mut rng);
        assert_eq!(
            xor2_answer(&db, &Indicator::empty(3)).unwrap(),
            PirAnswer {
                digest: Digest::ZERO,
                touched: 0
            }
        );
        assert_eq!(
            xor2_answer(&db, &Indicator::from_positions(3, &[2]).unwrap())
                .unwrap()
                .digest,
            db.items[1]
        );
        let all = xor2_answer(&db, &Indicator::full(3)).unwrap();
        let mut by_hand = [0u8; 32];
        for d in &db.items {
            for (k, b) in d.0.iter().enumerate() {
                by_hand[k] ^= b;
            }
        }
        assert_eq!(all.digest, Digest(by_hand));
        assert_eq!(all.touched, 3);
        assert!(matches!(
            xor2_answer(&db, &Indicator::empty(4)),
            Err(PirError::LengthMismatch { .. })
        ));
        assert_eq!(
            plaintext_answer(&db, 3).unwrap(),
            PirAnswer {
                digest: db.items[2],
                touched: 3
            }
        );
        assert!(plaintext_answer(&db, 4).is_err());
    }

    #[test]
    fn indicator_encoding() {
        let ind = Indicator::from_positions(10, &[1, 9, 10]).unwrap();
        assert_eq!(ind.as_bytes(), &[0x80, 0xC0]);
        let json = serde_json::to_string(&ind).unwrap();
        assert_eq!(json, r#"{"len":10,"bits":"80c0"}"#);
        assert_eq!(serde_json::from_str::<Indicator>(&json).unwrap(), ind);
        assert!(Indicator::from_bytes(10, vec![0x80, 0xC1]).is_err());
        assert!(Indicator::from_bytes(10, vec![0x80]).is_err());
        assert_eq!(Indicator::full(10).popcount(), 10);
    }

    #[test]
    fn double_hash_trees_partition_too() {
        let items: Vec<Vec<u8>> = (0..8u8).map(|i| vec![i]).collect();
        let t = MerkleTree::build_with(&items, HashMode::Double).unwrap();
        let col = color_splitting(&balanced_sequence(3).unwrap()).unwrap();
        assert_eq!(partition(&t.swap(), &col).unwrap().len(), 3);
    }
}
