//! Desk-scale comparison of retrieval schemes by per-server work.
//!
//! The cost of a server is the number of items it reads for one query
//! (`touched`). Coloring and layer-based rows run full retrievals through
//! [`retrieve_proof`]; h-repetition queries one full-tree database per
//! level; proof-as-element is counted from its query without materializing
//! the `n * h` digest table; the PBC row is analytic.

use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::retrieve::{retrieve_proof, ClientView, Cluster, RetrieveError};
use super::{
    answer, partition, xor2_make_query, xor2_reconstruct, Backend, Indicator, PirError, PirQuery,
    Scheme, SubDatabase,
};
use crate::color_seq::{balanced_sequence, ColorId, ColorSequence};
use crate::csa::{color_splitting, CsaError};
use crate::merkle::{MerkleError, MerkleTree, DIGEST_LEN};

/// Largest height the bench will build a tree for.
pub const MAX_BENCH_HEIGHT: u32 = 20;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("height {0} outside 1..={MAX_BENCH_HEIGHT}")]
    Height(u32),
    #[error("trials must be positive")]
    NoTrials,
    #[error(transparent)]
    Csa(#[from] CsaError),
    #[error(transparent)]
    Merkle(#[from] MerkleError),
    #[error(transparent)]
    Pir(#[from] PirError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error("h-repetition answer for node {0} did not reconstruct")]
    Reconstruction(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scheme: Scheme,
    pub h: u32,
    pub servers: u64,
    pub largest_db: u64,
    /// Most items any single server read for one query, over all trials.
    pub max_touched: u64,
    /// Mean wall-clock milliseconds per proof retrieval.
    pub wall_ms: f64,
    /// Bytes sent to all servers for one proof.
    pub bytes_query: u64,
    /// Bytes returned by all servers for one proof.
    pub bytes_answer: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMetadata {
    pub seed: u64,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub backend: Backend,
    pub trials: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub metadata: BenchMetadata,
}

impl BenchReport {
    pub fn row(&self, scheme: Scheme, h: u32) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.h == h)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf8")
    }
}

struct Fixture {
    tree: MerkleTree,
}

impl Fixture {
    fn new(h: u32, rng: &mut ChaCha20Rng) -> Result<Self, BenchError> {
        let items: Vec<[u8; DIGEST_LEN]> = (0..1u64 << h).map(|_| rng.gen()).collect();
        Ok(Fixture {
            tree: MerkleTree::build(&items)?,
        })
    }
}

/// Runs `trials` retrievals of random leaves under `scheme` in a fresh
/// random tree of height `h`.
pub fn bench_retrieval(
    scheme: Scheme,
    h: u32,
    trials: u32,
    backend: Backend,
    seed: u64,
) -> Result<BenchRow, BenchError> {
    check(h, trials)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let fx = Fixture::new(h, &mut rng)?;
    run_scheme(&fx, scheme, trials, backend, &mut rng)
}

/// Benchmarks every scheme at every height; one tree per height, shared
/// across schemes.
pub fn run_bench(
    heights: &[u32],
    schemes: &[Scheme],
    trials: u32,
    backend: Backend,
    seed: u64,
) -> Result<BenchReport, BenchError> {
    let mut rows = Vec::new();
    for &h in heights {
        check(h, trials)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ u64::from(h));
        let fx = Fixture::new(h, &mut rng)?;
        for &scheme in schemes {
            rows.push(run_scheme(&fx, scheme, trials, backend, &mut rng)?);
        }
    }
    rows.sort_by_key(|r| (r.h, r.scheme));
    rows.dedup_by_key(|r| (r.h, r.scheme));
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let metadata = BenchMetadata {
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp,
        backend,
        trials,
    };
    Ok(BenchReport { rows, metadata })
}

fn check(h: u32, trials: u32) -> Result<(), BenchError> {
    if h == 0 || h > MAX_BENCH_HEIGHT {
        return Err(BenchError::Height(h));
    }
    if trials == 0 {
        return Err(BenchError::NoTrials);
    }
    Ok(())
}

fn run_scheme(
    fx: &Fixture,
    scheme: Scheme,
    trials: u32,
    backend: Backend,
    rng: &mut ChaCha20Rng,
) -> Result<BenchRow, BenchError> {
    let h = fx.tree.height();
    let cost = super::scheme_cost(scheme, h);
    let mut row = BenchRow {
        scheme,
        h,
        servers: cost.servers as u64,
        largest_db: cost.largest_db as u64,
        max_touched: 0,
        wall_ms: 0.0,
        bytes_query: 0,
        bytes_answer: 0,
    };
    let n = fx.tree.leaf_count();
    let started = Instant::now();
    match scheme {
        Scheme::Coloring | Scheme::LayerBased => {
            let seq = if scheme == Scheme::Coloring {
                balanced_sequence(h).map_err(CsaError::from)?
            } else {
                layers(h)
            };
            let coloring = color_splitting(&seq)?;
            let dbs = partition(&fx.tree.swap(), &coloring)?;
            let cluster = Cluster::local(&dbs, backend);
            let view = ClientView {
                root: fx.tree.root(),
                height: h,
                sequence: seq,
                mode: fx.tree.mode(),
            };
            let started = Instant::now();
            for _ in 0..trials {
                let j = rng.gen_range(1..=n);
                let (_, plan) = retrieve_proof(&view, &fx.tree.leaf(j)?, j, &cluster, rng)?;
                row.max_touched = row.max_touched.max(plan.max_touched());
                let (q, a) = plan
                    .records
                    .iter()
                    .map(|r| query_bytes(&r.query, backend))
                    .fold((0, 0), |(q, a), (x, y)| (q + x, a + y));
                row.bytes_query = q;
                row.bytes_answer = a;
            }
            row.wall_ms = started.elapsed().as_secs_f64() * 1e3 / f64::from(trials);
            return Ok(row);
        }
        Scheme::HRepetition => {
            let swapped = fx.tree.swap();
            let db = Arc::new(SubDatabase {
                color: ColorId(1),
                items: swapped.nodes()[1..].to_vec(),
            });
            for _ in 0..trials {
                let j = rng.gen_range(1..=n);
                let leaf = crate::merkle::leaf_node(h, j);
                let path: Vec<u64> = (1..=h).map(|l| leaf >> (h - l)).collect();
                let queries = path
                    .iter()
                    .map(|&v| make_query(db.size(), v - 1, backend, rng))
                    .collect::<Result<Vec<_>, _>>()?;
                let answers: Vec<Result<(u64, super::Digest), PirError>> =
                    std::thread::scope(|s| {
                        let handles: Vec<_> = queries
                            .iter()
                            .map(|q| {
                                let db = db.clone();
                                s.spawn(move || {
                                    let got = q
                                        .requests()
                                        .iter()
                                        .map(|r| answer(&db, r))
                                        .collect::<Result<Vec<_>, _>>()?;
                                    let touched = got.iter().map(|a| a.touched).max().unwrap_or(0);
                                    let digest = if got.len() == 2 {
                                        xor2_reconstruct(&got[0], &got[1])
                                    } else {
                                        got[0].digest
                                    };
                                    Ok((touched, digest))
                                })
                            })
                            .collect();
                        handles
                            .into_iter()
                            .map(|h| h.join().expect("query thread panicked"))
                            .collect()
                    });
                for (&v, got) in path.iter().zip(answers) {
                    let (touched, digest) = got?;
                    if digest != swapped.node(v) {
                        return Err(BenchError::Reconstruction(v));
                    }
                    row.max_touched = row.max_touched.max(touched);
                }
                let (q, a) = queries
                    .iter()
                    .map(|q| query_bytes(q, backend))
                    .fold((0, 0), |(q, a), (x, y)| (q + x, a + y));
                row.bytes_query = q;
                row.bytes_answer = a;
            }
        }
        Scheme::ProofAsElement => {
            // one element per leaf, each `h` digests wide
            let hh = u64::from(h);
            for _ in 0..trials {
                let j = rng.gen_range(1..=n);
                let touched = match make_query(n, j, backend, rng)? {
                    PirQuery::Xor2 { server1, server2 } => {
                        server1.popcount().max(server2.popcount()) * hh
                    }
                    PirQuery::Plaintext { .. } => n * hh,
                };
                row.max_touched = row.max_touched.max(touched);
            }
            let (q, a) = match backend {
                Backend::Xor2 => (2 * indicator_bytes(n), 2 * hh * DIGEST_LEN as u64),
                Backend::Plaintext => (8, hh * DIGEST_LEN as u64),
            };
            row.bytes_query = q;
            row.bytes_answer = a;
        }
        Scheme::SealpirPbcModel => {
            row.max_touched = row.largest_db;
            return Ok(row);
        }
    }
    row.wall_ms = started.elapsed().as_secs_f64() * 1e3 / f64::from(trials);
    Ok(row)
}

fn layers(h: u32) -> ColorSequence {
    ColorSequence::from_counts(&(1..=h).map(|l| 1u64 << l).collect::<Vec<_>>())
        .expect("layer sizes are a valid sequence")
}

fn make_query(
    size: u64,
    target: u64,
    backend: Backend,
    rng: &mut ChaCha20Rng,
) -> Result<PirQuery, PirError> {
    match backend {
        Backend::Xor2 => xor2_make_query(size, target, rng),
        Backend::Plaintext if (1..=size).contains(&target) => Ok(PirQuery::Plaintext { target }),
        Backend::Plaintext => Err(PirError::TargetOutOfRange { target, size }),
    }
}

fn indicator_bytes(len: u64) -> u64 {
    len.div_ceil(8)
}

fn query_bytes(q: &PirQuery, backend: Backend) -> (u64, u64) {
    let answers = backend.replicas() as u64 * DIGEST_LEN as u64;
    match q {
        PirQuery::Xor2 { server1, server2 } => (bytes_of(server1) + bytes_of(server2), answers),
        PirQuery::Plaintext { .. } => (8, answers),
    }
}

fn bytes_of(ind: &Indicator) -> u64 {
    ind.as_bytes().len() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_tree_costs() {
        let report = run_bench(
            &[3],
            &[Scheme::Coloring, Scheme::LayerBased, Scheme::HRepetition],
            16,
            Backend::Plaintext,
            1,
        )
        .unwrap();
        let touched = |s| report.row(s, 3).unwrap().max_touched;
        assert_eq!(touched(Scheme::Coloring), 5);
        assert_eq!(touched(Scheme::LayerBased), 8);
        assert_eq!(touched(Scheme::HRepetition), 14);
    }

    #[test]
    fn ratios_at_height_ten() {
        let report = run_bench(&[10], &Scheme::ALL, 4, Backend::Plaintext, 2).unwrap();
        let t = |s| report.row(s, 10).unwrap().max_touched as f64;
        let layer = t(Scheme::LayerBased) / t(Scheme::Coloring);
        let rep = t(Scheme::HRepetition) / t(Scheme::Coloring);
        assert!((layer - 5.0).abs() <= 0.75, "{layer}");
        assert!((rep - 10.0).abs() <= 1.5, "{rep}");
        assert_eq!(t(Scheme::ProofAsElement), 10240.0);
    }

    #[test]
    fn xor_rows_touch_about_half() {
        let row = bench_retrieval(Scheme::Coloring, 8, 8, Backend::Xor2, 3).unwrap();
        assert!(row.max_touched <= row.largest_db);
        assert!(row.max_touched * 4 >= row.largest_db);
        // two indicators per color, 32 bytes back from each replica
        assert_eq!(row.bytes_answer, 8 * 2 * 32);
    }

    #[test]
    fn rows_sorted_and_deterministic() {
        let a = run_bench(
            &[4, 2],
            &[Scheme::SealpirPbcModel, Scheme::Coloring],
            3,
            Backend::Xor2,
            7,
        )
        .unwrap();
        let keys: Vec<(u32, Scheme)> = a.rows.iter().map(|r| (r.h, r.scheme)).collect();
        assert_eq!(
            keys,
            vec![
                (2, Scheme::Coloring),
                (2, Scheme::SealpirPbcModel),
                (4, Scheme::Coloring),
                (4, Scheme::SealpirPbcModel)
            ]
        );
        let b = run_bench(
            &[4, 2],
            &[Scheme::SealpirPbcModel, Scheme::Coloring],
            3,
            Backend::Xor2,
            7,
        )
        .unwrap();
        let strip = |r: &BenchReport| {
            r.rows
                .iter()
                .map(|x| (x.max_touched, x.bytes_query))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert!(a.to_csv().starts_with(
            "scheme,h,servers,largest_db,max_touched,wall_ms,bytes_query,bytes_answer\n"
        ));
    }

    #[test]
    fn guards() {
        assert!(matches!(
            bench_retrieval(Scheme::Coloring, 21, 1, Backend::Xor2, 0),
            Err(BenchError::Height(21))
        ));
        assert!(matches!(
            bench_retrieval(Scheme::Coloring, 3, 0, Backend::Xor2, 0),
            Err(BenchError::NoTrials)
        ));
    }
}
