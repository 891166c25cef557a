//! Parallel private retrieval of one Merkle proof: one PIR query per color
//! class, issued concurrently, answers joined by color.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    answer, xor2_make_query, Backend, PirAnswer, PirError, PirQuery, ServerRequest, SubDatabase,
};
use crate::color_seq::{ColorId, ColorSequence};
use crate::merkle::{leaf_node, verify_leaf_digest, Digest, HashMode, MerkleProof};
use crate::subindex::{find_sub_indices, SubIndexError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServerError {
    #[error(transparent)]
    Pir(#[from] PirError),
    #[error("transport: {0}")]
    Transport(String),
    #[error("server rejected request: {0}")]
    Rejected(String),
}

/// One replica of one sub-database.
pub trait PirServer: Send + Sync {
    fn answer(&self, request: &ServerRequest) -> Result<PirAnswer, ServerError>;
}

/// An in-process server over an immutable sub-database.
#[derive(Debug, Clone)]
pub struct LocalServer {
    db: Arc<SubDatabase>,
}

impl LocalServer {
    pub fn new(db: Arc<SubDatabase>) -> Self {
        LocalServer { db }
    }
}

impl PirServer for LocalServer {
    fn answer(&self, request: &ServerRequest) -> Result<PirAnswer, ServerError> {
        Ok(answer(&self.db, request)?)
    }
}

/// The servers a client talks to: for every color, one replica per
/// backend requirement (two for xor2, one for plaintext).
#[derive(Clone)]
pub struct Cluster {
    backend: Backend,
    servers: BTreeMap<ColorId, Vec<Arc<dyn PirServer>>>,
}

impl Cluster {
    pub fn new(backend: Backend) -> Self {
        Cluster {
            backend,
            servers: BTreeMap::new(),
        }
    }

    /// In-process replicas sharing each database.
    pub fn local(dbs: &[SubDatabase], backend: Backend) -> Self {
        let mut cluster = Cluster::new(backend);
        for db in dbs {
            let shared = Arc::new(db.clone());
            let replicas = (0..backend.replicas())
                .map(|_| Arc::new(LocalServer::new(shared.clone())) as Arc<dyn PirServer>);
            cluster.servers.insert(db.color, replicas.collect());
        }
        cluster
    }

    pub fn insert(&mut self, color: ColorId, replicas: Vec<Arc<dyn PirServer>>) {
        self.servers.insert(color, replicas);
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn colors(&self) -> impl Iterator<Item = ColorId> + '_ {
        self.servers.keys().copied()
    }
}

/// Public information the client holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientView {
    pub root: Digest,
    pub height: u32,
    pub sequence: ColorSequence,
    #[serde(default)]
    pub mode: HashMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRecord {
    /// 1 for the child of the root, `h` for the leaf.
    pub level: u32,
    /// Swapped-tree node fetched at this level.
    pub node: u64,
    pub color: ColorId,
    pub sub_index: u64,
    pub query: PirQuery,
    /// Items read by each replica.
    pub touched: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalPlan {
    pub leaf: u64,
    pub records: Vec<PlanRecord>,
    /// Queries sent to each color class.
    pub audit: BTreeMap<ColorId, u32>,
}

impl RetrievalPlan {
    /// Every color class received exactly one query.
    pub fn one_query_per_class(&self, colors: usize) -> bool {
        self.audit.len() == colors && self.audit.values().all(|&n| n == 1)
    }

    pub fn max_touched(&self) -> u64 {
        self.records
            .iter()
            .flat_map(|r| r.touched.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RetrieveError {
    #[error(transparent)]
    SubIndex(#[from] SubIndexError),
    #[error(transparent)]
    Pir(#[from] PirError),
    #[error("leaf position {j} outside 1..={n}")]
    LeafOutOfRange { j: u64, n: u64 },
    #[error("no {want} server(s) configured for color {color}")]
    MissingServer { color: ColorId, want: usize },
    #[error("color {color} replica {replica}: {source}")]
    Server {
        color: ColorId,
        replica: usize,
        source: ServerError,
    },
    #[error("proof for leaf {leaf} does not verify against the published root")]
    Verification { leaf: u64 },
}

/// Retrieves the Merkle proof of leaf `j` without revealing `j` to any
/// single server and checks it against `view.root`.
///
/// `leaf_digest` is the client's own hash of its item.
pub fn retrieve_proof<R: RngCore + CryptoRng + ?Sized>(
    view: &ClientView,
    leaf_digest: &Digest,
    j: u64,
    cluster: &Cluster,
    rng: &mut R,
) -> Result<(MerkleProof, RetrievalPlan), RetrieveError> {
    let h = view.height;
    let n = 1u64.checked_shl(h).unwrap_or(0);
    if j == 0 || j > n {
        return Err(RetrieveError::LeafOutOfRange { j, n });
    }
    let leaf = leaf_node(h, j);
    let path = find_sub_indices(h, leaf, &view.sequence)?;

    // queries are drawn in level order so a fixed seed fixes every view
    let mut records = Vec::with_capacity(h as usize);
    for l in 0..h as usize {
        let color = path.colors[l];
        let size = view.sequence.count_of(color);
        let target = path.sub_indices[l];
        let query = match cluster.backend {
            Backend::Xor2 => xor2_make_query(size, target, rng)?,
            Backend::Plaintext => {
                if target > size {
                    return Err(PirError::TargetOutOfRange { target, size }.into());
                }
                PirQuery::Plaintext { target }
            }
        };
        records.push(PlanRecord {
            level: l as u32 + 1,
            node: path.nodes[l],
            color,
            sub_index: target,
            query,
            touched: Vec::new(),
        });
    }

    let mut jobs = Vec::with_capacity(records.len());
    for r in &records {
        let replicas = cluster
            .servers
            .get(&r.color)
            .filter(|v| v.len() >= cluster.backend.replicas());
        let Some(replicas) = replicas else {
            return Err(RetrieveError::MissingServer {
                color: r.color,
                want: cluster.backend.replicas(),
            });
        };
        jobs.push((r.color, r.query.requests(), replicas));
    }

    let answers: Vec<Result<Vec<PirAnswer>, RetrieveError>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(color, requests, replicas)| {
                s.spawn(move || {
                    requests
                        .iter()
                        .zip(replicas.iter())
                        .enumerate()
                        .map(|(i, (req, server))| {
                            server.answer(req).map_err(|source| RetrieveError::Server {
                                color: *color,
                                replica: i + 1,
                                source,
                            })
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("query thread panicked"))
            .collect()
    });

    let mut path_digests = Vec::with_capacity(h as usize);
    let mut audit = BTreeMap::new();
    for (record, got) in records.iter_mut().zip(answers) {
        let got = got?;
        let digest = match cluster.backend {
            Backend::Xor2 => super::xor2_reconstruct(&got[0], &got[1]),
            Backend::Plaintext => got[0].digest,
        };
        record.touched = got.iter().map(|a| a.touched).collect();
        *audit.entry(record.color).or_insert(0u32) += 1;
        path_digests.push(digest);
    }

    path_digests.reverse();
    let proof = MerkleProof {
        leaf_index: j,
        digests: path_digests,
    };
    let ok = verify_leaf_digest(view.mode, &view.root, leaf_digest, j, &proof).unwrap_or(false);
    if !ok {
        return Err(RetrieveError::Verification { leaf });
    }
    Ok((
        proof,
        RetrievalPlan {
            leaf,
            records,
            audit,
        },
    ))
}
