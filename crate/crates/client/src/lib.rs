//! Blocking clients for `ancestral-service`: the compute endpoints, and
//! [`PirServer`] implementations that reach replicas over HTTP or the binary
//! TCP protocol so [`retrieve_proof`](ancestral_core::pir::retrieve_proof)
//! can run against remote servers.

use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ancestral_core::api::{
    ColorRequest, DeploymentMeta, ErrorBody, FeasibleResponse, Health, PlainRequest, SequenceInput,
    SequenceRequest, SubIndexRequest,
};
use ancestral_core::color_seq::{ColorId, ColorSequence};
use ancestral_core::csa::{AncestralColoring, FeasibleSplit};
use ancestral_core::formats::coloring_from_json;
use ancestral_core::pir::{
    Backend, ClientView, Cluster, PirAnswer, PirServer, Scheme, SchemeCost, ServerError,
    ServerRequest,
};
use ancestral_core::subindex::PathIndices;
use ancestral_core::wire;
use reqwest::blocking::{Client, Response};
use serde::de::DeserializeOwned;
use thiserror::Error;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("service answered {status}: {message}")]
    Api { status: u16, message: String },
    #[error("bad response: {0}")]
    Decode(String),
    #[error("replicas disagree: {0}")]
    Mismatch(String),
    #[error("{backend} needs {want} replica address(es), got {got}")]
    Replicas {
        backend: Backend,
        want: usize,
        got: usize,
    },
    #[error("tcp: {0}")]
    Io(#[from] io::Error),
}

/// One service endpoint.
#[derive(Debug, Clone)]
pub struct ServiceClient {
    base: String,
    http: Client,
}

impl ServiceClient {
    pub fn new(base: &str) -> Result<Self, ClientError> {
        let http = Client::builder().timeout(DEFAULT_TIMEOUT).build()?;
        Ok(ServiceClient {
            base: base.trim_end_matches('/').to_string(),
            http,
        })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        decode(self.http.get(format!("{}{path}", self.base)).send()?)
    }

    fn post<B: serde::Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, ClientError> {
        decode(
            self.http
                .post(format!("{}{path}", self.base))
                .json(body)
                .send()?,
        )
    }

    pub fn health(&self) -> Result<Health, ClientError> {
        self.get("/health")
    }

    pub fn feasible(&self, seq: impl Into<SequenceInput>) -> Result<FeasibleResponse, ClientError> {
        self.post(
            "/v1/feasible",
            &SequenceRequest {
                sequence: seq.into(),
            },
        )
    }

    pub fn balanced(&self, h: u32) -> Result<ColorSequence, ClientError> {
        self.get(&format!("/v1/balanced/{h}"))
    }

    pub fn split(&self, seq: impl Into<SequenceInput>) -> Result<FeasibleSplit, ClientError> {
        self.post(
            "/v1/split",
            &SequenceRequest {
                sequence: seq.into(),
            },
        )
    }

    pub fn color(&self, req: &ColorRequest) -> Result<AncestralColoring, ClientError> {
        let v: serde_json::Value = self.post("/v1/color", req)?;
        coloring_from_json(&v.to_string()).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub fn subindex(
        &self,
        h: u32,
        leaf: u64,
        seq: Option<SequenceInput>,
    ) -> Result<PathIndices, ClientError> {
        self.post(
            "/v1/subindex",
            &SubIndexRequest {
                h,
                leaf,
                sequence: seq,
            },
        )
    }

    pub fn cost(&self, scheme: Scheme, h: u32) -> Result<SchemeCost, ClientError> {
        self.get(&format!("/v1/cost/{scheme}/{h}"))
    }

    pub fn meta(&self) -> Result<DeploymentMeta, ClientError> {
        self.get("/v1/pir/meta")
    }

    /// This service's replica of `color`.
    pub fn replica(&self, color: ColorId) -> HttpReplica {
        HttpReplica {
            client: self.clone(),
            color,
        }
    }
}

fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
    let status = resp.status();
    let bytes = resp.bytes()?;
    if !status.is_success() {
        let message = serde_json::from_slice::<ErrorBody>(&bytes)
            .map(|e| e.error)
            .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned());
        return Err(ClientError::Api {
            status: status.as_u16(),
            message,
        });
    }
    serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
}

/// A color's replica behind the HTTP service.
#[derive(Debug, Clone)]
pub struct HttpReplica {
    client: ServiceClient,
    color: ColorId,
}

impl PirServer for HttpReplica {
    fn answer(&self, request: &ServerRequest) -> Result<PirAnswer, ServerError> {
        let c = self.color.get();
        let got = match request {
            ServerRequest::Xor(ind) => self.client.post(&format!("/v1/pir/{c}/xor"), ind),
            ServerRequest::Plain(t) => self
                .client
                .post(&format!("/v1/pir/{c}/plain"), &PlainRequest { target: *t }),
        };
        got.map_err(|e| match e {
            ClientError::Api { message, .. } => ServerError::Rejected(message),
            other => ServerError::Transport(other.to_string()),
        })
    }
}

/// A color's replica behind the binary TCP protocol. The connection is
/// opened lazily and reused; the protocol carries only digests, so the
/// touched count is derived from the request.
#[derive(Debug)]
pub struct TcpReplica {
    addr: String,
    size: u64,
    conn: Mutex<Option<TcpStream>>,
}

impl TcpReplica {
    pub fn new(addr: impl Into<String>, size: u64) -> Self {
        TcpReplica {
            addr: addr.into(),
            size,
            conn: Mutex::new(None),
        }
    }

    fn exchange(&self, request: &ServerRequest) -> io::Result<ancestral_core::merkle::Digest> {
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            let addr = self
                .addr
                .to_socket_addrs()?
                .next()
                .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "unresolvable"))?;
            let s = TcpStream::connect_timeout(&addr, DEFAULT_TIMEOUT)?;
            s.set_read_timeout(Some(DEFAULT_TIMEOUT))?;
            *guard = Some(s);
        }
        let stream = guard.as_mut().expect("connected above");
        let got = wire::write_request(stream, request).and_then(|_| wire::read_answer(stream));
        if got.is_err() {
            *guard = None;
        }
        got
    }
}

impl PirServer for TcpReplica {
    fn answer(&self, request: &ServerRequest) -> Result<PirAnswer, ServerError> {
        let touched = match request {
            ServerRequest::Xor(ind) => ind.popcount(),
            ServerRequest::Plain(_) => self.size,
        };
        let digest = self
            .exchange(request)
            .map_err(|e| ServerError::Transport(format!("{}: {e}", self.addr)))?;
        Ok(PirAnswer { digest, touched })
    }
}

/// Reads the deployment from every URL, checks they agree, and builds a
/// cluster whose replica `r` of every color is service `urls[r]`.
pub fn http_cluster(
    urls: &[String],
    backend: Backend,
) -> Result<(ClientView, Cluster), ClientError> {
    let want = backend.replicas();
    if urls.len() < want {
        return Err(ClientError::Replicas {
            backend,
            want,
            got: urls.len(),
        });
    }
    let clients = urls[..want]
        .iter()
        .map(|u| ServiceClient::new(u))
        .collect::<Result<Vec<_>, _>>()?;
    let first = clients[0].meta()?;
    for c in &clients[1..] {
        if c.meta()? != first {
            return Err(ClientError::Mismatch(format!(
                "{} and {} serve different deployments",
                clients[0].base(),
                c.base()
            )));
        }
    }
    let mut cluster = Cluster::new(backend);
    for &color in first.sizes.keys() {
        let replicas = clients
            .iter()
            .map(|c| Arc::new(c.replica(ColorId(color))) as Arc<dyn PirServer>)
            .collect();
        cluster.insert(ColorId(color), replicas);
    }
    Ok((first.view, cluster))
}

/// Builds a cluster of TCP replicas laid out by [`wire::port_for`] on
/// `host` from `base`.
pub fn tcp_cluster(
    view: &ClientView,
    host: &str,
    base: u16,
    backend: Backend,
) -> Result<Cluster, ClientError> {
    let mut cluster = Cluster::new(backend);
    for e in view.sequence.entries() {
        let mut replicas: Vec<Arc<dyn PirServer>> = Vec::new();
        for r in 1..=backend.replicas() {
            let port = wire::port_for(base, view.height, e.color.get(), r).ok_or_else(|| {
                io::Error::new(
                    io::ErrorKind::InvalidInput,
                    format!("port for color {} overflows", e.color),
                )
            })?;
            replicas.push(Arc::new(TcpReplica::new(format!("{host}:{port}"), e.count)));
        }
        cluster.insert(e.color, replicas);
    }
    Ok(cluster)
}
