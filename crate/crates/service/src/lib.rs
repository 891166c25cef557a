//! HTTP/JSON service over the coloring operations, plus PIR replicas for one
//! loaded deployment over HTTP and the binary TCP protocol.
//!
//! A process holds one replica of every color. Two processes started from
//! the same tree and coloring form the two non-colluding servers of the
//! `xor2` backend.

use std::collections::BTreeMap;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;

use ancestral_core::api::{
    ColorRequest, DeploymentMeta, ErrorBody, FeasibleResponse, Health, PlainRequest,
    SequenceRequest, SubIndexRequest,
};
use ancestral_core::color_seq::{balanced_sequence, ColorId, ColorSequence};
use ancestral_core::csa::{
    color_splitting_with, feasible_split, AncestralColoring, CsaOptions, FeasibleSplit,
};
use ancestral_core::formats::coloring_to_json;
use ancestral_core::merkle::MerkleTree;
use ancestral_core::pir::{
    self, scheme_cost, ClientView, Indicator, PirAnswer, PirError, Scheme, SchemeCost, SubDatabase,
};
use ancestral_core::subindex::{find_sub_indices, PathIndices};
use ancestral_core::wire;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;

/// Largest height `/v1/color` will materialize.
pub const MAX_HTTP_COLOR_HEIGHT: u32 = 20;

/// The sub-databases of one tree under one coloring.
#[derive(Debug)]
pub struct Deployment {
    view: ClientView,
    dbs: BTreeMap<ColorId, Arc<SubDatabase>>,
}

impl Deployment {
    pub fn new(tree: &MerkleTree, coloring: &AncestralColoring) -> Result<Self, PirError> {
        let dbs = pir::partition(&tree.swap(), coloring)?;
        let view = ClientView {
            root: tree.root(),
            height: tree.height(),
            sequence: coloring.sequence(),
            mode: tree.mode(),
        };
        Ok(Deployment {
            view,
            dbs: dbs.into_iter().map(|d| (d.color, Arc::new(d))).collect(),
        })
    }

    pub fn view(&self) -> &ClientView {
        &self.view
    }

    pub fn database(&self, color: ColorId) -> Option<&Arc<SubDatabase>> {
        self.dbs.get(&color)
    }

    pub fn meta(&self) -> DeploymentMeta {
        DeploymentMeta {
            view: self.view.clone(),
            sizes: self.dbs.iter().map(|(c, d)| (c.get(), d.size())).collect(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AppState {
    pub deployment: Option<Arc<Deployment>>,
}

impl AppState {
    pub fn with_deployment(d: Deployment) -> Self {
        AppState {
            deployment: Some(Arc::new(d)),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        ApiError {
            status,
            message: message.to_string(),
        }
    }

    fn bad(e: impl ToString) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorBody {
                error: self.message,
            }),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/feasible", post(feasible))
        .route("/v1/balanced/{h}", get(balanced))
        .route("/v1/split", post(split))
        .route("/v1/color", post(color))
        .route("/v1/subindex", post(subindex))
        .route("/v1/cost/{scheme}/{h}", get(cost))
        .route("/v1/pir/meta", get(meta))
        .route("/v1/pir/{color}/xor", post(pir_xor))
        .route("/v1/pir/{color}/plain", post(pir_plain))
        .with_state(state)
}

/// Serves `router(state)` until the listener fails.
pub async fn serve_http(listener: TcpListener, state: AppState) -> io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn health(State(st): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        deployment: st.deployment.is_some(),
    })
}

async fn feasible(Json(req): Json<SequenceRequest>) -> ApiResult<FeasibleResponse> {
    let seq = req.sequence.resolve().map_err(ApiError::bad)?;
    let violation = seq.check_feasible().err().map(|e| e.to_string());
    Ok(Json(FeasibleResponse {
        feasible: violation.is_none(),
        violation,
    }))
}

async fn balanced(Path(h): Path<u32>) -> ApiResult<ColorSequence> {
    balanced_sequence(h).map(Json).map_err(ApiError::bad)
}

async fn split(Json(req): Json<SequenceRequest>) -> ApiResult<FeasibleSplit> {
    let seq = req.sequence.resolve().map_err(ApiError::bad)?;
    feasible_split(&seq).map(Json).map_err(ApiError::bad)
}

async fn color(Json(req): Json<ColorRequest>) -> Result<Response, ApiError> {
    let seq = match (req.sequence, req.h) {
        (Some(s), _) => s.resolve().map_err(ApiError::bad)?,
        (None, Some(h)) => balanced_sequence(h).map_err(ApiError::bad)?,
        (None, None) => return Err(ApiError::bad("give a sequence or a height")),
    };
    if seq.dimension() > MAX_HTTP_COLOR_HEIGHT as usize {
        return Err(ApiError::bad(format!(
            "height {} above {MAX_HTTP_COLOR_HEIGHT}",
            seq.dimension()
        )));
    }
    let opts = CsaOptions {
        parallel: req.parallel,
    };
    let body = blocking(move || {
        color_splitting_with(&seq, opts)
            .map(|c| coloring_to_json(&c))
            .map_err(ApiError::bad)
    })
    .await??;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn subindex(Json(req): Json<SubIndexRequest>) -> ApiResult<PathIndices> {
    let seq = match req.sequence {
        Some(s) => s.resolve().map_err(ApiError::bad)?,
        None => balanced_sequence(req.h).map_err(ApiError::bad)?,
    };
    find_sub_indices(req.h, req.leaf, &seq)
        .map(Json)
        .map_err(ApiError::bad)
}

async fn cost(Path((scheme, h)): Path<(String, u32)>) -> ApiResult<SchemeCost> {
    let scheme: Scheme = scheme
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::NOT_FOUND, e))?;
    if h == 0 || h > 62 {
        return Err(ApiError::bad(format!("height {h} outside 1..=62")));
    }
    Ok(Json(scheme_cost(scheme, h)))
}

fn deployment(st: &AppState) -> Result<&Arc<Deployment>, ApiError> {
    st.deployment
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no deployment loaded"))
}

async fn meta(State(st): State<AppState>) -> ApiResult<DeploymentMeta> {
    Ok(Json(deployment(&st)?.meta()))
}

fn sub_db(st: &AppState, color: u16) -> Result<Arc<SubDatabase>, ApiError> {
    deployment(st)?
        .database(ColorId(color))
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no color {color}")))
}

async fn pir_xor(
    State(st): State<AppState>,
    Path(color): Path<u16>,
    Json(ind): Json<Indicator>,
) -> ApiResult<PirAnswer> {
    let db = sub_db(&st, color)?;
    blocking(move || pir::xor2_answer(&db, &ind).map(Json).map_err(ApiError::bad)).await?
}

async fn pir_plain(
    State(st): State<AppState>,
    Path(color): Path<u16>,
    Json(req): Json<PlainRequest>,
) -> ApiResult<PirAnswer> {
    let db = sub_db(&st, color)?;
    pir::plaintext_answer(&db, req.target)
        .map(Json)
        .map_err(ApiError::bad)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> T + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))
}

/// Answers binary-protocol requests against `db` until the listener fails.
pub async fn serve_tcp_replica(listener: TcpListener, db: Arc<SubDatabase>) -> io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let db = db.clone();
        tokio::spawn(async move {
            if let Err(e) = handle_tcp(stream, &db).await {
                tracing::debug!(%peer, color = db.color.get(), "closing connection: {e}");
            }
        });
    }
}

async fn handle_tcp(mut stream: TcpStream, db: &Arc<SubDatabase>) -> io::Result<()> {
    loop {
        let mut head = [0u8; 5];
        match stream.read_exact(&mut head[..1]).await {
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(()),
            other => other?,
        };
        stream.read_exact(&mut head[1..]).await?;
        let (op, len) = wire::parse_header(head);
        let need = wire::payload_len(op, len)?;
        if need as u64 > db.size().div_ceil(8) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "indicator longer than the database",
            ));
        }
        let mut payload = vec![0; need];
        stream.read_exact(&mut payload).await?;
        let req = wire::decode_request(op, len, payload)?;
        let db = db.clone();
        let got = tokio::task::spawn_blocking(move || pir::answer(&db, &req))
            .await
            .map_err(io::Error::other)?;
        let ans = got.map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        stream.write_all(&ans.digest.0).await?;
    }
}

/// Binds one TCP replica per color at the ports given by
/// [`wire::port_for`] and serves them in the background.
pub async fn spawn_tcp_replicas(
    dep: &Deployment,
    host: &str,
    base: u16,
    replica: usize,
) -> io::Result<Vec<(ColorId, SocketAddr, JoinHandle<io::Result<()>>)>> {
    let h = dep.view.height;
    let mut out = Vec::new();
    for (&color, db) in &dep.dbs {
        let port = wire::port_for(base, h, color.get(), replica).ok_or_else(|| {
            io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("port for color {color} overflows"),
            )
        })?;
        let listener = TcpListener::bind((host, port)).await?;
        let addr = listener.local_addr()?;
        out.push((
            color,
            addr,
            tokio::spawn(serve_tcp_replica(listener, db.clone())),
        ));
    }
    Ok(out)
}
