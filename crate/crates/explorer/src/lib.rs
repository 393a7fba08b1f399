//! Read-only HTTP API over one unigraph snapshot.
//!
//! | route | answer |
//! |---|---|
//! | `GET /unigraph?layer=S\|F\|I&source=<persona>` | filtered nodes and the edges among them |
//! | `GET /node/{id}` | full node record |
//! | `GET /node/{id}/neighborhood?page=<n>` | incident edges, 50 per page, pages from 0 |
//! | `GET /stats` | node totals, merge rates, DP settings |
//! | `GET /sources` | per-persona unique node counts |
//! | `POST /sample` | walk parameters in, sampled graph out |
//!
//! The snapshot never changes while serving; `/sample` is a pure function of its body.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};

use synonymix_core::embed::{Embedder, TokenHashEmbedder};
use synonymix_core::graph::{EdgeKind, EntitySpan, GenericSlot, LoadError, Node, NodeId, NodeKind, PersonaId};
use synonymix_core::sampler::{franken_json, msc, render_narrative, thematic_walk, WalkError, WalkParams};
use synonymix_core::unify::{load_unigraph, merge_stats, DpMeta, MergeStats, Unigraph};

pub const PAGE_SIZE: usize = 50;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorerConfig {
    /// Origins allowed by CORS; empty allows any origin.
    #[serde(default)]
    pub cors_origins: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid unigraph: {0}")]
    Load(#[from] LoadError),
    #[error("invalid CORS origin {0:?}")]
    Origin(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server failed: {0}")]
    Io(std::io::Error),
}

/// Immutable state shared by all requests.
pub struct Snapshot {
    unigraph: Unigraph,
    stats: MergeStats,
    /// Edge indices incident to each node.
    incident: BTreeMap<NodeId, Vec<usize>>,
    embedder: Box<dyn Embedder>,
}

impl Snapshot {
    pub fn new(unigraph: Unigraph) -> Self {
        Snapshot::with_embedder(unigraph, Box::new(TokenHashEmbedder::default()))
    }

    pub fn with_embedder(unigraph: Unigraph, embedder: Box<dyn Embedder>) -> Self {
        let mut incident: BTreeMap<NodeId, Vec<usize>> =
            unigraph.nodes.keys().map(|id| (id.clone(), Vec::new())).collect();
        for (i, e) in unigraph.edges.iter().enumerate() {
            incident.entry(e.src.clone()).or_default().push(i);
            if e.dst != e.src {
                incident.entry(e.dst.clone()).or_default().push(i);
            }
        }
        let stats = merge_stats(&unigraph);
        Snapshot { unigraph, stats, incident, embedder }
    }

    pub fn unigraph(&self) -> &Unigraph {
        &self.unigraph
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeSummary {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: String,
    pub provenance: Vec<PersonaId>,
    pub merged: bool,
}

impl NodeSummary {
    fn of(n: &Node) -> Self {
        NodeSummary {
            id: n.id.clone(),
            kind: n.kind,
            label: n.label.clone(),
            provenance: n.provenance.iter().cloned().collect(),
            merged: n.provenance.len() > 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeDetail {
    #[serde(flatten)]
    pub summary: NodeSummary,
    pub quotes: Vec<String>,
    pub entity_spans: Vec<EntitySpan>,
    pub slots: Vec<GenericSlot>,
    pub connection_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeView {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    pub label: String,
    pub provenance: Vec<PersonaId>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Neighbor {
    pub node: NodeSummary,
    pub edge_kind: EdgeKind,
    pub edge_label: String,
    /// `out` when the center is the edge source.
    pub direction: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct NeighborhoodView {
    pub center: NodeDetail,
    pub neighbors: Vec<Neighbor>,
    pub connection_count: usize,
    pub page: usize,
    pub page_size: usize,
    pub pages: usize,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn not_found(id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("no node {id}"))
}

type Shared = State<Arc<Snapshot>>;

#[derive(Deserialize)]
struct GraphQuery {
    layer: Option<String>,
    source: Option<String>,
}

async fn unigraph_view(State(s): Shared, Query(q): Query<GraphQuery>) -> Result<Json<Value>, ApiError> {
    let layer = match q.layer.as_deref() {
        None => None,
        Some(code) => Some(
            NodeKind::from_code(code)
                .ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, format!("unknown layer {code:?}; use S, F or I")))?,
        ),
    };
    let source = q.source.map(PersonaId::from);
    if let Some(p) = &source {
        if !s.unigraph.sources.contains(p) {
            return Err(ApiError(StatusCode::NOT_FOUND, format!("no source {p}")));
        }
    }
    let nodes: Vec<NodeSummary> = s
        .unigraph
        .nodes
        .values()
        .filter(|n| layer.is_none_or(|k| n.kind == k))
        .filter(|n| source.as_ref().is_none_or(|p| n.provenance.contains(p)))
        .map(NodeSummary::of)
        .collect();
    let kept: std::collections::BTreeSet<&NodeId> = nodes.iter().map(|n| &n.id).collect();
    let edges: Vec<EdgeView> = s
        .unigraph
        .edges
        .iter()
        .filter(|e| kept.contains(&e.src) && kept.contains(&e.dst))
        .map(|e| EdgeView {
            src: e.src.clone(),
            dst: e.dst.clone(),
            kind: e.kind,
            label: e.label.clone(),
            provenance: e.provenance.iter().cloned().collect(),
        })
        .collect();
    Ok(Json(json!({ "nodes": nodes, "edges": edges })))
}

fn detail(s: &Snapshot, id: &str) -> Result<NodeDetail, ApiError> {
    let node = s.unigraph.nodes.get(&NodeId::from(id)).ok_or_else(|| not_found(id))?;
    Ok(NodeDetail {
        summary: NodeSummary::of(node),
        quotes: node.quotes.clone(),
        entity_spans: node.entity_spans.clone(),
        slots: node.slots.clone(),
        connection_count: s.incident[&node.id].len(),
    })
}

async fn node_view(State(s): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<NodeDetail>, ApiError> {
    detail(&s, &id).map(Json)
}

#[derive(Deserialize)]
struct PageQuery {
    #[serde(default)]
    page: usize,
}

async fn neighborhood(
    State(s): Shared,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PageQuery>,
) -> Result<Json<NeighborhoodView>, ApiError> {
    let center = detail(&s, &id)?;
    let mut all: Vec<Neighbor> = s.incident[&center.summary.id]
        .iter()
        .map(|&i| {
            let e = &s.unigraph.edges[i];
            let (other, direction) = if e.src == center.summary.id { (&e.dst, "out") } else { (&e.src, "in") };
            Neighbor {
                node: NodeSummary::of(&s.unigraph.nodes[other]),
                edge_kind: e.kind,
                edge_label: e.label.clone(),
                direction,
            }
        })
        .collect();
    all.sort_by(|a, b| {
        (&a.node.id, a.edge_kind, &a.edge_label, a.direction).cmp(&(&b.node.id, b.edge_kind, &b.edge_label, b.direction))
    });
    let total = all.len();
    let pages = total.div_ceil(PAGE_SIZE).max(1);
    if q.page >= pages {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("page {} out of range (0..{pages})", q.page)));
    }
    let neighbors = all.into_iter().skip(q.page * PAGE_SIZE).take(PAGE_SIZE).collect();
    Ok(Json(NeighborhoodView { center, neighbors, connection_count: total, page: q.page, page_size: PAGE_SIZE, pages }))
}

#[derive(Serialize)]
struct StatsView<'a> {
    total: usize,
    s: usize,
    f: usize,
    i: usize,
    merged: BTreeMap<&'static str, usize>,
    merge_rates: BTreeMap<&'static str, f64>,
    sources: usize,
    dropped_precedes: usize,
    dp: &'a DpMeta,
    summary: String,
}

async fn stats(State(s): Shared) -> Json<Value> {
    let st = &s.stats;
    let layers = [("s", &st.subject), ("f", &st.factual), ("i", &st.interpretive), ("overall", &st.overall)];
    let view = StatsView {
        total: st.overall.total,
        s: st.subject.total,
        f: st.factual.total,
        i: st.interpretive.total,
        merged: layers.iter().map(|(k, v)| (*k, v.merged)).collect(),
        merge_rates: layers.iter().map(|(k, v)| (*k, v.rounded_rate())).collect(),
        sources: s.unigraph.source_count(),
        dropped_precedes: s.unigraph.dropped_precedes,
        dp: &s.unigraph.dp_meta,
        summary: st.to_string(),
    };
    Json(serde_json::to_value(view).expect("stats serialize"))
}

async fn sources(State(s): Shared) -> Json<Value> {
    let mut totals: BTreeMap<&PersonaId, usize> = BTreeMap::new();
    for n in s.unigraph.nodes.values() {
        for p in &n.provenance {
            *totals.entry(p).or_default() += 1;
        }
    }
    let rows: Vec<Value> = s
        .unigraph
        .unique_counts()
        .into_iter()
        .map(|(p, unique)| {
            let total = totals.get(&p).copied().unwrap_or(0);
            json!({ "persona_id": p, "unique_nodes": unique, "total_nodes": total })
        })
        .collect();
    Json(json!({ "sources": rows, "merged_nodes": s.stats.overall.merged }))
}

async fn sample(State(s): Shared, Json(params): Json<WalkParams>) -> Result<Json<Value>, ApiError> {
    let f = thematic_walk(&s.unigraph, &params, s.embedder.as_ref()).map_err(|e| {
        let status = match e {
            WalkError::AnchorNotFound(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError(status, e.to_string())
    })?;
    let mut body = franken_json(&f);
    let entry = msc(&f).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    body["msc"] = serde_json::to_value(entry).expect("msc serializes");
    body["narrative"] = Value::String(render_narrative(&f));
    Ok(Json(body))
}

fn cors(config: &ExplorerConfig) -> Result<CorsLayer, ServeError> {
    let layer = CorsLayer::new().allow_methods(tower_http::cors::Any).allow_headers(tower_http::cors::Any);
    if config.cors_origins.is_empty() {
        return Ok(layer.allow_origin(tower_http::cors::Any));
    }
    let origins = config
        .cors_origins
        .iter()
        .map(|o| HeaderValue::from_str(o).map_err(|_| ServeError::Origin(o.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(layer.allow_origin(AllowOrigin::list(origins)))
}

pub fn router(snapshot: Arc<Snapshot>, config: &ExplorerConfig) -> Result<Router, ServeError> {
    Ok(Router::new()
        .route("/unigraph", get(unigraph_view))
        .route("/node/{id}", get(node_view))
        .route("/node/{id}/neighborhood", get(neighborhood))
        .route("/stats", get(stats))
        .route("/sources", get(sources))
        .route("/sample", post(sample))
        .layer(cors(config)?)
        .with_state(snapshot))
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot, ServeError> {
    let bytes = std::fs::read(path).map_err(|source| ServeError::Read { path: path.display().to_string(), source })?;
    Ok(Snapshot::new(load_unigraph(&bytes)?))
}

/// Loads the unigraph file and serves it until the process stops.
pub async fn serve(path: &Path, addr: SocketAddr, config: &ExplorerConfig) -> Result<(), ServeError> {
    let app = router(Arc::new(load_snapshot(path)?), config)?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| ServeError::Bind { addr, source })?;
    axum::serve(listener, app).await.map_err(ServeError::Io)
}
