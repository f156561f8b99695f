use std::path::PathBuf;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use kgchain_core::chain::{
    analyze_chain, create_chain, match_chain, preview_entities, set_entities, upset_slice, ChainMatchReport,
    ChainStatus, HypothesisChain, HypothesisSet, PositionSpec, Preview, DEFAULT_PREVIEW_K,
};
use kgchain_core::gateway::{
    assemble_kg_context, assemble_vector_context, Bindings, ChainAnalysis, ChatTurn, HistoryEntry, Mode, TemplateName,
};
use kgchain_core::graph::{AppendOutcome, KnowledgeGraph, Triplet};
use kgchain_core::layout::{
    build_layers, compute_stacked, lasso_select, OneHopMode, Point, StackOptions, StackedLayout, TreemapOptions,
};
use kgchain_core::metrics::{evaluate, parse_ranked_lists, Metric, MetricReport, RankedList, DEFAULT_CUTOFF};
use kgchain_core::predictions::{
    sort_rows, FilteredRow, Hop, PredictionFilter, PredictionRecord, PredictionStore, SortKey, SortOrder, DEFAULT_TOP_N,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataset::{DatasetData, DatasetDescriptor, DatasetFiles};
use crate::error::ApiError;
use crate::session::{Selection, SessionEvent, SessionState};
use crate::state::{AppState, DatasetSlot};
use crate::ENDPOINTS;

type ApiResult = Result<Response, ApiError>;

/// Wire form of every successful response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub dataset: Option<String>,
    pub revision: u64,
    pub data: T,
}

fn reply<T: Serialize>(status: StatusCode, dataset: Option<&str>, revision: u64, data: T) -> ApiResult {
    let env = Envelope {
        dataset: dataset.map(str::to_owned),
        revision,
        data,
    };
    Ok((status, Json(env)).into_response())
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let text = if body.is_empty() { &b"{}"[..] } else { body };
    serde_json::from_slice(text).map_err(|e| {
        ApiError::invalid(format!("malformed request body: {e}"))
            .with_detail(json!({ "line": e.line(), "column": e.column() }))
    })
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v)
        .map_err(|e| ApiError::invalid(format!("malformed query string: {}", e.body_text())))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

fn loaded(guard: &Option<DatasetData>) -> Result<&DatasetData, ApiError> {
    guard
        .as_ref()
        .ok_or_else(|| ApiError::internal("ready dataset has no data"))
}

/// Applies and logs a session event, then advances the revision.
async fn record(state: &AppState, session: &mut SessionState, event: SessionEvent) -> Result<u64, ApiError> {
    state.record(session, event).await?;
    Ok(state.bump())
}

pub async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

#[derive(Serialize)]
struct EndpointInfo {
    method: &'static str,
    path: &'static str,
    summary: &'static str,
}

pub async fn endpoints(State(state): State<AppState>) -> ApiResult {
    let list: Vec<EndpointInfo> = ENDPOINTS
        .iter()
        .map(|&(method, path, summary)| EndpointInfo { method, path, summary })
        .collect();
    reply(StatusCode::OK, None, state.revision(), list)
}

// ---- datasets ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterRequest {
    id: String,
    entities: PathBuf,
    triplets: PathBuf,
    #[serde(default)]
    predictions: Option<PathBuf>,
    #[serde(default)]
    embedding: Option<PathBuf>,
}

pub async fn register_dataset(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: RegisterRequest = parse(&body)?;
    let files = DatasetFiles {
        entities: req.entities,
        triplets: req.triplets,
        predictions: req.predictions,
        embedding: req.embedding,
    };
    let (d, created) = state.register(&req.id, files).await?;
    let (status, rev) = if created {
        (StatusCode::ACCEPTED, state.bump())
    } else {
        (StatusCode::OK, state.revision())
    };
    let id = d.id.clone();
    reply(status, Some(&id), rev, d)
}

pub async fn list_datasets(State(state): State<AppState>) -> ApiResult {
    reply(StatusCode::OK, None, state.revision(), state.datasets())
}

pub async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let d: DatasetDescriptor = state.slot(&id)?.descriptor();
    reply(StatusCode::OK, Some(&id), state.revision(), d)
}

// ---- predictions ----

/// One prediction as shown in the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: usize,
    pub display_rank: usize,
    pub rank: u32,
    pub score: f64,
    pub head: String,
    pub head_name: String,
    pub tail: String,
    pub tail_name: String,
    pub tail_category: String,
    pub path: [Hop; 3],
    pub starred: bool,
}

fn name(g: &KnowledgeGraph, id: &str) -> String {
    g.entity(id).map(|e| e.name.clone()).unwrap_or_default()
}

fn to_row(r: &FilteredRow<'_>, store: &PredictionStore, g: &KnowledgeGraph) -> Row {
    let rec = r.record;
    Row {
        id: rec.id,
        display_rank: r.display_rank,
        rank: rec.rank,
        score: rec.score,
        head: rec.head.clone(),
        head_name: name(g, &rec.head),
        tail: rec.tail.clone(),
        tail_name: name(g, &rec.tail),
        tail_category: store.tail_category(rec.id).to_owned(),
        path: rec.path.clone(),
        starred: r.starred,
    }
}

fn record_row(rec: &PredictionRecord, display_rank: usize, data: &DatasetData) -> Row {
    let row = FilteredRow {
        record: rec,
        display_rank,
        starred: data.store.is_starred(rec.id),
    };
    to_row(&row, &data.store, &data.graph)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowPage {
    /// Rows matching before `n`/`limit` truncation.
    pub total: usize,
    pub rows: Vec<Row>,
}

#[derive(Deserialize)]
pub struct SearchParams {
    dataset: Option<String>,
    head: Option<String>,
    category: Option<String>,
    n: Option<usize>,
}

pub async fn search(State(state): State<AppState>, q: Result<Query<SearchParams>, QueryRejection>) -> ApiResult {
    let p = query(q)?;
    let n = p.n.unwrap_or(DEFAULT_TOP_N);
    if n == 0 {
        return Err(ApiError::invalid("n must be at least 1"));
    }
    let dataset = state.default_dataset(p.dataset.as_deref())?;
    let slot = state.ready(&dataset)?;
    let guard = slot.data.read().await;
    let data = loaded(&guard)?;
    let head = match &p.head {
        Some(h) => {
            let id = data.graph.resolve_ref(h)?.id.clone();
            data.store.top_tails(&id, 1)?;
            Some(id)
        }
        None => None,
    };
    let filter = PredictionFilter {
        head,
        category: p.category.clone(),
        ..Default::default()
    };
    let rows = data.store.filter_and_rerank(&filter, &data.graph)?;
    let page = RowPage {
        total: rows.len(),
        rows: rows
            .iter()
            .take(n)
            .map(|r| to_row(r, &data.store, &data.graph))
            .collect(),
    };
    reply(StatusCode::OK, Some(&dataset), state.revision(), page)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SortSpec {
    #[serde(flatten)]
    key: SortKey,
    #[serde(default)]
    order: SortOrder,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterRequest {
    dataset: Option<String>,
    #[serde(default)]
    filter: PredictionFilter,
    sort: Option<SortSpec>,
    limit: Option<usize>,
}

pub async fn filter_predictions(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: FilterRequest = parse(&body)?;
    let dataset = state.default_dataset(req.dataset.as_deref())?;
    let slot = state.ready(&dataset)?;
    let guard = slot.data.read().await;
    let data = loaded(&guard)?;
    let mut rows = data.store.filter_and_rerank(&req.filter, &data.graph)?;
    if let Some(s) = &req.sort {
        sort_rows(&mut rows, s.key, s.order)?;
    }
    let page = RowPage {
        total: rows.len(),
        rows: rows
            .iter()
            .take(req.limit.unwrap_or(usize::MAX))
            .map(|r| to_row(r, &data.store, &data.graph))
            .collect(),
    };
    reply(StatusCode::OK, Some(&dataset), state.revision(), page)
}

#[derive(Serialize)]
struct PredictionDetail {
    row: Row,
    /// Source line, byte for byte.
    raw: String,
}

pub async fn get_prediction(State(state): State<AppState>, Path((dataset, id)): Path<(String, String)>) -> ApiResult {
    let id: usize = id.parse().map_err(|_| ApiError::not_found("record", &id))?;
    let slot = state.ready(&dataset)?;
    let guard = slot.data.read().await;
    let data = loaded(&guard)?;
    let rec = data.store.record(id)?;
    let detail = PredictionDetail {
        row: record_row(rec, rec.rank as usize, data),
        raw: data.store.raw_line(id)?.to_owned(),
    };
    reply(StatusCode::OK, Some(&dataset), state.revision(), detail)
}

// ---- embedding ----

#[derive(Serialize)]
struct EmbeddedEntity {
    entity_id: String,
    name: String,
    category: String,
    x: f64,
    y: f64,
}

pub async fn get_embedding(State(state): State<AppState>, Path(dataset): Path<String>) -> ApiResult {
    let slot = state.ready(&dataset)?;
    let guard = slot.data.read().await;
    let data = loaded(&guard)?;
    let points: Vec<EmbeddedEntity> = data
        .embedding
        .iter()
        .map(|p| {
            let e = data.graph.entity(&p.entity_id);
            EmbeddedEntity {
                entity_id: p.entity_id.clone(),
                name: e.map(|e| e.name.clone()).unwrap_or_default(),
                category: e.map(|e| e.category.clone()).unwrap_or_default(),
                x: p.x,
                y: p.y,
            }
        })
        .collect();
    reply(StatusCode::OK, Some(&dataset), state.revision(), points)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LassoRequest {
    dataset: Option<String>,
    polygon: Vec<Point>,
    /// Records the selection in this session's log.
    session_id: Option<String>,
}

pub async fn lasso(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: LassoRequest = parse(&body)?;
    let mut session = match &req.session_id {
        Some(id) => Some(state.lock_session(id).await?),
        None => None,
    };
    let dataset = match &session {
        Some(s) => s.dataset.clone(),
        None => state.default_dataset(req.dataset.as_deref())?,
    };
    let selected = {
        let slot = state.ready(&dataset)?;
        let guard = slot.data.read().await;
        lasso_select(&loaded(&guard)?.embedding, &req.polygon)?
    };
    let selection = Selection {
        polygon: req.polygon,
        entity_ids: selected,
    };
    let rev = match session.as_deref_mut() {
        Some(s) => {
            record(
                &state,
                s,
                SessionEvent::Lasso {
                    selection: selection.clone(),
                },
            )
            .await?
        }
        None => state.revision(),
    };
    reply(StatusCode::OK, Some(&dataset), rev, selection)
}

// ---- sessions ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRequest {
    dataset: Option<String>,
}

pub async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: SessionRequest = parse(&body)?;
    let dataset = state.default_dataset(req.dataset.as_deref())?;
    let session = state.create_session(&dataset).await?;
    let rev = state.bump();
    reply(StatusCode::CREATED, Some(&dataset), rev, session)
}

pub async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let s = state.lock_session(&id).await?;
    reply(StatusCode::OK, Some(&s.dataset), state.revision(), &*s)
}

// ---- chains ----

fn chain_session(chain_id: &str) -> Result<&str, ApiError> {
    chain_id
        .split_once("-c")
        .map(|(s, _)| s)
        .ok_or_else(|| ApiError::not_found("chain", chain_id))
}

fn chain_of<'s>(s: &'s SessionState, chain_id: &str) -> Result<&'s HypothesisChain, ApiError> {
    s.chains
        .get(chain_id)
        .ok_or_else(|| ApiError::not_found("chain", chain_id))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PositionInput {
    description: String,
    #[serde(default)]
    relation: String,
    #[serde(default)]
    relation_labels: Vec<String>,
    /// Entity ids or names.
    #[serde(default)]
    entities: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateChainRequest {
    session_id: String,
    positions: Vec<PositionInput>,
}

pub async fn create_chain_h(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: CreateChainRequest = parse(&body)?;
    let mut s = state.lock_session(&req.session_id).await?;
    let specs: Vec<PositionSpec> = req
        .positions
        .iter()
        .map(|p| PositionSpec {
            description: p.description.clone(),
            relation: p.relation.clone(),
            relation_labels: p.relation_labels.clone(),
        })
        .collect();
    let mut chain = create_chain(s.next_chain_id(), specs)?;
    {
        let slot = state.ready(&s.dataset)?;
        let guard = slot.data.read().await;
        let g = &loaded(&guard)?.graph;
        for (i, p) in req.positions.iter().enumerate() {
            if !p.entities.is_empty() {
                set_entities(&mut chain, i, &p.entities, g)?;
            }
        }
    }
    let rev = record(&state, &mut s, SessionEvent::ChainSaved { chain: chain.clone() }).await?;
    reply(StatusCode::CREATED, Some(&s.dataset), rev, chain)
}

pub async fn get_chain(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let s = state.lock_session(chain_session(&id)?).await?;
    reply(StatusCode::OK, Some(&s.dataset), state.revision(), chain_of(&s, &id)?)
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct PositionEdit {
    description: Option<String>,
    relation: Option<String>,
    relation_labels: Option<Vec<String>>,
    entities: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EditChainRequest {
    positions: Vec<PositionEdit>,
}

pub async fn put_chain(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: EditChainRequest = parse(&body)?;
    if req.positions.len() != 3 {
        return Err(kgchain_core::chain::ChainError::Arity(req.positions.len()).into());
    }
    let mut s = state.lock_session(chain_session(&id)?).await?;
    let mut chain = chain_of(&s, &id)?.clone();
    {
        let slot = state.ready(&s.dataset)?;
        let guard = slot.data.read().await;
        let g = &loaded(&guard)?.graph;
        for (i, edit) in req.positions.into_iter().enumerate() {
            let node = &mut chain.positions[i];
            if let Some(d) = edit.description {
                if d.trim().is_empty() {
                    return Err(kgchain_core::chain::ChainError::EmptyDescription(i).into());
                }
                node.description = d;
            }
            if let Some(r) = edit.relation {
                node.relation = r;
            }
            if let Some(l) = edit.relation_labels {
                node.relation_labels = l;
            }
            if let Some(refs) = edit.entities {
                if refs.is_empty() {
                    chain.positions[i].entities.clear();
                } else {
                    set_entities(&mut chain, i, &refs, g)?;
                }
            }
        }
    }
    chain.status = ChainStatus::Draft;
    let rev = record(&state, &mut s, SessionEvent::ChainSaved { chain: chain.clone() }).await?;
    reply(StatusCode::OK, Some(&s.dataset), rev, chain)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PreviewRequest {
    /// 0-based hypothesis position.
    position: usize,
    k: Option<usize>,
    #[serde(default)]
    mode: Mode,
}

#[derive(Serialize)]
struct PreviewReply {
    preview: Preview,
    chain: HypothesisChain,
}

pub async fn preview(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: PreviewRequest = parse(&body)?;
    let mut s = state.lock_session(chain_session(&id)?).await?;
    let mut chain = chain_of(&s, &id)?.clone();
    let slot = state.ready(&s.dataset)?;
    let gateway = state.gateway();
    let (chain, preview) = blocking(move || {
        let guard = slot.data.blocking_read();
        let data = loaded(&guard)?;
        let k = req.k.unwrap_or(DEFAULT_PREVIEW_K);
        let p = preview_entities(&mut chain, req.position, k, &gateway, &data.graph, req.mode)?;
        Ok::<_, ApiError>((chain, p))
    })
    .await??;
    let rev = record(&state, &mut s, SessionEvent::ChainSaved { chain: chain.clone() }).await?;
    reply(StatusCode::OK, Some(&s.dataset), rev, PreviewReply { preview, chain })
}

/// Re-marks stars from a report; returns the number starred.
async fn mark_stars(state: &AppState, slot: &DatasetSlot, report: &ChainMatchReport) -> Result<usize, ApiError> {
    let mut guard = slot.data.write().await;
    let data = guard
        .as_mut()
        .ok_or_else(|| ApiError::internal("ready dataset has no data"))?;
    Ok(data.store.mark_alignment(report, state.config().star_policy)?)
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct AnalyzeRequest {
    #[serde(default)]
    mode: Mode,
}

#[derive(Serialize)]
struct AnalyzeReply {
    analysis: ChainAnalysis,
    chain: HypothesisChain,
    /// Records starred after the analysis; absent while a position is unresolved.
    starred: Option<usize>,
}

pub async fn analyze(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: AnalyzeRequest = parse(&body)?;
    let mut s = state.lock_session(chain_session(&id)?).await?;
    let mut chain = chain_of(&s, &id)?.clone();
    let gateway = state.gateway();
    let (chain, analysis) = blocking(move || {
        let a = analyze_chain(&mut chain, &gateway, "", req.mode)?;
        Ok::<_, ApiError>((chain, a))
    })
    .await??;
    let rev = record(&state, &mut s, SessionEvent::ChainSaved { chain: chain.clone() }).await?;
    let slot = state.ready(&s.dataset)?;
    let starred = if chain.is_resolved() {
        let report = {
            let guard = slot.data.read().await;
            let data = loaded(&guard)?;
            match_chain(&chain, &data.store, &data.graph)?
        };
        Some(mark_stars(&state, &slot, &report).await?)
    } else {
        None
    };
    reply(
        StatusCode::OK,
        Some(&s.dataset),
        rev,
        AnalyzeReply {
            analysis,
            chain,
            starred,
        },
    )
}

#[derive(Serialize)]
struct RetrieveReply<'a> {
    report: &'a ChainMatchReport,
    chain: &'a HypothesisChain,
    starred: usize,
}

pub async fn retrieve(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let mut s = state.lock_session(chain_session(&id)?).await?;
    chain_of(&s, &id)?;
    let rev = record(&state, &mut s, SessionEvent::ChainRetrieved { chain_id: id.clone() }).await?;
    let report = s
        .reports
        .get(&id)
        .ok_or_else(|| ApiError::internal("report missing after retrieve"))?;
    let slot = state.ready(&s.dataset)?;
    let starred = mark_stars(&state, &slot, report).await?;
    let out = RetrieveReply {
        report,
        chain: chain_of(&s, &id)?,
        starred,
    };
    reply(StatusCode::OK, Some(&s.dataset), rev, out)
}

#[derive(Deserialize)]
pub struct UpsetParams {
    subset: String,
    exclusive: Option<bool>,
}

#[derive(Serialize)]
struct UpsetReply {
    subset: HypothesisSet,
    label: String,
    mask: String,
    exclusive: bool,
    count: usize,
    rows: Vec<Row>,
}

pub async fn upset(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<UpsetParams>, QueryRejection>,
) -> ApiResult {
    let p = query(q)?;
    let subset: HypothesisSet = p.subset.parse()?;
    let exclusive = p.exclusive.unwrap_or(true);
    let s = state.lock_session(chain_session(&id)?).await?;
    chain_of(&s, &id)?;
    let report = s
        .reports
        .get(&id)
        .ok_or_else(|| ApiError::conflict("not_retrieved", format!("chain {id:?} has not been retrieved")))?;
    let ids = upset_slice(report, subset, exclusive)?;
    let slot = state.ready(&s.dataset)?;
    let guard = slot.data.read().await;
    let data = loaded(&guard)?;
    let mut rows = Vec::with_capacity(ids.len());
    for (k, &i) in ids.iter().enumerate() {
        rows.push(record_row(data.store.record(i)?, k + 1, data));
    }
    let out = UpsetReply {
        subset,
        label: subset.label(),
        mask: subset.mask_string(),
        exclusive,
        count: ids.len(),
        rows,
    };
    reply(StatusCode::OK, Some(&s.dataset), state.revision(), out)
}

// ---- layout ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutRequest {
    dataset: Option<String>,
    record_id: usize,
    chain_id: Option<String>,
    #[serde(default)]
    one_hop: OneHopMode,
    width: Option<f64>,
    layer_height: Option<f64>,
    gutter: Option<f64>,
    seed: Option<u64>,
    max_iterations: Option<usize>,
}

pub async fn layout(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: LayoutRequest = parse(&body)?;
    let (chain, dataset) = match &req.chain_id {
        Some(cid) => {
            let s = state.lock_session(chain_session(cid)?).await?;
            (Some(chain_of(&s, cid)?.clone()), s.dataset.clone())
        }
        None => (None, state.default_dataset(req.dataset.as_deref())?),
    };
    let defaults = StackOptions::default();
    let opts = StackOptions {
        width: req.width.unwrap_or(defaults.width),
        layer_height: req.layer_height.unwrap_or(defaults.layer_height),
        gutter: req.gutter.unwrap_or(defaults.gutter),
        seed: req.seed.unwrap_or(defaults.seed),
        treemap: TreemapOptions {
            max_iterations: req.max_iterations.unwrap_or(defaults.treemap.max_iterations),
            ..defaults.treemap
        },
    };
    let slot = state.ready(&dataset)?;
    let out: StackedLayout = blocking(move || {
        let guard = slot.data.blocking_read();
        let data = loaded(&guard)?;
        let rec = data.store.record(req.record_id)?;
        let layers = build_layers(rec, chain.as_ref(), &data.graph, req.one_hop)?;
        Ok::<_, ApiError>(compute_stacked(&layers, &data.graph, opts)?)
    })
    .await??;
    reply(StatusCode::OK, Some(&dataset), state.revision(), out)
}

// ---- chat ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatRequest {
    session_id: String,
    query: String,
    #[serde(default)]
    mode: Mode,
    template: Option<TemplateName>,
    #[serde(default)]
    bindings: Bindings,
    /// Prediction whose path fills `{selected_interpretable_path}`.
    record_id: Option<usize>,
    timeout_ms: Option<u64>,
}

/// Chat context sizes used when the server assembles the bindings itself.
const CHAT_CONTEXT_HOPS: usize = 1;
const CHAT_CONTEXT_TRIPLETS: usize = 100;
const CHAT_VECTOR_TOP_K: usize = 5;

fn describe_path(rec: &PredictionRecord, g: &KnowledgeGraph) -> String {
    let mut out = name(g, &rec.head);
    for hop in &rec.path {
        out.push_str(&format!(" —{}→ {}", hop.relation, name(g, &hop.entity)));
    }
    out
}

fn fill_bindings(req: &ChatRequest, template: TemplateName, data: &DatasetData) -> Result<Bindings, ApiError> {
    let t = template.template();
    let mut b = req.bindings.clone();
    if t.has_placeholder("kg_context") && !b.contains_key("kg_context") {
        let ctx = assemble_kg_context(&req.query, &data.graph, CHAT_CONTEXT_HOPS, CHAT_CONTEXT_TRIPLETS);
        b.insert("kg_context".into(), ctx.text);
    }
    if t.has_placeholder("vector_context") && !b.contains_key("vector_context") {
        b.insert(
            "vector_context".into(),
            assemble_vector_context(&req.query, &data.graph, CHAT_VECTOR_TOP_K),
        );
    }
    if t.has_placeholder("selected_interpretable_path") && !b.contains_key("selected_interpretable_path") {
        let id = req.record_id.ok_or_else(|| {
            ApiError::invalid("template analyse_path needs `record_id` or a selected_interpretable_path binding")
        })?;
        b.insert(
            "selected_interpretable_path".into(),
            describe_path(data.store.record(id)?, &data.graph),
        );
    }
    Ok(b)
}

pub async fn chat(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: ChatRequest = parse(&body)?;
    let mut s = state.lock_session(&req.session_id).await?;
    let template = req.template.unwrap_or(TemplateName::GeneralResponse);
    let bindings = {
        let slot = state.ready(&s.dataset)?;
        let guard = slot.data.read().await;
        fill_bindings(&req, template, loaded(&guard)?)?
    };
    let turn = ChatTurn {
        query: req.query,
        mode: req.mode,
        template,
        bindings,
        timeout: req.timeout_ms.map(Duration::from_millis),
    };
    let mut chat = s.chat.clone();
    let gateway = state.gateway();
    let (result, chat) = blocking(move || (gateway.chat(&mut chat, turn), chat)).await?;
    let entry: HistoryEntry = chat
        .entries()
        .last()
        .cloned()
        .ok_or_else(|| ApiError::internal("chat produced no history entry"))?;
    let rev = record(&state, &mut s, SessionEvent::Chat { entry: entry.clone() }).await?;
    result?;
    reply(StatusCode::OK, Some(&s.dataset), rev, entry)
}

// ---- KG append ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AppendRequest {
    dataset: Option<String>,
    triplets: Vec<Triplet>,
    #[serde(default)]
    confirm: bool,
}

pub async fn kg_append(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: AppendRequest = parse(&body)?;
    let dataset = state.default_dataset(req.dataset.as_deref())?;
    let slot = state.ready(&dataset)?;
    if !req.confirm {
        let guard = slot.data.read().await;
        let g = &loaded(&guard)?.graph;
        let unknown: Vec<&str> = req
            .triplets
            .iter()
            .flat_map(|t| [t.head.as_str(), t.tail.as_str()])
            .filter(|id| !g.contains(id))
            .collect();
        return Err(ApiError::invalid(format!(
            "appending {} triplet(s) requires \"confirm\": true",
            req.triplets.len()
        ))
        .with_detail(
            json!({ "code": "confirmation_required", "submitted": req.triplets.len(), "unknown_entities": unknown }),
        ));
    }
    let outcome: AppendOutcome = {
        let mut guard = slot.data.write().await;
        let data = guard
            .as_mut()
            .ok_or_else(|| ApiError::internal("ready dataset has no data"))?;
        data.graph.append_triplets(&req.triplets)?
    };
    let rev = if outcome.added > 0 {
        state.bump()
    } else {
        state.revision()
    };
    reply(StatusCode::OK, Some(&dataset), rev, outcome)
}

// ---- metrics ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsRequest {
    ranked_lists: Option<Vec<RankedList>>,
    /// Alternative to `ranked_lists`: JSON-lines text.
    jsonl: Option<String>,
    metrics: Option<Vec<Metric>>,
    n: Option<usize>,
}

#[derive(Serialize)]
struct MetricsReply {
    report: MetricReport,
    tsv: String,
}

pub async fn metrics_evaluate(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: MetricsRequest = parse(&body)?;
    let lists = match (req.ranked_lists, req.jsonl) {
        (Some(l), None) => l,
        (None, Some(text)) => parse_ranked_lists(&text)?,
        _ => return Err(ApiError::invalid("give exactly one of `ranked_lists` or `jsonl`")),
    };
    let metrics = req.metrics.unwrap_or_else(|| Metric::ALL.to_vec());
    let report = evaluate(&lists, &metrics, req.n.unwrap_or(DEFAULT_CUTOFF))?;
    let tsv = report.to_tsv();
    reply(StatusCode::OK, None, state.revision(), MetricsReply { report, tsv })
}
