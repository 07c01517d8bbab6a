//! HTTP API over a [`Session`], versioned under `/api/v1`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bridge::BridgeError;
use crate::error::Error;
use crate::explain::GlobalKind;
use crate::expose::SuiteSpec;
use crate::ingest::{Gold, Task};
use crate::report::{canonical_bytes, to_finite_value};
use crate::rng::sha256_hex;
use crate::session::{ExplainRequest, ReportOptions, Session};
use crate::ARTIFACT_VERSION;

/// Wall-clock limit for one request's computation.
pub const COMPUTE_BUDGET: Duration = Duration::from_secs(120);
pub const DEFAULT_PAGE: usize = 50;

const INDEX_HTML: &str = "<!DOCTYPE html><html lang=\"en\"><head><meta charset=\"utf-8\"><title>Explabox</title></head>\
<body><h1>Explabox</h1><p>The API is served under <code>/api/v1</code>. Start with <a href=\"/api/v1/meta\">/api/v1/meta</a>.</p></body></html>";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_params", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (status, code) = match &e {
            Error::InvalidParams(_) | Error::UnknownLabel(_) | Error::Ingest(_) => {
                (StatusCode::BAD_REQUEST, "invalid_params")
            }
            Error::UnknownSplit(_) | Error::UnknownInstance(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::TaskMismatch(_) | Error::Degenerate(_) | Error::EmptySplit(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "unprocessable")
            }
            Error::Bridge(BridgeError::TaskMismatch { .. }) => (StatusCode::UNPROCESSABLE_ENTITY, "unprocessable"),
            Error::Bridge(_) => (StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable"),
            Error::Report(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, message)
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = canonical_bytes(&json!({"code": self.code, "message": self.message}));
        (self.status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

struct AppState {
    session: Arc<Session>,
    cache: Mutex<HashMap<String, Bytes>>,
    budget: Duration,
}

pub fn router(session: Session) -> Router {
    router_with_budget(session, COMPUTE_BUDGET)
}

pub fn router_with_budget(session: Session, budget: Duration) -> Router {
    let state = Arc::new(AppState {
        session: Arc::new(session),
        cache: Mutex::new(HashMap::new()),
        budget,
    });
    let api = Router::new()
        .route("/meta", get(meta))
        .route("/health", get(health))
        .route("/splits", get(splits))
        .route("/instances", get(instances))
        .route("/explore/stats", get(stats))
        .route("/examine/metrics", get(metrics))
        .route("/examine/confusion", get(confusion))
        .route("/examine/drilldown", get(drilldown))
        .route("/predict", post(predict))
        .route("/explain", post(explain))
        .route("/global/{kind}", get(global))
        .route("/expose/run", post(expose_run))
        .route("/expose/fairness", get(fairness))
        .route("/expose/fuzz", get(fuzz))
        .route("/report", get(report));
    Router::new()
        .route("/", get(|| async { Html(INDEX_HTML) }))
        .nest("/api/v1", api)
        .with_state(state)
}

/// Bind and serve until the process is stopped.
pub async fn serve(session: Session, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(session)).await
}

fn json_response(bytes: Bytes) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

/// Run `f` on the blocking pool within the compute budget, caching the
/// canonical response bytes under (operation, params, seed).
async fn compute<F>(state: &Arc<AppState>, operation: &str, params: Value, seed: u64, f: F) -> ApiResult
where
    F: FnOnce(&Session) -> crate::Result<Value> + Send + 'static,
{
    let key = sha256_hex(&canonical_bytes(&json!({"operation": operation, "params": params, "seed": seed})));
    if let Some(hit) = state.cache.lock().expect("cache lock").get(&key) {
        return Ok(json_response(hit.clone()));
    }
    let session = Arc::clone(&state.session);
    let task = tokio::task::spawn_blocking(move || f(&session));
    let value = match tokio::time::timeout(state.budget, task).await {
        Err(_) => {
            return Err(ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "budget_exceeded",
                format!("computation exceeded the {:?} budget", state.budget),
            ))
        }
        Ok(Err(join)) => return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", join.to_string())),
        Ok(Ok(result)) => result?,
    };
    let bytes = Bytes::from(canonical_bytes(&value));
    state.cache.lock().expect("cache lock").insert(key, bytes.clone());
    Ok(json_response(bytes))
}

fn to_value<T: Serialize>(v: &T) -> crate::Result<Value> {
    Ok(to_finite_value(v)?)
}

fn query<T: DeserializeOwned>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    Ok(q?.0)
}

fn body<T: DeserializeOwned>(b: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    Ok(b?.0)
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SplitQuery {
    split: Option<String>,
}

async fn meta(State(state): State<Arc<AppState>>) -> Response {
    let s = &state.session;
    let body = json!({
        "task": s.dataset().task(),
        "labels": s.dataset().labels(),
        "splits": s.dataset().split_names().collect::<Vec<_>>(),
        "model_id": s.predictor().model_id(),
        "dataset_hash": s.dataset_hash(),
        "manifest_hash": s.manifest_hash(),
        "artifact_version": ARTIFACT_VERSION,
    });
    json_response(canonical_bytes(&body).into())
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let health = serde_json::to_value(state.session.predictor().probe_health()).expect("health serializes");
    json_response(canonical_bytes(&health).into())
}

async fn splits(State(state): State<Arc<AppState>>) -> Response {
    let body: Value = state
        .session
        .dataset()
        .splits()
        .iter()
        .map(|(name, ids)| (name.clone(), json!({"n_instances": ids.len()})))
        .collect::<serde_json::Map<_, _>>()
        .into();
    json_response(canonical_bytes(&body).into())
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct PageQuery {
    split: Option<String>,
    #[serde(default)]
    offset: usize,
    limit: Option<usize>,
}

async fn instances(State(state): State<Arc<AppState>>, q: Result<Query<PageQuery>, QueryRejection>) -> ApiResult {
    let q = query(q)?;
    let params = serde_json::to_value(&q).expect("query serializes");
    compute(&state, "instances", params, 0, move |s| {
        let split = s.split_or_default(q.split.as_deref())?;
        let all = s.dataset().split_instances(&split)?;
        let page: Vec<_> = all.iter().skip(q.offset).take(q.limit.unwrap_or(DEFAULT_PAGE)).collect();
        let texts: Vec<String> = page.iter().map(|i| i.text.clone()).collect();
        let batch = s.predictor().predict(&texts)?;
        let classification = s.dataset().task() == Task::Classification;
        let rows: Vec<Value> = page
            .iter()
            .zip(&batch.outputs)
            .map(|(inst, row)| {
                let (predicted, correct) = if classification {
                    let label = &s.predictor().labels()[crate::bridge::argmax(row)];
                    let correct = inst.gold.as_ref().and_then(Gold::label).map(|g| g == label);
                    (json!(label), json!(correct))
                } else {
                    (json!(row[0]), Value::Null)
                };
                json!({
                    "id": inst.id,
                    "text": inst.text,
                    "gold": inst.gold,
                    "attributes": inst.attributes,
                    "output": row,
                    "predicted": predicted,
                    "correct": correct,
                })
            })
            .collect();
        to_value(&json!({"split": split, "offset": q.offset, "total": all.len(), "instances": rows}))
    })
    .await
}

async fn stats(State(state): State<Arc<AppState>>, q: Result<Query<SplitQuery>, QueryRejection>) -> ApiResult {
    let q = query(q)?;
    compute(&state, "explore.stats", json!(q), 0, move |s| to_value(&s.stats(q.split.as_deref())?)).await
}

async fn metrics(State(state): State<Arc<AppState>>, q: Result<Query<SplitQuery>, QueryRejection>) -> ApiResult {
    let q = query(q)?;
    compute(&state, "examine.metrics", json!(q), 0, move |s| to_value(&s.metrics(q.split.as_deref())?)).await
}

async fn confusion(State(state): State<Arc<AppState>>, q: Result<Query<SplitQuery>, QueryRejection>) -> ApiResult {
    let q = query(q)?;
    compute(&state, "examine.confusion", json!(q), 0, move |s| to_value(&s.confusion(q.split.as_deref())?)).await
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct DrilldownQuery {
    split: Option<String>,
    gold: String,
    pred: String,
}

async fn drilldown(State(state): State<Arc<AppState>>, q: Result<Query<DrilldownQuery>, QueryRejection>) -> ApiResult {
    let q = query(q)?;
    compute(&state, "examine.drilldown", json!(q), 0, move |s| {
        let ids = s.drilldown(q.split.as_deref(), &q.gold, &q.pred)?;
        to_value(&json!({"gold": q.gold, "pred": q.pred, "ids": ids}))
    })
    .await
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct PredictBody {
    texts: Vec<String>,
}

async fn predict(State(state): State<Arc<AppState>>, b: Result<Json<PredictBody>, JsonRejection>) -> ApiResult {
    let b = body(b)?;
    compute(&state, "predict", json!(b), 0, move |s| {
        let batch = s.predictor().predict(&b.texts)?;
        to_value(&json!({
            "task": s.predictor().task(),
            "labels": s.predictor().labels(),
            "texts": batch.texts,
            "outputs": batch.outputs,
        }))
    })
    .await
}

async fn explain(State(state): State<Arc<AppState>>, b: Result<Json<ExplainRequest>, JsonRejection>) -> ApiResult {
    let req = body(b)?;
    let seed = req.seed;
    compute(&state, "explain", json!(req), seed, move |s| to_value(&s.explain(&req)?)).await
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct GlobalQuery {
    split: Option<String>,
    k: Option<usize>,
    #[serde(default)]
    seed: u64,
}

async fn global(
    State(state): State<Arc<AppState>>,
    Path(kind): Path<String>,
    q: Result<Query<GlobalQuery>, QueryRejection>,
) -> ApiResult {
    let q = query(q)?;
    let kind = GlobalKind::parse(&kind).ok_or_else(|| ApiError::bad_request(format!("unknown global summary `{kind}`")))?;
    let params = json!({"kind": kind, "split": q.split, "k": q.k});
    compute(&state, "explain.global", params, q.seed, move |s| {
        to_value(&s.global(kind, q.split.as_deref(), q.k, q.seed)?)
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunBody {
    suite: Value,
    #[serde(default)]
    seed: u64,
}

async fn expose_run(State(state): State<Arc<AppState>>, b: Result<Json<RunBody>, JsonRejection>) -> ApiResult {
    let b = body(b)?;
    let spec = SuiteSpec::from_value(b.suite.clone()).map_err(ApiError::from)?;
    compute(&state, "expose.run", b.suite, b.seed, move |s| to_value(&s.run_suite(&spec, b.seed)?)).await
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FairnessQuery {
    split: Option<String>,
    attribute: String,
    positive_label: Option<String>,
}

async fn fairness(State(state): State<Arc<AppState>>, q: Result<Query<FairnessQuery>, QueryRejection>) -> ApiResult {
    let q = query(q)?;
    compute(&state, "expose.fairness", json!(q), 0, move |s| {
        to_value(&s.fairness(q.split.as_deref(), &q.attribute, q.positive_label.as_deref())?)
    })
    .await
}

async fn fuzz(State(state): State<Arc<AppState>>) -> ApiResult {
    compute(&state, "expose.fuzz", json!({}), 0, |s| to_value(&s.fuzz()?)).await
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ReportQuery {
    #[serde(default)]
    seed: u64,
}

async fn report(State(state): State<Arc<AppState>>, q: Result<Query<ReportQuery>, QueryRejection>) -> ApiResult {
    let q = query(q)?;
    compute(&state, "report", json!({}), q.seed, move |s| {
        to_value(&s.report(q.seed, &ReportOptions::default())?)
    })
    .await
}

#[cfg(test)]
mod tests {
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    use super::*;
    use crate::bridge::train_baseline;
    use crate::ingest::{Dataset, Instance};

    fn app() -> Router {
        let instances = vec![
            Instance::new("a", "good").with_label("pos").with_attribute("g", "x"),
            Instance::new("b", "bad").with_label("neg").with_attribute("g", "y"),
        ];
        let ids = vec!["a".to_owned(), "b".to_owned()];
        let d = Dataset::new(Task::Classification, vec![], instances, vec![("test".into(), ids)]).unwrap();
        let p = train_baseline(&d, "test").unwrap();
        router(Session::new(d, p, None))
    }

    async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value, Vec<u8>) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => req
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from(b.to_string()))
                .unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        (status, value, bytes)
    }

    #[tokio::test]
    async fn meta_and_predict() {
        let app = app();
        let (status, meta, _) = call(&app, "GET", "/api/v1/meta", None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(meta["task"], "classification");
        assert_eq!(meta["labels"], json!(["neg", "pos"]));
        assert_eq!(meta["splits"], json!(["test"]));
        let (status, out, _) = call(&app, "POST", "/api/v1/predict", Some(json!({"texts": ["good"]}))).await;
        assert_eq!(status, StatusCode::OK);
        let p_pos = out["outputs"][0][1].as_f64().unwrap();
        assert!((p_pos - 2.0 / 3.0).abs() < 1e-12);
    }

    #[tokio::test]
    async fn error_statuses() {
        let app = app();
        let bad_method = json!({"method": "anchors", "instance_id": "a", "seed": 0});
        let (status, err, _) = call(&app, "POST", "/api/v1/explain", Some(bad_method)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(err["code"], "invalid_params");
        let (status, _, _) = call(&app, "GET", "/api/v1/explore/stats?split=nope", None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        let missing = json!({"method": "lime", "instance_id": "zz", "seed": 0});
        let (status, _, _) = call(&app, "POST", "/api/v1/explain", Some(missing)).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        let (status, _, _) = call(&app, "GET", "/api/v1/examine/drilldown?gold=meh&pred=pos", None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        let (status, _, _) = call(&app, "GET", "/api/v1/global/bogus", None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        let (status, _, _) = call(&app, "POST", "/api/v1/predict", Some(json!({"txt": []}))).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
    }

    #[tokio::test]
    async fn identical_requests_give_identical_bytes() {
        let req = json!({"method": "kernelshap", "text": "good bad good", "target_label": "pos", "seed": 3});
        let (s1, v, a) = call(&app(), "POST", "/api/v1/explain", Some(req.clone())).await;
        let fresh = app();
        let (_, _, b) = call(&fresh, "POST", "/api/v1/explain", Some(req.clone())).await;
        let (_, _, c) = call(&fresh, "POST", "/api/v1/explain", Some(req)).await;
        assert_eq!(s1, StatusCode::OK);
        assert_eq!(v["kind"], "attribution");
        assert_eq!(a, b);
        assert_eq!(b, c);
    }

    #[tokio::test]
    async fn analysis_endpoints() {
        let app = app();
        let (status, page, _) = call(&app, "GET", "/api/v1/instances?limit=1", None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(page["total"], 2);
        assert_eq!(page["instances"][0]["predicted"], "pos");
        assert_eq!(page["instances"][0]["correct"], true);
        let (_, d, _) = call(&app, "GET", "/api/v1/examine/drilldown?gold=pos&pred=pos", None).await;
        assert_eq!(d["ids"], json!(["a"]));
        let (status, f, _) = call(&app, "GET", "/api/v1/expose/fairness?attribute=g", None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(f["kind"], "fairness-report");
        let suite = json!({"suite": [{"type": "INV", "perturber": {"kind": "typo", "rate": 0.5}, "params": {"split": "test"}}], "seed": 1});
        let (status, r, _) = call(&app, "POST", "/api/v1/expose/run", Some(suite)).await;
        assert_eq!(status, StatusCode::OK, "{r}");
        assert_eq!(r[0]["kind"], "test-result");
        let (status, g, _) = call(&app, "GET", "/api/v1/global/token-frequency", None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(g["kind"], "global-summary");
        let (status, rep, _) = call(&app, "GET", "/api/v1/report?seed=2", None).await;
        assert_eq!(status, StatusCode::OK, "{rep}");
        assert_eq!(rep["meta"]["seed"], 2);
        let (status, _, _) = call(&app, "GET", "/", None).await;
        assert_eq!(status, StatusCode::OK);
    }
}
