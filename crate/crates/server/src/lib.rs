//! HTTP/JSON front end for the demo, benchmark, disk-growth and attack runs.
//!
//! Every run is CPU-bound and synchronous, so handlers move it onto the
//! blocking pool.

use std::net::SocketAddr;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;

use delegacoin::api::{ApiError, AttackRequest, BenchRequest, DiskGrowthRequest, ErrorKind, Health, ScenarioInfo};
use delegacoin::eval::{run_bench, run_demo, run_diskgrowth, BenchReport, DemoReport, DiskGrowthReport, RunConfig};
use delegacoin::harness::{run_attack_scenario, HarnessError, ScenarioReport, SCENARIOS};

#[derive(Debug, Clone, Default)]
pub struct AppState {
    /// Directory for benchmark and disk-growth seal files; a fresh temporary
    /// directory per request when unset.
    pub scratch: Option<std::path::PathBuf>,
}

pub struct Failure(StatusCode, ApiError);

impl Failure {
    fn new(kind: ErrorKind, message: impl ToString) -> Self {
        let status = match kind {
            ErrorKind::Usage => StatusCode::BAD_REQUEST,
            ErrorKind::Protocol => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Failure(
            status,
            ApiError {
                kind,
                message: message.to_string(),
            },
        )
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type Reply<T> = Result<Json<T>, Failure>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Failure> + Send + 'static) -> Reply<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Failure::new(ErrorKind::Internal, e))?
        .map(Json)
}

fn scratch(state: &AppState) -> Result<(Option<tempfile::TempDir>, std::path::PathBuf), Failure> {
    match &state.scratch {
        Some(p) => Ok((None, p.clone())),
        None => {
            let dir = tempfile::tempdir().map_err(|e| Failure::new(ErrorKind::Internal, e))?;
            let path = dir.path().to_path_buf();
            Ok((Some(dir), path))
        }
    }
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn demo(Json(cfg): Json<RunConfig>) -> Reply<DemoReport> {
    blocking(move || run_demo(&cfg).map_err(|e| Failure::new(ErrorKind::Usage, e))).await
}

async fn bench(State(state): State<AppState>, Json(req): Json<BenchRequest>) -> Reply<BenchReport> {
    if req.iterations == 0 {
        return Err(Failure::new(ErrorKind::Usage, "iterations must be positive"));
    }
    blocking(move || {
        let (_guard, dir) = scratch(&state)?;
        run_bench(req.iterations, req.seed, &dir).map_err(|e| Failure::new(ErrorKind::Protocol, e))
    })
    .await
}

async fn diskgrowth(State(state): State<AppState>, Json(req): Json<DiskGrowthRequest>) -> Reply<DiskGrowthReport> {
    if req.sizes.len() < 2 || req.sizes.contains(&0) {
        return Err(Failure::new(ErrorKind::Usage, "need at least two positive sizes"));
    }
    blocking(move || {
        let (_guard, dir) = scratch(&state)?;
        run_diskgrowth(req.seed, &req.sizes, Some(&dir)).map_err(|e| Failure::new(ErrorKind::Protocol, e))
    })
    .await
}

async fn attacks() -> Json<Vec<ScenarioInfo>> {
    Json(
        SCENARIOS
            .iter()
            .map(|(name, description)| ScenarioInfo {
                name: name.to_string(),
                description: description.to_string(),
            })
            .collect(),
    )
}

async fn attack(Path(name): Path<String>, body: Option<Json<AttackRequest>>) -> Reply<ScenarioReport> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    blocking(move || {
        run_attack_scenario(&name, req.seed).map_err(|e| match e {
            HarnessError::UnknownScenario(_) => Failure(
                StatusCode::NOT_FOUND,
                ApiError {
                    kind: ErrorKind::Usage,
                    message: e.to_string(),
                },
            ),
            e => Failure::new(ErrorKind::Protocol, e),
        })
    })
    .await
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/demo", post(demo))
        .route("/v1/bench", post(bench))
        .route("/v1/diskgrowth", post(diskgrowth))
        .route("/v1/attacks", get(attacks))
        .route("/v1/attacks/{name}", post(attack))
        .with_state(state)
}

/// Binds `addr` and serves until the returned handle's task is aborted.
/// Port 0 picks a free port; the bound address is returned.
pub async fn spawn(addr: SocketAddr, state: AppState) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    let app = router(state);
    let task = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok((bound, task))
}
