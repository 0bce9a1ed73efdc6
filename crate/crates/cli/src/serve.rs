//! HTTP server for the model protocol, backed by the in-process mocks.

use std::io::Write;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rgf_core::gateway::wire::{
    DecomposeRequest, ErrorResponse, GenerateRequest, LocalService, ReadRequest, DECOMPOSE_PATH,
    GENERATE_PATH, HEALTH_PATH, READ_PATH,
};
use rgf_core::gateway::{ClozeGenerator, ClozeReader};
use rgf_core::qed::{Gazetteer, HeuristicDecomposer};
use serde::de::DeserializeOwned;
use serde::Serialize;

type Service = Arc<LocalService>;

pub fn mock_service(model_id: &str, gazetteer: Gazetteer) -> LocalService {
    LocalService {
        model_id: model_id.to_string(),
        generator: Box::new(ClozeGenerator),
        reader: Box::new(ClozeReader),
        decomposer: Box::new(HeuristicDecomposer::new(gazetteer)),
    }
}

fn error(status: StatusCode, message: String) -> Response {
    (status, Json(ErrorResponse { error: message })).into_response()
}

fn reply<T: Serialize>(result: Result<T, String>) -> Response {
    match result {
        Ok(v) => Json(v).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body)
        .map_err(|e| error(StatusCode::BAD_REQUEST, format!("invalid request body: {e}")))
}

async fn generate(State(s): State<Service>, body: Bytes) -> Response {
    match parse::<GenerateRequest>(&body) {
        Ok(req) => reply(s.generate(&req)),
        Err(r) => r,
    }
}

async fn read(State(s): State<Service>, body: Bytes) -> Response {
    match parse::<ReadRequest>(&body) {
        Ok(req) => reply(s.read(&req)),
        Err(r) => r,
    }
}

async fn decompose(State(s): State<Service>, body: Bytes) -> Response {
    match parse::<DecomposeRequest>(&body) {
        Ok(req) => reply(s.decompose(&req)),
        Err(r) => r,
    }
}

async fn health(State(s): State<Service>) -> Response {
    Json(s.health()).into_response()
}

async fn method_not_allowed() -> Response {
    error(StatusCode::METHOD_NOT_ALLOWED, "method not allowed".into())
}

async fn not_found() -> Response {
    error(StatusCode::NOT_FOUND, "no such endpoint".into())
}

pub fn router(service: LocalService) -> Router {
    Router::new()
        .route(GENERATE_PATH, post(generate).fallback(method_not_allowed))
        .route(READ_PATH, post(read).fallback(method_not_allowed))
        .route(DECOMPOSE_PATH, post(decompose).fallback(method_not_allowed))
        .route(HEALTH_PATH, get(health).fallback(method_not_allowed))
        .fallback(not_found)
        .with_state(Arc::new(service))
}

/// Binds, prints the bound address on stdout and serves until killed.
pub fn serve(host: &str, port: u16, service: LocalService) -> std::io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        axum::serve(listener, router(service)).await
    })
}
