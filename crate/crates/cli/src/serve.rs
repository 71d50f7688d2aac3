//! HTTP reward service: `POST /reward {question, answer}` returns the
//! generated trajectory and its scalar reward.
//!
//! The backend and tool bank hold blocking HTTP clients. They are built
//! before the runtime starts, used only from blocking tasks, and dropped
//! after the runtime has shut down.

use std::io::Write;
use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::Context;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use toolrm::scoring::{score_answer, HttpBackend, ScoreOptions};
use toolrm::toolbank::{FixtureStore, ToolBank};

use crate::commands::Ctx;

struct Service {
    backend: HttpBackend,
    bank: ToolBank,
    store: FixtureStore,
    opts: ScoreOptions,
}

#[derive(Deserialize)]
struct RewardRequest {
    question: String,
    answer: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": message.into()}))).into_response()
}

async fn reward(State(svc): State<Arc<Service>>, Json(req): Json<RewardRequest>) -> Response {
    if req.question.trim().is_empty() || req.answer.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "question and answer must be non-empty");
    }
    let task = tokio::task::spawn_blocking(move || {
        score_answer(&req.question, &req.answer, &svc.backend, &svc.bank, &svc.store, &svc.opts)
    });
    match task.await {
        Ok(Ok(scored)) => Json(json!({
            "score": scored.reward(),
            "trajectory": scored.text(),
            "tool_outcomes": scored.tool_outcomes,
            "truncated": scored.truncated,
        }))
        .into_response(),
        Ok(Err(e)) => error(StatusCode::BAD_GATEWAY, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

pub fn serve(ctx: &Ctx, addr: SocketAddr) -> anyhow::Result<Value> {
    let backend = ctx.backend()?;
    let bank = ctx.bank()?;
    let store = ctx.store()?;
    if ctx.dry_run {
        return Ok(json!({"command": "serve", "addr": addr.to_string(), "dry_run": true}));
    }
    let svc = Arc::new(Service {
        backend,
        bank,
        store,
        opts: ctx.cfg.score,
    });
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting runtime")?;
    let state = svc.clone();
    let bound = runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        let bound = listener.local_addr()?;
        {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", json!({"listening": bound.to_string()}))?;
            out.flush()?;
        }
        let app = Router::new()
            .route("/reward", post(reward))
            .route("/health", get(health))
            .with_state(state);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("serving")?;
        anyhow::Ok(bound)
    })?;
    runtime.shutdown_background();
    drop(svc);
    Ok(json!({"command": "serve", "addr": bound.to_string(), "stopped": true}))
}
