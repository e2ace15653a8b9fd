//! HTTP service. KB mutations and session transitions go through mutexes
//! (one writer each); queries run on snapshots outside the lock.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use entitykb::eql::print_condition_scoped;
use entitykb::kb::KnowledgeBase;
use entitykb::ontomatic::OntologyDoc;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::fitting::{FitSession, FitSpec};
use crate::ops::{self, ServiceError};

pub struct AppState {
    kb: Mutex<KnowledgeBase>,
    sessions: Mutex<BTreeMap<u64, FitSession>>,
    next_session: AtomicU64,
}

impl AppState {
    pub fn new(kb: KnowledgeBase) -> Arc<Self> {
        Arc::new(AppState { kb: Mutex::new(kb), sessions: Mutex::new(BTreeMap::new()), next_session: AtomicU64::new(1) })
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.to_json())).into_response()
    }
}

type Shared = State<Arc<AppState>>;
type Reply = Result<Json<Value>, ServiceError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/query", post(query))
        .route("/ontology/import", post(import))
        .route("/materialize", post(materialize))
        .route("/fit/sessions", post(create_session))
        .route("/fit/sessions/:id", get(session_summary))
        .route("/fit/sessions/:id/pending", get(pending))
        .route("/fit/sessions/:id/condition", post(condition))
        .route("/ruletree/:name", get(rule_tree))
        .route("/trace/:session/:case", get(trace))
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct QueryBody {
    text: String,
}

async fn query(State(s): Shared, Json(body): Json<QueryBody>) -> Reply {
    let snapshot = s.kb.lock().expect("kb lock").snapshot();
    Ok(Json(ops::query_json(&snapshot, &body.text)?))
}

#[derive(Deserialize)]
struct ImportBody {
    doc: OntologyDoc,
}

async fn import(State(s): Shared, Json(body): Json<ImportBody>) -> Reply {
    let mut kb = s.kb.lock().expect("kb lock");
    Ok(Json(ops::import_doc(&body.doc, &mut kb)?))
}

async fn materialize(State(s): Shared) -> Reply {
    let mut kb = s.kb.lock().expect("kb lock");
    Ok(Json(ops::materialize_json(&mut kb)?))
}

async fn create_session(State(s): Shared, Json(spec): Json<FitSpec>) -> Result<(StatusCode, Json<Value>), ServiceError> {
    let id = s.next_session.fetch_add(1, Ordering::SeqCst);
    let session = FitSession::new(id, &spec)?;
    let body = session.summary();
    s.sessions.lock().expect("session lock").insert(id, session);
    Ok((StatusCode::CREATED, Json(body)))
}

fn with_session<T>(s: &AppState, id: u64, f: impl FnOnce(&mut FitSession) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
    let mut sessions = s.sessions.lock().expect("session lock");
    let session = sessions.get_mut(&id).ok_or_else(|| ServiceError::NotFound(format!("session {id}")))?;
    f(session)
}

async fn session_summary(State(s): Shared, Path(id): Path<u64>) -> Reply {
    with_session(&s, id, |session| Ok(Json(session.summary())))
}

async fn pending(State(s): Shared, Path(id): Path<u64>) -> Result<Response, ServiceError> {
    with_session(&s, id, |session| {
        let Some(p) = session.pending() else { return Ok(StatusCode::NO_CONTENT.into_response()) };
        let mut body = p.to_json();
        body["session"] = json!(session.id);
        body["fired_condition"] =
            json!(p.fired_rule.map(|r| print_condition_scoped(&session.tree.rules[r].condition, &session.tree.case_var)));
        Ok(Json(body).into_response())
    })
}

#[derive(Deserialize)]
struct ConditionBody {
    eql_text: String,
}

async fn condition(State(s): Shared, Path(id): Path<u64>, Json(body): Json<ConditionBody>) -> Reply {
    with_session(&s, id, |session| {
        let verdict = session.submit(&body.eql_text)?;
        let mut out = verdict.to_json();
        out["state"] = json!(session.state().name());
        out["rules"] = json!(session.tree.rule_count());
        Ok(Json(out))
    })
}

/// Module text of the most recent session fitting the named tree.
async fn rule_tree(State(s): Shared, Path(name): Path<String>) -> Result<Response, ServiceError> {
    let sessions = s.sessions.lock().expect("session lock");
    let session = sessions.values().rev().find(|x| x.name == name).ok_or_else(|| ServiceError::NotFound(format!("rule tree `{name}`")))?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], session.module()).into_response())
}

async fn trace(State(s): Shared, Path((id, case)): Path<(u64, usize)>) -> Reply {
    with_session(&s, id, |session| Ok(Json(session.trace(case)?)))
}

/// Binds and serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, port: u16) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind port {port}: {e}"))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
