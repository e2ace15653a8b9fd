//! Operations shared by the command line and the HTTP service, so both
//! produce the same JSON payloads.

use std::path::Path;

use entitykb::bench::{generate_university, GenParams};
use entitykb::eql::{evaluate, parse_query, EqlError};
use entitykb::kb::{AttributeSpec, ClassSpec, EntityId, KbState, KnowledgeBase, Value};
use entitykb::ontomatic::{import_document, import_ntriples, materialize, OntoError, OntologyDoc, RuleKind};
use entitykb::ormatic::{derive_schema, LoadedGraph, OrmError, Session, SqliteStore, Store};
use entitykb::rdr::RdrError;
use serde_json::{json, Value as Json};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Eql(#[from] EqlError),
    #[error(transparent)]
    Rdr(#[from] RdrError),
    #[error(transparent)]
    Onto(#[from] OntoError),
    #[error(transparent)]
    Orm(#[from] OrmError),
    #[error(transparent)]
    Bench(#[from] entitykb::bench::BenchError),
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Eql(EqlError::Syntax { .. }) => "syntax_error",
            ServiceError::Eql(_) => "query_error",
            ServiceError::Rdr(_) => "rdr_error",
            ServiceError::Onto(_) => "ontology_error",
            ServiceError::Orm(_) => "persistence_error",
            ServiceError::Bench(_) => "bench_error",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Io(_) => "io_error",
        }
    }

    /// HTTP status for the error.
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Eql(EqlError::Syntax { .. })
            | ServiceError::Rdr(RdrError::InvalidCondition(EqlError::Syntax { .. }))
            | ServiceError::BadRequest(_) => 400,
            ServiceError::NotFound(_) => 404,
            ServiceError::Io(_) | ServiceError::Orm(OrmError::Store(_)) => 500,
            _ => 422,
        }
    }

    pub fn to_json(&self) -> Json {
        let mut body = json!({ "error": self.kind(), "message": self.to_string() });
        let syntax = match self {
            ServiceError::Eql(e) | ServiceError::Rdr(RdrError::InvalidCondition(e)) => Some(e),
            _ => None,
        };
        if let Some(EqlError::Syntax { position, expected, found }) = syntax {
            body["error"] = json!("syntax_error");
            body["position"] = json!(position);
            body["expected"] = json!(expected);
            body["found"] = json!(found);
        }
        body
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

/// The four-person KB used by examples and tests.
pub fn demo_kb() -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    kb.define_class(ClassSpec::new("Person").attribute(AttributeSpec::one("age", "integer")).attribute(AttributeSpec::one("name", "string")))
        .expect("demo schema is valid");
    let person = kb.require_class("Person").expect("just defined");
    for (name, age) in [("ann", 19), ("bob", 20), ("cy", 20), ("dee", 31)] {
        let p = kb.add_individual(Some(name), &[person]).expect("fresh iri");
        kb.assert_named(p, "age", age as i64).expect("valid age");
        kb.assert_named(p, "name", name).expect("valid name");
    }
    kb
}

/// Resolves a `--kb` argument: `demo`, `university`, an ontology JSON
/// document or an N-Triples file. An absent argument yields an empty KB.
pub fn open_kb(spec: Option<&str>, seed: u64) -> Result<KnowledgeBase> {
    let Some(spec) = spec else { return Ok(KnowledgeBase::new()) };
    match spec {
        "demo" => Ok(demo_kb()),
        "university" => {
            let mut kb = KnowledgeBase::new();
            import_document(&generate_university(&GenParams::small(seed)), &mut kb)?;
            Ok(kb)
        }
        path => {
            let mut kb = KnowledgeBase::new();
            import_file(Path::new(path), &mut kb)?;
            Ok(kb)
        }
    }
}

pub fn import_file(path: &Path, kb: &mut KnowledgeBase) -> Result<Json> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "nt") {
        let n = import_ntriples(&text, kb)?;
        return Ok(json!({ "triples": n, "individuals": kb.individual_count(), "statements": kb.statement_count() }));
    }
    let doc = OntologyDoc::from_json(&text)?;
    import_doc(&doc, kb)
}

pub fn import_doc(doc: &OntologyDoc, kb: &mut KnowledgeBase) -> Result<Json> {
    let (t, n) = import_document(doc, kb)?;
    let roles: Vec<Json> = t.roles.iter().map(|(r, i)| json!([kb.class_name(*r), kb.class_name(*i)])).collect();
    Ok(json!({
        "classes": t.classes.len(),
        "properties": t.properties.len(),
        "axioms": t.axioms.len(),
        "roles": roles,
        "individuals": n,
        "statements": kb.statement_count(),
    }))
}

pub fn materialize_json(kb: &mut KnowledgeBase) -> Result<Json> {
    let report = materialize(kb)?;
    let counts: serde_json::Map<String, Json> =
        RuleKind::ALL.iter().map(|k| (k.name().to_string(), json!(report.count(*k)))).collect();
    Ok(json!({
        "inferred": report.total(),
        "counts": counts,
        "passes": report.passes,
        "classification_passes": report.classification_passes,
        "statements": kb.statement_count(),
    }))
}

pub fn value_json(kb: &KbState, v: &Value) -> Json {
    match v {
        Value::Bool(b) => json!(b),
        Value::Int(i) => json!(i),
        Value::Decimal(d) => json!(d),
        Value::Str(s) => json!(s),
        Value::Ref(id) => {
            let iri = kb.individual(*id).ok().and_then(|i| i.iri.clone());
            json!({ "id": id.0, "iri": iri })
        }
    }
}

fn value_text(kb: &KbState, v: &Value) -> String {
    match v {
        Value::Ref(id) => kb.individual(*id).ok().and_then(|i| i.iri.clone()).unwrap_or_else(|| id.to_string()),
        Value::Str(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn query_json(kb: &KbState, text: &str) -> Result<Json> {
    let q = parse_query(text)?;
    let rs = evaluate(&q, kb)?;
    let rows: Vec<Json> = rs.rows.iter().map(|r| Json::Array(r.iter().map(|v| value_json(kb, v)).collect())).collect();
    Ok(json!({ "columns": rs.columns, "rows": rows }))
}

/// Tab-separated rendering of a query result.
pub fn query_table(kb: &KbState, text: &str) -> Result<String> {
    let q = parse_query(text)?;
    let rs = evaluate(&q, kb)?;
    let mut out = rs.columns.join("\t");
    out.push('\n');
    for row in &rs.rows {
        let cells: Vec<String> = row.iter().map(|v| value_text(kb, v)).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    Ok(out)
}

/// Saves every individual of `kb` into `st`, creating tables as needed.
pub fn save_kb(kb: &KnowledgeBase, st: &mut SqliteStore) -> Result<Json> {
    let schema = derive_schema(kb)?;
    st.create_schema(&schema)?;
    let roots: Vec<EntityId> = kb.individuals().map(|i| i.id).collect();
    let r = Session::new(schema).save(kb, &roots, st)?;
    Ok(json!({
        "objects": r.keys.len(),
        "inserted": r.inserted,
        "updated": r.updated,
        "deleted": r.deleted,
        "patched": r.patched,
    }))
}

pub fn loaded_json(loaded: &LoadedGraph) -> Json {
    let roots: Vec<Json> = loaded.roots.iter().map(|r| value_json(&loaded.kb, &Value::Ref(*r))).collect();
    json!({
        "individuals": loaded.kb.individual_count(),
        "statements": loaded.kb.statement_count(),
        "roots": roots,
    })
}
