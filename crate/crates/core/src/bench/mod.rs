//! Desk-scale benchmark: a seeded university generator, a 14-query suite
//! answered both by EQL over the knowledge base and by SQL over the persisted
//! store, and a timing report.

mod generate;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::eql::{evaluate, parse_query, EqlError};
use crate::kb::{EntityId, KnowledgeBase, Value};
use crate::ontomatic::{import_document, materialize, MaterializationReport, OntoError};
use crate::ormatic::{derive_schema, OrmError, Schema, Session, SqliteStore, Store};

pub use generate::{document_statements, generate_university, university_tbox, GenParams};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("query {query}: backends disagree, e.g. {sample}")]
    BackendDisagreement { query: String, sample: String },
    #[error(transparent)]
    Onto(#[from] OntoError),
    #[error(transparent)]
    Orm(#[from] OrmError),
    #[error("query {query}: {source}")]
    Eql { query: String, source: EqlError },
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

#[derive(Clone, Debug)]
pub struct BenchQuery {
    pub id: &'static str,
    pub eql: &'static str,
    pub sql: &'static str,
}

/// Analogues of the RL-profile queries: joins, role membership, defined
/// classes, transitive part-of, the peer relation and a wide three-way join (Q20).
pub fn suite() -> Vec<BenchQuery> {
    vec![
        BenchQuery {
            id: "Q2",
            eql: "an(entity(s:GraduateStudent).where(exists(c in s.takes_course, is_a(c, GraduateCourse))))",
            sql: "SELECT DISTINCT st.holder_id FROM graduate_student g JOIN student st ON st.id = g.id \
                  JOIN student_takes_course t ON t.owner_id = st.id JOIN graduate_course gc ON gc.id = t.target_id",
        },
        BenchQuery {
            id: "Q3",
            eql: "an(entity(c:Course).where(exists(f in c.taught_by, is_a(f, FullProfessor))))",
            sql: "SELECT DISTINCT tb.owner_id FROM course_taught_by tb JOIN employee e ON e.holder_id = tb.target_id \
                  JOIN full_professor fp ON fp.id = e.id",
        },
        BenchQuery {
            id: "Q4",
            eql: "an(entity(p:Person).where(exists(o in p.member_of, exists(u in o.sub_organization_of, \
                  and(is_a(u, University), u.label == \"University0\")))))",
            sql: "SELECT DISTINCT m.owner_id FROM person_member_of m \
                  JOIN organization_sub_organization_of so ON so.owner_id = m.target_id \
                  JOIN university u ON u.id = so.target_id JOIN organization o ON o.id = u.id \
                  WHERE o.label = 'University0'",
        },
        BenchQuery {
            id: "Q5",
            eql: "an(entity(s:Student).where(s.age < 20))",
            sql: "SELECT DISTINCT st.holder_id FROM student st JOIN person p ON p.id = st.holder_id WHERE p.age < 20",
        },
        BenchQuery {
            id: "Q7",
            eql: "an(entity(s:Student).where(exists(c in s.takes_course, contains(c.taught_by, s.advisor))))",
            sql: "SELECT DISTINCT st.holder_id FROM student st JOIN student_takes_course t ON t.owner_id = st.id \
                  JOIN course_taught_by tb ON tb.owner_id = t.target_id WHERE tb.target_id = st.advisor_id",
        },
        BenchQuery {
            id: "Q8",
            eql: "an(entity(s:LeisureStudent))",
            sql: "SELECT DISTINCT st.holder_id FROM leisure_student l JOIN student st ON st.id = l.id",
        },
        BenchQuery {
            id: "Q10",
            eql: "an(entity(s:TeachingAssistant))",
            sql: "SELECT DISTINCT st.holder_id FROM teaching_assistant a JOIN student st ON st.id = a.id",
        },
        BenchQuery {
            id: "Q11",
            eql: "an(entity(o:Organization).where(exists(u in o.sub_organization_of, \
                  and(is_a(u, University), u.label == \"University0\"))))",
            sql: "SELECT DISTINCT so.owner_id FROM organization_sub_organization_of so \
                  JOIN university u ON u.id = so.target_id JOIN organization o ON o.id = u.id \
                  WHERE o.label = 'University0'",
        },
        BenchQuery {
            id: "Q15",
            eql: "an(entity(p:Chair))",
            sql: "SELECT DISTINCT e.holder_id FROM chair c JOIN employee e ON e.id = c.id",
        },
        BenchQuery {
            id: "Q16",
            eql: "an(entity(p:Professor).where(exists(d in p.head_of, exists(u in d.sub_organization_of, \
                  and(is_a(u, University), u.label == \"University0\")))))",
            sql: "SELECT DISTINCT e.holder_id FROM professor pr JOIN employee e ON e.id = pr.id \
                  JOIN organization_sub_organization_of so ON so.owner_id = pr.head_of_id \
                  JOIN university u ON u.id = so.target_id JOIN organization o ON o.id = u.id \
                  WHERE o.label = 'University0'",
        },
        BenchQuery {
            id: "Q19",
            eql: "an(entity(f:Faculty).where(exists(g in f.collaborates_with, is_a(g, FullProfessor))))",
            sql: "SELECT DISTINCT e.holder_id FROM faculty_collaborates_with cw JOIN employee e ON e.id = cw.owner_id \
                  JOIN employee e2 ON e2.holder_id = cw.target_id JOIN full_professor fp ON fp.id = e2.id",
        },
        BenchQuery {
            id: "Q20",
            eql: "a(set_of(s:Student, c in s.takes_course, f in c.taught_by).where(is_a(f, Professor)))",
            sql: "SELECT DISTINCT st.holder_id, t.target_id, tb.target_id FROM student st \
                  JOIN student_takes_course t ON t.owner_id = st.id JOIN course_taught_by tb ON tb.owner_id = t.target_id \
                  JOIN employee e ON e.holder_id = tb.target_id JOIN professor pr ON pr.id = e.id",
        },
        BenchQuery {
            id: "Q21",
            eql: "an(entity(s:Student).where(count(s.takes_course) >= 3))",
            sql: "SELECT st.holder_id FROM student st JOIN student_takes_course t ON t.owner_id = st.id \
                  GROUP BY st.id HAVING COUNT(*) >= 3",
        },
        BenchQuery {
            id: "Q22",
            eql: "an(entity(s:Student).where(exists(c in s.takes_course, is_a(c, Course)), \
                  for_all(d in s.takes_course, is_a(d, GraduateCourse))))",
            sql: "SELECT DISTINCT st.holder_id FROM student st JOIN student_takes_course t ON t.owner_id = st.id \
                  WHERE NOT EXISTS (SELECT 1 FROM student_takes_course t2 WHERE t2.owner_id = st.id \
                  AND t2.target_id NOT IN (SELECT id FROM graduate_course))",
        },
    ]
}

/// A generated, materialized and persisted knowledge base.
pub struct BenchKb {
    pub kb: KnowledgeBase,
    pub asserted: usize,
    pub materialization: MaterializationReport,
    pub schema: Schema,
    pub store: SqliteStore,
    pub keys: BTreeMap<EntityId, i64>,
}

impl BenchKb {
    pub fn prepare(params: &GenParams) -> Result<Self> {
        let doc = generate_university(params);
        let mut kb = KnowledgeBase::new();
        import_document(&doc, &mut kb)?;
        let asserted = kb.statement_count();
        let materialization = materialize(&mut kb)?;
        let schema = {
            let snap = kb.snapshot();
            derive_schema(&snap)?
        };
        let mut store = SqliteStore::open_in_memory()?;
        store.create_schema(&schema)?;
        let roots: Vec<EntityId> = kb.individuals().map(|i| i.id).collect();
        let report = Session::new(schema.clone()).save(&kb, &roots, &mut store)?;
        Ok(BenchKb { kb, asserted, materialization, schema, store, keys: report.keys })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryReport {
    pub query: String,
    pub count: usize,
    pub eql_mean_ms: f64,
    pub eql_stddev_ms: f64,
    pub sql_mean_ms: f64,
    pub sql_stddev_ms: f64,
    pub agree: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub runs: usize,
    pub queries: Vec<QueryReport>,
    pub eql_geomean_ms: f64,
    pub sql_geomean_ms: f64,
}

/// Zero means are floored at one microsecond so the geometric mean stays defined.
pub const GEOMEAN_FLOOR_MS: f64 = 1e-3;

pub fn geometric_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let logs: f64 = values.iter().map(|v| v.max(GEOMEAN_FLOOR_MS).ln()).sum();
    (logs / values.len() as f64).exp()
}

/// Mean and sample standard deviation; the deviation is 0 for a single run.
pub fn mean_stddev(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl BenchReport {
    pub fn agreed(&self) -> bool {
        self.queries.iter().all(|q| q.agree)
    }

    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for q in &self.queries {
            out.push_str(&serde_json::to_string(q).expect("report rows serialize"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "summary": true,
            "runs": self.runs,
            "eql_geomean_ms": self.eql_geomean_ms,
            "sql_geomean_ms": self.sql_geomean_ms,
            "agree": self.agreed(),
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<6}{:>9}{:>18}{:>18}  agree\n", "query", "count", "eql ms", "sql ms");
        for q in &self.queries {
            out.push_str(&format!(
                "{:<6}{:>9}{:>11.3} ±{:>5.2}{:>11.3} ±{:>5.2}  {}\n",
                q.query, q.count, q.eql_mean_ms, q.eql_stddev_ms, q.sql_mean_ms, q.sql_stddev_ms, q.agree
            ));
        }
        out.push_str(&format!("geomean{:>26.3}{:>18.3}\n", self.eql_geomean_ms, self.sql_geomean_ms));
        out
    }
}

type KeySet = BTreeSet<Vec<i64>>;

/// EQL answers as row-key tuples.
pub fn eql_keys(kb: &KnowledgeBase, keys: &BTreeMap<EntityId, i64>, q: &BenchQuery) -> Result<KeySet> {
    let err = |source| BenchError::Eql { query: q.id.into(), source };
    let query = parse_query(q.eql).map_err(err)?;
    let rs = evaluate(&query, &**kb).map_err(err)?;
    Ok(rs
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| match v {
                    Value::Ref(id) => keys[id],
                    other => panic!("suite query {} returned a non-entity {other}", q.id),
                })
                .collect()
        })
        .collect())
}

pub fn sql_keys(store: &SqliteStore, q: &BenchQuery) -> Result<KeySet> {
    Ok(store
        .query(q.sql)?
        .into_iter()
        .map(|row| row.iter().map(|v| v.as_int().unwrap_or(i64::MIN)).collect())
        .collect())
}

fn sample_diff(a: &KeySet, b: &KeySet) -> String {
    match (a.difference(b).next(), b.difference(a).next()) {
        (Some(x), _) => format!("{x:?} only via EQL"),
        (None, Some(y)) => format!("{y:?} only via SQL"),
        _ => "none".into(),
    }
}

/// Runs every query `runs` times on both backends and records agreement.
pub fn run_suite_report(bench: &BenchKb, queries: &[BenchQuery], runs: usize) -> Result<BenchReport> {
    let runs = runs.max(1);
    let mut rows = Vec::new();
    for q in queries {
        let mut eql_ms = Vec::with_capacity(runs);
        let mut sql_ms = Vec::with_capacity(runs);
        let mut eql = KeySet::new();
        let mut sql = KeySet::new();
        for _ in 0..runs {
            let t = Instant::now();
            eql = eql_keys(&bench.kb, &bench.keys, q)?;
            eql_ms.push(t.elapsed().as_secs_f64() * 1e3);
            let t = Instant::now();
            sql = sql_keys(&bench.store, q)?;
            sql_ms.push(t.elapsed().as_secs_f64() * 1e3);
        }
        let (em, es) = mean_stddev(&eql_ms);
        let (sm, ss) = mean_stddev(&sql_ms);
        rows.push(QueryReport {
            query: q.id.into(),
            count: eql.len(),
            eql_mean_ms: em,
            eql_stddev_ms: es,
            sql_mean_ms: sm,
            sql_stddev_ms: ss,
            agree: eql == sql,
        });
    }
    let eql_geomean_ms = geometric_mean(&rows.iter().map(|r| r.eql_mean_ms).collect::<Vec<_>>());
    let sql_geomean_ms = geometric_mean(&rows.iter().map(|r| r.sql_mean_ms).collect::<Vec<_>>());
    Ok(BenchReport { runs, queries: rows, eql_geomean_ms, sql_geomean_ms })
}

/// As [`run_suite_report`], failing on the first query whose backends disagree.
pub fn run_suite(bench: &BenchKb, queries: &[BenchQuery], runs: usize) -> Result<BenchReport> {
    let report = run_suite_report(bench, queries, runs)?;
    if let Some(bad) = report.queries.iter().find(|q| !q.agree) {
        let q = queries.iter().find(|q| q.id == bad.query).expect("reported query");
        let sample = sample_diff(&eql_keys(&bench.kb, &bench.keys, q)?, &sql_keys(&bench.store, q)?);
        return Err(BenchError::BackendDisagreement { query: bad.query.clone(), sample });
    }
    Ok(report)
}
