//! Python bindings. Results cross the boundary as plain dicts and lists,
//! built from the same JSON the command line prints.

use std::path::PathBuf;

use entitykb::kb::KnowledgeBase;
use entitykb::ontomatic::OntologyDoc;
use entitykb::ormatic::{derive_schema, load_graph, SqliteStore};
use entitykb_cli::fitting::{FitSession, FitSpec};
use entitykb_cli::ops::{self, ServiceError};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde_json::Value as Json;

create_exception!(entitykb_py, EntityKbError, PyException);

fn err(e: ServiceError) -> PyErr {
    EntityKbError::new_err(e.to_json().to_string())
}

fn to_py(py: Python<'_>, v: &Json) -> PyResult<PyObject> {
    let loads = py.import_bound("json")?.getattr("loads")?;
    Ok(loads.call1((v.to_string(),))?.unbind())
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| err(ServiceError::BadRequest(format!("{what}: {e}"))))
}

#[pyclass(name = "KnowledgeBase", module = "entitykb_py")]
struct PyKb {
    kb: KnowledgeBase,
}

#[pymethods]
impl PyKb {
    #[new]
    fn new() -> Self {
        PyKb { kb: KnowledgeBase::new() }
    }

    /// Opens `demo`, `university`, an .nt file or a JSON ontology document.
    #[staticmethod]
    #[pyo3(signature = (source, seed = 1))]
    fn open(source: &str, seed: u64) -> PyResult<Self> {
        Ok(PyKb { kb: ops::open_kb(Some(source), seed).map_err(err)? })
    }

    fn import_json(&mut self, py: Python<'_>, doc: &str) -> PyResult<PyObject> {
        let doc: OntologyDoc = parse(doc, "ontology document")?;
        to_py(py, &ops::import_doc(&doc, &mut self.kb).map_err(err)?)
    }

    fn import_file(&mut self, py: Python<'_>, path: PathBuf) -> PyResult<PyObject> {
        to_py(py, &ops::import_file(&path, &mut self.kb).map_err(err)?)
    }

    fn materialize(&mut self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &ops::materialize_json(&mut self.kb).map_err(err)?)
    }

    fn query(&self, py: Python<'_>, text: &str) -> PyResult<PyObject> {
        to_py(py, &ops::query_json(&self.kb, text).map_err(err)?)
    }

    fn statement_count(&self) -> usize {
        self.kb.statement_count()
    }

    fn save(&self, py: Python<'_>, path: PathBuf) -> PyResult<PyObject> {
        let mut st = SqliteStore::open(&path).map_err(|e| err(e.into()))?;
        to_py(py, &ops::save_kb(&self.kb, &mut st).map_err(err)?)
    }

    /// Loads the graph stored at `path`, using this KB's definitions.
    #[pyo3(signature = (path, cls = None))]
    fn load(&self, path: PathBuf, cls: Option<&str>) -> PyResult<Self> {
        let run = || -> Result<KnowledgeBase, ServiceError> {
            let st = SqliteStore::open(&path)?;
            let schema = derive_schema(&self.kb)?;
            Ok(load_graph(&st, &schema, &self.kb, cls, &[])?.kb)
        };
        Ok(PyKb { kb: run().map_err(err)? })
    }

    fn __len__(&self) -> usize {
        self.kb.individual_count()
    }
}

#[pyclass(name = "FitSession", module = "entitykb_py")]
struct PyFitSession {
    session: FitSession,
}

#[pymethods]
impl PyFitSession {
    /// `spec` is the same JSON accepted by `entitykb fit` and POST /fit/sessions.
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        let spec: FitSpec = parse(spec, "fit spec")?;
        Ok(PyFitSession { session: FitSession::new(1, &spec).map_err(err)? })
    }

    #[getter]
    fn state(&self) -> &'static str {
        self.session.state().name()
    }

    fn pending(&self, py: Python<'_>) -> PyResult<Option<PyObject>> {
        self.session.pending().map(|p| to_py(py, &p.to_json())).transpose()
    }

    fn submit(&mut self, py: Python<'_>, condition: &str) -> PyResult<PyObject> {
        to_py(py, &self.session.submit(condition).map_err(err)?.to_json())
    }

    fn module(&self) -> String {
        self.session.module()
    }

    fn trace(&self, py: Python<'_>, case: usize) -> PyResult<PyObject> {
        to_py(py, &self.session.trace(case).map_err(err)?)
    }
}

#[pymodule]
fn entitykb_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKb>()?;
    m.add_class::<PyFitSession>()?;
    m.add("EntityKbError", m.py().get_type_bound::<EntityKbError>())?;
    Ok(())
}
