//! Ontology ingestion: T-Box and A-Box import from a JSON document,
//! compilation of class restrictions into query predicates, forward-chaining
//! materialization and axiom-driven classification.

mod materialize;
mod ntriples;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eql::{AggFn, CompareOp, Condition, EqlError, Literal, Operand, Path, VarDecl};
use crate::kb::{
    Characteristics, ClassId, ClassSpec, EntityId, KbError, KnowledgeBase, PropertyId, PropertyKind, PropertySpec, Range,
    ScalarKind, Value,
};

pub use materialize::{classify_individuals, close_symmetric_transitive, materialize, MaterializationReport, RuleKind};
pub use ntriples::{import_ntriples, RDF_TYPE};

/// Name of the implicit top class used when a property has no declared domain.
pub const TOP: &str = "Thing";
/// Variable bound to the individual under test in compiled axioms.
pub const CANDIDATE: &str = "candidate";

#[derive(Debug, Error, PartialEq)]
pub enum OntoError {
    #[error("unresolved reference to `{0}`")]
    UnresolvedReference(String),
    #[error("inconsistent disjointness: {0}")]
    InconsistentDisjointness(String),
    #[error("unsupported construct: {0}")]
    UnsupportedConstruct(String),
    #[error("no fixpoint after {0} passes")]
    FixpointNotReached(usize),
    #[error("`{0}` is not both symmetric and transitive")]
    NotSymmetricTransitive(String),
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Query(#[from] EqlError),
}

pub type Result<T, E = OntoError> = std::result::Result<T, E>;

/// A literal or IRI appearing in a document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DocValue {
    Iri { iri: String },
    Bool(bool),
    Int(i64),
    Decimal(f64),
    Str(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictionExpr {
    IntersectionOf(Vec<RestrictionExpr>),
    UnionOf(Vec<RestrictionExpr>),
    ClassRef(String),
    SomeValuesFrom { property: String, filler: Box<RestrictionExpr> },
    AllValuesFrom { property: String, filler: Box<RestrictionExpr> },
    HasValue { property: String, value: DocValue },
    MinQualifiedCardinality { n: u32, property: String, filler: Box<RestrictionExpr> },
    MaxQualifiedCardinality { n: u32, property: String, filler: Box<RestrictionExpr> },
}

impl RestrictionExpr {
    pub fn class(name: &str) -> Self {
        RestrictionExpr::ClassRef(name.into())
    }

    pub fn some(property: &str, filler: RestrictionExpr) -> Self {
        RestrictionExpr::SomeValuesFrom { property: property.into(), filler: Box::new(filler) }
    }

    pub fn all(property: &str, filler: RestrictionExpr) -> Self {
        RestrictionExpr::AllValuesFrom { property: property.into(), filler: Box::new(filler) }
    }

    pub fn min(n: u32, property: &str, filler: RestrictionExpr) -> Self {
        RestrictionExpr::MinQualifiedCardinality { n, property: property.into(), filler: Box::new(filler) }
    }

    pub fn max(n: u32, property: &str, filler: RestrictionExpr) -> Self {
        RestrictionExpr::MaxQualifiedCardinality { n, property: property.into(), filler: Box::new(filler) }
    }

    pub fn has_value(property: &str, value: DocValue) -> Self {
        RestrictionExpr::HasValue { property: property.into(), value }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassEntry {
    pub name: String,
    pub iri: Option<String>,
    pub superclasses: Vec<String>,
    pub disjoint_with: Vec<String>,
    pub role_for: Option<String>,
    pub equivalent_to: Option<RestrictionExpr>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropertyEntry {
    pub name: String,
    pub iri: Option<String>,
    pub domain: Option<String>,
    pub range: String,
    pub transitive: bool,
    pub symmetric: bool,
    pub functional: bool,
    pub reflexive: bool,
    pub inverse_of: Option<String>,
    pub sub_property_of: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomEntry {
    pub class: String,
    pub expr: RestrictionExpr,
}

/// Property values keyed by property name; a single value may stand for a one-element list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(DocValue),
    Many(Vec<DocValue>),
}

impl OneOrMany {
    fn values(&self) -> &[DocValue] {
        match self {
            OneOrMany::One(v) => std::slice::from_ref(v),
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndividualEntry {
    pub iri: String,
    pub types: Vec<String>,
    pub assertions: BTreeMap<String, OneOrMany>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OntologyDoc {
    pub classes: Vec<ClassEntry>,
    pub properties: Vec<PropertyEntry>,
    pub axioms: Vec<AxiomEntry>,
    pub individuals: Vec<IndividualEntry>,
}

impl OntologyDoc {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| OntoError::Syntax { line: e.line(), reason: e.to_string() })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TboxImport {
    pub classes: Vec<ClassId>,
    pub properties: Vec<PropertyId>,
    /// Classes turned into role classes, with the identity class they attach to.
    pub roles: Vec<(ClassId, ClassId)>,
    pub axioms: Vec<ClassId>,
}

fn kb_error(e: KbError) -> OntoError {
    match e {
        KbError::UnknownClass(n) | KbError::UnknownProperty(n) => OntoError::UnresolvedReference(n),
        KbError::DisjointWithAncestor { class, other } => OntoError::InconsistentDisjointness(format!("{class} and {other}")),
        other => OntoError::Kb(other),
    }
}

/// Classes that must become roles because some individual instantiates two
/// non-disjoint siblings. Returns role class -> identity class.
fn implicit_roles(doc: &OntologyDoc) -> BTreeMap<String, String> {
    let parents: HashMap<&str, &[String]> = doc.classes.iter().map(|c| (c.name.as_str(), c.superclasses.as_slice())).collect();
    let disjoint: BTreeSet<(&str, &str)> = doc
        .classes
        .iter()
        .flat_map(|c| c.disjoint_with.iter().flat_map(move |d| [(c.name.as_str(), d.as_str()), (d.as_str(), c.name.as_str())]))
        .collect();
    let ancestors = |c: &str| -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack = vec![c.to_string()];
        while let Some(x) = stack.pop() {
            for p in parents.get(x.as_str()).copied().unwrap_or(&[]) {
                if out.insert(p.clone()) {
                    stack.push(p.clone());
                }
            }
        }
        out
    };
    let mut out = BTreeMap::new();
    for ind in &doc.individuals {
        for (i, a) in ind.types.iter().enumerate() {
            for b in &ind.types[i + 1..] {
                if disjoint.contains(&(a.as_str(), b.as_str())) {
                    continue;
                }
                let (aa, ab) = (ancestors(a), ancestors(b));
                if aa.contains(b) || ab.contains(a) {
                    continue;
                }
                let shared: Vec<&String> = parents.get(a.as_str()).copied().unwrap_or(&[]).iter().filter(|p| ab.contains(*p)).collect();
                if let Some(identity) = shared.first() {
                    out.entry(a.clone()).or_insert_with(|| identity.to_string());
                    out.entry(b.clone()).or_insert_with(|| identity.to_string());
                }
            }
        }
    }
    out
}

/// Registers classes, properties and axioms. Classes carrying `role_for`, and
/// sibling classes that some document individual instantiates together,
/// become role classes of their identity class.
pub fn import_tbox(doc: &OntologyDoc, kb: &mut KnowledgeBase) -> Result<TboxImport> {
    let mut out = TboxImport::default();
    let mut roles = implicit_roles(doc);
    for c in &doc.classes {
        if let Some(r) = &c.role_for {
            roles.insert(c.name.clone(), r.clone());
        }
    }
    // An identity class can't itself be a role: follow chains to the identity.
    let keys: Vec<String> = roles.keys().cloned().collect();
    for k in keys {
        let mut target = roles[&k].clone();
        let mut guard = 0;
        while let Some(next) = roles.get(&target) {
            target = next.clone();
            guard += 1;
            if guard > roles.len() {
                return Err(OntoError::InconsistentDisjointness(format!("role chain through `{k}` is cyclic")));
            }
        }
        roles.insert(k, target);
    }
    let needs_top = doc.properties.iter().any(|p| p.domain.is_none()) && kb.class_id(TOP).is_none() && !doc.classes.iter().any(|c| c.name == TOP);
    if needs_top {
        out.classes.push(kb.define_class(ClassSpec::new(TOP)).map_err(kb_error)?);
    }

    let declared: HashMap<&str, &ClassEntry> = doc.classes.iter().map(|c| (c.name.as_str(), c)).collect();
    let alias_target = |c: &ClassEntry| match &c.equivalent_to {
        Some(RestrictionExpr::ClassRef(t)) => Some(t.clone()),
        _ => None,
    };
    // Depth-first topological order over superclass, role and alias edges.
    let mut order: Vec<&ClassEntry> = Vec::new();
    let mut state: HashMap<&str, u8> = HashMap::new();
    fn visit<'a>(
        name: &'a str,
        declared: &HashMap<&'a str, &'a ClassEntry>,
        roles: &'a BTreeMap<String, String>,
        alias: &dyn Fn(&ClassEntry) -> Option<String>,
        state: &mut HashMap<&'a str, u8>,
        order: &mut Vec<&'a ClassEntry>,
    ) -> Result<()> {
        match state.get(name) {
            Some(2) => return Ok(()),
            Some(1) => return Err(OntoError::Kb(KbError::CycleDetected { class: name.into(), superclass: name.into() })),
            _ => {}
        }
        let Some(entry) = declared.get(name) else { return Ok(()) };
        state.insert(name, 1);
        let mut deps: Vec<&str> = entry.superclasses.iter().map(String::as_str).collect();
        if let Some(r) = roles.get(name) {
            deps.push(r);
        }
        let targets = alias(entry);
        for d in deps {
            visit(d, declared, roles, alias, state, order)?;
        }
        if let Some(t) = &targets {
            if let Some((k, _)) = declared.get_key_value(t.as_str()) {
                visit(*k, declared, roles, alias, state, order)?;
            }
        }
        state.insert(name, 2);
        order.push(entry);
        Ok(())
    }
    for c in &doc.classes {
        visit(&c.name, &declared, &roles, &alias_target, &mut state, &mut order)?;
    }

    let mut disjoint_pairs: BTreeSet<(String, String)> = BTreeSet::new();
    for c in &doc.classes {
        for d in &c.disjoint_with {
            if !declared.contains_key(d.as_str()) && kb.class_id(d).is_none() {
                return Err(OntoError::UnresolvedReference(d.clone()));
            }
            disjoint_pairs.insert((c.name.clone(), d.clone()));
            disjoint_pairs.insert((d.clone(), c.name.clone()));
        }
    }
    for c in order {
        if let Some(target) = alias_target(c) {
            kb.alias_class(&c.name, &target).map_err(kb_error)?;
            for s in &c.superclasses {
                kb.add_superclass(&target, s).map_err(kb_error)?;
            }
            continue;
        }
        let mut spec = ClassSpec::new(&c.name);
        spec.iri = c.iri.clone();
        for s in &c.superclasses {
            if kb.class_id(s).is_none() {
                return Err(OntoError::UnresolvedReference(s.clone()));
            }
            spec = spec.superclass(s);
        }
        for (a, b) in &disjoint_pairs {
            if *a == c.name && kb.class_id(b).is_some() {
                spec = spec.disjoint_with(b);
            }
        }
        if let Some(identity) = roles.get(&c.name) {
            if kb.class_id(identity).is_none() {
                return Err(OntoError::UnresolvedReference(identity.clone()));
            }
            let inherited = c.superclasses.iter().any(|s| kb.class_id(s).is_some_and(|id| kb.class(id).role_for.is_some()));
            if !inherited {
                spec = spec.role_for(identity);
            }
        }
        let id = kb.define_class(spec).map_err(kb_error)?;
        if let Some(identity) = kb.class(id).role_for {
            out.roles.push((id, identity));
        }
        out.classes.push(id);
    }

    // Properties may reference each other (inverse, super-property) in any order.
    let mut pending: Vec<&PropertyEntry> = doc.properties.iter().collect();
    while !pending.is_empty() {
        let before = pending.len();
        let mut rest = Vec::new();
        for p in pending {
            let inverse_ready = match &p.inverse_of {
                None => true,
                Some(d) => {
                    kb.property_id(d).is_some()
                        || doc.properties.iter().any(|q| q.name == *d && q.inverse_of.as_deref() == Some(p.name.as_str()))
                }
            };
            let ready = inverse_ready && p.sub_property_of.iter().all(|s| kb.property_id(s).is_some());
            if !ready {
                rest.push(p);
                continue;
            }
            out.properties.push(define_property(kb, p)?);
        }
        if rest.len() == before {
            let missing = rest[0].inverse_of.iter().chain(&rest[0].sub_property_of).find(|d| kb.property_id(d).is_none()).cloned();
            return Err(OntoError::UnresolvedReference(missing.unwrap_or_else(|| rest[0].name.clone())));
        }
        pending = rest;
    }

    let mut axioms: BTreeMap<ClassId, Vec<Condition>> = BTreeMap::new();
    for c in &doc.classes {
        if let Some(expr) = &c.equivalent_to {
            if !matches!(expr, RestrictionExpr::ClassRef(_)) {
                let id = kb.require_class(&c.name).map_err(kb_error)?;
                axioms.entry(id).or_default().push(compile_axiom(expr, kb)?);
            }
        }
    }
    for a in &doc.axioms {
        let id = kb.class_id(&a.class).ok_or_else(|| OntoError::UnresolvedReference(a.class.clone()))?;
        axioms.entry(id).or_default().push(compile_axiom(&a.expr, kb)?);
    }
    for (id, mut conds) in axioms {
        if let Some(existing) = kb.class(id).axiom.clone() {
            conds.insert(0, existing);
        }
        let cond = if conds.len() == 1 { conds.pop().unwrap() } else { Condition::Or(conds) };
        kb.set_axiom(id, cond);
        out.axioms.push(id);
    }
    Ok(out)
}

fn define_property(kb: &mut KnowledgeBase, p: &PropertyEntry) -> Result<PropertyId> {
    let domain = p.domain.clone().unwrap_or_else(|| TOP.to_string());
    if kb.class_id(&domain).is_none() {
        return Err(OntoError::UnresolvedReference(domain));
    }
    if ScalarKind::parse(&p.range).is_none() && kb.class_id(&p.range).is_none() {
        return Err(OntoError::UnresolvedReference(p.range.clone()));
    }
    let mut spec = PropertySpec::new(&p.name, &domain, &p.range).with(Characteristics {
        transitive: p.transitive,
        symmetric: p.symmetric,
        functional: p.functional,
        reflexive: p.reflexive,
    });
    spec.iri = p.iri.clone();
    // Only the second of an inverse pair carries the link.
    if let Some(inv) = &p.inverse_of {
        if kb.property_id(inv).is_some_and(|id| kb.property(id).inverse_of.is_none()) {
            spec = spec.inverse_of(inv);
        }
    }
    for s in &p.sub_property_of {
        spec = spec.sub_property_of(s);
    }
    kb.define_property(spec).map_err(kb_error)
}

fn doc_value(v: &DocValue, kind: PropertyKind, kb: &KnowledgeBase, iris: &HashMap<String, EntityId>) -> Result<Value> {
    Ok(match (v, kind) {
        (DocValue::Iri { iri }, _) | (DocValue::Str(iri), PropertyKind::Object) => {
            let id = iris.get(iri).copied().or_else(|| kb.individual_by_iri(iri));
            Value::Ref(id.ok_or_else(|| OntoError::UnresolvedReference(iri.clone()))?)
        }
        (DocValue::Bool(b), _) => Value::Bool(*b),
        (DocValue::Int(i), _) => Value::Int(*i),
        (DocValue::Decimal(d), _) => Value::Decimal(*d),
        (DocValue::Str(s), _) => Value::Str(s.clone()),
    })
}

/// Creates the document's individuals, then installs their assertions.
/// Returns the number of individuals created.
pub fn import_abox(doc: &OntologyDoc, kb: &mut KnowledgeBase) -> Result<usize> {
    let mut iris = HashMap::new();
    for ind in &doc.individuals {
        let mut types = Vec::new();
        for t in &ind.types {
            types.push(kb.class_id(t).ok_or_else(|| OntoError::UnresolvedReference(t.clone()))?);
        }
        let id = kb.add_individual(Some(&ind.iri), &types).map_err(kb_error)?;
        iris.insert(ind.iri.clone(), id);
    }
    for ind in &doc.individuals {
        let id = iris[&ind.iri];
        for (prop, values) in &ind.assertions {
            let p = kb.property_id(prop).ok_or_else(|| OntoError::UnresolvedReference(prop.clone()))?;
            let kind = kb.property(p).kind;
            for v in values.values() {
                let v = doc_value(v, kind, kb, &iris)?;
                kb.assert_property(id, p, v)?;
            }
        }
    }
    Ok(doc.individuals.len())
}

/// T-Box then A-Box.
pub fn import_document(doc: &OntologyDoc, kb: &mut KnowledgeBase) -> Result<(TboxImport, usize)> {
    let t = import_tbox(doc, kb)?;
    let n = import_abox(doc, kb)?;
    Ok((t, n))
}

/// Compiles a restriction into a condition over the free variable `candidate`.
pub fn compile_axiom(expr: &RestrictionExpr, kb: &KnowledgeBase) -> Result<Condition> {
    let mut fresh = 0usize;
    compile(expr, CANDIDATE, kb, &mut fresh)
}

fn compile(expr: &RestrictionExpr, subject: &str, kb: &KnowledgeBase, fresh: &mut usize) -> Result<Condition> {
    let property = |name: &str| kb.property_id(name).ok_or_else(|| OntoError::UnresolvedReference(name.into()));
    let mut var = || {
        *fresh += 1;
        format!("v{fresh}")
    };
    Ok(match expr {
        RestrictionExpr::IntersectionOf(items) => {
            Condition::And(items.iter().map(|e| compile(e, subject, kb, fresh)).collect::<Result<_>>()?)
        }
        RestrictionExpr::UnionOf(items) => {
            Condition::Or(items.iter().map(|e| compile(e, subject, kb, fresh)).collect::<Result<_>>()?)
        }
        RestrictionExpr::ClassRef(c) => {
            if kb.class_id(c).is_none() {
                return Err(OntoError::UnresolvedReference(c.clone()));
            }
            Condition::IsA(Path::var(subject), c.clone())
        }
        RestrictionExpr::SomeValuesFrom { property: p, filler } => {
            property(p)?;
            let v = var();
            let body = compile(filler, &v, kb, fresh)?;
            Condition::Exists(VarDecl::from_path(&v, Path::var(subject).attr(p)), Box::new(body))
        }
        RestrictionExpr::AllValuesFrom { property: p, filler } => {
            property(p)?;
            let v = var();
            let body = compile(filler, &v, kb, fresh)?;
            Condition::ForAll(VarDecl::from_path(&v, Path::var(subject).attr(p)), Box::new(body))
        }
        RestrictionExpr::HasValue { property: p, value } => {
            property(p)?;
            let lit = match value {
                DocValue::Iri { iri } => Literal::Iri(iri.clone()),
                DocValue::Bool(b) => Literal::Bool(*b),
                DocValue::Int(i) => Literal::Int(*i),
                DocValue::Decimal(d) => Literal::Decimal(*d),
                DocValue::Str(s) => match kb.property(property(p)?).range {
                    Range::Class(_) => Literal::Iri(s.clone()),
                    Range::Scalar(_) => Literal::Str(s.clone()),
                },
            };
            Condition::Contains(Path::var(subject).attr(p), Operand::Literal(lit))
        }
        RestrictionExpr::MinQualifiedCardinality { n, property: p, filler }
        | RestrictionExpr::MaxQualifiedCardinality { n, property: p, filler } => {
            property(p)?;
            let op = if matches!(expr, RestrictionExpr::MinQualifiedCardinality { .. }) { CompareOp::Ge } else { CompareOp::Le };
            let path = match filler.as_ref() {
                RestrictionExpr::ClassRef(c) if c == TOP && kb.class_id(TOP).is_none() => Path::var(subject).attr(p),
                RestrictionExpr::ClassRef(c) => {
                    if kb.class_id(c).is_none() {
                        return Err(OntoError::UnresolvedReference(c.clone()));
                    }
                    Path::var(subject).attr(p).of_type(c)
                }
                other if *n == 0 && op == CompareOp::Le => {
                    let v = var();
                    let body = compile(other, &v, kb, fresh)?;
                    return Ok(Condition::not(Condition::Exists(VarDecl::from_path(&v, Path::var(subject).attr(p)), Box::new(body))));
                }
                other if *n == 1 && op == CompareOp::Ge => {
                    let v = var();
                    let body = compile(other, &v, kb, fresh)?;
                    return Ok(Condition::Exists(VarDecl::from_path(&v, Path::var(subject).attr(p)), Box::new(body)));
                }
                _ => {
                    return Err(OntoError::UnsupportedConstruct(format!(
                        "qualified cardinality {n} on `{p}` needs a named filler class"
                    )))
                }
            };
            Condition::Aggregate { agg: AggFn::Count, path, op, value: Literal::Int(*n as i64) }
        }
    })
}

#[cfg(test)]
mod tests;
