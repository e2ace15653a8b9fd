use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::eql::{Compiled, Evaluator, StaticType};
use crate::kb::{ClassId, EntityId, KnowledgeBase, PropertyId, PropertyKind, Range, Value};

use super::{OntoError, Result, CANDIDATE, TOP};

pub const MAX_PASSES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleKind {
    SubProperty,
    Inverse,
    Symmetric,
    Transitive,
    DomainTyping,
    RangeTyping,
    WccClosure,
    Classification,
}

impl RuleKind {
    pub const ALL: [RuleKind; 8] = [
        RuleKind::SubProperty,
        RuleKind::Inverse,
        RuleKind::Symmetric,
        RuleKind::Transitive,
        RuleKind::DomainTyping,
        RuleKind::RangeTyping,
        RuleKind::WccClosure,
        RuleKind::Classification,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::SubProperty => "subproperty",
            RuleKind::Inverse => "inverse",
            RuleKind::Symmetric => "symmetric",
            RuleKind::Transitive => "transitive",
            RuleKind::DomainTyping => "domain-typing",
            RuleKind::RangeTyping => "range-typing",
            RuleKind::WccClosure => "wcc-closure",
            RuleKind::Classification => "classification",
        }
    }
}

/// Inferred statements per rule kind. Counts are statement deltas, so a
/// role typing that also adds the identity type counts both.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MaterializationReport {
    pub counts: BTreeMap<RuleKind, usize>,
    pub passes: usize,
    pub classification_passes: usize,
}

impl MaterializationReport {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn count(&self, kind: RuleKind) -> usize {
        self.counts.get(&kind).copied().unwrap_or(0)
    }
}

enum Inference {
    Assert(EntityId, PropertyId, Value),
    Type(EntityId, ClassId),
}

fn apply(kb: &mut KnowledgeBase, report: &mut MaterializationReport, kind: RuleKind, inf: Inference) -> Result<()> {
    let added = match inf {
        Inference::Assert(s, p, v) => {
            if kb.values(s, p).any(|x| *x == v) {
                return Ok(());
            }
            let before = kb.individual_statement_count(s);
            kb.assert_property(s, p, v)?;
            kb.individual_statement_count(s) - before
        }
        Inference::Type(s, c) => {
            let before = kb.individual_statement_count(s);
            kb.infer_type(s, c)?;
            kb.individual_statement_count(s) - before
        }
    };
    if added > 0 {
        *report.counts.entry(kind).or_default() += added;
    }
    Ok(())
}

fn is_sym_trans(kb: &KnowledgeBase, p: PropertyId) -> bool {
    let c = kb.property(p).characteristics;
    c.symmetric && c.transitive
}

/// Forward-chains property semantics to a fixpoint, closes symmetric and
/// transitive properties through connected components, then classifies.
pub fn materialize(kb: &mut KnowledgeBase) -> Result<MaterializationReport> {
    let mut report = MaterializationReport::default();
    let top = kb.class_id(TOP);
    let props: Vec<PropertyId> = kb.properties().map(|p| p.id).collect();
    loop {
        if report.passes >= MAX_PASSES {
            return Err(OntoError::FixpointNotReached(MAX_PASSES));
        }
        report.passes += 1;
        let mut found: Vec<(RuleKind, Inference)> = Vec::new();
        for &p in &props {
            let def = kb.property(p).clone();
            let sym_trans = is_sym_trans(kb, p);
            let subjects: Vec<EntityId> = kb.individuals().map(|i| i.id).collect();
            for s in subjects {
                let vals: Vec<Value> = kb.values(s, p).cloned().collect();
                if vals.is_empty() {
                    continue;
                }
                if Some(def.domain) != top && !kb.has_type(s, def.domain, true) {
                    found.push((RuleKind::DomainTyping, Inference::Type(s, def.domain)));
                }
                for v in &vals {
                    for &sup in &def.super_properties {
                        found.push((RuleKind::SubProperty, Inference::Assert(s, sup, v.clone())));
                    }
                    let Value::Ref(o) = v else { continue };
                    if let Range::Class(r) = def.range {
                        if Some(r) != top && !kb.has_type(*o, r, true) {
                            found.push((RuleKind::RangeTyping, Inference::Type(*o, r)));
                        }
                    }
                    if let Some(inv) = def.inverse_of {
                        found.push((RuleKind::Inverse, Inference::Assert(*o, inv, Value::Ref(s))));
                    }
                    if def.characteristics.symmetric && !sym_trans {
                        found.push((RuleKind::Symmetric, Inference::Assert(*o, p, Value::Ref(s))));
                    }
                }
                if def.characteristics.transitive && !sym_trans && def.kind == PropertyKind::Object {
                    for o in reachable(kb, s, p) {
                        found.push((RuleKind::Transitive, Inference::Assert(s, p, Value::Ref(o))));
                    }
                }
            }
        }
        let before = kb.statement_count();
        for (kind, inf) in found {
            apply(kb, &mut report, kind, inf)?;
        }
        for &p in &props {
            if is_sym_trans(kb, p) {
                let added = close_symmetric_transitive(kb, p)?;
                if added > 0 {
                    *report.counts.entry(RuleKind::WccClosure).or_default() += added;
                }
            }
        }
        if kb.statement_count() == before {
            break;
        }
    }
    let (classified, passes) = classify(kb)?;
    if classified > 0 {
        report.counts.insert(RuleKind::Classification, classified);
    }
    report.classification_passes = passes;
    Ok(report)
}

/// Everything reachable from `s` over `p` in at least one step, excluding
/// direct values and `s` itself unless a cycle leads back to it.
fn reachable(kb: &KnowledgeBase, s: EntityId, p: PropertyId) -> Vec<EntityId> {
    let direct: BTreeSet<EntityId> = kb.values(s, p).filter_map(Value::as_ref_id).collect();
    let mut seen = direct.clone();
    let mut stack: Vec<EntityId> = direct.iter().copied().collect();
    let mut out = Vec::new();
    while let Some(x) = stack.pop() {
        for y in kb.values(x, p).filter_map(Value::as_ref_id) {
            if seen.insert(y) {
                out.push(y);
                stack.push(y);
            }
        }
    }
    out
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Relates every ordered pair of distinct members in each weakly connected
/// component of `property`'s asserted edges. Self-pairs are added only when
/// the property is reflexive. Returns the number of assertions added.
pub fn close_symmetric_transitive(kb: &mut KnowledgeBase, property: PropertyId) -> Result<usize> {
    let def = kb.property(property).clone();
    if !(def.characteristics.symmetric && def.characteristics.transitive) {
        return Err(OntoError::NotSymmetricTransitive(def.name));
    }
    let mut index: HashMap<EntityId, usize> = HashMap::new();
    let mut nodes: Vec<EntityId> = Vec::new();
    let mut edges = Vec::new();
    let mut node = |id: EntityId, nodes: &mut Vec<EntityId>| {
        *index.entry(id).or_insert_with(|| {
            nodes.push(id);
            nodes.len() - 1
        })
    };
    for ind in kb.individuals() {
        for v in kb.values(ind.id, property) {
            if let Value::Ref(o) = v {
                let a = node(ind.id, &mut nodes);
                let b = node(*o, &mut nodes);
                edges.push((a, b));
            }
        }
    }
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut components: BTreeMap<usize, Vec<EntityId>> = BTreeMap::new();
    for i in 0..nodes.len() {
        let r = find(&mut parent, i);
        components.entry(r).or_default().push(nodes[i]);
    }
    let before = kb.property_value_count();
    for members in components.values() {
        for &a in members {
            for &b in members {
                if a == b && !def.characteristics.reflexive {
                    continue;
                }
                let v = Value::Ref(b);
                if !kb.values(a, property).any(|x| *x == v) {
                    kb.assert_property(a, property, v)?;
                }
            }
        }
    }
    Ok(kb.property_value_count() - before)
}

/// Adds every type whose axiom an individual satisfies, repeating until no
/// pass adds anything. Returns the number of statements added.
pub fn classify_individuals(kb: &mut KnowledgeBase) -> Result<usize> {
    Ok(classify(kb)?.0)
}

fn classify(kb: &mut KnowledgeBase) -> Result<(usize, usize)> {
    let axioms: Vec<ClassId> = kb.classes().filter(|c| c.axiom.is_some()).map(|c| c.id).collect();
    let cap = kb.classes().count() + 1;
    let mut added = 0;
    let outer = [(CANDIDATE, Some(StaticType::Entity(None)))];
    for pass in 1..=cap {
        let new = {
            let snap = kb.snapshot();
            let ev = Evaluator::new(&*snap);
            let mut new = Vec::new();
            for &c in &axioms {
                let cond = snap.class(c).axiom.as_ref().expect("axiom-bearing class");
                let compiled = Compiled::new(cond, &*snap, &outer)?;
                for ind in snap.individuals() {
                    if !snap.has_type(ind.id, c, true) && compiled.eval_with(&ev, &[Value::Ref(ind.id)])? {
                        new.push((ind.id, c));
                    }
                }
            }
            new
        };
        if new.is_empty() {
            return Ok((added, pass));
        }
        for (id, c) in new {
            let before = kb.individual_statement_count(id);
            kb.infer_type(id, c)?;
            added += kb.individual_statement_count(id) - before;
        }
    }
    Err(OntoError::FixpointNotReached(cap))
}
