use std::collections::BTreeMap;

use crate::kb::{EntityId, Value};

use super::{CaseGraph, ConclusionValue, RdrError, RuleTree, Trace};

/// A set of rule trees over one case, each writing to its own target
/// attribute; trees see each other's conclusions on later passes.
#[derive(Clone, Debug, PartialEq)]
pub struct Grdr {
    pub trees: BTreeMap<String, RuleTree>,
    pub max_iterations: usize,
}

impl Default for Grdr {
    fn default() -> Self {
        Grdr { trees: BTreeMap::new(), max_iterations: 100 }
    }
}

impl Grdr {
    pub fn new() -> Self {
        Grdr::default()
    }

    pub fn add_tree(&mut self, name: &str, tree: RuleTree) {
        self.trees.insert(name.into(), tree);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrdrOutcome {
    /// The case with every derived conclusion attached to the root.
    pub case: CaseGraph,
    pub conclusions: BTreeMap<String, Vec<ConclusionValue>>,
    /// Passes run, including the final one that changed nothing.
    pub passes: usize,
    /// Per pass, per tree.
    pub traces: Vec<BTreeMap<String, Trace>>,
}

fn same_object(case: &CaseGraph, id: EntityId, v: &ConclusionValue) -> bool {
    if case.types(id) != [v.type_name.as_str()] {
        return false;
    }
    let fields: Vec<_> = case.fields(id).into_iter().filter(|(_, vs)| !vs.is_empty()).collect();
    fields.len() == v.fields.values().filter(|vs| !vs.is_empty()).count()
        && fields.iter().all(|(k, vs)| v.fields.get(*k).is_some_and(|w| w.as_slice() == *vs))
}

/// Runs every tree to a fixpoint. Each pass classifies all trees against
/// the case as it stood at the start of the pass, then applies the results.
pub fn run_grdr(grdr: &Grdr, case: &CaseGraph) -> Result<GrdrOutcome, RdrError> {
    let mut case = case.clone();
    let root = case.root();
    let mut traces = Vec::new();
    let mut conclusions: BTreeMap<String, Vec<ConclusionValue>> = BTreeMap::new();
    for pass in 1..=grdr.max_iterations {
        let mut pass_traces = BTreeMap::new();
        let mut produced = Vec::new();
        for (name, tree) in &grdr.trees {
            let c = tree.classify(&case)?;
            pass_traces.insert(name.clone(), c.trace);
            for v in c.conclusions {
                produced.push((name.clone(), tree.target.attribute.clone(), v));
            }
        }
        traces.push(pass_traces);
        let mut changed = false;
        for (name, attr, v) in produced {
            let present = case.field(root, &attr).iter().any(|x| x.as_ref_id().is_some_and(|id| same_object(&case, id, &v)));
            if !present {
                let fields = v.fields.iter().map(|(k, vs)| (k.as_str(), vs.clone())).collect();
                let id = case.add_object(&[v.type_name.as_str()], fields);
                case.push_value(root, &attr, Value::Ref(id));
                changed = true;
            }
            let list = conclusions.entry(name).or_default();
            if !list.contains(&v) {
                list.push(v);
            }
        }
        if !changed {
            return Ok(GrdrOutcome { case, conclusions, passes: pass, traces });
        }
    }
    Err(RdrError::FixpointNotReached(grdr.max_iterations))
}
