//! Ripple-down rules: single- and multi-conclusion trees, general
//! (fixpoint) collections, conflict-driven fitting against an expert, and a
//! portable text module format.

mod case;
mod fit;
mod grdr;
mod module;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::eql::{self, Compiled, Condition, EqlError, Evaluator, ObjectGraph, Operand};
use crate::kb::Value;

pub use case::CaseGraph;
pub use fit::{fit_case, CaseQuery, Expert, FitReport, FitStep, Fitter, Prompt, ScriptedExpert};
pub use grdr::{run_grdr, Grdr, GrdrOutcome};
pub use module::{load_rule_module, load_rule_module_with_types, parse_conclusion, save_grdr_module, save_rule_module, RuleModule};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum RdrError {
    #[error("rule {rule} failed to evaluate: {cause}")]
    ConditionEvaluationError { rule: usize, cause: EqlError },
    #[error("expert condition rejected: {0}")]
    ExpertConditionRejected(String),
    #[error("invalid expert condition: {0}")]
    InvalidCondition(EqlError),
    #[error("the expert aborted the fitting session")]
    ExpertAborted,
    #[error("no fixpoint after {0} iterations")]
    FixpointNotReached(usize),
    #[error("rule module line {line}: {cause}")]
    ModuleParseError { line: usize, cause: String },
    #[error("unknown target type `{0}`")]
    UnknownTargetType(String),
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("case targets `{found}` but the tree targets `{expected}`")]
    TargetMismatch { expected: String, found: String },
    #[error("single-conclusion tree cannot hold {0} expected conclusions")]
    TooManyConclusions(usize),
    #[error("fitting did not converge after {0} edits")]
    FittingDiverged(usize),
    #[error("no fitting question is pending")]
    NothingPending,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TreeKind {
    Single,
    Multi,
}

impl TreeKind {
    pub fn code(self) -> &'static str {
        match self {
            TreeKind::Single => "SC",
            TreeKind::Multi => "MC",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target {
    pub attribute: String,
    pub type_name: String,
    pub mutually_exclusive: bool,
}

/// What a rule concludes when it is the deciding rule for a case.
#[derive(Clone, Debug, PartialEq)]
pub enum Conclusion {
    /// Suppresses the parent's conclusion without replacing it.
    Stop,
    Infer { type_name: String, fields: Vec<(String, Operand)> },
}

impl Conclusion {
    pub fn infer(type_name: &str, fields: Vec<(&str, Operand)>) -> Self {
        Conclusion::Infer {
            type_name: type_name.into(),
            fields: fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

/// A conclusion evaluated on a concrete case.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConclusionValue {
    pub type_name: String,
    pub fields: BTreeMap<String, Vec<Value>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Except,
    Alternative,
    Refine,
}

impl Slot {
    pub fn code(self) -> &'static str {
        match self {
            Slot::Except => "except",
            Slot::Alternative => "alt",
            Slot::Refine => "refine",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub id: usize,
    pub condition: Condition,
    /// `None` only on the root (default rule concluding nothing).
    pub conclusion: Option<Conclusion>,
    pub except: Option<usize>,
    pub alternative: Option<usize>,
    pub refinements: Vec<usize>,
    pub parent: Option<(usize, Slot)>,
    /// Index into the tree's stored cases.
    pub cornerstone: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredCase {
    pub case: CaseGraph,
    pub recorded: Vec<ConclusionValue>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleTree {
    pub kind: TreeKind,
    pub target: Target,
    pub case_var: String,
    pub rules: Vec<Rule>,
    pub cases: Vec<StoredCase>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub rule: usize,
    pub fired: bool,
    pub contributed: Option<ConclusionValue>,
    /// Rule ids from the root down to this rule.
    pub path: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

impl Trace {
    /// Conclusions reconstructed from the contributing steps.
    pub fn conclusions(&self) -> Vec<ConclusionValue> {
        let mut out: Vec<ConclusionValue> = Vec::new();
        for s in &self.steps {
            if let Some(c) = &s.contributed {
                if !out.contains(c) {
                    out.push(c.clone());
                }
            }
        }
        out
    }

    pub fn fired_rules(&self) -> Vec<usize> {
        self.steps.iter().filter(|s| s.fired).map(|s| s.rule).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let steps: Vec<serde_json::Value> = self
            .steps
            .iter()
            .map(|s| {
                serde_json::json!({
                    "rule": s.rule,
                    "fired": s.fired,
                    "contributed": s.contributed.as_ref().map(fit::conclusion_json),
                    "path": s.path,
                })
            })
            .collect();
        let conclusions: Vec<serde_json::Value> = self.conclusions().iter().map(fit::conclusion_json).collect();
        serde_json::json!({ "steps": steps, "conclusions": conclusions })
    }
}

/// Evaluates `condition` with `case_var` bound to the case root.
pub fn condition_holds(condition: &Condition, case: &CaseGraph, case_var: &str) -> Result<bool, EqlError> {
    Compiled::new(condition, case, &[(case_var, None)])?.eval(case, &[Value::Ref(case.root())])
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub conclusions: Vec<ConclusionValue>,
    /// The rule that decided each conclusion, parallel to `conclusions`.
    pub deciding: Vec<usize>,
    pub trace: Trace,
}

impl RuleTree {
    pub fn new(kind: TreeKind, target: Target) -> Self {
        RuleTree {
            kind,
            target,
            case_var: "case".into(),
            rules: vec![Rule {
                id: 0,
                condition: Condition::truth(),
                conclusion: None,
                except: None,
                alternative: None,
                refinements: Vec::new(),
                parent: None,
                cornerstone: None,
            }],
            cases: Vec::new(),
        }
    }

    pub fn single(attribute: &str, type_name: &str) -> Self {
        RuleTree::new(
            TreeKind::Single,
            Target { attribute: attribute.into(), type_name: type_name.into(), mutually_exclusive: true },
        )
    }

    pub fn multi(attribute: &str, type_name: &str) -> Self {
        RuleTree::new(
            TreeKind::Multi,
            Target { attribute: attribute.into(), type_name: type_name.into(), mutually_exclusive: false },
        )
    }

    pub fn root(&self) -> &Rule {
        &self.rules[0]
    }

    pub fn rule(&self, id: usize) -> &Rule {
        &self.rules[id]
    }

    /// Number of rules excluding the default root.
    pub fn rule_count(&self) -> usize {
        self.rules.len() - 1
    }

    pub fn depth(&self) -> usize {
        self.rules.iter().map(|r| self.path_to(r.id).len() - 1).max().unwrap_or(0)
    }

    /// Ids from the root to `id`, following except/refinement edges (alternatives are siblings).
    pub fn path_to(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some((p, slot)) = self.rules[cur].parent {
            cur = p;
            if slot != Slot::Alternative {
                out.push(p);
            }
        }
        if *out.last().unwrap() != 0 {
            out.push(0);
        }
        out.reverse();
        out
    }

    /// Adds a rule under `parent` in `slot`. For `Except` and `Alternative`
    /// an occupied slot pushes the rule to the end of the alternative chain.
    pub fn attach(&mut self, parent: usize, slot: Slot, condition: Condition, conclusion: Conclusion, cornerstone: Option<usize>) -> usize {
        let id = self.rules.len();
        let (mut p, mut s) = (parent, slot);
        loop {
            let next = match s {
                Slot::Except => self.rules[p].except,
                Slot::Alternative => self.rules[p].alternative,
                Slot::Refine => None,
            };
            match next {
                Some(n) => {
                    p = n;
                    s = Slot::Alternative;
                }
                None => break,
            }
        }
        match s {
            Slot::Except => self.rules[p].except = Some(id),
            Slot::Alternative => self.rules[p].alternative = Some(id),
            Slot::Refine => self.rules[p].refinements.push(id),
        }
        self.rules.push(Rule {
            id,
            condition,
            conclusion: Some(conclusion),
            except: None,
            alternative: None,
            refinements: Vec::new(),
            parent: Some((p, s)),
            cornerstone,
        });
        id
    }

    /// Rule ids in pre-order: except child, then refinements, then the alternative.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.rules.len());
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            out.push(id);
            let r = &self.rules[id];
            if let Some(a) = r.alternative {
                stack.push(a);
            }
            for c in r.refinements.iter().rev() {
                stack.push(*c);
            }
            if let Some(e) = r.except {
                stack.push(e);
            }
        }
        out
    }

    pub fn classify(&self, case: &CaseGraph) -> Result<Classification, RdrError> {
        let ev = Evaluator::new(case);
        let root = case.root();
        let cv = self.case_var.as_str();
        let fires = |id: usize| -> Result<bool, RdrError> {
            let err = |cause| RdrError::ConditionEvaluationError { rule: id, cause };
            let compiled = Compiled::new(&self.rules[id].condition, case, &[(cv, None)]).map_err(err)?;
            compiled.eval_with(&ev, &[Value::Ref(root)]).map_err(err)
        };
        let mut trace = Trace::default();
        let mut conclusions = Vec::new();
        let mut deciding = Vec::new();
        match self.kind {
            TreeKind::Single => {
                let mut cur = Some(0usize);
                let mut last = 0usize;
                while let Some(id) = cur {
                    let fired = fires(id)?;
                    trace.steps.push(TraceStep { rule: id, fired, contributed: None, path: self.path_to(id) });
                    if fired {
                        last = id;
                        cur = self.rules[id].except;
                    } else {
                        cur = self.rules[id].alternative;
                    }
                }
                if let Some(Conclusion::Infer { .. }) = &self.rules[last].conclusion {
                    let value = self.conclusion_value(last, case)?;
                    let step = trace.steps.iter_mut().rev().find(|s| s.rule == last).expect("deciding rule traced");
                    step.contributed = Some(value.clone());
                    conclusions.push(value);
                    deciding.push(last);
                }
            }
            TreeKind::Multi => {
                trace.steps.push(TraceStep { rule: 0, fired: true, contributed: None, path: vec![0] });
                let mut decided = Vec::new();
                for &top in &self.rules[0].refinements {
                    self.multi_walk(top, &fires, &mut trace, &mut decided)?;
                }
                for id in decided {
                    let value = self.conclusion_value(id, case)?;
                    let step = trace.steps.iter_mut().rev().find(|s| s.rule == id).expect("deciding rule traced");
                    step.contributed = Some(value.clone());
                    if !conclusions.contains(&value) {
                        conclusions.push(value);
                        deciding.push(id);
                    }
                }
            }
        }
        Ok(Classification { conclusions, deciding, trace })
    }

    fn multi_walk(
        &self,
        id: usize,
        fires: &dyn Fn(usize) -> Result<bool, RdrError>,
        trace: &mut Trace,
        decided: &mut Vec<usize>,
    ) -> Result<bool, RdrError> {
        let fired = fires(id)?;
        trace.steps.push(TraceStep { rule: id, fired, contributed: None, path: self.path_to(id) });
        if !fired {
            return Ok(false);
        }
        let mut any_child = false;
        for &c in &self.rules[id].refinements {
            any_child |= self.multi_walk(c, fires, trace, decided)?;
        }
        if !any_child && matches!(self.rules[id].conclusion, Some(Conclusion::Infer { .. })) {
            decided.push(id);
        }
        Ok(true)
    }

    pub fn conclusion_value(&self, id: usize, case: &CaseGraph) -> Result<ConclusionValue, RdrError> {
        match &self.rules[id].conclusion {
            Some(c) => evaluate_conclusion(c, case, &self.case_var)
                .map_err(|cause| RdrError::ConditionEvaluationError { rule: id, cause })?
                .ok_or_else(|| RdrError::InvalidCase("stop rules have no value".into())),
            None => Err(RdrError::InvalidCase("the default rule has no value".into())),
        }
    }
}

/// Evaluates a conclusion template on a case; `Stop` yields `None`.
pub fn evaluate_conclusion(c: &Conclusion, case: &CaseGraph, case_var: &str) -> Result<Option<ConclusionValue>, EqlError> {
    let Conclusion::Infer { type_name, fields } = c else { return Ok(None) };
    let mut out = BTreeMap::new();
    for (name, operand) in fields {
        out.insert(name.clone(), operand_values(operand, case, case_var)?);
    }
    Ok(Some(ConclusionValue { type_name: type_name.clone(), fields: out }))
}

fn operand_values(o: &Operand, case: &CaseGraph, case_var: &str) -> Result<Vec<Value>, EqlError> {
    match o {
        Operand::Path(p) if p.root == case_var => Ok(path_values(p, case)),
        Operand::Path(p) => Err(EqlError::UnknownVariable(p.root.clone())),
        Operand::Literal(l) => Ok(match l {
            eql::Literal::Bool(b) => vec![Value::Bool(*b)],
            eql::Literal::Int(i) => vec![Value::Int(*i)],
            eql::Literal::Decimal(d) => vec![Value::Decimal(*d)],
            eql::Literal::Str(s) => vec![Value::Str(s.clone())],
            eql::Literal::Entity(id) => vec![Value::Ref(*id)],
            eql::Literal::Iri(_) => Vec::new(),
        }),
    }
}

fn path_values(p: &eql::Path, case: &CaseGraph) -> Vec<Value> {
    let mut cur = vec![Value::Ref(case.root())];
    for step in &p.steps {
        cur = match step {
            eql::Step::Attr(a) => cur
                .iter()
                .filter_map(Value::as_ref_id)
                .flat_map(|id| case.field(id, a).iter().cloned())
                .collect(),
            eql::Step::Index(i) => {
                let n = cur.len() as i64;
                let at = if *i < 0 { n + i } else { *i };
                if (0..n).contains(&at) {
                    vec![cur[at as usize].clone()]
                } else {
                    Vec::new()
                }
            }
            eql::Step::OfType(c) => {
                let key = case.class_key(c);
                cur.into_iter().filter(|v| matches!((v, key), (Value::Ref(id), Some(k)) if case.is_instance(*id, k))).collect()
            }
        };
    }
    cur
}
