//! Fitting sessions: a tree, a queue of cases, and at most one conflict
//! waiting for an expert condition.

use std::collections::VecDeque;

use entitykb::eql::parse_condition;
use entitykb::rdr::{
    condition_holds, load_rule_module, parse_conclusion, save_rule_module, CaseGraph, CaseQuery, FitStep, Fitter, Prompt, RdrError,
    RuleModule, RuleTree,
};
use serde::Deserialize;
use serde_json::{json, Value as Json};

use crate::ops::{Result, ServiceError};

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum TreeSpec {
    Module { module: String },
    New { kind: String, attribute: String, #[serde(rename = "type")] type_name: String },
}

#[derive(Clone, Debug, Deserialize)]
pub struct CaseSpec {
    pub case: Json,
    /// Conclusion texts such as `Door{body=parent}`; empty means "no conclusion".
    #[serde(default)]
    pub expected: Vec<String>,
}

/// Request body of `POST /fit/sessions`, also the file read by `fit`.
#[derive(Clone, Debug, Deserialize)]
pub struct FitSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub tree: TreeSpec,
    pub cases: Vec<CaseSpec>,
    /// Scripted answers; only the command line uses them.
    #[serde(default)]
    pub answers: Vec<String>,
}

impl TreeSpec {
    pub fn build(&self) -> Result<RuleTree> {
        match self {
            TreeSpec::Module { module } => match load_rule_module(module)? {
                RuleModule::Tree(t) => Ok(t),
                RuleModule::Grdr(_) => Err(ServiceError::BadRequest("fitting needs a single tree, not a GRDR module".into())),
            },
            TreeSpec::New { kind, attribute, type_name } => match kind.as_str() {
                "single" | "SC" => Ok(RuleTree::single(attribute, type_name)),
                "multi" | "MC" => Ok(RuleTree::multi(attribute, type_name)),
                other => Err(ServiceError::BadRequest(format!("unknown tree kind `{other}`"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SessionState {
    Idle,
    AwaitingExpert(Prompt),
    Done,
}

impl SessionState {
    pub fn name(&self) -> &'static str {
        match self {
            SessionState::Idle => "idle",
            SessionState::AwaitingExpert(_) => "awaiting_expert",
            SessionState::Done => "done",
        }
    }
}

/// Outcome of one submitted condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub accepted: bool,
    pub on_case: bool,
    pub on_cornerstone: Option<bool>,
    pub reason: Option<String>,
}

impl Verdict {
    pub fn to_json(&self) -> Json {
        json!({
            "accepted": self.accepted,
            "true_on_case": self.on_case,
            "true_on_cornerstone": self.on_cornerstone,
            "reason": self.reason,
        })
    }
}

pub struct FitSession {
    pub id: u64,
    pub name: String,
    pub tree: RuleTree,
    pub cases: Vec<CaseGraph>,
    queue: VecDeque<CaseQuery>,
    fitter: Option<Fitter>,
    state: SessionState,
}

impl FitSession {
    pub fn new(id: u64, spec: &FitSpec) -> Result<Self> {
        let tree = spec.tree.build()?;
        let mut queue = VecDeque::new();
        let mut cases = Vec::new();
        for c in &spec.cases {
            let case = CaseGraph::from_json(&c.case)?;
            let expected = c.expected.iter().map(|t| parse_conclusion(t, &tree.case_var)).collect::<Result<Vec<_>, _>>()?;
            cases.push(case.clone());
            queue.push_back(CaseQuery::new(case, &tree.target.attribute, Some(expected)));
        }
        let name = spec.name.clone().unwrap_or_else(|| tree.target.attribute.clone());
        let mut s = FitSession { id, name, tree, cases, queue, fitter: None, state: SessionState::Idle };
        s.advance()?;
        Ok(s)
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn pending(&self) -> Option<&Prompt> {
        match &self.state {
            SessionState::AwaitingExpert(p) => Some(p),
            _ => None,
        }
    }

    pub fn module(&self) -> String {
        save_rule_module(&self.tree)
    }

    /// Starts queued cases until one needs the expert or the queue runs dry.
    fn advance(&mut self) -> Result<()> {
        while let Some(cq) = self.queue.pop_front() {
            let (fitter, step) = Fitter::begin(&self.tree, cq)?;
            if let FitStep::NeedCondition(p) = step {
                self.fitter = Some(fitter);
                self.state = SessionState::AwaitingExpert(p);
                return Ok(());
            }
        }
        self.fitter = None;
        self.state = SessionState::Done;
        Ok(())
    }

    pub fn submit(&mut self, text: &str) -> Result<Verdict> {
        let prompt = self.pending().cloned().ok_or_else(|| ServiceError::BadRequest("no conflict is pending".into()))?;
        let fitter = self.fitter.as_mut().expect("a pending conflict has a fitter");
        let condition = parse_condition(text, Some(&prompt.case_var)).map_err(RdrError::InvalidCondition)?;
        let holds = |c: &CaseGraph| condition_holds(&condition, c, &prompt.case_var).map_err(RdrError::InvalidCondition);
        let on_case = holds(&prompt.case)?;
        let on_cornerstone = prompt.cornerstone.as_ref().map(holds).transpose()?;
        match fitter.answer(&mut self.tree, text) {
            Ok(FitStep::Done(_)) => {
                self.state = SessionState::Idle;
                self.advance()?;
            }
            Ok(FitStep::NeedCondition(p)) => self.state = SessionState::AwaitingExpert(p),
            Err(RdrError::ExpertConditionRejected(reason)) => {
                return Ok(Verdict { accepted: false, on_case, on_cornerstone, reason: Some(reason) });
            }
            Err(e) => return Err(e.into()),
        }
        Ok(Verdict { accepted: true, on_case, on_cornerstone, reason: None })
    }

    pub fn trace(&self, case: usize) -> Result<Json> {
        let c = self.cases.get(case).ok_or_else(|| ServiceError::NotFound(format!("case {case} of session {}", self.id)))?;
        Ok(self.tree.classify(c)?.trace.to_json())
    }

    pub fn summary(&self) -> Json {
        json!({
            "id": self.id,
            "name": self.name,
            "state": self.state.name(),
            "rules": self.tree.rule_count(),
            "remaining": self.queue.len(),
        })
    }
}

/// Drives a session with scripted answers, as the command line does.
/// Returns the session and the verdicts in answer order.
pub fn run_scripted(spec: &FitSpec) -> Result<(FitSession, Vec<Verdict>)> {
    let mut s = FitSession::new(1, spec)?;
    let mut answers = spec.answers.iter();
    let mut verdicts = Vec::new();
    while s.pending().is_some() {
        let text = answers.next().ok_or_else(|| ServiceError::Rdr(RdrError::ExpertAborted))?;
        verdicts.push(s.submit(text)?);
    }
    Ok((s, verdicts))
}
