use std::collections::VecDeque;

use serde_json::json;

use crate::eql;

use super::{condition_holds, evaluate_conclusion, CaseGraph, Conclusion, ConclusionValue, RdrError, RuleTree, Slot, StoredCase, TreeKind};

/// A case presented for fitting, with an optional ground truth.
#[derive(Clone, Debug)]
pub struct CaseQuery {
    pub case: CaseGraph,
    pub target: String,
    pub ground_truth: Option<Vec<Conclusion>>,
}

impl CaseQuery {
    pub fn new(case: CaseGraph, target: &str, ground_truth: Option<Vec<Conclusion>>) -> Self {
        CaseQuery { case, target: target.into(), ground_truth }
    }
}

/// Everything an expert needs to write a differentiating condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Prompt {
    pub case: CaseGraph,
    /// The rule whose conclusion is being corrected; `None` when no rule fired.
    pub fired_rule: Option<usize>,
    pub cornerstone: Option<CaseGraph>,
    pub wrong: Option<ConclusionValue>,
    pub expected: Option<ConclusionValue>,
    pub case_var: String,
}

impl Prompt {
    pub fn to_json(&self) -> serde_json::Value {
        let value = |c: &Option<ConclusionValue>| c.as_ref().map(conclusion_json);
        json!({
            "case": self.case.to_json(),
            "fired_rule": self.fired_rule,
            "cornerstone": self.cornerstone.as_ref().map(CaseGraph::to_json),
            "wrong": value(&self.wrong),
            "expected": value(&self.expected),
            "case_var": self.case_var,
        })
    }
}

pub(crate) fn conclusion_json(c: &ConclusionValue) -> serde_json::Value {
    let fields: serde_json::Map<String, serde_json::Value> = c
        .fields
        .iter()
        .map(|(k, vs)| (k.clone(), serde_json::to_value(vs).expect("values serialize")))
        .collect();
    json!({ "type": c.type_name, "fields": fields })
}

pub trait Expert {
    /// Supplies the correct conclusions when the case query has none.
    fn conclusions(&mut self, case: &CaseGraph) -> Option<Vec<Conclusion>>;
    /// Returns condition text for the prompt, or `None` to abort.
    fn condition(&mut self, prompt: &Prompt) -> Option<String>;
}

/// Answers from fixed queues; used by tests and scripted CLI sessions.
#[derive(Clone, Debug, Default)]
pub struct ScriptedExpert {
    pub conclusions: VecDeque<Vec<Conclusion>>,
    pub conditions: VecDeque<String>,
    pub prompts: Vec<Prompt>,
}

impl ScriptedExpert {
    pub fn with_conditions<I: IntoIterator<Item = S>, S: Into<String>>(conditions: I) -> Self {
        ScriptedExpert { conditions: conditions.into_iter().map(Into::into).collect(), ..Default::default() }
    }
}

impl Expert for ScriptedExpert {
    fn conclusions(&mut self, _case: &CaseGraph) -> Option<Vec<Conclusion>> {
        self.conclusions.pop_front()
    }

    fn condition(&mut self, prompt: &Prompt) -> Option<String> {
        self.prompts.push(prompt.clone());
        self.conditions.pop_front()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitReport {
    pub added_rules: Vec<usize>,
    /// One entry per accepted condition: (rule id, true on case, false on cornerstone).
    pub verifications: Vec<(usize, bool, Option<bool>)>,
    pub already_correct: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FitStep {
    Done(FitReport),
    NeedCondition(Prompt),
}

#[derive(Clone, Debug, PartialEq)]
struct Edit {
    parent: usize,
    slot: Slot,
    conclusion: Conclusion,
    /// Cornerstone the new condition must reject.
    against: Option<usize>,
}

/// Incremental fitting of one case, driven one expert answer at a time.
#[derive(Clone, Debug)]
pub struct Fitter {
    case: CaseGraph,
    expected: Vec<Conclusion>,
    expected_values: Vec<ConclusionValue>,
    pending: Option<Edit>,
    stored: Option<usize>,
    report: FitReport,
    edits: usize,
}

fn values_match(a: &[ConclusionValue], b: &[ConclusionValue]) -> bool {
    a.len() == b.len() && a.iter().all(|x| b.contains(x))
}

impl Fitter {
    pub fn begin(tree: &RuleTree, cq: CaseQuery) -> Result<(Fitter, FitStep), RdrError> {
        if cq.target != tree.target.attribute {
            return Err(RdrError::TargetMismatch { expected: tree.target.attribute.clone(), found: cq.target });
        }
        let expected = cq.ground_truth.ok_or_else(|| RdrError::InvalidCase("case query carries no ground truth".into()))?;
        if tree.kind == TreeKind::Single && expected.len() > 1 {
            return Err(RdrError::TooManyConclusions(expected.len()));
        }
        let mut expected_values = Vec::new();
        for c in &expected {
            let v = evaluate_conclusion(c, &cq.case, &tree.case_var).map_err(RdrError::InvalidCondition)?;
            if let Some(v) = v {
                if !expected_values.contains(&v) {
                    expected_values.push(v);
                }
            }
        }
        let mut f = Fitter {
            case: cq.case,
            expected,
            expected_values,
            pending: None,
            stored: None,
            report: FitReport::default(),
            edits: 0,
        };
        let step = f.plan(tree)?;
        if let FitStep::Done(r) = &step {
            let mut r = r.clone();
            r.already_correct = true;
            f.report = r.clone();
            return Ok((f, FitStep::Done(r)));
        }
        Ok((f, step))
    }

    pub fn pending_prompt(&self, tree: &RuleTree) -> Option<Prompt> {
        self.pending.as_ref().map(|e| self.prompt(tree, e))
    }

    pub fn report(&self) -> &FitReport {
        &self.report
    }

    pub fn case(&self) -> &CaseGraph {
        &self.case
    }

    fn template_for(&self, v: &ConclusionValue, tree: &RuleTree) -> Conclusion {
        self.expected
            .iter()
            .find(|c| evaluate_conclusion(c, &self.case, &tree.case_var).ok().flatten().as_ref() == Some(v))
            .cloned()
            .unwrap_or(Conclusion::Stop)
    }

    fn plan(&mut self, tree: &RuleTree) -> Result<FitStep, RdrError> {
        let got = tree.classify(&self.case)?;
        if values_match(&got.conclusions, &self.expected_values) {
            self.pending = None;
            return Ok(FitStep::Done(self.report.clone()));
        }
        let limit = 4 + 2 * (self.expected_values.len() + tree.rules.len());
        if self.edits > limit {
            return Err(RdrError::FittingDiverged(self.edits));
        }
        let edit = match tree.kind {
            TreeKind::Single => {
                let last = got.trace.steps.iter().rev().find(|s| s.fired).map(|s| s.rule).unwrap_or(0);
                let conclusion = match self.expected_values.first() {
                    Some(v) => self.template_for(v, tree),
                    None => Conclusion::Stop,
                };
                if last == 0 {
                    Edit { parent: 0, slot: Slot::Except, conclusion, against: None }
                } else {
                    Edit { parent: last, slot: Slot::Except, conclusion, against: tree.rules[last].cornerstone }
                }
            }
            TreeKind::Multi => {
                let wrong = got
                    .conclusions
                    .iter()
                    .zip(&got.deciding)
                    .find(|(v, _)| !self.expected_values.contains(v))
                    .map(|(_, r)| *r);
                let missing: Vec<&ConclusionValue> =
                    self.expected_values.iter().filter(|v| !got.conclusions.contains(v)).collect();
                match wrong {
                    Some(rule) => {
                        let conclusion = match missing.first() {
                            Some(v) => self.template_for(v, tree),
                            None => Conclusion::Stop,
                        };
                        Edit { parent: rule, slot: Slot::Refine, conclusion, against: tree.rules[rule].cornerstone }
                    }
                    None => {
                        let v = missing.first().expect("a mismatch without wrong conclusions has a missing one");
                        Edit { parent: 0, slot: Slot::Refine, conclusion: self.template_for(v, tree), against: None }
                    }
                }
            }
        };
        let prompt = self.prompt(tree, &edit);
        self.pending = Some(edit);
        Ok(FitStep::NeedCondition(prompt))
    }

    fn prompt(&self, tree: &RuleTree, e: &Edit) -> Prompt {
        let fired_rule = if e.parent == 0 && e.against.is_none() { None } else { Some(e.parent) };
        let wrong = fired_rule.and_then(|r| tree.conclusion_value(r, &self.case).ok());
        let expected = evaluate_conclusion(&e.conclusion, &self.case, &tree.case_var).ok().flatten();
        Prompt {
            case: self.case.clone(),
            fired_rule,
            cornerstone: e.against.map(|c| tree.cases[c].case.clone()),
            wrong,
            expected,
            case_var: tree.case_var.clone(),
        }
    }

    /// Checks the expert's condition and, when accepted, commits the rule.
    /// A rejected condition leaves the question pending.
    pub fn answer(&mut self, tree: &mut RuleTree, condition_text: &str) -> Result<FitStep, RdrError> {
        let edit = self.pending.clone().ok_or(RdrError::NothingPending)?;
        let condition = eql::parse_condition(condition_text, Some(&tree.case_var)).map_err(RdrError::InvalidCondition)?;
        let holds = |case: &CaseGraph| condition_holds(&condition, case, &tree.case_var).map_err(RdrError::InvalidCondition);
        let on_case = holds(&self.case)?;
        let on_cornerstone = match edit.against {
            Some(c) => Some(holds(&tree.cases[c].case)?),
            None => None,
        };
        if !on_case || on_cornerstone == Some(true) {
            return Err(RdrError::ExpertConditionRejected(format!(
                "`{condition_text}` evaluates to {on_case} on the case{}",
                match on_cornerstone {
                    Some(v) => format!(" and to {v} on the cornerstone (needs true and false)"),
                    None => " (needs true)".into(),
                }
            )));
        }
        let mut trial = tree.clone();
        let stored = match self.stored {
            Some(i) => i,
            None => {
                trial.cases.push(StoredCase { case: self.case.clone(), recorded: self.expected_values.clone() });
                trial.cases.len() - 1
            }
        };
        let id = trial.attach(edit.parent, edit.slot, condition, edit.conclusion.clone(), Some(stored));
        let mut regressions = Vec::new();
        for (i, sc) in trial.cases.iter().enumerate() {
            if i == stored {
                continue;
            }
            let got = trial.classify(&sc.case)?;
            if !values_match(&got.conclusions, &sc.recorded) {
                regressions.push(i);
            }
        }
        if !regressions.is_empty() {
            return Err(RdrError::ExpertConditionRejected(format!(
                "`{condition_text}` changes the conclusions of stored cases {regressions:?}"
            )));
        }
        *tree = trial;
        self.stored = Some(stored);
        self.edits += 1;
        self.report.added_rules.push(id);
        self.report.verifications.push((id, on_case, on_cornerstone.map(|v| !v)));
        self.pending = None;
        self.plan(tree)
    }
}

/// Classifies `cq.case` and, when the result is wrong, asks `expert` for
/// differentiating conditions until the tree concludes the ground truth.
pub fn fit_case(tree: &mut RuleTree, mut cq: CaseQuery, expert: &mut dyn Expert) -> Result<FitReport, RdrError> {
    if cq.ground_truth.is_none() {
        cq.ground_truth = Some(expert.conclusions(&cq.case).ok_or(RdrError::ExpertAborted)?);
    }
    let (mut fitter, mut step) = Fitter::begin(tree, cq)?;
    loop {
        match step {
            FitStep::Done(report) => return Ok(report),
            FitStep::NeedCondition(prompt) => {
                let text = expert.condition(&prompt).ok_or(RdrError::ExpertAborted)?;
                step = match fitter.answer(tree, &text) {
                    // the question stays open; ask again with the same prompt
                    Err(RdrError::ExpertConditionRejected(_)) => FitStep::NeedCondition(prompt),
                    other => other?,
                };
            }
        }
    }
}
