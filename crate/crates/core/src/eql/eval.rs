use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use crate::kb::{ScalarKind, Value};

use super::graph::{AttrKey, ClassKey, ObjectGraph, StaticType};
use super::normalize::{dnf, MAX_BRANCHES};
use super::{
    AggFn, CompareOp, Condition, Domain, EqlError, Literal, Operand, Path, Processor, Query, Result, ResultSet, Step,
    VarDecl,
};

#[derive(Clone, Debug)]
enum CStep {
    Attr(Option<AttrKey>, String),
    Index(i64),
    OfType(Option<ClassKey>),
}

#[derive(Clone, Debug)]
struct CPath {
    root: usize,
    steps: Vec<CStep>,
}

#[derive(Clone, Debug)]
enum COperand {
    Path(CPath),
    Lit(Option<Value>),
}

#[derive(Clone, Debug)]
enum CDomain {
    Extension,
    Values(Vec<Value>),
    Path(CPath),
}

#[derive(Clone, Debug)]
struct CVar {
    slot: usize,
    /// `Some(None)` is a class name unknown to an open graph: the candidate set is empty.
    class: Option<Option<ClassKey>>,
    domain: CDomain,
}

#[derive(Clone, Debug)]
enum CCond {
    Compare(COperand, CompareOp, COperand),
    Contains(CPath, COperand),
    IsA(CPath, Option<ClassKey>),
    Exists(CVar, Box<CCond>),
    ForAll(CVar, Box<CCond>),
    Not(Box<CCond>),
    Or(Vec<CCond>),
    And(Vec<CCond>),
    Agg { agg: AggFn, path: CPath, op: CompareOp, value: Value },
}

fn mismatch(msg: String) -> EqlError {
    EqlError::TypeMismatch(msg)
}

fn literal_type(l: &Literal) -> Option<StaticType> {
    Some(match l {
        Literal::Bool(_) => StaticType::Scalar(ScalarKind::Boolean),
        Literal::Int(_) => StaticType::Scalar(ScalarKind::Integer),
        Literal::Decimal(_) => StaticType::Scalar(ScalarKind::Decimal),
        Literal::Str(_) => StaticType::Scalar(ScalarKind::String),
        Literal::Iri(_) | Literal::Entity(_) => StaticType::Entity(None),
    })
}

fn comparable(a: StaticType, b: StaticType, op: CompareOp) -> bool {
    use ScalarKind::*;
    match (a, b) {
        (StaticType::Entity(_), StaticType::Entity(_)) => matches!(op, CompareOp::Eq | CompareOp::Ne),
        (StaticType::Scalar(x), StaticType::Scalar(y)) => {
            x == y || matches!((x, y), (Integer, Decimal) | (Decimal, Integer))
        }
        _ => false,
    }
}

struct Compiler<'g, G: ObjectGraph + ?Sized> {
    graph: &'g G,
    scope: Vec<(String, usize, Option<StaticType>)>,
    next_slot: usize,
}

impl<'g, G: ObjectGraph + ?Sized> Compiler<'g, G> {
    fn new(graph: &'g G) -> Self {
        Compiler { graph, scope: Vec::new(), next_slot: 0 }
    }

    fn class(&self, name: &str) -> Result<Option<ClassKey>> {
        match self.graph.class_key(name) {
            Some(k) => Ok(Some(k)),
            None if self.graph.closed_schema() => Err(EqlError::UnknownClass(name.into())),
            None => Ok(None),
        }
    }

    fn literal(&self, l: &Literal) -> Option<Value> {
        Some(match l {
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Int(i) => Value::Int(*i),
            Literal::Decimal(d) => Value::Decimal(*d),
            Literal::Str(s) => Value::Str(s.clone()),
            Literal::Iri(iri) => Value::Ref(self.graph.resolve_iri(iri)?),
            Literal::Entity(id) => Value::Ref(*id),
        })
    }

    fn path(&self, p: &Path) -> Result<(CPath, Option<StaticType>)> {
        let (_, slot, mut ty) = self
            .scope
            .iter()
            .rev()
            .find(|(n, _, _)| *n == p.root)
            .cloned()
            .ok_or_else(|| EqlError::UnknownVariable(p.root.clone()))?;
        let mut steps = Vec::with_capacity(p.steps.len());
        for step in &p.steps {
            match step {
                Step::Attr(name) => {
                    if let Some(StaticType::Scalar(k)) = ty {
                        return Err(mismatch(format!("attribute `{name}` accessed on a {} value", k.name())));
                    }
                    let key = match self.graph.attr_key(name) {
                        Some(k) => Some(k),
                        None if self.graph.closed_schema() => return Err(EqlError::UnknownAttribute(name.clone())),
                        None => None,
                    };
                    ty = key.and_then(|k| self.graph.attr_range(k));
                    steps.push(CStep::Attr(key, name.clone()));
                }
                Step::Index(i) => steps.push(CStep::Index(*i)),
                Step::OfType(c) => {
                    if let Some(StaticType::Scalar(k)) = ty {
                        return Err(mismatch(format!("type filter `{c}` applied to a {} value", k.name())));
                    }
                    let key = self.class(c)?;
                    ty = Some(StaticType::Entity(key));
                    steps.push(CStep::OfType(key));
                }
            }
        }
        Ok((CPath { root: slot, steps }, ty))
    }

    fn operand(&self, o: &Operand) -> Result<(COperand, Option<StaticType>)> {
        match o {
            Operand::Path(p) => {
                let (c, t) = self.path(p)?;
                Ok((COperand::Path(c), t))
            }
            Operand::Literal(l) => Ok((COperand::Lit(self.literal(l)), literal_type(l))),
        }
    }

    fn declare(&mut self, v: &VarDecl) -> Result<CVar> {
        if self.scope.iter().any(|(n, _, _)| *n == v.name) {
            return Err(EqlError::DuplicateVariable(v.name.clone()));
        }
        let class = match &v.class {
            Some(c) => Some(self.class(c)?),
            None => None,
        };
        let mut ty = class.map(StaticType::Entity);
        let domain = match &v.domain {
            None => CDomain::Extension,
            Some(Domain::Values(lits)) => {
                if ty.is_none() {
                    ty = lits.first().and_then(literal_type);
                }
                CDomain::Values(lits.iter().filter_map(|l| self.literal(l)).collect())
            }
            Some(Domain::Path(p)) => {
                let (c, t) = self.path(p)?;
                if ty.is_none() {
                    ty = t;
                }
                CDomain::Path(c)
            }
        };
        if class.is_none() && matches!(domain, CDomain::Extension) {
            return Err(EqlError::UnknownVariable(format!("{} (no class or domain)", v.name)));
        }
        let slot = self.next_slot;
        self.next_slot += 1;
        self.scope.push((v.name.clone(), slot, ty));
        Ok(CVar { slot, class, domain })
    }

    fn condition(&mut self, c: &Condition) -> Result<CCond> {
        Ok(match c {
            Condition::Compare(l, op, r) => {
                let (lc, lt) = self.operand(l)?;
                let (rc, rt) = self.operand(r)?;
                if let (Some(a), Some(b)) = (lt, rt) {
                    if !comparable(a, b, *op) {
                        return Err(mismatch(format!("cannot compare {a:?} with {b:?} using `{}`", op.symbol())));
                    }
                }
                CCond::Compare(lc, *op, rc)
            }
            Condition::Contains(p, e) => {
                let (pc, pt) = self.path(p)?;
                let (ec, et) = self.operand(e)?;
                if let (Some(a), Some(b)) = (pt, et) {
                    if !comparable(a, b, CompareOp::Eq) {
                        return Err(mismatch(format!("collection of {a:?} cannot contain {b:?}")));
                    }
                }
                CCond::Contains(pc, ec)
            }
            Condition::IsA(p, class) => {
                let (pc, _) = self.path(p)?;
                CCond::IsA(pc, self.class(class)?)
            }
            Condition::Exists(v, body) | Condition::ForAll(v, body) => {
                let depth = self.scope.len();
                let var = self.declare(v)?;
                let inner = self.condition(body)?;
                self.scope.truncate(depth);
                if matches!(c, Condition::Exists(..)) {
                    CCond::Exists(var, Box::new(inner))
                } else {
                    CCond::ForAll(var, Box::new(inner))
                }
            }
            Condition::Not(inner) => CCond::Not(Box::new(self.condition(inner)?)),
            Condition::Or(items) => CCond::Or(items.iter().map(|i| self.condition(i)).collect::<Result<_>>()?),
            Condition::And(items) => CCond::And(items.iter().map(|i| self.condition(i)).collect::<Result<_>>()?),
            Condition::Aggregate { agg, path, op, value } => {
                let (pc, pt) = self.path(path)?;
                let lt = literal_type(value);
                if let Literal::Iri(_) | Literal::Entity(_) = value {
                    return Err(mismatch("aggregates compare against numbers".into()));
                }
                if let (AggFn::Sum, Some(StaticType::Entity(_))) = (agg, pt) {
                    return Err(mismatch("sum over entities".into()));
                }
                if let Some(StaticType::Scalar(k)) = lt {
                    if !matches!(k, ScalarKind::Integer | ScalarKind::Decimal) {
                        return Err(mismatch(format!("aggregate compared against a {} literal", k.name())));
                    }
                }
                CCond::Agg { agg: *agg, path: pc, op: *op, value: self.literal(value).unwrap_or(Value::Int(0)) }
            }
        })
    }
}

fn collect_slots(c: &CCond, out: &mut BTreeSet<usize>) {
    fn path(p: &CPath, out: &mut BTreeSet<usize>) {
        out.insert(p.root);
    }
    fn operand(o: &COperand, out: &mut BTreeSet<usize>) {
        if let COperand::Path(p) = o {
            path(p, out);
        }
    }
    fn var(v: &CVar, out: &mut BTreeSet<usize>) {
        if let CDomain::Path(p) = &v.domain {
            path(p, out);
        }
    }
    match c {
        CCond::Compare(l, _, r) => {
            operand(l, out);
            operand(r, out);
        }
        CCond::Contains(p, e) => {
            path(p, out);
            operand(e, out);
        }
        CCond::IsA(p, _) => path(p, out),
        CCond::Agg { path: p, .. } => path(p, out),
        CCond::Exists(v, body) | CCond::ForAll(v, body) => {
            var(v, out);
            collect_slots(body, out);
        }
        CCond::Not(inner) => collect_slots(inner, out),
        CCond::Or(items) | CCond::And(items) => items.iter().for_each(|i| collect_slots(i, out)),
    }
}

/// Compares two runtime values. Integers and decimals compare numerically,
/// entities only under `==`/`!=`; any other cross-type pair is a mismatch.
pub(crate) fn compare_values(a: &Value, b: &Value, op: CompareOp) -> Result<bool> {
    let ord = match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Decimal(x), Value::Decimal(y)) => x.total_cmp(y),
        (Value::Int(x), Value::Decimal(y)) => (*x as f64).total_cmp(y),
        (Value::Decimal(x), Value::Int(y)) => x.total_cmp(&(*y as f64)),
        (Value::Str(x), Value::Str(y)) => x.cmp(y),
        (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
        (Value::Ref(x), Value::Ref(y)) => {
            if matches!(op, CompareOp::Eq | CompareOp::Ne) {
                x.cmp(y)
            } else {
                return Err(mismatch(format!("entities {a} and {b} have no order")));
            }
        }
        _ => return Err(mismatch(format!("cannot compare {} {a} with {} {b}", a.type_name(), b.type_name()))),
    };
    Ok(op.holds(ord))
}

fn sum_values(values: &[Value]) -> Result<Value> {
    let mut int_total: Option<i64> = Some(0);
    let mut float_total = 0.0f64;
    for v in values {
        match v {
            Value::Int(i) => {
                int_total = int_total.and_then(|t| t.checked_add(*i));
                float_total += *i as f64;
            }
            Value::Decimal(d) => {
                int_total = None;
                float_total += d;
            }
            other => return Err(mismatch(format!("cannot sum {} value {other}", other.type_name()))),
        }
    }
    Ok(match int_total {
        Some(t) if values.iter().all(|v| matches!(v, Value::Int(_))) => Value::Int(t),
        _ => Value::Decimal(float_total),
    })
}

/// Query evaluator over one object graph. Class extensions are cached for the
/// lifetime of the evaluator, so reuse it only against an unchanged graph.
pub struct Evaluator<'g, G: ObjectGraph + ?Sized> {
    graph: &'g G,
    extensions: RefCell<HashMap<ClassKey, Rc<Vec<Value>>>>,
}

impl<'g, G: ObjectGraph + ?Sized> Evaluator<'g, G> {
    pub fn new(graph: &'g G) -> Self {
        Evaluator { graph, extensions: RefCell::new(HashMap::new()) }
    }

    fn extension(&self, class: ClassKey) -> Rc<Vec<Value>> {
        if let Some(e) = self.extensions.borrow().get(&class) {
            return Rc::clone(e);
        }
        let ext: Rc<Vec<Value>> = Rc::new(self.graph.extension(class).into_iter().map(Value::Ref).collect());
        self.extensions.borrow_mut().insert(class, Rc::clone(&ext));
        ext
    }

    fn path(&self, p: &CPath, env: &[Value]) -> Result<Vec<Value>> {
        let mut cur = vec![env[p.root].clone()];
        for step in &p.steps {
            cur = match step {
                CStep::Attr(key, name) => {
                    let mut next = Vec::new();
                    for v in &cur {
                        match v {
                            Value::Ref(id) => {
                                if let Some(k) = key {
                                    self.graph.values(*id, *k, &mut next);
                                }
                            }
                            other => {
                                return Err(mismatch(format!(
                                    "attribute `{name}` accessed on {} value {other}",
                                    other.type_name()
                                )))
                            }
                        }
                    }
                    next
                }
                CStep::Index(i) => {
                    let len = cur.len() as i64;
                    let idx = if *i < 0 { len + i } else { *i };
                    if idx >= 0 && idx < len {
                        vec![cur.swap_remove(idx as usize)]
                    } else {
                        Vec::new()
                    }
                }
                CStep::OfType(class) => match class {
                    Some(k) => cur
                        .into_iter()
                        .filter(|v| matches!(v, Value::Ref(id) if self.graph.is_instance(*id, *k)))
                        .collect(),
                    None => Vec::new(),
                },
            };
        }
        Ok(cur)
    }

    fn operand(&self, o: &COperand, env: &[Value]) -> Result<Vec<Value>> {
        match o {
            COperand::Path(p) => self.path(p, env),
            COperand::Lit(Some(v)) => Ok(vec![v.clone()]),
            COperand::Lit(None) => Ok(Vec::new()),
        }
    }

    fn class_ok(&self, var: &CVar, v: &Value) -> bool {
        match var.class {
            None => true,
            Some(None) => false,
            Some(Some(k)) => matches!(v, Value::Ref(id) if self.graph.is_instance(*id, k)),
        }
    }

    fn candidates(&self, var: &CVar, env: &[Value]) -> Result<Rc<Vec<Value>>> {
        Ok(match &var.domain {
            CDomain::Extension => match var.class {
                Some(Some(k)) => self.extension(k),
                _ => Rc::new(Vec::new()),
            },
            CDomain::Values(vs) => Rc::new(vs.iter().filter(|v| self.class_ok(var, v)).cloned().collect()),
            CDomain::Path(p) => {
                let mut seen = BTreeSet::new();
                let vals = self.path(p, env)?;
                Rc::new(vals.into_iter().filter(|v| self.class_ok(var, v) && seen.insert(v.clone())).collect())
            }
        })
    }

    fn holds(&self, c: &CCond, env: &mut Vec<Value>) -> Result<bool> {
        match c {
            CCond::Compare(l, op, r) => {
                let lv = self.operand(l, env)?;
                let rv = self.operand(r, env)?;
                let mut found = false;
                for a in &lv {
                    for b in &rv {
                        found |= compare_values(a, b, *op)?;
                    }
                }
                Ok(found)
            }
            CCond::Contains(p, e) => {
                let coll = self.path(p, env)?;
                let elems = self.operand(e, env)?;
                let mut found = false;
                for a in &coll {
                    for b in &elems {
                        found |= compare_values(a, b, CompareOp::Eq)?;
                    }
                }
                Ok(found)
            }
            CCond::IsA(p, class) => {
                let Some(k) = class else { return Ok(false) };
                Ok(self.path(p, env)?.iter().any(|v| matches!(v, Value::Ref(id) if self.graph.is_instance(*id, *k))))
            }
            CCond::Exists(var, body) => {
                for cand in self.candidates(var, env)?.iter() {
                    env[var.slot] = cand.clone();
                    if self.holds(body, env)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            CCond::ForAll(var, body) => {
                for cand in self.candidates(var, env)?.iter() {
                    env[var.slot] = cand.clone();
                    if !self.holds(body, env)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            CCond::Not(inner) => Ok(!self.holds(inner, env)?),
            CCond::Or(items) => {
                for i in items {
                    if self.holds(i, env)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            CCond::And(items) => {
                for i in items {
                    if !self.holds(i, env)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            CCond::Agg { agg, path, op, value } => {
                let vals = self.path(path, env)?;
                let folded = match agg {
                    AggFn::Count => Value::Int(vals.len() as i64),
                    AggFn::Sum => sum_values(&vals)?,
                };
                compare_values(&folded, value, *op)
            }
        }
    }

    pub fn evaluate(&self, q: &Query) -> Result<ResultSet> {
        let mut compiler = Compiler::new(self.graph);
        let vars: Vec<CVar> = q.descriptor.vars().iter().map(|v| compiler.declare(v)).collect::<Result<_>>()?;
        let n = vars.len();
        // validate the whole clause once, whatever the branch expansion
        let base = compiler.next_slot;
        let full: Vec<CCond> = q.conditions.iter().map(|c| compiler.condition(c)).collect::<Result<_>>()?;
        let sum_path = match &q.processor {
            Processor::Sum(p) => Some(compiler.path(p)?.0),
            _ => None,
        };
        let slots = compiler.next_slot.max(base);

        let branches: Vec<Vec<CCond>> = match dnf(&q.conditions, MAX_BRANCHES) {
            Some(bs) if bs.len() > 1 || bs.first().is_some_and(|b| b.len() != q.conditions.len()) => {
                let mut out = Vec::with_capacity(bs.len());
                for b in bs {
                    let mut c = Compiler::new(self.graph);
                    for v in q.descriptor.vars() {
                        c.declare(v)?;
                    }
                    out.push(b.iter().map(|x| c.condition(x)).collect::<Result<Vec<_>>>()?);
                }
                out
            }
            Some(bs) if bs.is_empty() => Vec::new(),
            _ => vec![full],
        };

        let mut rows = BTreeSet::new();
        for branch in &branches {
            self.run_branch(&vars, branch, slots.max(self.slot_need(branch, n)), &mut rows)?;
        }
        let columns: Vec<String> = q.descriptor.vars().iter().map(|v| v.name.clone()).collect();
        let rows: Vec<Vec<Value>> = rows.into_iter().collect();
        match &q.processor {
            Processor::A | Processor::An => Ok(ResultSet { columns, rows }),
            Processor::The => {
                if rows.len() == 1 {
                    Ok(ResultSet { columns, rows })
                } else {
                    Err(EqlError::UniquenessViolation(rows.len()))
                }
            }
            Processor::Count => Ok(ResultSet { columns: vec!["count".into()], rows: vec![vec![Value::Int(rows.len() as i64)]] }),
            Processor::Sum(_) => {
                let path = sum_path.expect("sum processor compiled");
                let mut vals = Vec::new();
                let mut env = vec![Value::Int(0); slots.max(n)];
                for row in &rows {
                    env[..n].clone_from_slice(row);
                    vals.extend(self.path(&path, &env)?);
                }
                Ok(ResultSet { columns: vec!["sum".into()], rows: vec![vec![sum_values(&vals)?]] })
            }
        }
    }

    fn slot_need(&self, branch: &[CCond], n: usize) -> usize {
        fn max_slot(c: &CCond) -> usize {
            match c {
                CCond::Exists(v, b) | CCond::ForAll(v, b) => (v.slot + 1).max(max_slot(b)),
                CCond::Not(i) => max_slot(i),
                CCond::Or(items) | CCond::And(items) => items.iter().map(max_slot).max().unwrap_or(0),
                _ => 0,
            }
        }
        branch.iter().map(max_slot).max().unwrap_or(0).max(n)
    }

    fn run_branch(&self, vars: &[CVar], conds: &[CCond], slots: usize, rows: &mut BTreeSet<Vec<Value>>) -> Result<()> {
        let n = vars.len();
        let free: Vec<BTreeSet<usize>> = conds
            .iter()
            .map(|c| {
                let mut s = BTreeSet::new();
                collect_slots(c, &mut s);
                s.retain(|x| *x < n);
                s
            })
            .collect();
        let deps: Vec<BTreeSet<usize>> = vars
            .iter()
            .map(|v| match &v.domain {
                CDomain::Path(p) => BTreeSet::from([p.root]),
                _ => BTreeSet::new(),
            })
            .collect();

        // greedy plan: generator-backed variables first, then smallest candidate sets
        let mut bound: BTreeSet<usize> = BTreeSet::new();
        let mut plan: Vec<PlanStep> = Vec::with_capacity(n);
        while bound.len() < n {
            let mut best: Option<(usize, usize, Option<Generator>)> = None;
            for (i, v) in vars.iter().enumerate() {
                if bound.contains(&i) || !deps[i].is_subset(&bound) {
                    continue;
                }
                let generator = if matches!(v.domain, CDomain::Extension) {
                    conds.iter().zip(&free).find_map(|(c, f)| generator_for(c, f, i, &bound))
                } else {
                    None
                };
                let estimate = match (&generator, &v.domain) {
                    (Some(_), _) => 4,
                    (None, CDomain::Extension) => match v.class {
                        Some(Some(k)) => self.extension(k).len(),
                        _ => 0,
                    },
                    (None, CDomain::Values(vs)) => vs.len(),
                    (None, CDomain::Path(_)) => 8,
                };
                if best.as_ref().is_none_or(|(_, e, _)| estimate < *e) {
                    best = Some((i, estimate, generator));
                }
            }
            let (i, _, generator) = best.ok_or_else(|| {
                EqlError::UnknownVariable("variable domains depend on each other cyclically".into())
            })?;
            bound.insert(i);
            plan.push(PlanStep { var: i, generator, checks: Vec::new() });
        }
        let mut ground = Vec::new();
        let mut seen = BTreeSet::new();
        'conds: for (ci, f) in free.iter().enumerate() {
            if f.is_empty() {
                ground.push(ci);
                continue;
            }
            seen.clear();
            for step in plan.iter_mut() {
                seen.insert(step.var);
                if f.is_subset(&seen) {
                    step.checks.push(ci);
                    continue 'conds;
                }
            }
        }
        let mut env = vec![Value::Int(0); slots];
        for ci in ground {
            if !self.holds(&conds[ci], &mut env)? {
                return Ok(());
            }
        }
        self.enumerate(vars, conds, &plan, 0, &mut env, rows)
    }

    fn enumerate(
        &self,
        vars: &[CVar],
        conds: &[CCond],
        plan: &[PlanStep],
        depth: usize,
        env: &mut Vec<Value>,
        rows: &mut BTreeSet<Vec<Value>>,
    ) -> Result<()> {
        let Some(step) = plan.get(depth) else {
            rows.insert(env[..vars.len()].to_vec());
            return Ok(());
        };
        let var = &vars[step.var];
        let candidates: Rc<Vec<Value>> = match &step.generator {
            Some(g) => {
                let mut vals = match g {
                    Generator::Path(p) => self.path(p, env)?,
                    Generator::Operand(o) => self.operand(o, env)?,
                };
                vals.retain(|v| self.class_ok(var, v));
                vals.sort();
                vals.dedup();
                Rc::new(vals)
            }
            None => self.candidates(var, env)?,
        };
        'cands: for cand in candidates.iter() {
            env[var.slot] = cand.clone();
            for ci in &step.checks {
                if !self.holds(&conds[*ci], env)? {
                    continue 'cands;
                }
            }
            self.enumerate(vars, conds, plan, depth + 1, env, rows)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Generator {
    Path(CPath),
    Operand(COperand),
}

struct PlanStep {
    var: usize,
    generator: Option<Generator>,
    checks: Vec<usize>,
}

fn operand_free(o: &COperand) -> Option<usize> {
    match o {
        COperand::Path(p) => Some(p.root),
        COperand::Lit(_) => None,
    }
}

fn is_bare(o: &COperand, slot: usize) -> bool {
    matches!(o, COperand::Path(p) if p.root == slot && p.steps.is_empty())
}

/// A conjunct that yields the candidates of variable `v` from already bound ones:
/// `contains(path, v)` or `v == operand`.
fn generator_for(c: &CCond, free: &BTreeSet<usize>, v: usize, bound: &BTreeSet<usize>) -> Option<Generator> {
    let others_bound = free.iter().all(|s| *s == v || bound.contains(s));
    if !others_bound {
        return None;
    }
    match c {
        CCond::Contains(p, e) if is_bare(e, v) && p.root != v => Some(Generator::Path(p.clone())),
        CCond::Compare(l, CompareOp::Eq, r) => {
            if is_bare(l, v) && operand_free(r) != Some(v) {
                Some(Generator::Operand(r.clone()))
            } else if is_bare(r, v) && operand_free(l) != Some(v) {
                Some(Generator::Operand(l.clone()))
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Evaluates a query against an object graph.
pub fn evaluate<G: ObjectGraph + ?Sized>(q: &Query, graph: &G) -> Result<ResultSet> {
    Evaluator::new(graph).evaluate(q)
}

/// A condition compiled against a graph schema with a fixed list of outer
/// variables, evaluated repeatedly for different bindings of those variables.
#[derive(Clone, Debug)]
pub struct Compiled {
    cond: CCond,
    outer: usize,
    slots: usize,
}

impl Compiled {
    pub fn new<G: ObjectGraph + ?Sized>(cond: &Condition, graph: &G, outer: &[(&str, Option<StaticType>)]) -> Result<Self> {
        let mut c = Compiler::new(graph);
        for (name, ty) in outer {
            c.scope.push((name.to_string(), c.next_slot, *ty));
            c.next_slot += 1;
        }
        let cond = c.condition(cond)?;
        let mut slots = c.next_slot;
        fn max_slot(c: &CCond) -> usize {
            match c {
                CCond::Exists(v, b) | CCond::ForAll(v, b) => (v.slot + 1).max(max_slot(b)),
                CCond::Not(i) => max_slot(i),
                CCond::Or(items) | CCond::And(items) => items.iter().map(max_slot).max().unwrap_or(0),
                _ => 0,
            }
        }
        slots = slots.max(max_slot(&cond));
        Ok(Compiled { cond, outer: outer.len(), slots })
    }

    pub fn eval<G: ObjectGraph + ?Sized>(&self, graph: &G, outer: &[Value]) -> Result<bool> {
        self.eval_with(&Evaluator::new(graph), outer)
    }

    pub fn eval_with<G: ObjectGraph + ?Sized>(&self, ev: &Evaluator<'_, G>, outer: &[Value]) -> Result<bool> {
        assert_eq!(outer.len(), self.outer, "outer binding arity");
        let mut env = vec![Value::Int(0); self.slots.max(self.outer)];
        env[..self.outer].clone_from_slice(outer);
        ev.holds(&self.cond, &mut env)
    }
}
