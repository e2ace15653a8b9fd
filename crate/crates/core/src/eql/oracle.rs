//! Reference evaluator: full cross-product enumeration in declaration order,
//! interpreting the syntax tree directly. Slow by design; used to check the
//! planner and evaluator.

use std::collections::{BTreeSet, HashMap};

use crate::kb::Value;

use super::graph::ObjectGraph;
use super::{AggFn, CompareOp, Condition, Domain, EqlError, Literal, Operand, Path, Processor, Query, Result, ResultSet, Step, VarDecl};

pub const LIMIT: u128 = 1_000_000;

type Env = HashMap<String, Value>;

struct Oracle<'g, G: ObjectGraph + ?Sized> {
    g: &'g G,
}

impl<G: ObjectGraph + ?Sized> Oracle<'_, G> {
    fn lit(&self, l: &Literal) -> Option<Value> {
        match l {
            Literal::Bool(b) => Some(Value::Bool(*b)),
            Literal::Int(i) => Some(Value::Int(*i)),
            Literal::Decimal(d) => Some(Value::Decimal(*d)),
            Literal::Str(s) => Some(Value::Str(s.clone())),
            Literal::Iri(i) => self.g.resolve_iri(i).map(Value::Ref),
            Literal::Entity(e) => Some(Value::Ref(*e)),
        }
    }

    fn walk(&self, p: &Path, env: &Env) -> Result<Vec<Value>> {
        let root = env.get(&p.root).ok_or_else(|| EqlError::UnknownVariable(p.root.clone()))?;
        let mut vals = vec![root.clone()];
        for s in &p.steps {
            match s {
                Step::Attr(a) => {
                    let key = self.g.attr_key(a);
                    let mut next = Vec::new();
                    for v in vals {
                        let Value::Ref(id) = v else {
                            return Err(EqlError::TypeMismatch(format!("no attribute {a} on {v}")));
                        };
                        if let Some(k) = key {
                            self.g.values(id, k, &mut next);
                        }
                    }
                    vals = next;
                }
                Step::Index(i) => {
                    let n = vals.len() as i64;
                    let at = if *i < 0 { n + *i } else { *i };
                    vals = if (0..n).contains(&at) { vec![vals[at as usize].clone()] } else { vec![] };
                }
                Step::OfType(c) => {
                    let key = self.g.class_key(c);
                    vals.retain(|v| match (v, key) {
                        (Value::Ref(id), Some(k)) => self.g.is_instance(*id, k),
                        _ => false,
                    });
                }
            }
        }
        Ok(vals)
    }

    fn side(&self, o: &Operand, env: &Env) -> Result<Vec<Value>> {
        match o {
            Operand::Path(p) => self.walk(p, env),
            Operand::Literal(l) => Ok(self.lit(l).into_iter().collect()),
        }
    }

    fn cmp(a: &Value, b: &Value, op: CompareOp) -> Result<bool> {
        let num = |v: &Value| match v {
            Value::Int(i) => Some(*i as f64),
            Value::Decimal(d) => Some(*d),
            _ => None,
        };
        let ord = if let (Value::Int(x), Value::Int(y)) = (a, b) {
            x.cmp(y)
        } else if let (Some(x), Some(y)) = (num(a), num(b)) {
            x.total_cmp(&y)
        } else {
            match (a, b) {
                (Value::Str(x), Value::Str(y)) => x.cmp(y),
                (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
                (Value::Ref(x), Value::Ref(y)) if op == CompareOp::Eq || op == CompareOp::Ne => x.cmp(y),
                _ => return Err(EqlError::TypeMismatch(format!("{a} vs {b}"))),
            }
        };
        Ok(op.holds(ord))
    }

    fn any_pair(l: &[Value], r: &[Value], op: CompareOp) -> Result<bool> {
        let mut hit = false;
        for a in l {
            for b in r {
                if Self::cmp(a, b, op)? {
                    hit = true;
                }
            }
        }
        Ok(hit)
    }

    fn domain(&self, v: &VarDecl, env: &Env) -> Result<Vec<Value>> {
        let base: Vec<Value> = match &v.domain {
            Some(Domain::Values(ls)) => ls.iter().filter_map(|l| self.lit(l)).collect(),
            Some(Domain::Path(p)) => {
                let mut seen = BTreeSet::new();
                self.walk(p, env)?.into_iter().filter(|x| seen.insert(x.clone())).collect()
            }
            None => match v.class.as_deref().and_then(|c| self.g.class_key(c)) {
                Some(k) => self.g.extension(k).into_iter().map(Value::Ref).collect(),
                None => vec![],
            },
        };
        match (&v.class, &v.domain) {
            (Some(c), Some(_)) => {
                let key = self.g.class_key(c);
                Ok(base
                    .into_iter()
                    .filter(|x| match (x, key) {
                        (Value::Ref(id), Some(k)) => self.g.is_instance(*id, k),
                        _ => false,
                    })
                    .collect())
            }
            _ => Ok(base),
        }
    }

    fn truth(&self, c: &Condition, env: &mut Env) -> Result<bool> {
        match c {
            Condition::Compare(l, op, r) => {
                let (lv, rv) = (self.side(l, env)?, self.side(r, env)?);
                Self::any_pair(&lv, &rv, *op)
            }
            Condition::Contains(p, e) => {
                let (pv, ev) = (self.walk(p, env)?, self.side(e, env)?);
                Self::any_pair(&pv, &ev, CompareOp::Eq)
            }
            Condition::IsA(p, class) => {
                let Some(k) = self.g.class_key(class) else { return Ok(false) };
                Ok(self.walk(p, env)?.into_iter().any(|v| matches!(v, Value::Ref(id) if self.g.is_instance(id, k))))
            }
            Condition::Exists(v, body) | Condition::ForAll(v, body) => {
                let universal = matches!(c, Condition::ForAll(..));
                let mut result = universal;
                for x in self.domain(v, env)? {
                    env.insert(v.name.clone(), x);
                    let t = self.truth(body, env)?;
                    if t != universal {
                        result = !universal;
                        break;
                    }
                }
                env.remove(&v.name);
                Ok(result)
            }
            Condition::Not(inner) => self.truth(inner, env).map(|t| !t),
            Condition::Or(items) => {
                for i in items {
                    if self.truth(i, env)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Condition::And(items) => {
                for i in items {
                    if !self.truth(i, env)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Condition::Aggregate { agg, path, op, value } => {
                let vals = self.walk(path, env)?;
                let folded = match agg {
                    AggFn::Count => Value::Int(vals.len() as i64),
                    AggFn::Sum => fold_sum(&vals)?,
                };
                let rhs = self.lit(value).ok_or_else(|| EqlError::TypeMismatch("aggregate literal".into()))?;
                Self::cmp(&folded, &rhs, *op)
            }
        }
    }
}

fn fold_sum(vals: &[Value]) -> Result<Value> {
    if vals.iter().all(|v| matches!(v, Value::Int(_))) {
        let mut t: i64 = 0;
        let mut overflow = false;
        for v in vals {
            if let Value::Int(i) = v {
                match t.checked_add(*i) {
                    Some(n) => t = n,
                    None => overflow = true,
                }
            }
        }
        if !overflow {
            return Ok(Value::Int(t));
        }
    }
    let mut f = 0.0;
    for v in vals {
        match v {
            Value::Int(i) => f += *i as f64,
            Value::Decimal(d) => f += d,
            other => return Err(EqlError::TypeMismatch(format!("sum of {other}"))),
        }
    }
    Ok(Value::Decimal(f))
}

/// Evaluates `q` by enumerating every combination of descriptor values.
pub fn brute_force_oracle<G: ObjectGraph + ?Sized>(q: &Query, g: &G) -> Result<ResultSet> {
    let o = Oracle { g };
    let vars = q.descriptor.vars();
    let mut size: u128 = 1;
    for v in vars {
        if !matches!(v.domain, Some(Domain::Path(_))) {
            size = size.saturating_mul(o.domain(v, &Env::new())?.len() as u128);
        }
    }
    if size > LIMIT {
        return Err(EqlError::OracleTooLarge(size));
    }
    let mut rows = BTreeSet::new();
    let mut env = Env::new();
    let where_ = Condition::And(q.conditions.clone());
    enumerate(&o, vars, 0, &mut env, &where_, &mut rows)?;
    let columns: Vec<String> = vars.iter().map(|v| v.name.clone()).collect();
    let rows: Vec<Vec<Value>> = rows.into_iter().collect();
    match &q.processor {
        Processor::A | Processor::An => Ok(ResultSet { columns, rows }),
        Processor::The if rows.len() == 1 => Ok(ResultSet { columns, rows }),
        Processor::The => Err(EqlError::UniquenessViolation(rows.len())),
        Processor::Count => Ok(ResultSet { columns: vec!["count".into()], rows: vec![vec![Value::Int(rows.len() as i64)]] }),
        Processor::Sum(p) => {
            let mut all = Vec::new();
            for row in &rows {
                let env: Env = vars.iter().map(|v| v.name.clone()).zip(row.iter().cloned()).collect();
                all.extend(o.walk(p, &env)?);
            }
            Ok(ResultSet { columns: vec!["sum".into()], rows: vec![vec![fold_sum(&all)?]] })
        }
    }
}

fn enumerate<G: ObjectGraph + ?Sized>(
    o: &Oracle<'_, G>,
    vars: &[VarDecl],
    i: usize,
    env: &mut Env,
    cond: &Condition,
    rows: &mut BTreeSet<Vec<Value>>,
) -> Result<()> {
    if i == vars.len() {
        if o.truth(cond, env)? {
            rows.insert(vars.iter().map(|v| env[&v.name].clone()).collect());
        }
        return Ok(());
    }
    for x in o.domain(&vars[i], env)? {
        env.insert(vars[i].name.clone(), x);
        enumerate(o, vars, i + 1, env, cond, rows)?;
    }
    env.remove(&vars[i].name);
    Ok(())
}
