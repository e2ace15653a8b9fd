use super::{Condition, Query};

/// Branch limit for disjunctive normal form; wider queries are evaluated unexpanded.
pub(crate) const MAX_BRANCHES: usize = 256;

/// Rewrites the top-level `and`/`or` structure of a condition list into a union
/// of conjunctive branches. Conditions under `not` and quantifiers are atoms.
/// Returns `None` when the expansion would exceed the branch limit.
pub(crate) fn dnf(conditions: &[Condition], limit: usize) -> Option<Vec<Vec<Condition>>> {
    let mut branches: Vec<Vec<Condition>> = vec![Vec::new()];
    for c in conditions {
        let expanded = dnf_one(c, limit)?;
        let mut next = Vec::with_capacity(branches.len() * expanded.len());
        for b in &branches {
            for e in &expanded {
                let mut joined = b.clone();
                joined.extend(e.iter().cloned());
                next.push(joined);
            }
        }
        if next.len() > limit {
            return None;
        }
        branches = next;
    }
    Some(branches)
}

fn dnf_one(c: &Condition, limit: usize) -> Option<Vec<Vec<Condition>>> {
    match c {
        Condition::And(items) => dnf(items, limit),
        Condition::Or(items) => {
            let mut out = Vec::new();
            for item in items {
                out.extend(dnf_one(item, limit)?);
                if out.len() > limit {
                    return None;
                }
            }
            Some(out)
        }
        atom => Some(vec![vec![atom.clone()]]),
    }
}

/// Union-of-conjunctive-queries form of a query's `where` clause.
pub fn normalize_to_ucq(q: &Query) -> Vec<Vec<Condition>> {
    dnf(&q.conditions, usize::MAX).unwrap_or_default()
}

/// Rebuilds a query whose `where` clause is the disjunction of `branches`.
pub fn from_ucq(q: &Query, branches: Vec<Vec<Condition>>) -> Query {
    let disjunction = Condition::Or(branches.into_iter().map(Condition::And).collect());
    Query { processor: q.processor.clone(), descriptor: q.descriptor.clone(), conditions: vec![disjunction] }
}
