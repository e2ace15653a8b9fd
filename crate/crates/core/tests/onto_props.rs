mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use entitykb::eql::Compiled;
use entitykb::kb::{Characteristics, ClassSpec, EntityId, KnowledgeBase, PropertySpec, Value};
use entitykb::ontomatic::{close_symmetric_transitive, compile_axiom, materialize, DocValue, RestrictionExpr};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn wcc_closure_matches_naive_fixpoint(seed in any::<u64>(), reflexive in prop::bool::weighted(0.2)) {
        let mut r = rng(seed);
        let n = r.gen_range(0..=50);
        let edges = random_edges(&mut r, n);
        let chars = Characteristics { reflexive, ..Characteristics::symmetric_transitive() };
        let (mut kb, ids) = graph_kb(chars, n, &edges);
        let p = kb.require_property("knows").unwrap();
        close_symmetric_transitive(&mut kb, p).unwrap();
        prop_assert_eq!(pairs(&kb, "knows", &ids), naive_sym_trans(&edges, reflexive, n));
        // closing again adds nothing
        prop_assert_eq!(close_symmetric_transitive(&mut kb, p).unwrap(), 0);
    }
}

/// Vocabulary exercising every property rule at once.
fn rules_kb(r: &mut ChaCha8Rng) -> (KnowledgeBase, Vec<EntityId>, Vec<(&'static str, usize, usize)>) {
    let mut kb = KnowledgeBase::new();
    kb.define_class(ClassSpec::new("Node")).unwrap();
    kb.define_property(PropertySpec::new("knows", "Node", "Node").with(Characteristics::symmetric_transitive())).unwrap();
    kb.define_property(PropertySpec::new("linked", "Node", "Node").with(Characteristics::transitive())).unwrap();
    kb.define_property(PropertySpec::new("part_of", "Node", "Node").with(Characteristics::transitive()).sub_property_of("linked"))
        .unwrap();
    kb.define_property(PropertySpec::new("has_part", "Node", "Node").inverse_of("part_of")).unwrap();
    kb.define_property(PropertySpec::new("near", "Node", "Node").with(Characteristics::symmetric())).unwrap();
    kb.define_property(PropertySpec::new("adjacent", "Node", "Node").sub_property_of("near")).unwrap();
    let node = kb.require_class("Node").unwrap();
    let n = r.gen_range(1..=25);
    let ids: Vec<EntityId> = (0..n).map(|_| kb.add_individual(None, &[node]).unwrap()).collect();
    let mut asserted = Vec::new();
    for prop in ["knows", "part_of", "has_part", "adjacent", "near", "linked"] {
        for (a, b) in random_edges(r, n).into_iter().take(n) {
            kb.assert_named(ids[a], prop, Value::Ref(ids[b])).unwrap();
            asserted.push((prop, a, b));
        }
    }
    (kb, ids, asserted)
}

type Facts = BTreeMap<&'static str, BTreeSet<(usize, usize)>>;

/// Rule-by-rule forward chaining over plain pair sets.
fn naive_materialize(asserted: &[(&'static str, usize, usize)], n: usize) -> Facts {
    let mut f: Facts = BTreeMap::new();
    for p in ["knows", "linked", "part_of", "has_part", "near", "adjacent"] {
        f.insert(p, BTreeSet::new());
    }
    for (p, a, b) in asserted {
        f.get_mut(p).unwrap().insert((*a, *b));
    }
    loop {
        let mut next = f.clone();
        let knows: Vec<(usize, usize)> = f["knows"].iter().copied().collect();
        *next.get_mut("knows").unwrap() = naive_sym_trans(&knows, false, n);
        for (a, b) in &f["part_of"] {
            next.get_mut("linked").unwrap().insert((*a, *b));
            next.get_mut("has_part").unwrap().insert((*b, *a));
        }
        for (a, b) in &f["has_part"] {
            next.get_mut("part_of").unwrap().insert((*b, *a));
        }
        for (a, b) in &f["adjacent"] {
            next.get_mut("near").unwrap().insert((*a, *b));
        }
        for (a, b) in &f["near"] {
            next.get_mut("near").unwrap().insert((*b, *a));
        }
        for p in ["linked", "part_of"] {
            let cur = f[p].clone();
            for (a, b) in &cur {
                for (c, d) in &cur {
                    if b == c {
                        next.get_mut(p).unwrap().insert((*a, *d));
                    }
                }
            }
        }
        if next == f {
            return f;
        }
        f = next;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn materialize_matches_naive_forward_chaining(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (mut kb, ids, asserted) = rules_kb(&mut r);
        materialize(&mut kb).unwrap();
        let want = naive_materialize(&asserted, ids.len());
        for (p, set) in &want {
            prop_assert_eq!(&pairs(&kb, p, &ids), set, "{}", p);
        }
        prop_assert_eq!(materialize(&mut kb).unwrap().total(), 0);
    }
}

// ---------------------------------------------------------------- axioms

const CLASSES: [&str; 4] = ["Person", "Student", "Member", "Course"];
const OBJECT_PROPS: [&str; 3] = ["takes", "friend", "mentor"];

fn random_expr(r: &mut ChaCha8Rng, depth: usize) -> RestrictionExpr {
    let class = |r: &mut ChaCha8Rng| RestrictionExpr::class(CLASSES[r.gen_range(0..4)]);
    let prop = |r: &mut ChaCha8Rng| OBJECT_PROPS[r.gen_range(0..3)];
    if depth == 0 {
        return match r.gen_range(0..4) {
            0 => RestrictionExpr::has_value("age", DocValue::Int(r.gen_range(15..=40))),
            1 => RestrictionExpr::has_value("takes", DocValue::Iri { iri: format!("c{}", r.gen_range(0..4)) }),
            _ => class(r),
        };
    }
    match r.gen_range(0..8) {
        0 => RestrictionExpr::IntersectionOf((0..r.gen_range(0..3)).map(|_| random_expr(r, depth - 1)).collect()),
        1 => RestrictionExpr::UnionOf((0..r.gen_range(0..3)).map(|_| random_expr(r, depth - 1)).collect()),
        2 => RestrictionExpr::some(prop(r), random_expr(r, depth - 1)),
        3 => RestrictionExpr::all(prop(r), random_expr(r, depth - 1)),
        4 => RestrictionExpr::min(r.gen_range(0..3), prop(r), class(r)),
        5 => RestrictionExpr::max(r.gen_range(0..3), prop(r), class(r)),
        6 => RestrictionExpr::max(0, prop(r), random_expr(r, depth - 1)),
        _ => RestrictionExpr::min(1, prop(r), random_expr(r, depth - 1)),
    }
}

/// Direct set semantics of a restriction over the individuals of `kb`.
fn holds(kb: &KnowledgeBase, x: EntityId, e: &RestrictionExpr) -> bool {
    let objects = |p: &str| -> Vec<EntityId> {
        let p = kb.require_property(p).unwrap();
        kb.values(x, p).filter_map(Value::as_ref_id).collect()
    };
    match e {
        RestrictionExpr::IntersectionOf(es) => es.iter().all(|e| holds(kb, x, e)),
        RestrictionExpr::UnionOf(es) => es.iter().any(|e| holds(kb, x, e)),
        RestrictionExpr::ClassRef(c) => kb.has_type(x, kb.require_class(c).unwrap(), true),
        RestrictionExpr::SomeValuesFrom { property, filler } => objects(property).iter().any(|o| holds(kb, *o, filler)),
        RestrictionExpr::AllValuesFrom { property, filler } => objects(property).iter().all(|o| holds(kb, *o, filler)),
        RestrictionExpr::HasValue { property, value } => {
            let p = kb.require_property(property).unwrap();
            let want = match value {
                DocValue::Int(i) => Value::Int(*i),
                DocValue::Iri { iri } => match kb.individual_by_iri(iri) {
                    Some(id) => Value::Ref(id),
                    None => return false,
                },
                other => panic!("generator does not produce {other:?}"),
            };
            kb.values(x, p).any(|v| *v == want)
        }
        RestrictionExpr::MinQualifiedCardinality { n, property, filler } => {
            objects(property).iter().filter(|o| holds(kb, **o, filler)).count() >= *n as usize
        }
        RestrictionExpr::MaxQualifiedCardinality { n, property, filler } => {
            objects(property).iter().filter(|o| holds(kb, **o, filler)).count() <= *n as usize
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn compiled_axiom_matches_direct_semantics(seed in any::<u64>()) {
        let mut r = rng(seed);
        let kb = eql_kb(&mut r, 30);
        let depth = r.gen_range(0..=3);
        let expr = random_expr(&mut r, depth);
        let cond = compile_axiom(&expr, &kb).unwrap();
        let compiled = Compiled::new(&cond, &*kb, &[("candidate", None)]).unwrap();
        for ind in kb.individuals() {
            let got = compiled.eval(&*kb, &[Value::Ref(ind.id)]).unwrap();
            prop_assert_eq!(got, holds(&kb, ind.id, &expr), "{:?} on {}", expr, ind.id);
        }
    }
}
