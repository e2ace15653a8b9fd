use std::collections::{BTreeMap, BTreeSet};

use entitykb::kb::{AttributeSpec, ClassSpec, EntityId, KnowledgeBase, Value};
use proptest::prelude::*;

#[derive(Clone, Debug)]
enum Op {
    Add,
    MakeStudent(usize),
    Tag(usize, u8),
    Untag(usize, u8),
    Friend(usize, usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        Just(Op::Add),
        any::<usize>().prop_map(Op::MakeStudent),
        (any::<usize>(), 0..5u8).prop_map(|(i, t)| Op::Tag(i, t)),
        (any::<usize>(), 0..5u8).prop_map(|(i, t)| Op::Untag(i, t)),
        (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Op::Friend(a, b)),
    ]
}

fn schema() -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    kb.define_class(
        ClassSpec::new("Person")
            .attribute(AttributeSpec::many("tags", "string"))
            .attribute(AttributeSpec::many("friend", "Person")),
    )
    .unwrap();
    kb.define_class(ClassSpec::new("Student").superclass("Person")).unwrap();
    kb
}

/// Set-based model of the same operations.
#[derive(Default)]
struct Model {
    types: Vec<BTreeSet<&'static str>>,
    values: Vec<BTreeSet<Value>>,
}

impl Model {
    fn statements(&self) -> usize {
        self.types.iter().map(BTreeSet::len).sum::<usize>() + self.values.iter().map(BTreeSet::len).sum::<usize>()
    }
}

fn apply(kb: &mut KnowledgeBase, model: &mut Model, ids: &mut Vec<EntityId>, op: &Op) -> Result<(), TestCaseError> {
    let person = kb.require_class("Person").unwrap();
    let student = kb.require_class("Student").unwrap();
    let tags = kb.require_property("tags").unwrap();
    let pick = |i: usize| i % ids.len();
    match *op {
        Op::Add => {
            ids.push(kb.add_individual(None, &[person]).unwrap());
            model.types.push(BTreeSet::from(["Person"]));
            model.values.push(BTreeSet::new());
        }
        _ if ids.is_empty() => {}
        Op::MakeStudent(i) => {
            let i = pick(i);
            let changed = kb.add_type(ids[i], student).unwrap();
            prop_assert_eq!(changed, model.types[i].insert("Student"));
            prop_assert!(!kb.add_type(ids[i], student).unwrap());
            prop_assert!(!kb.add_type(ids[i], person).unwrap());
        }
        Op::Tag(i, t) => {
            let i = pick(i);
            kb.assert_property(ids[i], tags, Value::Str(format!("t{t}"))).unwrap();
            model.values[i].insert(Value::Str(format!("t{t}")));
        }
        Op::Untag(i, t) => {
            let i = pick(i);
            let v = Value::Str(format!("t{t}"));
            let changed = kb.retract_property(ids[i], tags, &v).unwrap();
            prop_assert_eq!(changed, model.values[i].remove(&v));
        }
        Op::Friend(a, b) => {
            let (a, b) = (pick(a), pick(b));
            kb.assert_named(ids[a], "friend", Value::Ref(ids[b])).unwrap();
            model.values[a].insert(Value::Ref(ids[b]));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn statement_count_matches_model(ops in prop::collection::vec(op(), 0..80)) {
        let mut kb = schema();
        let mut model = Model::default();
        let mut ids = Vec::new();
        for o in &ops {
            apply(&mut kb, &mut model, &mut ids, o)?;
        }
        prop_assert_eq!(kb.statement_count(), model.statements());
        let student = kb.require_class("Student").unwrap();
        let students: BTreeSet<EntityId> = kb.extension_of(student, false).unwrap().into_iter().collect();
        let expected: BTreeSet<EntityId> =
            ids.iter().zip(&model.types).filter(|(_, t)| t.contains("Student")).map(|(id, _)| *id).collect();
        prop_assert_eq!(students, expected);
    }

    #[test]
    fn snapshots_are_isolated(before in prop::collection::vec(op(), 0..40), after in prop::collection::vec(op(), 1..40)) {
        let mut kb = schema();
        let mut model = Model::default();
        let mut ids = Vec::new();
        for o in &before {
            apply(&mut kb, &mut model, &mut ids, o)?;
        }
        let snap = kb.snapshot();
        let frozen: Vec<_> = snap.individuals().cloned().collect();
        let (count, generation) = (snap.statement_count(), snap.generation());
        for o in &after {
            apply(&mut kb, &mut model, &mut ids, o)?;
        }
        prop_assert_eq!(snap.individuals().cloned().collect::<Vec<_>>(), frozen);
        prop_assert_eq!(snap.statement_count(), count);
        prop_assert_eq!(snap.generation(), generation);
    }

    #[test]
    fn assert_then_retract_restores(ops in prop::collection::vec(op(), 1..40), who in any::<usize>()) {
        let mut kb = schema();
        let mut model = Model::default();
        let mut ids = vec![];
        apply(&mut kb, &mut model, &mut ids, &Op::Add)?;
        for o in &ops {
            apply(&mut kb, &mut model, &mut ids, o)?;
        }
        let id = ids[who % ids.len()];
        let tags = kb.require_property("tags").unwrap();
        let before: BTreeMap<_, _> = kb.individual(id).unwrap().assertions.clone();
        let fresh = Value::Str("never-used".into());
        kb.assert_property(id, tags, fresh.clone()).unwrap();
        prop_assert!(kb.retract_property(id, tags, &fresh).unwrap());
        prop_assert!(!kb.retract_property(id, tags, &fresh).unwrap());
        let after = &kb.individual(id).unwrap().assertions;
        let nonempty = |m: &BTreeMap<_, Vec<Value>>| m.iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (*k, v.clone())).collect::<BTreeMap<_, _>>();
        prop_assert_eq!(nonempty(&before), nonempty(after));
    }
}
