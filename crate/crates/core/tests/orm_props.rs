mod common;

use std::collections::BTreeMap;

use common::*;
use entitykb::kb::KnowledgeBase;
use entitykb::ormatic::{MemoryStore, SqliteStore};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn memory_store_round_trip(seed in any::<u64>()) {
        let (kb, roots) = orm_graph(&mut rng(seed), 100);
        let mut store = MemoryStore::new();
        persist_round_trip(&kb, &roots, &mut store).map_err(TestCaseError::fail)?;
        prop_assert!(store.foreign_key_violations().is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn sqlite_store_round_trip(seed in any::<u64>()) {
        let (kb, roots) = orm_graph(&mut rng(seed), 100);
        let mut store = SqliteStore::open_in_memory().unwrap();
        persist_round_trip(&kb, &roots, &mut store).map_err(TestCaseError::fail)?;
        let bad = store.query("PRAGMA foreign_key_check").unwrap();
        prop_assert!(bad.is_empty(), "{:?}", bad);
    }
}

#[test]
fn generated_graphs_cover_the_interesting_shapes() {
    let (mut shared, mut cyclic, mut roles, mut nested) = (0, 0, 0, 0);
    for seed in 0..100 {
        let (kb, roots) = orm_graph(&mut rng(seed), 100);
        let closure = reachable(&kb, &roots);
        let next = kb.require_property("next").unwrap();
        let mut targets = BTreeMap::new();
        for id in &closure {
            for t in kb.values(*id, next).filter_map(|v| v.as_ref_id()) {
                *targets.entry(t).or_insert(0) += 1;
                if reachable(&kb, &[t]).contains(id) {
                    cyclic += 1;
                }
            }
            roles += kb.role_bindings(*id).len().min(1);
            nested += (kb.role_bindings(*id).len() > 1) as usize;
        }
        shared += targets.values().filter(|n| **n > 1).count().min(1);
    }
    assert!(shared > 50 && cyclic > 50 && roles > 50 && nested > 10, "{shared} {cyclic} {roles} {nested}");
}

#[test]
fn university_students_persist_with_inferred_roles() {
    use entitykb::bench::{generate_university, GenParams};
    use entitykb::ontomatic::{import_document, materialize};
    let mut kb = KnowledgeBase::new();
    import_document(&generate_university(&GenParams::small(3)), &mut kb).unwrap();
    materialize(&mut kb).unwrap();
    let leisure = kb.require_class("LeisureStudent").unwrap();
    let students = kb.extension_by_name("Student", true).unwrap();
    assert!(!kb.extension_of(leisure, true).unwrap().is_empty());
    let mut store = SqliteStore::open_in_memory().unwrap();
    persist_round_trip(&kb, &students, &mut store).unwrap();
}
