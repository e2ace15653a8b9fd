use serde_json::json;

use super::*;
use crate::eql::print_condition;

fn doc(v: serde_json::Value) -> OntologyDoc {
    serde_json::from_value(v).unwrap()
}

fn university() -> OntologyDoc {
    doc(json!({
        "classes": [
            {"name": "Person"},
            {"name": "Course"},
            {"name": "Student", "superclasses": ["Person"], "role_for": "Person"},
            {"name": "LeisureStudent", "superclasses": ["Student"]}
        ],
        "properties": [
            {"name": "takes_course", "domain": "Student", "range": "Course"},
            {"name": "age", "domain": "Person", "range": "int", "functional": true}
        ],
        "axioms": [
            {"class": "LeisureStudent", "expr": {"intersection_of": [
                {"class_ref": "Student"},
                {"max_qualified_cardinality": {"n": 1, "property": "takes_course", "filler": {"class_ref": "Course"}}}
            ]}}
        ],
        "individuals": [
            {"iri": "c1", "types": ["Course"]},
            {"iri": "c2", "types": ["Course"]},
            {"iri": "ann", "types": ["Student"], "assertions": {"takes_course": "c1", "age": 20}},
            {"iri": "bob", "types": ["Student"], "assertions": {"takes_course": ["c1", "c2"]}},
            {"iri": "cy", "types": ["Person"]}
        ]
    }))
}

#[test]
fn leisure_student_axiom() {
    let mut kb = KnowledgeBase::new();
    let (t, n) = import_document(&university(), &mut kb).unwrap();
    assert_eq!(n, 5);
    let student = kb.class_id("Student").unwrap();
    assert!(kb.class(student).is_role());
    assert!(t.roles.contains(&(student, kb.class_id("Person").unwrap())));
    let leisure = kb.class_id("LeisureStudent").unwrap();
    assert_eq!(
        print_condition(kb.class(leisure).axiom.as_ref().unwrap()),
        "and(is_a(candidate, Student), count(candidate.takes_course[Course]) <= 1)"
    );
    materialize(&mut kb).unwrap();
    let ann = kb.individual_by_iri("ann").unwrap();
    let bob = kb.individual_by_iri("bob").unwrap();
    let cy = kb.individual_by_iri("cy").unwrap();
    assert!(kb.has_type(ann, leisure, true));
    assert!(!kb.has_type(bob, leisure, true));
    assert!(!kb.has_type(cy, leisure, true));
    assert_eq!(kb.role_bindings(ann).len(), 2);
}

#[test]
fn empty_document() {
    let mut kb = KnowledgeBase::new();
    let (t, n) = import_document(&OntologyDoc::default(), &mut kb).unwrap();
    assert_eq!(t, TboxImport::default());
    assert_eq!(n, 0);
    assert_eq!(kb.classes().count(), 0);
}

#[test]
fn disjoint_siblings_stay_plain() {
    let d = doc(json!({
        "classes": [
            {"name": "Agent"},
            {"name": "Human", "superclasses": ["Agent"], "disjoint_with": ["Robot"]},
            {"name": "Robot", "superclasses": ["Agent"]}
        ],
        "individuals": [{"iri": "x", "types": ["Human", "Robot"]}]
    }));
    let mut kb = KnowledgeBase::new();
    import_tbox(&d, &mut kb).unwrap();
    assert!(kb.classes().all(|c| c.role_for.is_none()));
    assert!(kb.are_disjoint(kb.class_id("Human").unwrap(), kb.class_id("Robot").unwrap()));
    assert!(matches!(import_abox(&d, &mut kb), Err(OntoError::Kb(KbError::DisjointnessViolation { .. }))));
}

#[test]
fn co_instantiated_siblings_become_roles() {
    let d = doc(json!({
        "classes": [
            {"name": "Person"},
            {"name": "Student", "superclasses": ["Person"]},
            {"name": "Employee", "superclasses": ["Person"]}
        ],
        "individuals": [{"iri": "x", "types": ["Student", "Employee"]}]
    }));
    let mut kb = KnowledgeBase::new();
    let (t, _) = import_document(&d, &mut kb).unwrap();
    assert_eq!(t.roles.len(), 2);
    let x = kb.individual_by_iri("x").unwrap();
    assert_eq!(kb.role_bindings(x).len(), 2);
    assert_eq!(kb.individual(x).unwrap().declared_types.len(), 1);
}

#[test]
fn unresolved_and_inconsistent() {
    let mut kb = KnowledgeBase::new();
    let d = doc(json!({"classes": [{"name": "A", "superclasses": ["Nope"]}]}));
    assert_eq!(import_tbox(&d, &mut kb), Err(OntoError::UnresolvedReference("Nope".into())));
    let d = doc(json!({"classes": [{"name": "A"}, {"name": "B", "superclasses": ["A"], "disjoint_with": ["A"]}]}));
    assert!(matches!(import_tbox(&d, &mut KnowledgeBase::new()), Err(OntoError::InconsistentDisjointness(_))));
    let d = doc(json!({"classes": [{"name": "A"}], "properties": [{"name": "p", "domain": "A", "range": "Missing"}]}));
    assert_eq!(import_tbox(&d, &mut KnowledgeBase::new()), Err(OntoError::UnresolvedReference("Missing".into())));
    let d = doc(json!({"classes": [{"name": "A"}], "individuals": [{"iri": "a", "types": ["A"], "assertions": {"q": 1}}]}));
    let mut kb = KnowledgeBase::new();
    import_tbox(&d, &mut kb).unwrap();
    assert_eq!(import_abox(&d, &mut kb), Err(OntoError::UnresolvedReference("q".into())));
    let d = doc(json!({"classes": [{"name": "A"}], "properties": [{"name": "n", "domain": "A", "range": "int"}],
        "individuals": [{"iri": "a", "types": ["A"], "assertions": {"n": "ten"}}]}));
    let mut kb = KnowledgeBase::new();
    import_tbox(&d, &mut kb).unwrap();
    assert!(matches!(import_abox(&d, &mut kb), Err(OntoError::Kb(KbError::RangeViolation { .. }))));
}

#[test]
fn abox_counts() {
    let mut kb = KnowledgeBase::new();
    import_document(&university(), &mut kb).unwrap();
    // 3 takes_course + 1 age
    assert_eq!(kb.property_value_count(), 4);
}

fn chain(chars: serde_json::Value, edges: &[(&str, &str)]) -> KnowledgeBase {
    let mut p = json!({"name": "p", "domain": "N", "range": "N"});
    p.as_object_mut().unwrap().extend(chars.as_object().unwrap().clone());
    let mut names: Vec<&str> = edges.iter().flat_map(|(a, b)| [*a, *b]).collect();
    names.sort();
    names.dedup();
    let mut inds: Vec<serde_json::Value> = names.iter().map(|n| json!({"iri": n, "types": ["N"]})).collect();
    for (a, b) in edges {
        let i = names.iter().position(|n| n == a).unwrap();
        let list = inds[i]["assertions"].get("p").cloned().unwrap_or(json!([]));
        let mut list = list.as_array().unwrap().clone();
        list.push(json!(b));
        inds[i]["assertions"] = json!({"p": list});
    }
    let d = doc(json!({"classes": [{"name": "N"}], "properties": [p], "individuals": inds}));
    let mut kb = KnowledgeBase::new();
    import_document(&d, &mut kb).unwrap();
    kb
}

fn has(kb: &KnowledgeBase, a: &str, b: &str) -> bool {
    let (a, b) = (kb.individual_by_iri(a).unwrap(), kb.individual_by_iri(b).unwrap());
    kb.values(a, kb.property_id("p").unwrap()).any(|v| *v == Value::Ref(b))
}

#[test]
fn transitive_chain() {
    let mut kb = chain(json!({"transitive": true}), &[("a", "b"), ("b", "c")]);
    let r = materialize(&mut kb).unwrap();
    assert!(has(&kb, "a", "c"));
    assert_eq!(r.count(RuleKind::Transitive), 1);
    assert_eq!(r.total(), 1);
}

#[test]
fn symmetric_mirror() {
    let mut kb = chain(json!({"symmetric": true}), &[("a", "b")]);
    materialize(&mut kb).unwrap();
    assert!(has(&kb, "b", "a"));
    assert!(!has(&kb, "a", "a"));
}

#[test]
fn wcc_closure() {
    let mut kb = chain(json!({"symmetric": true, "transitive": true}), &[("a", "b"), ("b", "c"), ("d", "e")]);
    let p = kb.property_id("p").unwrap();
    assert_eq!(close_symmetric_transitive(&mut kb, p).unwrap(), 4 + 1);
    assert_eq!(kb.property_value_count(), 6 + 2);
    assert!(!has(&kb, "a", "d"));
    assert!(!has(&kb, "a", "a"));
    assert_eq!(close_symmetric_transitive(&mut kb, p).unwrap(), 0);

    let mut kb = chain(json!({"symmetric": true, "transitive": true, "reflexive": true}), &[("a", "b")]);
    let p = kb.property_id("p").unwrap();
    assert_eq!(close_symmetric_transitive(&mut kb, p).unwrap(), 3);
    let mut kb = chain(json!({"transitive": true}), &[("a", "b")]);
    let p = kb.property_id("p").unwrap();
    assert!(matches!(close_symmetric_transitive(&mut kb, p), Err(OntoError::NotSymmetricTransitive(_))));
}

#[test]
fn no_edges_no_closure() {
    let d = doc(json!({"classes": [{"name": "N"}], "properties": [{"name": "p", "domain": "N", "range": "N", "symmetric": true, "transitive": true}]}));
    let mut kb = KnowledgeBase::new();
    import_document(&d, &mut kb).unwrap();
    let p = kb.property_id("p").unwrap();
    assert_eq!(close_symmetric_transitive(&mut kb, p).unwrap(), 0);
}

#[test]
fn subproperty_inverse_and_typing() {
    let d = doc(json!({
        "classes": [{"name": "Person"}, {"name": "Org"}, {"name": "Employee", "superclasses": ["Person"], "role_for": "Person"}],
        "properties": [
            {"name": "works_for", "domain": "Person", "range": "Org"},
            {"name": "heads", "domain": "Employee", "range": "Org", "sub_property_of": ["works_for"]},
            {"name": "has_member", "domain": "Org", "range": "Person", "inverse_of": "works_for"}
        ],
        "individuals": [{"iri": "p", "types": ["Person"], "assertions": {"heads": "o"}}, {"iri": "o"}]
    }));
    let mut kb = KnowledgeBase::new();
    import_document(&d, &mut kb).unwrap();
    let before = kb.statement_count();
    let r = materialize(&mut kb).unwrap();
    assert_eq!(r.total(), kb.statement_count() - before);
    let p = kb.individual_by_iri("p").unwrap();
    let o = kb.individual_by_iri("o").unwrap();
    assert!(kb.values(p, kb.property_id("works_for").unwrap()).any(|v| *v == Value::Ref(o)));
    assert!(kb.values(o, kb.property_id("has_member").unwrap()).any(|v| *v == Value::Ref(p)));
    assert!(kb.has_type(p, kb.class_id("Employee").unwrap(), true));
    assert!(kb.has_type(o, kb.class_id("Org").unwrap(), true));
    assert_eq!(r.count(RuleKind::SubProperty), 1);
    assert_eq!(r.count(RuleKind::Inverse), 1);
    assert_eq!(r.count(RuleKind::DomainTyping), 1);
    assert_eq!(r.count(RuleKind::RangeTyping), 1);
    let again = materialize(&mut kb).unwrap();
    assert_eq!(again.total(), 0);
}

#[test]
fn compile_constructs() {
    let mut kb = KnowledgeBase::new();
    import_tbox(&university(), &mut kb).unwrap();
    let c = |e: RestrictionExpr| print_condition(&compile_axiom(&e, &kb).unwrap());
    assert_eq!(c(RestrictionExpr::class("Course")), "is_a(candidate, Course)");
    assert_eq!(c(RestrictionExpr::some("takes_course", RestrictionExpr::class("Course"))), "exists(v1 in candidate.takes_course, is_a(v1, Course))");
    assert_eq!(c(RestrictionExpr::all("takes_course", RestrictionExpr::class("Course"))), "for_all(v1 in candidate.takes_course, is_a(v1, Course))");
    assert_eq!(c(RestrictionExpr::has_value("age", DocValue::Int(3))), "contains(candidate.age, 3)");
    assert_eq!(c(RestrictionExpr::min(2, "takes_course", RestrictionExpr::class("Course"))), "count(candidate.takes_course[Course]) >= 2");
    let nested = RestrictionExpr::max(0, "takes_course", RestrictionExpr::some("takes_course", RestrictionExpr::class("Course")));
    assert!(c(nested).starts_with("not(exists("));
    let unsupported = RestrictionExpr::max(2, "takes_course", RestrictionExpr::UnionOf(vec![]));
    assert!(matches!(compile_axiom(&unsupported, &kb), Err(OntoError::UnsupportedConstruct(_))));
    assert!(matches!(compile_axiom(&RestrictionExpr::class("Nope"), &kb), Err(OntoError::UnresolvedReference(_))));
}

#[test]
fn classification_chains_through_new_types() {
    let d = doc(json!({
        "classes": [{"name": "A"}, {"name": "B"}, {"name": "C"}],
        "axioms": [
            {"class": "B", "expr": {"class_ref": "A"}},
            {"class": "C", "expr": {"class_ref": "B"}}
        ],
        "individuals": [{"iri": "x", "types": ["A"]}, {"iri": "y"}]
    }));
    let mut kb = KnowledgeBase::new();
    import_document(&d, &mut kb).unwrap();
    assert_eq!(classify_individuals(&mut kb).unwrap(), 2);
    let x = kb.individual_by_iri("x").unwrap();
    assert!(kb.has_type(x, kb.class_id("C").unwrap(), false));
    let y = kb.individual_by_iri("y").unwrap();
    assert!(kb.types_of(y, true).unwrap().is_empty());
    assert_eq!(classify_individuals(&mut kb).unwrap(), 0);
}

#[test]
fn classification_disjointness_error() {
    let d = doc(json!({
        "classes": [{"name": "A"}, {"name": "B", "disjoint_with": ["A"]}],
        "axioms": [{"class": "B", "expr": {"class_ref": "A"}}],
        "individuals": [{"iri": "x", "types": ["A"]}]
    }));
    let mut kb = KnowledgeBase::new();
    import_document(&d, &mut kb).unwrap();
    assert!(matches!(classify_individuals(&mut kb), Err(OntoError::Kb(KbError::DisjointnessViolation { .. }))));
}

#[test]
fn equivalent_class_ref_collapses() {
    let d = doc(json!({"classes": [{"name": "Human"}, {"name": "Person", "equivalent_to": {"class_ref": "Human"}}]}));
    let mut kb = KnowledgeBase::new();
    import_tbox(&d, &mut kb).unwrap();
    assert_eq!(kb.class_id("Person"), kb.class_id("Human"));
}

#[test]
fn ntriples_subset() {
    let mut kb = KnowledgeBase::new();
    import_tbox(&university(), &mut kb).unwrap();
    let text = r#"
# comment
<http://ex.org/ann> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://ex.org/onto#Student> .
<http://ex.org/c1> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://ex.org/onto#Course> .
<http://ex.org/ann> <http://ex.org/onto#takes_course> <http://ex.org/c1> .
<http://ex.org/ann> <http://ex.org/onto#age> "21"^^<http://www.w3.org/2001/XMLSchema#integer> .
"#;
    assert_eq!(import_ntriples(text, &mut kb).unwrap(), 4);
    let ann = kb.individual_by_iri("http://ex.org/ann").unwrap();
    assert_eq!(kb.values(ann, kb.property_id("age").unwrap()).next(), Some(&Value::Int(21)));
    assert!(matches!(import_ntriples("<a> <b> .", &mut kb), Err(OntoError::Syntax { line: 1, .. })));
    assert!(matches!(import_ntriples("<a> <http://x#nope> <b> .", &mut kb), Err(OntoError::UnresolvedReference(_))));
}
