//! Random generators and reference implementations shared by the property
//! and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use entitykb::eql::{parse_condition, Operand, Path};
use entitykb::kb::{AttributeSpec, Characteristics, ClassSpec, EntityId, KnowledgeBase, PropertyId, PropertySpec, Value};
use entitykb::ormatic::{derive_schema, load_graph, Session, Store};
use entitykb::rdr::{CaseGraph, Conclusion, Expert, Prompt, RuleTree, Slot};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Up to `max` distinct elements of `items`.
pub fn sample<T: Copy>(r: &mut ChaCha8Rng, items: &[T], max: usize) -> Vec<T> {
    let k = r.gen_range(0..=max.min(items.len()));
    items.choose_multiple(r, k).copied().collect()
}

// ---------------------------------------------------------------- EQL

pub fn eql_schema() -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    kb.define_class(
        ClassSpec::new("Person")
            .attribute(AttributeSpec::one("age", "integer"))
            .attribute(AttributeSpec::one("score", "decimal"))
            .attribute(AttributeSpec::one("name", "string")),
    )
    .unwrap();
    kb.define_class(ClassSpec::new("Student").superclass("Person")).unwrap();
    kb.define_class(ClassSpec::new("Member").role_for("Person").attribute(AttributeSpec::one("rank", "integer"))).unwrap();
    kb.define_class(
        ClassSpec::new("Course").attribute(AttributeSpec::one("level", "integer")).attribute(AttributeSpec::many("topics", "string")),
    )
    .unwrap();
    kb.define_property(PropertySpec::new("takes", "Person", "Course")).unwrap();
    kb.define_property(PropertySpec::new("friend", "Person", "Person")).unwrap();
    kb.define_property(PropertySpec::new("mentor", "Person", "Person").with(Characteristics::functional())).unwrap();
    kb
}

/// A knowledge base of at most `max` individuals over [`eql_schema`].
pub fn eql_kb(r: &mut ChaCha8Rng, max: usize) -> KnowledgeBase {
    let mut kb = eql_schema();
    let person = kb.require_class("Person").unwrap();
    let student = kb.require_class("Student").unwrap();
    let member = kb.require_class("Member").unwrap();
    let course = kb.require_class("Course").unwrap();
    let total = r.gen_range(0..=max);
    let n_courses = total / 5;
    let courses: Vec<EntityId> = (0..n_courses)
        .map(|i| {
            let c = kb.add_individual(Some(&format!("c{i}")), &[course]).unwrap();
            if r.gen_bool(0.9) {
                kb.assert_named(c, "level", r.gen_range(1..=5i64)).unwrap();
            }
            for t in ["ai", "db", "pl"] {
                if r.gen_bool(0.3) {
                    kb.assert_named(c, "topics", t).unwrap();
                }
            }
            c
        })
        .collect();
    let people: Vec<EntityId> = (0..total - n_courses)
        .map(|i| {
            let ty = if r.gen_bool(0.4) { student } else { person };
            let p = kb.add_individual(Some(&format!("p{i}")), &[ty]).unwrap();
            if r.gen_bool(0.9) {
                kb.assert_named(p, "age", r.gen_range(15..=40i64)).unwrap();
            }
            if r.gen_bool(0.7) {
                kb.assert_named(p, "score", r.gen_range(0..=8) as f64 * 0.5).unwrap();
            }
            if r.gen_bool(0.8) {
                kb.assert_named(p, "name", format!("n{}", r.gen_range(0..10))).unwrap();
            }
            if r.gen_bool(0.3) {
                kb.bind_role(p, member).unwrap();
                if r.gen_bool(0.8) {
                    kb.assert_named(p, "rank", r.gen_range(1..=3i64)).unwrap();
                }
            }
            p
        })
        .collect();
    for p in &people {
        if !courses.is_empty() {
            for c in sample(r, &courses, 3) {
                kb.assert_named(*p, "takes", Value::Ref(c)).unwrap();
            }
        }
        for f in sample(r, &people, 2) {
            kb.assert_named(*p, "friend", Value::Ref(f)).unwrap();
        }
        if r.gen_bool(0.3) {
            let m = *people.choose(r).unwrap();
            kb.assert_named(*p, "mentor", Value::Ref(m)).unwrap();
        }
    }
    kb
}

#[derive(Clone, Copy, PartialEq)]
enum VarKind {
    Person,
    Course,
    Topic,
}

struct CondGen<'a> {
    r: &'a mut ChaCha8Rng,
    fresh: usize,
    /// Allows quantifiers over whole class extensions.
    wide: bool,
}

const OPS: [&str; 6] = ["==", "!=", "<", "<=", ">", ">="];

impl CondGen<'_> {
    fn op(&mut self) -> &'static str {
        OPS[self.r.gen_range(0..OPS.len())]
    }

    fn var(&mut self) -> String {
        self.fresh += 1;
        format!("v{}", self.fresh)
    }

    fn atom(&mut self, scope: &[(String, VarKind)], depth: usize) -> String {
        let (v, kind) = scope[self.r.gen_range(0..scope.len())].clone();
        let persons: Vec<&String> = scope.iter().filter(|(_, k)| *k == VarKind::Person).map(|(n, _)| n).collect();
        match kind {
            VarKind::Topic => format!("{v} == \"{}\"", ["ai", "db", "pl", "os"][self.r.gen_range(0..4)]),
            VarKind::Course => match self.r.gen_range(0..4) {
                0 => format!("{v}.level {} {}", self.op(), self.r.gen_range(0..=6)),
                1 => format!("is_a({v}, {})", ["Course", "Person"][self.r.gen_range(0..2)]),
                2 => format!("contains({v}.topics, \"{}\")", ["ai", "db", "pl"][self.r.gen_range(0..3)]),
                _ if depth > 0 => {
                    let t = self.var();
                    let mut inner = scope.to_vec();
                    inner.push((t.clone(), VarKind::Topic));
                    let body = self.cond(&inner, depth - 1);
                    format!("exists({t} in {v}.topics, {body})")
                }
                _ => format!("count({v}.topics) {} {}", self.op(), self.r.gen_range(0..=3)),
            },
            VarKind::Person => match self.r.gen_range(0..12) {
                0 => format!("{v}.age {} {}", self.op(), self.r.gen_range(14..=41)),
                1 => format!("{v}.score {} {:.1}", self.op(), self.r.gen_range(0..=9) as f64 * 0.5),
                2 => format!("{v}.name == \"n{}\"", self.r.gen_range(0..10)),
                3 => format!("is_a({v}, {})", ["Student", "Member", "Person", "Course"][self.r.gen_range(0..4)]),
                4 => format!("{v}.rank {} {}", self.op(), self.r.gen_range(0..=3)),
                5 => format!("count({v}.takes) {} {}", self.op(), self.r.gen_range(0..=3)),
                6 => format!("count({v}.friend[Student]) {} {}", self.op(), self.r.gen_range(0..=2)),
                7 => {
                    let w = persons[self.r.gen_range(0..persons.len())];
                    if self.r.gen_bool(0.5) { format!("contains({v}.friend, {w})") } else { format!("{v}.mentor == {w}") }
                }
                8 if depth > 0 => {
                    let c = self.var();
                    let mut inner = scope.to_vec();
                    inner.push((c.clone(), VarKind::Course));
                    let body = self.cond(&inner, depth - 1);
                    let q = if self.r.gen_bool(0.5) { "exists" } else { "for_all" };
                    format!("{q}({c} in {v}.takes, {body})")
                }
                9 if depth > 0 => {
                    let f = self.var();
                    let mut inner = scope.to_vec();
                    inner.push((f.clone(), VarKind::Person));
                    let body = self.cond(&inner, depth - 1);
                    let q = if self.r.gen_bool(0.5) { "exists" } else { "for_all" };
                    format!("{q}({f} in {v}.friend, {body})")
                }
                10 if depth > 0 && self.wide => {
                    let o = self.var();
                    let mut inner = scope.to_vec();
                    inner.push((o.clone(), VarKind::Person));
                    let body = self.cond(&inner, depth - 1);
                    format!("exists({o}:Person, and(contains({v}.friend, {o}), {body}))")
                }
                11 => format!("{v}.mentor.age {} {}", self.op(), self.r.gen_range(14..=41)),
                _ => format!("{v}.age > {}", self.r.gen_range(14..=41)),
            },
        }
    }

    fn cond(&mut self, scope: &[(String, VarKind)], depth: usize) -> String {
        match self.r.gen_range(0..10) {
            0 | 1 if depth > 0 => {
                let n = self.r.gen_range(0..=3);
                let parts: Vec<String> = (0..n).map(|_| self.cond(scope, depth - 1)).collect();
                let f = if self.r.gen_bool(0.5) { "and" } else { "or" };
                match (parts.is_empty(), f) {
                    (true, "and") => "true".into(),
                    (true, _) => "false".into(),
                    _ => format!("{f}({})", parts.join(", ")),
                }
            }
            2 if depth > 0 => format!("not({})", self.cond(scope, depth - 1)),
            _ => self.atom(scope, depth),
        }
    }
}

/// Random condition text over the given variables.
pub fn random_condition(r: &mut ChaCha8Rng, scope_persons: &[&str], depth: usize) -> String {
    let scope: Vec<(String, VarKind)> = scope_persons.iter().map(|s| (s.to_string(), VarKind::Person)).collect();
    CondGen { r, fresh: 0, wide: true }.cond(&scope, depth)
}

/// Random query text over [`eql_schema`].
pub fn random_query(r: &mut ChaCha8Rng) -> String {
    let shape = r.gen_range(0..4);
    let (desc, scope, wide) = match shape {
        0 => ("entity(p:Person)".to_string(), vec![("p".to_string(), VarKind::Person)], true),
        1 => ("entity(c:Course)".to_string(), vec![("c".to_string(), VarKind::Course)], true),
        2 => (
            "set_of(p:Person, q:Person)".to_string(),
            vec![("p".to_string(), VarKind::Person), ("q".to_string(), VarKind::Person)],
            false,
        ),
        _ => (
            "set_of(p:Person, c in p.takes)".to_string(),
            vec![("p".to_string(), VarKind::Person), ("c".to_string(), VarKind::Course)],
            false,
        ),
    };
    let mut g = CondGen { r, fresh: 0, wide };
    let n = g.r.gen_range(0..=2);
    let conds: Vec<String> = (0..n).map(|_| g.cond(&scope, 2)).collect();
    let proc = if g.r.gen_bool(0.8) { "an" } else { "count" };
    if conds.is_empty() {
        format!("{proc}({desc})")
    } else {
        format!("{proc}({desc}.where({}))", conds.join(", "))
    }
}

// ---------------------------------------------------------------- RDR

pub const ATTRS: [&str; 3] = ["x", "y", "z"];

pub fn rdr_case(r: &mut ChaCha8Rng) -> CaseGraph {
    let mut c = CaseGraph::new(&["Item"]);
    let root = c.root();
    for a in ATTRS {
        c.set_values(root, a, vec![Value::Int(r.gen_range(0..6))]);
    }
    let kind = if r.gen_bool(0.5) { "Large" } else { "Small" };
    let part = c.add_object(&[kind], vec![("w", vec![Value::Int(r.gen_range(0..4))])]);
    c.set_values(root, "part", vec![Value::Ref(part)]);
    c
}

fn int(c: &CaseGraph, obj: EntityId, a: &str) -> i64 {
    match c.field(obj, a).first() {
        Some(Value::Int(i)) => *i,
        _ => panic!("case field {a} missing"),
    }
}

fn part(c: &CaseGraph) -> EntityId {
    match c.field(c.root(), "part").first() {
        Some(Value::Ref(p)) => *p,
        _ => panic!("case has no part"),
    }
}

/// Hidden target concept the scripted expert knows.
pub fn label(c: &CaseGraph) -> Option<&'static str> {
    let root = c.root();
    let (x, y, z) = (int(c, root, "x"), int(c, root, "y"), int(c, root, "z"));
    let large = c.types(part(c)).contains(&"Large");
    if x > 3 && y < 2 {
        Some("A")
    } else if z == 0 {
        Some("B")
    } else if large && int(c, part(c), "w") >= 2 {
        Some("C")
    } else if x == y {
        Some("D")
    } else {
        None
    }
}

fn label_rule(l: &str) -> &'static str {
    match l {
        "A" => "and(x > 3, y < 2)",
        "B" => "z == 0",
        "C" => "and(is_a(part, Large), part.w >= 2)",
        _ => "x == y",
    }
}

pub fn label_conclusions(c: &CaseGraph) -> Vec<Conclusion> {
    match label(c) {
        Some(l) => vec![Conclusion::infer(l, vec![("src", Operand::Path(Path::var("case").attr("x")))])],
        None => Vec::new(),
    }
}

/// Signature over every attribute the hidden concept reads.
fn features(c: &CaseGraph) -> Vec<(String, i64)> {
    let root = c.root();
    let p = part(c);
    let mut out: Vec<(String, i64)> = ATTRS.iter().map(|a| (a.to_string(), int(c, root, a))).collect();
    out.push(("part.w".into(), int(c, p, "w")));
    out.push(("large".into(), c.types(p).contains(&"Large") as i64));
    out
}

fn feature_text(name: &str, v: i64, rel: &str) -> String {
    if name == "large" {
        if v == 1 { "is_a(part, Large)".into() } else { "not(is_a(part, Large))".into() }
    } else {
        format!("{name} {rel} {v}")
    }
}

/// Answers conflicts from the hidden concept: first its general rule narrowed
/// against the cornerstone, then an exact description of the case.
#[derive(Default)]
pub struct ConceptExpert {
    last: Option<CaseGraph>,
    attempts: usize,
    pub prompts: usize,
}

impl Expert for ConceptExpert {
    fn conclusions(&mut self, case: &CaseGraph) -> Option<Vec<Conclusion>> {
        Some(label_conclusions(case))
    }

    fn condition(&mut self, prompt: &Prompt) -> Option<String> {
        self.prompts += 1;
        if self.last.as_ref() == Some(&prompt.case) {
            self.attempts += 1;
        } else {
            self.last = Some(prompt.case.clone());
            self.attempts = 0;
        }
        let mine = features(&prompt.case);
        let general = label(&prompt.case).map(label_rule);
        match self.attempts {
            0 => {
                let mut parts: Vec<String> = general.into_iter().map(String::from).collect();
                if let Some(corner) = &prompt.cornerstone {
                    let theirs = features(corner);
                    let (name, v) = mine.iter().zip(&theirs).find(|(a, b)| a.1 != b.1).map(|(a, b)| (a.0.clone(), (a.1, b.1)))?;
                    let rel = if v.0 > v.1 { ">" } else { "<" };
                    parts.push(if name == "large" { feature_text(&name, v.0, "") } else { feature_text(&name, v.1, rel) });
                }
                if parts.is_empty() {
                    parts.push("true".into());
                }
                Some(format!("and({})", parts.join(", ")))
            }
            1 => {
                let parts: Vec<String> = mine.iter().map(|(n, v)| feature_text(n, *v, "==")).collect();
                Some(format!("and({})", parts.join(", ")))
            }
            _ => None,
        }
    }
}

fn random_rdr_condition(r: &mut ChaCha8Rng) -> String {
    let atom = |r: &mut ChaCha8Rng| match r.gen_range(0..3) {
        0 => format!("{} {} {}", ATTRS[r.gen_range(0..3)], OPS[r.gen_range(0..6)], r.gen_range(0..6)),
        1 => format!("part.w {} {}", OPS[r.gen_range(0..6)], r.gen_range(0..4)),
        _ => "is_a(part, Large)".to_string(),
    };
    match r.gen_range(0..5) {
        0 => format!("and({}, {})", atom(r), atom(r)),
        1 => format!("or({}, {})", atom(r), atom(r)),
        2 => format!("not({})", atom(r)),
        _ => atom(r),
    }
}

/// A random tree of `rules` rules (root excluded) with field-carrying conclusions.
pub fn random_tree(r: &mut ChaCha8Rng, multi: bool, rules: usize) -> RuleTree {
    let mut t = if multi { RuleTree::multi("labels", "Label") } else { RuleTree::single("label", "Label") };
    for _ in 0..rules {
        let parent = r.gen_range(0..t.rules.len());
        let slot = if multi {
            Slot::Refine
        } else if r.gen_bool(0.6) {
            Slot::Except
        } else {
            Slot::Alternative
        };
        let parent = if slot == Slot::Alternative && parent == 0 { 1.min(t.rules.len() - 1) } else { parent };
        let slot = if parent == 0 && !multi { Slot::Except } else { slot };
        let cond = parse_condition(&random_rdr_condition(r), Some("case")).unwrap();
        let conclusion = if r.gen_bool(0.15) {
            Conclusion::Stop
        } else {
            let field = ["x", "y", "part"][r.gen_range(0..3)];
            Conclusion::infer(&format!("L{}", r.gen_range(0..5)), vec![("src", Operand::Path(Path::var("case").attr(field)))])
        };
        t.attach(parent, slot, cond, conclusion, None);
    }
    t
}

// ---------------------------------------------------------------- graphs

pub fn graph_kb(chars: Characteristics, n: usize, edges: &[(usize, usize)]) -> (KnowledgeBase, Vec<EntityId>) {
    let mut kb = KnowledgeBase::new();
    kb.define_class(ClassSpec::new("Node")).unwrap();
    kb.define_property(PropertySpec::new("knows", "Node", "Node").with(chars)).unwrap();
    let node = kb.require_class("Node").unwrap();
    let ids: Vec<EntityId> = (0..n).map(|i| kb.add_individual(Some(&format!("n{i}")), &[node]).unwrap()).collect();
    for (a, b) in edges {
        kb.assert_named(ids[*a], "knows", Value::Ref(ids[*b])).unwrap();
    }
    (kb, ids)
}

pub fn pairs(kb: &KnowledgeBase, prop: &str, ids: &[EntityId]) -> BTreeSet<(usize, usize)> {
    let p = kb.require_property(prop).unwrap();
    let pos: BTreeMap<EntityId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    ids.iter()
        .enumerate()
        .flat_map(|(i, id)| kb.values(*id, p).filter_map(Value::as_ref_id).map(move |o| (i, o)).collect::<Vec<_>>())
        .map(|(i, o)| (i, pos[&o]))
        .collect()
}


/// Edges of a random directed graph on `n` nodes.
pub fn random_edges(r: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    if n == 0 {
        return Vec::new();
    }
    let m = r.gen_range(0..=n * 2);
    (0..m).map(|_| (r.gen_range(0..n), r.gen_range(0..n))).collect()
}

/// Naive symmetric-transitive closure by repeated rule application, self pairs
/// kept only for nodes that carried an explicit self edge.
pub fn naive_sym_trans(edges: &[(usize, usize)], reflexive: bool, n: usize) -> BTreeSet<(usize, usize)> {
    let mut set: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
    loop {
        let mut next = set.clone();
        for (a, b) in &set {
            next.insert((*b, *a));
        }
        for (a, b) in &set {
            for (c, d) in &set {
                if b == c {
                    next.insert((*a, *d));
                }
            }
        }
        if next == set {
            break;
        }
        set = next;
    }
    let explicit: BTreeSet<usize> = edges.iter().filter(|(a, b)| a == b).map(|(a, _)| *a).collect();
    set.retain(|(a, b)| a != b || explicit.contains(a));
    if reflexive {
        let touched: BTreeSet<usize> = set.iter().flat_map(|(a, b)| [*a, *b]).collect();
        for t in touched {
            set.insert((t, t));
        }
    }
    let _ = n;
    set
}

// ---------------------------------------------------------------- persistence

/// Saves, loads and compares; returns the number of objects written.
pub fn persist_round_trip(kb: &KnowledgeBase, roots: &[EntityId], store: &mut dyn Store) -> Result<usize, String> {
    let schema = derive_schema(kb).map_err(|e| e.to_string())?;
    store.create_schema(&schema).map_err(|e| e.to_string())?;
    let report = Session::new(schema.clone()).save(kb, roots, store).map_err(|e| e.to_string())?;
    let closure = reachable(kb, roots);
    if report.keys.len() != closure.len() {
        return Err(format!("saved {} objects, closure has {}", report.keys.len(), closure.len()));
    }
    let loaded = load_graph(store, &schema, kb, None, &[]).map_err(|e| e.to_string())?;
    if loaded.kb.individual_count() != closure.len() {
        return Err(format!("loaded {} objects", loaded.kb.individual_count()));
    }
    let map: BTreeMap<EntityId, EntityId> = report.keys.iter().map(|(id, k)| (*id, loaded.keys[k])).collect();
    for id in &closure {
        same_individual(kb, *id, &loaded.kb, map[id], &map)?;
    }
    // writing the loaded graph back through an adopted session changes nothing
    let mut again = Session::adopt(schema, &loaded);
    let all: Vec<EntityId> = loaded.kb.individuals().map(|i| i.id).collect();
    let second = again.save(&loaded.kb, &all, store).map_err(|e| e.to_string())?;
    if second.changes() != 0 {
        return Err(format!("re-save reported {} changes", second.changes()));
    }
    Ok(closure.len())
}


pub fn orm_schema() -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    kb.define_class(
        ClassSpec::new("Base")
            .attribute(AttributeSpec::one("label", "string"))
            .attribute(AttributeSpec::one("weight", "decimal"))
            .attribute(AttributeSpec::one("flag", "boolean"))
            .attribute(AttributeSpec::one("n", "integer")),
    )
    .unwrap();
    kb.define_class(ClassSpec::new("Sub").superclass("Base").attribute(AttributeSpec::one("extra", "integer"))).unwrap();
    kb.define_class(ClassSpec::new("Leaf").superclass("Sub")).unwrap();
    kb.define_class(ClassSpec::new("Other").attribute(AttributeSpec::many("names", "string"))).unwrap();
    kb.define_class(
        ClassSpec::new("Tagged").role_for("Base").attribute(AttributeSpec::one("tag", "string")).attribute(AttributeSpec::many("refs", "Other")),
    )
    .unwrap();
    kb.define_class(ClassSpec::new("Special").superclass("Tagged").attribute(AttributeSpec::one("level", "integer"))).unwrap();
    kb.define_property(PropertySpec::new("next", "Base", "Base").with(Characteristics::functional())).unwrap();
    kb.define_property(PropertySpec::new("links", "Base", "Base")).unwrap();
    kb.define_property(PropertySpec::new("seq", "Base", "Other").ordered()).unwrap();
    kb.define_property(PropertySpec::new("back", "Other", "Base").with(Characteristics::functional())).unwrap();
    kb
}

/// Random graph with at most `max` objects, shared references and cycles.
pub fn orm_graph(r: &mut ChaCha8Rng, max: usize) -> (KnowledgeBase, Vec<EntityId>) {
    let mut kb = orm_schema();
    let class = |kb: &KnowledgeBase, n: &str| kb.require_class(n).unwrap();
    let (base, sub, leaf, other, tagged, special) =
        (class(&kb, "Base"), class(&kb, "Sub"), class(&kb, "Leaf"), class(&kb, "Other"), class(&kb, "Tagged"), class(&kb, "Special"));
    let n = r.gen_range(1..=max);
    let mut bases = Vec::new();
    let mut others = Vec::new();
    for i in 0..n {
        let iri = if r.gen_bool(0.5) { Some(format!("urn:o{i}")) } else { None };
        if r.gen_bool(0.25) {
            others.push(kb.add_individual(iri.as_deref(), &[other]).unwrap());
        } else {
            let ty = [base, sub, leaf][r.gen_range(0..3)];
            let id = kb.add_individual(iri.as_deref(), &[ty]).unwrap();
            if r.gen_bool(0.2) {
                let extra = [base, sub, leaf][r.gen_range(0..3)];
                kb.infer_type(id, extra).unwrap();
            }
            bases.push(id);
        }
    }
    let sub_like = |kb: &KnowledgeBase, id: EntityId| kb.has_type(id, sub, false);
    for b in &bases {
        if r.gen_bool(0.7) {
            kb.assert_named(*b, "label", format!("l{}", r.gen_range(0..50))).unwrap();
        }
        if r.gen_bool(0.5) {
            kb.assert_named(*b, "weight", r.gen_range(-100..100) as f64 / 8.0).unwrap();
        }
        if r.gen_bool(0.5) {
            kb.assert_named(*b, "flag", r.gen_bool(0.5)).unwrap();
        }
        if r.gen_bool(0.5) {
            kb.assert_named(*b, "n", r.gen_range(-5..1000i64)).unwrap();
        }
        if sub_like(&kb, *b) && r.gen_bool(0.6) {
            kb.assert_named(*b, "extra", r.gen_range(0..9i64)).unwrap();
        }
        // shared targets come from a small pool; cycles arise freely
        if r.gen_bool(0.6) {
            let t = if r.gen_bool(0.3) { bases[0] } else { *bases.choose(r).unwrap() };
            kb.assert_named(*b, "next", Value::Ref(t)).unwrap();
        }
        for t in sample(r, &bases, 2) {
            kb.assert_named(*b, "links", Value::Ref(t)).unwrap();
        }
        if !others.is_empty() {
            for _ in 0..r.gen_range(0..=3) {
                let o = *others.choose(r).unwrap();
                kb.assert_named(*b, "seq", Value::Ref(o)).unwrap();
            }
        }
        if r.gen_bool(0.3) {
            let role = if r.gen_bool(0.5) { tagged } else { special };
            kb.bind_role(*b, role).unwrap();
            if role == special && r.gen_bool(0.5) {
                kb.bind_role(*b, tagged).unwrap();
            }
            if r.gen_bool(0.7) {
                kb.assert_named(*b, "tag", format!("t{}", r.gen_range(0..5))).unwrap();
            }
            if role == special && r.gen_bool(0.7) {
                kb.assert_named(*b, "level", r.gen_range(0..3i64)).unwrap();
            }
            if !others.is_empty() {
                for o in sample(r, &others, 2) {
                    kb.assert_named(*b, "refs", Value::Ref(o)).unwrap();
                }
            }
        }
    }
    for o in &others {
        for _ in 0..r.gen_range(0..=2) {
            kb.assert_named(*o, "names", format!("s{}", r.gen_range(0..4))).unwrap();
        }
        if !bases.is_empty() && r.gen_bool(0.5) {
            kb.assert_named(*o, "back", Value::Ref(*bases.choose(r).unwrap())).unwrap();
        }
    }
    let mut roots: Vec<EntityId> = kb.individuals().map(|i| i.id).collect();
    roots.shuffle(r);
    roots.truncate(r.gen_range(1..=roots.len()).max(1));
    (kb, roots)
}

/// Individuals reachable from `roots` through reference values.
pub fn reachable(kb: &KnowledgeBase, roots: &[EntityId]) -> BTreeSet<EntityId> {
    let mut seen: BTreeSet<EntityId> = BTreeSet::new();
    let mut stack: Vec<EntityId> = roots.to_vec();
    while let Some(id) = stack.pop() {
        if !seen.insert(id) {
            continue;
        }
        let ind = kb.individual(id).unwrap();
        for v in ind.assertions.values().flatten().chain(ind.roles.iter().flat_map(|b| b.role_state.values().flatten())) {
            if let Value::Ref(t) = v {
                stack.push(*t);
            }
        }
    }
    seen
}

/// Compares two individuals under an identity mapping; returns a description of the first difference.
pub fn same_individual(a: &KnowledgeBase, ia: EntityId, b: &KnowledgeBase, ib: EntityId, map: &BTreeMap<EntityId, EntityId>) -> Result<(), String> {
    let x = a.individual(ia).unwrap();
    let y = b.individual(ib).unwrap();
    let mapv = |v: &Value| match v {
        Value::Ref(t) => Value::Ref(*map.get(t).expect("reference inside the closure")),
        other => other.clone(),
    };
    // association order is only kept for ordered properties
    let canon = |p: PropertyId, mut vs: Vec<Value>| {
        if !a.property(p).ordered {
            vs.sort();
        }
        vs
    };
    let map_state = |m: &BTreeMap<PropertyId, Vec<Value>>| -> BTreeMap<PropertyId, Vec<Value>> {
        m.iter().map(|(k, v)| (*k, canon(*k, v.iter().map(mapv).collect()))).collect()
    };
    let plain = |m: &BTreeMap<PropertyId, Vec<Value>>| -> BTreeMap<PropertyId, Vec<Value>> {
        m.iter().map(|(k, v)| (*k, canon(*k, v.clone()))).collect()
    };
    if x.iri != y.iri {
        return Err(format!("iri {:?} vs {:?}", x.iri, y.iri));
    }
    if x.declared_types != y.declared_types || x.inferred_types != y.inferred_types {
        return Err(format!("types of {ia}"));
    }
    if map_state(&x.assertions) != plain(&y.assertions) {
        return Err(format!("assertions of {ia}: {:?} vs {:?}", x.assertions, y.assertions));
    }
    let roles_a: BTreeMap<_, _> = x.roles.iter().map(|r| (r.role_class, map_state(&r.role_state))).collect();
    let roles_b: BTreeMap<_, _> = y.roles.iter().map(|r| (r.role_class, plain(&r.role_state))).collect();
    if roles_a != roles_b {
        return Err(format!("roles of {ia}: {roles_a:?} vs {roles_b:?}"));
    }
    Ok(())
}

pub fn expected_values(c: &CaseGraph) -> Vec<entitykb::rdr::ConclusionValue> {
    label_conclusions(c)
        .iter()
        .filter_map(|k| entitykb::rdr::evaluate_conclusion(k, c, "case").unwrap())
        .collect()
}

/// Fits `cases` one by one with [`ConceptExpert`], checking after every fit
/// that all cases seen so far still get their concept.
pub fn fit_stream(tree: &mut RuleTree, cases: &[CaseGraph]) -> Result<ConceptExpert, String> {
    let mut expert = ConceptExpert::default();
    let target = tree.target.attribute.clone();
    for (i, case) in cases.iter().enumerate() {
        let cq = entitykb::rdr::CaseQuery::new(case.clone(), &target, Some(label_conclusions(case)));
        entitykb::rdr::fit_case(tree, cq, &mut expert).map_err(|e| format!("case {i}: {e}"))?;
        for (j, seen) in cases[..=i].iter().enumerate() {
            let mut got = tree.classify(seen).map_err(|e| e.to_string())?.conclusions;
            let mut want = expected_values(seen);
            got.sort();
            want.sort();
            if got != want {
                return Err(format!("after fitting case {i}, case {j} concludes {got:?} instead of {want:?}"));
            }
        }
    }
    Ok(expert)
}
