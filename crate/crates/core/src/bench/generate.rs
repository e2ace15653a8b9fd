use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ontomatic::{
    AxiomEntry, ClassEntry, DocValue, IndividualEntry, OneOrMany, OntologyDoc, PropertyEntry, RestrictionExpr,
};

/// Shape of a generated university knowledge base. Counts are per parent unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub universities: usize,
    pub departments: usize,
    pub groups: usize,
    pub students: usize,
    pub professors: usize,
    pub courses: usize,
    /// Upper bound on courses taken per student.
    pub max_courses: usize,
    pub graduate_ratio: f64,
    pub advisor_density: f64,
    pub assistant_density: f64,
    pub peer_density: f64,
    pub seed: u64,
}

impl Default for GenParams {
    /// Sized to land near 50k asserted statements.
    fn default() -> Self {
        GenParams {
            universities: 4,
            departments: 12,
            groups: 3,
            students: 120,
            professors: 12,
            courses: 20,
            max_courses: 4,
            graduate_ratio: 0.25,
            advisor_density: 0.3,
            assistant_density: 0.4,
            peer_density: 0.3,
            seed: 1,
        }
    }
}

impl GenParams {
    pub fn small(seed: u64) -> Self {
        GenParams { universities: 1, departments: 3, groups: 2, students: 20, professors: 5, courses: 6, seed, ..Default::default() }
    }

    /// Individuals the generator emits for these counts.
    pub fn individual_count(&self) -> usize {
        let per_dept = 1 + self.groups + self.students + self.professors + self.courses;
        self.universities * (1 + self.departments * per_dept)
    }
}

fn class(name: &str, supers: &[&str]) -> ClassEntry {
    ClassEntry { name: name.into(), superclasses: supers.iter().map(|s| s.to_string()).collect(), ..Default::default() }
}

fn prop(name: &str, domain: &str, range: &str) -> PropertyEntry {
    PropertyEntry { name: name.into(), domain: Some(domain.into()), range: range.into(), ..Default::default() }
}

/// The vocabulary: organizations, people with student and employee roles,
/// courses, a transitive part-of, a symmetric-transitive peer relation and
/// three defined classes.
pub fn university_tbox() -> OntologyDoc {
    let mut classes = vec![
        class("Organization", &[]),
        class("University", &["Organization"]),
        class("Department", &["Organization"]),
        class("ResearchGroup", &["Organization"]),
        class("Person", &[]),
        class("Course", &[]),
        class("GraduateCourse", &["Course"]),
        class("Student", &[]),
        class("UndergraduateStudent", &["Student"]),
        class("GraduateStudent", &["Student"]),
        class("LeisureStudent", &["Student"]),
        class("TeachingAssistant", &["Student"]),
        class("Employee", &[]),
        class("Faculty", &["Employee"]),
        class("Professor", &["Faculty"]),
        class("FullProfessor", &["Professor"]),
        class("AssistantProfessor", &["Professor"]),
        class("Lecturer", &["Faculty"]),
        class("Chair", &["Professor"]),
    ];
    let disjoint = [
        ("Department", "University"),
        ("ResearchGroup", "University"),
        ("ResearchGroup", "Department"),
        ("Person", "Organization"),
        ("Course", "Organization"),
        ("Course", "Person"),
        ("GraduateStudent", "UndergraduateStudent"),
        ("AssistantProfessor", "FullProfessor"),
    ];
    for c in &mut classes {
        if c.name == "Student" || c.name == "Employee" {
            c.role_for = Some("Person".into());
        }
        c.disjoint_with = disjoint.iter().filter(|(a, _)| *a == c.name).map(|(_, b)| b.to_string()).collect();
    }
    let mut properties = vec![
        prop("name", "Person", "string"),
        prop("age", "Person", "integer"),
        prop("label", "Organization", "string"),
        prop("title", "Course", "string"),
        prop("sub_organization_of", "Organization", "Organization"),
        prop("member_of", "Person", "Organization"),
        prop("student_of", "Student", "Organization"),
        prop("works_for", "Employee", "Organization"),
        prop("takes_course", "Student", "Course"),
        prop("teacher_of", "Faculty", "Course"),
        prop("taught_by", "Course", "Faculty"),
        prop("advisor", "Student", "Professor"),
        prop("teaching_assistant_of", "Student", "Course"),
        prop("head_of", "Professor", "Department"),
        prop("collaborates_with", "Faculty", "Faculty"),
    ];
    for p in &mut properties {
        match p.name.as_str() {
            "name" | "age" | "label" | "title" | "advisor" | "head_of" => p.functional = true,
            "sub_organization_of" => p.transitive = true,
            "student_of" | "works_for" => p.sub_property_of = vec!["member_of".into()],
            "taught_by" => p.inverse_of = Some("teacher_of".into()),
            "collaborates_with" => {
                p.symmetric = true;
                p.transitive = true;
            }
            _ => {}
        }
    }
    let both = |a: RestrictionExpr, b: RestrictionExpr| RestrictionExpr::IntersectionOf(vec![a, b]);
    let axioms = vec![
        AxiomEntry {
            class: "LeisureStudent".into(),
            expr: both(RestrictionExpr::class("Student"), RestrictionExpr::max(1, "takes_course", RestrictionExpr::class("Course"))),
        },
        AxiomEntry {
            class: "TeachingAssistant".into(),
            expr: both(
                RestrictionExpr::class("Student"),
                RestrictionExpr::some("teaching_assistant_of", RestrictionExpr::class("Course")),
            ),
        },
        AxiomEntry {
            class: "Chair".into(),
            expr: both(RestrictionExpr::class("Professor"), RestrictionExpr::some("head_of", RestrictionExpr::class("Department"))),
        },
    ];
    OntologyDoc { classes, properties, axioms, individuals: Vec::new() }
}

struct Builder {
    individuals: Vec<IndividualEntry>,
}

impl Builder {
    fn add(&mut self, iri: String, ty: &str) -> usize {
        self.individuals.push(IndividualEntry { iri, types: vec![ty.into()], assertions: BTreeMap::new() });
        self.individuals.len() - 1
    }

    fn set(&mut self, i: usize, p: &str, v: DocValue) {
        let a = &mut self.individuals[i].assertions;
        match a.remove(p) {
            None => {
                a.insert(p.into(), OneOrMany::One(v));
            }
            Some(OneOrMany::One(old)) => {
                a.insert(p.into(), OneOrMany::Many(vec![old, v]));
            }
            Some(OneOrMany::Many(mut list)) => {
                list.push(v);
                a.insert(p.into(), OneOrMany::Many(list));
            }
        }
    }

    fn link(&mut self, i: usize, p: &str, target: usize) {
        let iri = self.individuals[target].iri.clone();
        self.set(i, p, DocValue::Str(iri));
    }
}

/// Seeded university document. The same parameters always give the same document.
pub fn generate_university(params: &GenParams) -> OntologyDoc {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut b = Builder { individuals: Vec::new() };
    for u in 0..params.universities {
        let uni = b.add(format!("urn:u{u}"), "University");
        b.set(uni, "label", DocValue::Str(format!("University{u}")));
        let mut faculty_of_uni: Vec<usize> = Vec::new();
        for d in 0..params.departments {
            let base = format!("urn:u{u}:d{d}");
            let dept = b.add(base.clone(), "Department");
            b.set(dept, "label", DocValue::Str(format!("Department{u}_{d}")));
            b.link(dept, "sub_organization_of", uni);
            let groups: Vec<usize> = (0..params.groups)
                .map(|g| {
                    let id = b.add(format!("{base}:g{g}"), "ResearchGroup");
                    b.set(id, "label", DocValue::Str(format!("Group{u}_{d}_{g}")));
                    b.link(id, "sub_organization_of", dept);
                    id
                })
                .collect();
            let courses: Vec<usize> = (0..params.courses)
                .map(|c| {
                    let ty = if c % 3 == 0 { "GraduateCourse" } else { "Course" };
                    let id = b.add(format!("{base}:c{c}"), ty);
                    b.set(id, "title", DocValue::Str(format!("Course{u}_{d}_{c}")));
                    id
                })
                .collect();
            let graduate_courses: Vec<usize> = courses.iter().copied().step_by(3).collect();
            let mut advisors = Vec::new();
            let mut profs = Vec::new();
            for p in 0..params.professors {
                let ty = match p % 3 {
                    0 => "FullProfessor",
                    1 => "AssistantProfessor",
                    _ => "Lecturer",
                };
                let id = b.add(format!("{base}:p{p}"), ty);
                b.set(id, "name", DocValue::Str(format!("Prof{u}_{d}_{p}")));
                b.set(id, "age", DocValue::Int(rng.gen_range(30..=70)));
                b.link(id, "works_for", dept);
                if p == 0 {
                    b.link(id, "head_of", dept);
                }
                if ty != "Lecturer" {
                    advisors.push(id);
                }
                if !groups.is_empty() && rng.gen_bool(0.3) {
                    let g = *groups.choose(&mut rng).expect("groups");
                    b.link(id, "works_for", g);
                }
                profs.push(id);
            }
            for (k, c) in courses.iter().enumerate() {
                if !profs.is_empty() {
                    b.link(profs[k % profs.len()], "teacher_of", *c);
                    if rng.gen_bool(0.2) {
                        let extra = *profs.choose(&mut rng).expect("profs");
                        if extra != profs[k % profs.len()] {
                            b.link(extra, "teacher_of", *c);
                        }
                    }
                }
            }
            faculty_of_uni.extend(&profs);
            for s in 0..params.students {
                let graduate = rng.gen_bool(params.graduate_ratio);
                let ty = if graduate { "GraduateStudent" } else { "UndergraduateStudent" };
                let id = b.add(format!("{base}:s{s}"), ty);
                b.set(id, "name", DocValue::Str(format!("Student{u}_{d}_{s}")));
                let age = if graduate { rng.gen_range(22..=34) } else { rng.gen_range(17..=24) };
                b.set(id, "age", DocValue::Int(age));
                b.link(id, "student_of", dept);
                if !courses.is_empty() {
                    let n = rng.gen_range(1..=params.max_courses.max(1)).min(courses.len());
                    let pool = if graduate && !graduate_courses.is_empty() && rng.gen_bool(0.7) { &graduate_courses } else { &courses };
                    let n = n.min(pool.len());
                    for c in pool.choose_multiple(&mut rng, n) {
                        b.link(id, "takes_course", *c);
                    }
                }
                if !advisors.is_empty() && (graduate || rng.gen_bool(params.advisor_density)) {
                    let a = *advisors.choose(&mut rng).expect("advisors");
                    b.link(id, "advisor", a);
                }
                if graduate && !courses.is_empty() && rng.gen_bool(params.assistant_density) {
                    let c = *courses.choose(&mut rng).expect("courses");
                    b.link(id, "teaching_assistant_of", c);
                }
                if graduate && !groups.is_empty() && rng.gen_bool(0.5) {
                    let g = *groups.choose(&mut rng).expect("groups");
                    b.link(id, "member_of", g);
                }
            }
        }
        let n = faculty_of_uni.len();
        if n > 1 {
            for i in 0..n {
                if rng.gen_bool(params.peer_density) {
                    let j = (i + rng.gen_range(1..n)) % n;
                    b.link(faculty_of_uni[i], "collaborates_with", faculty_of_uni[j]);
                }
            }
        }
    }
    let mut doc = university_tbox();
    doc.individuals = b.individuals;
    doc
}

/// Statements a document asserts: one per type and one per value.
pub fn document_statements(doc: &OntologyDoc) -> usize {
    doc.individuals
        .iter()
        .map(|i| {
            i.types.len()
                + i.assertions
                    .values()
                    .map(|v| match v {
                        OneOrMany::One(_) => 1,
                        OneOrMany::Many(l) => l.len(),
                    })
                    .sum::<usize>()
        })
        .sum()
}
