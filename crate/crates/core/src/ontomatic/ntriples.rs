use std::collections::HashMap;

use crate::kb::{ClassId, EntityId, KnowledgeBase, PropertyId, Range, ScalarKind, Value};

use super::{OntoError, Result};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

#[derive(Debug, PartialEq)]
enum Term {
    Iri(String),
    Literal { text: String, datatype: Option<String> },
}

fn local_name(iri: &str) -> &str {
    iri.rsplit(['#', '/']).next().unwrap_or(iri)
}

fn parse_line(line: &str, n: usize) -> Result<Option<[Term; 3]>> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let err = |reason: &str| OntoError::Syntax { line: n, reason: reason.into() };
    let mut rest = line;
    let mut terms = Vec::with_capacity(3);
    for _ in 0..3 {
        rest = rest.trim_start();
        if let Some(r) = rest.strip_prefix('<') {
            let end = r.find('>').ok_or_else(|| err("unterminated IRI"))?;
            terms.push(Term::Iri(r[..end].to_string()));
            rest = &r[end + 1..];
        } else if let Some(r) = rest.strip_prefix('"') {
            let mut text = String::new();
            let mut chars = r.char_indices();
            let mut end = None;
            while let Some((i, c)) = chars.next() {
                match c {
                    '\\' => match chars.next() {
                        Some((_, 'n')) => text.push('\n'),
                        Some((_, 't')) => text.push('\t'),
                        Some((_, c)) => text.push(c),
                        None => return Err(err("dangling escape")),
                    },
                    '"' => {
                        end = Some(i);
                        break;
                    }
                    c => text.push(c),
                }
            }
            let end = end.ok_or_else(|| err("unterminated literal"))?;
            rest = &r[end + 1..];
            let datatype = if let Some(r) = rest.strip_prefix("^^<") {
                let close = r.find('>').ok_or_else(|| err("unterminated datatype"))?;
                let dt = r[..close].to_string();
                rest = &r[close + 1..];
                Some(dt)
            } else {
                None
            };
            terms.push(Term::Literal { text, datatype });
        } else {
            return Err(err("expected `<iri>` or a literal"));
        }
    }
    if rest.trim() != "." {
        return Err(err("expected a terminating `.`"));
    }
    let [s, p, o]: [Term; 3] = terms.try_into().map_err(|_| err("expected three terms"))?;
    Ok(Some([s, p, o]))
}

/// Loads `<s> <p> <o> .` lines: `rdf:type` triples become declared types, the
/// rest become assertions. Classes and properties match by IRI, then by local
/// name; subjects are created on first mention. Returns the triple count.
pub fn import_ntriples(text: &str, kb: &mut KnowledgeBase) -> Result<usize> {
    let mut classes: HashMap<String, ClassId> = HashMap::new();
    for c in kb.classes() {
        if let Some(iri) = &c.iri {
            classes.insert(iri.clone(), c.id);
        }
    }
    let mut props: HashMap<String, PropertyId> = HashMap::new();
    for p in kb.properties() {
        if let Some(iri) = &p.iri {
            props.insert(iri.clone(), p.id);
        }
    }
    let class_of = |kb: &KnowledgeBase, iri: &str| classes.get(iri).copied().or_else(|| kb.class_id(local_name(iri)));
    let prop_of = |kb: &KnowledgeBase, iri: &str| props.get(iri).copied().or_else(|| kb.property_id(local_name(iri)));
    let entity = |kb: &mut KnowledgeBase, iri: &str| -> Result<EntityId> {
        match kb.individual_by_iri(iri) {
            Some(id) => Ok(id),
            None => Ok(kb.add_individual(Some(iri), &[])?),
        }
    };
    let mut count = 0;
    for (i, line) in text.lines().enumerate() {
        let Some([s, p, o]) = parse_line(line, i + 1)? else { continue };
        let (Term::Iri(s), Term::Iri(p)) = (s, p) else {
            return Err(OntoError::Syntax { line: i + 1, reason: "subject and predicate must be IRIs".into() });
        };
        let subject = entity(kb, &s)?;
        if p == RDF_TYPE || p == "rdf:type" {
            let Term::Iri(c) = o else {
                return Err(OntoError::Syntax { line: i + 1, reason: "type object must be an IRI".into() });
            };
            let class = class_of(kb, &c).ok_or(OntoError::UnresolvedReference(c))?;
            kb.add_type(subject, class)?;
        } else {
            let prop = prop_of(kb, &p).ok_or(OntoError::UnresolvedReference(p))?;
            let value = match o {
                Term::Iri(o) => Value::Ref(entity(kb, &o)?),
                Term::Literal { text, datatype } => literal(&text, datatype.as_deref(), kb.property(prop).range),
            };
            kb.assert_property(subject, prop, value)?;
        }
        count += 1;
    }
    Ok(count)
}

fn literal(text: &str, datatype: Option<&str>, range: Range) -> Value {
    let integer = datatype.is_some_and(|d| matches!(local_name(d), "integer" | "int" | "long"));
    if integer || range == Range::Scalar(ScalarKind::Integer) {
        if let Ok(i) = text.parse() {
            return Value::Int(i);
        }
    }
    match range {
        Range::Scalar(ScalarKind::Decimal) => text.parse().map(Value::Decimal).unwrap_or_else(|_| Value::Str(text.into())),
        Range::Scalar(ScalarKind::Boolean) => text.parse().map(Value::Bool).unwrap_or_else(|_| Value::Str(text.into())),
        _ => Value::Str(text.into()),
    }
}
