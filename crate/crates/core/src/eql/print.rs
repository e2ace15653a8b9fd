use std::fmt::Write;

use super::{AggFn, Condition, Descriptor, Domain, Literal, Operand, Path, Processor, Query, Step, VarDecl};

const KEYWORDS: [&str; 13] =
    ["true", "false", "in", "contains", "is_a", "exists", "for_all", "not", "or", "and", "count", "sum", "where"];

struct Printer<'a> {
    out: String,
    case_var: Option<&'a str>,
    scope: Vec<String>,
}

impl<'a> Printer<'a> {
    fn new(case_var: Option<&'a str>) -> Self {
        Printer { out: String::new(), case_var, scope: case_var.map(|c| vec![c.to_string()]).unwrap_or_default() }
    }

    fn literal(&mut self, lit: &Literal) {
        match lit {
            Literal::Bool(b) => write!(self.out, "{b}").unwrap(),
            Literal::Int(i) => write!(self.out, "{i}").unwrap(),
            Literal::Decimal(d) => {
                let s = format!("{d:?}");
                self.out.push_str(&s);
                if !s.contains(['.', 'e', 'E']) {
                    self.out.push_str(".0");
                }
            }
            Literal::Str(s) => {
                self.out.push('"');
                for ch in s.chars() {
                    match ch {
                        '"' => self.out.push_str("\\\""),
                        '\\' => self.out.push_str("\\\\"),
                        '\n' => self.out.push_str("\\n"),
                        '\t' => self.out.push_str("\\t"),
                        '\r' => self.out.push_str("\\r"),
                        c => self.out.push(c),
                    }
                }
                self.out.push('"');
            }
            Literal::Iri(s) => write!(self.out, "<{s}>").unwrap(),
            Literal::Entity(id) => write!(self.out, "{id}").unwrap(),
        }
    }

    fn path(&mut self, path: &Path) {
        let mut steps = path.steps.as_slice();
        let elide = match (self.case_var, steps.first()) {
            (Some(case), Some(Step::Attr(first))) if path.root == case => {
                !self.scope.iter().any(|s| s == first) && !KEYWORDS.contains(&first.as_str())
            }
            _ => false,
        };
        if elide {
            if let Step::Attr(first) = &steps[0] {
                self.out.push_str(first);
            }
            steps = &steps[1..];
        } else {
            self.out.push_str(&path.root);
        }
        for step in steps {
            match step {
                Step::Attr(a) => write!(self.out, ".{a}").unwrap(),
                Step::Index(i) => write!(self.out, "[{i}]").unwrap(),
                Step::OfType(c) => write!(self.out, "[{c}]").unwrap(),
            }
        }
    }

    fn operand(&mut self, op: &Operand) {
        match op {
            Operand::Path(p) => self.path(p),
            Operand::Literal(l) => self.literal(l),
        }
    }

    fn var(&mut self, v: &VarDecl) {
        self.out.push_str(&v.name);
        if let Some(c) = &v.class {
            write!(self.out, ":{c}").unwrap();
        }
        match &v.domain {
            Some(Domain::Values(values)) => {
                self.out.push_str(" in [");
                for (i, l) in values.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    self.literal(l);
                }
                self.out.push(']');
            }
            Some(Domain::Path(p)) => {
                self.out.push_str(" in ");
                self.path(p);
            }
            None => {}
        }
        self.scope.push(v.name.clone());
    }

    fn list(&mut self, name: &str, items: &[Condition]) {
        write!(self.out, "{name}(").unwrap();
        for (i, c) in items.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            self.condition(c);
        }
        self.out.push(')');
    }

    fn condition(&mut self, c: &Condition) {
        match c {
            Condition::Compare(l, op, r) => {
                self.operand(l);
                write!(self.out, " {} ", op.symbol()).unwrap();
                self.operand(r);
            }
            Condition::Contains(p, e) => {
                self.out.push_str("contains(");
                self.path(p);
                self.out.push_str(", ");
                self.operand(e);
                self.out.push(')');
            }
            Condition::IsA(p, class) => {
                self.out.push_str("is_a(");
                self.path(p);
                write!(self.out, ", {class})").unwrap();
            }
            Condition::Exists(v, body) | Condition::ForAll(v, body) => {
                let name = if matches!(c, Condition::Exists(..)) { "exists" } else { "for_all" };
                write!(self.out, "{name}(").unwrap();
                let depth = self.scope.len();
                self.var(v);
                self.out.push_str(", ");
                self.condition(body);
                self.scope.truncate(depth);
                self.out.push(')');
            }
            Condition::Not(inner) => {
                self.out.push_str("not(");
                self.condition(inner);
                self.out.push(')');
            }
            Condition::Or(items) if items.is_empty() => self.out.push_str("false"),
            Condition::And(items) if items.is_empty() => self.out.push_str("true"),
            Condition::Or(items) => self.list("or", items),
            Condition::And(items) => self.list("and", items),
            Condition::Aggregate { agg, path, op, value } => {
                let name = match agg {
                    AggFn::Count => "count",
                    AggFn::Sum => "sum",
                };
                write!(self.out, "{name}(").unwrap();
                self.path(path);
                write!(self.out, ") {} ", op.symbol()).unwrap();
                self.literal(value);
            }
        }
    }
}

pub fn print_query(q: &Query) -> String {
    let mut p = Printer::new(None);
    let proc_name = match &q.processor {
        Processor::A => "a",
        Processor::An => "an",
        Processor::The => "the",
        Processor::Count => "count",
        Processor::Sum(_) => "sum",
    };
    write!(p.out, "{proc_name}(").unwrap();
    match &q.descriptor {
        Descriptor::Entity(v) => {
            p.out.push_str("entity(");
            p.var(v);
        }
        Descriptor::SetOf(vs) => {
            p.out.push_str("set_of(");
            for (i, v) in vs.iter().enumerate() {
                if i > 0 {
                    p.out.push_str(", ");
                }
                p.var(v);
            }
        }
    }
    p.out.push(')');
    if !q.conditions.is_empty() {
        p.out.push_str(".where(");
        for (i, c) in q.conditions.iter().enumerate() {
            if i > 0 {
                p.out.push_str(", ");
            }
            p.condition(c);
        }
        p.out.push(')');
    }
    if let Processor::Sum(path) = &q.processor {
        p.out.push_str(", ");
        p.path(path);
    }
    p.out.push(')');
    p.out
}

pub fn print_condition(c: &Condition) -> String {
    let mut p = Printer::new(None);
    p.condition(c);
    p.out
}

/// Prints a condition over a case variable, dropping the `case.` prefix where
/// the result parses back to the same tree.
pub fn print_condition_scoped(c: &Condition, case_var: &str) -> String {
    let mut p = Printer::new(Some(case_var));
    p.condition(c);
    p.out
}

pub fn print_operand_scoped(o: &Operand, case_var: &str) -> String {
    let mut p = Printer::new(Some(case_var));
    p.operand(o);
    p.out
}
