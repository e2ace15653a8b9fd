//! Entity query language: abstract syntax, text grammar, evaluator and a
//! brute-force reference evaluator.
//!
//! ```text
//! an(entity(p:Person).where(p.hasAge == 20))
//! a(set_of(r:Robot, c:Capability).where(contains(r.capabilities, c), r.parts.size[0] <= 1))
//! ```

mod eval;
mod graph;
mod normalize;
pub mod oracle;
mod parse;
mod print;

use thiserror::Error;

use crate::kb::EntityId;

pub use eval::{evaluate, Compiled, Evaluator};
pub use graph::{AttrKey, ClassKey, ObjectGraph, StaticType};
pub use normalize::{from_ucq, normalize_to_ucq};
pub use parse::{parse_condition, parse_condition_prefix, parse_operand_prefix, parse_query};
pub use print::{print_condition, print_condition_scoped, print_operand_scoped, print_query};

#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Decimal(f64),
    Str(String),
    Iri(String),
    Entity(EntityId),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Attr(String),
    /// Position in the value list produced so far; negative counts from the end.
    Index(i64),
    /// Keeps only entities that are instances of the class.
    OfType(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub root: String,
    pub steps: Vec<Step>,
}

impl Path {
    pub fn var(root: &str) -> Self {
        Path { root: root.into(), steps: Vec::new() }
    }

    pub fn attr(mut self, name: &str) -> Self {
        self.steps.push(Step::Attr(name.into()));
        self
    }

    pub fn index(mut self, i: i64) -> Self {
        self.steps.push(Step::Index(i));
        self
    }

    pub fn of_type(mut self, class: &str) -> Self {
        self.steps.push(Step::OfType(class.into()));
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Operand {
    Path(Path),
    Literal(Literal),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub const ALL: [CompareOp; 6] = [CompareOp::Eq, CompareOp::Ne, CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "==",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CompareOp::Eq => ord == Equal,
            CompareOp::Ne => ord != Equal,
            CompareOp::Lt => ord == Less,
            CompareOp::Le => ord != Greater,
            CompareOp::Gt => ord == Greater,
            CompareOp::Ge => ord != Less,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Values(Vec<Literal>),
    /// Values reached from already bound variables.
    Path(Path),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub class: Option<String>,
    pub domain: Option<Domain>,
}

impl VarDecl {
    pub fn typed(name: &str, class: &str) -> Self {
        VarDecl { name: name.into(), class: Some(class.into()), domain: None }
    }

    pub fn values(name: &str, values: Vec<Literal>) -> Self {
        VarDecl { name: name.into(), class: None, domain: Some(Domain::Values(values)) }
    }

    pub fn from_path(name: &str, path: Path) -> Self {
        VarDecl { name: name.into(), class: None, domain: Some(Domain::Path(path)) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggFn {
    Count,
    Sum,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Condition {
    Compare(Operand, CompareOp, Operand),
    Contains(Path, Operand),
    IsA(Path, String),
    Exists(VarDecl, Box<Condition>),
    ForAll(VarDecl, Box<Condition>),
    Not(Box<Condition>),
    Or(Vec<Condition>),
    And(Vec<Condition>),
    Aggregate { agg: AggFn, path: Path, op: CompareOp, value: Literal },
}

impl Condition {
    pub fn truth() -> Self {
        Condition::And(Vec::new())
    }

    pub fn falsity() -> Self {
        Condition::Or(Vec::new())
    }

    pub fn not(c: Condition) -> Self {
        Condition::Not(Box::new(c))
    }

    pub fn compare(l: Operand, op: CompareOp, r: Operand) -> Self {
        Condition::Compare(l, op, r)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Processor {
    A,
    An,
    The,
    Count,
    Sum(Path),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Descriptor {
    Entity(VarDecl),
    SetOf(Vec<VarDecl>),
}

impl Descriptor {
    pub fn vars(&self) -> &[VarDecl] {
        match self {
            Descriptor::Entity(v) => std::slice::from_ref(v),
            Descriptor::SetOf(vs) => vs,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub processor: Processor,
    pub descriptor: Descriptor,
    pub conditions: Vec<Condition>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<crate::kb::Value>>,
}

impl ResultSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EqlError {
    #[error("syntax error at byte {position}: expected {expected}, found {found}")]
    Syntax { position: usize, expected: String, found: String },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{0}` is declared twice")]
    DuplicateVariable(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("`the` expects exactly one result, found {0}")]
    UniquenessViolation(usize),
    #[error("cross product of {0} bindings exceeds the oracle limit")]
    OracleTooLarge(u128),
}

pub type Result<T> = std::result::Result<T, EqlError>;
