//! Relational persistence: a joined-table schema derived from class
//! definitions, identity-preserving save/load of object graphs, and flat
//! tabular export.

mod export;
mod session;
mod store;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::kb::{Cardinality, ClassId, KbError, KbState, PropertyId, Range, ScalarKind};

pub use export::export_tabular;
pub use session::{load_graph, save_graph, LoadedGraph, SaveReport, Session};
pub use store::{MemoryStore, Row, SqlValue, SqliteStore, Store};

#[derive(Debug, Error)]
pub enum OrmError {
    #[error("cannot map `{0}` to a table or column name")]
    UnmappableKind(String),
    #[error("name collision: `{0}`")]
    NameCollision(String),
    #[error("store error: {0}")]
    Store(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unknown discriminator `{0}`")]
    UnknownDiscriminator(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error(transparent)]
    Kb(#[from] KbError),
}

impl From<rusqlite::Error> for OrmError {
    fn from(e: rusqlite::Error) -> Self {
        OrmError::Store(e.to_string())
    }
}

pub type Result<T, E = OrmError> = std::result::Result<T, E>;

pub const ENTITY_TABLE: &str = "entity";
pub const KEY: &str = "id";
pub const KIND: &str = "kind";
pub const HOLDER: &str = "holder_id";
pub const IRI: &str = "iri";
pub const OWNER: &str = "owner_id";
pub const POSITION: &str = "position";
pub const TARGET: &str = "target_id";
pub const VALUE: &str = "value";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Integer,
    Real,
    Text,
    Boolean,
    /// Integer key referencing another table.
    Key,
}

impl ColumnKind {
    fn sql(self) -> &'static str {
        match self {
            ColumnKind::Integer | ColumnKind::Key | ColumnKind::Boolean => "INTEGER",
            ColumnKind::Real => "REAL",
            ColumnKind::Text => "TEXT",
        }
    }

    fn of_scalar(k: ScalarKind) -> Self {
        match k {
            ScalarKind::Boolean => ColumnKind::Boolean,
            ScalarKind::Integer => ColumnKind::Integer,
            ScalarKind::Decimal => ColumnKind::Real,
            ScalarKind::String => ColumnKind::Text,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnDef {
    pub name: String,
    pub kind: ColumnKind,
    pub nullable: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForeignKey {
    pub column: String,
    pub table: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    /// `None` for association tables.
    pub primary_key: Option<String>,
    pub foreign_keys: Vec<ForeignKey>,
    pub unique: Vec<String>,
    pub discriminator: Option<String>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableRole {
    /// Identity class without superclasses; carries the discriminator.
    Root,
    /// Identity subclass joined to its superclass tables.
    Sub,
    /// Role class without role superclasses; rows are role bindings with a holder.
    RoleRoot { identity: ClassId },
    RoleSub,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassTable {
    pub class: ClassId,
    pub table: String,
    pub role: TableRole,
    /// Joined parent tables (identity superclasses, or role superclasses for roles).
    pub parents: Vec<ClassId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Placement {
    Column { table: String, column: String, kind: ColumnKind },
    Association { table: String, ordered: bool, kind: ColumnKind },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub tables: Vec<TableDef>,
    pub classes: BTreeMap<ClassId, ClassTable>,
    pub placements: BTreeMap<PropertyId, Placement>,
}

pub fn table_name(class: &str) -> String {
    let mut out = String::new();
    let mut prev_lower = false;
    for c in class.chars() {
        if c.is_ascii_uppercase() {
            if prev_lower {
                out.push('_');
            }
            out.push(c.to_ascii_lowercase());
            prev_lower = false;
        } else if c.is_ascii_alphanumeric() {
            out.push(c);
            prev_lower = true;
        } else {
            if !out.ends_with('_') {
                out.push('_');
            }
            prev_lower = false;
        }
    }
    out
}

fn check_identifier(raw: &str, name: &str) -> Result<()> {
    let valid = !name.is_empty() && name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
    if valid {
        Ok(())
    } else {
        Err(OrmError::UnmappableKind(raw.into()))
    }
}

const RESERVED: [&str; 4] = [KEY, KIND, HOLDER, IRI];

impl Schema {
    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn class_table(&self, class: ClassId) -> &ClassTable {
        &self.classes[&class]
    }

    /// Identity-class tables containing a row for an individual of the given direct types.
    pub fn identity_tables(&self, kb: &KbState, types: impl IntoIterator<Item = ClassId>) -> BTreeSet<ClassId> {
        types
            .into_iter()
            .flat_map(|t| kb.ancestors(t).iter().copied().collect::<Vec<_>>())
            .filter(|c| !kb.class(*c).is_role())
            .collect()
    }

    /// Role tables holding a row for a binding of `role`.
    pub fn role_tables(&self, kb: &KbState, role: ClassId) -> BTreeSet<ClassId> {
        kb.ancestors(role).iter().copied().filter(|c| kb.class(*c).is_role()).collect()
    }

    /// Root table (of the identity or role hierarchy) reached from `class`.
    pub fn roots_of(&self, kb: &KbState, class: ClassId) -> Vec<ClassId> {
        let role = kb.class(class).is_role();
        kb.ancestors(class)
            .iter()
            .copied()
            .filter(|c| {
                matches!(
                    (role, self.classes[c].role),
                    (false, TableRole::Root) | (true, TableRole::RoleRoot { .. })
                )
            })
            .collect()
    }

    /// Deterministic DDL text.
    pub fn ddl(&self) -> String {
        let mut out = String::new();
        for t in &self.tables {
            let _ = writeln!(out, "CREATE TABLE \"{}\" (", t.name);
            let mut parts: Vec<String> = t
                .columns
                .iter()
                .map(|c| format!("  \"{}\" {}{}", c.name, c.kind.sql(), if c.nullable { "" } else { " NOT NULL" }))
                .collect();
            if let Some(pk) = &t.primary_key {
                parts.push(format!("  PRIMARY KEY (\"{pk}\")"));
            }
            for u in &t.unique {
                parts.push(format!("  UNIQUE (\"{u}\")"));
            }
            for fk in &t.foreign_keys {
                parts.push(format!("  FOREIGN KEY (\"{}\") REFERENCES \"{}\" (\"{KEY}\")", fk.column, fk.table));
            }
            out.push_str(&parts.join(",\n"));
            out.push_str("\n);\n");
            // lookups go by owner and by holder, neither of which is a primary key
            for col in [OWNER, HOLDER] {
                if t.column(col).is_some() {
                    let _ = writeln!(out, "CREATE INDEX \"{}_{col}\" ON \"{}\" (\"{col}\");", t.name, t.name);
                }
            }
        }
        out
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.ddl())
    }
}

fn column(name: &str, kind: ColumnKind, nullable: bool) -> ColumnDef {
    ColumnDef { name: name.into(), kind, nullable }
}

/// Classes ordered so that every superclass precedes its subclasses.
fn taxonomy_order(kb: &KbState) -> Vec<ClassId> {
    fn visit(kb: &KbState, c: ClassId, seen: &mut HashSet<ClassId>, out: &mut Vec<ClassId>) {
        if !seen.insert(c) {
            return;
        }
        for s in &kb.class(c).superclasses {
            visit(kb, *s, seen, out);
        }
        out.push(c);
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for c in kb.classes() {
        visit(kb, c.id, &mut seen, &mut out);
    }
    out
}

/// One table per class (joined inheritance), role tables keyed by binding
/// with a holder reference, and one association table per to-many property.
pub fn derive_schema(kb: &KbState) -> Result<Schema> {
    let mut tables = vec![TableDef {
        name: ENTITY_TABLE.into(),
        columns: vec![column(KEY, ColumnKind::Key, false), column(IRI, ColumnKind::Text, true)],
        primary_key: Some(KEY.into()),
        foreign_keys: Vec::new(),
        unique: vec![IRI.into()],
        discriminator: None,
    }];
    let mut names: BTreeSet<String> = BTreeSet::from([ENTITY_TABLE.to_string()]);
    let mut classes = BTreeMap::new();
    let mut index: BTreeMap<ClassId, usize> = BTreeMap::new();
    for c in taxonomy_order(kb) {
        let def = kb.class(c);
        let name = table_name(&def.name);
        check_identifier(&def.name, &name)?;
        if !names.insert(name.clone()) {
            return Err(OrmError::NameCollision(name));
        }
        let is_role = def.is_role();
        let parents: Vec<ClassId> = def.superclasses.iter().copied().filter(|s| kb.class(*s).is_role() == is_role).collect();
        let role = match (is_role, parents.is_empty()) {
            (false, true) => TableRole::Root,
            (false, false) => TableRole::Sub,
            (true, true) => TableRole::RoleRoot { identity: def.role_for.expect("role class") },
            (true, false) => TableRole::RoleSub,
        };
        let mut t = TableDef {
            name: name.clone(),
            columns: vec![column(KEY, ColumnKind::Key, false)],
            primary_key: Some(KEY.into()),
            foreign_keys: Vec::new(),
            unique: Vec::new(),
            discriminator: None,
        };
        match role {
            TableRole::Root => {
                t.columns.push(column(KIND, ColumnKind::Text, false));
                t.discriminator = Some(KIND.into());
                t.foreign_keys.push(ForeignKey { column: KEY.into(), table: ENTITY_TABLE.into() });
            }
            TableRole::RoleRoot { identity } => {
                t.columns.push(column(HOLDER, ColumnKind::Key, false));
                t.columns.push(column(KIND, ColumnKind::Text, false));
                t.discriminator = Some(KIND.into());
                t.foreign_keys.push(ForeignKey { column: HOLDER.into(), table: table_name(kb.class_name(identity)) });
            }
            TableRole::Sub | TableRole::RoleSub => {
                for p in &parents {
                    t.foreign_keys.push(ForeignKey { column: KEY.into(), table: table_name(kb.class_name(*p)) });
                }
            }
        }
        index.insert(c, tables.len());
        tables.push(t);
        classes.insert(c, ClassTable { class: c, table: name, role, parents });
    }

    let mut placements = BTreeMap::new();
    let mut assoc = Vec::new();
    for p in kb.properties() {
        let owner = &classes[&p.domain];
        let owner_table = owner.table.clone();
        let kind = match p.range {
            Range::Scalar(k) => ColumnKind::of_scalar(k),
            Range::Class(_) => ColumnKind::Key,
        };
        if p.cardinality() == Cardinality::One {
            let base = match p.range {
                Range::Class(_) => format!("{}_id", table_name(&p.name)),
                Range::Scalar(_) => table_name(&p.name),
            };
            check_identifier(&p.name, &base)?;
            let col = if RESERVED.contains(&base.as_str()) { format!("{base}_attr") } else { base };
            let t = &mut tables[index[&p.domain]];
            if t.column(&col).is_some() {
                return Err(OrmError::NameCollision(format!("{owner_table}.{col}")));
            }
            t.columns.push(column(&col, kind, true));
            if kind == ColumnKind::Key {
                t.foreign_keys.push(ForeignKey { column: col.clone(), table: ENTITY_TABLE.into() });
            }
            placements.insert(p.id, Placement::Column { table: owner_table, column: col, kind });
        } else {
            let name = format!("{owner_table}_{}", table_name(&p.name));
            check_identifier(&p.name, &name)?;
            if !names.insert(name.clone()) {
                return Err(OrmError::NameCollision(name));
            }
            let mut columns = vec![column(OWNER, ColumnKind::Key, false)];
            if p.ordered {
                columns.push(column(POSITION, ColumnKind::Integer, false));
            }
            let value_col = if kind == ColumnKind::Key { TARGET } else { VALUE };
            columns.push(column(value_col, kind, false));
            let mut foreign_keys = vec![ForeignKey { column: OWNER.into(), table: owner_table.clone() }];
            if kind == ColumnKind::Key {
                foreign_keys.push(ForeignKey { column: TARGET.into(), table: ENTITY_TABLE.into() });
            }
            assoc.push(TableDef { name: name.clone(), columns, primary_key: None, foreign_keys, unique: Vec::new(), discriminator: None });
            placements.insert(p.id, Placement::Association { table: name, ordered: p.ordered, kind });
        }
    }
    tables.extend(assoc);
    Ok(Schema { tables, classes, placements })
}
