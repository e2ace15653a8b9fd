use std::collections::BTreeMap;
use std::path::Path;

use rusqlite::types::{ToSqlOutput, Value as SqliteValue, ValueRef};
use rusqlite::{params_from_iter, Connection, ToSql};

use super::{ColumnKind, OrmError, Result, Schema, TableDef, KEY};

#[derive(Clone, Debug, PartialEq)]
pub enum SqlValue {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
}

impl SqlValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            SqlValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            SqlValue::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Normalizes a value read back from a column of the given kind.
    pub fn coerce(self, kind: ColumnKind) -> SqlValue {
        match (self, kind) {
            (SqlValue::Int(i), ColumnKind::Real) => SqlValue::Real(i as f64),
            (v, _) => v,
        }
    }
}

impl ToSql for SqlValue {
    fn to_sql(&self) -> rusqlite::Result<ToSqlOutput<'_>> {
        Ok(match self {
            SqlValue::Null => ToSqlOutput::Owned(SqliteValue::Null),
            SqlValue::Int(i) => ToSqlOutput::Owned(SqliteValue::Integer(*i)),
            SqlValue::Real(f) => ToSqlOutput::Owned(SqliteValue::Real(*f)),
            SqlValue::Text(s) => ToSqlOutput::Borrowed(ValueRef::Text(s.as_bytes())),
        })
    }
}

impl std::fmt::Display for SqlValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SqlValue::Null => Ok(()),
            SqlValue::Int(i) => write!(f, "{i}"),
            SqlValue::Real(x) => write!(f, "{x:?}"),
            SqlValue::Text(s) => f.write_str(s),
        }
    }
}

pub type Row = BTreeMap<String, SqlValue>;

/// Minimal driver interface. Rows are column-name maps; association tables
/// return rows in insertion order.
pub trait Store {
    fn create_schema(&mut self, schema: &Schema) -> Result<()>;
    fn insert(&mut self, table: &str, row: &Row) -> Result<()>;
    fn update(&mut self, table: &str, key: i64, values: &Row) -> Result<()>;
    fn select_by_key(&self, table: &str, key: i64) -> Result<Option<Row>>;
    fn select(&self, table: &str, filter: &[(&str, SqlValue)]) -> Result<Vec<Row>>;
    fn delete(&mut self, table: &str, filter: &[(&str, SqlValue)]) -> Result<usize>;
    fn max_key(&self, table: &str) -> Result<i64>;
    fn begin(&mut self) -> Result<()> {
        Ok(())
    }
    fn commit(&mut self) -> Result<()> {
        Ok(())
    }
    fn rollback(&mut self) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
struct MemTable {
    def: Option<TableDef>,
    rows: Vec<Row>,
}

/// In-process store with the same semantics as the SQL backend, plus an
/// explicit foreign-key audit.
#[derive(Clone, Debug, Default)]
pub struct MemoryStore {
    tables: BTreeMap<String, MemTable>,
    saved: Option<BTreeMap<String, MemTable>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn table(&self, name: &str) -> Result<&MemTable> {
        self.tables.get(name).ok_or_else(|| OrmError::Store(format!("no table `{name}`")))
    }

    fn table_mut(&mut self, name: &str) -> Result<&mut MemTable> {
        self.tables.get_mut(name).ok_or_else(|| OrmError::Store(format!("no table `{name}`")))
    }

    pub fn row_count(&self, table: &str) -> usize {
        self.tables.get(table).map(|t| t.rows.len()).unwrap_or(0)
    }

    /// Dangling foreign keys as `(table, column, value)`.
    pub fn foreign_key_violations(&self) -> Vec<(String, String, i64)> {
        let mut out = Vec::new();
        for (name, t) in &self.tables {
            let Some(def) = &t.def else { continue };
            for fk in &def.foreign_keys {
                let target = &self.tables[&fk.table];
                for row in &t.rows {
                    if let Some(SqlValue::Int(v)) = row.get(&fk.column) {
                        if !target.rows.iter().any(|r| r.get(KEY) == Some(&SqlValue::Int(*v))) {
                            out.push((name.clone(), fk.column.clone(), *v));
                        }
                    }
                }
            }
        }
        out
    }
}

fn matches(row: &Row, filter: &[(&str, SqlValue)]) -> bool {
    filter.iter().all(|(k, v)| row.get(*k).unwrap_or(&SqlValue::Null) == v)
}

impl Store for MemoryStore {
    fn create_schema(&mut self, schema: &Schema) -> Result<()> {
        for t in &schema.tables {
            self.tables.entry(t.name.clone()).or_insert_with(|| MemTable { def: Some(t.clone()), rows: Vec::new() });
        }
        Ok(())
    }

    fn insert(&mut self, table: &str, row: &Row) -> Result<()> {
        let t = self.table_mut(table)?;
        let def = t.def.as_ref().expect("created tables carry a definition");
        for c in &def.columns {
            if !c.nullable && row.get(&c.name).is_none_or(|v| *v == SqlValue::Null) {
                return Err(OrmError::Store(format!("{table}.{} may not be null", c.name)));
            }
        }
        if let Some(k) = row.get(KEY).filter(|_| def.primary_key.is_some()) {
            if t.rows.iter().any(|r| r.get(KEY) == Some(k)) {
                return Err(OrmError::Store(format!("duplicate key {k} in {table}")));
            }
        }
        let mut full = Row::new();
        for c in &def.columns {
            full.insert(c.name.clone(), row.get(&c.name).cloned().unwrap_or(SqlValue::Null));
        }
        t.rows.push(full);
        Ok(())
    }

    fn update(&mut self, table: &str, key: i64, values: &Row) -> Result<()> {
        let t = self.table_mut(table)?;
        let row = t
            .rows
            .iter_mut()
            .find(|r| r.get(KEY) == Some(&SqlValue::Int(key)))
            .ok_or_else(|| OrmError::Store(format!("no row {key} in {table}")))?;
        for (k, v) in values {
            row.insert(k.clone(), v.clone());
        }
        Ok(())
    }

    fn select_by_key(&self, table: &str, key: i64) -> Result<Option<Row>> {
        Ok(self.table(table)?.rows.iter().find(|r| r.get(KEY) == Some(&SqlValue::Int(key))).cloned())
    }

    fn select(&self, table: &str, filter: &[(&str, SqlValue)]) -> Result<Vec<Row>> {
        Ok(self.table(table)?.rows.iter().filter(|r| matches(r, filter)).cloned().collect())
    }

    fn delete(&mut self, table: &str, filter: &[(&str, SqlValue)]) -> Result<usize> {
        let t = self.table_mut(table)?;
        let before = t.rows.len();
        t.rows.retain(|r| !matches(r, filter));
        Ok(before - t.rows.len())
    }

    fn max_key(&self, table: &str) -> Result<i64> {
        Ok(self.table(table)?.rows.iter().filter_map(|r| r.get(KEY).and_then(SqlValue::as_int)).max().unwrap_or(0))
    }

    fn begin(&mut self) -> Result<()> {
        self.saved = Some(self.tables.clone());
        Ok(())
    }

    fn commit(&mut self) -> Result<()> {
        self.saved = None;
        Ok(())
    }

    fn rollback(&mut self) -> Result<()> {
        if let Some(t) = self.saved.take() {
            self.tables = t;
        }
        Ok(())
    }
}

/// SQLite backend with enforced foreign keys.
pub struct SqliteStore {
    conn: Connection,
    kinds: BTreeMap<String, BTreeMap<String, ColumnKind>>,
}

fn quote(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn read_value(v: ValueRef<'_>) -> SqlValue {
    match v {
        ValueRef::Null => SqlValue::Null,
        ValueRef::Integer(i) => SqlValue::Int(i),
        ValueRef::Real(f) => SqlValue::Real(f),
        ValueRef::Text(t) => SqlValue::Text(String::from_utf8_lossy(t).into_owned()),
        ValueRef::Blob(b) => SqlValue::Text(String::from_utf8_lossy(b).into_owned()),
    }
}

impl SqliteStore {
    pub fn open_in_memory() -> Result<Self> {
        Self::with_connection(Connection::open_in_memory()?)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::with_connection(Connection::open(path)?)
    }

    fn with_connection(conn: Connection) -> Result<Self> {
        conn.execute_batch("PRAGMA foreign_keys = ON;")?;
        Ok(SqliteStore { conn, kinds: BTreeMap::new() })
    }

    pub fn connection(&self) -> &Connection {
        &self.conn
    }

    /// Runs a read query and returns its rows.
    pub fn query(&self, sql: &str) -> Result<Vec<Vec<SqlValue>>> {
        let mut stmt = self.conn.prepare(sql)?;
        let n = stmt.column_count();
        let rows = stmt.query_map([], |r| (0..n).map(|i| r.get_ref(i).map(read_value)).collect::<rusqlite::Result<Vec<_>>>())?;
        Ok(rows.collect::<rusqlite::Result<Vec<_>>>()?)
    }

    fn read_rows(&self, table: &str, sql: &str, params: Vec<&SqlValue>) -> Result<Vec<Row>> {
        let mut stmt = self.conn.prepare_cached(sql)?;
        let names: Vec<String> = stmt.column_names().into_iter().map(String::from).collect();
        let kinds = self.kinds.get(table);
        let rows = stmt.query_map(params_from_iter(params), |r| {
            let mut row = Row::new();
            for (i, n) in names.iter().enumerate() {
                let mut v = read_value(r.get_ref(i)?);
                if let Some(k) = kinds.and_then(|m| m.get(n)) {
                    v = v.coerce(*k);
                }
                row.insert(n.clone(), v);
            }
            Ok(row)
        })?;
        Ok(rows.collect::<rusqlite::Result<Vec<_>>>()?)
    }
}

fn where_clause<'a>(filter: &'a [(&str, SqlValue)]) -> (String, Vec<&'a SqlValue>) {
    if filter.is_empty() {
        return (String::new(), Vec::new());
    }
    let parts: Vec<String> = filter
        .iter()
        .map(|(k, v)| if *v == SqlValue::Null { format!("{} IS NULL", quote(k)) } else { format!("{} = ?", quote(k)) })
        .collect();
    let params = filter.iter().map(|(_, v)| v).filter(|v| **v != SqlValue::Null).collect();
    (format!(" WHERE {}", parts.join(" AND ")), params)
}

impl Store for SqliteStore {
    fn create_schema(&mut self, schema: &Schema) -> Result<()> {
        let ddl = schema.ddl().replace("CREATE TABLE", "CREATE TABLE IF NOT EXISTS").replace("CREATE INDEX", "CREATE INDEX IF NOT EXISTS");
        self.conn.execute_batch(&ddl)?;
        for t in &schema.tables {
            self.kinds.insert(t.name.clone(), t.columns.iter().map(|c| (c.name.clone(), c.kind)).collect());
        }
        Ok(())
    }

    fn insert(&mut self, table: &str, row: &Row) -> Result<()> {
        let cols: Vec<String> = row.keys().map(|k| quote(k)).collect();
        let marks = vec!["?"; cols.len()].join(", ");
        let sql = format!("INSERT INTO {} ({}) VALUES ({marks})", quote(table), cols.join(", "));
        self.conn.prepare_cached(&sql)?.execute(params_from_iter(row.values()))?;
        Ok(())
    }

    fn update(&mut self, table: &str, key: i64, values: &Row) -> Result<()> {
        if values.is_empty() {
            return Ok(());
        }
        let sets: Vec<String> = values.keys().map(|k| format!("{} = ?", quote(k))).collect();
        let sql = format!("UPDATE {} SET {} WHERE {} = ?", quote(table), sets.join(", "), quote(KEY));
        let key = SqlValue::Int(key);
        self.conn.prepare_cached(&sql)?.execute(params_from_iter(values.values().chain(std::iter::once(&key))))?;
        Ok(())
    }

    fn select_by_key(&self, table: &str, key: i64) -> Result<Option<Row>> {
        let sql = format!("SELECT * FROM {} WHERE {} = ?", quote(table), quote(KEY));
        let key = SqlValue::Int(key);
        Ok(self.read_rows(table, &sql, vec![&key])?.into_iter().next())
    }

    fn select(&self, table: &str, filter: &[(&str, SqlValue)]) -> Result<Vec<Row>> {
        let (clause, params) = where_clause(filter);
        let sql = format!("SELECT * FROM {}{clause} ORDER BY rowid", quote(table));
        self.read_rows(table, &sql, params)
    }

    fn delete(&mut self, table: &str, filter: &[(&str, SqlValue)]) -> Result<usize> {
        let (clause, params) = where_clause(filter);
        let sql = format!("DELETE FROM {}{clause}", quote(table));
        Ok(self.conn.prepare_cached(&sql)?.execute(params_from_iter(params))?)
    }

    fn max_key(&self, table: &str) -> Result<i64> {
        let sql = format!("SELECT COALESCE(MAX({}), 0) FROM {}", quote(KEY), quote(table));
        Ok(self.conn.query_row(&sql, [], |r| r.get(0))?)
    }

    fn begin(&mut self) -> Result<()> {
        self.conn.execute_batch("BEGIN")?;
        Ok(())
    }

    fn commit(&mut self) -> Result<()> {
        self.conn.execute_batch("COMMIT")?;
        Ok(())
    }

    fn rollback(&mut self) -> Result<()> {
        self.conn.execute_batch("ROLLBACK")?;
        Ok(())
    }
}
