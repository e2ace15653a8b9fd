use std::collections::BTreeSet;

use crate::kb::KbState;

use super::{OrmError, Result, Schema, SqlValue, Store, TableRole, HOLDER, KEY, KIND};

/// Flat CSV view of one class: one line per row of its table, with the
/// columns of every joined ancestor table. Role classes also carry the holder.
pub fn export_tabular(store: &dyn Store, schema: &Schema, kb: &KbState, class: &str) -> Result<String> {
    let c = kb.class_id(class).ok_or_else(|| OrmError::UnknownClass(class.into()))?;
    let is_role = kb.class(c).is_role();
    let chain: BTreeSet<_> = kb.ancestors(c).iter().copied().filter(|a| kb.class(*a).is_role() == is_role).collect();
    // parents first, following the schema's table order
    let tables: Vec<&str> =
        schema.tables.iter().map(|t| t.name.as_str()).filter(|n| chain.iter().any(|a| schema.class_table(*a).table == *n)).collect();
    let mut header = vec![KEY.to_string()];
    if is_role {
        header.push(HOLDER.to_string());
    }
    let mut columns: Vec<(&str, &str)> = Vec::new();
    for t in &tables {
        let def = schema.table(t).expect("class table");
        for col in &def.columns {
            if [KEY, KIND, HOLDER].contains(&col.name.as_str()) {
                continue;
            }
            columns.push((t, &col.name));
        }
    }
    for (t, col) in &columns {
        let clash = columns.iter().filter(|(_, c)| c == col).count() > 1;
        header.push(if clash { format!("{t}.{col}") } else { col.to_string() });
    }
    let own = &schema.class_table(c).table;
    let holder_table = schema
        .classes
        .values()
        .find(|ct| chain.contains(&ct.class) && matches!(ct.role, TableRole::RoleRoot { .. }))
        .map(|ct| ct.table.clone());
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(&header).map_err(|e| OrmError::Store(e.to_string()))?;
    let mut rows = store.select(own, &[])?;
    rows.sort_by_key(|r| r.get(KEY).and_then(SqlValue::as_int));
    for row in rows {
        let key = row[KEY].as_int().unwrap_or_default();
        let mut record = vec![key.to_string()];
        if let Some(h) = &holder_table {
            let holder = store.select_by_key(h, key)?.and_then(|r| r.get(HOLDER).cloned()).unwrap_or(SqlValue::Null);
            record.push(cell(&holder));
        }
        let mut cache: Vec<(&str, Option<super::Row>)> = Vec::new();
        for (t, col) in &columns {
            if !cache.iter().any(|(n, _)| n == t) {
                cache.push((t, store.select_by_key(t, key)?));
            }
            let r = &cache.iter().find(|(n, _)| n == t).expect("cached").1;
            record.push(r.as_ref().and_then(|r| r.get(*col)).map(cell).unwrap_or_default());
        }
        out.write_record(&record).map_err(|e| OrmError::Store(e.to_string()))?;
    }
    let bytes = out.into_inner().map_err(|e| OrmError::Store(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn cell(v: &SqlValue) -> String {
    match v {
        SqlValue::Null => String::new(),
        other => other.to_string(),
    }
}
