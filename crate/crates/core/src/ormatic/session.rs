use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use crate::kb::{ClassId, EntityId, KbState, KnowledgeBase, PropertyId, Value};

use super::{
    ColumnKind, OrmError, Placement, Result, Row, Schema, SqlValue, Store, TableRole, ENTITY_TABLE, HOLDER, IRI, KEY, KIND, OWNER,
    POSITION, TARGET, VALUE,
};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SaveReport {
    /// Identity map for the saved closure.
    pub keys: BTreeMap<EntityId, i64>,
    pub inserted: usize,
    pub updated: usize,
    pub deleted: usize,
    /// Foreign keys written null first and patched after their target existed.
    pub patched: usize,
}

impl SaveReport {
    pub fn changes(&self) -> usize {
        self.inserted + self.updated + self.deleted
    }
}

/// A writer session: the schema plus the identity map from individuals and
/// role holders to row keys, so repeated saves update in place. A holder has
/// one role key shared by every role table its bindings occupy.
#[derive(Clone, Debug)]
pub struct Session {
    pub schema: Schema,
    entity_keys: HashMap<EntityId, i64>,
    binding_keys: HashMap<EntityId, i64>,
    next_entity: Option<i64>,
    next_binding: Option<i64>,
}

impl Session {
    pub fn new(schema: Schema) -> Self {
        Session { schema, entity_keys: HashMap::new(), binding_keys: HashMap::new(), next_entity: None, next_binding: None }
    }

    /// Continues from a loaded graph so that saving it again updates the same rows.
    pub fn adopt(schema: Schema, loaded: &LoadedGraph) -> Self {
        let mut s = Session::new(schema);
        s.entity_keys = loaded.keys.iter().map(|(k, id)| (*id, *k)).collect();
        s.binding_keys = loaded.binding_keys.iter().map(|(k, h)| (*h, *k)).collect();
        s
    }

    pub fn key_of(&self, id: EntityId) -> Option<i64> {
        self.entity_keys.get(&id).copied()
    }

    pub fn save(&mut self, kb: &KbState, roots: &[EntityId], store: &mut dyn Store) -> Result<SaveReport> {
        save_graph(kb, roots, self, store)
    }
}

fn closure(kb: &KbState, roots: &[EntityId]) -> Result<Vec<EntityId>> {
    let mut seen = HashSet::new();
    let mut order = Vec::new();
    let mut queue: VecDeque<EntityId> = VecDeque::new();
    for r in roots {
        kb.individual(*r)?;
        if seen.insert(*r) {
            queue.push_back(*r);
        }
    }
    while let Some(id) = queue.pop_front() {
        order.push(id);
        let ind = kb.individual(id)?;
        let values = ind.assertions.values().flatten().chain(ind.roles.iter().flat_map(|b| b.role_state.values().flatten()));
        for v in values {
            if let Value::Ref(t) = v {
                if seen.insert(*t) {
                    queue.push_back(*t);
                }
            }
        }
    }
    Ok(order)
}

fn discriminator(kb: &KbState, root: ClassId, declared: &BTreeSet<ClassId>, inferred: &BTreeSet<ClassId>) -> String {
    let mut names: Vec<String> = declared
        .iter()
        .filter(|t| kb.is_subclass_of(**t, root))
        .map(|t| kb.class_name(*t).to_string())
        .chain(inferred.iter().filter(|t| kb.is_subclass_of(**t, root)).map(|t| format!("+{}", kb.class_name(*t))))
        .collect();
    names.sort();
    names.join(",")
}

fn sql_value(v: &Value, keys: &HashMap<EntityId, i64>) -> SqlValue {
    match v {
        Value::Bool(b) => SqlValue::Int(*b as i64),
        Value::Int(i) => SqlValue::Int(*i),
        Value::Decimal(d) => SqlValue::Real(*d),
        Value::Str(s) => SqlValue::Text(s.clone()),
        Value::Ref(id) => SqlValue::Int(keys[id]),
    }
}

/// Rows planned for one object: class-table rows in schema order, then association contents.
struct Plan {
    entity: EntityId,
    rows: Vec<(String, Row)>,
    assoc: Vec<(String, i64, Vec<Row>)>,
}

fn schema_order(schema: &Schema) -> HashMap<&str, usize> {
    schema.tables.iter().enumerate().map(|(i, t)| (t.name.as_str(), i)).collect()
}

fn plan_object(kb: &KbState, schema: &Schema, id: EntityId, session: &Session) -> Result<Plan> {
    let ind = kb.individual(id)?;
    let key = session.entity_keys[&id];
    let mut rows: BTreeMap<String, Row> = BTreeMap::new();
    rows.insert(ENTITY_TABLE.into(), Row::from([(KEY.into(), SqlValue::Int(key)), (IRI.into(), ind.iri.clone().map_or(SqlValue::Null, SqlValue::Text))]));
    let tables = schema.identity_tables(kb, ind.declared_types.iter().chain(&ind.inferred_types).copied());
    for c in ind.declared_types.iter().chain(&ind.inferred_types).chain(ind.roles.iter().map(|b| &b.role_class)) {
        if !schema.classes.contains_key(c) {
            return Err(OrmError::SchemaMismatch(format!("class `{}` is not mapped", kb.class_name(*c))));
        }
    }
    for c in &tables {
        let ct = schema.class_table(*c);
        let mut row = Row::from([(KEY.into(), SqlValue::Int(key))]);
        if ct.role == TableRole::Root {
            row.insert(KIND.into(), SqlValue::Text(discriminator(kb, *c, &ind.declared_types, &ind.inferred_types)));
        }
        rows.insert(ct.table.clone(), row);
    }
    let mut assoc: BTreeMap<(String, i64), Vec<Row>> = BTreeMap::new();
    // every association owned by one of this object's tables gets a (possibly empty) entry
    let mut owners: Vec<(String, i64)> = rows.keys().filter(|t| *t != ENTITY_TABLE).map(|t| (t.clone(), key)).collect();
    let place = |rows: &mut BTreeMap<String, Row>,
                     assoc: &mut BTreeMap<(String, i64), Vec<Row>>,
                     owner_key: i64,
                     allowed: &dyn Fn(&str) -> bool,
                     prop: PropertyId,
                     values: &[Value]|
     -> Result<()> {
        let placement = schema
            .placements
            .get(&prop)
            .ok_or_else(|| OrmError::SchemaMismatch(format!("property `{}` is not mapped", kb.property(prop).name)))?;
        let (table, owner_table) = match placement {
            Placement::Column { table, .. } => (table.clone(), table.clone()),
            Placement::Association { table, .. } => {
                let owner = schema.table(table).expect("association table").foreign_keys[0].table.clone();
                (table.clone(), owner)
            }
        };
        if !allowed(&owner_table) {
            return Err(OrmError::SchemaMismatch(format!(
                "{id} holds `{}` but has no row in `{owner_table}`",
                kb.property(prop).name
            )));
        }
        match placement {
            Placement::Column { column, .. } => {
                if let Some(v) = values.first() {
                    rows.get_mut(&table).expect("owner row").insert(column.clone(), sql_value(v, &session.entity_keys));
                }
            }
            Placement::Association { ordered, kind, .. } => {
                let list = assoc.entry((table, owner_key)).or_default();
                for v in values {
                    let mut r = Row::from([(OWNER.into(), SqlValue::Int(owner_key))]);
                    if *ordered {
                        r.insert(POSITION.into(), SqlValue::Int(list.len() as i64));
                    }
                    let col = if *kind == ColumnKind::Key { TARGET } else { VALUE };
                    r.insert(col.into(), sql_value(v, &session.entity_keys));
                    list.push(r);
                }
            }
        }
        Ok(())
    };
    let identity_tables: BTreeSet<String> = tables.iter().map(|c| schema.class_table(*c).table.clone()).collect();
    for (p, vals) in &ind.assertions {
        place(&mut rows, &mut assoc, key, &|t| identity_tables.contains(t), *p, vals)?;
    }
    for b in &ind.roles {
        let bkey = session.binding_keys[&id];
        let role_tables: BTreeSet<String> =
            schema.role_tables(kb, b.role_class).iter().map(|c| schema.class_table(*c).table.clone()).collect();
        for c in schema.role_tables(kb, b.role_class) {
            let ct = schema.class_table(c);
            if rows.contains_key(&ct.table) {
                continue;
            }
            let mut row = Row::from([(KEY.into(), SqlValue::Int(bkey))]);
            if let TableRole::RoleRoot { .. } = ct.role {
                // kind lists every binding under this root, in binding order
                let kinds: Vec<&str> =
                    ind.roles.iter().filter(|r| kb.is_subclass_of(r.role_class, c)).map(|r| kb.class_name(r.role_class)).collect();
                row.insert(HOLDER.into(), SqlValue::Int(key));
                row.insert(KIND.into(), SqlValue::Text(kinds.join(",")));
            }
            rows.insert(ct.table.clone(), row);
            owners.push((ct.table.clone(), bkey));
        }
        for (p, vals) in &b.role_state {
            place(&mut rows, &mut assoc, bkey, &|t| role_tables.contains(t), *p, vals)?;
        }
    }
    for (table, owner_key) in owners {
        for (assoc_name, def) in schema.tables.iter().filter(|t| t.primary_key.is_none()).map(|t| (&t.name, t)) {
            if def.foreign_keys[0].table == table {
                assoc.entry((assoc_name.clone(), owner_key)).or_default();
            }
        }
    }
    let order = schema_order(schema);
    let mut rows: Vec<(String, Row)> = rows.into_iter().collect();
    rows.sort_by_key(|(t, _)| order[t.as_str()]);
    // complete rows with nulls so they compare equal to what the store returns
    for (t, row) in &mut rows {
        for c in &schema.table(t).expect("planned table").columns {
            row.entry(c.name.clone()).or_insert(SqlValue::Null);
        }
    }
    let assoc = assoc
        .into_iter()
        .map(|((t, k), mut list)| {
            let cols = &schema.table(&t).expect("association table").columns;
            for r in &mut list {
                for c in cols {
                    r.entry(c.name.clone()).or_insert(SqlValue::Null);
                }
            }
            (t, k, list)
        })
        .collect();
    Ok(Plan { entity: id, rows, assoc })
}

/// Persists the closure of `roots`. Objects already in the session's identity
/// map are updated in place; unchanged rows are left untouched. References to
/// objects not yet written are stored null and patched afterwards.
pub fn save_graph(kb: &KbState, roots: &[EntityId], session: &mut Session, store: &mut dyn Store) -> Result<SaveReport> {
    let order = closure(kb, roots)?;
    store.begin()?;
    match write_closure(kb, &order, session, store) {
        Ok(report) => {
            store.commit()?;
            Ok(report)
        }
        Err(e) => {
            store.rollback()?;
            Err(e)
        }
    }
}

fn write_closure(kb: &KbState, order: &[EntityId], session: &mut Session, store: &mut dyn Store) -> Result<SaveReport> {
    let mut report = SaveReport::default();
    let role_roots: Vec<String> = session
        .schema
        .classes
        .values()
        .filter(|c| matches!(c.role, TableRole::RoleRoot { .. }))
        .map(|c| c.table.clone())
        .collect();
    if session.next_entity.is_none() {
        session.next_entity = Some(store.max_key(ENTITY_TABLE)? + 1);
        let mut m = 0;
        for t in &role_roots {
            m = m.max(store.max_key(t)?);
        }
        session.next_binding = Some(m + 1);
    }
    for id in order {
        if !session.entity_keys.contains_key(id) {
            let k = session.next_entity.as_mut().expect("initialized");
            session.entity_keys.insert(*id, *k);
            *k += 1;
        }
        if !kb.role_bindings(*id).is_empty() && !session.binding_keys.contains_key(id) {
            {
                let k = session.next_binding.as_mut().expect("initialized");
                session.binding_keys.insert(*id, *k);
                *k += 1;
            }
        }
        report.keys.insert(*id, session.entity_keys[id]);
    }
    let plans = order.iter().map(|id| plan_object(kb, &session.schema, *id, session)).collect::<Result<Vec<_>>>()?;

    let fk_columns: HashMap<&str, Vec<&str>> = session
        .schema
        .tables
        .iter()
        .filter(|t| t.primary_key.is_some())
        .map(|t| {
            let cols = t.foreign_keys.iter().map(|f| f.column.as_str()).filter(|c| *c != KEY && *c != HOLDER).collect();
            (t.name.as_str(), cols)
        })
        .collect();
    let mut written: HashSet<i64> = HashSet::new();
    let mut patches: Vec<(String, i64, String, SqlValue)> = Vec::new();
    for plan in &plans {
        let key = session.entity_keys[&plan.entity];
        for (table, row) in &plan.rows {
            let row_key = row[KEY].as_int().expect("keyed row");
            match store.select_by_key(table, row_key)? {
                Some(existing) if existing == *row => {}
                Some(existing) => {
                    let changed: Row = row.iter().filter(|(k, v)| existing.get(*k) != Some(*v)).map(|(k, v)| (k.clone(), v.clone())).collect();
                    store.update(table, row_key, &changed)?;
                    report.updated += 1;
                }
                None => {
                    let mut first = row.clone();
                    for col in fk_columns.get(table.as_str()).into_iter().flatten() {
                        if let Some(SqlValue::Int(target)) = row.get(*col) {
                            let present = written.contains(target) || store.select_by_key(ENTITY_TABLE, *target)?.is_some();
                            if !present {
                                first.insert(col.to_string(), SqlValue::Null);
                                patches.push((table.clone(), row_key, col.to_string(), SqlValue::Int(*target)));
                            }
                        }
                    }
                    store.insert(table, &first)?;
                    report.inserted += 1;
                }
            }
            if table == ENTITY_TABLE {
                written.insert(key);
            }
        }
    }
    for (table, key, col, value) in patches {
        store.update(&table, key, &Row::from([(col, value)]))?;
        report.patched += 1;
    }
    for plan in &plans {
        for (table, owner, rows) in &plan.assoc {
            let filter = [(OWNER, SqlValue::Int(*owner))];
            let existing = store.select(table, &filter)?;
            if existing == *rows {
                continue;
            }
            report.deleted += store.delete(table, &filter)?;
            for r in rows {
                store.insert(table, r)?;
                report.inserted += 1;
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct LoadedGraph {
    pub kb: KnowledgeBase,
    /// Entity row key to reconstructed individual.
    pub keys: BTreeMap<i64, EntityId>,
    /// Role key to holder.
    pub binding_keys: BTreeMap<i64, EntityId>,
    /// Individuals selected by the class and filter of the load.
    pub roots: Vec<EntityId>,
}

fn kb_value(v: SqlValue, kind: ColumnKind, keys: &BTreeMap<i64, EntityId>) -> Result<Value> {
    Ok(match (kind, v) {
        (ColumnKind::Boolean, SqlValue::Int(i)) => Value::Bool(i != 0),
        (ColumnKind::Integer, SqlValue::Int(i)) => Value::Int(i),
        (ColumnKind::Real, SqlValue::Real(f)) => Value::Decimal(f),
        (ColumnKind::Real, SqlValue::Int(i)) => Value::Decimal(i as f64),
        (ColumnKind::Text, SqlValue::Text(s)) => Value::Str(s),
        (ColumnKind::Key, SqlValue::Int(k)) => {
            Value::Ref(*keys.get(&k).ok_or_else(|| OrmError::SchemaMismatch(format!("dangling reference to row {k}")))?)
        }
        (kind, v) => return Err(OrmError::SchemaMismatch(format!("{v:?} in a {kind:?} column"))),
    })
}

/// Rebuilds every stored object on top of the definitions in `tbox`, sharing
/// one individual per stored identity. `class` (with an optional column
/// filter on its table) selects the returned roots.
pub fn load_graph(
    store: &dyn Store,
    schema: &Schema,
    tbox: &KnowledgeBase,
    class: Option<&str>,
    filter: &[(&str, SqlValue)],
) -> Result<LoadedGraph> {
    let mut kb = tbox.tbox_only();
    let mut types: BTreeMap<i64, (BTreeSet<ClassId>, BTreeSet<ClassId>)> = BTreeMap::new();
    for ct in schema.classes.values().filter(|c| c.role == TableRole::Root) {
        for row in store.select(&ct.table, &[])? {
            let key = row[KEY].as_int().ok_or_else(|| OrmError::SchemaMismatch("non-integer key".into()))?;
            let kind = row.get(KIND).and_then(SqlValue::as_text).unwrap_or("");
            let entry = types.entry(key).or_default();
            for name in kind.split(',').filter(|s| !s.is_empty()) {
                let (inferred, name) = match name.strip_prefix('+') {
                    Some(n) => (true, n),
                    None => (false, name),
                };
                let c = kb.class_id(name).ok_or_else(|| OrmError::UnknownDiscriminator(name.into()))?;
                if inferred { &mut entry.1 } else { &mut entry.0 }.insert(c);
            }
        }
    }
    let mut entities = store.select(ENTITY_TABLE, &[])?;
    entities.sort_by_key(|r| r[KEY].as_int());
    let mut keys = BTreeMap::new();
    for row in entities {
        let key = row[KEY].as_int().ok_or_else(|| OrmError::SchemaMismatch("non-integer key".into()))?;
        let (declared, inferred) = types.remove(&key).unwrap_or_default();
        let id = kb.restore_individual(row.get(IRI).and_then(SqlValue::as_text), declared, inferred)?;
        keys.insert(key, id);
    }
    let mut binding_keys: BTreeMap<i64, EntityId> = BTreeMap::new();
    let mut bindings: BTreeMap<i64, (i64, Vec<ClassId>)> = BTreeMap::new();
    for ct in schema.classes.values().filter(|c| matches!(c.role, TableRole::RoleRoot { .. })) {
        for row in store.select(&ct.table, &[])? {
            let key = row[KEY].as_int().ok_or_else(|| OrmError::SchemaMismatch("non-integer key".into()))?;
            let holder = row[HOLDER].as_int().ok_or_else(|| OrmError::SchemaMismatch("missing holder".into()))?;
            let kind = row.get(KIND).and_then(SqlValue::as_text).unwrap_or("");
            let entry = bindings.entry(key).or_insert_with(|| (holder, Vec::new()));
            for name in kind.split(',').filter(|s| !s.is_empty()) {
                let c = kb.class_id(name).ok_or_else(|| OrmError::UnknownDiscriminator(name.into()))?;
                if !entry.1.contains(&c) {
                    entry.1.push(c);
                }
            }
        }
    }
    for (key, (holder, classes)) in bindings {
        let id = *keys.get(&holder).ok_or_else(|| OrmError::SchemaMismatch(format!("role row {key} without holder")))?;
        for c in classes {
            kb.restore_binding(id, c)?;
        }
        binding_keys.insert(key, id);
    }
    let role_table: BTreeSet<&str> =
        schema.classes.values().filter(|c| matches!(c.role, TableRole::RoleRoot { .. } | TableRole::RoleSub)).map(|c| c.table.as_str()).collect();
    let owner_of = |table: &str, key: i64| -> Result<(EntityId, bool)> {
        if role_table.contains(table) {
            let id = binding_keys.get(&key).ok_or_else(|| OrmError::SchemaMismatch(format!("no role row {key}")))?;
            Ok((*id, true))
        } else {
            Ok((*keys.get(&key).ok_or_else(|| OrmError::SchemaMismatch(format!("no entity {key}")))?, false))
        }
    };
    let mut restored: Vec<(EntityId, bool, PropertyId, Vec<Value>)> = Vec::new();
    for (p, placement) in &schema.placements {
        match placement {
            Placement::Column { table, column, kind } => {
                for row in store.select(table, &[])? {
                    let v = row.get(column).cloned().unwrap_or(SqlValue::Null);
                    if v == SqlValue::Null {
                        continue;
                    }
                    let (id, role) = owner_of(table, row[KEY].as_int().unwrap_or_default())?;
                    restored.push((id, role, *p, vec![kb_value(v, *kind, &keys)?]));
                }
            }
            Placement::Association { table, ordered, kind } => {
                let owner_table = schema.table(table).expect("association table").foreign_keys[0].table.clone();
                let mut groups: BTreeMap<i64, Vec<(i64, SqlValue)>> = BTreeMap::new();
                let col = if *kind == ColumnKind::Key { TARGET } else { VALUE };
                for (i, row) in store.select(table, &[])?.into_iter().enumerate() {
                    let owner = row[OWNER].as_int().unwrap_or_default();
                    let pos = if *ordered { row.get(POSITION).and_then(SqlValue::as_int).unwrap_or(0) } else { i as i64 };
                    groups.entry(owner).or_default().push((pos, row.get(col).cloned().unwrap_or(SqlValue::Null)));
                }
                for (owner, mut items) in groups {
                    items.sort_by_key(|(p, _)| *p);
                    let (id, role) = owner_of(&owner_table, owner)?;
                    let vals = items.into_iter().map(|(_, v)| kb_value(v, *kind, &keys)).collect::<Result<Vec<_>>>()?;
                    restored.push((id, role, *p, vals));
                }
            }
        }
    }
    for (id, role, p, vals) in restored {
        // same slot choice as a live assertion: the exact role, else the first subrole
        let slot = if role {
            let domain = kb.property(p).domain;
            let bound = kb.role_bindings(id);
            let pick = bound.iter().find(|b| b.role_class == domain).or_else(|| bound.iter().find(|b| kb.is_subclass_of(b.role_class, domain)));
            Some(pick.ok_or_else(|| OrmError::SchemaMismatch(format!("{id} has no binding for `{}`", kb.property(p).name)))?.role_class)
        } else {
            None
        };
        kb.restore_values(id, slot, p, vals)?;
    }
    let roots = match class {
        None => keys.values().copied().collect(),
        Some(name) => {
            let c = kb.class_id(name).ok_or_else(|| OrmError::UnknownClass(name.into()))?;
            let ct = schema.class_table(c);
            let mut out = Vec::new();
            for row in store.select(&ct.table, filter)? {
                let (id, _) = owner_of(&ct.table, row[KEY].as_int().unwrap_or_default())?;
                if !out.contains(&id) {
                    out.push(id);
                }
            }
            out
        }
    };
    Ok(LoadedGraph { kb, keys, binding_keys, roots })
}
