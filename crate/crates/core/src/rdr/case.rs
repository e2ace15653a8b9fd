use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde_json::{Map, Number, Value as Json};

use crate::eql::{AttrKey, ClassKey, ObjectGraph};
use crate::kb::{EntityId, KbState, Value};

use super::RdrError;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    fn intern(&mut self, name: &str) -> u32 {
        if let Some(k) = self.index.get(name) {
            return *k;
        }
        let k = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), k);
        k
    }

    fn name(&self, k: u32) -> &str {
        &self.names[k as usize]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct CaseObject {
    types: BTreeSet<u32>,
    fields: BTreeMap<u32, Vec<Value>>,
}

/// An ephemeral object graph describing one case: a root object plus
/// everything reachable from it. Object ids are positions in the graph.
#[derive(Clone, Debug, Default)]
pub struct CaseGraph {
    objects: Vec<CaseObject>,
    classes: Interner,
    attrs: Interner,
    supers: BTreeMap<u32, BTreeSet<u32>>,
}

impl CaseGraph {
    pub fn new(root_types: &[&str]) -> Self {
        let mut g = CaseGraph::default();
        g.add_object(root_types, Vec::new());
        g
    }

    pub fn root(&self) -> EntityId {
        EntityId(0)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn add_object(&mut self, types: &[&str], fields: Vec<(&str, Vec<Value>)>) -> EntityId {
        let types = types.iter().map(|t| self.classes.intern(t)).collect();
        let fields = fields.into_iter().map(|(k, v)| (self.attrs.intern(k), v)).collect();
        self.objects.push(CaseObject { types, fields });
        EntityId(self.objects.len() as u64 - 1)
    }

    pub fn push_value(&mut self, id: EntityId, attr: &str, value: Value) {
        let k = self.attrs.intern(attr);
        self.objects[id.0 as usize].fields.entry(k).or_default().push(value);
    }

    pub fn set_values(&mut self, id: EntityId, attr: &str, values: Vec<Value>) {
        let k = self.attrs.intern(attr);
        self.objects[id.0 as usize].fields.insert(k, values);
    }

    pub fn add_type(&mut self, id: EntityId, class: &str) {
        let k = self.classes.intern(class);
        self.objects[id.0 as usize].types.insert(k);
    }

    /// Declares `sup` a superclass of `class` for `is_a` tests.
    pub fn add_superclass(&mut self, class: &str, sup: &str) {
        let c = self.classes.intern(class);
        let s = self.classes.intern(sup);
        self.supers.entry(c).or_default().insert(s);
    }

    pub fn field(&self, id: EntityId, attr: &str) -> &[Value] {
        self.attrs
            .get(attr)
            .and_then(|k| self.objects.get(id.0 as usize)?.fields.get(&k))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn types(&self, id: EntityId) -> Vec<&str> {
        self.objects[id.0 as usize].types.iter().map(|t| self.classes.name(*t)).collect()
    }

    pub fn fields(&self, id: EntityId) -> Vec<(&str, &[Value])> {
        self.objects[id.0 as usize].fields.iter().map(|(k, v)| (self.attrs.name(*k), v.as_slice())).collect()
    }

    fn ancestors(&self, class: u32) -> BTreeSet<u32> {
        let mut out = BTreeSet::from([class]);
        let mut stack = vec![class];
        while let Some(c) = stack.pop() {
            for s in self.supers.get(&c).into_iter().flatten() {
                if out.insert(*s) {
                    stack.push(*s);
                }
            }
        }
        out
    }

    /// Builds a case from nested JSON. Objects carry `type` (string) or `types`
    /// (list); `$id` names an object that `{"$ref": name}` points back to.
    pub fn from_json(json: &Json) -> Result<Self, RdrError> {
        let mut g = CaseGraph::default();
        let mut named: HashMap<String, EntityId> = HashMap::new();
        let mut pending: Vec<(EntityId, u32, usize, String)> = Vec::new();
        let obj = json.as_object().ok_or_else(|| RdrError::InvalidCase("case root must be an object".into()))?;
        g.load_object(obj, &mut named, &mut pending)?;
        for (id, attr, pos, name) in pending {
            let target = named.get(&name).ok_or_else(|| RdrError::InvalidCase(format!("dangling $ref `{name}`")))?;
            g.objects[id.0 as usize].fields.get_mut(&attr).expect("pending field")[pos] = Value::Ref(*target);
        }
        if let Some(tax) = json.get("$taxonomy").and_then(Json::as_object) {
            for (class, sups) in tax {
                for s in sups.as_array().into_iter().flatten().filter_map(Json::as_str) {
                    g.add_superclass(class, s);
                }
            }
        }
        Ok(g)
    }

    fn load_object(
        &mut self,
        obj: &Map<String, Json>,
        named: &mut HashMap<String, EntityId>,
        pending: &mut Vec<(EntityId, u32, usize, String)>,
    ) -> Result<EntityId, RdrError> {
        let id = EntityId(self.objects.len() as u64);
        self.objects.push(CaseObject::default());
        for (key, val) in obj {
            match key.as_str() {
                "type" => {
                    let t = val.as_str().ok_or_else(|| RdrError::InvalidCase("`type` must be a string".into()))?;
                    self.add_type(id, t);
                }
                "types" => {
                    for t in val.as_array().into_iter().flatten() {
                        let t = t.as_str().ok_or_else(|| RdrError::InvalidCase("`types` must hold strings".into()))?;
                        self.add_type(id, t);
                    }
                }
                "$id" => {
                    let name = val.as_str().ok_or_else(|| RdrError::InvalidCase("`$id` must be a string".into()))?;
                    named.insert(name.to_string(), id);
                }
                "$taxonomy" => {}
                _ => {
                    let attr = self.attrs.intern(key);
                    let items: Vec<&Json> = match val {
                        Json::Array(items) => items.iter().collect(),
                        Json::Null => Vec::new(),
                        other => vec![other],
                    };
                    let mut values = Vec::with_capacity(items.len());
                    for item in items {
                        let v = match item {
                            Json::Bool(b) => Value::Bool(*b),
                            Json::Number(n) => match n.as_i64() {
                                Some(i) if !n.is_f64() => Value::Int(i),
                                _ => Value::Decimal(n.as_f64().unwrap_or(f64::NAN)),
                            },
                            Json::String(s) => Value::Str(s.clone()),
                            Json::Object(o) => match o.get("$ref").and_then(Json::as_str) {
                                Some(name) if o.len() == 1 => {
                                    pending.push((id, attr, values.len(), name.to_string()));
                                    Value::Ref(EntityId(u64::MAX))
                                }
                                _ => Value::Ref(self.load_object(o, named, pending)?),
                            },
                            Json::Null | Json::Array(_) => {
                                return Err(RdrError::InvalidCase(format!("unsupported nested value under `{key}`")))
                            }
                        };
                        values.push(v);
                    }
                    self.objects[id.0 as usize].fields.insert(attr, values);
                }
            }
        }
        Ok(id)
    }

    /// Nested JSON form accepted by [`CaseGraph::from_json`].
    pub fn to_json(&self) -> Json {
        let mut indegree = vec![0usize; self.objects.len()];
        for o in &self.objects {
            for v in o.fields.values().flatten() {
                if let Value::Ref(id) = v {
                    indegree[id.0 as usize] += 1;
                }
            }
        }
        let mut emitted = vec![false; self.objects.len()];
        let mut root = self.object_json(0, &indegree, &mut emitted);
        if !self.supers.is_empty() {
            let tax: Map<String, Json> = self
                .supers
                .iter()
                .map(|(c, s)| {
                    (self.classes.name(*c).to_string(), Json::from(s.iter().map(|x| self.classes.name(*x)).collect::<Vec<_>>()))
                })
                .collect();
            root.as_object_mut().expect("object").insert("$taxonomy".into(), Json::Object(tax));
        }
        root
    }

    fn object_json(&self, i: usize, indegree: &[usize], emitted: &mut [bool]) -> Json {
        if emitted[i] {
            return serde_json::json!({ "$ref": format!("o{i}") });
        }
        emitted[i] = true;
        let o = &self.objects[i];
        let mut map = Map::new();
        if indegree[i] > 1 || (i == 0 && indegree[0] > 0) {
            map.insert("$id".into(), Json::from(format!("o{i}")));
        }
        let types: Vec<&str> = o.types.iter().map(|t| self.classes.name(*t)).collect();
        if types.len() == 1 {
            map.insert("type".into(), Json::from(types[0]));
        } else if !types.is_empty() {
            map.insert("types".into(), Json::from(types));
        }
        for (k, vals) in &o.fields {
            let items: Vec<Json> = vals
                .iter()
                .map(|v| match v {
                    Value::Bool(b) => Json::Bool(*b),
                    Value::Int(n) => Json::from(*n),
                    Value::Decimal(d) => Number::from_f64(*d).map(Json::Number).unwrap_or(Json::Null),
                    Value::Str(s) => Json::from(s.as_str()),
                    Value::Ref(id) => self.object_json(id.0 as usize, indegree, emitted),
                })
                .collect();
            let v = if items.len() == 1 { items.into_iter().next().unwrap() } else { Json::Array(items) };
            map.insert(self.attrs.name(*k).to_string(), v);
        }
        Json::Object(map)
    }

    /// Copies the individual `root` and everything reachable from it out of a
    /// knowledge base, including the class taxonomy needed by `is_a`.
    pub fn from_kb(kb: &KbState, root: EntityId) -> Result<Self, RdrError> {
        kb.individual(root).map_err(|e| RdrError::InvalidCase(e.to_string()))?;
        let mut g = CaseGraph::default();
        let mut map: HashMap<EntityId, EntityId> = HashMap::new();
        let mut order = vec![root];
        map.insert(root, EntityId(0));
        let mut i = 0;
        while i < order.len() {
            let src = order[i];
            g.objects.push(CaseObject::default());
            let id = EntityId(i as u64);
            for t in kb.types_of(src, true).unwrap_or_default() {
                g.add_type(id, kb.class_name(t));
            }
            for p in kb.properties() {
                let vals: Vec<Value> = kb.values(src, p.id).cloned().collect();
                if vals.is_empty() {
                    continue;
                }
                let mut out = Vec::with_capacity(vals.len());
                for v in vals {
                    out.push(match v {
                        Value::Ref(target) => {
                            let next = EntityId(map.len() as u64);
                            let mapped = *map.entry(target).or_insert_with(|| {
                                order.push(target);
                                next
                            });
                            Value::Ref(mapped)
                        }
                        other => other,
                    });
                }
                g.set_values(id, &p.name, out);
            }
            i += 1;
        }
        Ok(g)
    }
}

/// Equality by names, independent of interning order.
impl PartialEq for CaseGraph {
    fn eq(&self, other: &Self) -> bool {
        let view = |g: &CaseGraph, o: &CaseObject| {
            let types: BTreeSet<String> = o.types.iter().map(|t| g.classes.name(*t).to_string()).collect();
            let fields: BTreeMap<String, Vec<Value>> =
                o.fields.iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (g.attrs.name(*k).to_string(), v.clone())).collect();
            (types, fields)
        };
        let tax = |g: &CaseGraph| -> BTreeSet<(String, String)> {
            g.supers
                .iter()
                .flat_map(|(c, ss)| ss.iter().map(move |s| (g.classes.name(*c).to_string(), g.classes.name(*s).to_string())))
                .collect()
        };
        self.objects.len() == other.objects.len()
            && self.objects.iter().zip(&other.objects).all(|(a, b)| view(self, a) == view(other, b))
            && tax(self) == tax(other)
    }
}

pub(crate) fn value_to_json(v: &Value) -> Json {
    match v {
        Value::Bool(b) => Json::Bool(*b),
        Value::Int(n) => Json::from(*n),
        Value::Decimal(d) => Number::from_f64(*d).map(Json::Number).unwrap_or(Json::Null),
        Value::Str(s) => Json::from(s.as_str()),
        Value::Ref(id) => serde_json::json!({ "ref": id.0 }),
    }
}

pub(crate) fn value_from_json(j: &Json) -> Result<Value, RdrError> {
    Ok(match j {
        Json::Bool(b) => Value::Bool(*b),
        Json::Number(n) => match n.as_i64() {
            Some(i) if !n.is_f64() => Value::Int(i),
            _ => Value::Decimal(n.as_f64().unwrap_or(f64::NAN)),
        },
        Json::String(s) => Value::Str(s.clone()),
        Json::Null => Value::Decimal(f64::NAN),
        Json::Object(o) => match o.get("ref").and_then(Json::as_u64) {
            Some(id) if o.len() == 1 => Value::Ref(EntityId(id)),
            _ => return Err(RdrError::InvalidCase(format!("unsupported value {j}"))),
        },
        Json::Array(_) => return Err(RdrError::InvalidCase(format!("unsupported value {j}"))),
    })
}

impl CaseGraph {
    /// Id-preserving form: `{"objects": [{"types": [..], "fields": {..}}], "taxonomy": {..}}`.
    pub fn to_flat_json(&self) -> Json {
        let objects: Vec<Json> = self
            .objects
            .iter()
            .map(|o| {
                let fields: Map<String, Json> = o
                    .fields
                    .iter()
                    .map(|(k, vs)| (self.attrs.name(*k).to_string(), Json::Array(vs.iter().map(value_to_json).collect())))
                    .collect();
                let types: Vec<&str> = o.types.iter().map(|t| self.classes.name(*t)).collect();
                serde_json::json!({ "types": types, "fields": fields })
            })
            .collect();
        let tax: Map<String, Json> = self
            .supers
            .iter()
            .map(|(c, s)| (self.classes.name(*c).to_string(), Json::from(s.iter().map(|x| self.classes.name(*x)).collect::<Vec<_>>())))
            .collect();
        serde_json::json!({ "objects": objects, "taxonomy": tax })
    }

    pub fn from_flat_json(j: &Json) -> Result<Self, RdrError> {
        let bad = |m: &str| RdrError::InvalidCase(m.to_string());
        let objects = j.get("objects").and_then(Json::as_array).ok_or_else(|| bad("missing `objects`"))?;
        let mut g = CaseGraph::default();
        for o in objects {
            let id = EntityId(g.objects.len() as u64);
            g.objects.push(CaseObject::default());
            for t in o.get("types").and_then(Json::as_array).into_iter().flatten() {
                g.add_type(id, t.as_str().ok_or_else(|| bad("type names must be strings"))?);
            }
            for (k, vs) in o.get("fields").and_then(Json::as_object).into_iter().flatten() {
                let vs = vs.as_array().ok_or_else(|| bad("field values must be lists"))?;
                let vals = vs.iter().map(value_from_json).collect::<Result<Vec<_>, _>>()?;
                g.set_values(id, k, vals);
            }
        }
        let n = g.objects.len() as u64;
        if n == 0 {
            return Err(bad("a case needs a root object"));
        }
        if g.objects.iter().flat_map(|o| o.fields.values().flatten()).any(|v| matches!(v, Value::Ref(r) if r.0 >= n)) {
            return Err(bad("reference past the last object"));
        }
        for (c, ss) in j.get("taxonomy").and_then(Json::as_object).into_iter().flatten() {
            for s in ss.as_array().into_iter().flatten().filter_map(Json::as_str) {
                g.add_superclass(c, s);
            }
        }
        Ok(g)
    }
}

impl ObjectGraph for CaseGraph {
    fn class_key(&self, name: &str) -> Option<ClassKey> {
        self.classes.get(name)
    }

    fn attr_key(&self, name: &str) -> Option<AttrKey> {
        self.attrs.get(name)
    }

    fn closed_schema(&self) -> bool {
        false
    }

    fn extension(&self, class: ClassKey) -> Vec<EntityId> {
        (0..self.objects.len() as u64).map(EntityId).filter(|id| self.is_instance(*id, class)).collect()
    }

    fn values(&self, id: EntityId, attr: AttrKey, out: &mut Vec<Value>) {
        if let Some(vals) = self.objects.get(id.0 as usize).and_then(|o| o.fields.get(&attr)) {
            out.extend(vals.iter().cloned());
        }
    }

    fn is_instance(&self, id: EntityId, class: ClassKey) -> bool {
        let Some(o) = self.objects.get(id.0 as usize) else { return false };
        o.types.contains(&class) || o.types.iter().any(|t| self.ancestors(*t).contains(&class))
    }

    fn resolve_iri(&self, _iri: &str) -> Option<EntityId> {
        None
    }
}
