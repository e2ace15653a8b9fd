//! The typed object-graph knowledge base.
//!
//! A [`KnowledgeBase`] owns the class registry (taxonomy, disjointness, role
//! classes, compiled axioms), the property registry and the individuals.
//! Readers work against [`Snapshot`]s, which are cheap copy-on-write views
//! tagged with the generation they were taken at.
//!
//! Overlapping class membership is modelled with roles: an individual is the
//! identity entity, and every role class it plays is a separate
//! [`RoleBinding`] that carries the assertions whose property domain is that
//! role.

mod error;
mod value;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Deref;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::eql::Condition;

pub use error::KbError;
pub use value::{EntityId, ScalarKind, Value};

pub type Result<T> = std::result::Result<T, KbError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PropertyId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Range {
    Class(ClassId),
    Scalar(ScalarKind),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKind {
    Object,
    Data,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Characteristics {
    #[serde(default)]
    pub transitive: bool,
    #[serde(default)]
    pub symmetric: bool,
    #[serde(default)]
    pub functional: bool,
    #[serde(default)]
    pub reflexive: bool,
}

impl Characteristics {
    pub fn functional() -> Self {
        Characteristics { functional: true, ..Default::default() }
    }

    pub fn transitive() -> Self {
        Characteristics { transitive: true, ..Default::default() }
    }

    pub fn symmetric() -> Self {
        Characteristics { symmetric: true, ..Default::default() }
    }

    pub fn symmetric_transitive() -> Self {
        Characteristics { symmetric: true, transitive: true, ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cardinality {
    One,
    Many,
}

/// An attribute declared together with its class, by names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    /// A class name or a scalar kind name (`integer`, `decimal`, `string`, `boolean`).
    pub range: String,
    pub cardinality: Cardinality,
    #[serde(default)]
    pub ordered: bool,
}

impl AttributeSpec {
    pub fn one(name: &str, range: &str) -> Self {
        AttributeSpec { name: name.into(), range: range.into(), cardinality: Cardinality::One, ordered: false }
    }

    pub fn many(name: &str, range: &str) -> Self {
        AttributeSpec { name: name.into(), range: range.into(), cardinality: Cardinality::Many, ordered: false }
    }

    pub fn ordered(name: &str, range: &str) -> Self {
        AttributeSpec { name: name.into(), range: range.into(), cardinality: Cardinality::Many, ordered: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassSpec {
    pub name: String,
    pub iri: Option<String>,
    pub superclasses: Vec<String>,
    pub disjoint_with: Vec<String>,
    pub role_for: Option<String>,
    pub attributes: Vec<AttributeSpec>,
}

impl ClassSpec {
    pub fn new(name: &str) -> Self {
        ClassSpec { name: name.into(), ..Default::default() }
    }

    pub fn superclass(mut self, name: &str) -> Self {
        self.superclasses.push(name.into());
        self
    }

    pub fn disjoint_with(mut self, name: &str) -> Self {
        self.disjoint_with.push(name.into());
        self
    }

    pub fn role_for(mut self, name: &str) -> Self {
        self.role_for = Some(name.into());
        self
    }

    pub fn attribute(mut self, spec: AttributeSpec) -> Self {
        self.attributes.push(spec);
        self
    }

    pub fn iri(mut self, iri: &str) -> Self {
        self.iri = Some(iri.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertySpec {
    pub name: String,
    pub iri: Option<String>,
    pub kind: Option<PropertyKind>,
    pub domain: String,
    pub range: String,
    pub characteristics: Characteristics,
    pub inverse_of: Option<String>,
    pub super_properties: Vec<String>,
    pub ordered: bool,
}

impl PropertySpec {
    pub fn new(name: &str, domain: &str, range: &str) -> Self {
        PropertySpec {
            name: name.into(),
            iri: None,
            kind: None,
            domain: domain.into(),
            range: range.into(),
            characteristics: Characteristics::default(),
            inverse_of: None,
            super_properties: Vec::new(),
            ordered: false,
        }
    }

    pub fn with(mut self, characteristics: Characteristics) -> Self {
        self.characteristics = characteristics;
        self
    }

    pub fn inverse_of(mut self, name: &str) -> Self {
        self.inverse_of = Some(name.into());
        self
    }

    pub fn sub_property_of(mut self, name: &str) -> Self {
        self.super_properties.push(name.into());
        self
    }

    pub fn ordered(mut self) -> Self {
        self.ordered = true;
        self
    }
}

#[derive(Clone, Debug)]
pub struct ClassDef {
    pub id: ClassId,
    pub name: String,
    pub iri: Option<String>,
    pub superclasses: Vec<ClassId>,
    pub disjoint_with: BTreeSet<ClassId>,
    /// Present iff this class is a role; names the identity class it is played by.
    pub role_for: Option<ClassId>,
    /// Compiled sufficient condition over the `candidate` variable.
    pub axiom: Option<Condition>,
    /// Properties whose domain is this class, in declaration order.
    pub attributes: Vec<PropertyId>,
}

impl ClassDef {
    pub fn is_role(&self) -> bool {
        self.role_for.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct PropertyDef {
    pub id: PropertyId,
    pub name: String,
    pub iri: Option<String>,
    pub kind: PropertyKind,
    pub domain: ClassId,
    pub range: Range,
    pub characteristics: Characteristics,
    pub inverse_of: Option<PropertyId>,
    pub super_properties: Vec<PropertyId>,
    pub ordered: bool,
}

impl PropertyDef {
    pub fn cardinality(&self) -> Cardinality {
        if self.characteristics.functional {
            Cardinality::One
        } else {
            Cardinality::Many
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoleBinding {
    pub holder: EntityId,
    pub role_class: ClassId,
    pub role_state: BTreeMap<PropertyId, Vec<Value>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub id: EntityId,
    pub iri: Option<String>,
    pub declared_types: BTreeSet<ClassId>,
    pub inferred_types: BTreeSet<ClassId>,
    pub assertions: BTreeMap<PropertyId, Vec<Value>>,
    pub roles: Vec<RoleBinding>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AssertionId {
    pub subject: EntityId,
    pub property: PropertyId,
    pub position: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RoleBindingRef {
    pub holder: EntityId,
    pub role_class: ClassId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Own,
    Role(usize),
}

/// The registries. Read access is shared by [`KnowledgeBase`] and [`Snapshot`].
#[derive(Clone, Debug, Default)]
pub struct KbState {
    classes: Vec<ClassDef>,
    class_index: HashMap<String, ClassId>,
    ancestors: Vec<BTreeSet<ClassId>>,
    properties: Vec<PropertyDef>,
    property_index: HashMap<String, PropertyId>,
    individuals: Vec<Individual>,
    iri_index: HashMap<String, EntityId>,
    generation: u64,
}

impl KbState {
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassDef> {
        self.classes.iter()
    }

    pub fn properties(&self) -> impl Iterator<Item = &PropertyDef> {
        self.properties.iter()
    }

    pub fn individuals(&self) -> impl Iterator<Item = &Individual> {
        self.individuals.iter()
    }

    pub fn individual_count(&self) -> usize {
        self.individuals.len()
    }

    pub fn class(&self, id: ClassId) -> &ClassDef {
        &self.classes[id.0 as usize]
    }

    pub fn property(&self, id: PropertyId) -> &PropertyDef {
        &self.properties[id.0 as usize]
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_index.get(name).copied()
    }

    pub fn property_id(&self, name: &str) -> Option<PropertyId> {
        self.property_index.get(name).copied()
    }

    pub fn require_class(&self, name: &str) -> Result<ClassId> {
        self.class_id(name).ok_or_else(|| KbError::UnknownClass(name.to_string()))
    }

    pub fn require_property(&self, name: &str) -> Result<PropertyId> {
        self.property_id(name).ok_or_else(|| KbError::UnknownProperty(name.to_string()))
    }

    pub fn class_name(&self, id: ClassId) -> &str {
        &self.class(id).name
    }

    /// Reflexive-transitive superclass closure.
    pub fn ancestors(&self, id: ClassId) -> &BTreeSet<ClassId> {
        &self.ancestors[id.0 as usize]
    }

    pub fn is_subclass_of(&self, sub: ClassId, sup: ClassId) -> bool {
        self.ancestors(sub).contains(&sup)
    }

    pub fn descendants(&self, id: ClassId) -> BTreeSet<ClassId> {
        self.classes.iter().map(|c| c.id).filter(|c| self.is_subclass_of(*c, id)).collect()
    }

    /// Disjointness is inherited: two classes are disjoint when any pair of
    /// their ancestors is declared disjoint.
    pub fn are_disjoint(&self, a: ClassId, b: ClassId) -> bool {
        let anc_b = self.ancestors(b);
        self.ancestors(a)
            .iter()
            .any(|x| self.class(*x).disjoint_with.iter().any(|y| anc_b.contains(y)))
    }

    pub fn range_name(&self, range: Range) -> String {
        match range {
            Range::Class(c) => self.class_name(c).to_string(),
            Range::Scalar(k) => k.name().to_string(),
        }
    }

    /// Resolved attribute specs of a class (properties whose domain is the class).
    pub fn attribute_specs(&self, class: ClassId) -> Vec<AttributeSpec> {
        self.class(class)
            .attributes
            .iter()
            .map(|p| {
                let prop = self.property(*p);
                AttributeSpec {
                    name: prop.name.clone(),
                    range: self.range_name(prop.range),
                    cardinality: prop.cardinality(),
                    ordered: prop.ordered,
                }
            })
            .collect()
    }

    pub fn individual(&self, id: EntityId) -> Result<&Individual> {
        self.individuals.get(id.0 as usize).ok_or(KbError::UnknownIndividual(id))
    }

    pub fn individual_by_iri(&self, iri: &str) -> Option<EntityId> {
        self.iri_index.get(iri).copied()
    }

    pub fn contains_individual(&self, id: EntityId) -> bool {
        (id.0 as usize) < self.individuals.len()
    }

    fn direct_types<'a>(&'a self, ind: &'a Individual, include_roles: bool) -> impl Iterator<Item = ClassId> + 'a {
        let roles = ind
            .roles
            .iter()
            .filter(move |_| include_roles)
            .flat_map(move |b| std::iter::once(b.role_class).chain(self.class(b.role_class).role_for));
        ind.declared_types.iter().chain(ind.inferred_types.iter()).copied().chain(roles)
    }

    /// Full type closure of an individual (declared, inferred, and optionally role classes),
    /// expanded through superclasses.
    pub fn types_of(&self, id: EntityId, include_roles: bool) -> Result<BTreeSet<ClassId>> {
        let ind = self.individual(id)?;
        let mut out = BTreeSet::new();
        for t in self.direct_types(ind, include_roles) {
            out.extend(self.ancestors(t).iter().copied());
        }
        Ok(out)
    }

    pub fn has_type(&self, id: EntityId, class: ClassId, include_roles: bool) -> bool {
        match self.individual(id) {
            Ok(ind) => self.direct_types(ind, include_roles).any(|t| self.is_subclass_of(t, class)),
            Err(_) => false,
        }
    }

    /// All individuals whose type closure contains `class`, sorted by id.
    pub fn extension_of(&self, class: ClassId, include_roles: bool) -> Result<Vec<EntityId>> {
        if class.0 as usize >= self.classes.len() {
            return Err(KbError::UnknownClass(format!("#{}", class.0)));
        }
        Ok(self
            .individuals
            .iter()
            .filter(|ind| self.direct_types(ind, include_roles).any(|t| self.is_subclass_of(t, class)))
            .map(|ind| ind.id)
            .collect())
    }

    pub fn extension_by_name(&self, class: &str, include_roles: bool) -> Result<Vec<EntityId>> {
        self.extension_of(self.require_class(class)?, include_roles)
    }

    /// Values of a property on an individual: its own assertions followed by
    /// the role-local ones, in binding order.
    pub fn values(&self, id: EntityId, prop: PropertyId) -> impl Iterator<Item = &Value> {
        let ind = self.individuals.get(id.0 as usize);
        let own = ind.and_then(|i| i.assertions.get(&prop)).into_iter().flatten();
        let roles = ind
            .into_iter()
            .flat_map(|i| i.roles.iter())
            .filter_map(move |b| b.role_state.get(&prop))
            .flatten();
        own.chain(roles)
    }

    pub fn role_bindings(&self, id: EntityId) -> &[RoleBinding] {
        self.individuals.get(id.0 as usize).map(|i| i.roles.as_slice()).unwrap_or(&[])
    }

    /// Statement count: type assertions + role bindings + property values.
    pub fn statement_count(&self) -> usize {
        self.individuals.iter().map(Self::statements_of).sum()
    }

    /// Statements carried by one individual.
    pub fn individual_statement_count(&self, id: EntityId) -> usize {
        self.individuals.get(id.0 as usize).map(Self::statements_of).unwrap_or(0)
    }

    fn statements_of(i: &Individual) -> usize {
        i.declared_types.len()
            + i.inferred_types.len()
            + i.assertions.values().map(Vec::len).sum::<usize>()
            + i.roles.iter().map(|b| 1 + b.role_state.values().map(Vec::len).sum::<usize>()).sum::<usize>()
    }

    pub fn property_value_count(&self) -> usize {
        self.individuals
            .iter()
            .map(|i| {
                i.assertions.values().map(Vec::len).sum::<usize>()
                    + i.roles.iter().map(|b| b.role_state.values().map(Vec::len).sum::<usize>()).sum::<usize>()
            })
            .sum()
    }

    fn slot_for(&self, ind: &Individual, prop: &PropertyDef) -> Slot {
        if !self.class(prop.domain).is_role() {
            return Slot::Own;
        }
        let exact = ind.roles.iter().position(|b| b.role_class == prop.domain);
        let sub = ind.roles.iter().position(|b| self.is_subclass_of(b.role_class, prop.domain));
        match exact.or(sub) {
            Some(i) => Slot::Role(i),
            None => Slot::Own,
        }
    }

    fn check_value(&self, prop: &PropertyDef, value: Value) -> Result<Value> {
        let violation = |expected: String, value: &Value| KbError::RangeViolation {
            property: prop.name.clone(),
            value: value.to_string(),
            expected,
        };
        match (prop.range, value) {
            (Range::Scalar(ScalarKind::Decimal), Value::Int(i)) => Ok(Value::Decimal(i as f64)),
            (Range::Scalar(kind), v) => {
                if v.scalar_kind() == Some(kind) {
                    Ok(v)
                } else {
                    Err(violation(kind.name().to_string(), &v))
                }
            }
            (Range::Class(class), Value::Ref(target)) => {
                if !self.contains_individual(target) {
                    return Err(KbError::UnknownIndividual(target));
                }
                let types = self.types_of(target, true)?;
                if types.iter().any(|t| self.are_disjoint(*t, class)) {
                    return Err(violation(self.class_name(class).to_string(), &Value::Ref(target)));
                }
                Ok(Value::Ref(target))
            }
            (Range::Class(class), v) => Err(violation(self.class_name(class).to_string(), &v)),
        }
    }

    fn first_disjoint(&self, id: EntityId, class: ClassId) -> Result<Option<ClassId>> {
        Ok(self.types_of(id, true)?.into_iter().find(|t| self.are_disjoint(*t, class)))
    }
}

/// Immutable view of a knowledge base at one generation.
#[derive(Clone, Debug)]
pub struct Snapshot {
    state: Arc<KbState>,
}

impl Deref for Snapshot {
    type Target = KbState;
    fn deref(&self) -> &KbState {
        &self.state
    }
}

/// Single-writer knowledge base. Mutations copy the shared state only when a
/// snapshot still references it.
#[derive(Clone, Debug, Default)]
pub struct KnowledgeBase {
    state: Arc<KbState>,
}

impl Deref for KnowledgeBase {
    type Target = KbState;
    fn deref(&self) -> &KbState {
        &self.state
    }
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot { state: Arc::clone(&self.state) }
    }

    fn state_mut(&mut self) -> &mut KbState {
        Arc::make_mut(&mut self.state)
    }

    pub fn define_class(&mut self, spec: ClassSpec) -> Result<ClassId> {
        if self.class_index.contains_key(&spec.name) {
            return Err(KbError::DuplicateName(spec.name));
        }
        let mut supers = Vec::new();
        for s in &spec.superclasses {
            if *s == spec.name {
                return Err(KbError::CycleDetected { class: spec.name.clone(), superclass: s.clone() });
            }
            let id = self.require_class(s)?;
            if !supers.contains(&id) {
                supers.push(id);
            }
        }
        let mut disjoint = BTreeSet::new();
        for d in &spec.disjoint_with {
            if *d == spec.name {
                return Err(KbError::DisjointWithAncestor { class: spec.name.clone(), other: d.clone() });
            }
            disjoint.insert(self.require_class(d)?);
        }
        let id = ClassId(self.classes.len() as u32);
        let mut ancestors: BTreeSet<ClassId> = supers.iter().flat_map(|s| self.ancestors(*s).iter().copied()).collect();
        if let Some(d) = disjoint.iter().find(|d| ancestors.contains(*d)) {
            return Err(KbError::DisjointWithAncestor { class: spec.name, other: self.class_name(*d).to_string() });
        }
        if let Some((a, b)) = self.disjoint_pair(&ancestors) {
            return Err(KbError::DisjointWithAncestor {
                class: spec.name,
                other: format!("{} (disjoint with {})", self.class_name(a), self.class_name(b)),
            });
        }
        ancestors.insert(id);
        let role_for = match &spec.role_for {
            Some(r) => {
                let target = self.require_class(r)?;
                if self.class(target).is_role() {
                    return Err(KbError::RoleOfRole { class: spec.name, target: r.clone() });
                }
                Some(target)
            }
            None => supers.iter().find_map(|s| self.class(*s).role_for),
        };
        let state = self.state_mut();
        state.classes.push(ClassDef {
            id,
            name: spec.name.clone(),
            iri: spec.iri,
            superclasses: supers,
            disjoint_with: disjoint.clone(),
            role_for,
            axiom: None,
            attributes: Vec::new(),
        });
        state.ancestors.push(ancestors);
        state.class_index.insert(spec.name.clone(), id);
        for d in disjoint {
            state.classes[d.0 as usize].disjoint_with.insert(id);
        }
        state.generation += 1;
        for attr in spec.attributes {
            let mut prop = PropertySpec::new(&attr.name, &spec.name, &attr.range);
            prop.characteristics.functional = attr.cardinality == Cardinality::One;
            prop.ordered = attr.ordered;
            self.define_property(prop)?;
        }
        Ok(id)
    }

    fn disjoint_pair(&self, classes: &BTreeSet<ClassId>) -> Option<(ClassId, ClassId)> {
        for a in classes {
            for b in &self.class(*a).disjoint_with {
                if classes.contains(b) {
                    return Some((*a, *b));
                }
            }
        }
        None
    }

    /// Adds a taxonomy edge between two registered classes.
    pub fn add_superclass(&mut self, class: &str, superclass: &str) -> Result<()> {
        let c = self.require_class(class)?;
        let s = self.require_class(superclass)?;
        if self.is_subclass_of(s, c) {
            return Err(KbError::CycleDetected { class: class.into(), superclass: superclass.into() });
        }
        if self.class(c).superclasses.contains(&s) {
            return Ok(());
        }
        for d in self.descendants(c) {
            let mut anc = self.ancestors(d).clone();
            anc.extend(self.ancestors(s).iter().copied());
            if let Some((a, b)) = self.disjoint_pair(&anc) {
                return Err(KbError::DisjointWithAncestor {
                    class: self.class_name(d).to_string(),
                    other: format!("{} (disjoint with {})", self.class_name(a), self.class_name(b)),
                });
            }
        }
        let state = self.state_mut();
        state.classes[c.0 as usize].superclasses.push(s);
        state.recompute_ancestors();
        state.generation += 1;
        Ok(())
    }

    /// Registers `alias` as another name for `target` (equivalent class collapsing).
    pub fn alias_class(&mut self, alias: &str, target: &str) -> Result<ClassId> {
        let id = self.require_class(target)?;
        if let Some(existing) = self.class_id(alias) {
            if existing == id {
                return Ok(id);
            }
            return Err(KbError::DuplicateName(alias.into()));
        }
        let state = self.state_mut();
        state.class_index.insert(alias.into(), id);
        state.generation += 1;
        Ok(id)
    }

    pub fn set_axiom(&mut self, class: ClassId, axiom: Condition) {
        let state = self.state_mut();
        state.classes[class.0 as usize].axiom = Some(axiom);
        state.generation += 1;
    }

    pub fn define_property(&mut self, spec: PropertySpec) -> Result<PropertyId> {
        if self.property_index.contains_key(&spec.name) {
            return Err(KbError::DuplicateName(spec.name));
        }
        let invalid = |reason: &str| KbError::InvalidProperty { property: spec.name.clone(), reason: reason.into() };
        let domain = self.require_class(&spec.domain)?;
        let range = match ScalarKind::parse(&spec.range) {
            Some(kind) if self.class_id(&spec.range).is_none() => Range::Scalar(kind),
            _ => Range::Class(self.require_class(&spec.range)?),
        };
        let kind = match range {
            Range::Class(_) => PropertyKind::Object,
            Range::Scalar(_) => PropertyKind::Data,
        };
        if spec.kind.is_some_and(|k| k != kind) {
            return Err(invalid("declared kind does not match its range"));
        }
        if kind == PropertyKind::Data
            && (spec.inverse_of.is_some() || spec.characteristics.transitive || spec.characteristics.symmetric)
        {
            return Err(invalid("data properties cannot be transitive, symmetric or have an inverse"));
        }
        let id = PropertyId(self.properties.len() as u32);
        let inverse = match &spec.inverse_of {
            Some(name) => {
                let other = self.require_property(name)?;
                let other_def = self.property(other);
                if other_def.kind != PropertyKind::Object {
                    return Err(invalid("inverse must be an object property"));
                }
                if other_def.inverse_of.is_some() {
                    return Err(invalid("the inverse already has an inverse"));
                }
                Some(other)
            }
            None => None,
        };
        let mut supers = Vec::new();
        for s in &spec.super_properties {
            let sp = self.require_property(s)?;
            if self.property(sp).kind != kind {
                return Err(invalid("super-property kind differs"));
            }
            supers.push(sp);
        }
        let state = self.state_mut();
        state.properties.push(PropertyDef {
            id,
            name: spec.name.clone(),
            iri: spec.iri,
            kind,
            domain,
            range,
            characteristics: spec.characteristics,
            inverse_of: inverse,
            super_properties: supers,
            ordered: spec.ordered,
        });
        if let Some(other) = inverse {
            state.properties[other.0 as usize].inverse_of = Some(id);
        }
        state.property_index.insert(spec.name, id);
        state.classes[domain.0 as usize].attributes.push(id);
        state.generation += 1;
        Ok(id)
    }

    /// Creates an individual with the given declared types (role classes become role bindings).
    pub fn add_individual(&mut self, iri: Option<&str>, types: &[ClassId]) -> Result<EntityId> {
        if let Some(iri) = iri {
            if self.iri_index.contains_key(iri) {
                return Err(KbError::DuplicateIri(iri.into()));
            }
        }
        let id = EntityId(self.individuals.len() as u64);
        let state = self.state_mut();
        state.individuals.push(Individual {
            id,
            iri: iri.map(str::to_string),
            declared_types: BTreeSet::new(),
            inferred_types: BTreeSet::new(),
            assertions: BTreeMap::new(),
            roles: Vec::new(),
        });
        if let Some(iri) = iri {
            state.iri_index.insert(iri.into(), id);
        }
        state.generation += 1;
        let mut ordered: Vec<ClassId> = types.to_vec();
        // identity types first so role holders are compatible
        ordered.sort_by_key(|t| self.class(*t).is_role());
        for t in ordered {
            if let Err(e) = self.add_type(id, t) {
                // roll back the partially created individual
                let state = self.state_mut();
                state.individuals.pop();
                if let Some(iri) = iri {
                    state.iri_index.remove(iri);
                }
                return Err(e);
            }
        }
        Ok(id)
    }

    /// Declares a type. Returns `false` when it was already in the closure.
    pub fn add_type(&mut self, id: EntityId, class: ClassId) -> Result<bool> {
        self.add_type_inner(id, class, false)
    }

    /// Adds an inferred type (role binding when the class is a role).
    pub fn infer_type(&mut self, id: EntityId, class: ClassId) -> Result<bool> {
        self.add_type_inner(id, class, true)
    }

    fn add_type_inner(&mut self, id: EntityId, class: ClassId, inferred: bool) -> Result<bool> {
        self.individual(id)?;
        if let Some(identity) = self.class(class).role_for {
            if self.has_type(id, class, true) && self.role_bindings(id).iter().any(|b| self.is_subclass_of(b.role_class, class)) {
                return Ok(false);
            }
            if !self.has_type(id, identity, false) {
                self.add_type_inner(id, identity, inferred)?;
            }
            self.bind_role(id, class)?;
            return Ok(true);
        }
        if self.has_type(id, class, false) {
            return Ok(false);
        }
        if let Some(other) = self.first_disjoint(id, class)? {
            return Err(KbError::DisjointnessViolation {
                individual: id,
                first: self.class_name(other).to_string(),
                second: self.class_name(class).to_string(),
            });
        }
        let state = self.state_mut();
        let ind = &mut state.individuals[id.0 as usize];
        if inferred {
            ind.inferred_types.insert(class);
        } else {
            ind.declared_types.insert(class);
        }
        state.generation += 1;
        Ok(true)
    }

    pub fn bind_role(&mut self, holder: EntityId, role_class: ClassId) -> Result<RoleBindingRef> {
        self.individual(holder)?;
        let role = self.class(role_class);
        let identity = role.role_for.ok_or_else(|| KbError::NotARole(role.name.clone()))?;
        let binding = RoleBindingRef { holder, role_class };
        if self.role_bindings(holder).iter().any(|b| b.role_class == role_class) {
            return Ok(binding);
        }
        let incompatible = |reason: String| KbError::IncompatibleHolder {
            holder,
            role: self.class_name(role_class).to_string(),
            reason,
        };
        if !self.has_type(holder, identity, false) {
            return Err(incompatible(format!("holder is not a `{}`", self.class_name(identity))));
        }
        if let Some(other) = self.first_disjoint(holder, role_class)? {
            return Err(incompatible(format!("holder is a `{}`, which is disjoint", self.class_name(other))));
        }
        let migrate: Vec<PropertyId> = self
            .individual(holder)?
            .assertions
            .keys()
            .copied()
            .filter(|p| {
                let domain = self.property(*p).domain;
                self.class(domain).is_role() && self.is_subclass_of(role_class, domain)
            })
            .collect();
        let state = self.state_mut();
        let ind = &mut state.individuals[holder.0 as usize];
        let mut role_state = BTreeMap::new();
        for p in migrate {
            if let Some(vals) = ind.assertions.remove(&p) {
                role_state.insert(p, vals);
            }
        }
        ind.roles.push(RoleBinding { holder, role_class, role_state });
        state.generation += 1;
        Ok(binding)
    }

    /// Removes a role binding. Its role-local assertions move back onto the holder
    /// when another binding can host them, otherwise they are dropped and returned.
    /// Inferences previously derived from the binding are left in place.
    pub fn unbind_role(&mut self, holder: EntityId, role_class: ClassId) -> Result<Option<RoleBinding>> {
        self.individual(holder)?;
        let Some(pos) = self.role_bindings(holder).iter().position(|b| b.role_class == role_class) else {
            return Ok(None);
        };
        let state = self.state_mut();
        let removed = state.individuals[holder.0 as usize].roles.remove(pos);
        state.generation += 1;
        Ok(Some(removed))
    }

    pub fn assert_property(&mut self, subject: EntityId, prop: PropertyId, value: Value) -> Result<AssertionId> {
        let ind = self.individual(subject)?;
        let def = self.property(prop);
        let value = self.check_value(def, value)?;
        if let Some(other) = self.first_disjoint(subject, def.domain)? {
            return Err(KbError::DomainViolation {
                property: def.name.clone(),
                subject,
                domain: format!("{} (subject is a {})", self.class_name(def.domain), self.class_name(other)),
            });
        }
        let existing: Vec<&Value> = self.values(subject, prop).collect();
        if !def.ordered {
            if let Some(pos) = existing.iter().position(|v| **v == value) {
                return Ok(AssertionId { subject, property: prop, position: pos });
            }
        }
        if def.characteristics.functional {
            if let Some(v) = existing.first() {
                return Err(KbError::FunctionalityViolation {
                    property: def.name.clone(),
                    subject,
                    existing: v.to_string(),
                });
            }
        }
        let position = existing.len();
        let slot = self.slot_for(ind, def);
        let state = self.state_mut();
        let ind = &mut state.individuals[subject.0 as usize];
        let list = match slot {
            Slot::Own => ind.assertions.entry(prop).or_default(),
            Slot::Role(i) => ind.roles[i].role_state.entry(prop).or_default(),
        };
        list.push(value);
        state.generation += 1;
        Ok(AssertionId { subject, property: prop, position })
    }

    /// Convenience: assert by property name.
    pub fn assert_named(&mut self, subject: EntityId, prop: &str, value: impl Into<Value>) -> Result<AssertionId> {
        let p = self.require_property(prop)?;
        self.assert_property(subject, p, value.into())
    }

    /// Removes one occurrence of `value`; returns whether anything changed.
    pub fn retract_property(&mut self, subject: EntityId, prop: PropertyId, value: &Value) -> Result<bool> {
        self.individual(subject)?;
        let state = self.state_mut();
        let ind = &mut state.individuals[subject.0 as usize];
        let lists = ind
            .assertions
            .get_mut(&prop)
            .into_iter()
            .chain(ind.roles.iter_mut().filter_map(|b| b.role_state.get_mut(&prop)));
        for list in lists {
            if let Some(pos) = list.iter().position(|v| v == value) {
                list.remove(pos);
                state.generation += 1;
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Unchecked reconstruction used when loading persisted graphs: the data is
/// trusted to have passed validation when it was first asserted.
impl KnowledgeBase {
    /// A copy of the class and property definitions without individuals.
    pub fn tbox_only(&self) -> KnowledgeBase {
        let mut state = (*self.state).clone();
        state.individuals.clear();
        state.iri_index.clear();
        state.generation += 1;
        KnowledgeBase { state: Arc::new(state) }
    }

    pub fn restore_individual(
        &mut self,
        iri: Option<&str>,
        declared: BTreeSet<ClassId>,
        inferred: BTreeSet<ClassId>,
    ) -> Result<EntityId> {
        if let Some(iri) = iri {
            if self.iri_index.contains_key(iri) {
                return Err(KbError::DuplicateIri(iri.into()));
            }
        }
        let id = EntityId(self.individuals.len() as u64);
        let state = self.state_mut();
        state.individuals.push(Individual {
            id,
            iri: iri.map(str::to_string),
            declared_types: declared,
            inferred_types: inferred,
            assertions: BTreeMap::new(),
            roles: Vec::new(),
        });
        if let Some(iri) = iri {
            state.iri_index.insert(iri.into(), id);
        }
        state.generation += 1;
        Ok(id)
    }

    pub fn restore_binding(&mut self, holder: EntityId, role_class: ClassId) -> Result<()> {
        self.individual(holder)?;
        if !self.class(role_class).is_role() {
            return Err(KbError::NotARole(self.class_name(role_class).to_string()));
        }
        let state = self.state_mut();
        state.individuals[holder.0 as usize].roles.push(RoleBinding { holder, role_class, role_state: BTreeMap::new() });
        state.generation += 1;
        Ok(())
    }

    /// Appends values to the holder's own assertions, or to the binding of `role`.
    pub fn restore_values(&mut self, id: EntityId, role: Option<ClassId>, prop: PropertyId, values: Vec<Value>) -> Result<()> {
        let ind = self.individual(id)?;
        let pos = match role {
            Some(r) => Some(
                ind.roles
                    .iter()
                    .position(|b| b.role_class == r)
                    .ok_or_else(|| KbError::NotARole(self.class_name(r).to_string()))?,
            ),
            None => None,
        };
        if values.is_empty() {
            return Ok(());
        }
        let state = self.state_mut();
        let ind = &mut state.individuals[id.0 as usize];
        let list = match pos {
            Some(i) => ind.roles[i].role_state.entry(prop).or_default(),
            None => ind.assertions.entry(prop).or_default(),
        };
        list.extend(values);
        state.generation += 1;
        Ok(())
    }
}

impl KbState {
    fn recompute_ancestors(&mut self) {
        loop {
            let mut changed = false;
            for i in 0..self.classes.len() {
                let mut anc: BTreeSet<ClassId> = BTreeSet::from([ClassId(i as u32)]);
                for s in &self.classes[i].superclasses {
                    anc.extend(self.ancestors[s.0 as usize].iter().copied());
                }
                if anc != self.ancestors[i] {
                    self.ancestors[i] = anc;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn people() -> KnowledgeBase {
        let mut kb = KnowledgeBase::new();
        kb.define_class(ClassSpec::new("Person").attribute(AttributeSpec::one("hasAge", "integer"))).unwrap();
        kb.define_class(ClassSpec::new("Course")).unwrap();
        kb.define_class(ClassSpec::new("Student").superclass("Person").role_for("Person")).unwrap();
        kb.define_class(ClassSpec::new("Professor").superclass("Person").role_for("Person")).unwrap();
        kb.define_class(ClassSpec::new("Employee").superclass("Person").role_for("Person")).unwrap();
        kb.define_property(PropertySpec::new("takesCourse", "Student", "Course")).unwrap();
        kb
    }

    #[test]
    fn self_superclass_is_a_cycle() {
        let mut kb = KnowledgeBase::new();
        let err = kb.define_class(ClassSpec::new("A").superclass("A")).unwrap_err();
        assert!(matches!(err, KbError::CycleDetected { .. }));
    }

    #[test]
    fn container_subclass() {
        let mut kb = KnowledgeBase::new();
        let container = kb.define_class(ClassSpec::new("Container")).unwrap();
        let drawer = kb.define_class(ClassSpec::new("Drawer").superclass("Container")).unwrap();
        assert!(kb.is_subclass_of(drawer, container));
        assert_eq!(kb.class(drawer).superclasses, vec![container]);
    }

    #[test]
    fn duplicate_and_disjoint_ancestor_rejected() {
        let mut kb = people();
        assert!(matches!(kb.define_class(ClassSpec::new("Person")), Err(KbError::DuplicateName(_))));
        let err = kb.define_class(ClassSpec::new("Odd").superclass("Student").disjoint_with("Person")).unwrap_err();
        assert!(matches!(err, KbError::DisjointWithAncestor { .. }));
    }

    #[test]
    fn disjointness_is_symmetric_and_inherited() {
        let mut kb = people();
        kb.define_class(ClassSpec::new("Organization").disjoint_with("Person")).unwrap();
        let org = kb.require_class("Organization").unwrap();
        let person = kb.require_class("Person").unwrap();
        let student = kb.require_class("Student").unwrap();
        assert!(kb.class(person).disjoint_with.contains(&org));
        assert!(kb.are_disjoint(student, org));
        let err = kb.define_class(ClassSpec::new("Hybrid").superclass("Organization").superclass("Person")).unwrap_err();
        assert!(matches!(err, KbError::DisjointWithAncestor { .. }));
    }

    #[test]
    fn extension_counts_role_holders() {
        let mut kb = people();
        let person = kb.require_class("Person").unwrap();
        let student = kb.require_class("Student").unwrap();
        let prof = kb.require_class("Professor").unwrap();
        let a = kb.add_individual(Some("a"), &[person]).unwrap();
        let b = kb.add_individual(Some("b"), &[person]).unwrap();
        let c = kb.add_individual(Some("c"), &[person]).unwrap();
        kb.bind_role(a, student).unwrap();
        kb.bind_role(b, student).unwrap();
        kb.bind_role(c, prof).unwrap();
        assert_eq!(kb.extension_of(person, true).unwrap(), vec![a, b, c]);
        assert_eq!(kb.extension_of(student, true).unwrap(), vec![a, b]);
        assert!(kb.extension_of(student, false).unwrap().is_empty());
        let course = kb.require_class("Course").unwrap();
        assert!(kb.extension_of(course, true).unwrap().is_empty());
    }

    #[test]
    fn extension_walks_subclasses() {
        let mut kb = people();
        kb.define_class(ClassSpec::new("Bachelor").superclass("Student")).unwrap();
        let bachelor = kb.require_class("Bachelor").unwrap();
        let student = kb.require_class("Student").unwrap();
        assert!(kb.class(bachelor).is_role(), "subclasses of roles are roles");
        let x = kb.add_individual(None, &[bachelor]).unwrap();
        assert_eq!(kb.extension_of(student, true).unwrap(), vec![x]);
    }

    #[test]
    fn multiple_roles_coexist() {
        let mut kb = people();
        let person = kb.require_class("Person").unwrap();
        let bob = kb.add_individual(Some("bob"), &[person]).unwrap();
        kb.bind_role(bob, kb.require_class("Student").unwrap()).unwrap();
        kb.bind_role(bob, kb.require_class("Employee").unwrap()).unwrap();
        assert_eq!(kb.role_bindings(bob).len(), 2);
        assert_eq!(kb.individual(bob).unwrap().id, bob);
        assert!(matches!(kb.bind_role(bob, person), Err(KbError::NotARole(_))));
    }

    #[test]
    fn bind_role_requires_identity_type() {
        let mut kb = people();
        let course = kb.require_class("Course").unwrap();
        let c = kb.add_individual(None, &[course]).unwrap();
        let err = kb.bind_role(c, kb.require_class("Student").unwrap()).unwrap_err();
        assert!(matches!(err, KbError::IncompatibleHolder { .. }));
    }

    #[test]
    fn assertions_are_sets_and_functional_is_enforced() {
        let mut kb = people();
        let student = kb.require_class("Student").unwrap();
        let course = kb.require_class("Course").unwrap();
        let alice = kb.add_individual(Some("alice"), &[student]).unwrap();
        let c1 = kb.add_individual(Some("c1"), &[course]).unwrap();
        let takes = kb.require_property("takesCourse").unwrap();
        let first = kb.assert_property(alice, takes, Value::Ref(c1)).unwrap();
        let gen = kb.generation();
        let again = kb.assert_property(alice, takes, Value::Ref(c1)).unwrap();
        assert_eq!(first, again);
        assert_eq!(kb.generation(), gen);
        assert_eq!(kb.values(alice, takes).cloned().collect::<Vec<_>>(), vec![Value::Ref(c1)]);
        // role-local storage
        assert!(kb.individual(alice).unwrap().assertions.is_empty());
        assert_eq!(kb.role_bindings(alice)[0].role_state[&takes], vec![Value::Ref(c1)]);

        kb.assert_named(alice, "hasAge", 20).unwrap();
        let err = kb.assert_named(alice, "hasAge", 21).unwrap_err();
        assert!(matches!(err, KbError::FunctionalityViolation { .. }));
        let ages: Vec<_> = kb.values(alice, kb.require_property("hasAge").unwrap()).collect();
        assert_eq!(ages.len(), 1);
    }

    #[test]
    fn range_violations() {
        let mut kb = people();
        let person = kb.require_class("Person").unwrap();
        let a = kb.add_individual(None, &[person]).unwrap();
        assert!(matches!(kb.assert_named(a, "hasAge", "old"), Err(KbError::RangeViolation { .. })));
        assert!(matches!(kb.assert_named(a, "takesCourse", 3), Err(KbError::RangeViolation { .. })));
    }

    #[test]
    fn snapshot_isolation() {
        let mut kb = people();
        let person = kb.require_class("Person").unwrap();
        let s1 = kb.snapshot();
        let s2 = kb.snapshot();
        assert_eq!(s1.generation(), s2.generation());
        kb.add_individual(None, &[person]).unwrap();
        assert!(s1.extension_of(person, true).unwrap().is_empty());
        assert_eq!(kb.extension_of(person, true).unwrap().len(), 1);
        assert!(s1.generation() < kb.generation());
    }

    #[test]
    fn assertions_migrate_into_new_role() {
        let mut kb = people();
        let person = kb.require_class("Person").unwrap();
        let course = kb.require_class("Course").unwrap();
        let p = kb.add_individual(None, &[person]).unwrap();
        let c = kb.add_individual(None, &[course]).unwrap();
        let takes = kb.require_property("takesCourse").unwrap();
        kb.assert_property(p, takes, Value::Ref(c)).unwrap();
        assert_eq!(kb.individual(p).unwrap().assertions.len(), 1);
        kb.infer_type(p, kb.require_class("Student").unwrap()).unwrap();
        assert!(kb.individual(p).unwrap().assertions.is_empty());
        assert_eq!(kb.values(p, takes).count(), 1);
    }

    #[test]
    fn add_superclass_rejects_cycles() {
        let mut kb = KnowledgeBase::new();
        kb.define_class(ClassSpec::new("A")).unwrap();
        kb.define_class(ClassSpec::new("B").superclass("A")).unwrap();
        kb.define_class(ClassSpec::new("C").superclass("B")).unwrap();
        assert!(matches!(kb.add_superclass("A", "C"), Err(KbError::CycleDetected { .. })));
        kb.define_class(ClassSpec::new("D")).unwrap();
        kb.add_superclass("A", "D").unwrap();
        let d = kb.require_class("D").unwrap();
        assert!(kb.is_subclass_of(kb.require_class("C").unwrap(), d));
    }
}
