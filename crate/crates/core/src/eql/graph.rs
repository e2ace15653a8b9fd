use crate::kb::{ClassId, EntityId, KbState, KnowledgeBase, PropertyId, Range, ScalarKind, Snapshot, Value};

pub type ClassKey = u32;
pub type AttrKey = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StaticType {
    Entity(Option<ClassKey>),
    Scalar(ScalarKind),
}

/// Read access the evaluator needs from an object graph.
///
/// Graphs with a closed schema (a knowledge base) reject unknown names during
/// validation; open graphs (structured case values) treat them as absent.
pub trait ObjectGraph {
    fn class_key(&self, name: &str) -> Option<ClassKey>;
    fn attr_key(&self, name: &str) -> Option<AttrKey>;
    fn closed_schema(&self) -> bool;
    fn attr_range(&self, _attr: AttrKey) -> Option<StaticType> {
        None
    }
    fn extension(&self, class: ClassKey) -> Vec<EntityId>;
    /// Appends the values of `attr` on `id` to `out`.
    fn values(&self, id: EntityId, attr: AttrKey, out: &mut Vec<Value>);
    fn is_instance(&self, id: EntityId, class: ClassKey) -> bool;
    fn resolve_iri(&self, iri: &str) -> Option<EntityId>;
}

impl ObjectGraph for KbState {
    fn class_key(&self, name: &str) -> Option<ClassKey> {
        self.class_id(name).map(|c| c.0)
    }

    fn attr_key(&self, name: &str) -> Option<AttrKey> {
        self.property_id(name).map(|p| p.0)
    }

    fn closed_schema(&self) -> bool {
        true
    }

    fn attr_range(&self, attr: AttrKey) -> Option<StaticType> {
        Some(match self.property(PropertyId(attr)).range {
            Range::Class(c) => StaticType::Entity(Some(c.0)),
            Range::Scalar(k) => StaticType::Scalar(k),
        })
    }

    fn extension(&self, class: ClassKey) -> Vec<EntityId> {
        self.extension_of(ClassId(class), true).unwrap_or_default()
    }

    fn values(&self, id: EntityId, attr: AttrKey, out: &mut Vec<Value>) {
        out.extend(KbState::values(self, id, PropertyId(attr)).cloned());
    }

    fn is_instance(&self, id: EntityId, class: ClassKey) -> bool {
        self.has_type(id, ClassId(class), true)
    }

    fn resolve_iri(&self, iri: &str) -> Option<EntityId> {
        self.individual_by_iri(iri)
    }
}

macro_rules! delegate_graph {
    ($t:ty) => {
        impl ObjectGraph for $t {
            fn class_key(&self, name: &str) -> Option<ClassKey> {
                KbState::class_key(self, name)
            }
            fn attr_key(&self, name: &str) -> Option<AttrKey> {
                KbState::attr_key(self, name)
            }
            fn closed_schema(&self) -> bool {
                true
            }
            fn attr_range(&self, attr: AttrKey) -> Option<StaticType> {
                KbState::attr_range(self, attr)
            }
            fn extension(&self, class: ClassKey) -> Vec<EntityId> {
                KbState::extension(self, class)
            }
            fn values(&self, id: EntityId, attr: AttrKey, out: &mut Vec<Value>) {
                <KbState as ObjectGraph>::values(self, id, attr, out)
            }
            fn is_instance(&self, id: EntityId, class: ClassKey) -> bool {
                KbState::is_instance(self, id, class)
            }
            fn resolve_iri(&self, iri: &str) -> Option<EntityId> {
                KbState::resolve_iri(self, iri)
            }
        }
    };
}

delegate_graph!(Snapshot);
delegate_graph!(KnowledgeBase);
