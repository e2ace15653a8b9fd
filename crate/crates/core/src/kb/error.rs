use thiserror::Error;

use super::EntityId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KbError {
    #[error("name `{0}` is already registered")]
    DuplicateName(String),
    #[error("adding `{class}` under `{superclass}` would create a cycle in the taxonomy")]
    CycleDetected { class: String, superclass: String },
    #[error("class `{class}` cannot be disjoint with its ancestor `{other}`")]
    DisjointWithAncestor { class: String, other: String },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("unknown property `{0}`")]
    UnknownProperty(String),
    #[error("unknown individual {0}")]
    UnknownIndividual(EntityId),
    #[error("invalid property definition `{property}`: {reason}")]
    InvalidProperty { property: String, reason: String },
    #[error("value {value} is outside the range of `{property}` ({expected})")]
    RangeViolation { property: String, value: String, expected: String },
    #[error("subject {subject} is incompatible with the domain `{domain}` of `{property}`")]
    DomainViolation { property: String, subject: EntityId, domain: String },
    #[error("functional property `{property}` already holds {existing} for {subject}")]
    FunctionalityViolation { property: String, subject: EntityId, existing: String },
    #[error("class `{0}` is not a role class")]
    NotARole(String),
    #[error("{holder} cannot hold role `{role}`: {reason}")]
    IncompatibleHolder { holder: EntityId, role: String, reason: String },
    #[error("{individual} would be an instance of disjoint classes `{first}` and `{second}`")]
    DisjointnessViolation { individual: EntityId, first: String, second: String },
    #[error("role class `{class}` must reference a non-role identity class, got `{target}`")]
    RoleOfRole { class: String, target: String },
    #[error("IRI `{0}` is already bound to another individual")]
    DuplicateIri(String),
}
