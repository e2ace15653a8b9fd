//! Object-native knowledge base: typed object graphs queried through an
//! entity query language, extended with ripple-down rule trees, populated
//! from ontology documents and persisted through a derived relational mapping.

pub mod bench;
pub mod eql;
pub mod kb;
pub mod ontomatic;
pub mod ormatic;
pub mod rdr;
