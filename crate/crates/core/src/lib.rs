//! Contextual-integrity norm pipeline: candidate norms rendered as survey
//! questions, crowd answers aggregated into an approved set, the set compiled
//! to restricted Datalog, checked for semantic and transitive-flow
//! consistency by exhaustive finite-model search, and enforced through a
//! space-based access-control engine.

pub mod acspace;
pub mod logic;
pub mod normgen;
pub mod report;
pub mod responses;
pub mod schema;
pub mod verifier;
