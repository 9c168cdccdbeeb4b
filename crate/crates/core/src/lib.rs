//! Digital ecosystem simulator and metrics library.
//!
//! Agents carry numeric semantic descriptions, live in per-user habitats, and
//! are assembled into agent-sequences by small genetic algorithms run in
//! response to user requests. The metrics modules measure the populations
//! those algorithms produce.

pub mod augment;
pub mod clustering;
pub mod complexity;
pub mod ecosystem;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod model;
pub mod recognition;
pub mod rng;
pub mod stability;

pub use error::{Error, Result};
pub use model::{
    canonicalize, description_difference, Agent, AgentCatalog, AgentId, AgentSequence,
    AttributeTuple, HabitatId, MigrationRecord, SemanticDescription, UserRequest,
};
