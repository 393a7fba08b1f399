//! Merge life-story persona graphs into a provenance-tracked unigraph, sample
//! synthetic persona graphs from it by thematic random walk, and measure how
//! much behavioral signal and source privacy the result keeps.

pub mod embed;
pub mod fixture;
pub mod genericize;
pub mod graph;
pub mod metrics;
pub mod sampler;
pub mod unify;

mod hash;

pub use graph::{
    load_persona, save_persona, validate, Edge, EdgeKind, EntitySpan, GraphView, Node, NodeId,
    NodeKind, PersonaGraph, PersonaId, Provenance, Role, ValidationReport,
};
pub use hash::{derive_seed, stable_hex};
