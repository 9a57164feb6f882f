//! Greedy maximal scheduling on wireless conflict graphs.
//!
//! Links are numbered `1..=n`. Rate and queue vectors are plain slices with
//! entry `i - 1` belonging to link `i`.

pub mod arrivals;
pub mod em;
pub mod error;
pub mod graph;
pub mod lp;
pub mod scheduling;
pub mod sim;
pub mod stability;

pub use error::{Error, Result};
pub use graph::{ConflictGraph, IncidenceMatrix, LinkSet, PriorityVector};
pub use scheduling::SpParams;
