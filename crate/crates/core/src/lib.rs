//! Degree estimation on graphs under edge local differential privacy, with
//! poisoning attacks and consistency-checked protocols.

pub mod attacks;
pub mod bounds;
pub mod graph;
pub mod harness;
pub mod protocols;
pub mod randomizers;

pub use graph::{Graph, GraphError};
pub use protocols::{DegreeEstimates, Mode, ProtocolError, ResponseBundle};
pub use randomizers::{PrivacyParams, RandomSource};
