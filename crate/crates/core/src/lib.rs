//! Regular and relaxed alignments between object-centric, partially ordered
//! event logs and typed Petri nets with identifiers.
//!
//! The crate is organized bottom-up:
//!
//! * [`poset`] and [`objects`] hold the order and multiset algebra,
//! * [`pnid`] is the typed net with mode-based firing,
//! * [`log`] holds system logs and their relaxed versions,
//! * [`relaxed_model`] builds the projection-extended net,
//! * [`alignment`] searches for cost-optimal (relaxed) alignments,
//! * [`diagnosis`] interprets alignments,
//! * [`testkit`] generates runs and injects quality issues,
//! * [`cli`] carries file schemas and the command surface.

pub mod alignment;
pub mod cli;
pub mod diagnosis;
pub mod log;
pub mod objects;
pub mod pnid;
pub mod poset;
pub mod relaxed_model;
pub mod running_example;
pub mod testkit;
