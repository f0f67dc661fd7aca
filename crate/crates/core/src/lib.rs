//! Relatedness and complexity analytics for structural diversification.
//!
//! The crate is organised in layers:
//!
//! * [`data`] parses flow, indicator and adjacency tables and detects
//!   entries/exits between snapshots.
//! * [`metrics`] turns flows into specialization, proximity, relatedness
//!   density, ECI/PCI and Fitness–Complexity scores.
//! * [`frontier`] builds relatedness–value diagrams with quadrant labels and
//!   the strategic (Pareto) frontier.
//! * [`strategy`] evaluates diversification policies on an activity graph
//!   exactly (subset dynamic programming) and by seeded Monte Carlo.
//! * [`spatial`] covers neighbor presence, complexity gradients and entry
//!   lift diagnostics.
//! * [`synth`] generates seeded synthetic panels used by tests and demos.

pub mod data;
pub mod error;
pub mod frontier;
pub mod linalg;
pub mod metrics;
pub mod spatial;
pub mod strategy;
pub mod synth;

pub use error::{Error, Result};
