//! Eventual energy outage and self-sustainability of harvest-store-consume
//! systems.
//!
//! A battery receives energy packets `X_i` at Poisson epochs with rate `λ`
//! and is drained at a constant rate `p`. The surplus
//! `U(t) = u₀ − p·t + Σ X_i` hits zero with probability `ψ(u₀)`; this crate
//! computes `ψ` analytically and estimates it by simulation.
//!
//! - [`distributions`]: packet-size laws and event streams.
//! - [`analytic`]: sustainability condition, adjustment coefficient, bounds,
//!   exact formulas and the renewal-equation solver.
//! - [`simulate`]: seeded first-passage, ladder and battery-level simulators.
//! - [`sweep`]: reports, grid sweeps and figure data files.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod distributions;
pub mod error;
pub mod simulate;
pub mod sweep;

pub use analytic::{AdjustmentResult, SolveMethod, Sustainability, SustainabilityVerdict, SystemParams};
pub use distributions::{DistributionKind, DistributionSpec, Event, EventSource, PoissonEvents, ScriptedEvents};
pub use error::{Error, Result};
pub use simulate::{EstimateWithCI, LadderSample, LindleyStats, PathPoint, TrialOutcome};
pub use sweep::{AnalysisReport, Figure, ReproduceOptions, ResultRow, SweepSpec};
