//! Core library for uncertainty-guided inverse design of frequency-selective
//! surfaces.
//!
//! The pieces, in dependency order:
//!
//! * [`design`] — the 45-bit octant encoding of 8-fold symmetric 18×18
//!   metasurface layouts, plus the geometric descriptors derived from them.
//! * [`oracle`] — the reference electromagnetic solver: an analytic
//!   single-resonance two-port model that is exact, deterministic, and
//!   deliberately expensive to consult (every call is metered).
//! * [`metrics`] — design-error, physics-residual, and ensemble-disagreement
//!   metrics shared by every optimizer and experiment.
//! * [`surrogate`] — the fast, imperfect stand-in: random-feature ridge
//!   regression over bounded geometry channels, trained per member with an
//!   independent feature seed.
//! * [`bpso`] — binary particle swarm optimizers: a surrogate-only baseline,
//!   single-metric swarms, and the uncertainty-guided multifidelity search
//!   with its explore/exploit stagnation state machine.
//! * [`stats`] — empirical CDFs, two-sample Kolmogorov–Smirnov tests, rank
//!   correlation, and percentile helpers used by the experiment reports.

pub mod bpso;
pub mod design;
pub mod metrics;
pub mod oracle;
pub mod stats;
pub mod surrogate;
