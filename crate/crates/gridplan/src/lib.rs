//! Long-horizon power-sector capacity-expansion planning.
//!
//! The crate turns hourly demand and renewable-availability profiles, land
//! eligibility data, and a hydropower-cascade description into a
//! cost-minimising linear program over a multi-decade horizon, solves it with
//! the bundled simplex solver (`gridplan-lp`), and reports capacities,
//! generation, trade, emissions and reservoir operation per scenario.
//!
//! Module map:
//! - [`series`] — hourly input profiles and per-day feature construction.
//! - [`scale`] — mean-preserving rescaling shared by several modules.
//! - [`repdays`] — representative-day selection by agglomerative clustering.
//! - [`vre`] — wind/solar resource characterization from land and CF rasters.
//! - [`cascade`] — hydropower cascade topology, inflows and water constraints.
//! - [`model`] — capacity-expansion model types and LP assembly.
//! - [`runner`] — scenario configs, orchestration, result files and reports.

pub mod cascade;
pub mod model;
pub mod repdays;
pub mod runner;
pub mod scale;
pub mod series;
pub mod vre;
