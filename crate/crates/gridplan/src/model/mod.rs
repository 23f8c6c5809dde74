//! The capacity-expansion optimization model.
//!
//! [`inputs`] defines the data bundle (technologies, demand, trade, policies)
//! and its CSV loaders; [`builder`] turns a bundle — optionally together with
//! compiled cascade fragments — into a linear program plus an index that maps
//! solution columns back to named quantities.
//!
//! Conventions shared by every block:
//! - Years run from the base year to the end year inclusive.
//! - Capacity is MW; energy is annual MWh per timeslice; water volumes are
//!   annual MCM per timeslice; emissions are tonnes CO2 per year.
//! - A timeslice (d, h) lasts `weight(d) * 24 / hours_per_day` hours, and all
//!   slice durations together cover the full year.

pub mod builder;
pub mod inputs;

pub use builder::{build_model, ModelBuilder, ModelIndex};
pub use inputs::*;

use std::fmt;

#[derive(Debug)]
pub enum ModelError {
    Io { path: String, source: std::io::Error },
    Parse { path: String, msg: String },
    Inconsistent { msg: String },
    DuplicateTech { id: String },
    BlockMissing { block: &'static str },
    BlockDuplicate { block: &'static str },
    DuplicateRow { name: String },
    Cascade { source: crate::cascade::CascadeError },
    Lp { source: gridplan_lp::Error },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Io { path, source } => write!(f, "{path}: {source}"),
            ModelError::Parse { path, msg } => write!(f, "{path}: {msg}"),
            ModelError::Inconsistent { msg } => write!(f, "inconsistent inputs: {msg}"),
            ModelError::DuplicateTech { id } => write!(f, "duplicate technology id {id}"),
            ModelError::BlockMissing { block } => {
                write!(f, "constraint block {block} was never added")
            }
            ModelError::BlockDuplicate { block } => {
                write!(f, "constraint block {block} added twice")
            }
            ModelError::DuplicateRow { name } => write!(f, "duplicate row name {name}"),
            ModelError::Cascade { source } => write!(f, "cascade: {source}"),
            ModelError::Lp { source } => write!(f, "linear program: {source}"),
        }
    }
}

impl std::error::Error for ModelError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ModelError::Io { source, .. } => Some(source),
            ModelError::Cascade { source } => Some(source),
            ModelError::Lp { source } => Some(source),
            _ => None,
        }
    }
}

impl From<crate::cascade::CascadeError> for ModelError {
    fn from(source: crate::cascade::CascadeError) -> Self {
        ModelError::Cascade { source }
    }
}

impl From<gridplan_lp::Error> for ModelError {
    fn from(source: gridplan_lp::Error) -> Self {
        ModelError::Lp { source }
    }
}

/// Present-value factor for costs incurred in `year`, discounted back to the
/// base year.
pub fn discount(rate: f64, base_year: u32, year: u32) -> f64 {
    debug_assert!(year >= base_year);
    (1.0 + rate).powi(-((year - base_year) as i32))
}

/// Fraction of overnight cost credited back for capacity still standing when
/// the horizon ends: straight-line depreciation by age. Capacity that
/// retires on or before the end year earns nothing.
pub fn salvage_fraction(vintage: u32, life: u32, end_year: u32) -> f64 {
    if life == 0 || vintage + life <= end_year + 1 {
        return 0.0;
    }
    let age = (end_year - vintage) as f64;
    ((life as f64 - age) / life as f64).clamp(0.0, 1.0)
}

/// Linear interpolation over ascending (year, value) anchors, clamped to the
/// first/last value outside their range. Panics on an empty slice.
pub fn interp_anchors(anchors: &[(u32, f64)], year: u32) -> f64 {
    assert!(!anchors.is_empty(), "interp_anchors needs at least one anchor");
    if year <= anchors[0].0 {
        return anchors[0].1;
    }
    if year >= anchors[anchors.len() - 1].0 {
        return anchors[anchors.len() - 1].1;
    }
    for pair in anchors.windows(2) {
        let (y0, v0) = pair[0];
        let (y1, v1) = pair[1];
        if year >= y0 && year <= y1 {
            if y0 == y1 {
                return v1;
            }
            let t = (year - y0) as f64 / (y1 - y0) as f64;
            return v0 + t * (v1 - v0);
        }
    }
    anchors[anchors.len() - 1].1
}

/// Emission ceiling for a year in tonnes: none before the first anchor year,
/// linear in between, held flat after the last. Anchor values are fractions
/// of the baseline.
pub fn emission_limit(policy: &EmissionPolicy, year: u32) -> Option<f64> {
    let first = policy.anchors.first()?;
    if year < first.0 {
        return None;
    }
    Some(policy.baseline_t * interp_anchors(&policy.anchors, year))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discount_follows_compound_rate() {
        assert_eq!(discount(0.05, 2020, 2020), 1.0);
        let d2030 = discount(0.05, 2020, 2030);
        assert!((d2030 - 1.05f64.powi(-10)).abs() < 1e-15);
        assert!((d2030 - 0.61391).abs() < 1e-4);
        assert!((discount(0.05, 2020, 2050) - 1.05f64.powi(-30)).abs() < 1e-15);
    }

    #[test]
    fn salvage_credits_unused_life_by_age() {
        // Built 2045, 20-year life, horizon ends 2050: five years old, so
        // three quarters of the overnight cost comes back.
        assert!((salvage_fraction(2045, 20, 2050) - 15.0 / 20.0).abs() < 1e-15);
        // Fully used within the horizon: nothing back.
        assert_eq!(salvage_fraction(2030, 20, 2050), 0.0);
        assert_eq!(salvage_fraction(2031, 20, 2050), 0.0);
        // One year of overhang.
        assert!((salvage_fraction(2032, 20, 2050) - 2.0 / 20.0).abs() < 1e-15);
        // Built in the final year.
        assert!((salvage_fraction(2050, 20, 2050) - 1.0).abs() < 1e-15);
        assert_eq!(salvage_fraction(2020, 1, 2020), 0.0);
    }

    #[test]
    fn anchor_interpolation_clamps_and_blends() {
        let anchors = vec![(2030, 0.45), (2050, 0.0)];
        assert_eq!(interp_anchors(&anchors, 2025), 0.45);
        assert_eq!(interp_anchors(&anchors, 2030), 0.45);
        assert!((interp_anchors(&anchors, 2040) - 0.225).abs() < 1e-15);
        assert_eq!(interp_anchors(&anchors, 2050), 0.0);
        assert_eq!(interp_anchors(&anchors, 2060), 0.0);
    }

    #[test]
    fn emission_limits_start_at_first_anchor() {
        let policy =
            EmissionPolicy { baseline_t: 1000.0, anchors: vec![(2030, 0.45), (2050, 0.0)] };
        assert_eq!(emission_limit(&policy, 2029), None);
        assert_eq!(emission_limit(&policy, 2030), Some(450.0));
        assert_eq!(emission_limit(&policy, 2040), Some(225.0));
        assert_eq!(emission_limit(&policy, 2050), Some(0.0));
        let empty = EmissionPolicy { baseline_t: 1000.0, anchors: vec![] };
        assert_eq!(emission_limit(&empty, 2040), None);
    }
}
