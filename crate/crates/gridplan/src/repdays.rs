//! Representative-day selection by agglomerative clustering.
//!
//! Historical days become feature vectors (see [`crate::series`]), are grouped
//! with Ward's minimum-variance linkage, and each cluster is represented by
//! its member closest to the centroid, weighted by the cluster's day count.
//! Representative series are then rescaled so weighted annual means match the
//! source data exactly.
//!
//! Determinism: merge ties pick the pair with the lowest participating day
//! indices; centroid-distance ties pick the lowest day index. Two runs on
//! identical input therefore produce identical output, and the merge order
//! does not depend on how input days were ordered beyond those tie-breaks.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::scale::{self, ScaleError};
use crate::series::{DayFeatureMatrix, HourlyProfile, SeriesKind};

#[derive(Debug)]
pub enum RepDaysError {
    KOutOfRange { k: usize, n_days: usize },
    AssignmentInvalid { msg: String },
    EmptyCluster { label: usize },
    UnknownSeries { series: String },
    Scale { series: String, source: ScaleError },
    Io { path: String, source: std::io::Error },
}

impl fmt::Display for RepDaysError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RepDaysError::KOutOfRange { k, n_days } => {
                write!(f, "cluster count {k} out of range 1..={n_days}")
            }
            RepDaysError::AssignmentInvalid { msg } => write!(f, "invalid assignment: {msg}"),
            RepDaysError::EmptyCluster { label } => write!(f, "cluster {label} has no members"),
            RepDaysError::UnknownSeries { series } => {
                write!(f, "series {series} not present in the source profiles")
            }
            RepDaysError::Scale { series, source } => {
                write!(f, "rescaling series {series}: {source}")
            }
            RepDaysError::Io { path, source } => write!(f, "cannot write {path}: {source}"),
        }
    }
}

impl std::error::Error for RepDaysError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            RepDaysError::Scale { source, .. } => Some(source),
            RepDaysError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// One series of a representative-day set: `days[r]` holds the 24 hourly
/// values of representative `r`.
#[derive(Debug, Clone)]
pub struct RepSeries {
    pub series_id: String,
    pub kind: SeriesKind,
    pub days: Vec<[f64; 24]>,
    /// Multiplicative factor applied by the rescale step (1.0 before it).
    pub scale_factor: f64,
    /// Whether rescaling had to clip capacity factors at 1.0.
    pub clipped: bool,
}

/// K weighted representative days. Weights are cluster sizes (day counts) and
/// sum to the number of source days; representatives are listed in ascending
/// order of the smallest day index in their cluster.
#[derive(Debug, Clone)]
pub struct RepDaySet {
    pub k: usize,
    pub n_source_days: usize,
    /// Source day index of each representative.
    pub day_indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub series: Vec<RepSeries>,
}

/// Outcome of the rescale step for one series.
#[derive(Debug, Clone)]
pub struct SeriesScale {
    pub series_id: String,
    pub factor: f64,
    pub clipped: bool,
    pub iterations: usize,
    pub target_mean: f64,
    pub achieved_mean: f64,
}

/// Groups the matrix's days into exactly `k` clusters with Ward linkage.
/// Returns one cluster label per day; labels are contiguous `0..k`, ordered
/// by each cluster's smallest member day.
pub fn cluster_days(matrix: &DayFeatureMatrix, k: usize) -> Result<Vec<usize>, RepDaysError> {
    let n = matrix.n_days;
    if k < 1 || k > n {
        return Err(RepDaysError::KOutOfRange { k, n_days: n });
    }

    struct Cluster {
        centroid: Vec<f64>,
        size: f64,
        min_day: usize,
        members: Vec<usize>,
    }

    let mut slots: Vec<Option<Cluster>> = matrix
        .rows
        .iter()
        .enumerate()
        .map(|(d, row)| {
            Some(Cluster { centroid: row.clone(), size: 1.0, min_day: d, members: vec![d] })
        })
        .collect();

    // Ward merge cost between clusters a and b with centroids c and sizes s:
    //   cost = s_a * s_b / (s_a + s_b) * ||c_a - c_b||^2
    // which is exactly the increase in total within-cluster sum of squares.
    let ward = |a: &Cluster, b: &Cluster| -> f64 {
        let mut d2 = 0.0;
        for (x, y) in a.centroid.iter().zip(&b.centroid) {
            let d = x - y;
            d2 += d * d;
        }
        a.size * b.size / (a.size + b.size) * d2
    };

    // Pairwise cost cache over slot indices (i < j). Rebuilding only the
    // merged cluster's row keeps each step linear in the active count.
    let mut cost = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            cost[i * n + j] = ward(slots[i].as_ref().unwrap(), slots[j].as_ref().unwrap());
        }
    }
    let mut active: Vec<usize> = (0..n).collect();

    for _step in 0..(n - k) {
        // Lowest cost wins; exact ties go to the pair whose participating
        // smallest day indices are lexicographically lowest.
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let c = cost[i * n + j];
                let (mi, mj) = (
                    slots[i].as_ref().unwrap().min_day,
                    slots[j].as_ref().unwrap().min_day,
                );
                let key = if mi < mj { (mi, mj) } else { (mj, mi) };
                let better = match &best {
                    None => true,
                    Some((bc, bk0, bk1, _, _)) => {
                        c < *bc || (c == *bc && key < (*bk0, *bk1))
                    }
                };
                if better {
                    best = Some((c, key.0, key.1, i, j));
                }
            }
        }
        let (_, _, _, i, j) = best.expect("at least two active clusters");

        let b = slots[j].take().unwrap();
        let a = slots[i].as_mut().unwrap();
        let total = a.size + b.size;
        for (ca, cb) in a.centroid.iter_mut().zip(&b.centroid) {
            *ca = (*ca * a.size + *cb * b.size) / total;
        }
        a.size = total;
        a.min_day = a.min_day.min(b.min_day);
        a.members.extend(b.members);
        active.retain(|&s| s != j);

        let merged = slots[i].as_ref().unwrap();
        for &other in &active {
            if other == i {
                continue;
            }
            let c = ward(merged, slots[other].as_ref().unwrap());
            let (lo, hi) = if other < i { (other, i) } else { (i, other) };
            cost[lo * n + hi] = c;
        }
    }

    let mut clusters: Vec<&Cluster> = active.iter().map(|&s| slots[s].as_ref().unwrap()).collect();
    clusters.sort_by_key(|c| c.min_day);
    let mut assignment = vec![0usize; n];
    for (label, c) in clusters.iter().enumerate() {
        for &d in &c.members {
            assignment[d] = label;
        }
    }
    Ok(assignment)
}

/// Selects each cluster's representative (member nearest the centroid, ties
/// to the lowest day index) and assembles the unscaled set. Weights are the
/// cluster sizes.
pub fn pick_representatives(
    matrix: &DayFeatureMatrix,
    assignment: &[usize],
) -> Result<RepDaySet, RepDaysError> {
    if assignment.len() != matrix.n_days {
        return Err(RepDaysError::AssignmentInvalid {
            msg: format!("{} labels for {} days", assignment.len(), matrix.n_days),
        });
    }
    let k = match assignment.iter().max() {
        Some(&m) => m + 1,
        None => return Err(RepDaysError::AssignmentInvalid { msg: "no days".to_string() }),
    };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (d, &label) in assignment.iter().enumerate() {
        members[label].push(d);
    }

    let dim = 24 * matrix.n_series;
    let mut day_indices = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for (label, days) in members.iter().enumerate() {
        if days.is_empty() {
            return Err(RepDaysError::EmptyCluster { label });
        }
        let mut centroid = vec![0.0; dim];
        for &d in days {
            for (c, v) in centroid.iter_mut().zip(&matrix.rows[d]) {
                *c += v;
            }
        }
        for c in centroid.iter_mut() {
            *c /= days.len() as f64;
        }
        let mut best_day = days[0];
        let mut best_d2 = f64::INFINITY;
        for &d in days {
            let mut d2 = 0.0;
            for (x, c) in matrix.rows[d].iter().zip(&centroid) {
                let diff = x - c;
                d2 += diff * diff;
            }
            if d2 < best_d2 {
                best_d2 = d2;
                best_day = d;
            }
        }
        day_indices.push(best_day);
        weights.push(days.len() as f64);
    }

    let series = matrix
        .series_ids
        .iter()
        .enumerate()
        .map(|(s, id)| {
            let days = day_indices
                .iter()
                .map(|&d| {
                    let mut hours = [0.0; 24];
                    hours.copy_from_slice(&matrix.raw[d][s * 24..(s + 1) * 24]);
                    hours
                })
                .collect();
            RepSeries {
                series_id: id.clone(),
                kind: matrix.kinds[s],
                days,
                scale_factor: 1.0,
                clipped: false,
            }
        })
        .collect();

    Ok(RepDaySet { k, n_source_days: matrix.n_days, day_indices, weights, series })
}

/// Rescales every series so its weight-weighted mean equals the source annual
/// mean. Capacity-factor series are clipped at 1.0 with redistribution when
/// plain scaling would overshoot; the report records factors and clipping.
pub fn rescale_to_annual_means(
    set: &mut RepDaySet,
    profiles: &[HourlyProfile],
) -> Result<Vec<SeriesScale>, RepDaysError> {
    let mut report = Vec::with_capacity(set.series.len());
    let weights = set.weights.clone();
    for series in set.series.iter_mut() {
        let profile = profiles
            .iter()
            .find(|p| p.series_id == series.series_id)
            .ok_or_else(|| RepDaysError::UnknownSeries { series: series.series_id.clone() })?;
        let target = profile.annual_mean();

        let mut flat = Vec::with_capacity(set.k * 24);
        let mut flat_w = Vec::with_capacity(set.k * 24);
        for (r, day) in series.days.iter().enumerate() {
            for &v in day.iter() {
                flat.push(v);
                flat_w.push(weights[r]);
            }
        }
        let cap = if series.kind.is_cf() { Some(1.0) } else { None };
        let outcome = scale::rescale_weighted(&flat, &flat_w, target, cap)
            .map_err(|e| RepDaysError::Scale { series: series.series_id.clone(), source: e })?;
        let achieved = {
            let num: f64 = outcome.values.iter().zip(&flat_w).map(|(v, w)| v * w).sum();
            let den: f64 = flat_w.iter().sum();
            num / den
        };
        for (r, day) in series.days.iter_mut().enumerate() {
            for (h, v) in day.iter_mut().enumerate() {
                *v = outcome.values[r * 24 + h];
            }
        }
        series.scale_factor = outcome.factor;
        series.clipped = outcome.clipped;
        report.push(SeriesScale {
            series_id: series.series_id.clone(),
            factor: outcome.factor,
            clipped: outcome.clipped,
            iterations: outcome.iterations,
            target_mean: target,
            achieved_mean: achieved,
        });
    }
    Ok(report)
}

/// Per-series duration-curve fidelity of a representative-day set.
#[derive(Debug, Clone)]
pub struct CurveError {
    pub series_id: String,
    pub rmse: f64,
    pub max_abs_dev: f64,
}

/// Compares each series' full-year duration curve (values sorted descending)
/// with the weight-expanded representative curve. Zero iff the curves are
/// identical, which holds exactly when every day is its own cluster.
pub fn duration_curve_error(
    profiles: &[HourlyProfile],
    set: &RepDaySet,
) -> Result<Vec<CurveError>, RepDaysError> {
    let mut out = Vec::with_capacity(set.series.len());
    for series in &set.series {
        let profile = profiles
            .iter()
            .find(|p| p.series_id == series.series_id)
            .ok_or_else(|| RepDaysError::UnknownSeries { series: series.series_id.clone() })?;

        let mut full = profile.values.clone();
        full.sort_by(|a, b| b.total_cmp(a));

        let mut expanded = Vec::with_capacity(full.len());
        for (r, day) in series.days.iter().enumerate() {
            let copies = set.weights[r].round() as usize;
            for _ in 0..copies {
                expanded.extend_from_slice(day);
            }
        }
        if expanded.len() != full.len() {
            return Err(RepDaysError::AssignmentInvalid {
                msg: format!(
                    "expanded curve has {} hours, source has {}",
                    expanded.len(),
                    full.len()
                ),
            });
        }
        expanded.sort_by(|a, b| b.total_cmp(a));

        let mut sq = 0.0;
        let mut max_dev = 0.0f64;
        for (a, b) in full.iter().zip(&expanded) {
            let d = a - b;
            sq += d * d;
            max_dev = max_dev.max(d.abs());
        }
        out.push(CurveError {
            series_id: series.series_id.clone(),
            rmse: (sq / full.len() as f64).sqrt(),
            max_abs_dev: max_dev,
        });
    }
    Ok(out)
}

/// Writes `rep_day,weight,hour,<series>...` rows, one per representative hour.
pub fn write_repdays_csv(set: &RepDaySet, path: &Path) -> Result<(), RepDaysError> {
    let mut buf = String::new();
    buf.push_str("rep_day,weight,hour");
    for s in &set.series {
        buf.push(',');
        buf.push_str(&s.series_id);
    }
    buf.push('\n');
    for r in 0..set.k {
        for h in 0..24 {
            buf.push_str(&format!("{},{},{}", set.day_indices[r], set.weights[r], h));
            for s in &set.series {
                buf.push_str(&format!(",{}", s.days[r][h]));
            }
            buf.push('\n');
        }
    }
    write_text(path, &buf)
}

/// Writes the per-series error metrics and scale factors.
pub fn write_metrics_csv(
    errors: &[CurveError],
    scales: &[SeriesScale],
    path: &Path,
) -> Result<(), RepDaysError> {
    let mut buf = String::from("series,rmse,max_abs_dev,scale_factor,clipped\n");
    for e in errors {
        let scale = scales.iter().find(|s| s.series_id == e.series_id);
        let (factor, clipped) = scale.map(|s| (s.factor, s.clipped)).unwrap_or((1.0, false));
        buf.push_str(&format!(
            "{},{},{},{},{}\n",
            e.series_id, e.rmse, e.max_abs_dev, factor, clipped
        ));
    }
    write_text(path, &buf)
}

fn write_text(path: &Path, text: &str) -> Result<(), RepDaysError> {
    let mut f = fs::File::create(path)
        .map_err(|e| RepDaysError::Io { path: path.display().to_string(), source: e })?;
    f.write_all(text.as_bytes())
        .map_err(|e| RepDaysError::Io { path: path.display().to_string(), source: e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::build_day_features;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// A full synthetic year: smooth seasonal + diurnal demand, correlated
    /// wind and solar shapes, plus seeded noise.
    fn synthetic_year(seed: u64) -> Vec<HourlyProfile> {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut demand = Vec::with_capacity(8760);
        let mut wind = Vec::with_capacity(8760);
        let mut solar = Vec::with_capacity(8760);
        for d in 0..365usize {
            let season = (d as f64 / 365.0 * std::f64::consts::TAU).cos();
            for h in 0..24usize {
                let diurnal = ((h as f64 - 6.0) / 24.0 * std::f64::consts::TAU).sin();
                demand.push(900.0 + 150.0 * season + 120.0 * diurnal + rng.gen_range(-30.0..30.0));
                let w = 0.35 + 0.2 * season - 0.1 * diurnal + rng.gen_range(-0.08..0.08);
                wind.push(w.clamp(0.0, 1.0));
                let s = if (6..19).contains(&h) {
                    (0.6 - 0.25 * season) * (1.0 - ((h as f64 - 12.5) / 6.5).powi(2)).max(0.0)
                } else {
                    0.0
                };
                solar.push((s + rng.gen_range(-0.02..0.02)).clamp(0.0, 1.0));
            }
        }
        vec![
            HourlyProfile::new("demand_X", "X", SeriesKind::Demand, demand).unwrap(),
            HourlyProfile::new("wind_X", "X", SeriesKind::WindCf, wind).unwrap(),
            HourlyProfile::new("solar_X", "X", SeriesKind::SolarCf, solar).unwrap(),
        ]
    }

    /// Six days consisting of three distinct patterns, each duplicated.
    fn three_pairs_matrix() -> DayFeatureMatrix {
        let mut values = Vec::with_capacity(8760);
        let patterns = [10.0, 40.0, 90.0];
        for d in 0..365usize {
            // Only the first six days matter for the test; keep the rest flat.
            let level = if d < 6 { patterns[d / 2] } else { 60.0 };
            for h in 0..24usize {
                values.push(level + h as f64);
            }
        }
        let p = HourlyProfile::new("demand_X", "X", SeriesKind::Demand, values).unwrap();
        build_day_features(&[p]).unwrap()
    }

    #[test]
    fn k_equal_n_gives_singletons_and_identity() {
        let profiles = synthetic_year(7);
        let matrix = build_day_features(&profiles).unwrap();
        let assignment = cluster_days(&matrix, 365).unwrap();
        for (d, &label) in assignment.iter().enumerate() {
            assert_eq!(label, d);
        }
        let set = pick_representatives(&matrix, &assignment).unwrap();
        assert_eq!(set.day_indices, (0..365).collect::<Vec<_>>());
        assert!(set.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn duplicated_patterns_pair_up_and_match_partition_oracle() {
        let matrix = three_pairs_matrix();
        // Cluster only the first six days by building a matrix restricted to
        // them.
        let mut small = matrix.clone();
        small.n_days = 6;
        small.rows.truncate(6);
        small.raw.truncate(6);
        let assignment = cluster_days(&small, 3).unwrap();
        assert_eq!(assignment.len(), 6);
        assert_eq!(assignment[0], assignment[1]);
        assert_eq!(assignment[2], assignment[3]);
        assert_eq!(assignment[4], assignment[5]);
        assert_ne!(assignment[0], assignment[2]);
        assert_ne!(assignment[2], assignment[4]);

        // Exhaustive oracle: our partition minimizes total within-cluster sum
        // of squares over every partition of 6 days into 3 non-empty parts.
        let ess = |parts: &[Vec<usize>]| -> f64 {
            let dim = small.rows[0].len();
            let mut total = 0.0;
            for part in parts {
                let mut mean = vec![0.0; dim];
                for &d in part {
                    for (m, v) in mean.iter_mut().zip(&small.rows[d]) {
                        *m += v;
                    }
                }
                for m in mean.iter_mut() {
                    *m /= part.len() as f64;
                }
                for &d in part {
                    for (m, v) in mean.iter().zip(&small.rows[d]) {
                        let diff = v - m;
                        total += diff * diff;
                    }
                }
            }
            total
        };
        let ours: Vec<Vec<usize>> = (0..3)
            .map(|label| (0..6).filter(|&d| assignment[d] == label).collect())
            .collect();
        let ours_ess = ess(&ours);
        // Enumerate set partitions of {0..5} into exactly 3 blocks.
        let mut best = f64::INFINITY;
        let mut stack: Vec<Vec<Vec<usize>>> = vec![vec![vec![0]]];
        while let Some(parts) = stack.pop() {
            let next = parts.iter().map(|p| p.len()).sum::<usize>();
            if next == 6 {
                if parts.len() == 3 {
                    best = best.min(ess(&parts));
                }
                continue;
            }
            for i in 0..parts.len() {
                let mut p2 = parts.clone();
                p2[i].push(next);
                stack.push(p2);
            }
            if parts.len() < 3 {
                let mut p2 = parts.clone();
                p2.push(vec![next]);
                stack.push(p2);
            }
        }
        assert!(
            ours_ess <= best + 1e-12,
            "clustering ESS {ours_ess} exceeds exhaustive minimum {best}"
        );
    }

    #[test]
    fn full_year_weights_sum_to_day_count() {
        let profiles = synthetic_year(3);
        let matrix = build_day_features(&profiles).unwrap();
        let assignment = cluster_days(&matrix, 15).unwrap();
        let set = pick_representatives(&matrix, &assignment).unwrap();
        assert_eq!(set.k, 15);
        let total: f64 = set.weights.iter().sum();
        assert_eq!(total, 365.0);
        assert!(set.weights.iter().all(|&w| w >= 1.0));
    }

    #[test]
    fn rescale_factor_matches_weighted_mean_formula() {
        // Build a two-representative set directly and check the factor
        // against the closed form target / weighted_mean.
        let mut day_a = [0.0; 24];
        let mut day_b = [0.0; 24];
        day_a.fill(0.5);
        day_b.fill(0.3);
        let mut set = RepDaySet {
            k: 2,
            n_source_days: 365,
            day_indices: vec![10, 200],
            weights: vec![200.0, 165.0],
            series: vec![RepSeries {
                series_id: "demand_X".to_string(),
                kind: SeriesKind::Demand,
                days: vec![day_a, day_b],
                scale_factor: 1.0,
                clipped: false,
            }],
        };
        let profile =
            HourlyProfile::new("demand_X", "X", SeriesKind::Demand, vec![0.45; 8760]).unwrap();
        let report = rescale_to_annual_means(&mut set, &[profile]).unwrap();
        let expected = 0.45 / ((200.0 * 0.5 + 165.0 * 0.3) / 365.0);
        assert!((report[0].factor - expected).abs() < 1e-12);
        // Weighted mean after scaling equals the target.
        let mean: f64 = (0..2).map(|r| set.weights[r] * set.series[0].days[r][0]).sum::<f64>() / 365.0;
        assert!((mean - 0.45).abs() < 1e-9);
    }

    #[test]
    fn rescaled_weighted_means_match_source_within_1e9() {
        let profiles = synthetic_year(11);
        let matrix = build_day_features(&profiles).unwrap();
        let assignment = cluster_days(&matrix, 15).unwrap();
        let mut set = pick_representatives(&matrix, &assignment).unwrap();
        let report = rescale_to_annual_means(&mut set, &profiles).unwrap();
        for r in &report {
            let tol = if r.clipped { 1e-6 } else { 1e-9 };
            assert!(
                (r.achieved_mean - r.target_mean).abs() <= tol,
                "series {} mean {} target {}",
                r.series_id,
                r.achieved_mean,
                r.target_mean
            );
        }
    }

    #[test]
    fn lossless_set_has_factor_one_and_zero_curve_error() {
        let profiles = synthetic_year(5);
        let matrix = build_day_features(&profiles).unwrap();
        let assignment = cluster_days(&matrix, 365).unwrap();
        let mut set = pick_representatives(&matrix, &assignment).unwrap();
        let report = rescale_to_annual_means(&mut set, &profiles).unwrap();
        for r in &report {
            assert_eq!(r.factor, 1.0, "series {} factor {}", r.series_id, r.factor);
            assert!(!r.clipped);
        }
        let errors = duration_curve_error(&profiles, &set).unwrap();
        for e in &errors {
            assert_eq!(e.rmse, 0.0, "series {}", e.series_id);
            assert_eq!(e.max_abs_dev, 0.0, "series {}", e.series_id);
        }
    }

    #[test]
    fn more_clusters_fit_duration_curves_at_least_as_well() {
        let profiles = synthetic_year(23);
        let matrix = build_day_features(&profiles).unwrap();
        let mut rmse_by_k = Vec::new();
        for k in [5usize, 15] {
            let assignment = cluster_days(&matrix, k).unwrap();
            let mut set = pick_representatives(&matrix, &assignment).unwrap();
            rescale_to_annual_means(&mut set, &profiles).unwrap();
            let errors = duration_curve_error(&profiles, &set).unwrap();
            rmse_by_k.push(errors);
        }
        for (e5, e15) in rmse_by_k[0].iter().zip(&rmse_by_k[1]) {
            assert!(
                e15.rmse <= e5.rmse + 1e-12,
                "series {}: rmse(k=15)={} > rmse(k=5)={}",
                e5.series_id,
                e15.rmse,
                e5.rmse
            );
        }
    }

    #[test]
    fn clustering_is_deterministic() {
        let profiles = synthetic_year(42);
        let matrix = build_day_features(&profiles).unwrap();
        let a = cluster_days(&matrix, 12).unwrap();
        let b = cluster_days(&matrix, 12).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn partition_is_invariant_under_day_permutation() {
        // Cluster a small set of distinct vectors, then cluster a permuted
        // copy and compare the induced partitions of the vectors themselves.
        let mut rng = StdRng::seed_from_u64(99);
        let n = 12;
        let mut values = Vec::with_capacity(8760);
        let levels: Vec<f64> = (0..n).map(|_| rng.gen_range(10.0..100.0)).collect();
        for d in 0..365usize {
            let level = if d < n { levels[d] } else { 55.0 };
            for h in 0..24usize {
                values.push(level + (h as f64) * 0.1);
            }
        }
        let p = HourlyProfile::new("demand_X", "X", SeriesKind::Demand, values).unwrap();
        let matrix = build_day_features(&[p]).unwrap();
        let mut small = matrix.clone();
        small.n_days = n;
        small.rows.truncate(n);
        small.raw.truncate(n);

        let perm: Vec<usize> = vec![7, 2, 9, 0, 4, 11, 1, 8, 3, 10, 6, 5];
        let mut shuffled = small.clone();
        for (new_d, &old_d) in perm.iter().enumerate() {
            shuffled.rows[new_d] = small.rows[old_d].clone();
            shuffled.raw[new_d] = small.raw[old_d].clone();
        }

        let a = cluster_days(&small, 4).unwrap();
        let b = cluster_days(&shuffled, 4).unwrap();
        // Partition as sets of original day ids.
        let canon = |assignment: &[usize], map: &dyn Fn(usize) -> usize| {
            let k = assignment.iter().max().unwrap() + 1;
            let mut parts: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (d, &label) in assignment.iter().enumerate() {
                parts[label].push(map(d));
            }
            for p in parts.iter_mut() {
                p.sort_unstable();
            }
            parts.sort();
            parts
        };
        let pa = canon(&a, &|d| d);
        let pb = canon(&b, &|d| perm[d]);
        assert_eq!(pa, pb);
    }

    #[test]
    fn k_out_of_range_is_an_error() {
        let profiles = synthetic_year(1);
        let matrix = build_day_features(&profiles).unwrap();
        assert!(matches!(cluster_days(&matrix, 0), Err(RepDaysError::KOutOfRange { .. })));
        assert!(matches!(cluster_days(&matrix, 366), Err(RepDaysError::KOutOfRange { .. })));
    }

    #[test]
    fn representative_is_brute_force_nearest_to_mean() {
        // Three distinct vectors in one cluster: the representative must be
        // the one closest to the mean, recomputed here directly.
        let mut values = Vec::with_capacity(8760);
        for d in 0..365usize {
            let level = match d {
                0 => 10.0,
                1 => 20.0,
                2 => 26.0,
                _ => 1000.0,
            };
            for _h in 0..24usize {
                values.push(level);
            }
        }
        let p = HourlyProfile::new("demand_X", "X", SeriesKind::Demand, values).unwrap();
        let matrix = build_day_features(&[p]).unwrap();
        let mut small = matrix.clone();
        small.n_days = 3;
        small.rows.truncate(3);
        small.raw.truncate(3);
        let set = pick_representatives(&small, &[0, 0, 0]).unwrap();
        // Mean level is (10+20+26)/3 = 18.667 -> day 1 (level 20) is nearest.
        assert_eq!(set.day_indices, vec![1]);
        assert_eq!(set.weights, vec![3.0]);
    }

    #[test]
    fn singleton_cluster_represents_itself() {
        let profiles = synthetic_year(2);
        let matrix = build_day_features(&profiles).unwrap();
        let mut assignment = vec![0usize; 365];
        assignment[100] = 1; // day 100 is its own cluster
        for (d, a) in assignment.iter_mut().enumerate() {
            if d != 100 {
                *a = 0;
            }
        }
        let set = pick_representatives(&matrix, &assignment).unwrap();
        assert_eq!(set.k, 2);
        assert_eq!(set.day_indices[1], 100);
        assert_eq!(set.weights[1], 1.0);
    }
}
