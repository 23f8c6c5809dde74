//! Hourly input profiles and per-day feature construction.
//!
//! Profiles arrive as one CSV with a `hour` column and one column per series.
//! Column names follow `<kind>_<region>` where the kind prefix is one of
//! `demand`, `wind` or `solar` (e.g. `demand_BA`, `wind_ME`). Demand is in MW;
//! capacity factors are dimensionless in `[0, 1]`.

use std::fmt;
use std::fs;
use std::path::Path;

/// What a series measures; decides validation and whether rescaling may clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Demand,
    WindCf,
    SolarCf,
}

impl SeriesKind {
    /// Capacity-factor series are bounded by 1.0 and may be clipped.
    pub fn is_cf(self) -> bool {
        matches!(self, SeriesKind::WindCf | SeriesKind::SolarCf)
    }

    fn from_id(id: &str) -> Option<SeriesKind> {
        let lower = id.to_ascii_lowercase();
        if lower.starts_with("demand") {
            Some(SeriesKind::Demand)
        } else if lower.starts_with("wind") {
            Some(SeriesKind::WindCf)
        } else if lower.starts_with("solar") {
            Some(SeriesKind::SolarCf)
        } else {
            None
        }
    }
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesKind::Demand => write!(f, "demand"),
            SeriesKind::WindCf => write!(f, "wind_cf"),
            SeriesKind::SolarCf => write!(f, "solar_cf"),
        }
    }
}

#[derive(Debug)]
pub enum SeriesError {
    Io { path: String, source: std::io::Error },
    Parse { path: String, msg: String },
    /// Series length is not a whole non-leap or leap year of hours.
    BadLength { series: String, len: usize },
    MismatchedLengths { a: String, b: String, len_a: usize, len_b: usize },
    OutOfRange { series: String, index: usize, value: f64 },
    /// A series of all zeros cannot be peak-normalized.
    AllZero { series: String },
    UnknownKind { column: String },
    NoProfiles,
}

impl fmt::Display for SeriesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesError::Io { path, source } => write!(f, "cannot read {path}: {source}"),
            SeriesError::Parse { path, msg } => write!(f, "cannot parse {path}: {msg}"),
            SeriesError::BadLength { series, len } => {
                write!(f, "series {series} has {len} values, expected 8760 or 8784")
            }
            SeriesError::MismatchedLengths { a, b, len_a, len_b } => {
                write!(f, "series lengths differ: {a} has {len_a}, {b} has {len_b}")
            }
            SeriesError::OutOfRange { series, index, value } => {
                write!(f, "series {series} value {value} at hour {index} is out of range")
            }
            SeriesError::AllZero { series } => {
                write!(f, "series {series} is all zeros and cannot be normalized")
            }
            SeriesError::UnknownKind { column } => write!(
                f,
                "column {column} does not start with demand/wind/solar; cannot infer its kind"
            ),
            SeriesError::NoProfiles => write!(f, "at least one profile is required"),
        }
    }
}

impl std::error::Error for SeriesError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            SeriesError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// One year of hourly values for a named series in a region.
#[derive(Debug, Clone)]
pub struct HourlyProfile {
    pub series_id: String,
    pub region: String,
    pub kind: SeriesKind,
    pub values: Vec<f64>,
}

impl HourlyProfile {
    /// Validates length (8760 or 8784 hours), non-negativity, and the `[0,1]`
    /// range for capacity-factor kinds.
    pub fn new(
        series_id: &str,
        region: &str,
        kind: SeriesKind,
        values: Vec<f64>,
    ) -> Result<HourlyProfile, SeriesError> {
        if values.len() != 8760 && values.len() != 8784 {
            return Err(SeriesError::BadLength { series: series_id.to_string(), len: values.len() });
        }
        let upper = if kind.is_cf() { 1.0 } else { f64::INFINITY };
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 || v > upper {
                return Err(SeriesError::OutOfRange {
                    series: series_id.to_string(),
                    index: i,
                    value: v,
                });
            }
        }
        Ok(HourlyProfile { series_id: series_id.to_string(), region: region.to_string(), kind, values })
    }

    pub fn n_days(&self) -> usize {
        self.values.len() / 24
    }

    /// Annual mean as a plain left-to-right sum. Weighted aggregations that
    /// visit values in the same order reproduce it bit-for-bit, which keeps
    /// the lossless (one cluster per day) rescale factor at exactly 1.0.
    pub fn annual_mean(&self) -> f64 {
        let total: f64 = self.values.iter().sum();
        total / self.values.len() as f64
    }
}

/// Parses `<kind>_<region>` column ids; region is everything after the first
/// underscore (empty when absent).
fn split_series_id(id: &str) -> Result<(SeriesKind, String), SeriesError> {
    let kind = SeriesKind::from_id(id).ok_or_else(|| SeriesError::UnknownKind { column: id.to_string() })?;
    let region = id.split_once('_').map(|(_, r)| r.to_string()).unwrap_or_default();
    Ok((kind, region))
}

/// Reads an hourly profile CSV (`hour,<series_id>...`) and validates every
/// column.
pub fn read_profiles_csv(path: &Path) -> Result<Vec<HourlyProfile>, SeriesError> {
    let text = fs::read_to_string(path)
        .map_err(|e| SeriesError::Io { path: path.display().to_string(), source: e })?;
    read_profiles_str(&text, &path.display().to_string())
}

/// CSV parsing split out for tests; `origin` labels error messages.
pub fn read_profiles_str(text: &str, origin: &str) -> Result<Vec<HourlyProfile>, SeriesError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| SeriesError::Parse { path: origin.to_string(), msg: e.to_string() })?
        .clone();
    if headers.is_empty() || headers.get(0) != Some("hour") {
        return Err(SeriesError::Parse {
            path: origin.to_string(),
            msg: "first column must be `hour`".to_string(),
        });
    }
    let ids: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    if ids.is_empty() {
        return Err(SeriesError::NoProfiles);
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    for (line, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| SeriesError::Parse { path: origin.to_string(), msg: e.to_string() })?;
        if record.len() != ids.len() + 1 {
            return Err(SeriesError::Parse {
                path: origin.to_string(),
                msg: format!("row {} has {} fields, expected {}", line + 2, record.len(), ids.len() + 1),
            });
        }
        for (c, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| SeriesError::Parse {
                path: origin.to_string(),
                msg: format!("row {} column {}: `{field}` is not a number", line + 2, ids[c]),
            })?;
            columns[c].push(v);
        }
    }
    let mut profiles = Vec::with_capacity(ids.len());
    for (id, values) in ids.iter().zip(columns) {
        let (kind, region) = split_series_id(id)?;
        profiles.push(HourlyProfile::new(id, &region, kind, values)?);
    }
    Ok(profiles)
}

/// Per-day feature rows used by the clustering step: day `d` becomes the
/// concatenation of every series' 24 hourly values normalized by that series'
/// annual peak. `raw` keeps the unnormalized values so representatives can be
/// emitted exactly as they appear in the source data.
#[derive(Debug, Clone)]
pub struct DayFeatureMatrix {
    pub n_days: usize,
    pub n_series: usize,
    pub series_ids: Vec<String>,
    pub kinds: Vec<SeriesKind>,
    /// `n_days` rows of `24 * n_series` peak-normalized values in `[0, 1]`.
    pub rows: Vec<Vec<f64>>,
    /// Unnormalized counterpart of `rows`, same shape.
    pub raw: Vec<Vec<f64>>,
    /// Per-series annual peak used as the normalization constant.
    pub norms: Vec<f64>,
}

/// Builds the day-feature matrix from one or more profiles sharing a year
/// length.
pub fn build_day_features(profiles: &[HourlyProfile]) -> Result<DayFeatureMatrix, SeriesError> {
    let first = profiles.first().ok_or(SeriesError::NoProfiles)?;
    let len = first.values.len();
    for p in profiles {
        if p.values.len() != len {
            return Err(SeriesError::MismatchedLengths {
                a: first.series_id.clone(),
                b: p.series_id.clone(),
                len_a: len,
                len_b: p.values.len(),
            });
        }
    }
    let n_days = len / 24;
    let n_series = profiles.len();
    let mut norms = Vec::with_capacity(n_series);
    for p in profiles {
        let peak = p.values.iter().copied().fold(0.0f64, f64::max);
        if peak <= 0.0 {
            return Err(SeriesError::AllZero { series: p.series_id.clone() });
        }
        norms.push(peak);
    }
    let mut rows = vec![vec![0.0; 24 * n_series]; n_days];
    let mut raw = vec![vec![0.0; 24 * n_series]; n_days];
    for (s, p) in profiles.iter().enumerate() {
        for d in 0..n_days {
            for h in 0..24 {
                let v = p.values[d * 24 + h];
                rows[d][s * 24 + h] = v / norms[s];
                raw[d][s * 24 + h] = v;
            }
        }
    }
    Ok(DayFeatureMatrix {
        n_days,
        n_series,
        series_ids: profiles.iter().map(|p| p.series_id.clone()).collect(),
        kinds: profiles.iter().map(|p| p.kind).collect(),
        rows,
        raw,
        norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_profile(id: &str, kind: SeriesKind, value: f64, len: usize) -> HourlyProfile {
        HourlyProfile::new(id, "R", kind, vec![value; len]).unwrap()
    }

    #[test]
    fn length_validation_rejects_partial_years() {
        let err = HourlyProfile::new("demand_A", "A", SeriesKind::Demand, vec![1.0; 100]);
        assert!(matches!(err, Err(SeriesError::BadLength { len: 100, .. })));
        assert!(HourlyProfile::new("demand_A", "A", SeriesKind::Demand, vec![1.0; 8760]).is_ok());
        assert!(HourlyProfile::new("demand_A", "A", SeriesKind::Demand, vec![1.0; 8784]).is_ok());
    }

    #[test]
    fn cf_range_enforced() {
        let mut values = vec![0.5; 8760];
        values[7] = 1.2;
        let err = HourlyProfile::new("wind_A", "A", SeriesKind::WindCf, values);
        assert!(matches!(err, Err(SeriesError::OutOfRange { index: 7, .. })));
    }

    #[test]
    fn constant_series_normalizes_to_ones() {
        let p = flat_profile("demand_A", SeriesKind::Demand, 5.0, 8760);
        let m = build_day_features(&[p]).unwrap();
        assert_eq!(m.n_days, 365);
        assert!(m.rows.iter().all(|r| r.iter().all(|&v| v == 1.0)));
        assert_eq!(m.norms, vec![5.0]);
    }

    #[test]
    fn matrix_shape_is_days_by_24_per_series() {
        let ps = vec![
            flat_profile("demand_A", SeriesKind::Demand, 2.0, 8760),
            flat_profile("wind_A", SeriesKind::WindCf, 0.5, 8760),
            flat_profile("solar_A", SeriesKind::SolarCf, 0.3, 8760),
        ];
        let m = build_day_features(&ps).unwrap();
        assert_eq!(m.rows.len(), 365);
        assert_eq!(m.rows[0].len(), 72);
        assert_eq!(m.n_series, 3);
    }

    #[test]
    fn peak_hour_maps_to_one() {
        let mut values = vec![100.0; 8760];
        values[30 * 24 + 13] = 200.0; // day 30, hour 13
        let p = HourlyProfile::new("demand_A", "A", SeriesKind::Demand, values).unwrap();
        let m = build_day_features(&[p]).unwrap();
        assert_eq!(m.rows[30][13], 1.0);
        assert_eq!(m.raw[30][13], 200.0);
        assert_eq!(m.rows[0][0], 0.5);
    }

    #[test]
    fn all_zero_series_is_rejected_by_name() {
        let ps = vec![
            flat_profile("demand_A", SeriesKind::Demand, 2.0, 8760),
            flat_profile("wind_A", SeriesKind::WindCf, 0.0, 8760),
        ];
        match build_day_features(&ps) {
            Err(SeriesError::AllZero { series }) => assert_eq!(series, "wind_A"),
            other => panic!("expected AllZero, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let ps = vec![
            flat_profile("demand_A", SeriesKind::Demand, 2.0, 8760),
            flat_profile("wind_A", SeriesKind::WindCf, 0.5, 8784),
        ];
        assert!(matches!(build_day_features(&ps), Err(SeriesError::MismatchedLengths { .. })));
    }

    #[test]
    fn csv_roundtrip_parses_kinds_and_regions() {
        let mut text = String::from("hour,demand_BA,wind_ME,solar_RS\n");
        for h in 0..8760 {
            text.push_str(&format!("{h},10.5,0.25,0.1\n"));
        }
        let ps = read_profiles_str(&text, "mem").unwrap();
        assert_eq!(ps.len(), 3);
        assert_eq!(ps[0].kind, SeriesKind::Demand);
        assert_eq!(ps[0].region, "BA");
        assert_eq!(ps[1].kind, SeriesKind::WindCf);
        assert_eq!(ps[1].region, "ME");
        assert_eq!(ps[2].kind, SeriesKind::SolarCf);
        assert_eq!(ps[2].values.len(), 8760);
    }

    #[test]
    fn csv_unknown_column_kind_is_an_error() {
        let mut text = String::from("hour,pressure_BA\n");
        for h in 0..8760 {
            text.push_str(&format!("{h},1.0\n"));
        }
        match read_profiles_str(&text, "mem") {
            Err(SeriesError::UnknownKind { column }) => assert_eq!(column, "pressure_BA"),
            other => panic!("expected UnknownKind, got {other:?}"),
        }
    }
}
