//! Wind and solar resource characterization over a gridded land inventory.
//!
//! Land cells carry a class (shared wind+solar land, agricultural land, or
//! excluded), an area, and a bounding box. A capacity-factor raster is
//! sampled with a jittered stratified lattice inside each cell to estimate
//! how the cell's area splits across capacity-factor bins; land below the
//! lowest bin edge is excluded from wind but — on shared land — still counts
//! toward ground-mounted solar. Capacity potential converts area at a fixed
//! power density.
//!
//! Units: areas in km², capacity in MW (summaries in GW), capacity factors
//! dimensionless in [0, 1].

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scale::{self, ScaleError, ScaleOutcome};

/// Installable wind capacity per square kilometre of eligible land.
pub const MW_PER_KM2: f64 = 1.7;
/// Land claimed per megawatt of installed capacity (inverse density, as used
/// for land-budget accounting).
pub const KM2_PER_MW: f64 = 0.588;

#[derive(Debug)]
pub enum VreError {
    Io { path: String, source: std::io::Error },
    Parse { path: String, msg: String },
    NegativeArea { area_km2: f64 },
    DuplicateCell { cell_id: String },
    BadCell { cell_id: String, msg: String },
    UnknownLandClass { token: String },
    EmptyRaster,
    BadRasterPoint { index: usize, msg: String },
    BadShares { msg: String },
}

impl fmt::Display for VreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VreError::Io { path, source } => write!(f, "{path}: {source}"),
            VreError::Parse { path, msg } => write!(f, "{path}: {msg}"),
            VreError::NegativeArea { area_km2 } => {
                write!(f, "area must be non-negative, got {area_km2} km^2")
            }
            VreError::DuplicateCell { cell_id } => write!(f, "duplicate cell id {cell_id}"),
            VreError::BadCell { cell_id, msg } => write!(f, "cell {cell_id}: {msg}"),
            VreError::UnknownLandClass { token } => write!(f, "unknown land class {token:?}"),
            VreError::EmptyRaster => write!(f, "capacity-factor raster has no points"),
            VreError::BadRasterPoint { index, msg } => write!(f, "raster point {index}: {msg}"),
            VreError::BadShares { msg } => write!(f, "bad shares: {msg}"),
        }
    }
}

impl std::error::Error for VreError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            VreError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// How a land cell may be used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LandClass {
    /// Open land available to both wind and solar.
    Shared,
    /// Farmland; hosts wind only when the scenario allows it.
    Agricultural,
    /// Not available to either technology.
    Excluded,
}

impl LandClass {
    pub fn parse(token: &str) -> Result<Self, VreError> {
        match token.to_ascii_lowercase().as_str() {
            "shared" => Ok(LandClass::Shared),
            "agricultural" | "agri" => Ok(LandClass::Agricultural),
            "excluded" => Ok(LandClass::Excluded),
            _ => Err(VreError::UnknownLandClass { token: token.to_string() }),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LandClass::Shared => "shared",
            LandClass::Agricultural => "agricultural",
            LandClass::Excluded => "excluded",
        }
    }
}

/// One inventory cell. The bounding box fixes where raster samples are drawn;
/// `area_km2` is the cell's projected ground area and need not equal the
/// box's nominal extent.
#[derive(Debug, Clone)]
pub struct LandCell {
    pub cell_id: String,
    pub region: String,
    pub land_class: LandClass,
    pub area_km2: f64,
    pub lon_min: f64,
    pub lat_min: f64,
    pub lon_max: f64,
    pub lat_max: f64,
}

/// All cells, kept sorted by `cell_id` so per-cell random streams are stable
/// regardless of input row order.
#[derive(Debug, Clone, Default)]
pub struct LandGrid {
    pub cells: Vec<LandCell>,
}

impl LandGrid {
    pub fn new(mut cells: Vec<LandCell>) -> Result<Self, VreError> {
        for c in &cells {
            if c.area_km2 < 0.0 || !c.area_km2.is_finite() {
                return Err(VreError::NegativeArea { area_km2: c.area_km2 });
            }
            if !(c.lon_min < c.lon_max && c.lat_min < c.lat_max) {
                return Err(VreError::BadCell {
                    cell_id: c.cell_id.clone(),
                    msg: "bounding box must have positive extent".to_string(),
                });
            }
        }
        cells.sort_by(|a, b| a.cell_id.cmp(&b.cell_id));
        let mut seen = BTreeSet::new();
        for c in &cells {
            if !seen.insert(c.cell_id.clone()) {
                return Err(VreError::DuplicateCell { cell_id: c.cell_id.clone() });
            }
        }
        Ok(LandGrid { cells })
    }

    pub fn regions(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.cells.iter().map(|c| c.region.as_str()).collect();
        set.into_iter().map(|s| s.to_string()).collect()
    }
}

/// Total area of a region's cells restricted to the given classes.
pub fn eligible_area(grid: &LandGrid, region: &str, classes: &[LandClass]) -> f64 {
    grid.cells
        .iter()
        .filter(|c| c.region == region && classes.contains(&c.land_class))
        .map(|c| c.area_km2)
        .sum()
}

/// Wind capacity installable on `area_km2` of eligible land.
pub fn capacity_potential_mw(area_km2: f64) -> Result<f64, VreError> {
    if area_km2 < 0.0 || !area_km2.is_finite() {
        return Err(VreError::NegativeArea { area_km2 });
    }
    Ok(area_km2 * MW_PER_KM2)
}

/// A point sample of the long-run capacity factor at a location.
#[derive(Debug, Clone, Copy)]
pub struct RasterPoint {
    pub lon: f64,
    pub lat: f64,
    pub cf: f64,
}

/// Scattered capacity-factor observations; lookups take the nearest point
/// (ties resolved to the lowest input index).
#[derive(Debug, Clone)]
pub struct CfRaster {
    pub points: Vec<RasterPoint>,
}

impl CfRaster {
    pub fn new(points: Vec<RasterPoint>) -> Result<Self, VreError> {
        if points.is_empty() {
            return Err(VreError::EmptyRaster);
        }
        for (i, p) in points.iter().enumerate() {
            if !p.cf.is_finite() || !(0.0..=1.0).contains(&p.cf) {
                return Err(VreError::BadRasterPoint {
                    index: i,
                    msg: format!("capacity factor {} outside [0, 1]", p.cf),
                });
            }
            if !p.lon.is_finite() || !p.lat.is_finite() {
                return Err(VreError::BadRasterPoint {
                    index: i,
                    msg: "non-finite coordinate".to_string(),
                });
            }
        }
        Ok(CfRaster { points })
    }

    /// Capacity factor at the raster point nearest to (lon, lat).
    pub fn nearest_cf(&self, lon: f64, lat: f64) -> f64 {
        let mut best = 0usize;
        let mut best_d2 = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let dx = p.lon - lon;
            let dy = p.lat - lat;
            let d2 = dx * dx + dy * dy;
            if d2 < best_d2 {
                best_d2 = d2;
                best = i;
            }
        }
        self.points[best].cf
    }
}

/// Capacity-factor bin boundaries. `edges[0]` is the eligibility floor:
/// samples below it are excluded from wind development. Bin `i` covers
/// `[edges[i], edges[i+1])`, except the last bin which is closed above.
#[derive(Debug, Clone)]
pub struct CfBinSpec {
    pub edges: Vec<f64>,
}

impl Default for CfBinSpec {
    fn default() -> Self {
        CfBinSpec { edges: vec![0.10, 0.20, 0.30, 0.40, 1.0] }
    }
}

impl CfBinSpec {
    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bin index for a capacity factor, or `None` when below the floor.
    pub fn bin_of(&self, cf: f64) -> Option<usize> {
        if cf < self.edges[0] {
            return None;
        }
        for i in 0..self.n_bins() {
            let hi = self.edges[i + 1];
            let last = i + 1 == self.edges.len() - 1;
            if cf < hi || (last && cf <= hi) {
                return Some(i);
            }
        }
        Some(self.n_bins() - 1)
    }

    pub fn label(&self, bin: usize) -> String {
        format!("{:.2}-{:.2}", self.edges[bin], self.edges[bin + 1])
    }
}

/// Estimated split of a cell's area across capacity-factor bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinShares {
    /// Fraction of the cell in each bin; together with `excluded_share`
    /// these sum to 1.
    pub shares: Vec<f64>,
    pub excluded_share: f64,
    /// Mean sampled capacity factor per bin (0 where a bin got no samples).
    pub avg_cf: Vec<f64>,
    pub n_samples: usize,
}

/// Samples the raster on a jittered `s x s` lattice inside the cell's box,
/// where `s` is the nearest integer to sqrt(n_points), and bins the results.
/// The RNG is consumed in a fixed order (row-major, jitter lon then lat), so
/// a given generator state always yields the same shares.
pub fn bin_shares(
    cell: &LandCell,
    raster: &CfRaster,
    spec: &CfBinSpec,
    n_points: usize,
    rng: &mut impl Rng,
) -> Result<BinShares, VreError> {
    if n_points == 0 {
        return Err(VreError::BadShares { msg: "need at least one sample point".to_string() });
    }
    let s = (n_points as f64).sqrt().round().max(1.0) as usize;
    let total = s * s;
    let n_bins = spec.n_bins();

    let mut counts = vec![0usize; n_bins];
    let mut cf_sums = vec![0.0f64; n_bins];
    let mut excluded = 0usize;
    let dlon = cell.lon_max - cell.lon_min;
    let dlat = cell.lat_max - cell.lat_min;
    for i in 0..s {
        for j in 0..s {
            let u: f64 = rng.gen();
            let v: f64 = rng.gen();
            let lon = cell.lon_min + (i as f64 + u) / s as f64 * dlon;
            let lat = cell.lat_min + (j as f64 + v) / s as f64 * dlat;
            let cf = raster.nearest_cf(lon, lat);
            match spec.bin_of(cf) {
                Some(b) => {
                    counts[b] += 1;
                    cf_sums[b] += cf;
                }
                None => excluded += 1,
            }
        }
    }

    let shares: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let avg_cf: Vec<f64> = counts
        .iter()
        .zip(&cf_sums)
        .map(|(&c, &sum)| if c > 0 { sum / c as f64 } else { 0.0 })
        .collect();
    Ok(BinShares {
        shares,
        excluded_share: excluded as f64 / total as f64,
        avg_cf,
        n_samples: total,
    })
}

/// Land split implied by applying bin shares to an eligible area.
#[derive(Debug, Clone)]
pub struct BinAllocation {
    pub bin_km2: Vec<f64>,
    pub excluded_km2: f64,
}

/// Splits `eligible_km2` across bins proportionally to the shares. The bin
/// areas plus the excluded area reproduce the input area to within floating
/// point roundoff because the shares themselves sum to one.
pub fn allocate_bin_land(eligible_km2: f64, shares: &BinShares) -> Result<BinAllocation, VreError> {
    if eligible_km2 < 0.0 || !eligible_km2.is_finite() {
        return Err(VreError::NegativeArea { area_km2: eligible_km2 });
    }
    let sum: f64 = shares.shares.iter().sum::<f64>() + shares.excluded_share;
    if (sum - 1.0).abs() > 1e-6 {
        return Err(VreError::BadShares { msg: format!("shares sum to {sum}, expected 1") });
    }
    Ok(BinAllocation {
        bin_km2: shares.shares.iter().map(|s| s * eligible_km2).collect(),
        excluded_km2: shares.excluded_share * eligible_km2,
    })
}

/// Rescales a capacity-factor series to hit a target mean, clipping at 1.
/// Thin wrapper so resource-side callers share the exact arithmetic used for
/// representative-day rescaling.
pub fn rescale_cf_series(values: &[f64], target_mean: f64) -> Result<ScaleOutcome, ScaleError> {
    scale::rescale(values, target_mean, Some(1.0))
}

/// One capacity-factor bin of one region/land-class group.
#[derive(Debug, Clone)]
pub struct BinEntry {
    pub label: String,
    pub share: f64,
    pub avg_cf: f64,
    pub land_km2: f64,
    pub potential_mw: f64,
}

/// Pooled resource of one land class within a region.
#[derive(Debug, Clone)]
pub struct GroupResource {
    pub entries: Vec<BinEntry>,
    pub excluded_km2: f64,
    pub total_km2: f64,
    pub total_mw: f64,
}

impl GroupResource {
    pub fn empty(spec: &CfBinSpec) -> Self {
        GroupResource {
            entries: (0..spec.n_bins())
                .map(|b| BinEntry {
                    label: spec.label(b),
                    share: 0.0,
                    avg_cf: 0.0,
                    land_km2: 0.0,
                    potential_mw: 0.0,
                })
                .collect(),
            excluded_km2: 0.0,
            total_km2: 0.0,
            total_mw: 0.0,
        }
    }
}

/// Wind and solar potential of one region.
#[derive(Debug, Clone)]
pub struct RegionalResource {
    pub region: String,
    pub shared: GroupResource,
    pub agricultural: GroupResource,
    /// Shared land below the eligibility floor: unusable for wind, still
    /// available to ground-mounted solar.
    pub solar_only_km2: f64,
    pub solar_only_mw: f64,
}

/// Area-weighted pooling of per-cell shares into one group resource.
fn pool_group(cells: &[(f64, BinShares)], spec: &CfBinSpec) -> GroupResource {
    let n_bins = spec.n_bins();
    let total_km2: f64 = cells.iter().map(|(a, _)| a).sum();
    let mut bin_km2 = vec![0.0; n_bins];
    let mut cf_weight = vec![0.0; n_bins];
    let mut excluded_km2 = 0.0;
    for (area, shares) in cells {
        for b in 0..n_bins {
            let km2 = area * shares.shares[b];
            bin_km2[b] += km2;
            cf_weight[b] += km2 * shares.avg_cf[b];
        }
        excluded_km2 += area * shares.excluded_share;
    }
    let mut entries = Vec::with_capacity(n_bins);
    let mut total_mw = 0.0;
    for b in 0..n_bins {
        let potential_mw = bin_km2[b] * MW_PER_KM2;
        total_mw += potential_mw;
        entries.push(BinEntry {
            label: spec.label(b),
            share: if total_km2 > 0.0 { bin_km2[b] / total_km2 } else { 0.0 },
            avg_cf: if bin_km2[b] > 0.0 { cf_weight[b] / bin_km2[b] } else { 0.0 },
            land_km2: bin_km2[b],
            potential_mw,
        });
    }
    GroupResource { entries, excluded_km2, total_km2, total_mw }
}

/// Characterizes every region in the grid: samples each eligible cell's bin
/// shares and pools them by region and land class.
///
/// Determinism: cells are visited in `cell_id` order and each gets its own
/// random stream (`set_stream` of its sort rank) off the caller's seed, so
/// results do not depend on input row order.
pub fn characterize(
    grid: &LandGrid,
    raster: &CfRaster,
    spec: &CfBinSpec,
    n_points: usize,
    seed: u64,
) -> Result<Vec<RegionalResource>, VreError> {
    let mut per_cell: Vec<(usize, BinShares)> = Vec::new();
    for (ordinal, cell) in grid.cells.iter().enumerate() {
        if cell.land_class == LandClass::Excluded {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ordinal as u64);
        let shares = bin_shares(cell, raster, spec, n_points, &mut rng)?;
        per_cell.push((ordinal, shares));
    }

    let mut out = Vec::new();
    for region in grid.regions() {
        let collect = |class: LandClass| -> Vec<(f64, BinShares)> {
            per_cell
                .iter()
                .filter(|(ord, _)| {
                    let c = &grid.cells[*ord];
                    c.region == region && c.land_class == class
                })
                .map(|(ord, shares)| (grid.cells[*ord].area_km2, shares.clone()))
                .collect()
        };
        let shared_cells = collect(LandClass::Shared);
        let agri_cells = collect(LandClass::Agricultural);
        if shared_cells.is_empty() && agri_cells.is_empty() {
            continue;
        }
        let shared = if shared_cells.is_empty() {
            GroupResource::empty(spec)
        } else {
            pool_group(&shared_cells, spec)
        };
        let agricultural = if agri_cells.is_empty() {
            GroupResource::empty(spec)
        } else {
            pool_group(&agri_cells, spec)
        };
        let solar_only_km2 = shared.excluded_km2;
        let solar_only_mw = capacity_potential_mw(solar_only_km2)?;
        out.push(RegionalResource {
            region,
            shared,
            agricultural,
            solar_only_km2,
            solar_only_mw,
        });
    }
    Ok(out)
}

/// Per-region capacity totals in GW.
#[derive(Debug, Clone)]
pub struct RegionSummary {
    pub region: String,
    pub shared_gw: f64,
    pub agricultural_gw: f64,
    pub solar_only_gw: f64,
}

/// Inventory rollup: per-region subtotals, per-column totals, grand total.
#[derive(Debug, Clone)]
pub struct InventorySummary {
    pub regions: Vec<RegionSummary>,
    pub shared_total_gw: f64,
    pub agricultural_total_gw: f64,
    pub solar_only_total_gw: f64,
    pub grand_total_gw: f64,
}

/// Rolls regional resources up to GW subtotals and totals, regions sorted by
/// name.
pub fn summarize_potentials(resources: &[RegionalResource]) -> InventorySummary {
    let mut regions: Vec<RegionSummary> = resources
        .iter()
        .map(|r| RegionSummary {
            region: r.region.clone(),
            shared_gw: r.shared.total_mw / 1000.0,
            agricultural_gw: r.agricultural.total_mw / 1000.0,
            solar_only_gw: r.solar_only_mw / 1000.0,
        })
        .collect();
    regions.sort_by(|a, b| a.region.cmp(&b.region));
    let shared_total_gw: f64 = regions.iter().map(|r| r.shared_gw).sum();
    let agricultural_total_gw: f64 = regions.iter().map(|r| r.agricultural_gw).sum();
    let solar_only_total_gw: f64 = regions.iter().map(|r| r.solar_only_gw).sum();
    InventorySummary {
        regions,
        shared_total_gw,
        agricultural_total_gw,
        solar_only_total_gw,
        grand_total_gw: shared_total_gw + agricultural_total_gw + solar_only_total_gw,
    }
}

/// Reads `cell_id,region,land_class,area_km2,lon_min,lat_min,lon_max,lat_max`.
pub fn read_land_csv(path: &Path) -> Result<LandGrid, VreError> {
    let origin = path.display().to_string();
    let text = fs::read_to_string(path)
        .map_err(|e| VreError::Io { path: origin.clone(), source: e })?;
    read_land_str(&text, &origin)
}

pub fn read_land_str(text: &str, origin: &str) -> Result<LandGrid, VreError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut cells = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| VreError::Parse {
            path: origin.to_string(),
            msg: format!("row {}: {}", i + 2, e),
        })?;
        if rec.len() != 8 {
            return Err(VreError::Parse {
                path: origin.to_string(),
                msg: format!("row {}: expected 8 fields, got {}", i + 2, rec.len()),
            });
        }
        let num = |idx: usize| -> Result<f64, VreError> {
            rec[idx].parse::<f64>().map_err(|_| VreError::Parse {
                path: origin.to_string(),
                msg: format!("row {}: field {} is not a number: {:?}", i + 2, idx + 1, &rec[idx]),
            })
        };
        cells.push(LandCell {
            cell_id: rec[0].to_string(),
            region: rec[1].to_string(),
            land_class: LandClass::parse(&rec[2])?,
            area_km2: num(3)?,
            lon_min: num(4)?,
            lat_min: num(5)?,
            lon_max: num(6)?,
            lat_max: num(7)?,
        });
    }
    LandGrid::new(cells)
}

/// Reads `lon,lat,cf` raster points.
pub fn read_raster_csv(path: &Path) -> Result<CfRaster, VreError> {
    let origin = path.display().to_string();
    let text = fs::read_to_string(path)
        .map_err(|e| VreError::Io { path: origin.clone(), source: e })?;
    read_raster_str(&text, &origin)
}

pub fn read_raster_str(text: &str, origin: &str) -> Result<CfRaster, VreError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| VreError::Parse {
            path: origin.to_string(),
            msg: format!("row {}: {}", i + 2, e),
        })?;
        if rec.len() != 3 {
            return Err(VreError::Parse {
                path: origin.to_string(),
                msg: format!("row {}: expected 3 fields, got {}", i + 2, rec.len()),
            });
        }
        let num = |idx: usize| -> Result<f64, VreError> {
            rec[idx].parse::<f64>().map_err(|_| VreError::Parse {
                path: origin.to_string(),
                msg: format!("row {}: field {} is not a number: {:?}", i + 2, idx + 1, &rec[idx]),
            })
        };
        points.push(RasterPoint { lon: num(0)?, lat: num(1)?, cf: num(2)? });
    }
    CfRaster::new(points)
}

/// Writes the full inventory: one row per region, land class, and bin, plus
/// an `excluded` row per class and a `solar_only` row per region.
pub fn write_inventory_csv(resources: &[RegionalResource], path: &Path) -> Result<(), VreError> {
    let mut buf = String::from("region,land_class,bin,share,avg_cf,land_km2,potential_mw\n");
    let mut sorted: Vec<&RegionalResource> = resources.iter().collect();
    sorted.sort_by(|a, b| a.region.cmp(&b.region));
    for r in sorted {
        for (class, group) in [("shared", &r.shared), ("agricultural", &r.agricultural)] {
            for e in &group.entries {
                buf.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.region, class, e.label, e.share, e.avg_cf, e.land_km2, e.potential_mw
                ));
            }
            let excl_share = if group.total_km2 > 0.0 {
                group.excluded_km2 / group.total_km2
            } else {
                0.0
            };
            buf.push_str(&format!(
                "{},{},excluded,{},0,{},0\n",
                r.region, class, excl_share, group.excluded_km2
            ));
        }
        buf.push_str(&format!(
            "{},solar_only,all,1,0,{},{}\n",
            r.region, r.solar_only_km2, r.solar_only_mw
        ));
    }
    write_text(path, &buf)
}

/// Writes the GW rollup with a trailing TOTAL row.
pub fn write_summary_csv(summary: &InventorySummary, path: &Path) -> Result<(), VreError> {
    let mut buf = String::from("region,shared_gw,agricultural_gw,solar_only_gw,total_gw\n");
    for r in &summary.regions {
        buf.push_str(&format!(
            "{},{},{},{},{}\n",
            r.region,
            r.shared_gw,
            r.agricultural_gw,
            r.solar_only_gw,
            r.shared_gw + r.agricultural_gw + r.solar_only_gw
        ));
    }
    buf.push_str(&format!(
        "TOTAL,{},{},{},{}\n",
        summary.shared_total_gw,
        summary.agricultural_total_gw,
        summary.solar_only_total_gw,
        summary.grand_total_gw
    ));
    write_text(path, &buf)
}

fn write_text(path: &Path, text: &str) -> Result<(), VreError> {
    let mut f = fs::File::create(path)
        .map_err(|e| VreError::Io { path: path.display().to_string(), source: e })?;
    f.write_all(text.as_bytes())
        .map_err(|e| VreError::Io { path: path.display().to_string(), source: e })
}
