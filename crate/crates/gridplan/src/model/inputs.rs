//! Model input bundle and its CSV loaders.
//!
//! Numeric fields left blank in the CSVs take documented defaults; optional
//! whole files (trade, emissions, land budgets) are represented as empty
//! collections / `None`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::cascade::DayPattern;

use super::{interp_anchors, ModelError};

/// Which trade price column a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TradePrice {
    #[default]
    Low,
    High,
}

/// System-wide scalars plus per-region grid losses.
#[derive(Debug, Clone)]
pub struct SystemParams {
    pub base_year: u32,
    pub end_year: u32,
    pub discount_rate: f64,
    pub reserve_margin: f64,
    /// Fraction of generated energy lost before it serves demand, by region.
    pub loss: BTreeMap<String, f64>,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            base_year: 2020,
            end_year: 2050,
            discount_rate: 0.05,
            reserve_margin: 1.2,
            loss: BTreeMap::new(),
        }
    }
}

impl SystemParams {
    pub fn years(&self) -> Vec<u32> {
        (self.base_year..=self.end_year).collect()
    }

    pub fn loss_for(&self, region: &str) -> f64 {
        self.loss.get(region).copied().unwrap_or(0.0)
    }
}

/// One generation technology in one region.
#[derive(Debug, Clone)]
pub struct Technology {
    pub id: String,
    pub region: String,
    /// Free-form category ("coal", "gas", "wind", "solar", "hydro", ...),
    /// used by scenario rules and reports.
    pub kind: String,
    /// Overnight cost per MW.
    pub capex: f64,
    /// Fixed O&M per MW-year.
    pub fixed_om: f64,
    /// Variable cost per MWh, fuel included.
    pub var_om: f64,
    pub life: u32,
    pub emission_t_per_mwh: f64,
    /// Flat availability used when no per-timeslice profile exists.
    pub availability: f64,
    /// Share of capacity counting toward the reserve margin.
    pub firm_credit: f64,
    /// Pre-existing capacity, MW.
    pub residual_mw: f64,
    /// Last year the residual capacity is still available.
    pub residual_until: u32,
    /// Per-year limit on new builds, MW.
    pub max_new_mw: f64,
    /// Limit on total standing capacity, MW.
    pub max_total_mw: f64,
    /// Land pool this technology consumes, if any ("shared"/"agricultural"/
    /// "solar_only").
    pub land_group: Option<String>,
    /// Capacity-factor bin within the pool; blank means the pool's "all" row.
    pub land_bin: Option<String>,
}

impl Technology {
    /// Residual capacity available in `year`.
    pub fn residual_in(&self, year: u32) -> f64 {
        if year <= self.residual_until {
            self.residual_mw
        } else {
            0.0
        }
    }
}

/// One trade anchor year of a border.
#[derive(Debug, Clone, Copy)]
pub struct BorderAnchor {
    pub year: u32,
    pub price_low: f64,
    pub price_high: f64,
    pub capacity_mw: f64,
}

/// An interconnector between one model region and an external market.
#[derive(Debug, Clone)]
pub struct Border {
    pub id: String,
    pub region: String,
    /// Ascending by year; values interpolate linearly and clamp outside.
    pub anchors: Vec<BorderAnchor>,
}

impl Border {
    pub fn price(&self, variant: TradePrice, year: u32) -> f64 {
        let pts: Vec<(u32, f64)> = self
            .anchors
            .iter()
            .map(|a| {
                (a.year, match variant {
                    TradePrice::Low => a.price_low,
                    TradePrice::High => a.price_high,
                })
            })
            .collect();
        interp_anchors(&pts, year)
    }

    pub fn capacity_mw(&self, year: u32) -> f64 {
        let pts: Vec<(u32, f64)> = self.anchors.iter().map(|a| (a.year, a.capacity_mw)).collect();
        interp_anchors(&pts, year)
    }
}

/// System-wide emission policy: a baseline and ceiling fractions by year.
#[derive(Debug, Clone)]
pub struct EmissionPolicy {
    pub baseline_t: f64,
    /// Ascending (year, fraction-of-baseline) anchors.
    pub anchors: Vec<(u32, f64)>,
}

/// Available land for one (region, pool, bin) combination.
#[derive(Debug, Clone)]
pub struct LandBudget {
    pub region: String,
    pub group: String,
    pub bin: String,
    pub km2: f64,
}

/// Constraint groups that can be dropped from a build, used to localize the
/// cause of infeasibility by rebuilding without suspect groups.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RelaxFlags {
    pub skip_emission_limits: bool,
    pub skip_land_budgets: bool,
    pub skip_new_cap_bounds: bool,
    pub skip_total_cap_bounds: bool,
    pub skip_reserve_margin: bool,
    pub skip_trade_caps: bool,
}

impl RelaxFlags {
    pub const GROUPS: [&'static str; 6] = [
        "emission_limits",
        "land_budgets",
        "new_capacity_bounds",
        "total_capacity_bounds",
        "reserve_margin",
        "trade_caps",
    ];

    pub fn skipping(group: &str) -> Option<RelaxFlags> {
        let mut f = RelaxFlags::default();
        match group {
            "emission_limits" => f.skip_emission_limits = true,
            "land_budgets" => f.skip_land_budgets = true,
            "new_capacity_bounds" => f.skip_new_cap_bounds = true,
            "total_capacity_bounds" => f.skip_total_cap_bounds = true,
            "reserve_margin" => f.skip_reserve_margin = true,
            "trade_caps" => f.skip_trade_caps = true,
            _ => return None,
        }
        Some(f)
    }
}

/// Everything the model builder consumes.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    pub params: SystemParams,
    pub pattern: DayPattern,
    pub techs: Vec<Technology>,
    /// Per-timeslice capacity factors for technologies with profiles.
    pub tech_cf: BTreeMap<String, Vec<f64>>,
    /// Base-year annual demand per timeslice, MWh, by region.
    pub demand: BTreeMap<String, Vec<f64>>,
    /// Demand multiplier anchors by region (relative to the base year).
    pub growth: BTreeMap<String, Vec<(u32, f64)>>,
    pub borders: Vec<Border>,
    pub emissions: Option<EmissionPolicy>,
    pub land_budgets: Vec<LandBudget>,
    pub trade_price: TradePrice,
    pub relax: RelaxFlags,
}

impl ModelInputs {
    pub fn growth_for(&self, region: &str, year: u32) -> f64 {
        match self.growth.get(region) {
            Some(anchors) if !anchors.is_empty() => interp_anchors(anchors, year),
            _ => 1.0,
        }
    }
}

pub(crate) fn read_csv(path: &Path, n_fields: usize) -> Result<Vec<Vec<String>>, ModelError> {
    let origin = path.display().to_string();
    let text =
        fs::read_to_string(path).map_err(|e| ModelError::Io { path: origin.clone(), source: e })?;
    parse_csv(&text, &origin, n_fields)
}

fn parse_csv(text: &str, origin: &str, n_fields: usize) -> Result<Vec<Vec<String>>, ModelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ModelError::Parse {
            path: origin.to_string(),
            msg: format!("row {}: {}", i + 2, e),
        })?;
        if rec.len() != n_fields {
            return Err(ModelError::Parse {
                path: origin.to_string(),
                msg: format!("row {}: expected {} fields, got {}", i + 2, n_fields, rec.len()),
            });
        }
        rows.push(rec.iter().map(|s| s.to_string()).collect());
    }
    Ok(rows)
}

fn num(origin: &str, row: usize, field: &str, value: &str) -> Result<f64, ModelError> {
    value.parse::<f64>().map_err(|_| ModelError::Parse {
        path: origin.to_string(),
        msg: format!("row {row}: {field} is not a number: {value:?}"),
    })
}

fn opt_num(origin: &str, row: usize, field: &str, value: &str, default: f64) -> Result<f64, ModelError> {
    if value.is_empty() {
        Ok(default)
    } else {
        num(origin, row, field, value)
    }
}

/// Reads `key,region,value` scalars. Recognized keys: `base_year`,
/// `end_year`, `discount_rate`, `reserve_margin` (region blank), and `loss`
/// (per region). Unknown keys are an error.
pub fn read_params_csv(path: &Path) -> Result<SystemParams, ModelError> {
    let origin = path.display().to_string();
    let rows = read_csv(path, 3)?;
    let mut p = SystemParams::default();
    for (i, row) in rows.iter().enumerate() {
        let rno = i + 2;
        let value = num(&origin, rno, &row[0], &row[2])?;
        match row[0].as_str() {
            "base_year" => p.base_year = value as u32,
            "end_year" => p.end_year = value as u32,
            "discount_rate" => p.discount_rate = value,
            "reserve_margin" => p.reserve_margin = value,
            "loss" => {
                if row[1].is_empty() {
                    return Err(ModelError::Parse {
                        path: origin.clone(),
                        msg: format!("row {rno}: loss needs a region"),
                    });
                }
                p.loss.insert(row[1].clone(), value);
            }
            other => {
                return Err(ModelError::Parse {
                    path: origin.clone(),
                    msg: format!("row {rno}: unknown parameter {other:?}"),
                });
            }
        }
    }
    if p.end_year < p.base_year {
        return Err(ModelError::Inconsistent {
            msg: format!("end_year {} precedes base_year {}", p.end_year, p.base_year),
        });
    }
    Ok(p)
}

/// Reads the technology table. Header:
/// `id,region,kind,capex,fixed_om,var_om,life,emission_t_per_mwh,availability,firm_credit,residual_mw,residual_until,max_new_mw,max_total_mw,land_group,land_bin`.
pub fn read_technologies_csv(path: &Path) -> Result<Vec<Technology>, ModelError> {
    let origin = path.display().to_string();
    let rows = read_csv(path, 16)?;
    let mut techs = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let rno = i + 2;
        let tech = Technology {
            id: row[0].clone(),
            region: row[1].clone(),
            kind: row[2].clone(),
            capex: num(&origin, rno, "capex", &row[3])?,
            fixed_om: num(&origin, rno, "fixed_om", &row[4])?,
            var_om: num(&origin, rno, "var_om", &row[5])?,
            life: num(&origin, rno, "life", &row[6])? as u32,
            emission_t_per_mwh: num(&origin, rno, "emission_t_per_mwh", &row[7])?,
            availability: opt_num(&origin, rno, "availability", &row[8], 1.0)?,
            firm_credit: opt_num(&origin, rno, "firm_credit", &row[9], 0.0)?,
            residual_mw: opt_num(&origin, rno, "residual_mw", &row[10], 0.0)?,
            residual_until: opt_num(&origin, rno, "residual_until", &row[11], 9999.0)? as u32,
            max_new_mw: opt_num(&origin, rno, "max_new_mw", &row[12], f64::INFINITY)?,
            max_total_mw: opt_num(&origin, rno, "max_total_mw", &row[13], f64::INFINITY)?,
            land_group: if row[14].is_empty() { None } else { Some(row[14].clone()) },
            land_bin: if row[15].is_empty() { None } else { Some(row[15].clone()) },
        };
        if tech.life == 0 {
            return Err(ModelError::Parse {
                path: origin.clone(),
                msg: format!("row {rno}: technology {} needs a positive life", tech.id),
            });
        }
        if !(0.0..=1.0).contains(&tech.availability) {
            return Err(ModelError::Parse {
                path: origin.clone(),
                msg: format!("row {rno}: availability must be within [0, 1]"),
            });
        }
        techs.push(tech);
    }
    Ok(techs)
}

/// Reads `region,rep_day,hour,mwh`. Infers the timeslice shape and checks
/// every region covers all of it. Returns (demand, n_rep_days,
/// hours_per_day).
pub fn read_demand_csv(
    path: &Path,
) -> Result<(BTreeMap<String, Vec<f64>>, usize, usize), ModelError> {
    let origin = path.display().to_string();
    let rows = read_csv(path, 4)?;
    if rows.is_empty() {
        return Err(ModelError::Parse { path: origin, msg: "no demand rows".to_string() });
    }
    let mut triplets: Vec<(String, usize, usize, f64)> = Vec::with_capacity(rows.len());
    let mut n_days = 0usize;
    let mut hpd = 0usize;
    for (i, row) in rows.iter().enumerate() {
        let rno = i + 2;
        let d = num(&origin, rno, "rep_day", &row[1])? as usize;
        let h = num(&origin, rno, "hour", &row[2])? as usize;
        let v = num(&origin, rno, "mwh", &row[3])?;
        if v < 0.0 {
            return Err(ModelError::Parse {
                path: origin.clone(),
                msg: format!("row {rno}: demand must be non-negative"),
            });
        }
        n_days = n_days.max(d + 1);
        hpd = hpd.max(h + 1);
        triplets.push((row[0].clone(), d, h, v));
    }
    let n_ts = n_days * hpd;
    let mut demand: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for (region, d, h, v) in triplets {
        let slot = demand.entry(region.clone()).or_insert_with(|| vec![None; n_ts]);
        let ts = d * hpd + h;
        if slot[ts].replace(v).is_some() {
            return Err(ModelError::Parse {
                path: origin.clone(),
                msg: format!("duplicate demand entry for {region} day {d} hour {h}"),
            });
        }
    }
    let mut out = BTreeMap::new();
    for (region, values) in demand {
        let mut full = Vec::with_capacity(n_ts);
        for (ts, v) in values.into_iter().enumerate() {
            match v {
                Some(v) => full.push(v),
                None => {
                    return Err(ModelError::Parse {
                        path: origin.clone(),
                        msg: format!(
                            "region {region} missing demand for day {} hour {}",
                            ts / hpd,
                            ts % hpd
                        ),
                    });
                }
            }
        }
        out.insert(region, full);
    }
    Ok((out, n_days, hpd))
}

/// Reads `rep_day,source_day,weight_days` into a day pattern;
/// `hours_per_day` comes from the demand table's shape.
pub fn read_weights_csv(path: &Path, hours_per_day: usize) -> Result<DayPattern, ModelError> {
    let origin = path.display().to_string();
    let rows = read_csv(path, 3)?;
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let rno = i + 2;
        entries.push((
            num(&origin, rno, "rep_day", &row[0])? as usize,
            num(&origin, rno, "source_day", &row[1])? as usize,
            num(&origin, rno, "weight_days", &row[2])?,
        ));
    }
    entries.sort_by_key(|&(r, _, _)| r);
    for (expect, &(r, _, _)) in entries.iter().enumerate() {
        if r != expect {
            return Err(ModelError::Parse {
                path: origin.clone(),
                msg: format!("rep_day indices must run 0..n without gaps; found {r}"),
            });
        }
    }
    let pattern = DayPattern {
        source_days: entries.iter().map(|&(_, s, _)| s).collect(),
        weights: entries.iter().map(|&(_, _, w)| w).collect(),
        hours_per_day,
    };
    pattern.validate()?;
    Ok(pattern)
}

/// Reads `tech,rep_day,hour,cf` profiles; every listed technology must cover
/// the full timeslice grid.
pub fn read_tech_cf_csv(
    path: &Path,
    n_days: usize,
    hpd: usize,
) -> Result<BTreeMap<String, Vec<f64>>, ModelError> {
    let origin = path.display().to_string();
    let rows = read_csv(path, 4)?;
    let n_ts = n_days * hpd;
    let mut map: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let rno = i + 2;
        let d = num(&origin, rno, "rep_day", &row[1])? as usize;
        let h = num(&origin, rno, "hour", &row[2])? as usize;
        let cf = num(&origin, rno, "cf", &row[3])?;
        if !(0.0..=1.0).contains(&cf) {
            return Err(ModelError::Parse {
                path: origin.clone(),
                msg: format!("row {rno}: capacity factor {cf} outside [0, 1]"),
            });
        }
        if d >= n_days || h >= hpd {
            return Err(ModelError::Parse {
                path: origin.clone(),
                msg: format!("row {rno}: timeslice d{d} h{h} outside the {n_days}x{hpd} grid"),
            });
        }
        let slot = map.entry(row[0].clone()).or_insert_with(|| vec![None; n_ts]);
        if slot[d * hpd + h].replace(cf).is_some() {
            return Err(ModelError::Parse {
                path: origin.clone(),
                msg: format!("row {rno}: duplicate profile entry"),
            });
        }
    }
    let mut out = BTreeMap::new();
    for (tech, values) in map {
        let mut full = Vec::with_capacity(n_ts);
        for (ts, v) in values.into_iter().enumerate() {
            match v {
                Some(v) => full.push(v),
                None => {
                    return Err(ModelError::Parse {
                        path: origin.clone(),
                        msg: format!(
                            "technology {tech} missing cf for day {} hour {}",
                            ts / hpd,
                            ts % hpd
                        ),
                    });
                }
            }
        }
        out.insert(tech, full);
    }
    Ok(out)
}

/// Reads `region,year,multiplier` demand-growth anchors.
pub fn read_growth_csv(path: &Path) -> Result<BTreeMap<String, Vec<(u32, f64)>>, ModelError> {
    let origin = path.display().to_string();
    let rows = read_csv(path, 3)?;
    let mut map: BTreeMap<String, Vec<(u32, f64)>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let rno = i + 2;
        let year = num(&origin, rno, "year", &row[1])? as u32;
        let mult = num(&origin, rno, "multiplier", &row[2])?;
        if mult < 0.0 {
            return Err(ModelError::Parse {
                path: origin.clone(),
                msg: format!("row {rno}: growth multiplier must be non-negative"),
            });
        }
        map.entry(row[0].clone()).or_default().push((year, mult));
    }
    for anchors in map.values_mut() {
        anchors.sort_by_key(|&(y, _)| y);
    }
    Ok(map)
}

/// Reads `border,region,year,price_low,price_high,capacity_mw`. A border's
/// region must be consistent across its rows.
pub fn read_trade_csv(path: &Path) -> Result<Vec<Border>, ModelError> {
    let origin = path.display().to_string();
    let rows = read_csv(path, 6)?;
    let mut map: BTreeMap<String, Border> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let rno = i + 2;
        let anchor = BorderAnchor {
            year: num(&origin, rno, "year", &row[2])? as u32,
            price_low: num(&origin, rno, "price_low", &row[3])?,
            price_high: num(&origin, rno, "price_high", &row[4])?,
            capacity_mw: num(&origin, rno, "capacity_mw", &row[5])?,
        };
        if anchor.capacity_mw < 0.0 {
            return Err(ModelError::Parse {
                path: origin.clone(),
                msg: format!("row {rno}: trade capacity must be non-negative"),
            });
        }
        let entry = map.entry(row[0].clone()).or_insert_with(|| Border {
            id: row[0].clone(),
            region: row[1].clone(),
            anchors: Vec::new(),
        });
        if entry.region != row[1] {
            return Err(ModelError::Parse {
                path: origin.clone(),
                msg: format!(
                    "row {rno}: border {} switches region from {} to {}",
                    row[0], entry.region, row[1]
                ),
            });
        }
        entry.anchors.push(anchor);
    }
    let mut borders: Vec<Border> = map.into_values().collect();
    for b in borders.iter_mut() {
        b.anchors.sort_by_key(|a| a.year);
    }
    Ok(borders)
}

/// Reads `key,year,value` emission rows: one `baseline_t` row plus
/// `limit_fraction` anchors. Returns `None` for an empty table.
pub fn read_emissions_csv(path: &Path) -> Result<Option<EmissionPolicy>, ModelError> {
    let origin = path.display().to_string();
    let rows = read_csv(path, 3)?;
    if rows.is_empty() {
        return Ok(None);
    }
    let mut baseline: Option<f64> = None;
    let mut anchors: Vec<(u32, f64)> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let rno = i + 2;
        let year = num(&origin, rno, "year", &row[1])? as u32;
        let value = num(&origin, rno, "value", &row[2])?;
        match row[0].as_str() {
            "baseline_t" => {
                if baseline.replace(value).is_some() {
                    return Err(ModelError::Parse {
                        path: origin.clone(),
                        msg: format!("row {rno}: duplicate baseline_t"),
                    });
                }
            }
            "limit_fraction" => anchors.push((year, value)),
            other => {
                return Err(ModelError::Parse {
                    path: origin.clone(),
                    msg: format!("row {rno}: unknown emissions key {other:?}"),
                });
            }
        }
    }
    let baseline_t = baseline.ok_or_else(|| ModelError::Parse {
        path: origin.clone(),
        msg: "emission anchors without a baseline_t row".to_string(),
    })?;
    anchors.sort_by_key(|&(y, _)| y);
    Ok(Some(EmissionPolicy { baseline_t, anchors }))
}

/// Reads land budgets from the resource inventory format
/// (`region,land_class,bin,share,avg_cf,land_km2,potential_mw`), skipping
/// `excluded` rows.
pub fn read_land_budget_csv(path: &Path) -> Result<Vec<LandBudget>, ModelError> {
    let origin = path.display().to_string();
    let rows = read_csv(path, 7)?;
    let mut budgets = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let rno = i + 2;
        if row[2] == "excluded" {
            continue;
        }
        let km2 = num(&origin, rno, "land_km2", &row[5])?;
        if km2 < 0.0 {
            return Err(ModelError::Parse {
                path: origin.clone(),
                msg: format!("row {rno}: land area must be non-negative"),
            });
        }
        budgets.push(LandBudget {
            region: row[0].clone(),
            group: row[1].clone(),
            bin: row[2].clone(),
            km2,
        });
    }
    Ok(budgets)
}
