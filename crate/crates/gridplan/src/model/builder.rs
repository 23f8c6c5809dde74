//! Assembles the expansion model into a [`LinearProgram`].
//!
//! The builder registers every column up front in a fixed block order (new
//! capacity, total capacity, generation, imports, exports, water flows,
//! reservoir levels, start levels, emissions), then each constraint block is
//! added exactly once. [`ModelBuilder::assemble`] instantiates the cascade's
//! water rows for every model year, sorts all rows by name so the final row
//! order never depends on the order blocks were called in, and validates the
//! result. Identical inputs therefore produce byte-identical programs.

use std::collections::{BTreeMap, BTreeSet};

use gridplan_lp::{LinearProgram, Sense};

use crate::cascade::{CascadeFragments, DayPattern, WaterRef};
use crate::vre::KM2_PER_MW;

use super::inputs::{ModelInputs, Technology};
use super::{discount, emission_limit, salvage_fraction, ModelError};

/// Hours in a non-leap year; a leap pattern covers 8784.
const YEAR_HOURS: f64 = 8760.0;
const LEAP_YEAR_HOURS: f64 = 8784.0;

/// Maps solution columns back to named model quantities.
#[derive(Debug, Clone)]
pub struct ModelIndex {
    pub years: Vec<u32>,
    pub pattern: DayPattern,
    /// Duration of each timeslice in hours; sums to a full year.
    pub dur_hours: Vec<f64>,
    pub regions: Vec<String>,
    /// Merged technology list (file technologies plus cascade plants),
    /// sorted by id.
    pub techs: Vec<Technology>,
    /// Marks entries of `techs` that came from the cascade.
    pub tech_is_cascade: Vec<bool>,
    /// Border (id, region) pairs, in input order.
    pub borders: Vec<(String, String)>,
    /// Water link (from, to) node ids, cascade declaration order.
    pub links: Vec<(String, String)>,
    /// Reservoir node ids, cascade declaration order.
    pub reservoirs: Vec<String>,
    ncap0: usize,
    tcap0: usize,
    gen0: usize,
    imp0: usize,
    exp0: usize,
    flow0: usize,
    lvl0: usize,
    strt0: usize,
    emis0: usize,
    n_cols: usize,
}

impl ModelIndex {
    pub fn ny(&self) -> usize {
        self.years.len()
    }

    pub fn n_ts(&self) -> usize {
        self.pattern.n_ts()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn year_idx(&self, year: u32) -> Option<usize> {
        self.years.iter().position(|&y| y == year)
    }

    pub fn tech_idx(&self, id: &str) -> Option<usize> {
        self.techs.iter().position(|t| t.id == id)
    }

    pub fn ncap_col(&self, t: usize, y: usize) -> usize {
        self.ncap0 + t * self.ny() + y
    }

    pub fn tcap_col(&self, t: usize, y: usize) -> usize {
        self.tcap0 + t * self.ny() + y
    }

    pub fn gen_col(&self, t: usize, y: usize, ts: usize) -> usize {
        self.gen0 + (t * self.ny() + y) * self.n_ts() + ts
    }

    pub fn imp_col(&self, b: usize, y: usize, ts: usize) -> usize {
        self.imp0 + (b * self.ny() + y) * self.n_ts() + ts
    }

    pub fn exp_col(&self, b: usize, y: usize, ts: usize) -> usize {
        self.exp0 + (b * self.ny() + y) * self.n_ts() + ts
    }

    pub fn flow_col(&self, link: usize, y: usize, ts: usize) -> usize {
        self.flow0 + (link * self.ny() + y) * self.n_ts() + ts
    }

    /// Interior level column; `hour` runs 1..hours_per_day.
    pub fn level_col(&self, res: usize, y: usize, day: usize, hour: usize) -> usize {
        debug_assert!(hour >= 1 && hour < self.pattern.hours_per_day);
        let per_year = self.pattern.source_days.len() * (self.pattern.hours_per_day - 1);
        self.lvl0 + (res * self.ny() + y) * per_year
            + day * (self.pattern.hours_per_day - 1)
            + (hour - 1)
    }

    pub fn start_col(&self, res: usize, y: usize) -> usize {
        self.strt0 + res * self.ny() + y
    }

    pub fn emis_col(&self, y: usize) -> usize {
        self.emis0 + y
    }
}

struct RowSpec {
    name: String,
    sense: Sense,
    rhs: f64,
    terms: Vec<(usize, f64)>,
}

const BLOCKS: [&str; 7] = [
    "demand_balance",
    "capacity_activity",
    "reserve_margin",
    "emissions",
    "land_budget",
    "trade",
    "objective",
];

/// Incremental model assembly; see the module docs for the overall scheme.
pub struct ModelBuilder<'a> {
    inputs: &'a ModelInputs,
    frags: Option<&'a CascadeFragments>,
    lp: LinearProgram,
    idx: ModelIndex,
    /// Cascade plant index -> merged technology index.
    plant_tech: Vec<usize>,
    rows: Vec<RowSpec>,
    done: [bool; 7],
}

impl<'a> ModelBuilder<'a> {
    pub fn new(
        inputs: &'a ModelInputs,
        frags: Option<&'a CascadeFragments>,
    ) -> Result<Self, ModelError> {
        inputs.pattern.validate()?;
        let n_ts = inputs.pattern.n_ts();
        let hpd = inputs.pattern.hours_per_day;
        let ndays = inputs.pattern.source_days.len();

        let mut dur_hours = Vec::with_capacity(n_ts);
        for d in 0..ndays {
            let dur = inputs.pattern.weights[d] * 24.0 / hpd as f64;
            for _ in 0..hpd {
                dur_hours.push(dur);
            }
        }
        let total: f64 = dur_hours.iter().sum();
        if (total - YEAR_HOURS).abs() > 1e-6 && (total - LEAP_YEAR_HOURS).abs() > 1e-6 {
            return Err(ModelError::Inconsistent {
                msg: format!("timeslice durations cover {total} hours, not a full year"),
            });
        }

        let regions: Vec<String> = inputs.demand.keys().cloned().collect();
        if regions.is_empty() {
            return Err(ModelError::Inconsistent { msg: "no demand regions".to_string() });
        }
        for (region, values) in &inputs.demand {
            if values.len() != n_ts {
                return Err(ModelError::Inconsistent {
                    msg: format!(
                        "region {region} has {} demand slices, expected {n_ts}",
                        values.len()
                    ),
                });
            }
        }

        if let Some(f) = frags {
            if f.n_rep_days != ndays || f.hours_per_day != hpd {
                return Err(ModelError::Inconsistent {
                    msg: format!(
                        "cascade compiled for {}x{} timeslices, model uses {}x{}",
                        f.n_rep_days, f.hours_per_day, ndays, hpd
                    ),
                });
            }
        }

        // Merge file technologies with cascade plants into one sorted list.
        let mut techs: Vec<Technology> = inputs.techs.clone();
        let mut cascade_ids: BTreeSet<String> = BTreeSet::new();
        if let Some(f) = frags {
            for plant in &f.plants {
                cascade_ids.insert(plant.node_id.clone());
                techs.push(Technology {
                    id: plant.node_id.clone(),
                    region: plant.data.region.clone(),
                    kind: "hydro".to_string(),
                    capex: plant.data.capex,
                    fixed_om: plant.data.fixed_om,
                    var_om: plant.data.var_om,
                    life: plant.data.life,
                    emission_t_per_mwh: 0.0,
                    availability: 1.0,
                    firm_credit: plant.data.firm_credit,
                    residual_mw: plant.data.capacity_mw,
                    residual_until: plant.data.residual_until,
                    max_new_mw: plant.data.max_new_mw,
                    max_total_mw: f64::INFINITY,
                    land_group: None,
                    land_bin: None,
                });
            }
        }
        techs.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in techs.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(ModelError::DuplicateTech { id: pair[0].id.clone() });
            }
        }
        let tech_is_cascade: Vec<bool> =
            techs.iter().map(|t| cascade_ids.contains(&t.id)).collect();
        let plant_tech: Vec<usize> = match frags {
            Some(f) => f
                .plants
                .iter()
                .map(|p| techs.iter().position(|t| t.id == p.node_id).unwrap())
                .collect(),
            None => Vec::new(),
        };

        for t in &techs {
            if !regions.contains(&t.region) {
                return Err(ModelError::Inconsistent {
                    msg: format!("technology {} sits in unknown region {}", t.id, t.region),
                });
            }
            if !(0.0..=1.0).contains(&t.firm_credit) {
                return Err(ModelError::Inconsistent {
                    msg: format!("technology {}: firm_credit outside [0, 1]", t.id),
                });
            }
            if t.emission_t_per_mwh < 0.0 {
                return Err(ModelError::Inconsistent {
                    msg: format!("technology {}: negative emission factor", t.id),
                });
            }
            if let Some(cf) = inputs.tech_cf.get(&t.id) {
                if cf.len() != n_ts {
                    return Err(ModelError::Inconsistent {
                        msg: format!(
                            "technology {} has {} cf slices, expected {n_ts}",
                            t.id,
                            cf.len()
                        ),
                    });
                }
            }
        }

        let borders: Vec<(String, String)> =
            inputs.borders.iter().map(|b| (b.id.clone(), b.region.clone())).collect();
        let mut seen_borders = BTreeSet::new();
        for (id, region) in &borders {
            if !seen_borders.insert(id.clone()) {
                return Err(ModelError::Inconsistent {
                    msg: format!("duplicate border id {id}"),
                });
            }
            if !regions.contains(region) {
                return Err(ModelError::Inconsistent {
                    msg: format!("border {id} connects to unknown region {region}"),
                });
            }
        }

        let years = inputs.params.years();

        let (links, reservoirs) = match frags {
            Some(f) => (
                f.links.iter().map(|l| (l.from.clone(), l.to.clone())).collect(),
                f.reservoirs.iter().map(|r| r.node_id.clone()).collect(),
            ),
            None => (Vec::new(), Vec::new()),
        };

        let mut idx = ModelIndex {
            years,
            pattern: inputs.pattern.clone(),
            dur_hours,
            regions,
            techs,
            tech_is_cascade,
            borders,
            links,
            reservoirs,
            ncap0: 0,
            tcap0: 0,
            gen0: 0,
            imp0: 0,
            exp0: 0,
            flow0: 0,
            lvl0: 0,
            strt0: 0,
            emis0: 0,
            n_cols: 0,
        };

        // Register every column. Bounds that belong to relaxable constraint
        // groups honor the relax flags here.
        let mut lp = LinearProgram::new("gridplan");
        let relax = inputs.relax;

        idx.ncap0 = lp.num_cols();
        for t in &idx.techs {
            let ub = if relax.skip_new_cap_bounds { f64::INFINITY } else { t.max_new_mw };
            for &year in &idx.years {
                lp.add_col(&format!("ncap.{}.{}", t.id, year), 0.0, ub, 0.0);
            }
        }
        idx.tcap0 = lp.num_cols();
        for t in &idx.techs {
            let ub = if relax.skip_total_cap_bounds { f64::INFINITY } else { t.max_total_mw };
            for &year in &idx.years {
                lp.add_col(&format!("tcap.{}.{}", t.id, year), 0.0, ub, 0.0);
            }
        }
        idx.gen0 = lp.num_cols();
        for t in &idx.techs {
            for &year in &idx.years {
                for d in 0..ndays {
                    for h in 0..hpd {
                        lp.add_col(
                            &format!("gen.{}.{}.d{:02}.h{:02}", t.id, year, d, h),
                            0.0,
                            f64::INFINITY,
                            0.0,
                        );
                    }
                }
            }
        }
        idx.imp0 = lp.num_cols();
        for (id, _) in &idx.borders {
            for &year in &idx.years {
                for d in 0..ndays {
                    for h in 0..hpd {
                        lp.add_col(
                            &format!("imp.{}.{}.d{:02}.h{:02}", id, year, d, h),
                            0.0,
                            f64::INFINITY,
                            0.0,
                        );
                    }
                }
            }
        }
        idx.exp0 = lp.num_cols();
        for (id, _) in &idx.borders {
            for &year in &idx.years {
                for d in 0..ndays {
                    for h in 0..hpd {
                        lp.add_col(
                            &format!("exp.{}.{}.d{:02}.h{:02}", id, year, d, h),
                            0.0,
                            f64::INFINITY,
                            0.0,
                        );
                    }
                }
            }
        }
        idx.flow0 = lp.num_cols();
        if let Some(f) = frags {
            for (li, _) in f.links.iter().enumerate() {
                for &year in &idx.years {
                    for d in 0..ndays {
                        for h in 0..hpd {
                            let ts = d * hpd + h;
                            lp.add_col(
                                &format!("flow.l{:03}.{}.d{:02}.h{:02}", li, year, d, h),
                                0.0,
                                f.flow_upper[li][ts],
                                0.0,
                            );
                        }
                    }
                }
            }
        }
        idx.lvl0 = lp.num_cols();
        if let Some(f) = frags {
            for r in &f.reservoirs {
                for &year in &idx.years {
                    for d in 0..ndays {
                        for h in 1..hpd {
                            lp.add_col(
                                &format!("lvl.{}.{}.d{:02}.h{:02}", r.node_id, year, d, h),
                                r.level_min,
                                r.level_max,
                                0.0,
                            );
                        }
                    }
                }
            }
        }
        idx.strt0 = lp.num_cols();
        if let Some(f) = frags {
            for r in &f.reservoirs {
                for &year in &idx.years {
                    lp.add_col(
                        &format!("strt.{}.{}", r.node_id, year),
                        r.level_min,
                        r.level_max,
                        0.0,
                    );
                }
            }
        }
        idx.emis0 = lp.num_cols();
        for &year in &idx.years {
            lp.add_col(&format!("emis.{}", year), 0.0, f64::INFINITY, 0.0);
        }
        idx.n_cols = lp.num_cols();

        Ok(ModelBuilder {
            inputs,
            frags,
            lp,
            idx,
            plant_tech,
            rows: Vec::new(),
            done: [false; 7],
        })
    }

    pub fn index(&self) -> &ModelIndex {
        &self.idx
    }

    fn mark(&mut self, block: usize) -> Result<(), ModelError> {
        if self.done[block] {
            return Err(ModelError::BlockDuplicate { block: BLOCKS[block] });
        }
        self.done[block] = true;
        Ok(())
    }

    fn cf_at(&self, tech: &Technology, ts: usize) -> f64 {
        match self.inputs.tech_cf.get(&tech.id) {
            Some(profile) => profile[ts],
            None => tech.availability,
        }
    }

    /// Peak load of a region in MW for a year: the highest per-slice average
    /// power after demand growth.
    fn peak_mw(&self, region: &str, year: u32) -> f64 {
        let growth = self.inputs.growth_for(region, year);
        let demand = &self.inputs.demand[region];
        demand
            .iter()
            .zip(&self.idx.dur_hours)
            .map(|(mwh, dur)| mwh * growth / dur)
            .fold(0.0f64, f64::max)
    }

    /// Energy balance per region, year, and timeslice: local generation net
    /// of grid losses plus imports minus exports covers demand.
    pub fn add_demand_balance(&mut self) -> Result<(), ModelError> {
        self.mark(0)?;
        let hpd = self.idx.pattern.hours_per_day;
        let regions = self.idx.regions.clone();
        let years = self.idx.years.clone();
        for region in &regions {
            let loss = self.inputs.params.loss_for(region);
            let tech_ids: Vec<usize> = (0..self.idx.techs.len())
                .filter(|&t| self.idx.techs[t].region == *region)
                .collect();
            let border_ids: Vec<usize> = (0..self.idx.borders.len())
                .filter(|&b| self.idx.borders[b].1 == *region)
                .collect();
            for (y_idx, &year) in years.iter().enumerate() {
                let growth = self.inputs.growth_for(region, year);
                for ts in 0..self.idx.n_ts() {
                    let mut terms =
                        Vec::with_capacity(tech_ids.len() + 2 * border_ids.len());
                    for &t in &tech_ids {
                        terms.push((self.idx.gen_col(t, y_idx, ts), 1.0 - loss));
                    }
                    for &b in &border_ids {
                        terms.push((self.idx.imp_col(b, y_idx, ts), 1.0));
                        terms.push((self.idx.exp_col(b, y_idx, ts), -1.0));
                    }
                    self.rows.push(RowSpec {
                        name: format!(
                            "bal.{}.{}.d{:02}.h{:02}",
                            region,
                            year,
                            ts / hpd,
                            ts % hpd
                        ),
                        sense: Sense::Ge,
                        rhs: self.inputs.demand[region][ts] * growth,
                        terms,
                    });
                }
            }
        }
        Ok(())
    }

    /// Capacity accounting and activity limits: total capacity equals the
    /// surviving vintages plus residuals, and generation cannot exceed
    /// capacity times availability times slice duration.
    pub fn add_capacity_activity(&mut self) -> Result<(), ModelError> {
        self.mark(1)?;
        let hpd = self.idx.pattern.hours_per_day;
        let years = self.idx.years.clone();
        for t in 0..self.idx.techs.len() {
            let tech = self.idx.techs[t].clone();
            for (y_idx, &year) in years.iter().enumerate() {
                // tcap(y) - sum of vintages still alive = residual(y).
                // A vintage v serves years v..v+life-1.
                let mut terms = vec![(self.idx.tcap_col(t, y_idx), 1.0)];
                for (v_idx, &v) in years.iter().enumerate() {
                    if v <= year && v + tech.life > year {
                        terms.push((self.idx.ncap_col(t, v_idx), -1.0));
                    }
                }
                self.rows.push(RowSpec {
                    name: format!("cap_def.{}.{}", tech.id, year),
                    sense: Sense::Eq,
                    rhs: tech.residual_in(year),
                    terms,
                });

                for ts in 0..self.idx.n_ts() {
                    let cf = self.cf_at(&tech, ts);
                    let gen = self.idx.gen_col(t, y_idx, ts);
                    if cf == 0.0 {
                        // No output possible in this slice; a bound is
                        // cheaper than a constraint row.
                        self.lp.col_upper[gen] = 0.0;
                        continue;
                    }
                    let tcap = self.idx.tcap_col(t, y_idx);
                    let dur = self.idx.dur_hours[ts];
                    self.rows.push(RowSpec {
                        name: format!(
                            "gencap.{}.{}.d{:02}.h{:02}",
                            tech.id,
                            year,
                            ts / hpd,
                            ts % hpd
                        ),
                        sense: Sense::Le,
                        rhs: 0.0,
                        terms: vec![(gen, 1.0), (tcap, -cf * dur)],
                    });
                }
            }
        }
        Ok(())
    }

    /// Firm capacity per region and year must cover the reserve margin times
    /// peak load.
    pub fn add_reserve_margin(&mut self) -> Result<(), ModelError> {
        self.mark(2)?;
        if self.inputs.relax.skip_reserve_margin {
            return Ok(());
        }
        let margin = self.inputs.params.reserve_margin;
        let regions = self.idx.regions.clone();
        let years = self.idx.years.clone();
        for region in &regions {
            let creditable: Vec<usize> = (0..self.idx.techs.len())
                .filter(|&t| {
                    self.idx.techs[t].region == *region && self.idx.techs[t].firm_credit > 0.0
                })
                .collect();
            for (y_idx, &year) in years.iter().enumerate() {
                let rhs = margin * self.peak_mw(region, year);
                let terms: Vec<(usize, f64)> = creditable
                    .iter()
                    .map(|&t| (self.idx.tcap_col(t, y_idx), self.idx.techs[t].firm_credit))
                    .collect();
                self.rows.push(RowSpec {
                    name: format!("rm.{}.{}", region, year),
                    sense: Sense::Ge,
                    rhs,
                    terms,
                });
            }
        }
        Ok(())
    }

    /// Emission accounting (always) and the ceiling trajectory (when a
    /// policy is active and not relaxed).
    pub fn add_emissions(&mut self) -> Result<(), ModelError> {
        self.mark(3)?;
        let years = self.idx.years.clone();
        for (y_idx, &year) in years.iter().enumerate() {
            let mut terms = vec![(self.idx.emis_col(y_idx), 1.0)];
            for t in 0..self.idx.techs.len() {
                let ef = self.idx.techs[t].emission_t_per_mwh;
                if ef == 0.0 {
                    continue;
                }
                for ts in 0..self.idx.n_ts() {
                    terms.push((self.idx.gen_col(t, y_idx, ts), -ef));
                }
            }
            self.rows.push(RowSpec {
                name: format!("emacct.{}", year),
                sense: Sense::Eq,
                rhs: 0.0,
                terms,
            });

            if self.inputs.relax.skip_emission_limits {
                continue;
            }
            if let Some(policy) = &self.inputs.emissions {
                if let Some(limit) = emission_limit(policy, year) {
                    self.rows.push(RowSpec {
                        name: format!("emcap.{}", year),
                        sense: Sense::Le,
                        rhs: limit,
                        terms: vec![(self.idx.emis_col(y_idx), 1.0)],
                    });
                }
            }
        }
        Ok(())
    }

    /// Cumulative land take of all builds in a pool may not exceed its
    /// budget. Land once claimed stays claimed for the rest of the horizon.
    pub fn add_land_budget(&mut self) -> Result<(), ModelError> {
        self.mark(4)?;
        if self.inputs.relax.skip_land_budgets {
            return Ok(());
        }
        let mut budget_map: BTreeMap<(String, String, String), f64> = BTreeMap::new();
        for b in &self.inputs.land_budgets {
            budget_map.insert((b.region.clone(), b.group.clone(), b.bin.clone()), b.km2);
        }
        let mut users: BTreeMap<(String, String, String), Vec<usize>> = BTreeMap::new();
        for t in 0..self.idx.techs.len() {
            let tech = &self.idx.techs[t];
            let group = match &tech.land_group {
                Some(g) => g.clone(),
                None => continue,
            };
            let bin = tech.land_bin.clone().unwrap_or_else(|| "all".to_string());
            let key = (tech.region.clone(), group, bin);
            if !budget_map.contains_key(&key) {
                return Err(ModelError::Inconsistent {
                    msg: format!(
                        "technology {} consumes land pool {}/{}/{} but no such budget exists",
                        tech.id, key.0, key.1, key.2
                    ),
                });
            }
            users.entry(key).or_default().push(t);
        }
        for (key, tech_ids) in users {
            let km2 = budget_map[&key];
            let mut terms = Vec::with_capacity(tech_ids.len() * self.idx.ny());
            for t in tech_ids {
                for y_idx in 0..self.idx.ny() {
                    terms.push((self.idx.ncap_col(t, y_idx), KM2_PER_MW));
                }
            }
            self.rows.push(RowSpec {
                name: format!("land.{}.{}.{}", key.0, key.1, key.2),
                sense: Sense::Le,
                rhs: km2,
                terms,
            });
        }
        Ok(())
    }

    /// Import/export bounds: interconnector capacity times slice duration.
    pub fn add_trade(&mut self) -> Result<(), ModelError> {
        self.mark(5)?;
        if self.inputs.relax.skip_trade_caps {
            return Ok(());
        }
        for (b_idx, border) in self.inputs.borders.iter().enumerate() {
            for (y_idx, &year) in self.idx.years.iter().enumerate() {
                let cap = border.capacity_mw(year);
                for ts in 0..self.idx.n_ts() {
                    let ub = cap * self.idx.dur_hours[ts];
                    let imp = self.idx.imp_col(b_idx, y_idx, ts);
                    let exp = self.idx.exp_col(b_idx, y_idx, ts);
                    self.lp.col_upper[imp] = ub;
                    self.lp.col_upper[exp] = ub;
                }
            }
        }
        Ok(())
    }

    /// Discounted system cost: overnight investment net of end-of-horizon
    /// salvage, fixed O&M, variable costs, and trade at the selected price.
    pub fn add_objective(&mut self) -> Result<(), ModelError> {
        self.mark(6)?;
        let p = self.inputs.params.clone();
        let disc_after_end = discount(p.discount_rate, p.base_year, p.end_year + 1);
        for t in 0..self.idx.techs.len() {
            let tech = self.idx.techs[t].clone();
            for (y_idx, &year) in self.idx.years.iter().enumerate() {
                let disc = discount(p.discount_rate, p.base_year, year);
                let salvage =
                    tech.capex * salvage_fraction(year, tech.life, p.end_year) * disc_after_end;
                let ncap = self.idx.ncap_col(t, y_idx);
                let tcap = self.idx.tcap_col(t, y_idx);
                self.lp.objective[ncap] = disc * tech.capex - salvage;
                self.lp.objective[tcap] = disc * tech.fixed_om;
                for ts in 0..self.idx.n_ts() {
                    let gen = self.idx.gen_col(t, y_idx, ts);
                    self.lp.objective[gen] = disc * tech.var_om;
                }
            }
        }
        for (b_idx, border) in self.inputs.borders.iter().enumerate() {
            for (y_idx, &year) in self.idx.years.iter().enumerate() {
                let disc = discount(p.discount_rate, p.base_year, year);
                let price = border.price(self.inputs.trade_price, year);
                for ts in 0..self.idx.n_ts() {
                    let imp = self.idx.imp_col(b_idx, y_idx, ts);
                    let exp = self.idx.exp_col(b_idx, y_idx, ts);
                    self.lp.objective[imp] = disc * price;
                    self.lp.objective[exp] = -disc * price;
                }
            }
        }
        Ok(())
    }

    /// Finishes the program: checks every block ran, instantiates the
    /// cascade's water rows for each year, sorts all rows by name, and
    /// validates the result.
    pub fn assemble(mut self) -> Result<(LinearProgram, ModelIndex), ModelError> {
        for (i, &done) in self.done.iter().enumerate() {
            if !done {
                return Err(ModelError::BlockMissing { block: BLOCKS[i] });
            }
        }

        if let Some(frags) = self.frags {
            for (y_idx, &year) in self.idx.years.iter().enumerate() {
                for frag in &frags.rows {
                    let terms: Vec<(usize, f64)> = frag
                        .terms
                        .iter()
                        .map(|&(wref, coef)| {
                            let col = match wref {
                                WaterRef::Flow { link, ts } => {
                                    self.idx.flow_col(link, y_idx, ts)
                                }
                                WaterRef::Level { reservoir, day, hour } => {
                                    self.idx.level_col(reservoir, y_idx, day, hour)
                                }
                                WaterRef::Start { reservoir } => {
                                    self.idx.start_col(reservoir, y_idx)
                                }
                                WaterRef::PlantGen { plant, ts } => {
                                    self.idx.gen_col(self.plant_tech[plant], y_idx, ts)
                                }
                            };
                            (col, coef)
                        })
                        .collect();
                    self.rows.push(RowSpec {
                        name: format!("{}.y{}", frag.label, year),
                        sense: frag.sense,
                        rhs: frag.rhs,
                        terms,
                    });
                }
            }
        }

        self.rows.sort_by(|a, b| a.name.cmp(&b.name));
        for pair in self.rows.windows(2) {
            if pair[0].name == pair[1].name {
                return Err(ModelError::DuplicateRow { name: pair[0].name.clone() });
            }
        }
        for row in &self.rows {
            self.lp.add_row(&row.name, row.sense, row.rhs, &row.terms);
        }
        self.lp.canonicalize();
        self.lp.validate()?;
        Ok((self.lp, self.idx))
    }
}

/// Builds the complete model: every constraint block in canonical order,
/// then assembly.
pub fn build_model(
    inputs: &ModelInputs,
    frags: Option<&CascadeFragments>,
) -> Result<(LinearProgram, ModelIndex), ModelError> {
    let mut b = ModelBuilder::new(inputs, frags)?;
    b.add_demand_balance()?;
    b.add_capacity_activity()?;
    b.add_reserve_margin()?;
    b.add_emissions()?;
    b.add_land_budget()?;
    b.add_trade()?;
    b.add_objective()?;
    b.assemble()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{build_topology, compile_to_model, InflowRecords};
    use crate::model::inputs::*;
    use gridplan_lp::{solve, SolveOptions, Status};
    use std::collections::BTreeMap;

    fn one_year_params() -> SystemParams {
        SystemParams {
            base_year: 2020,
            end_year: 2020,
            discount_rate: 0.05,
            reserve_margin: 1.2,
            loss: BTreeMap::new(),
        }
    }

    fn tech(id: &str, region: &str, kind: &str) -> Technology {
        Technology {
            id: id.to_string(),
            region: region.to_string(),
            kind: kind.to_string(),
            capex: 0.0,
            fixed_om: 0.0,
            var_om: 0.0,
            life: 1,
            emission_t_per_mwh: 0.0,
            availability: 1.0,
            firm_credit: 1.0,
            residual_mw: 0.0,
            residual_until: 9999,
            max_new_mw: f64::INFINITY,
            max_total_mw: f64::INFINITY,
            land_group: None,
            land_bin: None,
        }
    }

    /// One region, one representative day split into two slices of 4380 h.
    fn two_slice_inputs(techs: Vec<Technology>, demand: [f64; 2]) -> ModelInputs {
        ModelInputs {
            params: one_year_params(),
            pattern: DayPattern {
                source_days: vec![0],
                weights: vec![365.0],
                hours_per_day: 2,
            },
            techs,
            tech_cf: BTreeMap::new(),
            demand: BTreeMap::from([("X".to_string(), demand.to_vec())]),
            growth: BTreeMap::new(),
            borders: Vec::new(),
            emissions: None,
            land_budgets: Vec::new(),
            trade_price: TradePrice::Low,
            relax: RelaxFlags::default(),
        }
    }

    fn optimal(
        inputs: &ModelInputs,
        frags: Option<&CascadeFragments>,
    ) -> (f64, Vec<f64>, ModelIndex) {
        let (lp, idx) = build_model(inputs, frags).unwrap();
        let sol = solve(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal, "model should solve");
        (sol.objective, sol.primal, idx)
    }

    #[test]
    fn merit_order_dispatch_matches_hand_cost() {
        // Cheap unit capped at 100 MW; slices need 100 and 200 MW average.
        let mut cheap = tech("cheap", "X", "gas");
        cheap.var_om = 10.0;
        cheap.capex = 500.0;
        cheap.max_total_mw = 100.0;
        let mut dear = tech("backup", "X", "oil");
        dear.var_om = 50.0;
        dear.fixed_om = 1.0;
        let dur = 4380.0;
        let inputs = two_slice_inputs(vec![cheap, dear], [100.0 * dur, 200.0 * dur]);
        let (obj, primal, idx) = optimal(&inputs, None);

        // Hand: cheap builds 100 MW (capex 500/MW), serves both slices at
        // full output; backup covers the 100 MW gap in slice 2. The reserve
        // margin (1.2 * 200 = 240 MW of firm capacity) forces backup up to
        // 140 MW, each costing its 1.0 fixed O&M.
        let hand = 500.0 * 100.0
            + 10.0 * (100.0 * dur + 100.0 * dur)
            + 50.0 * (100.0 * dur)
            + 1.0 * 140.0;
        assert!(
            (obj - hand).abs() <= 1e-9 * hand.abs(),
            "objective {obj} vs hand {hand}"
        );
        let t_cheap = idx.tech_idx("cheap").unwrap();
        let gen0 = primal[idx.gen_col(t_cheap, 0, 0)];
        assert!((gen0 - 100.0 * dur).abs() < 1e-4);

        // Reserve margin binds: firm capacity totals exactly 240 MW.
        let t_dear = idx.tech_idx("backup").unwrap();
        let firm = primal[idx.tcap_col(t_cheap, 0)] + primal[idx.tcap_col(t_dear, 0)];
        assert!((firm - 240.0).abs() < 1e-6, "firm capacity {firm}");
    }

    #[test]
    fn vintages_retire_and_salvage_credits_final_builds() {
        // Flat 100 MW demand for 2020..=2030 with a 5-year technology:
        // rebuilds in 2025 and 2030; the 2030 vintage is brand new at the
        // horizon end and earns its full overnight cost back, discounted.
        let mut params = one_year_params();
        params.end_year = 2030;
        let mut t = tech("unit", "X", "gas");
        t.life = 5;
        t.capex = 1000.0;
        let dur = 4380.0;
        let inputs = ModelInputs {
            params,
            pattern: DayPattern {
                source_days: vec![0],
                weights: vec![365.0],
                hours_per_day: 2,
            },
            techs: vec![t],
            tech_cf: BTreeMap::new(),
            demand: BTreeMap::from([("X".to_string(), vec![100.0 * dur, 100.0 * dur])]),
            growth: BTreeMap::new(),
            borders: Vec::new(),
            emissions: None,
            land_budgets: Vec::new(),
            trade_price: TradePrice::Low,
            relax: RelaxFlags { skip_reserve_margin: true, ..Default::default() },
        };
        let (obj, primal, idx) = optimal(&inputs, None);
        let d = |y: u32| discount(0.05, 2020, y);
        let hand = 100.0 * 1000.0 * (d(2020) + d(2025) + d(2030) - 1.0 * d(2031));
        assert!(
            (obj - hand).abs() <= 1e-9 * hand.abs(),
            "objective {obj} vs hand {hand}"
        );
        let t0 = idx.tech_idx("unit").unwrap();
        for (y_idx, &year) in idx.years.iter().enumerate() {
            let expect = if year % 5 == 0 { 100.0 } else { 0.0 };
            let ncap = primal[idx.ncap_col(t0, y_idx)];
            assert!((ncap - expect).abs() < 1e-6, "ncap {year} = {ncap}");
        }
    }

    #[test]
    fn emission_cap_forces_clean_generation() {
        let mut dirty = tech("dirty", "X", "coal");
        dirty.var_om = 10.0;
        dirty.emission_t_per_mwh = 1.0;
        let mut clean = tech("clean", "X", "wind");
        clean.var_om = 50.0;
        let dur = 4380.0;
        let total = 2.0 * 100.0 * dur;
        let mut inputs = two_slice_inputs(vec![dirty, clean], [100.0 * dur, 100.0 * dur]);
        inputs.emissions = Some(EmissionPolicy {
            baseline_t: total,
            anchors: vec![(2020, 0.5)],
        });
        let (obj, primal, idx) = optimal(&inputs, None);
        let hand = 10.0 * total / 2.0 + 50.0 * total / 2.0;
        assert!((obj - hand).abs() <= 1e-9 * hand, "objective {obj} vs {hand}");
        let y = 0;
        let emis = primal[idx.emis_col(y)];
        assert!(emis <= total / 2.0 + 1e-6, "emissions {emis}");
        // Accounting: emissions equal dirty generation (factor 1).
        let t_dirty = idx.tech_idx("dirty").unwrap();
        let dirty_gen: f64 =
            (0..idx.n_ts()).map(|ts| primal[idx.gen_col(t_dirty, y, ts)]).sum();
        assert!((emis - dirty_gen).abs() < 1e-6);
    }

    #[test]
    fn land_budget_caps_cumulative_builds() {
        let mut wind = tech("wind", "X", "wind");
        wind.availability = 0.5;
        wind.var_om = 1.0;
        wind.land_group = Some("shared".to_string());
        wind.land_bin = Some("0.30-0.40".to_string());
        let mut backup = tech("backup", "X", "gas");
        backup.var_om = 100.0;
        let dur = 4380.0;
        let mut inputs = two_slice_inputs(vec![wind, backup], [100.0 * dur, 100.0 * dur]);
        inputs.land_budgets = vec![LandBudget {
            region: "X".to_string(),
            group: "shared".to_string(),
            bin: "0.30-0.40".to_string(),
            km2: 10.0,
        }];
        inputs.relax.skip_reserve_margin = true;
        let (_, primal, idx) = optimal(&inputs, None);
        let t_wind = idx.tech_idx("wind").unwrap();
        let built = primal[idx.ncap_col(t_wind, 0)];
        let expect = 10.0 / KM2_PER_MW;
        assert!((built - expect).abs() < 1e-6, "wind build {built} vs {expect}");
    }

    #[test]
    fn land_budget_missing_pool_is_an_error() {
        let mut wind = tech("wind", "X", "wind");
        wind.land_group = Some("shared".to_string());
        let inputs = two_slice_inputs(vec![wind], [1000.0, 1000.0]);
        match build_model(&inputs, None) {
            Err(ModelError::Inconsistent { msg }) => assert!(msg.contains("land pool")),
            Err(other) => panic!("wrong error: {other}"),
            Ok(_) => panic!("expected the missing land pool to be rejected"),
        }
    }

    #[test]
    fn imports_fill_gaps_at_the_selected_price() {
        let mut local = tech("local", "X", "gas");
        local.var_om = 30.0;
        local.max_total_mw = 50.0;
        let dur = 4380.0;
        let mk = |price: TradePrice| {
            let mut inputs =
                two_slice_inputs(vec![local.clone()], [100.0 * dur, 100.0 * dur]);
            inputs.relax.skip_reserve_margin = true;
            inputs.borders = vec![Border {
                id: "north".to_string(),
                region: "X".to_string(),
                anchors: vec![BorderAnchor {
                    year: 2020,
                    price_low: 40.0,
                    price_high: 90.0,
                    capacity_mw: 60.0,
                }],
            }];
            inputs.trade_price = price;
            inputs
        };
        let (obj_low, primal, idx) = optimal(&mk(TradePrice::Low), None);
        // Local tops out at 50 MW; net imports cover the other 50 MW in both
        // slices. Gross import/export can offset, so compare the net.
        let net: f64 = (0..idx.n_ts())
            .map(|ts| primal[idx.imp_col(0, 0, ts)] - primal[idx.exp_col(0, 0, ts)])
            .sum();
        assert!((net - 2.0 * 50.0 * dur).abs() < 1e-4, "net imports {net}");
        let (obj_high, _, _) = optimal(&mk(TradePrice::High), None);
        let diff = obj_high - obj_low;
        let expect = (90.0 - 40.0) * net;
        assert!((diff - expect).abs() <= 1e-9 * expect, "price delta {diff} vs {expect}");
    }

    #[test]
    fn cascade_plant_dispatches_up_to_water_and_capacity() {
        let text = "node c catchment river=R\n\
                    node hpp plant region=X rate_mwh_per_mcm=100 capacity_mw=50\n\
                    node out river_segment\n\
                    link c -> hpp\nlink hpp -> out\n";
        let topo = build_topology(text).unwrap();
        let records = InflowRecords {
            rivers: BTreeMap::from([("R".to_string(), vec![10.0; 365])]),
        };
        let pattern =
            DayPattern { source_days: vec![0], weights: vec![365.0], hours_per_day: 2 };
        let frags = compile_to_model(&topo, &records, &pattern).unwrap();

        let mut thermal = tech("thermal", "X", "gas");
        thermal.var_om = 80.0;
        // Demand above what water allows: 10 MCM/day over the year splits to
        // 1825 MCM per slice -> 182,500 MWh; capacity allows 219,000 MWh.
        let inputs = two_slice_inputs(vec![thermal], [200_000.0, 200_000.0]);
        let (obj, primal, idx) = optimal(&inputs, Some(&frags));

        let t_h = idx.tech_idx("hpp").unwrap();
        for ts in 0..2 {
            let g = primal[idx.gen_col(t_h, 0, ts)];
            assert!((g - 182_500.0).abs() < 1e-3, "hydro gen {g}");
        }
        let hand = 80.0 * 2.0 * (200_000.0 - 182_500.0);
        assert!((obj - hand).abs() <= 1e-6 * hand, "objective {obj} vs {hand}");
    }

    #[test]
    fn blocks_must_run_exactly_once() {
        let inputs = two_slice_inputs(vec![tech("t", "X", "gas")], [100.0, 100.0]);
        let mut b = ModelBuilder::new(&inputs, None).unwrap();
        b.add_demand_balance().unwrap();
        match b.add_demand_balance() {
            Err(ModelError::BlockDuplicate { block }) => assert_eq!(block, "demand_balance"),
            other => panic!("expected duplicate-block error, got {other:?}"),
        }

        match ModelBuilder::new(&inputs, None).unwrap().assemble() {
            Err(ModelError::BlockMissing { block }) => assert_eq!(block, "demand_balance"),
            Err(other) => panic!("unexpected error {other}"),
            Ok(_) => panic!("assemble should fail before any block ran"),
        }
    }

    #[test]
    fn identical_inputs_build_identical_programs() {
        let mut wind = tech("wind", "X", "wind");
        wind.availability = 0.4;
        let mut gas = tech("gas", "X", "gas");
        gas.var_om = 45.0;
        let inputs = two_slice_inputs(vec![wind, gas], [50_000.0, 80_000.0]);
        let (lp1, _) = build_model(&inputs, None).unwrap();
        let (lp2, _) = build_model(&inputs, None).unwrap();
        assert_eq!(lp1.dump_string(), lp2.dump_string());
        assert!(lp1.structurally_equal(&lp2, 0.0));
    }

    #[test]
    fn zero_cf_slices_become_bounds_not_rows() {
        let mut solar = tech("solar", "X", "solar");
        solar.availability = 1.0;
        let mut inputs = two_slice_inputs(vec![solar], [1000.0, 0.0]);
        inputs.tech_cf = BTreeMap::from([("solar".to_string(), vec![0.6, 0.0])]);
        inputs.relax.skip_reserve_margin = true;
        let (lp, idx) = build_model(&inputs, None).unwrap();
        let night = idx.gen_col(0, 0, 1);
        assert_eq!(lp.col_upper[night], 0.0);
        assert!(!lp.row_names.iter().any(|n| n == "gencap.solar.2020.d00.h01"));
        assert!(lp.row_names.iter().any(|n| n == "gencap.solar.2020.d00.h00"));
    }

    #[test]
    fn growth_scales_demand_and_peaks() {
        let mut params = one_year_params();
        params.end_year = 2021;
        let mut t = tech("unit", "X", "gas");
        t.var_om = 10.0;
        t.capex = 1.0;
        let dur = 4380.0;
        let inputs = ModelInputs {
            params,
            pattern: DayPattern {
                source_days: vec![0],
                weights: vec![365.0],
                hours_per_day: 2,
            },
            techs: vec![t],
            tech_cf: BTreeMap::new(),
            demand: BTreeMap::from([("X".to_string(), vec![100.0 * dur, 200.0 * dur])]),
            growth: BTreeMap::from([("X".to_string(), vec![(2020, 1.0), (2021, 1.5)])]),
            borders: Vec::new(),
            emissions: None,
            land_budgets: Vec::new(),
            trade_price: TradePrice::Low,
            relax: RelaxFlags::default(),
        };
        let (_, primal, idx) = optimal(&inputs, None);
        let t0 = 0;
        // 2021 firm capacity covers 1.2 times the grown 300 MW peak.
        let tcap_2021 = primal[idx.tcap_col(t0, 1)];
        assert!((tcap_2021 - 360.0).abs() < 1e-6, "tcap {tcap_2021}");
        let gen_2021: f64 = (0..2).map(|ts| primal[idx.gen_col(t0, 1, ts)]).sum();
        assert!((gen_2021 - 1.5 * 300.0 * dur).abs() < 1e-3);
    }
}
