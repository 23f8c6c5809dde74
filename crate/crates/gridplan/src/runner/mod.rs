//! Scenario configs, run orchestration, result files and reports.
//!
//! A scenario is one plain-text config file naming the input data directory,
//! the scenario family, the trade-price variant, and an explicit list of
//! override records, so the delta between two scenarios is auditable from the
//! configs alone. [`run`] loads the data, applies the overrides, assembles
//! and solves the model, verifies the returned point independently against
//! the problem data, and writes the result tables plus a manifest of content
//! digests. Reruns of the same config produce byte-identical files; wall
//! times live in a separate file the manifest does not hash.
//!
//! Report tables use GW, GWh, Mt CO2 and MCM; the model itself works in MW,
//! MWh, tonnes and MCM.

pub mod reports;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::cascade::{self, CascadeError, CascadeFragments};
use crate::model::{
    build_model, read_demand_csv, read_emissions_csv, read_growth_csv, read_land_budget_csv,
    read_params_csv, read_tech_cf_csv, read_technologies_csv, read_trade_csv, read_weights_csv,
    ModelError, ModelIndex, ModelInputs, RelaxFlags, TradePrice,
};
use gridplan_lp::{check, mps, solve, LinearProgram, Solution, SolveOptions, Status};

const MW_PER_GW: f64 = 1000.0;
const MWH_PER_GWH: f64 = 1000.0;
const T_PER_MT: f64 = 1e6;

/// Tolerance for the independent post-solve verification of the primal point.
const SOLVE_TOL: f64 = 1e-6;

#[derive(Debug)]
pub enum RunError {
    Io { path: String, source: std::io::Error },
    /// A config file problem: syntax, missing keys, or an override whose
    /// target does not resolve against the loaded data.
    Config { path: String, msg: String },
    Model { source: ModelError },
    Cascade { source: CascadeError },
    Lp { source: gridplan_lp::Error },
    /// The scenario has no feasible plan. `groups` is an irreducible set of
    /// user-constraint groups that together cause the conflict; empty means
    /// the system cannot serve demand even with every relaxable group
    /// removed.
    Infeasible { groups: Vec<String> },
    Unbounded,
    Solver { msg: String },
    /// A report could not be assembled from the run directories given.
    Report { msg: String },
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Io { path, source } => write!(f, "{path}: {source}"),
            RunError::Config { path, msg } => write!(f, "{path}: {msg}"),
            RunError::Model { source } => write!(f, "{source}"),
            RunError::Cascade { source } => write!(f, "{source}"),
            RunError::Lp { source } => write!(f, "{source}"),
            RunError::Infeasible { groups } => {
                if groups.is_empty() {
                    write!(
                        f,
                        "model is infeasible even with every relaxable constraint group \
                         removed; the system cannot serve the given demand"
                    )
                } else {
                    write!(
                        f,
                        "model is infeasible; irreducible binding constraint groups: {}",
                        groups.join(", ")
                    )
                }
            }
            RunError::Unbounded => write!(f, "model is unbounded; check costs and bounds"),
            RunError::Solver { msg } => write!(f, "solver: {msg}"),
            RunError::Report { msg } => write!(f, "report: {msg}"),
        }
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            RunError::Io { source, .. } => Some(source),
            RunError::Model { source } => Some(source),
            RunError::Cascade { source } => Some(source),
            RunError::Lp { source } => Some(source),
            _ => None,
        }
    }
}

impl From<ModelError> for RunError {
    fn from(source: ModelError) -> Self {
        RunError::Model { source }
    }
}

impl From<CascadeError> for RunError {
    fn from(source: CascadeError) -> Self {
        RunError::Cascade { source }
    }
}

impl From<gridplan_lp::Error> for RunError {
    fn from(source: gridplan_lp::Error) -> Self {
        RunError::Lp { source }
    }
}

/// The three scenario families a config can declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Reference course: current build rules, no emission ceiling.
    Reference,
    /// Reference plus wind development on agricultural land.
    AgriculturalWind,
    /// Reference plus a declining emission ceiling.
    EmissionLimited,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Reference => "REF",
            ScenarioKind::AgriculturalWind => "AG",
            ScenarioKind::EmissionLimited => "EL",
        }
    }

    pub fn parse(token: &str) -> Option<ScenarioKind> {
        match token.to_ascii_uppercase().as_str() {
            "REF" => Some(ScenarioKind::Reference),
            "AG" => Some(ScenarioKind::AgriculturalWind),
            "EL" => Some(ScenarioKind::EmissionLimited),
            _ => None,
        }
    }
}

/// One explicit scenario delta. Configs list these rather than implying them
/// from the scenario name, so a run's constraints are auditable line by line.
#[derive(Debug, Clone, PartialEq)]
pub enum OverrideRec {
    /// Cap yearly new builds of one technology, by id.
    NewCapTech { tech: String, mw: f64 },
    /// Cap yearly new builds of every technology of a kind within a region.
    NewCapKind { kind: String, region: String, mw: f64 },
    /// Cap yearly capacity additions at every cascade plant.
    CascadeNewCap { mw: f64 },
    /// Allow or forbid new builds for technologies drawing on a land pool.
    LandGroup { group: String, enabled: bool },
    /// Activate or deactivate the emission-ceiling trajectory.
    EmissionLimits { enabled: bool },
}

/// A parsed scenario config.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub trade: TradePrice,
    pub data_dir: PathBuf,
    /// Output directory; may be absent in the file and supplied by the
    /// caller before [`run`].
    pub out_dir: Option<PathBuf>,
    /// Recorded in the manifest for provenance; the solve itself is
    /// deterministic and does not consume it.
    pub seed: u64,
    pub overrides: Vec<OverrideRec>,
    /// Hex SHA-256 of the raw config file bytes.
    pub digest: String,
    pub path: PathBuf,
}

fn hex_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Parses a scenario config file.
///
/// Grammar, one statement per line (`#` starts a comment):
/// ```text
/// scenario = REF | AG | EL
/// trade_price = low | high
/// data = <dir>                # relative paths resolve against the config
/// out = <dir>                 # optional; callers may supply it instead
/// seed = <u64>                # optional provenance tag, default 0
/// override new_cap_bound tech=<id> mw=<f>
/// override new_cap_bound kind=<kind> region=<region> mw=<f>
/// override cascade_new_cap mw=<f>
/// override land_group group=<pool> enabled=<true|false>
/// override emission_limits enabled=<true|false>
/// ```
/// Exactly one `scenario` and one `trade_price` are required. The emission
/// trajectory is inactive unless an `emission_limits enabled=true` override
/// turns it on.
pub fn read_config(path: &Path) -> Result<RunConfig, RunError> {
    let origin = path.display().to_string();
    let bytes =
        fs::read(path).map_err(|e| RunError::Io { path: origin.clone(), source: e })?;
    let digest = hex_sha256(&bytes);
    let text = String::from_utf8(bytes).map_err(|_| RunError::Config {
        path: origin.clone(),
        msg: "config is not valid UTF-8".to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let mut scenario: Option<ScenarioKind> = None;
    let mut trade: Option<TradePrice> = None;
    let mut data_dir: Option<PathBuf> = None;
    let mut out_dir: Option<PathBuf> = None;
    let mut seed: u64 = 0;
    let mut overrides = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lno = lineno + 1;
        let fail = |msg: String| RunError::Config {
            path: origin.clone(),
            msg: format!("line {lno}: {msg}"),
        };

        if let Some(rest) = line.strip_prefix("override ") {
            overrides.push(parse_override(rest.trim()).map_err(fail)?);
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => return Err(fail(format!("expected `key = value` or `override ...`, got {line:?}"))),
        };
        match key {
            "scenario" => {
                let kind = ScenarioKind::parse(value)
                    .ok_or_else(|| fail(format!("unknown scenario {value:?} (expected REF, AG or EL)")))?;
                if scenario.replace(kind).is_some() {
                    return Err(fail("scenario declared twice".to_string()));
                }
            }
            "trade_price" => {
                let v = match value.to_ascii_lowercase().as_str() {
                    "low" => TradePrice::Low,
                    "high" => TradePrice::High,
                    _ => return Err(fail(format!("trade_price must be low or high, got {value:?}"))),
                };
                if trade.replace(v).is_some() {
                    return Err(fail("trade_price declared twice".to_string()));
                }
            }
            "data" => {
                if data_dir.replace(base.join(value)).is_some() {
                    return Err(fail("data declared twice".to_string()));
                }
            }
            "out" => {
                if out_dir.replace(base.join(value)).is_some() {
                    return Err(fail("out declared twice".to_string()));
                }
            }
            "seed" => {
                seed = value
                    .parse()
                    .map_err(|_| fail(format!("seed must be an unsigned integer, got {value:?}")))?;
            }
            other => return Err(fail(format!("unknown key {other:?}"))),
        }
    }

    let missing = |what: &str| RunError::Config {
        path: origin.clone(),
        msg: format!("config must declare exactly one `{what}`"),
    };
    Ok(RunConfig {
        scenario: scenario.ok_or_else(|| missing("scenario"))?,
        trade: trade.ok_or_else(|| missing("trade_price"))?,
        data_dir: data_dir.ok_or_else(|| missing("data"))?,
        out_dir,
        seed,
        overrides,
        digest,
        path: path.to_path_buf(),
    })
}

fn parse_override(rest: &str) -> Result<OverrideRec, String> {
    let mut toks = rest.split_whitespace();
    let target = toks.next().ok_or_else(|| "override needs a target".to_string())?;
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for tok in toks {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {tok:?}"))?;
        if kv.insert(k.to_string(), v.to_string()).is_some() {
            return Err(format!("duplicate key {k:?}"));
        }
    }
    fn take_num(
        kv: &mut BTreeMap<String, String>,
        target: &str,
        key: &str,
    ) -> Result<f64, String> {
        let v = kv.remove(key).ok_or_else(|| format!("{target} needs {key}=<number>"))?;
        v.parse().map_err(|_| format!("{key} is not a number: {v:?}"))
    }
    let rec = match target {
        "new_cap_bound" => {
            let mw = take_num(&mut kv, target, "mw")?;
            let tech = kv.remove("tech");
            let kind = kv.remove("kind");
            let region = kv.remove("region");
            match (tech, kind, region) {
                (Some(tech), None, None) => OverrideRec::NewCapTech { tech, mw },
                (None, Some(kind), Some(region)) => OverrideRec::NewCapKind { kind, region, mw },
                _ => {
                    return Err(
                        "new_cap_bound needs either tech=<id> or kind=<kind> region=<region>"
                            .to_string(),
                    )
                }
            }
        }
        "cascade_new_cap" => OverrideRec::CascadeNewCap { mw: take_num(&mut kv, target, "mw")? },
        "land_group" => {
            let group = kv.remove("group").ok_or("land_group needs group=<pool>")?;
            let enabled = parse_bool(kv.remove("enabled"), target)?;
            OverrideRec::LandGroup { group, enabled }
        }
        "emission_limits" => {
            OverrideRec::EmissionLimits { enabled: parse_bool(kv.remove("enabled"), target)? }
        }
        other => return Err(format!("unknown override target {other:?}")),
    };
    if let Some(k) = kv.keys().next() {
        return Err(format!("unexpected key {k:?} for {target}"));
    }
    Ok(rec)
}

fn parse_bool(value: Option<String>, target: &str) -> Result<bool, String> {
    match value.as_deref() {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        Some(v) => Err(format!("enabled must be true or false, got {v:?}")),
        None => Err(format!("{target} needs enabled=<true|false>")),
    }
}

/// Loads a data directory into model inputs plus, when the directory has a
/// cascade description, compiled cascade fragments.
///
/// Required files: `params.csv`, `technologies.csv`, `demand.csv`,
/// `weights.csv`. Optional: `tech_cf.csv`, `demand_growth.csv`, `trade.csv`,
/// `emissions.csv`, `land_budget.csv`, and `cascade.txt` with `inflows.csv`.
pub fn load_inputs(dir: &Path) -> Result<(ModelInputs, Option<CascadeFragments>), RunError> {
    let params = read_params_csv(&dir.join("params.csv"))?;
    let techs = read_technologies_csv(&dir.join("technologies.csv"))?;
    let (demand, n_days, hpd) = read_demand_csv(&dir.join("demand.csv"))?;
    let pattern = read_weights_csv(&dir.join("weights.csv"), hpd)?;
    if pattern.source_days.len() != n_days {
        return Err(RunError::Config {
            path: dir.display().to_string(),
            msg: format!(
                "weights.csv lists {} representative days but demand.csv covers {}",
                pattern.source_days.len(),
                n_days
            ),
        });
    }

    let optional = |name: &str| -> Option<PathBuf> {
        let p = dir.join(name);
        p.exists().then_some(p)
    };
    let tech_cf = match optional("tech_cf.csv") {
        Some(p) => read_tech_cf_csv(&p, n_days, hpd)?,
        None => BTreeMap::new(),
    };
    let growth = match optional("demand_growth.csv") {
        Some(p) => read_growth_csv(&p)?,
        None => BTreeMap::new(),
    };
    let borders = match optional("trade.csv") {
        Some(p) => read_trade_csv(&p)?,
        None => Vec::new(),
    };
    let emissions = match optional("emissions.csv") {
        Some(p) => read_emissions_csv(&p)?,
        None => None,
    };
    let land_budgets = match optional("land_budget.csv") {
        Some(p) => read_land_budget_csv(&p)?,
        None => Vec::new(),
    };
    let frags = match optional("cascade.txt") {
        Some(p) => {
            let text = fs::read_to_string(&p)
                .map_err(|e| RunError::Io { path: p.display().to_string(), source: e })?;
            let topo = cascade::build_topology(&text)?;
            let inflow_path = dir.join("inflows.csv");
            if !inflow_path.exists() {
                return Err(RunError::Config {
                    path: dir.display().to_string(),
                    msg: "cascade.txt is present but inflows.csv is missing".to_string(),
                });
            }
            let records = cascade::read_inflows_csv(&inflow_path)?;
            Some(cascade::compile_to_model(&topo, &records, &pattern)?)
        }
        None => None,
    };

    let inputs = ModelInputs {
        params,
        pattern,
        techs,
        tech_cf,
        demand,
        growth,
        borders,
        emissions,
        land_budgets,
        trade_price: TradePrice::Low,
        relax: RelaxFlags::default(),
    };
    Ok((inputs, frags))
}

/// Applies the config's trade variant and override records to loaded inputs.
/// Every override must resolve against the data; one that targets an unknown
/// technology, region, land pool, or absent cascade / emission data is an
/// error. The emission trajectory stays inactive unless an override enables
/// it.
pub fn apply_overrides(
    inputs: &mut ModelInputs,
    frags: &mut Option<CascadeFragments>,
    config: &RunConfig,
) -> Result<(), RunError> {
    let origin = config.path.display().to_string();
    let fail = |msg: String| RunError::Config { path: origin.clone(), msg };

    inputs.trade_price = config.trade;
    let mut emissions_on = false;
    for rec in &config.overrides {
        match rec {
            OverrideRec::NewCapTech { tech, mw } => {
                let t = inputs
                    .techs
                    .iter_mut()
                    .find(|t| &t.id == tech)
                    .ok_or_else(|| fail(format!("override targets unknown technology {tech:?}")))?;
                t.max_new_mw = *mw;
            }
            OverrideRec::NewCapKind { kind, region, mw } => {
                let mut hit = false;
                for t in inputs
                    .techs
                    .iter_mut()
                    .filter(|t| &t.kind == kind && &t.region == region)
                {
                    t.max_new_mw = *mw;
                    hit = true;
                }
                if !hit {
                    return Err(fail(format!(
                        "override targets no {kind:?} technology in region {region:?}"
                    )));
                }
            }
            OverrideRec::CascadeNewCap { mw } => {
                let f = frags.as_mut().ok_or_else(|| {
                    fail("override targets the cascade, but the data directory has none".to_string())
                })?;
                for plant in f.plants.iter_mut() {
                    plant.data.max_new_mw = *mw;
                }
            }
            OverrideRec::LandGroup { group, enabled } => {
                let mut hit = false;
                for t in inputs
                    .techs
                    .iter_mut()
                    .filter(|t| t.land_group.as_deref() == Some(group.as_str()))
                {
                    if !*enabled {
                        t.max_new_mw = 0.0;
                    }
                    hit = true;
                }
                if !hit {
                    return Err(fail(format!("override targets unknown land pool {group:?}")));
                }
            }
            OverrideRec::EmissionLimits { enabled } => {
                if *enabled && inputs.emissions.is_none() {
                    return Err(fail(
                        "emission limits enabled, but the data directory has no emissions.csv"
                            .to_string(),
                    ));
                }
                emissions_on = *enabled;
            }
        }
    }
    if !emissions_on {
        inputs.emissions = None;
    }
    Ok(())
}

fn relax_all() -> RelaxFlags {
    RelaxFlags {
        skip_emission_limits: true,
        skip_land_budgets: true,
        skip_new_cap_bounds: true,
        skip_total_cap_bounds: true,
        skip_reserve_margin: true,
        skip_trade_caps: true,
    }
}

fn relax_all_except(enforced: &[&str]) -> RelaxFlags {
    let mut f = relax_all();
    for g in enforced {
        match *g {
            "emission_limits" => f.skip_emission_limits = false,
            "land_budgets" => f.skip_land_budgets = false,
            "new_capacity_bounds" => f.skip_new_cap_bounds = false,
            "total_capacity_bounds" => f.skip_total_cap_bounds = false,
            "reserve_margin" => f.skip_reserve_margin = false,
            "trade_caps" => f.skip_trade_caps = false,
            _ => {}
        }
    }
    f
}

/// Finds an irreducible set of constraint groups responsible for an
/// infeasible model by a deletion filter: start from all groups enforced,
/// then drop each group whose removal leaves the model infeasible anyway.
/// What remains is minimal in the sense that re-relaxing any single member
/// makes the model feasible. Returns an empty set when the model stays
/// infeasible with every relaxable group removed.
pub fn diagnose_infeasibility(
    inputs: &ModelInputs,
    frags: Option<&CascadeFragments>,
) -> Result<Vec<String>, RunError> {
    let infeasible_with = |relax: RelaxFlags| -> Result<bool, RunError> {
        let mut trial = inputs.clone();
        trial.relax = relax;
        let (lp, _) = build_model(&trial, frags)?;
        let sol = solve(&lp, &SolveOptions::default())?;
        Ok(sol.status == Status::Infeasible)
    };

    if infeasible_with(relax_all())? {
        return Ok(Vec::new());
    }
    let mut enforced: Vec<&str> = RelaxFlags::GROUPS.to_vec();
    for g in RelaxFlags::GROUPS {
        let without: Vec<&str> = enforced.iter().copied().filter(|&x| x != g).collect();
        if infeasible_with(relax_all_except(&without))? {
            enforced = without;
        }
    }
    Ok(enforced.into_iter().map(String::from).collect())
}

fn infeasibility_text(groups: &[String]) -> String {
    let mut buf = String::from("status infeasible\n");
    if groups.is_empty() {
        buf.push_str(
            "The model stays infeasible with every relaxable constraint group removed.\n\
             The physical system (demand, profiles, cascade water balance) cannot be\n\
             satisfied regardless of capacity, land, trade or policy limits.\n",
        );
    } else {
        buf.push_str(
            "Irreducible set of binding constraint groups (relaxing any one of these\n\
             makes the model feasible):\n",
        );
        for g in groups {
            buf.push_str("  ");
            buf.push_str(g);
            buf.push('\n');
        }
    }
    buf
}

/// What [`run`] hands back for display; the full results live in the output
/// directory.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub scenario: &'static str,
    pub out_dir: PathBuf,
    pub objective: f64,
    pub lp_rows: usize,
    pub lp_cols: usize,
    pub iterations: usize,
}

fn write_file(path: &Path, content: &str) -> Result<(), RunError> {
    fs::write(path, content)
        .map_err(|e| RunError::Io { path: path.display().to_string(), source: e })
}

/// Executes a scenario end to end and writes the result files.
///
/// Output directory contents:
/// - `capacity.csv` — new and total capacity per technology and year, GW.
/// - `generation.csv` — generation per technology, year and timeslice, GWh.
/// - `trade_flows.csv` — imports/exports per border, year and timeslice, GWh.
/// - `emissions.csv` — annual emissions, Mt CO2.
/// - `storage.csv` — reservoir levels per year and timeslice boundary, MCM.
/// - `water_flows.csv` — water moved per link, year and timeslice, MCM.
/// - `report.txt` — short human-readable summary.
/// - `model.mps`, `names.csv` — the solved program and its name table.
/// - `manifest.json` — provenance: config digest, code version, seed, file
///   digests.
/// - `timings.txt` — wall times; intentionally not hashed in the manifest so
///   identical configs yield identical manifests.
pub fn run(config: &RunConfig) -> Result<RunSummary, RunError> {
    let out_dir = config.out_dir.clone().ok_or_else(|| RunError::Config {
        path: config.path.display().to_string(),
        msg: "no output directory: set `out =` in the config or pass one explicitly".to_string(),
    })?;

    let t0 = Instant::now();
    let (mut inputs, mut frags) = load_inputs(&config.data_dir)?;
    apply_overrides(&mut inputs, &mut frags, config)?;
    let t_load = t0.elapsed();

    let (lp, idx) = build_model(&inputs, frags.as_ref())?;
    let t_build = t0.elapsed();

    let sol = solve(&lp, &SolveOptions::default())?;
    let t_solve = t0.elapsed();

    fs::create_dir_all(&out_dir)
        .map_err(|e| RunError::Io { path: out_dir.display().to_string(), source: e })?;

    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => {
            let groups = diagnose_infeasibility(&inputs, frags.as_ref())?;
            write_file(&out_dir.join("infeasibility.txt"), &infeasibility_text(&groups))?;
            return Err(RunError::Infeasible { groups });
        }
        Status::Unbounded => return Err(RunError::Unbounded),
        Status::IterationLimit => {
            return Err(RunError::Solver {
                msg: format!("iteration limit reached after {}", sol.stats.iterations),
            })
        }
    }

    let report = check::check_solution(&lp, &sol.primal, SOLVE_TOL)?;
    if !report.pass {
        return Err(RunError::Solver {
            msg: format!(
                "solution failed independent verification: worst row {} breaches by {:e}, \
                 worst column {} by {:e}",
                report.worst_row.as_deref().unwrap_or("-"),
                report.max_row_violation,
                report.worst_col.as_deref().unwrap_or("-"),
                report.max_bound_violation
            ),
        });
    }

    let files: Vec<(&str, String)> = vec![
        ("capacity.csv", capacity_csv(&idx, &sol.primal)),
        ("generation.csv", generation_csv(&idx, &sol.primal)),
        ("trade_flows.csv", trade_flows_csv(&idx, &sol.primal)),
        ("emissions.csv", emissions_csv(&idx, &sol.primal)),
        ("storage.csv", storage_csv(&idx, &sol.primal)),
        ("water_flows.csv", water_flows_csv(&idx, &sol.primal)),
        ("report.txt", report_text(config, &idx, &sol)),
        ("model.mps", mps::write_mps(&lp)),
        ("names.csv", mps::names_table_csv(&lp)),
    ];
    let mut hashes: BTreeMap<String, String> = BTreeMap::new();
    for (name, content) in &files {
        write_file(&out_dir.join(name), content)?;
        hashes.insert(name.to_string(), hex_sha256(content.as_bytes()));
    }

    let manifest = manifest_json(config, &lp, &sol, &hashes);
    write_file(&out_dir.join("manifest.json"), &manifest)?;

    let t_write = t0.elapsed();
    let timings = format!(
        "load_ms {}\nbuild_ms {}\nsolve_ms {}\nwrite_ms {}\ntotal_ms {}\niterations {}\n",
        t_load.as_millis(),
        (t_build - t_load).as_millis(),
        (t_solve - t_build).as_millis(),
        (t_write - t_solve).as_millis(),
        t_write.as_millis(),
        sol.stats.iterations,
    );
    write_file(&out_dir.join("timings.txt"), &timings)?;

    Ok(RunSummary {
        scenario: config.scenario.as_str(),
        out_dir,
        objective: sol.objective,
        lp_rows: lp.num_rows(),
        lp_cols: lp.num_cols(),
        iterations: sol.stats.iterations,
    })
}

fn capacity_csv(idx: &ModelIndex, primal: &[f64]) -> String {
    let mut buf = String::from("tech,year,new_gw,total_gw\n");
    for (t, tech) in idx.techs.iter().enumerate() {
        for (y, &year) in idx.years.iter().enumerate() {
            let new = primal[idx.ncap_col(t, y)] / MW_PER_GW;
            let total = primal[idx.tcap_col(t, y)] / MW_PER_GW;
            buf.push_str(&format!("{},{year},{new},{total}\n", tech.id));
        }
    }
    buf
}

fn generation_csv(idx: &ModelIndex, primal: &[f64]) -> String {
    let hpd = idx.pattern.hours_per_day;
    let mut buf = String::from("tech,year,rep_day,hour,gwh\n");
    for (t, tech) in idx.techs.iter().enumerate() {
        for (y, &year) in idx.years.iter().enumerate() {
            for ts in 0..idx.n_ts() {
                let gwh = primal[idx.gen_col(t, y, ts)] / MWH_PER_GWH;
                buf.push_str(&format!(
                    "{},{year},{},{},{gwh}\n",
                    tech.id,
                    ts / hpd,
                    ts % hpd
                ));
            }
        }
    }
    buf
}

fn trade_flows_csv(idx: &ModelIndex, primal: &[f64]) -> String {
    let hpd = idx.pattern.hours_per_day;
    let mut buf = String::from("border,year,rep_day,hour,import_gwh,export_gwh\n");
    for (b, (border, _)) in idx.borders.iter().enumerate() {
        for (y, &year) in idx.years.iter().enumerate() {
            for ts in 0..idx.n_ts() {
                let imp = primal[idx.imp_col(b, y, ts)] / MWH_PER_GWH;
                let exp = primal[idx.exp_col(b, y, ts)] / MWH_PER_GWH;
                buf.push_str(&format!(
                    "{border},{year},{},{},{imp},{exp}\n",
                    ts / hpd,
                    ts % hpd
                ));
            }
        }
    }
    buf
}

fn emissions_csv(idx: &ModelIndex, primal: &[f64]) -> String {
    let mut buf = String::from("year,mt_co2\n");
    for (y, &year) in idx.years.iter().enumerate() {
        let mt = primal[idx.emis_col(y)] / T_PER_MT;
        buf.push_str(&format!("{year},{mt}\n"));
    }
    buf
}

fn storage_csv(idx: &ModelIndex, primal: &[f64]) -> String {
    let hpd = idx.pattern.hours_per_day;
    let n_days = idx.pattern.source_days.len();
    let mut buf = String::from("reservoir,year,rep_day,hour,level_mcm\n");
    for (r, name) in idx.reservoirs.iter().enumerate() {
        for (y, &year) in idx.years.iter().enumerate() {
            for d in 0..n_days {
                for h in 0..hpd {
                    // Boundary 0 of every day is the shared start level.
                    let col = if h == 0 { idx.start_col(r, y) } else { idx.level_col(r, y, d, h) };
                    let level = primal[col];
                    buf.push_str(&format!("{name},{year},{d},{h},{level}\n"));
                }
            }
        }
    }
    buf
}

fn water_flows_csv(idx: &ModelIndex, primal: &[f64]) -> String {
    let hpd = idx.pattern.hours_per_day;
    let mut buf = String::from("from,to,year,rep_day,hour,mcm\n");
    for (l, (from, to)) in idx.links.iter().enumerate() {
        for (y, &year) in idx.years.iter().enumerate() {
            for ts in 0..idx.n_ts() {
                let mcm = primal[idx.flow_col(l, y, ts)];
                buf.push_str(&format!(
                    "{from},{to},{year},{},{},{mcm}\n",
                    ts / hpd,
                    ts % hpd
                ));
            }
        }
    }
    buf
}

fn report_text(config: &RunConfig, idx: &ModelIndex, sol: &Solution) -> String {
    let trade = match config.trade {
        TradePrice::Low => "low",
        TradePrice::High => "high",
    };
    let mut buf = format!(
        "scenario {} (trade prices: {trade})\nyears {}..{}, {} representative days x {} slices\n\
         objective (discounted system cost): {}\n",
        config.scenario.as_str(),
        idx.years.first().copied().unwrap_or(0),
        idx.years.last().copied().unwrap_or(0),
        idx.pattern.source_days.len(),
        idx.pattern.hours_per_day,
        sol.objective,
    );
    buf.push_str("\nnew capacity over the horizon (GW):\n");
    for (t, tech) in idx.techs.iter().enumerate() {
        let total_new: f64 =
            (0..idx.ny()).map(|y| sol.primal[idx.ncap_col(t, y)]).sum::<f64>() / MW_PER_GW;
        buf.push_str(&format!("  {:<24} {}\n", tech.id, total_new));
    }
    buf.push_str("\nannual emissions (Mt CO2):\n");
    for (y, &year) in idx.years.iter().enumerate() {
        if y == 0 || y == idx.ny() - 1 || year % 10 == 0 {
            let mt = sol.primal[idx.emis_col(y)] / T_PER_MT;
            buf.push_str(&format!("  {year}  {mt}\n"));
        }
    }
    buf
}

fn manifest_json(
    config: &RunConfig,
    lp: &LinearProgram,
    sol: &Solution,
    hashes: &BTreeMap<String, String>,
) -> String {
    let files: serde_json::Map<String, serde_json::Value> = hashes
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
        .collect();
    let doc = serde_json::json!({
        "code_version": env!("CARGO_PKG_VERSION"),
        "config_digest": config.digest,
        "files": files,
        "lp": { "cols": lp.num_cols(), "rows": lp.num_rows() },
        "objective": sol.objective,
        "scenario": config.scenario.as_str(),
        "seed": config.seed,
        "status": "optimal",
        "trade_price": match config.trade { TradePrice::Low => "low", TradePrice::High => "high" },
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn write(dir: &Path, name: &str, content: &str) {
        fs::write(dir.join(name), content).unwrap();
    }

    /// Two regions, two technologies, one border, 2 years, 1 day x 2 slices.
    fn tiny_data_dir(dir: &Path) {
        write(
            dir,
            "params.csv",
            "key,region,value\nbase_year,,2020\nend_year,,2021\ndiscount_rate,,0.0\n\
             reserve_margin,,0.0\n",
        );
        write(
            dir,
            "technologies.csv",
            "id,region,kind,capex,fixed_om,var_om,life,emission_t_per_mwh,availability,\
             firm_credit,residual_mw,residual_until,max_new_mw,max_total_mw,land_group,land_bin\n\
             coal_a,A,coal,1000,1,10,30,0.9,1.0,1.0,0,9999,,,,\n\
             wind_b,B,wind,800,1,0,25,0,0.4,0.2,0,9999,,,shared,all\n",
        );
        write(
            dir,
            "demand.csv",
            "region,rep_day,hour,mwh\nA,0,0,438000\nA,0,1,438000\nB,0,0,219000\nB,0,1,219000\n",
        );
        write(dir, "weights.csv", "rep_day,source_day,weight_days\n0,0,365\n");
        write(
            dir,
            "trade.csv",
            "border,region,year,price_low,price_high,capacity_mw\n\
             x_a,A,2020,30,60,500\n",
        );
        write(
            dir,
            "emissions.csv",
            "key,year,value\nbaseline_t,2020,800000\nlimit_fraction,2020,1.0\n\
             limit_fraction,2021,0.5\n",
        );
        write(
            dir,
            "land_budget.csv",
            "region,land_class,bin,share,avg_cf,land_km2,potential_mw\n\
             B,shared,all,1,0.3,1000,1700\n",
        );
    }

    fn config_text(data: &str, out: &str) -> String {
        format!(
            "# demo scenario\nscenario = REF\ntrade_price = low\ndata = {data}\nout = {out}\n\
             seed = 7\noverride new_cap_bound tech=coal_a mw=100000\n"
        )
    }

    #[test]
    fn config_parses_every_override_form() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("s.cfg");
        fs::write(
            &path,
            "scenario = EL\ntrade_price = high\ndata = d\nout = o\nseed = 42\n\
             override new_cap_bound tech=coal_me mw=0\n\
             override new_cap_bound kind=coal region=ME mw=0\n\
             override cascade_new_cap mw=0\n\
             override land_group group=agricultural enabled=false\n\
             override emission_limits enabled=true\n",
        )
        .unwrap();
        let cfg = read_config(&path).unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::EmissionLimited);
        assert_eq!(cfg.trade, TradePrice::High);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.data_dir, tmp.path().join("d"));
        assert_eq!(cfg.out_dir, Some(tmp.path().join("o")));
        assert_eq!(
            cfg.overrides,
            vec![
                OverrideRec::NewCapTech { tech: "coal_me".to_string(), mw: 0.0 },
                OverrideRec::NewCapKind {
                    kind: "coal".to_string(),
                    region: "ME".to_string(),
                    mw: 0.0
                },
                OverrideRec::CascadeNewCap { mw: 0.0 },
                OverrideRec::LandGroup { group: "agricultural".to_string(), enabled: false },
                OverrideRec::EmissionLimits { enabled: true },
            ]
        );
        assert_eq!(cfg.digest.len(), 64);
    }

    #[test]
    fn config_requires_one_scenario_and_one_trade_variant() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("s.cfg");

        fs::write(&path, "trade_price = low\ndata = d\n").unwrap();
        let err = read_config(&path).unwrap_err();
        assert!(err.to_string().contains("scenario"), "{err}");

        fs::write(&path, "scenario = REF\ndata = d\n").unwrap();
        let err = read_config(&path).unwrap_err();
        assert!(err.to_string().contains("trade_price"), "{err}");

        fs::write(&path, "scenario = REF\nscenario = AG\ntrade_price = low\ndata = d\n").unwrap();
        let err = read_config(&path).unwrap_err();
        assert!(err.to_string().contains("twice"), "{err}");
    }

    #[test]
    fn config_rejects_unknown_override_targets_and_keys() {
        let tmp = TempDir::new().unwrap();
        let path = tmp.path().join("s.cfg");
        fs::write(
            &path,
            "scenario = REF\ntrade_price = low\ndata = d\noverride retire_early tech=x\n",
        )
        .unwrap();
        let err = read_config(&path).unwrap_err();
        assert!(err.to_string().contains("unknown override target"), "{err}");

        fs::write(
            &path,
            "scenario = REF\ntrade_price = low\ndata = d\n\
             override new_cap_bound tech=x mw=1 extra=2\n",
        )
        .unwrap();
        let err = read_config(&path).unwrap_err();
        assert!(err.to_string().contains("unexpected key"), "{err}");
    }

    #[test]
    fn overrides_resolve_or_error() {
        let tmp = TempDir::new().unwrap();
        tiny_data_dir(tmp.path());
        let (mut inputs, mut frags) = load_inputs(tmp.path()).unwrap();

        let cfg_path = tmp.path().join("s.cfg");
        fs::write(
            &cfg_path,
            "scenario = REF\ntrade_price = high\ndata = .\n\
             override new_cap_bound tech=nuclear_z mw=0\n",
        )
        .unwrap();
        let cfg = read_config(&cfg_path).unwrap();
        let err = apply_overrides(&mut inputs, &mut frags, &cfg).unwrap_err();
        assert!(err.to_string().contains("unknown technology"), "{err}");

        fs::write(
            &cfg_path,
            "scenario = REF\ntrade_price = high\ndata = .\noverride cascade_new_cap mw=0\n",
        )
        .unwrap();
        let cfg = read_config(&cfg_path).unwrap();
        let err = apply_overrides(&mut inputs, &mut frags, &cfg).unwrap_err();
        assert!(err.to_string().contains("cascade"), "{err}");

        fs::write(
            &cfg_path,
            "scenario = REF\ntrade_price = high\ndata = .\n\
             override new_cap_bound kind=coal region=A mw=123\n\
             override land_group group=shared enabled=false\n\
             override emission_limits enabled=true\n",
        )
        .unwrap();
        let cfg = read_config(&cfg_path).unwrap();
        apply_overrides(&mut inputs, &mut frags, &cfg).unwrap();
        assert_eq!(inputs.trade_price, TradePrice::High);
        let coal = inputs.techs.iter().find(|t| t.id == "coal_a").unwrap();
        assert_eq!(coal.max_new_mw, 123.0);
        let wind = inputs.techs.iter().find(|t| t.id == "wind_b").unwrap();
        assert_eq!(wind.max_new_mw, 0.0);
        assert!(inputs.emissions.is_some());
    }

    #[test]
    fn emissions_deactivated_without_enabling_override() {
        let tmp = TempDir::new().unwrap();
        tiny_data_dir(tmp.path());
        let (mut inputs, mut frags) = load_inputs(tmp.path()).unwrap();
        assert!(inputs.emissions.is_some());
        let cfg_path = tmp.path().join("s.cfg");
        fs::write(&cfg_path, "scenario = REF\ntrade_price = low\ndata = .\n").unwrap();
        let cfg = read_config(&cfg_path).unwrap();
        apply_overrides(&mut inputs, &mut frags, &cfg).unwrap();
        assert!(inputs.emissions.is_none());
    }

    #[test]
    fn run_writes_outputs_and_reruns_byte_identically() {
        let tmp = TempDir::new().unwrap();
        let data = tmp.path().join("data");
        fs::create_dir(&data).unwrap();
        tiny_data_dir(&data);
        let cfg_path = tmp.path().join("ref.cfg");
        fs::write(&cfg_path, config_text("data", "run1")).unwrap();

        let cfg = read_config(&cfg_path).unwrap();
        let summary = run(&cfg).unwrap();
        // Exports at 30/MWh beat coal's 10/MWh marginal cost, so the optimal
        // plan sells at the border cap and the net objective goes negative.
        assert!(summary.objective.is_finite());
        assert!(summary.objective < 0.0);
        assert_eq!(summary.scenario, "REF");

        let out1 = tmp.path().join("run1");
        for name in [
            "capacity.csv",
            "generation.csv",
            "trade_flows.csv",
            "emissions.csv",
            "storage.csv",
            "water_flows.csv",
            "report.txt",
            "model.mps",
            "names.csv",
            "manifest.json",
            "timings.txt",
        ] {
            assert!(out1.join(name).exists(), "missing {name}");
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out1.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["scenario"], "REF");
        assert_eq!(manifest["seed"], 7);
        assert_eq!(manifest["config_digest"], serde_json::Value::String(cfg.digest.clone()));
        assert!(manifest["files"]["capacity.csv"].is_string());
        assert!(manifest["files"].get("timings.txt").is_none());

        // Rerun into a second directory: everything but timings must match.
        let mut cfg2 = cfg.clone();
        cfg2.out_dir = Some(tmp.path().join("run2"));
        run(&cfg2).unwrap();
        let out2 = tmp.path().join("run2");
        for name in [
            "capacity.csv",
            "generation.csv",
            "trade_flows.csv",
            "emissions.csv",
            "storage.csv",
            "water_flows.csv",
            "report.txt",
            "model.mps",
            "names.csv",
            "manifest.json",
        ] {
            let a = fs::read(out1.join(name)).unwrap();
            let b = fs::read(out2.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }

    #[test]
    fn infeasible_run_reports_irreducible_group_set() {
        let tmp = TempDir::new().unwrap();
        let data = tmp.path().join("data");
        fs::create_dir(&data).unwrap();
        tiny_data_dir(&data);
        // Pin the only technology's total capacity far below demand and take
        // trade away, so exactly one relaxable group (total_capacity_bounds)
        // explains the infeasibility.
        write(
            &data,
            "technologies.csv",
            "id,region,kind,capex,fixed_om,var_om,life,emission_t_per_mwh,availability,\
             firm_credit,residual_mw,residual_until,max_new_mw,max_total_mw,land_group,land_bin\n\
             coal_a,A,coal,1000,1,10,30,0.9,1.0,1.0,0,9999,,10,,\n",
        );
        write(&data, "demand.csv", "region,rep_day,hour,mwh\nA,0,0,438000\nA,0,1,438000\n");
        fs::remove_file(data.join("trade.csv")).unwrap();
        let cfg_path = tmp.path().join("bad.cfg");
        fs::write(&cfg_path, "scenario = REF\ntrade_price = low\ndata = data\nout = out\n")
            .unwrap();
        let cfg = read_config(&cfg_path).unwrap();
        let err = run(&cfg).unwrap_err();
        match err {
            RunError::Infeasible { groups } => {
                assert_eq!(groups, vec!["total_capacity_bounds".to_string()]);
            }
            other => panic!("expected Infeasible, got {other}"),
        }
        let text = fs::read_to_string(tmp.path().join("out/infeasibility.txt")).unwrap();
        assert!(text.contains("total_capacity_bounds"), "{text}");
    }

    #[test]
    fn missing_out_dir_is_a_config_error() {
        let tmp = TempDir::new().unwrap();
        let cfg_path = tmp.path().join("s.cfg");
        fs::write(&cfg_path, "scenario = REF\ntrade_price = low\ndata = .\n").unwrap();
        let cfg = read_config(&cfg_path).unwrap();
        let err = run(&cfg).unwrap_err();
        assert!(err.to_string().contains("output directory"), "{err}");
    }
}
