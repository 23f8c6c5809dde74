//! `gridplan` — long-horizon power system capacity planning from the shell.
//!
//! The verbs mirror the pipeline: `cluster` condenses hourly profiles into
//! representative days, `resource` turns land and capacity-factor rasters
//! into wind/solar potentials, `build`/`solve`/`export` work on the raw
//! optimization problem, `run` executes a scenario config end to end, and
//! `report` compares finished runs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gridplan::model::build_model;
use gridplan::repdays;
use gridplan::runner::{self, reports};
use gridplan::series;
use gridplan::vre;
use gridplan_lp::{binio, mps, solve, SolveOptions, Status};

#[derive(Parser)]
#[command(name = "gridplan", version, about = "Long-horizon power system capacity planning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Cluster a year of hourly profiles into weighted representative days.
    Cluster {
        /// Number of representative days.
        #[arg(long)]
        k: usize,
        /// Hourly profile CSV: `hour,<series>...`, one year of rows.
        #[arg(long = "in")]
        input: PathBuf,
        /// Where to write the representative-day table.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-series error/scale metrics table.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Estimate wind/solar potential from a land grid and a CF raster.
    Resource {
        /// Land cell CSV: id, region, class, area and bounding box.
        #[arg(long)]
        land: PathBuf,
        /// Capacity-factor raster CSV: `lon,lat,cf` points.
        #[arg(long)]
        raster: PathBuf,
        /// Monte Carlo sample points per cell.
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        /// Sampling seed; identical seeds reproduce the inventory exactly.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Where to write the full inventory table.
        #[arg(long)]
        out: PathBuf,
        /// Optional GW rollup table with a TOTAL row.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Assemble a scenario's optimization problem and save it for later
    /// `solve`/`export` calls.
    Build {
        /// Scenario config file.
        #[arg(long)]
        config: PathBuf,
        /// Where to write the problem (binary).
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a saved problem and write the solution table.
    Solve {
        /// Problem file produced by `build`.
        #[arg(long)]
        lp: PathBuf,
        /// Where to write `name,value` rows plus the objective.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a saved problem as MPS or as a readable constraint listing.
    Export {
        /// Problem file produced by `build`.
        #[arg(long)]
        lp: PathBuf,
        /// `mps` or `dump`.
        #[arg(long)]
        format: String,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// With `--format mps`: also write the long-name table here.
        #[arg(long)]
        names: Option<PathBuf>,
    },
    /// Run a scenario end to end: load, assemble, solve, verify, report.
    Run {
        /// Scenario config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `out =` line.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tables over finished runs.
    Report {
        #[command(subcommand)]
        what: ReportCmd,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Capacity-addition differences between two runs (A minus B, GW).
    Diff {
        /// Run directory A.
        #[arg(long)]
        a: PathBuf,
        /// Run directory B.
        #[arg(long)]
        b: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Annual emissions of one or more runs, Mt CO2.
    Emissions {
        /// Run directories.
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reservoir level envelope across a run's years, MCM.
    Storage {
        /// Run directory.
        #[arg(long)]
        run: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Cluster { k, input, out, metrics } => cluster(k, &input, &out, metrics.as_deref()),
        Cmd::Resource { land, raster, points, seed, out, summary } => {
            resource(&land, &raster, points, seed, &out, summary.as_deref())
        }
        Cmd::Build { config, out } => build(&config, &out),
        Cmd::Solve { lp, out } => solve_cmd(&lp, &out),
        Cmd::Export { lp, format, out, names } => {
            export(&lp, &format, out.as_deref(), names.as_deref())
        }
        Cmd::Run { config, out } => run_cmd(&config, out),
        Cmd::Report { what } => match what {
            ReportCmd::Diff { a, b, out } => report_diff(&a, &b, out.as_deref()),
            ReportCmd::Emissions { runs, out } => report_emissions(&runs, out.as_deref()),
            ReportCmd::Storage { run, out } => report_storage(&run, out.as_deref()),
        },
    }
}

fn cluster(k: usize, input: &Path, out: &Path, metrics: Option<&Path>) -> Result<()> {
    let profiles = series::read_profiles_csv(input)?;
    let matrix = series::build_day_features(&profiles)?;
    let assignment = repdays::cluster_days(&matrix, k)?;
    let mut set = repdays::pick_representatives(&matrix, &assignment)?;
    let scales = repdays::rescale_to_annual_means(&mut set, &profiles)?;
    let errors = repdays::duration_curve_error(&profiles, &set)?;
    repdays::write_repdays_csv(&set, out)?;
    if let Some(path) = metrics {
        repdays::write_metrics_csv(&errors, &scales, path)?;
    }
    println!(
        "clustered {} days of {} series into {} representatives -> {}",
        matrix.n_days,
        matrix.n_series,
        set.k,
        out.display()
    );
    for e in &errors {
        println!("  {}: duration-curve rmse {:.6}, max dev {:.6}", e.series_id, e.rmse, e.max_abs_dev);
    }
    Ok(())
}

fn resource(
    land: &Path,
    raster: &Path,
    points: usize,
    seed: u64,
    out: &Path,
    summary: Option<&Path>,
) -> Result<()> {
    let grid = vre::read_land_csv(land)?;
    let cf = vre::read_raster_csv(raster)?;
    let spec = vre::CfBinSpec::default();
    let resources = vre::characterize(&grid, &cf, &spec, points, seed)?;
    vre::write_inventory_csv(&resources, out)?;
    let rollup = vre::summarize_potentials(&resources);
    if let Some(path) = summary {
        vre::write_summary_csv(&rollup, path)?;
    }
    println!(
        "characterized {} regions ({} cells, {} points/cell, seed {seed}) -> {}",
        rollup.regions.len(),
        grid.cells.len(),
        points,
        out.display()
    );
    println!("grand total potential: {} GW", rollup.grand_total_gw);
    Ok(())
}

/// Loads a config, applies its overrides, and assembles the problem.
fn assemble(config_path: &Path) -> Result<(gridplan_lp::LinearProgram, runner::RunConfig)> {
    let config = runner::read_config(config_path)?;
    let (mut inputs, mut frags) = runner::load_inputs(&config.data_dir)?;
    runner::apply_overrides(&mut inputs, &mut frags, &config)?;
    let (lp, _) = build_model(&inputs, frags.as_ref())?;
    Ok((lp, config))
}

fn build(config_path: &Path, out: &Path) -> Result<()> {
    let (lp, config) = assemble(config_path)?;
    let mut file = fs::File::create(out)
        .with_context(|| format!("creating {}", out.display()))?;
    binio::write_lp(&lp, &mut file)?;
    println!(
        "assembled scenario {}: {} rows x {} cols -> {}",
        config.scenario.as_str(),
        lp.num_rows(),
        lp.num_cols(),
        out.display()
    );
    Ok(())
}

fn solve_cmd(lp_path: &Path, out: &Path) -> Result<()> {
    let mut file = fs::File::open(lp_path)
        .with_context(|| format!("opening {}", lp_path.display()))?;
    let lp = binio::read_lp(&mut file)?;
    let sol = solve(&lp, &SolveOptions::default())?;
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => {
            if std::env::var_os("GRIDPLAN_DEBUG_INFEAS").is_some() {
                print_worst_residuals(&lp, &sol.primal);
            }
            bail!("problem is infeasible")
        }
        Status::Unbounded => bail!("problem is unbounded"),
        Status::IterationLimit => bail!(
            "iteration limit reached after {} iterations ({} in phase 1, bland {})",
            sol.stats.iterations,
            sol.stats.phase1_iterations,
            sol.stats.bland_engaged
        ),
    }
    let mut buf = String::from("name,value\n");
    buf.push_str(&format!("_objective,{}\n", sol.objective));
    for (j, name) in lp.col_names.iter().enumerate() {
        buf.push_str(&format!("{name},{}\n", sol.primal[j]));
    }
    fs::write(out, buf).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "optimal after {} iterations, objective {} -> {}",
        sol.stats.iterations,
        sol.objective,
        out.display()
    );
    Ok(())
}

/// Prints the most-violated rows and column bounds at the point where the
/// solver gave up, as a debugging aid for infeasible models.
fn print_worst_residuals(lp: &gridplan_lp::LinearProgram, x: &[f64]) {
    use gridplan_lp::Sense;
    let mut activity = vec![0.0f64; lp.rhs.len()];
    for &(r, c, v) in &lp.triplets {
        activity[r] += v * x[c];
    }
    let mut rows: Vec<(f64, usize)> = (0..lp.rhs.len())
        .map(|r| {
            let resid = match lp.row_sense[r] {
                Sense::Le => (activity[r] - lp.rhs[r]).max(0.0),
                Sense::Ge => (lp.rhs[r] - activity[r]).max(0.0),
                Sense::Eq => (activity[r] - lp.rhs[r]).abs(),
            };
            (resid, r)
        })
        .filter(|&(resid, _)| resid > 1e-7)
        .collect();
    rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    eprintln!("violated rows at final point: {}", rows.len());
    for &(resid, r) in rows.iter().take(25) {
        eprintln!(
            "  {}  residual {:.6e} (rhs {:.6e}, activity {:.6e})",
            lp.row_names[r], resid, lp.rhs[r], activity[r]
        );
    }
    let mut cols: Vec<(f64, usize)> = (0..x.len())
        .map(|j| {
            let v = (lp.col_lower[j] - x[j]).max(x[j] - lp.col_upper[j]).max(0.0);
            (v, j)
        })
        .filter(|&(v, _)| v > 1e-7)
        .collect();
    cols.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    eprintln!("out-of-bound columns at final point: {}", cols.len());
    for &(v, j) in cols.iter().take(10) {
        eprintln!("  {}  by {:.6e}", lp.col_names[j], v);
    }
}

fn export(lp_path: &Path, format: &str, out: Option<&Path>, names: Option<&Path>) -> Result<()> {
    let mut file = fs::File::open(lp_path)
        .with_context(|| format!("opening {}", lp_path.display()))?;
    let lp = binio::read_lp(&mut file)?;
    let text = match format {
        "mps" => mps::write_mps(&lp),
        "dump" => lp.dump_string(),
        other => bail!("unknown export format {other:?} (expected mps or dump)"),
    };
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {format} to {}", path.display());
        }
        None => print!("{text}"),
    }
    if let Some(path) = names {
        if format != "mps" {
            bail!("--names only applies to --format mps");
        }
        fs::write(path, mps::names_table_csv(&lp))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run_cmd(config_path: &Path, out: Option<PathBuf>) -> Result<()> {
    let mut config = runner::read_config(config_path)?;
    if let Some(dir) = out {
        config.out_dir = Some(dir);
    }
    let summary = runner::run(&config)?;
    println!(
        "scenario {} solved: {} rows x {} cols, {} iterations, objective {}",
        summary.scenario,
        summary.lp_rows,
        summary.lp_cols,
        summary.iterations,
        summary.objective
    );
    println!("results in {}", summary.out_dir.display());
    Ok(())
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn report_diff(a: &Path, b: &Path, out: Option<&Path>) -> Result<()> {
    let rows = reports::capacity_diff(a, b)?;
    emit(&reports::capacity_diff_csv(&rows), out)
}

fn report_emissions(runs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let dirs: Vec<&Path> = runs.iter().map(|p| p.as_path()).collect();
    let rows = reports::emissions_table(&dirs)?;
    emit(&reports::emissions_table_csv(&rows), out)
}

fn report_storage(run: &Path, out: Option<&Path>) -> Result<()> {
    let rows = reports::storage_envelope(run)?;
    emit(&reports::storage_envelope_csv(&rows), out)
}
