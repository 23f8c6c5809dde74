//! Post-run comparison and summary reports.
//!
//! These read the CSV tables finished runs wrote rather than in-memory
//! solutions, so runs produced at different times (or by different code
//! versions) stay comparable. Units follow the run tables: GW, Mt CO2, MCM.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::model::inputs::read_csv;

use super::RunError;

fn parse_num(origin: &Path, field: &str, value: &str) -> Result<f64, RunError> {
    value.parse().map_err(|_| RunError::Report {
        msg: format!("{}: {field} is not a number: {value:?}", origin.display()),
    })
}

fn parse_year(origin: &Path, value: &str) -> Result<u32, RunError> {
    value.parse().map_err(|_| RunError::Report {
        msg: format!("{}: bad year {value:?}", origin.display()),
    })
}

/// One non-zero difference in yearly capacity additions between two runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityDiffRow {
    pub tech: String,
    pub year: u32,
    /// Additions in run A minus additions in run B, GW.
    pub delta_new_gw: f64,
}

fn read_capacity(dir: &Path) -> Result<BTreeMap<(String, u32), f64>, RunError> {
    let path = dir.join("capacity.csv");
    let rows = read_csv(&path, 4)?;
    let mut map = BTreeMap::new();
    for row in &rows {
        let year = parse_year(&path, &row[1])?;
        let new_gw = parse_num(&path, "new_gw", &row[2])?;
        map.insert((row[0].clone(), year), new_gw);
    }
    Ok(map)
}

/// Differences in capacity additions (run A minus run B), omitting entries
/// that agree to within 1e-9 GW. The two runs must cover the same
/// technologies and years; mismatched coverage is an error rather than a
/// partial diff.
pub fn capacity_diff(a: &Path, b: &Path) -> Result<Vec<CapacityDiffRow>, RunError> {
    let ca = read_capacity(a)?;
    let cb = read_capacity(b)?;

    let techs_a: BTreeSet<&String> = ca.keys().map(|(t, _)| t).collect();
    let techs_b: BTreeSet<&String> = cb.keys().map(|(t, _)| t).collect();
    if techs_a != techs_b {
        let only_a: Vec<&str> = techs_a.difference(&techs_b).map(|s| s.as_str()).collect();
        let only_b: Vec<&str> = techs_b.difference(&techs_a).map(|s| s.as_str()).collect();
        return Err(RunError::Report {
            msg: format!(
                "runs cover different technologies (only in {}: [{}]; only in {}: [{}])",
                a.display(),
                only_a.join(", "),
                b.display(),
                only_b.join(", ")
            ),
        });
    }
    if ca.keys().ne(cb.keys()) {
        return Err(RunError::Report {
            msg: format!(
                "runs {} and {} cover different years for the same technologies",
                a.display(),
                b.display()
            ),
        });
    }

    let mut out = Vec::new();
    for ((tech, year), &va) in &ca {
        let vb = cb[&(tech.clone(), *year)];
        let delta = va - vb;
        if delta.abs() > 1e-9 {
            out.push(CapacityDiffRow { tech: tech.clone(), year: *year, delta_new_gw: delta });
        }
    }
    Ok(out)
}

pub fn capacity_diff_csv(rows: &[CapacityDiffRow]) -> String {
    let mut buf = String::from("tech,year,delta_new_gw\n");
    for r in rows {
        buf.push_str(&format!("{},{},{}\n", r.tech, r.year, r.delta_new_gw));
    }
    buf
}

/// One run-year of the emissions comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionRow {
    /// Run label: the run directory's final path component.
    pub run: String,
    pub year: u32,
    pub mt_co2: f64,
}

/// Collects every run's annual emissions into one table, in the order the
/// run directories were given.
pub fn emissions_table(runs: &[&Path]) -> Result<Vec<EmissionRow>, RunError> {
    let mut out = Vec::new();
    for dir in runs {
        let label = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let path = dir.join("emissions.csv");
        let rows = read_csv(&path, 2)?;
        for row in &rows {
            out.push(EmissionRow {
                run: label.clone(),
                year: parse_year(&path, &row[0])?,
                mt_co2: parse_num(&path, "mt_co2", &row[1])?,
            });
        }
    }
    Ok(out)
}

pub fn emissions_table_csv(rows: &[EmissionRow]) -> String {
    let mut buf = String::from("run,year,mt_co2\n");
    for r in rows {
        buf.push_str(&format!("{},{},{}\n", r.run, r.year, r.mt_co2));
    }
    buf
}

/// Cross-year spread of one reservoir's level at one timeslice boundary.
#[derive(Debug, Clone)]
pub struct StorageEnvelopeRow {
    pub reservoir: String,
    pub rep_day: usize,
    pub hour: usize,
    pub mean_mcm: f64,
    pub min_mcm: f64,
    pub max_mcm: f64,
    pub p2_5_mcm: f64,
    pub p97_5_mcm: f64,
}

/// Quantile by linear interpolation between order statistics, the common
/// `(n-1)q` convention.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Summarizes a run's reservoir levels across years: for every (reservoir,
/// rep_day, hour) boundary the mean, min, max and the 2.5th/97.5th
/// percentiles of the level over the horizon's years, MCM.
pub fn storage_envelope(run: &Path) -> Result<Vec<StorageEnvelopeRow>, RunError> {
    let path = run.join("storage.csv");
    let rows = read_csv(&path, 5)?;
    let mut groups: BTreeMap<(String, usize, usize), Vec<f64>> = BTreeMap::new();
    for row in &rows {
        let rep_day = parse_num(&path, "rep_day", &row[2])? as usize;
        let hour = parse_num(&path, "hour", &row[3])? as usize;
        let level = parse_num(&path, "level_mcm", &row[4])?;
        groups.entry((row[0].clone(), rep_day, hour)).or_default().push(level);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((reservoir, rep_day, hour), mut levels) in groups {
        let mean = levels.iter().sum::<f64>() / levels.len() as f64;
        levels.sort_by(|a, b| a.partial_cmp(b).expect("levels are finite"));
        out.push(StorageEnvelopeRow {
            reservoir,
            rep_day,
            hour,
            mean_mcm: mean,
            min_mcm: levels[0],
            max_mcm: levels[levels.len() - 1],
            p2_5_mcm: percentile(&levels, 0.025),
            p97_5_mcm: percentile(&levels, 0.975),
        });
    }
    Ok(out)
}

pub fn storage_envelope_csv(rows: &[StorageEnvelopeRow]) -> String {
    let mut buf = String::from("reservoir,rep_day,hour,mean_mcm,min_mcm,max_mcm,p2_5_mcm,p97_5_mcm\n");
    for r in rows {
        buf.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.reservoir, r.rep_day, r.hour, r.mean_mcm, r.min_mcm, r.max_mcm, r.p2_5_mcm, r.p97_5_mcm
        ));
    }
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use tempfile::TempDir;

    fn run_dir_with(tmp: &TempDir, name: &str, file: &str, content: &str) -> std::path::PathBuf {
        let dir = tmp.path().join(name);
        fs::create_dir(&dir).unwrap();
        fs::write(dir.join(file), content).unwrap();
        dir
    }

    #[test]
    fn equal_runs_diff_to_nothing() {
        let tmp = TempDir::new().unwrap();
        let content = "tech,year,new_gw,total_gw\nwind,2040,2,5\ncoal,2040,0,1\n";
        let a = run_dir_with(&tmp, "a", "capacity.csv", content);
        let b = run_dir_with(&tmp, "b", "capacity.csv", content);
        assert_eq!(capacity_diff(&a, &b).unwrap(), Vec::new());
    }

    #[test]
    fn one_gw_wind_delta_yields_single_entry() {
        let tmp = TempDir::new().unwrap();
        let a = run_dir_with(
            &tmp,
            "a",
            "capacity.csv",
            "tech,year,new_gw,total_gw\nwind,2040,3,6\ncoal,2040,0,1\n",
        );
        let b = run_dir_with(
            &tmp,
            "b",
            "capacity.csv",
            "tech,year,new_gw,total_gw\nwind,2040,2,5\ncoal,2040,0,1\n",
        );
        let diff = capacity_diff(&a, &b).unwrap();
        assert_eq!(
            diff,
            vec![CapacityDiffRow { tech: "wind".to_string(), year: 2040, delta_new_gw: 1.0 }]
        );
        let csv = capacity_diff_csv(&diff);
        assert_eq!(csv, "tech,year,delta_new_gw\nwind,2040,1\n");
    }

    #[test]
    fn mismatched_tech_sets_error() {
        let tmp = TempDir::new().unwrap();
        let a = run_dir_with(
            &tmp,
            "a",
            "capacity.csv",
            "tech,year,new_gw,total_gw\nwind,2040,3,6\nsolar,2040,1,1\n",
        );
        let b = run_dir_with(&tmp, "b", "capacity.csv", "tech,year,new_gw,total_gw\nwind,2040,2,5\n");
        let err = capacity_diff(&a, &b).unwrap_err();
        assert!(err.to_string().contains("different technologies"), "{err}");
        assert!(err.to_string().contains("solar"), "{err}");
    }

    #[test]
    fn emissions_rows_keep_run_order() {
        let tmp = TempDir::new().unwrap();
        let a = run_dir_with(&tmp, "el_high", "emissions.csv", "year,mt_co2\n2020,10\n2021,8\n");
        let b = run_dir_with(&tmp, "ref_high", "emissions.csv", "year,mt_co2\n2020,12\n2021,12\n");
        let rows = emissions_table(&[a.as_path(), b.as_path()]).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0], EmissionRow { run: "el_high".to_string(), year: 2020, mt_co2: 10.0 });
        assert_eq!(rows[3], EmissionRow { run: "ref_high".to_string(), year: 2021, mt_co2: 12.0 });
    }

    #[test]
    fn single_year_envelope_collapses_to_the_value() {
        let tmp = TempDir::new().unwrap();
        let run = run_dir_with(
            &tmp,
            "r",
            "storage.csv",
            "reservoir,year,rep_day,hour,level_mcm\nres,2020,0,0,42.5\nres,2020,0,1,40\n",
        );
        let rows = storage_envelope(&run).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert_eq!(row.mean_mcm, row.min_mcm);
            assert_eq!(row.mean_mcm, row.max_mcm);
            assert_eq!(row.mean_mcm, row.p2_5_mcm);
            assert_eq!(row.mean_mcm, row.p97_5_mcm);
        }
        assert_eq!(rows[0].mean_mcm, 42.5);
    }

    #[test]
    fn two_year_envelope_means_and_bounds() {
        let tmp = TempDir::new().unwrap();
        let run = run_dir_with(
            &tmp,
            "r",
            "storage.csv",
            "reservoir,year,rep_day,hour,level_mcm\nres,2020,0,0,10\nres,2021,0,0,20\n",
        );
        let rows = storage_envelope(&run).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.mean_mcm, 15.0);
        assert_eq!(row.min_mcm, 10.0);
        assert_eq!(row.max_mcm, 20.0);
        assert!((row.p2_5_mcm - 10.25).abs() < 1e-12);
        assert!((row.p97_5_mcm - 19.75).abs() < 1e-12);
    }
}
