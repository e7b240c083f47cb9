//! CSV tables and plot data.
//!
//! Every float is written with nine significant digits. Aggregates are
//! computed from those rounded per-trial values, so re-aggregating
//! `trials.csv` reproduces `aggregate.csv` byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use priorsense_core::design::Strategy;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::experiment::ExperimentResults;
use crate::formats::{write_matrix_bin, write_matrix_csv};

pub const TRIALS_FILE: &str = "trials.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

/// Nine significant digits.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        format!("{x}")
    }
}

fn round9(x: f64) -> f64 {
    fmt_float(x).parse().expect("formatted float parses")
}

/// One line of `trials.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub m: usize,
    pub alpha_sq: String,
    pub strategy: String,
    pub trial: usize,
    pub model_x: usize,
    pub model_c: usize,
    pub snr_db: String,
    pub saturated: bool,
    pub residual_norm: String,
    pub converged: bool,
    pub iterations: usize,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub m: usize,
    pub alpha_sq: String,
    pub strategy: String,
    pub mean_snr_db: String,
    pub median_snr_db: String,
    pub stderr_db: String,
    pub count: usize,
}

pub fn trial_rows(results: &ExperimentResults) -> Vec<TrialRow> {
    results
        .records
        .iter()
        .map(|r| TrialRow {
            m: r.point.m,
            alpha_sq: fmt_float(r.point.alpha_sq),
            strategy: r.strategy.label().to_string(),
            trial: r.trial,
            model_x: r.model_x,
            model_c: r.model_c,
            snr_db: fmt_float(r.snr_db),
            saturated: r.saturated,
            residual_norm: fmt_float(r.residual_norm),
            converged: r.converged,
            iterations: r.iterations,
            failed: r.failure.is_some(),
        })
        .collect()
}

/// Groups rows by `(m, α², strategy)` in order of first appearance and
/// summarizes the successful trials.
pub fn aggregate(rows: &[TrialRow]) -> Result<Vec<AggregateRow>> {
    let mut keys: Vec<(usize, String, String)> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let key = (r.m, r.alpha_sq.clone(), r.strategy.clone());
        let k = match keys.iter().position(|k| *k == key) {
            Some(k) => k,
            None => {
                keys.push(key);
                values.push(Vec::new());
                keys.len() - 1
            }
        };
        if !r.failed {
            let v: f64 = r.snr_db.parse().map_err(|_| config_err!("unparsable SNR {:?}", r.snr_db))?;
            values[k].push(round9(v));
        }
    }
    Ok(keys
        .into_iter()
        .zip(values)
        .map(|((m, alpha_sq, strategy), v)| {
            let s = summarize(&v);
            AggregateRow {
                m,
                alpha_sq,
                strategy,
                mean_snr_db: fmt_float(s.mean),
                median_snr_db: fmt_float(s.median),
                stderr_db: fmt_float(s.stderr),
                count: v.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub stderr: f64,
}

pub fn summarize(v: &[f64]) -> Summary {
    let n = v.len();
    if n == 0 {
        return Summary { mean: f64::NAN, median: f64::NAN, stderr: f64::NAN };
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    let stderr = if n > 1 {
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Summary { mean, median, stderr }
}

/// Per-panel plot tables: `alpha_sq` then one mean-SNR column per strategy.
pub fn plot_tables(agg: &[AggregateRow]) -> Vec<(usize, Vec<String>, Vec<Vec<String>>)> {
    let mut ms: Vec<usize> = Vec::new();
    let mut strategies: Vec<String> = Vec::new();
    for r in agg {
        if !ms.contains(&r.m) {
            ms.push(r.m);
        }
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy.clone());
        }
    }
    ms.into_iter()
        .map(|m| {
            let mut alphas: Vec<&str> = Vec::new();
            for r in agg.iter().filter(|r| r.m == m) {
                if !alphas.contains(&r.alpha_sq.as_str()) {
                    alphas.push(&r.alpha_sq);
                }
            }
            let header = std::iter::once("alpha_sq".to_string())
                .chain(strategies.iter().cloned())
                .collect();
            let rows = alphas
                .iter()
                .map(|a| {
                    std::iter::once(a.to_string())
                        .chain(strategies.iter().map(|s| {
                            agg.iter()
                                .find(|r| r.m == m && r.alpha_sq == *a && r.strategy == *s)
                                .map_or_else(|| "NaN".to_string(), |r| r.mean_snr_db.clone())
                        }))
                        .collect()
                })
                .collect();
            (m, header, rows)
        })
        .collect()
}

/// Creates `dir`, refusing to reuse a non-empty one unless `force` is set.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .map_err(|e| Error::io(format!("reading {}", dir.display()), e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(config_err!("output directory {} already exists; pass --force to overwrite", dir.display()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(ctx(), e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(ctx(), e.into()))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(ctx(), e.into()))?;
    w.write_record(header).map_err(|e| Error::io(ctx(), e.into()))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::io(ctx(), e.into()))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn plot_file_name(m: usize) -> String {
    format!("plot_m{m}.csv")
}

fn write_summaries(dir: &Path, rows: &[TrialRow]) -> Result<Vec<PathBuf>> {
    let agg = aggregate(rows)?;
    let mut written = vec![dir.join(AGGREGATE_FILE)];
    write_rows(&written[0], &agg)?;
    for (m, header, table) in plot_tables(&agg) {
        let path = dir.join(plot_file_name(m));
        write_table(&path, &header, &table)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes every artifact of a run into `dir` and returns the paths.
pub fn emit_outputs(results: &ExperimentResults, dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    if results.strategies.is_empty() {
        return Err(config_err!("strategy list is empty"));
    }
    if results.records.is_empty() {
        return Err(config_err!("no trial records to emit"));
    }
    prepare_dir(dir, force)?;
    let rows = trial_rows(results);
    let mut written = vec![dir.join(TRIALS_FILE)];
    write_rows(&written[0], &rows)?;
    written.extend(write_summaries(dir, &rows)?);

    let label = |s: Strategy| s.label().to_string();
    let audit_rows: Vec<Vec<String>> = results
        .audits
        .iter()
        .map(|a| {
            vec![
                a.point.m.to_string(),
                fmt_float(a.point.alpha_sq),
                label(a.strategy),
                fmt_float(a.energy),
                a.within_budget.to_string(),
            ]
        })
        .collect();
    let path = dir.join("budget_audit.csv");
    write_table(&path, &["m", "alpha_sq", "strategy", "energy", "within_budget"].map(String::from), &audit_rows)?;
    written.push(path);

    let lambda_rows: Vec<Vec<String>> = results
        .lambdas
        .iter()
        .map(|l| {
            let mut row = vec![
                l.point.m.to_string(),
                fmt_float(l.point.alpha_sq),
                label(l.strategy),
                fmt_float(l.lambda_max_estimate),
                fmt_float(l.lambda),
            ];
            row.extend(l.calibration_snr.iter().map(|s| fmt_float(*s)));
            row
        })
        .collect();
    let mut header: Vec<String> =
        ["m", "alpha_sq", "strategy", "lambda_max_estimate", "lambda"].map(String::from).into();
    header.extend(results.config.lambda_grid.iter().map(|g| format!("snr_at_{}", fmt_float(*g))));
    let path = dir.join("lambdas.csv");
    write_table(&path, &header, &lambda_rows)?;
    written.push(path);

    let timing_rows: Vec<Vec<String>> = results
        .timings
        .iter()
        .map(|t| {
            vec![
                t.point.m.to_string(),
                fmt_float(t.point.alpha_sq),
                label(t.strategy),
                t.trial.to_string(),
                format!("{:.3}", t.measure_ms),
                format!("{:.3}", t.solve_ms),
            ]
        })
        .collect();
    let path = dir.join("timings.csv");
    write_table(&path, &["m", "alpha_sq", "strategy", "trial", "measure_ms", "solve_ms"].map(String::from), &timing_rows)?;
    written.push(path);

    let mdir = dir.join("matrices");
    fs::create_dir_all(&mdir).map_err(|e| Error::io(format!("creating {}", mdir.display()), e))?;
    for sm in &results.matrices {
        let name = format!("m{}_alpha{}_{}.bin", sm.point.m, sm.point.alpha_index, sm.matrix.strategy().label());
        let path = mdir.join(name);
        write_matrix_bin(&path, sm.matrix.matrix())?;
        written.push(path);
    }
    let path = dir.join("dictionary.csv");
    write_matrix_csv(&path, results.models.dictionary.matrix())?;
    written.push(path);

    let path = dir.join("config.json");
    fs::write(&path, results.config.to_json()).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    written.push(path);
    Ok(written)
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(format!("reading {}", path.display()), e.into()))?;
    r.deserialize().map(|row| row.map_err(|e| Error::format(path, e))).collect()
}

/// Regenerates the aggregate table and plot data from a per-trial CSV.
pub fn replot(trials_csv: &Path, dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    let rows = read_trials(trials_csv)?;
    if rows.is_empty() {
        return Err(config_err!("{} has no trial rows", trials_csv.display()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let target = dir.join(AGGREGATE_FILE);
    if target.exists() && !force {
        return Err(config_err!("{} already exists; pass --force to overwrite", target.display()));
    }
    write_summaries(dir, &rows)
}
