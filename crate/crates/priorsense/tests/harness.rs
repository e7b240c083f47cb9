use std::fs;
use std::path::Path;

use priorsense::config::ExperimentConfig;
use priorsense::experiment::{run_experiment, ExperimentResults};
use priorsense::output::{emit_outputs, replot, AGGREGATE_FILE, TRIALS_FILE};
use priorsense::Error;
use priorsense_core::design::Strategy;

fn tiny() -> ExperimentConfig {
    ExperimentConfig {
        n: 12,
        m_x: 3,
        m_c: 2,
        rank: 2,
        m_list: vec![4, 6],
        alpha_sq_grid: vec![10.0, 1000.0],
        trials: 15,
        calibration_trials: 4,
        lambda_grid: vec![0.01, 0.1, 1.0],
        master_seed: 99,
        ..ExperimentConfig::desk()
    }
}

fn run(cfg: &ExperimentConfig, threads: usize) -> ExperimentResults {
    run_experiment(cfg, &cfg.strategies().unwrap(), threads).unwrap()
}

#[test]
fn minimal_run_gives_one_record_per_strategy() {
    let cfg = ExperimentConfig { trials: 1, m_list: vec![4], alpha_sq_grid: vec![100.0], ..tiny() };
    let res = run(&cfg, 1);
    assert_eq!(res.records.len(), 4);
    let got: Vec<Strategy> = res.records.iter().map(|r| r.strategy).collect();
    assert_eq!(got, Strategy::ALL.to_vec());
    assert!(res.records.iter().all(|r| r.failure.is_none() && (r.snr_db.is_finite() || r.saturated)));
}

#[test]
fn every_matrix_passes_the_budget_audit() {
    let res = run(&tiny(), 2);
    assert_eq!(res.audits.len(), 2 * 2 * 4);
    for a in &res.audits {
        assert!(a.within_budget);
        assert!(a.energy <= a.point.alpha_sq * (1.0 + 1e-8));
    }
    for sm in &res.matrices {
        assert_eq!(sm.matrix.rows(), sm.point.m);
        assert_eq!(sm.phi.ncols(), res.models.dictionary.width());
    }
}

#[test]
fn selected_lambda_is_calibration_argmax() {
    let cfg = tiny();
    let res = run(&cfg, 1);
    for l in &res.lambdas {
        let grid: Vec<f64> = cfg.lambda_grid.iter().map(|g| g * l.lambda_max_estimate).collect();
        let mut best = 0;
        for (k, s) in l.calibration_snr.iter().enumerate() {
            if *s > l.calibration_snr[best] {
                best = k;
            }
        }
        assert_eq!(l.lambda, grid[best], "{l:?}");
    }
}

#[test]
fn results_do_not_depend_on_thread_count_and_follow_the_seed() {
    let cfg = tiny();
    let a = run(&cfg, 1);
    let b = run(&cfg, 4);
    assert_eq!(a.records, b.records);
    assert_eq!(a.lambdas, b.lambdas);
    let other = run(&ExperimentConfig { master_seed: 100, ..cfg }, 1);
    assert_ne!(a.records, other.records);
}

#[test]
fn trials_share_scenes_across_strategies_and_points() {
    let res = run(&tiny(), 1);
    let first = &res.records[0];
    for r in res.records.iter().filter(|r| r.trial == first.trial) {
        assert_eq!((r.model_x, r.model_c), (first.model_x, first.model_c));
    }
}

#[test]
fn common_noise_changes_only_the_noise() {
    let cfg = tiny();
    let a = run(&cfg, 1);
    let b = run(&ExperimentConfig { common_noise: true, ..cfg }, 1);
    assert_eq!(a.records.len(), b.records.len());
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!((x.model_x, x.model_c), (y.model_x, y.model_c));
    }
    assert_ne!(a.records, b.records);
}

#[test]
fn empty_strategy_subset_is_rejected() {
    let err = run_experiment(&tiny(), &[], 1).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert_eq!(err.exit_code(), 2);
}

/// Re-aggregates `trials.csv` without going through the library's parser.
fn independent_aggregate(trials: &Path) -> String {
    let mut r = csv::Reader::from_path(trials).unwrap();
    let headers = r.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (cm, ca, cs, csnr, cf) = (col("m"), col("alpha_sq"), col("strategy"), col("snr_db"), col("failed"));
    let mut keys: Vec<(String, String, String)> = Vec::new();
    let mut vals: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec.unwrap();
        let key = (rec[cm].to_string(), rec[ca].to_string(), rec[cs].to_string());
        let k = keys.iter().position(|k| *k == key).unwrap_or_else(|| {
            keys.push(key);
            vals.push(vec![]);
            keys.len() - 1
        });
        if &rec[cf] == "false" {
            vals[k].push(rec[csnr].parse().unwrap());
        }
    }
    let mut out = String::from("m,alpha_sq,strategy,mean_snr_db,median_snr_db,stderr_db,count\n");
    for ((m, a, s), v) in keys.iter().zip(&vals) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let mut sorted = v.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 { sorted[mid] } else { (sorted[mid - 1] + sorted[mid]) / 2.0 };
        let stderr = if v.len() > 1 {
            (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        out += &format!("{m},{a},{s},{mean:.8e},{median:.8e},{stderr:.8e},{}\n", v.len());
    }
    out
}

#[test]
fn aggregates_are_recomputable_from_trials() {
    let res = run(&tiny(), 1);
    let dir = tempfile::tempdir().unwrap();
    let written = emit_outputs(&res, dir.path(), false).unwrap();
    assert!(written.iter().all(|p| p.exists()));

    let aggregate = fs::read_to_string(dir.path().join(AGGREGATE_FILE)).unwrap();
    assert_eq!(aggregate, independent_aggregate(&dir.path().join(TRIALS_FILE)));
    assert_eq!(aggregate.lines().count(), 1 + 2 * 2 * 4);

    let again = tempfile::tempdir().unwrap();
    replot(&dir.path().join(TRIALS_FILE), again.path(), false).unwrap();
    assert_eq!(fs::read_to_string(again.path().join(AGGREGATE_FILE)).unwrap(), aggregate);
    for m in [4, 6] {
        let name = format!("plot_m{m}.csv");
        assert_eq!(fs::read(dir.path().join(&name)).unwrap(), fs::read(again.path().join(&name)).unwrap());
    }
    assert!(replot(&dir.path().join(TRIALS_FILE), again.path(), false).is_err());

    let plot = fs::read_to_string(dir.path().join("plot_m4.csv")).unwrap();
    assert_eq!(plot.lines().next().unwrap(), "alpha_sq,random,designed,lowrank-wiener,clutter-as-signal");
    assert_eq!(plot.lines().count(), 3);
}

#[test]
fn emission_refuses_existing_output_without_force() {
    let res = run(&ExperimentConfig { trials: 2, m_list: vec![4], alpha_sq_grid: vec![10.0], ..tiny() }, 1);
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&res, dir.path(), false).unwrap();
    let err = emit_outputs(&res, dir.path(), false).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    emit_outputs(&res, dir.path(), true).unwrap();
}

#[test]
fn two_strategies_one_point_gives_two_aggregate_rows() {
    let cfg = ExperimentConfig { m_list: vec![6], alpha_sq_grid: vec![100.0], trials: 3, ..tiny() };
    let res = run_experiment(&cfg, &[Strategy::Random, Strategy::Designed], 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&res, dir.path(), false).unwrap();
    let agg = fs::read_to_string(dir.path().join(AGGREGATE_FILE)).unwrap();
    assert_eq!(agg.lines().count(), 3);
}

#[test]
fn written_matrices_round_trip() {
    let res = run(&ExperimentConfig { trials: 1, m_list: vec![4], alpha_sq_grid: vec![10.0], ..tiny() }, 1);
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&res, dir.path(), false).unwrap();
    for sm in &res.matrices {
        let path = dir.path().join("matrices").join(format!("m4_alpha0_{}.bin", sm.matrix.strategy().label()));
        assert_eq!(&priorsense::formats::read_matrix(&path).unwrap(), sm.matrix.matrix());
    }
    let dict = priorsense::formats::read_matrix(&dir.path().join("dictionary.csv")).unwrap();
    assert_eq!(&dict, res.models.dictionary.matrix());
}
