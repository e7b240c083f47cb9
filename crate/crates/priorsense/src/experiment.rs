//! The Monte-Carlo sweep: one model set, four sensing strategies per
//! `(m, α²)` point, group-lasso recovery on every trial.

use std::time::Instant;

use nalgebra::DMatrix;
use priorsense_core::baselines::{clutter_as_signal_design, lowrank_wiener_design, random_design};
use priorsense_core::design::{design_sensing_matrix, DesignProblem, SensingMatrix, Strategy};
use priorsense_core::lmmse::measure;
use priorsense_core::metrics::reconstruction_snr;
use priorsense_core::prior::{
    average_covariance, random_rank_r_covariance, sample_realization, CovarianceMatrix, MixturePrior, PriorSampler,
};
use priorsense_core::recovery::{
    build_dictionary, extract_signal, group_lasso, lambda_max, select_lambda, GroupDictionary, SolverOptions,
};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::streams::{stream, Purpose};

/// Energy budgets are audited with this relative slack.
pub const BUDGET_SLACK: f64 = 1e-8;

/// Fraction of failed trials at one grid point that aborts the run.
pub const MAX_FAILURE_RATE: f64 = 0.10;

/// Random models shared by every grid point and trial.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub signal: Vec<CovarianceMatrix>,
    pub clutter: Vec<CovarianceMatrix>,
    pub prior_x: MixturePrior,
    pub prior_c: MixturePrior,
    pub sigma_x: CovarianceMatrix,
    pub sigma_c: CovarianceMatrix,
    pub dictionary: GroupDictionary,
}

impl ModelSet {
    pub fn generate(cfg: &ExperimentConfig) -> Result<Self> {
        let mut rng = stream(cfg.master_seed, Purpose::Models, &[]);
        let mut draw = |count| {
            (0..count)
                .map(|_| random_rank_r_covariance(cfg.n, cfg.rank, 1.0, &mut rng))
                .collect::<std::result::Result<Vec<_>, _>>()
        };
        let signal = draw(cfg.m_x)?;
        let clutter = draw(cfg.m_c)?;
        let prior_x = MixturePrior::uniform(signal.clone())?;
        let prior_c = MixturePrior::uniform(clutter.clone())?;
        let sigma_x = average_covariance(&prior_x);
        let sigma_c = average_covariance(&prior_c);
        let dictionary = build_dictionary(&signal, &clutter, cfg.rank)?;
        Ok(Self { signal, clutter, prior_x, prior_c, sigma_x, sigma_c, dictionary })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub m_index: usize,
    pub alpha_index: usize,
    pub m: usize,
    pub alpha_sq: f64,
}

pub fn grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut points = Vec::with_capacity(cfg.m_list.len() * cfg.alpha_sq_grid.len());
    for (m_index, &m) in cfg.m_list.iter().enumerate() {
        for (alpha_index, &alpha_sq) in cfg.alpha_sq_grid.iter().enumerate() {
            points.push(GridPoint { m_index, alpha_index, m, alpha_sq });
        }
    }
    points
}

/// Absolute ridge for whitening `sigma`, from the relative config value.
pub fn absolute_ridge(relative: f64, sigma: &CovarianceMatrix) -> f64 {
    relative * sigma.trace() / sigma.dim() as f64
}

pub fn design_matrix(
    cfg: &ExperimentConfig,
    models: &ModelSet,
    point: GridPoint,
    strategy: Strategy,
) -> Result<SensingMatrix> {
    let total = models.sigma_x.add(&models.sigma_c)?;
    let ridge = absolute_ridge(cfg.ridge, &total);
    let problem = || -> Result<DesignProblem> {
        Ok(DesignProblem::new(models.sigma_x.clone(), models.sigma_c.clone(), point.m, point.alpha_sq)?
            .with_iterations(cfg.iterations)
            .with_ridge(ridge))
    };
    let a = match strategy {
        Strategy::Random => {
            let mut rng = stream(cfg.master_seed, Purpose::Matrix, &[point.m_index as u64, point.alpha_index as u64]);
            random_design(point.m, cfg.n, point.alpha_sq, &mut rng)?
        }
        Strategy::Designed => design_sensing_matrix(&problem()?, None)?.0,
        Strategy::LowRankWiener => {
            lowrank_wiener_design(&models.sigma_x, &models.sigma_c, point.m, point.alpha_sq, ridge)?
        }
        Strategy::ClutterAsSignal => clutter_as_signal_design(&problem()?)?,
    };
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetAudit {
    pub point: GridPoint,
    pub strategy: Strategy,
    pub energy: f64,
    pub within_budget: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaChoice {
    pub point: GridPoint,
    pub strategy: Strategy,
    /// Median `λ_max` over the calibration measurements.
    pub lambda_max_estimate: f64,
    pub lambda: f64,
    /// Mean calibration SNR for each grid multiplier, in grid order.
    pub calibration_snr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub point: GridPoint,
    pub strategy: Strategy,
    pub trial: usize,
    pub model_x: usize,
    pub model_c: usize,
    pub snr_db: f64,
    pub saturated: bool,
    /// `‖y − Φβ̂‖`.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub failure: Option<String>,
}

/// Wall-clock stage timings; kept apart from the records because they are
/// not reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTiming {
    pub point: GridPoint,
    pub strategy: Strategy,
    pub trial: usize,
    pub measure_ms: f64,
    pub solve_ms: f64,
}

#[derive(Debug, Clone)]
pub struct StrategyMatrix {
    pub point: GridPoint,
    pub matrix: SensingMatrix,
    /// `Φ = A·D`.
    pub phi: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub strategies: Vec<Strategy>,
    pub models: ModelSet,
    pub matrices: Vec<StrategyMatrix>,
    pub audits: Vec<BudgetAudit>,
    pub lambdas: Vec<LambdaChoice>,
    /// Sorted by grid point, strategy, then trial.
    pub records: Vec<TrialRecord>,
    pub timings: Vec<TrialTiming>,
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    models: &'a ModelSet,
    px: PriorSampler,
    pc: PriorSampler,
    opts: SolverOptions,
}

struct Outcome {
    record: TrialRecord,
    timing: TrialTiming,
}

impl Context<'_> {
    fn noise_indices(&self, point: GridPoint, strategy: Strategy, trial: usize) -> Vec<u64> {
        let mut idx = vec![point.m_index as u64, point.alpha_index as u64, trial as u64];
        if !self.cfg.common_noise {
            idx.push(strategy as u64);
        }
        idx
    }

    /// Draws the trial's scene and noise and measures it with `a`.
    fn observe(
        &self,
        sm: &StrategyMatrix,
        trial: usize,
        calibration: bool,
    ) -> Result<(priorsense_core::prior::Realization, nalgebra::DVector<f64>)> {
        let (scene, noise) = if calibration {
            (Purpose::CalibrationTrial, Purpose::CalibrationNoise)
        } else {
            (Purpose::Trial, Purpose::Noise)
        };
        let mut rng = stream(self.cfg.master_seed, scene, &[trial as u64]);
        let real = sample_realization(&self.px, &self.pc, &mut rng)?;
        let mut rng = stream(self.cfg.master_seed, noise, &self.noise_indices(sm.point, sm.matrix.strategy(), trial));
        let y = measure(&sm.matrix, &real, &mut rng)?.y;
        Ok((real, y))
    }

    fn run_trial(&self, sm: &StrategyMatrix, lambda: f64, trial: usize, calibration: bool) -> Outcome {
        let strategy = sm.matrix.strategy();
        let mut record = TrialRecord {
            point: sm.point,
            strategy,
            trial,
            model_x: 0,
            model_c: 0,
            snr_db: f64::NAN,
            saturated: false,
            residual_norm: f64::NAN,
            converged: false,
            iterations: 0,
            failure: None,
        };
        let mut timing = TrialTiming { point: sm.point, strategy, trial, measure_ms: 0.0, solve_ms: 0.0 };
        let start = Instant::now();
        let result = (|| -> Result<()> {
            let (real, y) = self.observe(sm, trial, calibration)?;
            record.model_x = real.model_index_x;
            record.model_c = real.model_index_c;
            timing.measure_ms = start.elapsed().as_secs_f64() * 1e3;
            let solve_start = Instant::now();
            let sol = group_lasso(&y, &sm.phi, &self.models.dictionary, lambda, self.opts)?;
            let xhat = extract_signal(&sol, &self.models.dictionary)?;
            timing.solve_ms = solve_start.elapsed().as_secs_f64() * 1e3;
            let snr = reconstruction_snr(&real.x, &xhat)?;
            record.snr_db = snr.db;
            record.saturated = snr.saturated;
            record.residual_norm = (&y - &sm.phi * &sol.beta).norm();
            record.converged = sol.converged;
            record.iterations = sol.iterations;
            Ok(())
        })();
        if let Err(e) = result {
            record.failure = Some(e.to_string());
            record.snr_db = f64::NAN;
        }
        Outcome { record, timing }
    }

    fn calibrate(&self, sm: &StrategyMatrix) -> Result<LambdaChoice> {
        let trials = self.cfg.calibration_trials;
        let mut maxima = Vec::with_capacity(trials);
        for t in 0..trials {
            let (_, y) = self.observe(sm, t, true)?;
            maxima.push(lambda_max(&y, &sm.phi, &self.models.dictionary)?);
        }
        maxima.sort_by(f64::total_cmp);
        let estimate = median_sorted(&maxima);
        let grid: Vec<f64> = self.cfg.lambda_grid.iter().map(|mult| mult * estimate).collect();
        let mut scores = Vec::with_capacity(grid.len());
        let lambda = select_lambda(&grid, |lambda| {
            let snrs: Vec<f64> = (0..trials).map(|t| self.run_trial(sm, lambda, t, true).record.snr_db).collect();
            // any failed calibration trial disqualifies this λ
            let score = snrs.iter().sum::<f64>() / trials as f64;
            scores.push((lambda, score));
            Ok(score)
        })?;
        let calibration_snr = grid
            .iter()
            .map(|l| scores.iter().find(|(sl, _)| sl == l).map_or(f64::NAN, |s| s.1))
            .collect();
        Ok(LambdaChoice {
            point: sm.point,
            strategy: sm.matrix.strategy(),
            lambda_max_estimate: estimate,
            lambda,
            calibration_snr,
        })
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Runs the sweep on a pool of `threads` workers. Output does not depend on
/// the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, strategies: &[Strategy], threads: usize) -> Result<ExperimentResults> {
    cfg.validate()?;
    if strategies.is_empty() {
        return Err(Error::Config("strategy list is empty".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_in_pool(cfg, strategies))
}

fn run_in_pool(cfg: &ExperimentConfig, strategies: &[Strategy]) -> Result<ExperimentResults> {
    let models = ModelSet::generate(cfg)?;
    let points = grid(cfg);
    let tasks: Vec<(GridPoint, Strategy)> =
        points.iter().flat_map(|&p| strategies.iter().map(move |&s| (p, s))).collect();

    let matrices = tasks
        .par_iter()
        .map(|&(point, strategy)| {
            let matrix = design_matrix(cfg, &models, point, strategy)?;
            let phi = models.dictionary.sensing_dictionary(matrix.matrix())?;
            Ok(StrategyMatrix { point, matrix, phi })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut audits = Vec::with_capacity(matrices.len());
    for sm in &matrices {
        let within = sm.matrix.within_budget(sm.point.alpha_sq, BUDGET_SLACK);
        audits.push(BudgetAudit {
            point: sm.point,
            strategy: sm.matrix.strategy(),
            energy: sm.matrix.energy(),
            within_budget: within,
        });
        if !within {
            return Err(Error::Core(priorsense_core::Error::Numerical(format!(
                "{} matrix at m = {}, α² = {} has energy {} over budget",
                sm.matrix.strategy(),
                sm.point.m,
                sm.point.alpha_sq,
                sm.matrix.energy()
            ))));
        }
    }

    let ctx = Context {
        cfg,
        models: &models,
        px: PriorSampler::new(&models.prior_x),
        pc: PriorSampler::new(&models.prior_c),
        opts: SolverOptions { max_iter: cfg.solver_max_iter, tol: cfg.solver_tol },
    };

    let lambdas = matrices.par_iter().map(|sm| ctx.calibrate(sm)).collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..matrices.len()).flat_map(|k| (0..cfg.trials).map(move |t| (k, t))).collect();
    let outcomes: Vec<Outcome> =
        jobs.par_iter().map(|&(k, t)| ctx.run_trial(&matrices[k], lambdas[k].lambda, t, false)).collect();

    for point in &points {
        let at_point: Vec<_> = outcomes.iter().filter(|o| o.record.point == *point).collect();
        let failed: Vec<_> = at_point.iter().filter_map(|o| o.record.failure.as_ref().map(|f| (o, f))).collect();
        if failed.len() as f64 > MAX_FAILURE_RATE * at_point.len() as f64 {
            let (o, first) = failed[0];
            return Err(Error::Core(priorsense_core::Error::Numerical(format!(
                "{} of {} trials failed at m = {}, α² = {}; first: trial {} ({}): {first}",
                failed.len(),
                at_point.len(),
                point.m,
                point.alpha_sq,
                o.record.trial,
                o.record.strategy
            ))));
        }
    }

    let (records, timings) = outcomes.into_iter().map(|o| (o.record, o.timing)).unzip();
    Ok(ExperimentResults {
        config: cfg.clone(),
        strategies: strategies.to_vec(),
        models,
        matrices,
        audits,
        lambdas,
        records,
        timings,
    })
}
