use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use priorsense::config::{parse_strategies, ExperimentConfig};
use priorsense::error::{Error, Result};
use priorsense::experiment::BUDGET_SLACK;
use priorsense::formats::{read_matrix, write_matrix_bin, write_matrix_csv, ProblemFile};
use priorsense::output::{emit_outputs, prepare_dir, replot, TRIALS_FILE};
use priorsense::streams::{stream, Purpose};
use priorsense_core::baselines::{clutter_as_signal_design, lowrank_wiener_design, random_design};
use priorsense_core::design::{design_objective, design_sensing_matrix, Strategy};
use priorsense_core::lmmse::lmmse_mse;

/// Prior-driven sensing matrix design and the comparison experiment.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design sensing matrices for a problem JSON and write them as .bin and .csv.
    Design {
        #[command(flatten)]
        common: Common,
    },
    /// Report objective, MSE and energy of a supplied matrix.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Matrix file (.bin or .csv).
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Run the full sweep from an experiment config.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Worker threads; results do not depend on this.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Rebuild aggregate and plot tables from a run's per-trial CSV.
    Replot {
        /// Run directory or trials.csv path.
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config (experiment) or seeds the random baseline (design).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
    /// Comma-separated strategy labels.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Design { common } => design(common),
        Command::Evaluate { config, matrix } => evaluate(config, matrix),
        Command::Experiment { common, threads } => experiment(common, threads),
        Command::Replot { input, out, force } => {
            let trials = if input.is_dir() { input.join(TRIALS_FILE) } else { input.clone() };
            let dir = out.unwrap_or_else(|| trials.parent().map(PathBuf::from).unwrap_or_default());
            for p in replot(&trials, &dir, force)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn design(common: Common) -> Result<()> {
    let file = ProblemFile::load(&common.config)?;
    let problem = file.to_problem()?;
    let strategies = match &common.strategies {
        Some(s) => parse_strategies(s)?,
        None => vec![Strategy::Designed],
    };
    let out = common.out.unwrap_or_else(|| PathBuf::from("design"));
    prepare_dir(&out, common.force)?;
    for s in strategies {
        let a = match s {
            Strategy::Designed => design_sensing_matrix(&problem, None)?.0,
            Strategy::ClutterAsSignal => clutter_as_signal_design(&problem)?,
            Strategy::LowRankWiener => {
                lowrank_wiener_design(&problem.sigma_x, &problem.sigma_c, problem.m, problem.alpha_sq, problem.ridge)?
            }
            Strategy::Random => {
                let mut rng = stream(common.seed.unwrap_or(0), Purpose::Matrix, &[]);
                random_design(problem.m, problem.n(), problem.alpha_sq, &mut rng)?
            }
        };
        if !a.within_budget(problem.alpha_sq, BUDGET_SLACK) {
            return Err(Error::Core(priorsense_core::Error::Numerical(format!("{s} matrix exceeds the budget"))));
        }
        let objective = design_objective(a.matrix(), &problem.sigma_x, &problem.sigma_c)?;
        for (ext, bin) in [("bin", true), ("csv", false)] {
            let path = out.join(format!("{}.{ext}", s.label()));
            if bin {
                write_matrix_bin(&path, a.matrix())?;
            } else {
                write_matrix_csv(&path, a.matrix())?;
            }
        }
        println!("{s}: objective {objective:.9e}, energy {:.9e}", a.energy());
    }
    Ok(())
}

fn evaluate(config: PathBuf, matrix: PathBuf) -> Result<()> {
    let problem = ProblemFile::load(&config)?.to_problem()?;
    let a = read_matrix(&matrix)?;
    if a.ncols() != problem.n() {
        return Err(Error::Config(format!("matrix has {} columns, problem dimension is {}", a.ncols(), problem.n())));
    }
    let objective = design_objective(&a, &problem.sigma_x, &problem.sigma_c)?;
    let mse = lmmse_mse(&a, &problem.sigma_x, &problem.sigma_c)?;
    let energy: f64 = a.iter().map(|x| x * x).sum();
    let report = serde_json::json!({
        "rows": a.nrows(),
        "cols": a.ncols(),
        "objective": objective,
        "mse": mse,
        "trace_sigma_x": problem.sigma_x.trace(),
        "energy": energy,
        "alpha_sq": problem.alpha_sq,
        "within_budget": energy <= problem.alpha_sq * (1.0 + BUDGET_SLACK),
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn experiment(common: Common, threads: usize) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(s) = common.strategies {
        cfg.strategies = s;
    }
    if let Some(out) = common.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    let strategies = cfg.strategies()?;
    // fail on an existing directory before spending time on the run
    prepare_dir(&cfg.output_dir, common.force)?;
    let results = priorsense::run_experiment(&cfg, &strategies, threads)?;
    let unconverged = results.records.iter().filter(|r| !r.converged && r.failure.is_none()).count();
    if unconverged > 0 {
        eprintln!("note: {unconverged} of {} solves stopped at the iteration limit", results.records.len());
    }
    for p in emit_outputs(&results, &cfg.output_dir, true)? {
        if p.extension().is_some_and(|e| e == "csv") && p.parent() == Some(cfg.output_dir.as_path()) {
            println!("{}", p.display());
        }
    }
    Ok(())
}
