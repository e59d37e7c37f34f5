use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use dcep_core::harness::{read_trajectory_csv, simulate, synth_scenario, write_report, BaselineController, RunReport, Scenario};
use dcep_core::mpc::MpcController;
use dcep_core::plant::PlantState;
use dcep_core::rl::train::{load_theta, save_theta, select_best_policy, train, RlController, RolloutEnv, TrainingOutcome};
use dcep_core::rl::BasisSpec;
use dcep_core::{Config, Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "dcep", version, about = "District cooling plant with thermal storage: simulation and control")]
struct Cli {
    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario CSV (timestamp, t_oawb, q_l_ref, price). Overrides --seed/--days.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Seed of the synthetic scenario.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Length of the synthetic scenario in days.
    #[arg(long, default_value_t = 7)]
    days: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerKind {
    Baseline,
    Rl,
    Mpc,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scenario CSV.
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 7)]
        days: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one controller in closed loop and write its trajectory.
    Simulate {
        #[arg(long, value_enum)]
        controller: ControllerKind,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Parameter vector for the rl controller.
        #[arg(long, required_if_eq("controller", "rl"))]
        theta: Option<PathBuf>,
        /// Basis manifest matching --theta.
        #[arg(long, required_if_eq("controller", "rl"))]
        basis: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Policy iteration, then pick the best iterate on a separate scenario.
    Train {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Scenario used to choose among the iterates.
        #[arg(long)]
        eval_scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        eval_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop run of a trained parameter vector.
    Evaluate {
        #[arg(long)]
        theta: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop predictive control; also writes the first plan.
    Mpc {
        /// Prediction horizon in steps.
        #[arg(long)]
        horizon: Option<usize>,
        /// Rounding window in steps.
        #[arg(long)]
        window: Option<usize>,
        /// Steps between replans.
        #[arg(long)]
        replan: Option<usize>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Comparison table and charts from trajectory CSVs given as name=path.
    Report {
        #[arg(required = true, value_parser = parse_run)]
        runs: Vec<(String, PathBuf)>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_run(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected name=path, got '{s}'")),
    }
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            let line = json!({
                "level": record.level().as_str().to_lowercase(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        })
        .init();
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn load_scenario(args: &ScenarioArgs, cfg: &Config) -> Result<Scenario> {
    let sc = match &args.scenario {
        Some(p) => Scenario::load(p, cfg.synth.tau)?,
        None => synth_scenario(args.seed, args.days, &cfg.synth)?,
    };
    if (sc.t_s - cfg.params.t_s).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("scenario step {} s differs from the plant step {} s", sc.t_s, cfg.params.t_s)));
    }
    Ok(sc)
}

fn run(cfg: &Config, sc: &Scenario, controller: &mut dyn dcep_core::harness::Controller) -> Result<RunReport> {
    simulate(controller, sc, PlantState::nominal(&cfg.params), &cfg.params, &cfg.solver)
}

fn finish(run: &RunReport, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("{}.csv", run.controller));
    run.write_trajectory_csv(&path)?;
    log::info!(
        "{}: cost {:.2}, e_rmse {:.2} kW, {} switches, {} repairs, {:.4} s per step; wrote {}",
        run.controller,
        run.total_cost,
        run.e_rmse,
        run.n_switch,
        run.repairs,
        run.time_mean,
        path.display()
    );
    Ok(())
}

fn rl_controller(cfg: &Config, theta: &Path, basis: &Path) -> Result<RlController> {
    RlController::new(BasisSpec::load(basis)?, load_theta(theta)?, cfg.params.clone())
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth { seed, days, out } => {
            let sc = synth_scenario(seed, days, &cfg.synth)?;
            sc.save(&out)?;
            log::info!("wrote {} rows to {}", sc.len(), out.display());
        }
        Command::Simulate { controller, scenario, theta, basis, out } => {
            let sc = load_scenario(&scenario, &cfg)?;
            let report = match controller {
                ControllerKind::Baseline => {
                    run(&cfg, &sc, &mut BaselineController::new(cfg.baseline.clone(), cfg.params.clone()))?
                }
                ControllerKind::Rl => {
                    let (theta, basis) = theta.zip(basis).ok_or_else(|| Error::InvalidArgument("rl needs --theta and --basis".into()))?;
                    run(&cfg, &sc, &mut rl_controller(&cfg, &theta, &basis)?)?
                }
                ControllerKind::Mpc => {
                    run(&cfg, &sc, &mut MpcController::new(cfg.mpc.clone(), cfg.baseline.clone(), cfg.params.clone())?)?
                }
            };
            finish(&report, &out)?;
        }
        Command::Train { scenario, eval_scenario, eval_seed, out } => {
            let sc = load_scenario(&scenario, &cfg)?;
            let eval_args = ScenarioArgs { scenario: eval_scenario, seed: eval_seed, days: scenario.days };
            let eval = load_scenario(&eval_args, &cfg)?;
            let x0 = PlantState::nominal(&cfg.params);
            let env = RolloutEnv {
                scenario: &sc,
                x0,
                params: &cfg.params,
                plant_solver: &cfg.solver,
                baseline: &cfg.baseline,
                kappa: cfg.training.kappa,
                t_sim: cfg.training.t_sim,
            };
            let outcome: TrainingOutcome = train(&env, &BasisSpec::default(), &cfg.training)?;
            outcome.save(&out)?;
            let (best, costs) =
                select_best_policy(&outcome.spec, &outcome.thetas, &eval, x0, &cfg.params, &cfg.solver, cfg.training.kappa)?;
            save_theta(&outcome.thetas[best], out.join("theta_best.csv"))?;
            log::info!(
                "selected iterate {best} with cost {:.2} (initial {:.2}); wrote {}",
                costs[best],
                costs[0],
                out.display()
            );
        }
        Command::Evaluate { theta, basis, scenario, out } => {
            let sc = load_scenario(&scenario, &cfg)?;
            let report = run(&cfg, &sc, &mut rl_controller(&cfg, &theta, &basis)?)?;
            finish(&report, &out)?;
        }
        Command::Mpc { horizon, window, replan, scenario, out } => {
            let sc = load_scenario(&scenario, &cfg)?;
            let mut mpc_cfg = cfg.mpc.clone();
            mpc_cfg.horizon = horizon.unwrap_or(mpc_cfg.horizon);
            mpc_cfg.window = window.unwrap_or(mpc_cfg.window);
            mpc_cfg.replan = replan.unwrap_or(mpc_cfg.replan);
            let mut c = MpcController::new(mpc_cfg, cfg.baseline.clone(), cfg.params.clone())?.keep_history();
            let report = run(&cfg, &sc, &mut c)?;
            finish(&report, &out)?;
            if let Some(plan) = c.history.as_ref().and_then(|h| h.first()) {
                plan.write_csv(out.join("plan_000.csv"))?;
            }
        }
        Command::Report { runs, out } => {
            let x0 = PlantState::nominal(&cfg.params);
            let reports = runs
                .iter()
                .map(|(name, path)| Ok(RunReport::from_rows(name, x0, read_trajectory_csv(path)?)))
                .collect::<Result<Vec<_>>>()?;
            for f in write_report(&reports, &out)? {
                log::info!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            log::error!("{}", e.render().to_string().trim_end());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
