use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use scenario_mpc::fhocp::{build, extract, solve_fhocp, FhocpConfig, SolveStrategy, DEFAULT_ALPHA};
use scenario_mpc::harness::{self, TrialConfig, FULL_SCALE_TRIALS};
use scenario_mpc::model::load_model;
use scenario_mpc::rng::{Purpose, StreamKey};
use scenario_mpc::samplesize::{explicit_bound, log_phi, min_scenarios};
use scenario_mpc::solver::{self, SolverSettings};
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

#[derive(Parser)]
#[command(name = "scenario-mpc", version, about = "Robust MPC by scenario optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Full,
    Incremental,
}

#[derive(Subcommand)]
enum Command {
    /// Smallest scenario count M for reliability p, confidence 1 − beta and d decision variables.
    Samplesize {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        d: u64,
        /// Also report the closed-form upper bound.
        #[arg(long)]
        explicit: bool,
    },
    /// Solve one scenario problem and print (V*, z*, q*).
    Solve {
        /// "paper-example" or a path to a JSON model.
        #[arg(long, default_value = "paper-example")]
        model: String,
        /// Current state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long = "horizon", short = 'N', default_value_t = 10)]
        horizon: usize,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Explicit scenario count (overrides p and beta).
        #[arg(long = "scenarios", short = 'M')]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Scalar weight: Λ = lambda · I.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, value_enum, default_value_t = Strategy::Incremental)]
        strategy: Strategy,
        /// Write the full cone program in text form.
        #[arg(long)]
        dump_program: Option<PathBuf>,
    },
    /// Run trial 0 of a configuration and print its records.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Closed-loop trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the success probability.
    Montecarlo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override n_trials with the full-scale count (100000).
        #[arg(long)]
        full: bool,
        /// Override n_trials.
        #[arg(long)]
        trials: Option<usize>,
    },
}

fn read_config(path: &PathBuf) -> Result<TrialConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(TrialConfig::from_json(&text)?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Samplesize { p, beta, d, explicit } => {
            let m = min_scenarios(p, beta, d)?;
            let mut out = json!({
                "p": p,
                "beta": beta,
                "d": d,
                "M": m,
                "log_phi_at_M": log_phi(p, d, m)?,
                "log_phi_at_M_minus_1": if m > 0 { Some(log_phi(p, d, m - 1)?) } else { None },
            });
            if explicit {
                out["explicit_bound"] = json!(explicit_bound(p, beta, d)?);
            }
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Solve {
            model,
            x,
            horizon,
            p,
            beta,
            m,
            seed,
            alpha,
            lambda,
            strategy,
            dump_program,
        } => {
            let model = load_model(&model)?;
            let cfg = FhocpConfig::new(horizon, DMatrix::identity(model.m(), model.m()) * lambda, alpha)?;
            let count = match (m, p, beta) {
                (Some(m), _, _) => m,
                (None, Some(p), Some(beta)) => usize::try_from(min_scenarios(p, beta, cfg.decision_dim(&model) as u64)?)?,
                _ => bail!("give either --scenarios or both --p and --beta"),
            };
            if x.len() != model.n() {
                bail!("--x needs {} components, got {}", model.n(), x.len());
            }
            let x = DVector::from_vec(x);
            let omega = model.multisample(StreamKey::new(seed, Purpose::Scenario), count, horizon);
            let settings = SolverSettings::default();
            let sol = match strategy {
                Strategy::Full => {
                    let prog = build(&x, &omega, &model, &cfg)?;
                    if let Some(path) = &dump_program {
                        prog.write_text(BufWriter::new(File::create(path)?))?;
                    }
                    let mut sol = extract(&prog, &solver::solve(&prog, &settings)?)?;
                    sol.scenarios_in_program = count;
                    sol
                }
                Strategy::Incremental => {
                    if let Some(path) = &dump_program {
                        build(&x, &omega, &model, &cfg)?.write_text(BufWriter::new(File::create(path)?))?;
                    }
                    solve_fhocp(&x, &omega, &model, &cfg, &settings, SolveStrategy::default())?
                }
            };
            let out = json!({
                "M": count,
                "d": cfg.decision_dim(&model),
                "distance": model.terminal().distance(&x),
                "solution": sol,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Simulate { config, trace } => {
            let cfg = read_config(&config)?;
            let out = harness::simulate(&cfg)?;
            if let Some(path) = trace {
                let model = cfg.load_model()?;
                let mut w = BufWriter::new(File::create(&path)?);
                harness::write_trace_csv(&mut w, &out.trace, model.n(), model.m())?;
                w.flush()?;
            }
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Montecarlo { config, out, full, trials } => {
            let mut cfg = read_config(&config)?;
            if full {
                cfg.n_trials = FULL_SCALE_TRIALS;
            } else if let Some(n) = trials {
                cfg.n_trials = n;
            }
            let done = AtomicUsize::new(0);
            let total = cfg.n_trials;
            let step = (total / 20).max(1);
            let summary = harness::monte_carlo_with(&cfg, |_| {
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                if k % step == 0 || k == total {
                    eprintln!("{k}/{total} trials");
                }
            })?;
            let text = serde_json::to_string_pretty(&summary)?;
            std::fs::write(&out, &text).with_context(|| format!("writing {}", out.display()))?;
            println!("{text}");
        }
    }
    Ok(())
}
