use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use mmroute::indices::build_tables;
use mmroute::mdp::{evaluate_policy, index_policy, optimal_loss, RviOptions, StationaryPolicy};
use mmroute::split::obs_loss_probability;
use mmroute::{bound_lbp, bound_lbr, parse_instance, solve_obs_default, Decision, Family, SystemInstance};
use mmroute_bench::{emit_report, rho_grid, run_sweep, SweepOptions};

#[derive(Parser)]
#[command(name = "mmroute", version, about = "Routing to parallel M/M/m/n loss queues")]
struct Cli {
    /// Worker threads for sweeps (defaults to one per core).
    #[arg(long, global = true, env = "MMROUTE_THREADS")]
    threads: Option<usize>,

    /// Rescale the instance to this nominal load before solving.
    #[arg(long, global = true)]
    rho: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the index table of one family for every queue.
    Indices {
        instance: PathBuf,
        #[arg(long)]
        family: Family,
    },
    /// Solve the optimal Bernoulli split.
    Obs { instance: PathBuf },
    /// Exact loss of an index policy.
    Evaluate {
        instance: PathBuf,
        #[arg(long)]
        family: Family,
        /// Write the policy (state id, occupancies, chosen queue or -1).
        #[arg(long)]
        policy_out: Option<PathBuf>,
        /// Write the stationary distribution (state id, probability).
        #[arg(long)]
        steady_out: Option<PathBuf>,
    },
    /// Minimum loss probability by relative value iteration.
    Optimal {
        instance: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Lower bounds on the minimum loss probability.
    Bounds { instance: PathBuf },
    /// Sweep the nominal load and write a CSV report.
    Sweep {
        instance: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        rho_from: f64,
        #[arg(long, default_value_t = 1.2)]
        rho_to: f64,
        #[arg(long, default_value_t = 0.05)]
        rho_step: f64,
        /// Comma-separated families, e.g. `sq,rb,pi`; empty for none.
        #[arg(long, default_value = "sq,sed,nq,fas,rb,pi")]
        families: String,
        #[arg(long)]
        out: PathBuf,
        /// Value of the tag column; defaults to the instance file stem.
        #[arg(long)]
        tag: Option<String>,
        /// Add rows to an existing CSV instead of replacing it.
        #[arg(long)]
        append: bool,
    },
}

/// Emitted rows that broke dominance or bound validity.
#[derive(Debug)]
struct InvariantFailure(usize);

impl fmt::Display for InvariantFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} sweep rows violate dominance or bound validity", self.0)
    }
}

impl std::error::Error for InvariantFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<mmroute::Error>() {
            return match e {
                mmroute::Error::Parse { .. } | mmroute::Error::Validation { .. } => 2,
                mmroute::Error::Capacity(_) => 4,
                _ => 3,
            };
        }
        if cause.is::<io::Error>() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load(path: &Path, rho: Option<f64>) -> Result<SystemInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let inst: SystemInstance = parse_instance(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(match rho {
        Some(r) => inst.scale_to_nominal_load(r)?,
        None => inst,
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Indices { instance, family } => {
            let inst = load(&instance, cli.rho)?;
            let split = solve_obs_default(&inst)?;
            writeln!(out, "queue,x,value")?;
            for t in build_tables(&inst, family, Some(&split))? {
                for (x, v) in t.values().iter().enumerate() {
                    writeln!(out, "{},{x},{v:e}", t.queue_id())?;
                }
            }
        }
        Command::Obs { instance } => {
            let inst = load(&instance, cli.rho)?;
            let split = solve_obs_default(&inst)?;
            writeln!(out, "# multiplier={:e}", split.multiplier())?;
            writeln!(out, "# loss_rate={:e}", split.total_loss_rate())?;
            writeln!(out, "# loss_probability={:e}", obs_loss_probability(&inst, &split))?;
            writeln!(out, "# kkt_residual={:e}", split.kkt_residual())?;
            writeln!(out, "queue,lambda,probability,loss_rate")?;
            let probs = split.probabilities();
            for k in 0..inst.len() {
                writeln!(
                    out,
                    "{k},{:e},{:e},{:e}",
                    split.lambdas()[k],
                    probs[k],
                    split.per_queue_loss()[k]
                )?;
            }
        }
        Command::Evaluate { instance, family, policy_out, steady_out } => {
            let inst = load(&instance, cli.rho)?;
            let split = solve_obs_default(&inst)?;
            let policy = index_policy(&inst, family, Some(&split))?;
            let eval = evaluate_policy(&inst, &policy)?;
            writeln!(out, "family={family}")?;
            writeln!(out, "loss_probability={:e}", eval.loss_probability)?;
            writeln!(out, "loss_rate={:e}", eval.loss_rate)?;
            writeln!(out, "throughput={:e}", eval.throughput)?;
            writeln!(out, "generator_residual={:e}", eval.generator_residual)?;
            if let Some(p) = policy_out {
                write_policy(&p, &policy)?;
            }
            if let Some(p) = steady_out {
                let mut s = String::from("state,probability\n");
                for (id, pi) in eval.steady_state.iter().enumerate() {
                    s.push_str(&format!("{id},{pi:e}\n"));
                }
                fs::write(&p, s).with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Optimal { instance, tol, policy_out } => {
            let inst = load(&instance, cli.rho)?;
            let opts = RviOptions { tol, ..RviOptions::default() };
            let sol = optimal_loss(&inst, &opts)?;
            writeln!(out, "z_op={:e}", sol.z_op)?;
            writeln!(out, "z_lower={:e}", sol.z_lower)?;
            writeln!(out, "z_upper={:e}", sol.z_upper)?;
            writeln!(out, "sweeps={}", sol.sweeps)?;
            writeln!(out, "residual_span={:e}", sol.residual_span)?;
            if let Some(p) = policy_out {
                write_policy(&p, &sol.policy)?;
            }
        }
        Command::Bounds { instance } => {
            let inst = load(&instance, cli.rho)?;
            writeln!(out, "lbr={:e}", bound_lbr(&inst)?)?;
            writeln!(out, "lbp={:e}", bound_lbp(&inst)?)?;
        }
        Command::Sweep { instance, rho_from, rho_to, rho_step, families, out: csv, tag, append } => {
            let base = load(&instance, None)?;
            let grid = rho_grid(rho_from, rho_to, rho_step).map_err(|e| mmroute::Error::Validation {
                field: "rho grid".into(),
                message: e.to_string(),
            })?;
            let families = families
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(str::parse)
                .collect::<mmroute::Result<Vec<Family>>>()?;
            let tag = tag.unwrap_or_else(|| {
                instance.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
            });
            let opts = SweepOptions { families, tag, ..SweepOptions::default() };
            let rows = run_sweep(&base, &grid, &opts)?;
            let stats = emit_report(&rows, &csv, append)?;
            writeln!(
                out,
                "wrote {} rows to {} ({} failed)",
                stats.rows,
                csv.display(),
                stats.failed_rows
            )?;
            if stats.violating_rows > 0 {
                return Err(anyhow!(InvariantFailure(stats.violating_rows)));
            }
            if let Some(e) = rows.iter().find_map(|r| r.error.clone()) {
                return Err(anyhow::Error::new(e).context(format!("{} of {} rows failed", stats.failed_rows, stats.rows)));
            }
        }
    }
    Ok(())
}

fn write_policy(path: &Path, policy: &StationaryPolicy) -> Result<()> {
    let space = policy.space();
    let mut s = String::from("state");
    for k in 0..space.dims() {
        s.push_str(&format!(",x{}", k + 1));
    }
    s.push_str(",queue\n");
    space.for_each(|id, x| {
        s.push_str(&id.to_string());
        for v in x {
            s.push_str(&format!(",{v}"));
        }
        let a = match policy.action(id) {
            Decision::Queue(k) => k as i64,
            Decision::Blocked => -1,
        };
        s.push_str(&format!(",{a}\n"));
    });
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}
