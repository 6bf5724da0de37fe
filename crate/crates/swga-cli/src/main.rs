//! Command-line driver for the SO(3) stochastic attitude-control experiments:
//! oracle verification, Galerkin assembly, policy iteration, basis sweeps and
//! Monte-Carlo simulation.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use config::{basis_pairs, CostKind, ExperimentConfig};
use swga::assembly::{assemble, trace_gap_cost, GalerkinSystem, NoiseModel};
use swga::sim::{baseline_controller, monte_carlo_costs, simulate, Policy, SimConfig};
use swga::so3::{from_zyz, EulerZyz, Rotation};
use swga::solver::{
    control, load_policy, policy_iteration, save_policy, PolicyCoefficients, SolveResult,
    SolverConfig,
};
use swga::wigner::Basis;

#[derive(Parser)]
#[command(name = "swga", version, about = "Stochastic attitude control on SO(3)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Cap the worker-thread count used by assembly and simulation.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory, overriding the config's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Simulation seed, overriding the config's `sim.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every oracle-equivalence and invariant suite.
    Verify {
        /// Emit the report as a JSON array instead of plain lines.
        #[arg(long)]
        json: bool,
        /// Test hook: bias every Clebsch-Gordan factor in the triple-integral
        /// suite to prove the oracle detects corruption.
        #[arg(long, hide = true, default_value_t = 0.0)]
        inject_cg_fault: f64,
    },
    /// Assemble the Galerkin system for every configured noise level and
    /// cache it on disk.
    Assemble {
        #[arg(long)]
        config: PathBuf,
    },
    /// Assemble (or reuse cached systems) and run the policy iteration for
    /// every configured noise level.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve across basis truncations and record the converged control
    /// magnitude at the initial attitude.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte-Carlo simulation under stored policies, one policy file, or the
    /// axis-angle baseline.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Use one stored policy file for every noise level.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Use the deterministic axis-angle baseline with this gain instead
        /// of a stored policy.
        #[arg(long)]
        baseline_gain: Option<f64>,
    },
}

enum CliError {
    /// Exit code 4.
    Config(String),
    /// Exit code 2.
    VerificationFailed,
    /// Exit code 3.
    Solver(String),
    /// Exit code 1.
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::VerificationFailed => 2,
            CliError::Solver(_) => 3,
            CliError::Config(_) => 4,
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<swga::Error> for CliError {
    fn from(e: swga::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Config(msg) | CliError::Solver(msg) | CliError::Other(msg) => {
                    eprintln!("error: {msg}")
                }
                CliError::VerificationFailed => eprintln!("error: verification failed"),
            }
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Verify { json, inject_cg_fault } => cmd_verify(json, inject_cg_fault),
        Command::Assemble { config } => {
            let ctx = Context::load(&config, cli.out, cli.seed)?;
            cmd_assemble(&ctx)
        }
        Command::Solve { config } => {
            let ctx = Context::load(&config, cli.out, cli.seed)?;
            cmd_solve(&ctx)
        }
        Command::Sweep { config } => {
            let ctx = Context::load(&config, cli.out, cli.seed)?;
            cmd_sweep(&ctx)
        }
        Command::Simulate { config, policy, baseline_gain } => {
            let ctx = Context::load(&config, cli.out, cli.seed)?;
            cmd_simulate(&ctx, policy.as_deref(), baseline_gain)
        }
    }
}

struct Context {
    cfg: ExperimentConfig,
    out_dir: PathBuf,
}

impl Context {
    fn load(path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self, CliError> {
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(seed) = seed {
            cfg.sim.seed = seed;
        }
        let out_dir = out.unwrap_or_else(|| cfg.out_dir.clone());
        std::fs::create_dir_all(&out_dir)
            .map_err(|e| CliError::Other(format!("cannot create {}: {e}", out_dir.display())))?;
        // record the exact configuration the outputs were produced from
        std::fs::write(out_dir.join("config.json"), cfg.canonical_json())
            .map_err(|e| CliError::Other(e.to_string()))?;
        Ok(Context { cfg, out_dir })
    }

    fn cost_fn(&self) -> impl Fn(&Rotation) -> f64 + Copy {
        match self.cfg.cost {
            CostKind::TraceGap => trace_gap_cost,
        }
    }

    fn r0(&self) -> Rotation {
        let [a, b, g] = self.cfg.r0_zyz;
        from_zyz(EulerZyz::new(a, b, g))
    }

    fn system_path(&self, idx: usize) -> PathBuf {
        self.out_dir.join(format!("system_{idx}.bin"))
    }

    fn policy_path(&self, idx: usize) -> PathBuf {
        self.out_dir.join(format!("policy_{idx}.txt"))
    }

    fn assemble_gamma(&self, gamma: f64) -> Result<GalerkinSystem, CliError> {
        let noise = NoiseModel::isotropic(gamma);
        Ok(assemble(self.cfg.l_max, &noise, &self.cfg.w_matrix(), self.cost_fn(), self.cfg.epsilon)?)
    }

    fn load_or_assemble(&self, idx: usize, gamma: f64) -> Result<GalerkinSystem, CliError> {
        let path = self.system_path(idx);
        if path.exists() {
            let sys = GalerkinSystem::load(&path)?;
            let expected = NoiseModel::isotropic(gamma);
            if sys.sigma() == expected.sigma()
                && sys.w() == &self.cfg.w_matrix()
                && sys.epsilon() == self.cfg.epsilon
            {
                return Ok(sys);
            }
            eprintln!("note: cached {} does not match the config; reassembling", path.display());
        }
        let sys = self.assemble_gamma(gamma)?;
        sys.save(&path)?;
        Ok(sys)
    }

    fn solver_config(&self, theta0: Option<DVector<f64>>) -> SolverConfig {
        SolverConfig {
            theta0,
            tol: self.cfg.solver.tol,
            max_iter: self.cfg.solver.max_iter,
            damping: self.cfg.solver.damping,
        }
    }
}

fn cmd_verify(json: bool, bias: f64) -> Result<(), CliError> {
    let reports = swga::verify::run_all(bias);
    if json {
        let items: Vec<String> = reports
            .iter()
            .map(|r| {
                format!(
                    "  {{\"suite\": \"{}\", \"passed\": {}, \"cases\": {}, \"max_error\": {:e}, \"tolerance\": {:e}}}",
                    r.name,
                    r.passed(),
                    r.cases,
                    r.max_error,
                    r.tolerance
                )
            })
            .collect();
        println!("[\n{}\n]", items.join(",\n"));
    } else {
        for r in &reports {
            println!("{r}");
        }
    }
    if reports.iter().all(|r| r.passed()) {
        Ok(())
    } else {
        Err(CliError::VerificationFailed)
    }
}

fn cmd_assemble(ctx: &Context) -> Result<(), CliError> {
    for (idx, &gamma) in ctx.cfg.gammas.iter().enumerate() {
        let sys = ctx.assemble_gamma(gamma)?;
        let path = ctx.system_path(idx);
        sys.save(&path)?;
        println!(
            "assembled gamma = {gamma}: dim {} -> {}",
            sys.dim(),
            path.display()
        );
    }
    Ok(())
}

fn write_history_csv(path: &Path, result: &SolveResult) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| CliError::Other(e.to_string()))?,
    );
    let emit = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(out, "iteration,update_norm,solve_residual")?;
        for rec in &result.history {
            writeln!(
                out,
                "{},{:.16e},{:.16e}",
                rec.iteration, rec.update_norm, rec.solve_residual
            )?;
        }
        Ok(())
    };
    emit(&mut out).map_err(|e| CliError::Other(e.to_string()))
}

fn cmd_solve(ctx: &Context) -> Result<(), CliError> {
    let mut warm: Option<DVector<f64>> = None;
    let mut failures = Vec::new();
    for (idx, &gamma) in ctx.cfg.gammas.iter().enumerate() {
        let sys = ctx.load_or_assemble(idx, gamma)?;
        let cfg = ctx.solver_config(warm.clone());
        match policy_iteration(&sys, &cfg) {
            Ok(result) => {
                save_policy(&ctx.policy_path(idx), &sys, &result, ctx.cfg.solver.tol)?;
                write_history_csv(&ctx.out_dir.join(format!("history_{idx}.csv")), &result)?;
                println!(
                    "gamma = {gamma}: converged = {} in {} iterations (final update {:.3e})",
                    result.converged,
                    result.history.len(),
                    result.history.last().map_or(f64::NAN, |r| r.update_norm)
                );
                if result.converged {
                    warm = Some(result.theta.0.clone());
                } else {
                    failures.push(format!("gamma = {gamma}: no convergence within {} iterations", cfg.max_iter));
                }
            }
            Err(e) => {
                failures.push(format!("gamma = {gamma}: {e}"));
                eprintln!("gamma = {gamma}: {e}");
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Solver(failures.join("; ")))
    }
}

fn cmd_sweep(ctx: &Context) -> Result<(), CliError> {
    use std::io::Write;
    let Some(sweep) = &ctx.cfg.sweep else {
        return Err(CliError::Config("sweep section missing from config".into()));
    };
    let n_max = basis_pairs(ctx.cfg.l_max);
    let sizes: Vec<usize> = match &sweep.sizes {
        Some(s) => s.clone(),
        None => (1..=n_max).collect(),
    };
    let full = ctx.assemble_gamma(sweep.gamma)?;
    let basis = full.basis();
    let r0 = ctx.r0();

    let path = ctx.out_dir.join("sweep.csv");
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&path).map_err(|e| CliError::Other(e.to_string()))?,
    );
    writeln!(out, "n,status,control_norm").map_err(|e| CliError::Other(e.to_string()))?;

    let mut warm: Option<DVector<f64>> = None;
    let mut n_failed = 0usize;
    for &n in &sizes {
        let sub = full.truncate(n);
        let warm_padded = warm.as_ref().map(|t| {
            let mut v = DVector::zeros(sub.dim());
            let keep = t.len().min(sub.dim());
            v.rows_mut(0, keep).copy_from(&t.rows(0, keep));
            v
        });
        // plain attempt, then a damped retry for truncations where the
        // undamped map limit-cycles
        let mut outcome = policy_iteration(&sub, &ctx.solver_config(warm_padded.clone()))
            .ok()
            .filter(|r| r.converged);
        if outcome.is_none() {
            let retry = SolverConfig {
                theta0: warm_padded,
                tol: ctx.cfg.solver.tol,
                max_iter: ctx.cfg.solver.max_iter.max(300),
                damping: 0.5 * ctx.cfg.solver.damping,
            };
            outcome = policy_iteration(&sub, &retry).ok().filter(|r| r.converged);
        }
        match outcome {
            Some(result) => {
                let mut padded = DVector::zeros(basis.len());
                padded.rows_mut(0, sub.dim()).copy_from(&result.theta.0);
                let u = control(basis, &PolicyCoefficients(padded), full.w(), &r0)?;
                writeln!(out, "{n},converged,{:.16e}", u.norm())
                    .map_err(|e| CliError::Other(e.to_string()))?;
                warm = Some(result.theta.0.clone());
            }
            None => {
                n_failed += 1;
                writeln!(out, "{n},failed,nan").map_err(|e| CliError::Other(e.to_string()))?;
            }
        }
    }
    out.flush().map_err(|e| CliError::Other(e.to_string()))?;
    println!(
        "sweep over {} truncations ({n_failed} failed) -> {}",
        sizes.len(),
        path.display()
    );
    Ok(())
}

fn cmd_simulate(
    ctx: &Context,
    policy_file: Option<&Path>,
    baseline_gain: Option<f64>,
) -> Result<(), CliError> {
    if policy_file.is_some() && baseline_gain.is_some() {
        return Err(CliError::Config("--policy and --baseline-gain are mutually exclusive".into()));
    }
    let label = if baseline_gain.is_some() { "baseline" } else { "policy" };
    for (idx, &gamma) in ctx.cfg.gammas.iter().enumerate() {
        let policy: Box<dyn Policy> = match (baseline_gain, policy_file) {
            (Some(gain), _) => {
                if !(gain > 0.0) {
                    return Err(CliError::Config("baseline gain must be positive".into()));
                }
                Box::new(baseline_controller(gain))
            }
            (None, source) => {
                let path = source
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| ctx.policy_path(idx));
                if !path.exists() {
                    return Err(CliError::Config(format!(
                        "policy file {} not found; run `swga solve` first",
                        path.display()
                    )));
                }
                let stored = load_policy(&path)?;
                if stored.theta.len() != 2 * basis_pairs(stored.l_max) {
                    return Err(CliError::Config(format!(
                        "policy file {} is inconsistent",
                        path.display()
                    )));
                }
                Box::new(swga::solver::FeedbackPolicy::new(
                    Basis::new(stored.l_max),
                    &stored.theta,
                    &stored.w,
                )?)
            }
        };
        let sim = SimConfig {
            r0: ctx.r0(),
            t0: ctx.cfg.sim.t0,
            dt: ctx.cfg.sim.dt,
            noise: NoiseModel::isotropic(gamma),
            w: ctx.cfg.w_matrix(),
            n_runs: ctx.cfg.sim.n_runs,
            seed: ctx.cfg.sim.seed,
        };
        let curves = monte_carlo_costs(policy.as_ref(), &sim)?;
        let path = ctx.out_dir.join(format!("curves_{label}_{idx}.csv"));
        curves.save_csv(&path)?;
        println!(
            "gamma = {gamma}: mean l at t = {} is {:.4} -> {}",
            ctx.cfg.sim.t0,
            curves.mean_l.last().unwrap(),
            path.display()
        );
        if ctx.cfg.sim.export_trajectories {
            for run in 0..ctx.cfg.sim.n_runs as u64 {
                let traj = simulate(policy.as_ref(), &sim, run)?;
                traj.save_csv(&ctx.out_dir.join(format!("traj_{label}_{idx}_run{run}.csv")))?;
            }
        }
    }
    Ok(())
}
