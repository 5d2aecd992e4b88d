//! Argument handling and subcommands of the `stochplan` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use stochplan::driver::{run_with, RunConfig, Schedule};
use stochplan::exec::Executor;
use stochplan::instance::{generate_synthetic, read_instance, write_instance};
use stochplan::report::{benchmark, write_report_file, write_trace_file, SolutionFile};
use stochplan::scenred::{compute_z_matrix, distance, export_similarity_graph, kmedoid, reduced_instance};
use stochplan::stabilization::Method;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("failed to read config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] stochplan::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(name = "stochplan", version, about = "Stabilized Benders decomposition for stochastic capacity expansion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance by decomposition.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Output directory for trace.csv and solution.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare the closed problem with decomposition on each instance.
    Benchmark {
        #[arg(required = true)]
        instances: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// Output directory for report.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Pick representative scenarios and export the similarity graph.
    Reduce {
        instance: PathBuf,
        /// Number of representatives.
        #[arg(long)]
        m: usize,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for nodes.csv, edges.csv and reduced.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write a seeded synthetic instance.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        scenarios: usize,
        #[arg(long, default_value_t = 3)]
        techs: usize,
        #[arg(long, default_value_t = 1)]
        storage: usize,
        #[arg(long, default_value_t = 168)]
        time_steps: usize,
        #[arg(long, default_value_t = 2)]
        years: usize,
        /// Instance JSON path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    None,
    Proximal,
    Level,
    Trust,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::None => Method::None,
            MethodArg::Proximal => Method::Proximal,
            MethodArg::Level => Method::Level,
            MethodArg::Trust => Method::TrustRegion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    None,
    Exp,
    Lin,
    Log,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::None => Schedule::None,
            ScheduleArg::Exp => Schedule::Exponential,
            ScheduleArg::Lin => Schedule::Linear,
            ScheduleArg::Log => Schedule::Logarithmic,
        }
    }
}

/// Cut deletion age: an iteration count or `none`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EtaArg(pub Option<usize>);

fn parse_eta(s: &str) -> Result<EtaArg, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(EtaArg(None));
    }
    s.parse()
        .map(|v| EtaArg(Some(v)))
        .map_err(|_| format!("expected a non-negative integer or `none`, got {s:?}"))
}

/// Overrides on top of the configuration file, which in turn overrides the
/// built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Relative optimality gap at which to stop.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Iterations a cut may stay inactive before deletion, or `none`.
    #[arg(long, value_parser = parse_eta)]
    pub eta: Option<EtaArg>,
    /// Subproblem tolerance schedule.
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    /// Add valid inequalities to the master.
    #[arg(long)]
    pub vi: bool,
    /// Start from the most probable scenario's solution (the default for
    /// stabilized methods).
    #[arg(long)]
    pub initialize: bool,
    /// Start from an empty master instead.
    #[arg(long, conflicts_with = "initialize")]
    pub no_initialize: bool,
    #[arg(long)]
    pub mu_start: Option<f64>,
    #[arg(long)]
    pub mu_max: Option<f64>,
    /// Level parameter in [0, 1).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Trust-region radius factor.
    #[arg(long)]
    pub psi: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

impl RunArgs {
    pub fn apply(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(m) = self.method {
            cfg.method = m.into();
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(EtaArg(v)) = self.eta {
            cfg.eta = v;
        }
        if let Some(s) = self.schedule {
            cfg.schedule = s.into();
        }
        cfg.valid_inequalities |= self.vi;
        if self.initialize {
            cfg.initialize = Some(true);
        }
        if self.no_initialize {
            cfg.initialize = Some(false);
        }
        if let Some(v) = self.mu_start {
            cfg.mu_start = v;
        }
        if let Some(v) = self.mu_max {
            cfg.mu_max = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.psi {
            cfg.psi = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iterations = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg
    }

    /// Defaults, then the config file, then flags; validated.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(p) => load_config(p)?,
            None => RunConfig::default(),
        };
        let cfg = self.apply(base);
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn executor(workers: usize) -> Result<Executor, CliError> {
    Ok(Executor::new(workers)?)
}

pub fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Solve { instance, run, out } => {
            let cfg = run.resolve()?;
            let inst = read_instance(&instance)?;
            let exec = executor(cfg.workers)?;
            let result = run_with(&inst, &cfg, &exec)?;
            std::fs::create_dir_all(&out)?;
            write_trace_file(&result.trace, out.join("trace.csv"))?;
            SolutionFile::from_run(&inst, &result).write(out.join("solution.json"))?;
            println!(
                "objective {:.6} lower bound {:.6} gap {:.3e} iterations {} {}",
                result.objective,
                result.lower_bound,
                result.gap,
                result.iterations,
                if result.converged { "converged" } else { "NOT converged" }
            );
            Ok(if result.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
        }
        Command::Benchmark { instances, run, out } => {
            let cfg = run.resolve()?;
            let exec = executor(cfg.workers)?;
            let mut rows = Vec::with_capacity(instances.len());
            for path in &instances {
                let inst = read_instance(path)?;
                let name = path.file_stem().map_or_else(
                    || path.display().to_string(),
                    |s| s.to_string_lossy().into_owned(),
                );
                let row = benchmark(&name, &inst, &cfg, &exec)?;
                println!(
                    "{name}: closed {:.6} ({:.2}s) decomposition {:.6} ({:.2}s, {} iterations) discrepancy {:.2e}",
                    row.closed_objective,
                    row.closed_gen_s + row.closed_solve_s,
                    row.bd_objective,
                    row.bd_gen_s + row.bd_solve_s,
                    row.bd_iterations,
                    row.discrepancy
                );
                rows.push(row);
            }
            std::fs::create_dir_all(&out)?;
            write_report_file(&rows, out.join("report.csv"))?;
            Ok(if rows.iter().all(|r| r.bd_converged) { EXIT_OK } else { EXIT_NOT_CONVERGED })
        }
        Command::Reduce { instance, m, workers, seed, config, out } => {
            let base = match &config {
                Some(p) => load_config(p)?,
                None => RunConfig::default(),
            };
            let workers = workers.unwrap_or(base.workers);
            let seed = seed.unwrap_or(base.seed);
            let inst = read_instance(&instance)?;
            inst.ensure_valid()?;
            let n = inst.scenarios.len();
            if m == 0 || m > n {
                return Err(CliError::Usage(format!("--m must lie in [1, {n}], got {m}")));
            }
            let exec = executor(workers)?;
            let z = compute_z_matrix(&inst, &exec)?;
            let d = distance(&z.z);
            let red = kmedoid(&d, m, seed)?;
            let ids: Vec<String> = inst.scenarios.iter().map(|s| s.id.clone()).collect();
            export_similarity_graph(&ids, &d, &red, &out)?;
            write_instance(&reduced_instance(&inst, &red)?, out.join("reduced.json"))?;
            let picked: Vec<&str> = red.medoids.iter().map(|&i| ids[i].as_str()).collect();
            println!("representatives {picked:?} weights {:?} objective {:.6}", red.weights, red.objective);
            Ok(EXIT_OK)
        }
        Command::Generate { seed, scenarios, techs, storage, time_steps, years, out } => {
            let inst = generate_synthetic(seed, scenarios, techs, storage, time_steps, years)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_instance(&inst, &out)?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` and runs the subcommand, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}
