use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use wbkmeans::parallel::with_workers;
use wbkmeans::{ClusterBounds, Execution, KernelFunction, Verdict};
use wbkmeans_cli::execute::{run_kernel, run_plain};
use wbkmeans_cli::ingest::{read_points, Header};
use wbkmeans_cli::job::{parse_delimiter, Fraction, JobSpec, StrategyName};
use wbkmeans_cli::verify::{certify, oracle, read_assignment, read_sites};

/// Weight-balanced k-means with certified power-diagram outputs.
#[derive(Parser)]
#[command(name = "wbkmeans", version)]
struct Cli {
    /// Worker threads for multi-start and Gram matrices; 0 picks the machine default.
    #[arg(long, global = true, env = "WBKMEANS_WORKERS", default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a weighted point file.
    Run(JobArgs),
    /// Cluster in the feature space of a kernel.
    KernelRun {
        #[command(flatten)]
        job: JobArgs,
        #[command(flatten)]
        kernel: KernelArgs,
    },
    /// Certify an assignment against a power diagram. Exit 0 when strongly feasible, 3 otherwise.
    Verify(VerifyArgs),
    #[command(hide = true)]
    Oracle(OracleArgs),
}

#[derive(Args)]
struct JobArgs {
    /// TOML job file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Whether the point file has a header row; detected when omitted.
    #[arg(long)]
    header: Option<bool>,
    #[arg(long)]
    delimiter: Option<char>,
    /// Bounds (1 ∓ p)·Σω/k, as a fraction or percentage.
    #[arg(long, conflicts_with_all = ["lower", "upper"])]
    balanced: Option<Fraction>,
    #[arg(long, value_delimiter = ',', requires = "upper")]
    lower: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', requires = "lower")]
    upper: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    init: Option<StrategyName>,
    /// One initial site as comma-separated coordinates; repeat k times.
    #[arg(long = "site", value_parser = parse_point)]
    sites: Vec<Vec<f64>>,
    /// Seed for one start; repeat for multi-start.
    #[arg(long = "seed", conflicts_with = "starts")]
    seeds: Vec<u64>,
    /// Multi-start over seeds 0..N.
    #[arg(long)]
    starts: Option<u64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    objective_tol: Option<f64>,
    #[arg(long)]
    site_merge_tol: Option<f64>,
    /// Linked pair `a:b` of 0-based point indices; repeatable.
    #[arg(long = "must-link", value_parser = parse_pair)]
    must_link: Vec<(usize, usize)>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Store every iteration's assignment in the trace.
    #[arg(long)]
    record_assignments: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelKind {
    Linear,
    Polynomial,
    Gaussian,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long)]
    kernel: Option<KernelKind>,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    degree: Option<u32>,
    #[arg(long)]
    offset: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    input: PathBuf,
    /// Sparse `cluster,point,value` triplets.
    #[arg(long)]
    assignment: PathBuf,
    /// Sites as written to sites.json, or a JSON array of points; centroids when omitted.
    #[arg(long)]
    sites: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    header: Option<bool>,
    #[arg(long)]
    delimiter: Option<char>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "site", value_parser = parse_point, required = true)]
    sites: Vec<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    lower: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    upper: Vec<f64>,
}

fn parse_point(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| format!("{c:?} is not a number")))
        .collect()
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("{s:?} is not of the form a:b"))?;
    let index = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("{t:?} is not a point index"));
    Ok((index(a)?, index(b)?))
}

impl JobArgs {
    fn into_spec(self) -> Result<JobSpec> {
        let mut spec = match &self.config {
            Some(path) => JobSpec::load(path)?,
            None => JobSpec::default(),
        };
        macro_rules! set {
            ($($field:expr => $value:expr),* $(,)?) => {
                $(if let Some(v) = $value { $field = Some(v); })*
            };
        }
        set! {
            spec.input => self.input,
            spec.k => self.k,
            spec.header => self.header,
            spec.delimiter => self.delimiter,
            spec.init.strategy => self.init,
            spec.tolerances.max_iterations => self.max_iterations,
            spec.tolerances.objective => self.objective_tol,
            spec.tolerances.site_merge => self.site_merge_tol,
            spec.output.dir => self.out,
        }
        if let Some(p) = self.balanced {
            spec.bounds.balanced = Some(p);
            spec.bounds.lower = None;
            spec.bounds.upper = None;
        }
        if self.lower.is_some() {
            spec.bounds.balanced = None;
            spec.bounds.lower = self.lower;
            spec.bounds.upper = self.upper;
        }
        if !self.sites.is_empty() {
            spec.init.sites = Some(self.sites);
        }
        if !self.seeds.is_empty() {
            spec.init.seeds = Some(self.seeds);
        }
        if let Some(n) = self.starts {
            spec.init.seeds = Some((0..n).collect());
        }
        if !self.must_link.is_empty() {
            spec.must_link.pairs = self.must_link;
        }
        if self.record_assignments {
            spec.output.record_assignments = Some(true);
        }
        Ok(spec)
    }
}

impl KernelArgs {
    fn apply(self, spec: &mut JobSpec) -> Result<()> {
        let Some(kind) = self.kernel else {
            if self.bandwidth.is_some() || self.degree.is_some() || self.offset.is_some() {
                bail!("kernel parameters given without --kernel");
            }
            return Ok(());
        };
        spec.kernel = Some(match kind {
            KernelKind::Linear => KernelFunction::Linear,
            KernelKind::Polynomial => KernelFunction::Polynomial {
                degree: self.degree.ok_or_else(|| anyhow!("--kernel polynomial needs --degree"))?,
                offset: self.offset.ok_or_else(|| anyhow!("--kernel polynomial needs --offset"))?,
            },
            KernelKind::Gaussian => KernelFunction::Gaussian {
                bandwidth: self.bandwidth.ok_or_else(|| anyhow!("--kernel gaussian needs --bandwidth"))?,
            },
        });
        Ok(())
    }
}

fn execution(workers: usize) -> Execution {
    if workers == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    let exec = execution(cli.workers);
    match cli.command {
        Command::Run(args) => {
            let job = args.into_spec()?.resolve(false)?;
            Ok(with_workers(cli.workers, || run_plain(&job, exec))?.code())
        }
        Command::KernelRun { job, kernel } => {
            let mut spec = job.into_spec()?;
            kernel.apply(&mut spec)?;
            let job = spec.resolve(true)?;
            Ok(with_workers(cli.workers, || run_kernel(&job, exec))?.code())
        }
        Command::Verify(args) => {
            let data = read_points(&args.input, parse_delimiter(args.delimiter)?, Header::from_flag(args.header))?;
            let y = read_assignment(&args.assignment, args.k, data.len())?;
            let sites = args.sites.as_deref().map(read_sites).transpose()?;
            let (verdict, report) = certify(&data, &y, sites)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if verdict == Verdict::StronglyFeasible { 0 } else { 3 })
        }
        Command::Oracle(args) => {
            let data = read_points(&args.input, b',', Header::Detect)?;
            let bounds = ClusterBounds::new(args.lower, args.upper).context("bounds")?;
            let report = with_workers(cli.workers, || oracle(data, &bounds, args.sites, exec))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WBKMEANS_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
