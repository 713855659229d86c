//! Command-line interface: `fit`, `simulate`, `kernel-table`.
//!
//! Every run setting can come from a `--flag` or from a `key = value`
//! config file (`--config run.conf`); flags win. All outputs are
//! deterministic functions of the resolved settings, so rerunning a
//! command reproduces its files byte for byte.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numerical failure, 1 I/O error.

use clap::{Args, Parser, Subcommand};
use sbfit::backfit::{fit, FitOptions, Norming};
use sbfit::config::{parse_config_file, parse_interval, parse_interval_list, parse_real_list, ConfigMap};
use sbfit::dataset::{load_csv, IntervalPolicy};
use sbfit::error::{Error, ErrorCategory, Result};
use sbfit::kernel::KernelMode;
use sbfit::output::{
    render_components_csv, render_fit_summary, render_kernel_table, write_mc_outputs,
};
use sbfit::simulate::{BandwidthSpec, SimConfig};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "sbfit",
    version,
    about = "Additive regression by smooth backfitting",
    long_about = "Fits additive nonparametric regression models by smooth backfitting with \
                  local-linear marginal smoothers and boundary-aware kernels, and ships a \
                  reproducible Monte Carlo benchmark harness."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the additive model to a CSV dataset (last column = response)
    Fit(FitArgs),
    /// Run the built-in Monte Carlo benchmark study
    Simulate(SimArgs),
    /// Dump the kernel boundary-moment table for one bandwidth
    KernelTable(KernelTableArgs),
}

fn kernel_mode_arg(s: &str) -> Result<KernelMode> {
    s.parse()
}

fn norming_arg(s: &str) -> Result<Norming> {
    s.parse()
}

fn interval_arg(s: &str) -> Result<(f64, f64)> {
    parse_interval(s)
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with a header row; last column is the response
    #[arg(long)]
    data: Option<PathBuf>,
    /// key = value config file supplying any setting left unset by flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluation grid size per axis
    #[arg(long)]
    grid: Option<usize>,
    /// Bandwidth per covariate, in column order (repeat the flag)
    #[arg(long)]
    bandwidth: Vec<f64>,
    /// Covariate interval lo:hi, in column order (repeat the flag);
    /// inferred from the data when absent
    #[arg(long, value_parser = interval_arg)]
    interval: Vec<(f64, f64)>,
    /// Kernel mode: corrected | conventional
    #[arg(long, value_parser = kernel_mode_arg)]
    kernel_mode: Option<KernelMode>,
    /// Component centering: ptilde | phat | sample-mean
    #[arg(long, value_parser = norming_arg)]
    norming: Option<Norming>,
    /// Convergence tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Sweep budget
    #[arg(long)]
    max_sweeps: Option<usize>,
}

#[derive(Args)]
struct SimArgs {
    /// key = value config file supplying any setting left unset by flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed of the study's generator streams
    #[arg(long)]
    seed: Option<u64>,
    /// Observations per replication
    #[arg(long)]
    n: Option<usize>,
    /// Number of replications
    #[arg(long)]
    reps: Option<usize>,
    /// Design equicorrelation in [0, 1)
    #[arg(long)]
    rho: Option<f64>,
    /// Response noise standard deviation
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Kernel mode: corrected | conventional
    #[arg(long, value_parser = kernel_mode_arg)]
    kernel_mode: Option<KernelMode>,
    /// Component centering: ptilde | phat | sample-mean
    #[arg(long, value_parser = norming_arg)]
    norming: Option<Norming>,
    /// Evaluation grid size
    #[arg(long)]
    grid: Option<usize>,
    /// Explicit bandwidth per component (repeat the flag three times)
    #[arg(long, conflicts_with = "oracle_bandwidth")]
    bandwidth: Vec<f64>,
    /// Derive bandwidths from the plug-in rule (the default source)
    #[arg(long)]
    oracle_bandwidth: bool,
    /// Convergence tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Sweep budget
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// Worker threads for the replication loop (never changes results)
    #[arg(long)]
    workers: Option<usize>,
    /// Design-oracle sample size
    #[arg(long)]
    oracle_draws: Option<usize>,
}

#[derive(Args)]
struct KernelTableArgs {
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// key = value config file supplying any setting left unset by flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Table grid size
    #[arg(long)]
    grid: Option<usize>,
    /// Kernel bandwidth
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Interval lo:hi the kernels live on
    #[arg(long, value_parser = interval_arg)]
    interval: Option<(f64, f64)>,
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigMap> {
    match path {
        Some(p) => parse_config_file(p),
        None => Ok(ConfigMap::default()),
    }
}

fn write_out(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    cfg.ensure_known(&[
        "data",
        "out",
        "grid",
        "bandwidth",
        "interval",
        "kernel-mode",
        "norming",
        "tol",
        "max-sweeps",
    ])?;

    let data: PathBuf = match (args.data, cfg.get("data")) {
        (Some(p), _) => p,
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => {
            return Err(Error::Config(
                "no dataset given (pass --data or a 'data' config key)".into(),
            ))
        }
    };
    let out = args
        .out
        .or_else(|| cfg.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let grid_size = match args.grid {
        Some(g) => g,
        None => cfg.parsed::<usize>("grid")?.unwrap_or(101),
    };
    let bandwidths: Vec<f64> = if !args.bandwidth.is_empty() {
        args.bandwidth
    } else if let Some(raw) = cfg.get("bandwidth") {
        parse_real_list(raw)?
    } else {
        return Err(Error::Config(
            "no bandwidths given (one --bandwidth per covariate, or a 'bandwidth' config key)"
                .into(),
        ));
    };
    let policy = if !args.interval.is_empty() {
        IntervalPolicy::Declared(args.interval)
    } else if let Some(raw) = cfg.get("interval") {
        IntervalPolicy::Declared(parse_interval_list(raw)?)
    } else {
        IntervalPolicy::Infer
    };
    let defaults = FitOptions::default();
    let options = FitOptions {
        kernel_mode: match args.kernel_mode {
            Some(m) => m,
            None => cfg.parsed("kernel-mode")?.unwrap_or(defaults.kernel_mode),
        },
        norming: match args.norming {
            Some(n) => n,
            None => cfg.parsed("norming")?.unwrap_or(defaults.norming),
        },
        tol: match args.tol {
            Some(t) => t,
            None => cfg.parsed("tol")?.unwrap_or(defaults.tol),
        },
        max_sweeps: match args.max_sweeps {
            Some(m) => m,
            None => cfg.parsed("max-sweeps")?.unwrap_or(defaults.max_sweeps),
        },
    };

    let dataset = load_csv(&data, &policy)?;
    if bandwidths.len() != dataset.dim() {
        return Err(Error::Config(format!(
            "{} bandwidth(s) given for {} covariate(s)",
            bandwidths.len(),
            dataset.dim()
        )));
    }
    let grids = dataset.grids(grid_size)?;
    let fitted = fit(
        &dataset.columns,
        &dataset.responses,
        &grids,
        &bandwidths,
        &options,
    )?;

    std::fs::create_dir_all(&out)?;
    write_out(
        &out.join("components.csv"),
        &render_components_csv(&fitted)?,
    )?;
    write_out(
        &out.join("fit_summary.txt"),
        &render_fit_summary(
            &fitted,
            &dataset,
            &data.display().to_string(),
            grid_size,
            &bandwidths,
            &options,
        ),
    )?;
    Ok(())
}

fn cmd_simulate(args: SimArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    cfg.ensure_known(&[
        "out",
        "seed",
        "n",
        "reps",
        "rho",
        "noise-sd",
        "kernel-mode",
        "norming",
        "grid",
        "bandwidth",
        "oracle-bandwidth",
        "tol",
        "max-sweeps",
        "workers",
        "oracle-draws",
    ])?;

    let out = args
        .out
        .or_else(|| cfg.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    // Bandwidth source: any bandwidth flag overrides the file's bandwidth
    // keys as a group; within the file, both keys at once is ambiguous.
    let bandwidths = if !args.bandwidth.is_empty() {
        BandwidthSpec::Explicit(args.bandwidth)
    } else if args.oracle_bandwidth {
        BandwidthSpec::Oracle
    } else {
        match (cfg.get("bandwidth"), cfg.parsed::<bool>("oracle-bandwidth")?) {
            (Some(_), Some(true)) => {
                return Err(Error::Config(
                    "config sets both 'bandwidth' and 'oracle-bandwidth = true'".into(),
                ))
            }
            (Some(raw), _) => BandwidthSpec::Explicit(parse_real_list(raw)?),
            (None, _) => BandwidthSpec::Oracle,
        }
    };

    let defaults = SimConfig::default();
    let sim = SimConfig {
        n: match args.n {
            Some(v) => v,
            None => cfg.parsed("n")?.unwrap_or(defaults.n),
        },
        reps: match args.reps {
            Some(v) => v,
            None => cfg.parsed("reps")?.unwrap_or(defaults.reps),
        },
        rho: match args.rho {
            Some(v) => v,
            None => cfg.parsed("rho")?.unwrap_or(defaults.rho),
        },
        noise_sd: match args.noise_sd {
            Some(v) => v,
            None => cfg.parsed("noise-sd")?.unwrap_or(defaults.noise_sd),
        },
        kernel_mode: match args.kernel_mode {
            Some(v) => v,
            None => cfg.parsed("kernel-mode")?.unwrap_or(defaults.kernel_mode),
        },
        norming: match args.norming {
            Some(v) => v,
            None => cfg.parsed("norming")?.unwrap_or(defaults.norming),
        },
        grid_size: match args.grid {
            Some(v) => v,
            None => cfg.parsed("grid")?.unwrap_or(defaults.grid_size),
        },
        base_seed: match args.seed {
            Some(v) => v,
            None => cfg.parsed("seed")?.unwrap_or(defaults.base_seed),
        },
        bandwidths,
        tol: match args.tol {
            Some(v) => v,
            None => cfg.parsed("tol")?.unwrap_or(defaults.tol),
        },
        max_sweeps: match args.max_sweeps {
            Some(v) => v,
            None => cfg.parsed("max-sweeps")?.unwrap_or(defaults.max_sweeps),
        },
        workers: match args.workers {
            Some(v) => v,
            None => cfg.parsed("workers")?.unwrap_or(defaults.workers),
        },
        oracle_draws: match args.oracle_draws {
            Some(v) => v,
            None => cfg.parsed("oracle-draws")?.unwrap_or(defaults.oracle_draws),
        },
        compare_oracle: false,
    };

    let report = sbfit::simulate::run_mc(&sim)?;
    write_mc_outputs(&out, &report)?;
    for j in 1..=report.components.len() {
        println!("wrote {}", out.join(format!("component_{j}_curves.csv")).display());
    }
    println!("wrote {}", out.join("summary.csv").display());
    println!("wrote {}", out.join("study.txt").display());
    Ok(())
}

fn cmd_kernel_table(args: KernelTableArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    cfg.ensure_known(&["out", "grid", "bandwidth", "interval"])?;
    let out = args
        .out
        .or_else(|| cfg.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let grid_size = match args.grid {
        Some(g) => g,
        None => cfg.parsed::<usize>("grid")?.unwrap_or(101),
    };
    let bandwidth = match args.bandwidth {
        Some(h) => h,
        None => cfg.parsed::<f64>("bandwidth")?.unwrap_or(0.1),
    };
    let interval = match args.interval {
        Some(iv) => iv,
        None => match cfg.get("interval") {
            Some(raw) => parse_interval(raw)?,
            None => (0.0, 1.0),
        },
    };
    std::fs::create_dir_all(&out)?;
    write_out(
        &out.join("kernel_table.csv"),
        &render_kernel_table(interval, bandwidth, grid_size)?,
    )?;
    Ok(())
}

fn exit_code(category: ErrorCategory) -> i32 {
    match category {
        ErrorCategory::Io => 1,
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numerical => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::KernelTable(args) => cmd_kernel_table(args),
    };
    if let Err(e) = result {
        eprintln!("error[{}]: {e}", e.category().name());
        std::process::exit(exit_code(e.category()));
    }
}
