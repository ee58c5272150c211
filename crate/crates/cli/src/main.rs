use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use liftspec_cli::{
    cmd_limit, cmd_spectrum, cmd_tangle, cmd_tensor, run_experiment, scan_options, CliError, ExperimentConfig, Method,
    SpectrumOptions, WsSource, THREADS_ENV,
};

#[derive(Parser)]
#[command(name = "liftspec", version, about = "Spectra of random lifts and of their free-group limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
#[group(required = true, multiple = false)]
struct Source {
    /// Shipped weight system: `figure1` or `regular:<d>`.
    #[arg(long)]
    preset: Option<String>,
    /// Weight-system JSON file.
    #[arg(long)]
    ws: Option<PathBuf>,
    /// Weight-system JSON text.
    #[arg(long)]
    ws_inline: Option<String>,
}

impl Source {
    fn resolve(&self) -> WsSource {
        match (&self.preset, &self.ws, &self.ws_inline) {
            (Some(p), _, _) => WsSource::Preset(p.clone()),
            (_, Some(f), _) => WsSource::File(f.clone()),
            (_, _, Some(t)) => WsSource::Inline(t.clone()),
            _ => unreachable!("clap requires one source"),
        }
    }
}

#[derive(Args, Clone)]
struct Common {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum of the limiting operator: limit.json and diag.csv.
    Limit {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-2)]
        grid_step: f64,
        #[arg(long, default_value_t = 1e-4)]
        refine_tol: f64,
    },
    /// Eigenvalues of a sampled lift on H_0: spectrum.csv.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        /// Eigenvalues per end on the Lanczos path.
        #[arg(long, default_value_t = 6)]
        k: usize,
        #[arg(long, default_value_t = 2500)]
        dense_max: usize,
    },
    /// Extreme eigenvalues of the tensor lift on H_0⁽²⁾: spectrum.csv.
    Tensor {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
    },
    /// Tangle status and short-cycle counts of a sampled colored graph: tangle.json.
    Tangle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        /// Tangle radius; defaults to ⌊ln n / (4 ln(d-1))⌋.
        #[arg(long)]
        ell: Option<usize>,
    },
    /// Limit set against sampled lifts: report.json, limit.json, diag.csv.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long = "n", required = true)]
        n: Vec<usize>,
        /// Samples per size.
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long)]
        ell: Option<usize>,
        #[arg(long, default_value_t = 1e-2)]
        grid_step: f64,
        #[arg(long, default_value_t = 1e-4)]
        refine_tol: f64,
        #[arg(long, default_value_t = 2500)]
        dense_max: usize,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Validation(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Validation(e.to_string()))
}

fn fallback_error(count: usize) -> CliError {
    CliError::NonConvergence(format!(
        "{count} grid points were classified by the density fallback (see diag.csv)"
    ))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Limit {
            common,
            grid_step,
            refine_tol,
        } => {
            let ws = common.source.resolve().load()?;
            let scan = cmd_limit(&ws, &scan_options(grid_step, refine_tol)?, &common.out)?;
            println!("{}", scan.set.to_json());
            if scan.fallbacks > 0 {
                return Err(fallback_error(scan.fallbacks));
            }
        }
        Command::Spectrum {
            common,
            n,
            method,
            k,
            dense_max,
        } => {
            let ws = common.source.resolve().load()?;
            let opts = SpectrumOptions {
                method,
                k,
                dense_max,
                ..SpectrumOptions::default()
            };
            let spec = cmd_spectrum(&ws, n, common.seed, &opts, &common.out)?;
            println!(
                "{} eigenvalues on H_0 (dimension {}), range [{:.6}, {:.6}]",
                spec.rows.len(),
                spec.dim,
                spec.min(),
                spec.max()
            );
        }
        Command::Tensor { common, n, k } => {
            let ws = common.source.resolve().load()?;
            let spec = cmd_tensor(&ws, n, common.seed, k, 1e-8, &common.out)?;
            println!("tensor lift on H_0: range [{:.6}, {:.6}]", spec.min(), spec.max());
        }
        Command::Tangle { common, n, ell } => {
            let ws = common.source.resolve().load()?;
            let rep = cmd_tangle(&ws, n, common.seed, ell, &common.out)?;
            println!("{}", serde_json::to_string_pretty(&rep).expect("tangle report serializes"));
        }
        Command::Experiment {
            common,
            n,
            samples,
            ell,
            grid_step,
            refine_tol,
            dense_max,
        } => {
            let mut cfg = ExperimentConfig::new(common.source.resolve(), n, common.seed, samples, common.out);
            cfg.tangle_ell = ell;
            cfg.grid_step = grid_step;
            cfg.refine_tol = refine_tol;
            cfg.dense_max = dense_max;
            let report = run_experiment(&cfg)?;
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if report.limit_fallbacks > 0 {
                return Err(fallback_error(report.limit_fallbacks));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("liftspec: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
