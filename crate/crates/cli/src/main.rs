use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use amerasian::config::{ExperimentConfig, CONFIG_REFERENCE};
use amerasian::experiment::{dump_paths, greek_surface, price_grid, write_greek_csv, write_price_csv};
use amerasian::selftest::run_selftest;
use amerasian::sensitivities::GreekMethod;
use amerasian::Error;

const OK: u8 = 0;
const NUMERICAL: u8 = 1;
const USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "amerasian",
    version,
    about = "Least-squares Monte Carlo pricing of American-style Asian and look-back options and callable certificates",
    after_help = CONFIG_REFERENCE
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price the (product x basis x window) grid of a configuration.
    Price {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of independent runs.
        #[arg(long)]
        runs: Option<usize>,
        /// CSV destination; defaults to `output.prices`, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Delta and Gamma over the moneyness grid.
    Greeks {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// CSV destination; defaults to `output.greeks`, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fast oracle checks.
    Selftest {
        /// Validate this configuration and use its model parameters.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Chebyshev,
    Regression,
    Tree,
}

impl From<Method> for GreekMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Chebyshev => GreekMethod::Chebyshev,
            Method::Regression => GreekMethod::Regression,
            Method::Tree => GreekMethod::Tree,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        NUMERICAL
    } else {
        USAGE
    }
}

/// Renders into memory first so a failed run never leaves a partial file.
fn emit(bytes: &[u8], dest: Option<&Path>) -> Result<(), Error> {
    match dest {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            w.write_all(bytes)?;
            w.flush()?;
        }
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn load(path: &Path) -> Result<ExperimentConfig, u8> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        USAGE
    })
}

fn price(config: &Path, seed: Option<u64>, runs: Option<usize>, out: Option<PathBuf>) -> Result<u8, u8> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    if let Some(n) = runs {
        cfg.run.n_runs = n;
    }
    if cfg.grid_is_empty() {
        eprintln!("error: the price grid is empty");
        return Err(USAGE);
    }
    let fail = |e: Error| {
        eprintln!("error: {e}");
        exit_code(&e)
    };
    if let Some(p) = &cfg.output.paths {
        dump_paths(&cfg, p).map_err(fail)?;
    }
    let rows = price_grid(&cfg).map_err(fail)?;
    let mut bytes = Vec::new();
    write_price_csv(&rows, &mut bytes).map_err(fail)?;
    emit(&bytes, out.as_deref().or(cfg.output.prices.as_deref())).map_err(fail)?;

    let failed = rows.iter().filter(|r| r.price.is_none()).count();
    eprintln!("{} cells priced, {failed} failed", rows.len() - failed);
    for r in rows.iter().filter(|r| r.price.is_some()) {
        eprintln!(
            "  {:<18} {:<14} rho{} M={:<3} {:>10.6} +- {:.6}",
            r.product,
            r.basis,
            r.rho,
            r.window,
            r.price.unwrap_or_default(),
            r.std_error.unwrap_or_default()
        );
    }
    Ok(if failed > 0 { NUMERICAL } else { OK })
}

fn greeks(config: &Path, method: Method, out: Option<PathBuf>) -> Result<u8, u8> {
    let cfg = load(config)?;
    let fail = |e: Error| {
        eprintln!("error: {e}");
        exit_code(&e)
    };
    let points = greek_surface(&cfg, method.into()).map_err(fail)?;
    if points.is_empty() {
        eprintln!("error: the moneyness grid is empty");
        return Err(USAGE);
    }
    let mut bytes = Vec::new();
    write_greek_csv(&points, &mut bytes).map_err(fail)?;
    emit(&bytes, out.as_deref().or(cfg.output.greeks.as_deref())).map_err(fail)?;
    let failed = points.iter().filter(|p| p.delta.is_none() || p.gamma.is_none()).count();
    eprintln!("{} points, {failed} failed", points.len());
    Ok(if failed > 0 { NUMERICAL } else { OK })
}

fn selftest(config: Option<PathBuf>) -> u8 {
    let results = run_selftest(config.as_deref());
    for r in &results {
        println!(
            "{} {:<30} {:>7.2}s  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        );
    }
    if results.iter().all(|r| r.passed) {
        OK
    } else if results.iter().any(|r| r.name == "config" && !r.passed) {
        USAGE
    } else {
        NUMERICAL
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { OK };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Price {
            config,
            seed,
            runs,
            out,
        } => price(&config, seed, runs, out).unwrap_or_else(|c| c),
        Command::Greeks { config, method, out } => greeks(&config, method, out).unwrap_or_else(|c| c),
        Command::Selftest { config } => selftest(config),
    };
    ExitCode::from(code)
}
