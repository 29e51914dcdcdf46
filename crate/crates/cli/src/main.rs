mod kappa;

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use trade_bench::{
    certify_run, emit_results, read_run, run_batch, write_runs, BatchConfig, Format, Mode, ScenarioConfig,
};
use trade_core::theory::ExponentForm;
use trade_core::{Algorithm, BenefitKind};
use trade_session::{Manager, Store};

#[derive(Parser)]
#[command(name = "trade", version, about = "Comparison-based bilateral trading: benchmarks, bounds and live sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Continuous,
    Discrete,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    KMinusN,
    KMinusOne,
}

#[derive(Subcommand)]
enum Command {
    /// Run every selected algorithm on the same random scenarios and write
    /// averaged cumulative benefit curves.
    Bench {
        /// Comma-separated; defaults to all algorithms.
        #[arg(long, value_delimiter = ',')]
        algo: Vec<Algorithm>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        rho: f64,
        #[arg(long, default_value_t = 100)]
        scenarios: usize,
        #[arg(long, default_value_t = 200)]
        budget: usize,
        #[arg(long, value_enum, default_value = "continuous")]
        mode: ModeArg,
        #[arg(long, default_value_t = 10)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        gca_update_interval: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        format: FormatArg,
        /// Also write one JSON file per run under `<out>/runs/` for `trade certify`.
        #[arg(long)]
        save_runs: bool,
    },
    /// Print the cone-bound constants as CSV.
    Kappa {
        /// A count, a list `2,3,5` or an inclusive range `2..6`.
        #[arg(long, default_value = "3")]
        n: String,
        /// Same syntax; defaults to `n..10n`.
        #[arg(long)]
        k: Option<String>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Right-hand-side coefficient; defaults to `2n`.
        #[arg(long)]
        coef: Option<f64>,
        #[arg(long, value_enum, default_value = "k-minus-n")]
        exponent: FormArg,
        /// Offer norm; defaults to `5 sqrt(n)`.
        #[arg(long)]
        d: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        lipschitz: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Check saved runs for a feasible trade improving both agents by more than eps.
    Certify {
        /// Run files written by `trade bench --save-runs`.
        #[arg(long, required = true, num_args = 1..)]
        transcript: Vec<PathBuf>,
        /// `auto` for the norm-case bound, or a number.
        #[arg(long, default_value = "auto")]
        eps: String,
    },
    /// Serve the live session API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Directory for session logs; sessions found there are recovered.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn bench(cfg: BatchConfig, out: PathBuf, format: FormatArg, save_runs: bool) -> Result<()> {
    let started = std::time::Instant::now();
    let result = run_batch(&cfg)?;
    tracing::info!(runs = result.runs.len(), elapsed = ?started.elapsed(), "batch finished");
    let formats: &[Format] = match format {
        FormatArg::Csv => &[Format::Csv],
        FormatArg::Json => &[Format::Json],
        FormatArg::Both => &[Format::Csv, Format::Json],
    };
    for &f in formats {
        let path = emit_results(&result, &out, f)?;
        println!("wrote {}", path.display());
    }
    if save_runs {
        let paths = write_runs(&result, &out)?;
        println!("wrote {} run files under {}", paths.len(), out.join("runs").display());
    }
    println!("{:<16} {:>14} {:>14} {:>14}", "algorithm", "societal", "offering", "responding");
    for &a in &cfg.algorithms {
        let at_end = |k| result.mean_at(a, k, cfg.budget).unwrap_or(f64::NAN);
        println!(
            "{:<16} {:>14.3} {:>14.3} {:>14.3}",
            a.as_str(),
            at_end(BenefitKind::Societal),
            at_end(BenefitKind::Offering),
            at_end(BenefitKind::Responding)
        );
    }
    Ok(())
}

fn certify(paths: &[PathBuf], eps: &str) -> Result<bool> {
    let eps = match eps {
        "auto" => None,
        v => Some(v.parse::<f64>().with_context(|| format!("--eps must be `auto` or a number, got {v:?}"))?),
    };
    let mut all = true;
    for p in paths {
        let run = read_run(p)?;
        let report = certify_run(&run, eps).with_context(|| format!("certifying {}", p.display()))?;
        all &= report.pareto.certified;
        println!("{}", serde_json::to_string(&report)?);
    }
    Ok(all)
}

async fn serve(addr: &str, data_dir: Option<PathBuf>) -> Result<()> {
    let manager = match data_dir {
        Some(dir) => {
            let (m, failures) = Manager::recover(Store::open(&dir)?)?;
            for f in &failures {
                tracing::error!(error = %f, "session log not recovered");
            }
            tracing::info!(sessions = m.len(), dir = %dir.display(), "session store opened");
            m
        }
        None => Manager::new(None),
    };
    let app = trade_session::router(Arc::new(manager));
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, app).await?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Bench { algo, n, rho, scenarios, budget, mode, seed, gca_update_interval, out, format, save_runs } => {
            let mode = match mode {
                ModeArg::Continuous => Mode::Continuous,
                ModeArg::Discrete => Mode::Discrete,
            };
            let algorithms = if algo.is_empty() { Algorithm::ALL.to_vec() } else { algo };
            let mut cfg = BatchConfig::new(ScenarioConfig::new(n, rho, seed, mode), scenarios, budget, algorithms);
            if gca_update_interval == 0 {
                bail!("--gca-update-interval must be positive");
            }
            cfg.options.gca.update_interval = gca_update_interval;
            bench(cfg, out, format, save_runs)
        }
        Command::Kappa { n, k, tol, coef, exponent, d, beta, lipschitz, delta } => {
            let spec = kappa::TableSpec {
                ns: kappa::parse_list(&n)?,
                ks: k.as_deref().map(kappa::parse_list).transpose()?.unwrap_or_default(),
                tol,
                coef,
                form: match exponent {
                    FormArg::KMinusN => ExponentForm::KMinusN,
                    FormArg::KMinusOne => ExponentForm::KMinusOne,
                },
                d,
                beta,
                lipschitz,
                delta,
            };
            kappa::write_csv(&kappa::rows(&spec)?, std::io::stdout().lock())
        }
        Command::Certify { transcript, eps } => {
            if !certify(&transcript, &eps)? {
                std::process::exit(1);
            }
            Ok(())
        }
        Command::Serve { addr, data_dir } => {
            tokio::runtime::Runtime::new()?.block_on(serve(&addr, data_dir))
        }
    }
}
