//! `covcast` command-line runner.
//!
//! Exit codes: 0 success, 1 experiment failure, 2 configuration error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use covcast_core::data::{augment_dataset, gamma_for_target_pcc, mean_realized_pcc, pcc_sweep, AugmentedSeries};
use covcast_core::experiment::{self, ExperimentSpec, GridSpec, DATA_DIR_ENV};
use covcast_core::tsf::{read_tsf_file, DatasetPolicy, MissingValueAction};
use covcast_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "covcast",
    version,
    about = "LSTM forecasting experiments with synthetic leading covariates"
)]
struct Cli {
    /// Worker threads for data-parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Missing {
    RejectSeries,
    RejectFile,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a .tsf file, print a summary and optionally write augmented series.
    Ingest {
        tsf: PathBuf,
        /// Drop series shorter than this.
        #[arg(long, default_value_t = 1)]
        min_length: usize,
        /// What a `?` value does.
        #[arg(long, value_enum, default_value_t = Missing::RejectSeries)]
        missing: Missing,
        /// Number of leading covariates to synthesize.
        #[arg(long, default_value_t = 0)]
        k: usize,
        #[arg(long, conflicts_with = "target_pcc")]
        gamma: Option<f64>,
        /// Pick γ from the grid whose mean realized PCC is closest.
        #[arg(long)]
        target_pcc: Option<f64>,
        /// Leads to omit, e.g. `--skip 2`.
        #[arg(long, value_delimiter = ',')]
        skip: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Print mean realized PCC for every grid γ.
        #[arg(long)]
        sweep: bool,
        /// Long-format CSV of the (augmented) series.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment from a TOML config.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run every cell of a grid config.
    Grid {
        config: PathBuf,
        /// Cells trained concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Skip cells already present in results.csv.
        #[arg(long)]
        resume: bool,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Comparison tables and plot data from a results CSV.
    Report {
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = covcast_core::par::set_global_threads(n) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Ingest {
            tsf,
            min_length,
            missing,
            k,
            gamma,
            target_pcc,
            skip,
            seed,
            sweep,
            out,
        } => {
            let action = match missing {
                Missing::RejectSeries => MissingValueAction::RejectSeries,
                Missing::RejectFile => MissingValueAction::RejectFile,
            };
            ingest(
                &tsf,
                DatasetPolicy::new(min_length, action),
                k,
                gamma,
                target_pcc,
                &skip,
                seed,
                sweep,
                out.as_deref(),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, out } => {
            let spec = ExperimentSpec::load(&config)?;
            let outcome = experiment::run(&spec, Some(&out))?;
            let r = &outcome.row;
            println!(
                "{}  smape={:.4} mae={:.4} rmse={:.4} series={} best_epoch={}",
                r.experiment_id, r.smape, r.mae, r.rmse, r.n_series, r.best_epoch
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Grid {
            config,
            parallel,
            resume,
            out,
        } => {
            if parallel == 0 {
                return Err(Error::Argument("--parallel must be at least 1".into()));
            }
            let grid = GridSpec::load(&config)?;
            let outcome = experiment::run_grid(&grid, &out, parallel, resume)?;
            println!(
                "{} cells run, {} resumed, {} failed; results in {}",
                outcome.executed,
                outcome.skipped,
                outcome.failures.len(),
                out.join("results.csv").display()
            );
            for (label, err) in &outcome.failures {
                eprintln!("failed: {label}: {err}");
            }
            Ok(if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Report { results, out } => {
            let files = experiment::report(&results, &out)?;
            for f in &files.files {
                println!("{}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn ingest(
    path: &Path,
    policy: DatasetPolicy,
    k: usize,
    gamma: Option<f64>,
    target_pcc: Option<f64>,
    skip: &[usize],
    seed: u64,
    sweep: bool,
    out: Option<&Path>,
) -> Result<()> {
    let path = if path.exists() || path.is_absolute() {
        path.to_path_buf()
    } else {
        std::env::var_os(DATA_DIR_ENV)
            .map(|d| PathBuf::from(d).join(path))
            .unwrap_or_else(|| path.to_path_buf())
    };
    let (meta, records) = read_tsf_file(&path, &policy)?;
    let lengths: Vec<usize> = records.iter().map(|r| r.len()).collect();
    println!("dataset      {}", meta.name);
    println!("frequency    {}", meta.frequency.map_or("unknown", |f| f.as_str()));
    println!("horizon      {}", meta.horizon);
    println!("series       {} kept, {} rejected", records.len(), meta.rejected_series);
    if let (Some(min), Some(max)) = (lengths.iter().min(), lengths.iter().max()) {
        let mean = lengths.iter().sum::<usize>() as f64 / lengths.len() as f64;
        println!("length       min {min}, mean {mean:.1}, max {max}");
    }
    if k == 0 && (gamma.is_some() || target_pcc.is_some() || !skip.is_empty()) {
        return Err(Error::Config("--gamma, --target-pcc and --skip need --k > 0".into()));
    }
    let series: Vec<Vec<f64>> = records.iter().map(|r| r.values.clone()).collect();
    if sweep {
        if k == 0 {
            return Err(Error::Config("--sweep needs --k > 0".into()));
        }
        println!("gamma,mean_pcc");
        for c in pcc_sweep(&series, k, seed)? {
            println!("{},{:.6}", c.gamma, c.mean_pcc);
        }
    }
    let augmented: Vec<AugmentedSeries> = if k == 0 {
        augment_dataset(&series, 0, 0.0, seed, &[])?
    } else {
        let g = match (gamma, target_pcc) {
            (Some(g), _) => g,
            (None, Some(p)) => gamma_for_target_pcc(&series, k, p, seed)?.gamma,
            (None, None) => 0.0,
        };
        let aug = augment_dataset(&series, k, g, seed, skip)?;
        println!("gamma        {g}");
        if let Some(p) = mean_realized_pcc(&aug) {
            println!("mean pcc     {p:.6}");
        }
        aug
    };
    if let Some(out) = out {
        let k_active = augmented.first().map_or(0, |a| a.k_active());
        let mut text = String::from("series_id,t,y");
        for c in augmented.first().map(|a| a.covariates.as_slice()).unwrap_or_default() {
            let _ = write!(text, ",lead_{}", c.lead);
        }
        text.push('\n');
        for (rec, aug) in records.iter().zip(&augmented) {
            for t in 0..aug.len() {
                let _ = write!(text, "{},{},{}", rec.series_id, t, aug.y[t]);
                for c in 1..=k_active {
                    match aug.channel_value(c, t) {
                        Some(v) => {
                            let _ = write!(text, ",{v}");
                        }
                        None => text.push(','),
                    }
                }
                text.push('\n');
            }
        }
        fs::write(out, text).map_err(|e| Error::Io {
            path: out.to_path_buf(),
            source: e,
        })?;
        println!("wrote        {}", out.display());
    }
    Ok(())
}
