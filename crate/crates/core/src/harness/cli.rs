//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error,
//! 3 numerical failure (MCMC initialisation, divergent KL integral).

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use super::{run_experiment, write_outputs, ExperimentConfig};
use crate::dist::io::{read_dataset, read_mixture_table, write_dataset, write_mixture_table};
use crate::dist::ParetoMixture;
use crate::error::{Error, Result};
use crate::estimators::{carpentier_kim, default_schedule, hill};
use crate::mcmc::{posterior_tail_summary, run_chain, write_chain, McmcConfig};
use crate::parallel::with_threads;
use crate::parmix::{parmix_prior_sample, ParmixHyper, ParmixHyperConfig};

#[derive(Debug, Parser)]
#[command(name = "tailmix", version, about = "Tail-index estimation and Pareto-mixture posterior experiments")]
struct Cli {
    /// Seed for commands that draw random numbers.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel experiment cells.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Ck,
    Hill,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the sequences ᾱ, τ, w̲, s and B at sample size n as JSON.
    Schedule {
        #[arg(long)]
        n: u64,
    },
    /// Estimate the tail index of a dataset.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "ck")]
        method: Method,
        /// Threshold exponent for the ck method.
        #[arg(long, conflicts_with = "n_auto")]
        s: Option<f64>,
        /// Use the schedule threshold s at the sample size of the input.
        #[arg(long)]
        n_auto: bool,
        /// Order statistic count for the hill method; defaults to ⌊√n⌋.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Sample from a Pareto mixture.
    Sample {
        /// Mixture table (`weight exponent` rows, leading component first).
        #[arg(long, conflicts_with = "alpha")]
        mixture: Option<PathBuf>,
        /// Pure Pareto exponent.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        n: usize,
        /// Dataset file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Draw one mixture from the Pareto-mixture prior.
    PriorDraw {
        /// Sample size fixing the schedule; taken from --config when given.
        #[arg(long)]
        n: Option<u64>,
        /// Truncation level for NRM priors on H.
        #[arg(long, default_value_t = 50)]
        atoms: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the posterior sampler on a dataset.
    Mcmc {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n_iter: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        /// File stem for the chain files in --out.
        #[arg(long, default_value = "posterior")]
        stem: String,
    },
    /// Run an experiment described by --config.
    Experiment,
}

/// Parses `args` (including the program name) and runs the command.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match with_threads(cli.threads, || run(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric_failure() {
        3
    } else if e.is_config_error() {
        2
    } else {
        1
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, v)?;
    writeln!(lock)?;
    Ok(())
}

fn read_data(path: &Path) -> Result<Vec<f64>> {
    read_dataset(BufReader::new(File::open(path)?))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Schedule { n } => {
            let s = default_schedule(*n)?;
            print_json(&json!({
                "n": s.n,
                "alpha_bar": s.alpha_bar,
                "tau": s.tau,
                "w_low": s.w_low,
                "s": s.s,
                "envelope_b": s.envelope_b,
                "ordering": s.ordering(),
            }))
        }
        Command::Estimate { input, method, s, n_auto, k } => {
            let data = read_data(input)?;
            let n = data.len();
            match method {
                Method::Ck => {
                    let s = match (s, n_auto) {
                        (Some(s), _) => *s,
                        (None, true) => default_schedule(n as u64)?.s,
                        (None, false) => return Err(Error::Config("ck needs --s or --n-auto".into())),
                    };
                    let est = carpentier_kim(&data, s)?;
                    print_json(&json!({
                        "method": "ck", "n": n, "s": s,
                        "estimate": est.value(), "defined": est.is_defined(),
                    }))
                }
                Method::Hill => {
                    let k = k.unwrap_or((n as f64).sqrt() as usize);
                    print_json(&json!({ "method": "hill", "n": n, "k": k, "estimate": hill(&data, k)? }))
                }
            }
        }
        Command::Sample { mixture, alpha, n, output } => {
            let mix = match (mixture, alpha) {
                (Some(p), _) => read_mixture_table(BufReader::new(File::open(p)?))?,
                (None, Some(a)) => ParetoMixture::pure(*a)?,
                (None, None) => return Err(Error::Config("sample needs --mixture or --alpha".into())),
            };
            let data = mix.sample(*n, cli.seed);
            match output {
                Some(p) => write_dataset(BufWriter::new(File::create(p)?), &data),
                None => write_dataset(io::stdout().lock(), &data),
            }
        }
        Command::PriorDraw { n, atoms, output } => {
            let hyper = match (&cli.config, n) {
                (Some(path), _) => load_json::<ParmixHyperConfig>(path)?.build()?,
                (None, Some(n)) => ParmixHyper::default_for(*n)?,
                (None, None) => return Err(Error::Config("prior-draw needs --n or --config".into())),
            };
            let mix = parmix_prior_sample(&hyper, *atoms, cli.seed)?;
            match output {
                Some(p) => write_mixture_table(BufWriter::new(File::create(p)?), &mix),
                None => write_mixture_table(io::stdout().lock(), &mix),
            }
        }
        Command::Mcmc { input, n_iter, burn_in, k, stem } => {
            let data = read_data(input)?;
            let mut cfg = match &cli.config {
                Some(path) => load_json::<McmcConfig>(path)?,
                None => McmcConfig::default(),
            };
            cfg.seed = cli.seed;
            cfg.n_iter = n_iter.unwrap_or(cfg.n_iter);
            cfg.burn_in = burn_in.unwrap_or(cfg.burn_in);
            cfg.k = k.unwrap_or(cfg.k);
            let n = (data.len() as u64).max(3);
            let hyper = ParmixHyper::default_for(n)?;
            let chain = run_chain(&data, &hyper, &cfg)?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&out)?;
            let (tsv, sidecar) = write_chain(&chain, &out, stem)?;
            let summary = posterior_tail_summary(&chain, &[0.05, 0.5, 0.95], &[])?;
            print_json(&json!({
                "chain": tsv, "sidecar": sidecar, "summary": summary, "acceptance": chain.acceptance,
            }))
        }
        Command::Experiment => {
            let path = cli.config.as_ref().ok_or_else(|| Error::Config("experiment needs --config".into()))?;
            let cfg = ExperimentConfig::load(path)?;
            let dir = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
            let out = run_experiment(&cfg)?;
            let written = write_outputs(&out, &dir)?;
            print_json(&json!({ "experiment_id": out.experiment_id, "rows": out.rows.len(), "files": written }))
        }
    }
}
