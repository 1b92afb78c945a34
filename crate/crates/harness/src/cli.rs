//! Command-line entry points.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ldprlhf::instances::offline_dataset_gen;
use ldprlhf::privacy::PrivacyParams;
use ldprlhf::rng::Stream;
use ldprlhf::sample::{save_dataset, DatasetHeader};

use crate::config::{parse_seed_range, Mode, Seeds, SweepConfig};
use crate::error::Result;
use crate::invariants::run_invariant_suite;
use crate::output::{describe, emit_outputs, Footer};
use crate::sweep::{run_offline_sweep, run_online_sweep, with_threads};

#[derive(Debug, Parser)]
#[command(
    name = "ldprlhf",
    version,
    about = "Private preference-learning simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured instance (and a sample dataset) as files.
    GenInstance(CommonArgs),
    /// Offline pessimistic algorithm over an (n, epsilon, seed) grid.
    OfflineSweep(CommonArgs),
    /// Online optimistic algorithm over a (T, epsilon, seed) grid.
    OnlineSweep(CommonArgs),
    /// Run every invariant check and report pass/fail.
    Invariants(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Seed range `a..b` (half-open); overrides the config.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Worker threads; overrides the config.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Command {
    fn parts(&self) -> (Mode, &CommonArgs) {
        match self {
            Command::GenInstance(a) => (Mode::GenInstance, a),
            Command::OfflineSweep(a) => (Mode::Offline, a),
            Command::OnlineSweep(a) => (Mode::Online, a),
            Command::Invariants(a) => (Mode::Invariants, a),
        }
    }
}

/// Loads the config named on the command line and applies the overrides.
pub fn resolve_config(mode: Mode, args: &CommonArgs) -> Result<SweepConfig> {
    let mut cfg = match &args.config {
        Some(path) => SweepConfig::load(path)?,
        None => SweepConfig::default(),
    };
    cfg.mode = Some(mode);
    if let Some(text) = &args.seeds {
        parse_seed_range(text)?;
        cfg.sweep.seeds = Seeds::Range(text.clone());
    }
    if let Some(k) = args.threads {
        cfg.sweep.threads = Some(k);
    }
    cfg.output_dir = args.out.clone();
    cfg.validate()?;
    Ok(cfg)
}

fn footer(cfg: &SweepConfig) -> Footer {
    Footer {
        config_hash: cfg.hash(),
        seeds: cfg.sweep.seeds.describe(),
    }
}

/// Executes a resolved config. Returns whether every check passed (always
/// true for non-invariant modes).
pub fn execute(cfg: &SweepConfig) -> Result<bool> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    match cfg.mode()? {
        Mode::GenInstance => {
            let eps = cfg.privacy.epsilons[0];
            let n = cfg.offline.n_values.first().copied();
            let inst = cfg.instance.build(eps, n.unwrap_or(1))?;
            let path = dir.join("instance.json");
            inst.save(&path)?;
            println!("wrote {}", path.display());
            if let Some(n) = n {
                let seed = cfg.seeds()?[0];
                let pp = PrivacyParams::new(eps)?;
                let data = offline_dataset_gen(&inst, n, &pp, &Stream::new(seed));
                let path = dir.join("dataset.csv");
                save_dataset(
                    &path,
                    &DatasetHeader {
                        n,
                        epsilon: eps,
                        seed,
                    },
                    &data,
                )?;
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Mode::Offline | Mode::Online => {
            let outcome = if cfg.mode()? == Mode::Offline {
                run_offline_sweep(cfg)?
            } else {
                run_online_sweep(cfg)?
            };
            let files = emit_outputs(&outcome, dir, &footer(cfg))?;
            print!("{}", describe(&outcome));
            println!("wrote {} files to {}", files.len(), dir.display());
            Ok(true)
        }
        Mode::Invariants => {
            let report = with_threads(cfg.sweep.threads, || run_invariant_suite(cfg))?;
            for c in &report.checks {
                println!(
                    "[{}] {}: measured {} ({})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.tolerance
                );
            }
            std::fs::write(dir.join("invariants.csv"), report.to_csv(&footer(cfg)))?;
            Ok(report.passed())
        }
    }
}

/// Parses arguments, runs, and returns the process exit code:
/// 0 success, 1 check failure or runtime error, 2 configuration error.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (mode, args) = cli.command.parts();
    let outcome = resolve_config(mode, args).and_then(|cfg| execute(&cfg));
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
