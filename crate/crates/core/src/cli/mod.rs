//! `dt6d` command line: configuration, subcommands and exit codes.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error (unknown command
//! or flag), 3 configuration error.

pub mod commands;
pub mod config;
pub mod selftest;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{create_output, Error, Result};

pub use config::{PipelineConfig, TEMPLATE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "DT6D_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dt6d", version, about = "Render-feedback 6-DOF object tracking")]
struct Cli {
    /// Worker threads (overrides DT6D_THREADS and the config).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArg {
    /// Pipeline configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a training dataset and its channel statistics.
    GenData(ConfigArg),
    /// Train a model on the dataset.
    Train(ConfigArg),
    /// Track a sequence and write the estimated trajectory.
    Track(ConfigArg),
    /// Benchmark protocols.
    Bench {
        #[command(subcommand)]
        which: BenchKind,
    },
    /// Write the network inputs of one generated sample as PNGs.
    RenderPreview {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
    /// Run the gradient-check and renderer/codec oracle suites.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random configurations per gradient check.
        #[arg(long, default_value_t = 3)]
        configs: usize,
    },
    /// Print a commented configuration template.
    Template,
}

#[derive(Debug, Subcommand)]
enum BenchKind {
    /// Turntable occlusion sweep.
    Occlusion(ConfigArg),
    /// Initialization perturbation grid.
    Init(ConfigArg),
    /// One sequence with the configured reset schedule.
    Sequence(ConfigArg),
}

/// Typed error to exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Worker count: flag, then `DT6D_THREADS`, then the config, then all cores.
pub fn worker_count(flag: Option<usize>, env: Option<&str>, config: usize) -> Result<usize> {
    if let Some(n) = flag.filter(|&n| n > 0) {
        return Ok(n);
    }
    if let Some(v) = env.map(str::trim).filter(|v| !v.is_empty()) {
        return match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::config(THREADS_ENV, format!("`{v}` is not a positive integer"))),
        };
    }
    if config > 0 {
        return Ok(config);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Checks the inputs and outputs of `name` before anything is written.
fn preflight(name: &str, cfg: &PipelineConfig) -> Result<()> {
    let must_be_new = |p: &Path| if p.exists() { Err(Error::OutputExists(p.to_path_buf())) } else { Ok(()) };
    match name {
        "gen-data" => must_be_new(&cfg.dataset_path()),
        "train" => {
            PipelineConfig::require_file(&cfg.dataset_path(), "paths.dataset")?;
            must_be_new(&cfg.model_path())
        }
        "track" | "bench-occlusion" | "bench-init" | "bench-sequence" => {
            PipelineConfig::require_file(&cfg.model_path(), "paths.model")?;
            match &cfg.track.sequence_dir {
                Some(d) if name != "bench-occlusion" => {
                    PipelineConfig::require_file(&d.join("poses.csv"), "track.sequence_dir")
                }
                _ => Ok(()),
            }
        }
        _ => Ok(()),
    }
}

fn log_config(name: &str, cfg: &PipelineConfig, threads: usize) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut f = create_output(&cfg.output_dir.join(format!("{name}.config.toml")))?;
    writeln!(f, "# resolved configuration of `dt6d {}` ({threads} worker threads)", name.replace('-', " "))?;
    f.write_all(cfg.to_toml()?.as_bytes())?;
    Ok(())
}

fn run_pipeline(
    name: &str,
    config: &Path,
    threads: Option<usize>,
    body: impl FnOnce(&PipelineConfig) -> Result<()> + Send,
) -> Result<()> {
    let cfg = PipelineConfig::load(config)?.resolve()?;
    let env = std::env::var(THREADS_ENV).ok();
    let n = worker_count(threads, env.as_deref(), cfg.threads)?;
    preflight(name, &cfg)?;
    log_config(name, &cfg, n)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {n} worker threads: {e}")))?;
    pool.install(|| body(&cfg))
}

fn selftest_cmd(seed: u64, configs: usize) -> Result<bool> {
    let lines = selftest::run(seed, configs.max(1))?;
    let mut ok = true;
    for l in &lines {
        println!("{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
        ok &= l.pass;
    }
    Ok(ok)
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let t = cli.threads;
    let result = match cli.command {
        Command::GenData(a) => run_pipeline("gen-data", &a.config, t, commands::gen_data),
        Command::Train(a) => run_pipeline("train", &a.config, t, commands::train_model),
        Command::Track(a) => run_pipeline("track", &a.config, t, commands::track),
        Command::Bench { which } => match which {
            BenchKind::Occlusion(a) => run_pipeline("bench-occlusion", &a.config, t, commands::bench_occlusion),
            BenchKind::Init(a) => run_pipeline("bench-init", &a.config, t, commands::bench_init),
            BenchKind::Sequence(a) => run_pipeline("bench-sequence", &a.config, t, commands::bench_sequence),
        },
        Command::RenderPreview { cfg, index } => {
            run_pipeline("render-preview", &cfg.config, t, |c| commands::render_preview(c, index))
        }
        Command::Selftest { seed, configs } => match selftest_cmd(seed, configs) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: selftest failed");
                return EXIT_RUNTIME;
            }
            Err(e) => Err(e),
        },
        Command::Template => {
            print!("{TEMPLATE}");
            Ok(())
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worker_count_precedence() {
        assert_eq!(worker_count(Some(3), Some("5"), 7).unwrap(), 3);
        assert_eq!(worker_count(None, Some("5"), 7).unwrap(), 5);
        assert_eq!(worker_count(None, None, 7).unwrap(), 7);
        assert!(worker_count(None, None, 0).unwrap() >= 1);
        assert!(matches!(worker_count(None, Some("x"), 0), Err(Error::Config { .. })));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["dt6d", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["dt6d", "bench", "nothing", "-c", "x.toml"]), EXIT_USAGE);
        assert_eq!(run(["dt6d", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_config_file_exits_3() {
        assert_eq!(run(["dt6d", "gen-data", "-c", "/nonexistent/dt6d.toml"]), EXIT_CONFIG);
    }
}
