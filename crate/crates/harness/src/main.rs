use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use itreg_harness::config::{example51, example52};
use itreg_harness::experiment::write_study;
use itreg_harness::{checks, run_experiment, run_study, ExperimentConfig, HarnessError};

/// Nonstationary iterated Tikhonov regularization experiments.
#[derive(Parser)]
#[command(name = "itreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Override the noise seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config's `output.dir`).
    #[arg(long, global = true, env = "ITREG_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config file.
    #[arg(value_name = "CONFIG", required_unless_present = "config")]
    path: Option<PathBuf>,
    #[arg(long, value_name = "CONFIG", conflicts_with = "path")]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn path(&self) -> &Path {
        self.path
            .as_deref()
            .or(self.config.as_deref())
            .expect("clap enforces one of the two")
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment.
    Run {
        #[command(flatten)]
        cfg: ConfigArg,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the noise levels listed under `[study]`.
    Study {
        #[command(flatten)]
        cfg: ConfigArg,
        #[command(flatten)]
        common: Common,
    },
    /// Run the invariant and oracle checks on small instances.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Linear integral equation with quadratic and sparsity penalties.
    Example51 {
        #[command(flatten)]
        common: Common,
    },
    /// Elliptic parameter identification with quadratic and TV penalties.
    Example52 {
        #[command(flatten)]
        common: Common,
    },
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn apply_overrides(cfg: &mut ExperimentConfig, common: &Common) {
    if let Some(seed) = common.seed {
        cfg.noise.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        cfg.output.dir = dir.display().to_string();
    }
}

fn load(cfg: &ConfigArg, common: &Common) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
    let path = cfg.path();
    let mut config = ExperimentConfig::load(path)?;
    apply_overrides(&mut config, common);
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, base))
}

fn run_one(config: &ExperimentConfig, base: &Path, quiet: bool) -> Result<(), HarnessError> {
    let outcome = run_experiment(config, base)?;
    let files = outcome.write(Path::new(&config.output.dir))?;
    if !quiet {
        let s = outcome.summary()?;
        println!(
            "{}: n_delta={} terminated_by={} residual={:.4e} (target {:.4e}) L2 error={:.4e}",
            config.name,
            s.n_delta,
            s.terminated_by,
            s.final_residual,
            s.target_residual,
            s.l2_error
        );
        for f in files {
            println!("  wrote {}", f.display());
        }
    }
    Ok(())
}

fn exit_for(err: &HarnessError) -> ExitCode {
    match err {
        HarnessError::ConfigFile { .. } | HarnessError::Config(_) | HarnessError::Toml(_) => {
            ExitCode::from(2)
        }
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { cfg, common } => {
            init_logging(common.quiet);
            load(cfg, common).and_then(|(config, base)| run_one(&config, &base, common.quiet))
        }
        Command::Study { cfg, common } => {
            init_logging(common.quiet);
            load(cfg, common).and_then(|(config, base)| {
                let rows = run_study(&config, &base)?;
                let path = write_study(&config, &rows, Path::new(&config.output.dir))?;
                if !common.quiet {
                    print!("{}", std::fs::read_to_string(&path)?);
                    println!("wrote {}", path.display());
                }
                Ok(())
            })
        }
        Command::Check { common } => {
            init_logging(true);
            let results = checks::run_checks();
            let mut ok = true;
            for c in &results {
                ok &= c.passed;
                if !common.quiet || !c.passed {
                    println!(
                        "[{}] {}: {}",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.name,
                        c.detail
                    );
                }
            }
            if ok {
                Ok(())
            } else {
                return ExitCode::from(1);
            }
        }
        Command::Example51 { common } | Command::Example52 { common } => {
            init_logging(common.quiet);
            let configs = if matches!(cli.command, Command::Example51 { .. }) {
                vec![example51("quadratic"), example51("l2_l1")]
            } else {
                vec![
                    example52("quadratic"),
                    example52("l2_tv_mu0.01"),
                    example52("l2_tv_mu1"),
                ]
            };
            configs.into_iter().try_for_each(|mut config| {
                apply_overrides(&mut config, common);
                run_one(&config, Path::new("."), common.quiet)
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
