use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hfm::rg::Direction;
use hfm_cli::commands::{self, IterateArgs, Start};
use hfm_cli::error::{CliError, Result, EXIT_OK, EXIT_USAGE};
use hfm_cli::{pipeline, ExperimentConfig};
use hfm_data::glyphs::Family;

#[derive(Debug, Parser)]
#[command(name = "hfm", version, about = "Hierarchical feature model workbench")]
struct Cli {
    /// Random seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent jobs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact HFM quantities.
    #[command(subcommand)]
    Hfm(HfmCommand),
    /// Renormalization-group transformations.
    #[command(subcommand)]
    Rg(RgCommand),
    /// Dataset utilities.
    #[command(subcommand)]
    Data(DataCommand),
    /// Full experiment from a TOML config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum HfmCommand {
    /// Print probabilities, entropy and relevance as JSON.
    Probe {
        #[arg(long)]
        n: usize,
        #[arg(long, allow_negative_numbers = true)]
        g: f64,
    },
    /// Write HFM draws to `sample.txt`.
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long, allow_negative_numbers = true)]
        g: f64,
        #[arg(long)]
        count: usize,
    },
    /// Write the degeneracy spectrum to `spectrum.csv`.
    Spectrum {
        #[arg(long)]
        n: usize,
        #[arg(long, allow_negative_numbers = true)]
        g: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Coarse,
    Fine,
}

#[derive(Debug, Subcommand)]
enum RgCommand {
    /// One fixed-point run; writes `rg_iterate.json`.
    Iterate {
        #[arg(long)]
        n: usize,
        /// Coupling of the reference fixed point; sets the default target entropy.
        #[arg(long, allow_negative_numbers = true)]
        g: Option<f64>,
        #[arg(long)]
        target_entropy: Option<f64>,
        #[arg(long, value_enum, default_value = "random")]
        start: Start,
        #[arg(long, value_enum, default_value = "coarse")]
        direction: DirectionArg,
        #[arg(long, default_value_t = 500)]
        max_iterations: usize,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
    /// Convergence over an `n` x `g` grid; writes `rg_sweep.csv`.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        g: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        starts: usize,
        #[arg(long, default_value_t = 500)]
        max_iterations: usize,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
    /// Dense transition matrix and its stationary vector.
    Matrix {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        alpha: Option<f64>,
        /// Use `alpha = 1 - 2 exp(-g)` and list the analytic fixed point.
        #[arg(long, allow_negative_numbers = true)]
        g: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Digits,
    Letters,
}

#[derive(Debug, Subcommand)]
enum DataCommand {
    /// Procedural glyph images as an IDX pair.
    Synth {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
    },
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn install_pool(jobs: Option<usize>) -> Result<()> {
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        // only fails if a pool already exists, which is harmless here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    install_pool(cli.jobs)?;
    let seed = cli.seed.unwrap_or(0);
    let out = out_dir(cli);
    match &cli.command {
        Command::Hfm(HfmCommand::Probe { n, g }) => {
            let probe = commands::probe(*n, *g)?;
            println!("{}", serde_json::to_string_pretty(&probe)?);
        }
        Command::Hfm(HfmCommand::Sample { n, g, count }) => {
            let path = out.join("sample.txt");
            commands::sample(*n, *g, *count, seed, &path)?;
            println!("{}", path.display());
        }
        Command::Hfm(HfmCommand::Spectrum { n, g }) => {
            let path = out.join("spectrum.csv");
            let nu = commands::spectrum(*n, *g, &path)?;
            match nu {
                Some(nu) => println!("{} nu={nu}", path.display()),
                None => println!("{}", path.display()),
            }
        }
        Command::Rg(RgCommand::Iterate {
            n,
            g,
            target_entropy,
            start,
            direction,
            max_iterations,
            tolerance,
        }) => {
            let report = commands::iterate(&IterateArgs {
                n: *n,
                g: *g,
                target_entropy: *target_entropy,
                start: *start,
                direction: match direction {
                    DirectionArg::Coarse => Direction::Coarse,
                    DirectionArg::Fine => Direction::Fine,
                },
                max_iterations: *max_iterations,
                tolerance: *tolerance,
                seed,
            })?;
            let path = out.join("rg_iterate.json");
            std::fs::create_dir_all(&out)?;
            std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            println!(
                "{} iterations={} final_distance={:?} converged={}",
                path.display(),
                report.iterations,
                report.final_distance,
                report.converged
            );
            if !report.converged {
                return Err(CliError::NotConverged(format!(
                    "{} iterations without reaching tolerance {}",
                    report.iterations, tolerance
                )));
            }
        }
        Command::Rg(RgCommand::Sweep {
            n,
            g,
            starts,
            max_iterations,
            tolerance,
        }) => {
            let rows = commands::sweep(n, g, *starts, *max_iterations, *tolerance, seed)?;
            let path = out.join("rg_sweep.csv");
            std::fs::create_dir_all(&out)?;
            std::fs::write(&path, commands::sweep_csv(&rows)?)?;
            let failed = rows.iter().filter(|r| !r.converged).count();
            println!("{} runs={} unconverged={failed}", path.display(), rows.len());
            if failed > 0 {
                return Err(CliError::NotConverged(format!("{failed} of {} runs", rows.len())));
            }
        }
        Command::Rg(RgCommand::Matrix { n, alpha, g }) => {
            commands::matrix(*n, *alpha, *g, &out)?;
            println!("{}", out.join("transition.csv").display());
        }
        Command::Data(DataCommand::Synth { family, per_class }) => {
            let family = match family {
                FamilyArg::Digits => Family::Digits,
                FamilyArg::Letters => Family::Letters,
            };
            let (images, labels) = commands::synth(family, *per_class, seed, &out)?;
            println!("{}\n{}", images.display(), labels.display());
        }
        Command::Pipeline { config } => {
            let mut cfg = ExperimentConfig::load(config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(j) = cli.jobs {
                cfg.jobs = j;
            }
            let dir = cli
                .out
                .clone()
                .or_else(|| cfg.out_dir.clone())
                .ok_or_else(|| CliError::Config("no output directory: set out_dir or pass --out".into()))?;
            let outcome = pipeline::run(&cfg, &dir)?;
            println!("{}", dir.join("manifest.json").display());
            let failed = outcome.failed_stages();
            if !failed.is_empty() {
                return Err(CliError::Runtime(format!("failed stages: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            ExitCode::from(code as u8)
        }
    }
}
