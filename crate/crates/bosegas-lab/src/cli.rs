//! Argument parsing, dispatch and exit codes.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use bosegas::cache::{Cache, EntryStatus};
use bosegas::fit::FitModel;
use bosegas::weights::Density;
use bosegas::{Error, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{ExperimentConfig, MuMode, Resolved, WindowSpec, SCHEMA};
use crate::output::{write_run, Manifest, RunOutput};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_TOLERANCE: u8 = 4;
pub const EXIT_CACHE: u8 = 5;
pub const EXIT_OTHER: u8 = 1;

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::Geometry(_) | Error::Json(_) => EXIT_CONFIG,
        Error::Infeasible(_) | Error::NullEvent(_) | Error::Unsupported(_) => EXIT_INFEASIBLE,
        Error::Tolerance(_) | Error::IllConditioned(_) => EXIT_TOLERANCE,
        Error::CacheCorrupt(_) => EXIT_CACHE,
        Error::Io(_) => EXIT_OTHER,
    }
}

#[derive(Debug, Parser)]
#[command(name = "bosegas", version, about = "Exact finite-size numerics for the critical free Bose gas loop soup")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every experiment; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// torus:<d>, box:<d>:dirichlet or box:<d>:neumann.
    #[arg(long)]
    pub geometry: Option<String>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Comma-separated side lengths.
    #[arg(long = "L-list", value_delimiter = ',')]
    pub l_list: Option<Vec<f64>>,
    /// `critical` or a number.
    #[arg(long)]
    pub rho: Option<String>,
    /// `none`, `solve` or a number <= 0.
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
    /// Mesoscopic window `alpha,m`.
    #[arg(long, value_delimiter = ',', conflicts_with = "window_range")]
    pub window_meso: Option<Vec<f64>>,
    /// Explicit window `min,max`.
    #[arg(long, value_delimiter = ',')]
    pub window_range: Option<Vec<usize>>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cache directory; defaults to $BOSEGAS_CACHE.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

impl Common {
    fn flags(&self) -> Result<ExperimentConfig> {
        let rho = self
            .rho
            .as_deref()
            .map(|s| serde_json::from_value::<Density>(serde_json::Value::String(s.into())))
            .transpose()
            .map_err(|e| Error::Domain(e.to_string()))?;
        let pair = |flag: &str, n: usize| Error::Domain(format!("--{flag} takes two comma-separated values, got {n}"));
        let window = match (&self.window_meso, &self.window_range) {
            (Some(v), _) if v.len() != 2 => return Err(pair("window-meso", v.len())),
            (_, Some(v)) if v.len() != 2 => return Err(pair("window-range", v.len())),
            (Some(v), _) => Some(WindowSpec::Mesoscopic { alpha: v[0], m: v[1] }),
            (_, Some(v)) => Some(WindowSpec::Explicit { min: v[0], max: v[1] }),
            _ => None,
        };
        Ok(ExperimentConfig {
            geometry: self.geometry.clone(),
            beta: self.beta,
            l_list: self.l_list.clone(),
            rho,
            mu: self.mu.as_deref().map(str::parse::<MuMode>).transpose()?,
            window,
            samples: self.samples,
            seed: self.seed,
            out: self.out.clone(),
            cache: self.cache.clone(),
        })
    }

    /// Config file overlaid with flags, then resolved.
    pub fn resolve(&self, default_geometry: &str) -> Result<Resolved> {
        let file = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        file.overlay(self.flags()?).resolve(default_geometry)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Heat trace against its small-time expansion.
    Trace {
        /// Comma-separated times; default 25 points on [1e-3, 10].
        #[arg(long, value_delimiter = ',')]
        t_list: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Least-squares heat-trace coefficients.
    Mpfit {
        #[command(flatten)]
        common: Common,
    },
    /// Loop weights.
    Weights {
        #[command(flatten)]
        common: Common,
    },
    /// Exact particle-number distribution.
    Pmf {
        #[command(flatten)]
        common: Common,
    },
    /// Partition function with local slopes.
    Partition {
        /// power, log-cubed or stretched.
        #[arg(long, default_value = "power")]
        model: String,
        #[command(flatten)]
        common: Common,
    },
    /// Reduced density matrix.
    Gamma {
        #[arg(long, default_value_t = 17)]
        points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Mesoscopic loops against the Dickman profile.
    Meso {
        #[command(flatten)]
        common: Common,
    },
    /// Fluctuations of the particle number against the Fredholm limit law.
    Clt {
        #[command(flatten)]
        common: Common,
    },
    /// Tilted local limit theorem.
    #[command(name = "local-clt")]
    LocalClt {
        #[command(flatten)]
        common: Common,
    },
    /// Largest loop against Poisson-Dirichlet(1).
    Pd {
        #[command(flatten)]
        common: Common,
    },
    /// Conditioned loop configurations.
    Sample {
        /// Also write torus paths for the first draw with this time step.
        #[arg(long)]
        paths: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Dickman function and its density.
    Dickman {
        #[arg(long, default_value_t = 6.0)]
        u_max: f64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Named verification suite.
    Suite {
        #[arg(long, default_value = "acceptance")]
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Weight-table cache administration.
    Cache {
        #[arg(value_parser = ["list", "verify", "purge"])]
        verb: String,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Print the configuration file schema.
    Schema,
}

/// Geometry used when neither the config nor the flags name one.
fn default_geometry(cmd: &Command) -> &'static str {
    match cmd {
        Command::Clt { .. } | Command::Pd { .. } => "box:3:dirichlet",
        Command::LocalClt { .. } => "box:3:neumann",
        _ => "torus:3",
    }
}

fn finish(name: &str, cfg: &Resolved, out: RunOutput, start: Instant) -> Result<()> {
    let manifest = Manifest::new(name, cfg.manifest_record(), vec![cfg.seed]);
    let path = write_run(&cfg.out, &out, manifest, start.elapsed())?;
    println!("{}", path.display());
    Ok(())
}

fn cache_admin(verb: &str, root: Option<PathBuf>) -> Result<u8> {
    let cache = root
        .map(Cache::new)
        .or_else(Cache::from_env)
        .ok_or_else(|| Error::Domain("no cache directory: pass --cache or set BOSEGAS_CACHE".into()))?;
    match verb {
        "list" => {
            for h in cache.list()? {
                println!("{h}");
            }
            Ok(EXIT_OK)
        }
        "verify" => {
            let mut code = EXIT_OK;
            for r in cache.verify()? {
                match r.status {
                    EntryStatus::Ok => println!("{} ok", r.hash),
                    EntryStatus::Stale => println!("{} stale", r.hash),
                    EntryStatus::Corrupt(why) => {
                        println!("{} corrupt: {why}", r.hash);
                        code = EXIT_CACHE;
                    }
                }
            }
            Ok(code)
        }
        "purge" => {
            for h in cache.purge()? {
                println!("removed {h}");
            }
            Ok(EXIT_OK)
        }
        other => Err(Error::Domain(format!("unknown cache verb `{other}`"))),
    }
}

/// Run a parsed command and return the exit code.
pub fn run(cli: Cli) -> Result<u8> {
    let start = Instant::now();
    let cmd = cli.command;
    let geometry = default_geometry(&cmd);
    match cmd {
        Command::Cache { verb, cache } => cache_admin(&verb, cache),
        Command::Schema => {
            print!("{SCHEMA}");
            Ok(EXIT_OK)
        }
        Command::Suite { name, common } => {
            let cfg = common.resolve(geometry)?;
            let (out, criteria) = commands::suite(&name, cfg.seed)?;
            for c in &criteria {
                println!("{}", c.summary());
            }
            finish("suite", &cfg, out, start)?;
            Ok(if criteria.iter().all(|c| c.passed()) { EXIT_OK } else { EXIT_TOLERANCE })
        }
        Command::Trace { t_list, common } => {
            let cfg = common.resolve(geometry)?;
            let ts = t_list.unwrap_or_else(commands::default_trace_grid);
            finish("trace", &cfg, commands::trace(&cfg, &ts)?, start).map(|_| EXIT_OK)
        }
        Command::Partition { model, common } => {
            let cfg = common.resolve(geometry)?;
            let model: FitModel = model.parse()?;
            finish("partition", &cfg, commands::partition(&cfg, model)?, start).map(|_| EXIT_OK)
        }
        Command::Gamma { points, common } => {
            let cfg = common.resolve(geometry)?;
            finish("gamma", &cfg, commands::gamma(&cfg, points.max(1))?, start).map(|_| EXIT_OK)
        }
        Command::Sample { paths, common } => {
            let cfg = common.resolve(geometry)?;
            finish("sample", &cfg, commands::sample(&cfg, paths)?, start).map(|_| EXIT_OK)
        }
        Command::Dickman { u_max, step, common } => {
            let cfg = common.resolve(geometry)?;
            finish("dickman", &cfg, commands::dickman(u_max, step)?, start).map(|_| EXIT_OK)
        }
        Command::Mpfit { common } => simple("mpfit", common, geometry, commands::mpfit, start),
        Command::Weights { common } => simple("weights", common, geometry, commands::weights, start),
        Command::Pmf { common } => simple("pmf", common, geometry, commands::pmf, start),
        Command::Meso { common } => simple("meso", common, geometry, commands::meso, start),
        Command::Clt { common } => simple("clt", common, geometry, commands::clt, start),
        Command::LocalClt { common } => simple("local-clt", common, geometry, commands::local_clt_cmd, start),
        Command::Pd { common } => simple("pd", common, geometry, commands::pd, start),
    }
}

fn simple(
    name: &str,
    common: Common,
    geometry: &str,
    f: fn(&Resolved) -> Result<RunOutput>,
    start: Instant,
) -> Result<u8> {
    let cfg = common.resolve(geometry)?;
    finish(name, &cfg, f(&cfg)?, start).map(|_| EXIT_OK)
}

/// Entry point used by `main`.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
