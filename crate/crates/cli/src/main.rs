use clap::{Parser, Subcommand};
use fibresync_cli::config::{validate_config, RunConfig};
use fibresync_cli::{run, CliError};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "fibresync",
    version,
    about = "Skew-product torus maps: orbits, fibered Lyapunov exponents, class certificates, cylinder audits"
)]
struct Cli {
    /// Worker thread cap (fallback: FIBRESYNC_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check class membership and write the full constants ledger
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Iterate one orbit and write (j, x, y, log_dy)
    Orbit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Finite-time fibered Lyapunov estimate with running-average trace
    Lyapunov {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Circular diameter of k fibre points driven by one base orbit
    Sync {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Long-orbit scatter (x, y)
    Scatter {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Breadth-first good/bad audit of the cylinder partition
    AuditPartition {
        #[arg(long)]
        config: PathBuf,
        /// Load an existing certificate instead of recomputing one
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 48)]
        grid_n: usize,
        /// Classification work budget
        #[arg(long, default_value_t = 10_000_000)]
        budget: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fibered exponent vs matrix-norm exponent for the Schrödinger cocycle
    Schrodinger {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Reproduce both panels of the synchronization figure
    Figure1 {
        #[arg(long, default_value = "out/figure1")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1.0 / 6000.0)]
        eps_tilde: f64,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long, default_value_t = 200)]
        n_left: usize,
        #[arg(long, default_value_t = 100_000)]
        n_right: usize,
    },
    /// Reproduce the escape-set figure
    Figure2 {
        #[arg(long, default_value = "out/figure2")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        eps_tilde: f64,
        #[arg(long, default_value_t = 1 << 18)]
        grid_n: usize,
    },
    /// Fibered Lyapunov estimates over random starts
    Survey {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Run even when class membership cannot be certified
        #[arg(long)]
        allow_uncertified: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(vec![format!("cannot read {}: {e}", path.display())]))?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(vec![format!("invalid JSON: {e}")]))?;
    validate_config(&doc).map_err(CliError::Validation)
}

fn real_main(cli: Cli) -> Result<(), CliError> {
    let threads = cli
        .threads
        .or_else(|| std::env::var("FIBRESYNC_THREADS").ok().and_then(|s| s.parse().ok()));
    if let Some(t) = threads {
        // best effort: the global pool may already exist in tests
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Certify { config, out_dir } => {
            let cfg = load_config(&config)?;
            run::cmd_certify(&cfg, &run::out_dir(&cfg, out_dir))
        }
        Command::Orbit { config, n, out_dir } => {
            let cfg = load_config(&config)?;
            let n = cfg.command.n.map(|v| v as usize).unwrap_or(n);
            run::cmd_orbit(&cfg, &run::out_dir(&cfg, out_dir), n)
        }
        Command::Lyapunov { config, n, out_dir } => {
            let cfg = load_config(&config)?;
            let n = cfg.command.n.map(|v| v as usize).unwrap_or(n);
            run::cmd_lyapunov(&cfg, &run::out_dir(&cfg, out_dir), n)
        }
        Command::Sync { config, n, k, out_dir } => {
            let cfg = load_config(&config)?;
            let n = cfg.command.n.map(|v| v as usize).unwrap_or(n);
            let k = cfg.command.k.map(|v| v as usize).unwrap_or(k);
            run::cmd_sync(&cfg, &run::out_dir(&cfg, out_dir), n, k)
        }
        Command::Scatter { config, n, out_dir } => {
            let cfg = load_config(&config)?;
            let n = cfg.command.n.map(|v| v as usize).unwrap_or(n);
            run::cmd_scatter(&cfg, &run::out_dir(&cfg, out_dir), n)
        }
        Command::AuditPartition {
            config,
            certificate,
            depth,
            grid_n,
            budget,
            out_dir,
        } => {
            let cfg = load_config(&config)?;
            let depth = cfg.command.depth.map(|v| v as usize).unwrap_or(depth);
            let grid_n = cfg.command.grid_n.map(|v| v as usize).unwrap_or(grid_n);
            let budget = cfg.command.budget.unwrap_or(budget);
            run::cmd_audit_partition(
                &cfg,
                &run::out_dir(&cfg, out_dir),
                certificate.as_deref(),
                depth,
                grid_n,
                budget,
            )
        }
        Command::Schrodinger { config, n, out_dir } => {
            let cfg = load_config(&config)?;
            let n = cfg.command.n.map(|v| v as usize).unwrap_or(n);
            run::cmd_schrodinger(&cfg, &run::out_dir(&cfg, out_dir), n)
        }
        Command::Figure1 { out_dir, eps_tilde, k, n_left, n_right } => {
            run::cmd_figure1(&out_dir, eps_tilde, k, n_left, n_right)
        }
        Command::Figure2 { out_dir, eps_tilde, grid_n } => {
            run::cmd_figure2(&out_dir, eps_tilde, grid_n)
        }
        Command::Survey { config, samples, n, allow_uncertified, out_dir } => {
            let cfg = load_config(&config)?;
            let samples = cfg.command.samples.map(|v| v as usize).unwrap_or(samples);
            let n = cfg.command.n.map(|v| v as usize).unwrap_or(n);
            run::cmd_survey(&cfg, &run::out_dir(&cfg, out_dir), samples, n, allow_uncertified)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => {}
        Err(e) => {
            e.report();
            std::process::exit(e.exit_code());
        }
    }
}
