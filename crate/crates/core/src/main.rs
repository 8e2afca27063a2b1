use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use renyi_vmc::optimizer::Status;
use renyi_vmc::runner::{cli_check, cli_oracle, cli_run, cli_sweep, CheckHooks, CliOptions};

#[derive(Parser)]
#[command(name = "renyi-vmc", version, about = "Rényi free-energy variational Monte Carlo for the transverse-field Ising model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize at a single β_R.
    Run(Common),
    /// Optimize over an ascending β_R list with warm starts; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Append exact-diagonalization columns (N ≤ 12).
        #[arg(long)]
        oracle: bool,
    },
    /// Exact Gibbs and Rényi curves; writes oracle.csv.
    Oracle(Common),
    /// Verification battery on random parameters (N ≤ 10).
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

impl Common {
    fn options(&self) -> CliOptions {
        CliOptions {
            config: self.config.clone(),
            out: self.out.clone(),
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            ..Default::default()
        }
    }
}

fn status_line(beta: f64, status: &Status) -> String {
    match status {
        Status::Converged => format!("beta_r={beta}: converged"),
        Status::MaxIterations => format!("beta_r={beta}: reached max_iterations"),
        Status::Aborted(why) => format!("beta_r={beta}: ABORTED ({why})"),
    }
}

fn execute(cli: Cli) -> renyi_vmc::Result<bool> {
    let common = match &cli.command {
        Command::Run(c) | Command::Oracle(c) => c,
        Command::Sweep { common, .. } | Command::Check { common, .. } => common,
    };
    #[cfg(feature = "parallel")]
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| renyi_vmc::Error::Config(format!("cannot set up {t} threads: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = common.threads;

    match &cli.command {
        Command::Run(c) => {
            let report = cli_run(&c.options())?;
            println!("{}", status_line(report.summary.beta_r, &report.summary.status));
            if let Some(e) = &report.summary.estimates {
                println!(
                    "E = {:.6} ± {:.6}, S2 = {:.6} ± {:.6}, F_R = {:.6} ± {:.6}",
                    e.energy.mean,
                    e.energy.std_err,
                    e.renyi_entropy.mean,
                    e.renyi_entropy.std_err,
                    e.free_energy.mean,
                    e.free_energy.std_err
                );
            }
            println!("outputs in {}", report.out_dir.display());
            Ok(!report.aborted())
        }
        Command::Sweep { common, oracle } => {
            let report = cli_sweep(&CliOptions { oracle: *oracle, ..common.options() })?;
            for p in &report.points {
                println!("{}", status_line(p.beta_r, &p.status));
            }
            println!("wrote {}", report.out_dir.join("sweep.csv").display());
            Ok(!report.aborted())
        }
        Command::Oracle(c) => {
            let (path, rows) = cli_oracle(&c.options())?;
            println!("wrote {rows} rows to {}", path.display());
            Ok(true)
        }
        Command::Check { common, corrupt_gradient } => {
            let hooks = CheckHooks { corrupt_gradient: *corrupt_gradient };
            let results = cli_check(&CliOptions { hooks, ..common.options() })?;
            for r in &results {
                let verdict = if r.passed { "PASS" } else { "FAIL" };
                println!("{verdict} {:<32} error {:.3e} (tolerance {:.0e})", r.name, r.error, r.tolerance);
            }
            Ok(results.iter().all(|r| r.passed))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
