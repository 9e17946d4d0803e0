use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qmeas::campaign::{self, Overrides};

/// Run a measurement campaign described by a TOML file (or replay a
/// `manifest.json`).
#[derive(Parser, Debug)]
#[command(name = "qmeas", version)]
struct Args {
    /// Campaign TOML file or a previous run's manifest.json.
    #[arg(long)]
    config: PathBuf,
    /// Override `sim.rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: QMEAS_THREADS, then all cores).
    #[arg(long, env = "QMEAS_THREADS")]
    threads: Option<usize>,
    /// Override `output_dir`.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    };
    let ov = Overrides {
        seed: args.seed,
        output_dir: args.output,
    };
    match pool.install(|| campaign::run_file(&args.config, &ov)) {
        Ok(m) => {
            for f in &m.outputs {
                println!("{}", m.config.output_dir.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
