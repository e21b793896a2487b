use clap::{Parser, Subcommand};
use igabem::checks::run_suite;
use igabem::experiment::{run_experiment, ExperimentConfig, CSV_HEADER};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "igabem", about = "IGA collocation BEM refinement studies and self checks")]
struct Cli {
    /// size of the rayon thread pool (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// seed of the sampling-based checks
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a refinement study described by a JSON config and write a CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an oracle suite: moments, qi, product, geometry, or all.
    Check { suite: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match cli.command {
        Command::Run { config, out } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let reports = match run_experiment(&cfg) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let mut text = String::from(CSV_HEADER);
            for r in &reports {
                text.push('\n');
                text.push_str(&r.csv_row());
            }
            text.push('\n');
            print!("{text}");
            match std::fs::File::create(&out).and_then(|mut f| f.write_all(text.as_bytes())) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {}: {e}", out.display());
                    ExitCode::FAILURE
                }
            }
        }
        Command::Check { suite } => match run_suite(&suite, cli.seed) {
            Ok(lines) => {
                let mut ok = true;
                for l in &lines {
                    let status = if l.passed() { "ok" } else { "FAIL" };
                    ok &= l.passed();
                    println!("{status:4} {:<40} max dev {:.3e} (tol {:.0e})", l.name, l.max_dev, l.tol);
                }
                if ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
