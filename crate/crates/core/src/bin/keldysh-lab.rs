use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use keldysh_lab::cli;
use keldysh_lab::geometry::{Branch, Point};
use keldysh_lab::typechange::TypeChangeFn;

#[derive(Parser)]
#[command(name = "keldysh-lab", version, about = "Experiments for mixed elliptic-hyperbolic equations of Keldysh type")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// List the available experiments.
    List,
    /// Trace one characteristic and print its vertices as CSV.
    Trace {
        #[arg(long = "K", default_value = "power:1")]
        k: String,
        /// Start point `x,y`.
        #[arg(long, allow_hyphen_values = true)]
        start: String,
        #[arg(long, default_value = "plus")]
        branch: String,
        /// Defaults to ten units past the start in the branch direction.
        #[arg(long, allow_hyphen_values = true)]
        y_stop: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
    },
}

fn init_threads() {
    let Ok(v) = std::env::var("KELDYSH_LAB_THREADS") else { return };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("warning: ignoring KELDYSH_LAB_THREADS={v:?}"),
    }
}

fn parse_point(s: &str) -> Option<Point> {
    let (x, y) = s.split_once(',')?;
    Some(Point::new(x.trim().parse().ok()?, y.trim().parse().ok()?))
}

fn trace(k: &str, start: &str, branch: &str, y_stop: Option<f64>, step: f64) -> Result<String, String> {
    let k: TypeChangeFn = k.parse().map_err(|e| format!("--K: {e}"))?;
    let start = parse_point(start).ok_or_else(|| format!("--start: expected x,y, got {start:?}"))?;
    let branch: Branch = branch.parse().map_err(|e| format!("--branch: {e}"))?;
    let y_stop = y_stop.unwrap_or(start.y + 10.0 * branch.sign());
    cli::trace_csv(&k, start, branch, y_stop, step).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { cli::EXIT_USAGE as u8 } else { 0 });
        }
    };
    init_threads();
    let code = match args.command {
        Command::Run { config } => cli::run(&config),
        Command::List => {
            print!("{}", cli::list_experiments());
            cli::EXIT_PASS
        }
        Command::Trace { k, start, branch, y_stop, step } => match trace(&k, &start, &branch, y_stop, step) {
            Ok(csv) => {
                print!("{csv}");
                cli::EXIT_PASS
            }
            Err(e) => {
                eprintln!("error: {e}");
                cli::EXIT_USAGE
            }
        },
    };
    ExitCode::from(code as u8)
}
