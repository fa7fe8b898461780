use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use psdfilter_cli::{cmd_bench, cmd_filter, cmd_learn, cmd_stability, CliError, Experiment, Overrides};

#[derive(Parser)]
#[command(name = "psdfilter", version, about = "Learn PSD kernels and run filters on bundled hidden Markov models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overrides `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated seeds, override `seeds`.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Oracle grid cells per dimension, overrides `grid`.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the transition, observation and initial models.
    Learn,
    /// Run the configured filters and compare them with the grid oracle.
    Filter,
    /// Measure how fast two differently initialized PSD filters merge.
    Stability,
    /// Time the configured filters.
    Bench,
}

fn run(cli: Cli) -> Result<String, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let overrides = Overrides {
        out: cli.out,
        seeds: cli.seeds,
        grid: cli.grid,
    };
    let exp = Experiment::load(&path, &overrides)?;
    let out = exp.out_dir().display().to_string();
    Ok(match cli.command {
        Command::Learn => {
            let (_, rows) = cmd_learn(&exp)?;
            let mut s = String::new();
            for r in rows {
                s.push_str(&format!("{}: M = {}, n = {}, sup error {:.3e}\n", r.kernel.name(), r.m, r.n, r.sup_error));
            }
            s + &format!("models and learn.csv written to {out}")
        }
        Command::Filter => {
            let runs = cmd_filter(&exp)?;
            let mut s = String::new();
            for r in &runs {
                let tv = r.max_tv().map_or("n/a".to_string(), |v| format!("{v:.3e}"));
                s.push_str(&format!("{} seed {}: max TV to oracle {tv}\n", r.method, r.seed));
            }
            s + &format!("traces written to {out}")
        }
        Command::Stability => {
            let runs = cmd_stability(&exp)?;
            let mut s = String::new();
            for r in &runs {
                let slope = r.slope.map_or("n/a".to_string(), |v| format!("{v:.3}"));
                s.push_str(&format!(
                    "seed {}: slope {slope}, log bound {:.3}, within bound {}\n",
                    r.seed,
                    r.birkhoff.ln(),
                    r.within_bound()
                ));
            }
            s + &format!("stability report written to {out}")
        }
        Command::Bench => {
            let rows = cmd_bench(&exp)?;
            let mut s = String::new();
            for r in &rows {
                s.push_str(&format!("{} (size {}): {} ns/step\n", r.label, r.size, r.median_step_ns));
            }
            s + &format!("bench.csv written to {out}")
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("psdfilter: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
