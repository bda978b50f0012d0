use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use thinfilm::harness::{dump_coefficients, run_epsilon_sweep, run_scenario, write_sweep, ScenarioConfig};
use thinfilm::output::OutputSink;
use thinfilm::verify;
use thinfilm::FilmError;

#[derive(Parser)]
#[command(name = "thinfilm", version, about = "Thin viscous film between two moving surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the scenario.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sweep members.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides `seed` in the scenario.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the new model for every epsilon and the matching limit model.
    Run(Common),
    /// Epsilon sweep with fitted convergence slopes.
    Sweep(Common),
    /// Write the coefficient table.
    DumpCoeffs {
        #[command(flatten)]
        common: Common,
        /// Time at which to evaluate; defaults to `t_start`.
        #[arg(long)]
        time: Option<f64>,
    },
    /// Run the built-in acceptance checks.
    Verify {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn set_threads(n: Option<usize>) -> Result<(), FilmError> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| FilmError::config("--threads", e.to_string()))?;
    }
    Ok(())
}

fn prepare(c: &Common) -> Result<(ScenarioConfig, PathBuf), FilmError> {
    set_threads(c.threads)?;
    let mut cfg = ScenarioConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .ok_or_else(|| FilmError::config("out", "no output directory given"))?;
    Ok((cfg, out))
}

fn print_sweep(report: &thinfilm::harness::ConvergenceReport) {
    println!("{:>10} {:>14} {:>14} {:>12} {:>12} {:>14}", "eps", "err_linf", "err_l2", "u2/u1", "u3/u2", "closure");
    for e in &report.entries {
        println!(
            "{:>10.4} {:>14.6e} {:>14.6e} {:>12.4e} {:>12.4e} {:>14.6e}",
            e.eps, e.err_linf, e.err_l2, e.ratio21, e.ratio32, e.closure_linf
        );
    }
    println!(
        "slopes: linf {:.3}, l2 {:.3}, u2/u1 {:.3}, u3/u2 {:.3}, closure {:.3}",
        report.slope_linf, report.slope_l2, report.slope_ratio21, report.slope_ratio32, report.slope_closure
    );
}

fn verify(out: Option<&Path>, threads: Option<usize>, seed: u64) -> Result<bool, FilmError> {
    set_threads(threads)?;
    let outcomes = verify::run_all(seed);
    for o in &outcomes {
        println!("{}", o.line());
    }
    if let Some(dir) = out {
        let mut sink = OutputSink::new(dir)?;
        sink.write_json("verify.json", &outcomes)?;
        sink.finish(String::new())?;
    }
    Ok(outcomes.iter().all(|o| o.passed))
}

fn dispatch(cli: Cli) -> Result<ExitCode, FilmError> {
    match cli.command {
        Command::Run(c) => {
            let (cfg, out) = prepare(&c)?;
            let m = run_scenario(&cfg, &out)?;
            println!("wrote {} files to {}", m.files.len() + 1, out.display());
        }
        Command::Sweep(c) => {
            let (cfg, out) = prepare(&c)?;
            let report = run_epsilon_sweep(&cfg)?;
            print_sweep(&report);
            write_sweep(&report, &cfg, &out)?;
        }
        Command::DumpCoeffs { common, time } => {
            let (cfg, out) = prepare(&common)?;
            let csv = dump_coefficients(&cfg, time.unwrap_or(cfg.t_start))?;
            let mut sink = OutputSink::new(&out)?;
            sink.write("coefficients.csv", &csv)?;
            sink.finish(cfg.sha256())?;
        }
        Command::Verify { out, threads, seed } => {
            if !verify(out.as_deref(), threads, seed)? {
                return Ok(ExitCode::from(4));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
