use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flmimo::algorithms::Scheme;
use flmimo::harness::{
    bound_suite, figure_preset, run_experiment, write_csv, write_traces_to, ConfigFile, ExperimentResult, ExperimentSpec,
    SweepAxis,
};
use flmimo::link::verify_fd_si_variance;
use flmimo::scenario::{db_to_linear, SystemParams};
use flmimo::Error;

#[derive(Parser)]
#[command(name = "flmimo", version, about = "Power and frequency allocation for FL over massive MIMO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Default)]
struct Overrides {
    /// antennas_M, fl_count_L, si_dB, payload_Mb or none.
    #[arg(long)]
    sweep: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long)]
    drops: Option<usize>,
    /// Comma-separated subset of HD, FD, BL1, BL2, HYBRID.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-iteration objective trace CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a flat TOML file.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check the scalar and rate bounds on random inputs.
    ValidateBounds {
        #[arg(long, default_value_t = 10_000)]
        scalar_cases: usize,
        #[arg(long, default_value_t = 1_000)]
        rate_cases: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Monte-Carlo check of the self-interference variance approximation.
    VerifySi {
        #[arg(long = "M", default_value_t = 64)]
        m: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run a named figure preset (fig2..fig6).
    Figure {
        name: String,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn apply_overrides(spec: &mut ExperimentSpec, o: &Overrides) -> flmimo::Result<()> {
    if let Some(s) = &o.sweep {
        spec.sweep_axis = s.parse::<SweepAxis>()?;
    }
    if let Some(v) = &o.values {
        spec.sweep_values = v.clone();
    }
    if let Some(n) = o.drops {
        spec.n_drops = n;
    }
    if let Some(s) = &o.schemes {
        spec.schemes = s.iter().map(|x| x.parse::<Scheme>()).collect::<flmimo::Result<_>>()?;
    }
    if let Some(s) = o.seed {
        spec.master_seed = s;
    }
    if let Some(p) = &o.out {
        spec.output_path = Some(p.clone());
    }
    Ok(())
}

fn report(spec: &ExperimentSpec, result: &ExperimentResult, trace_out: Option<&PathBuf>) -> anyhow::Result<ExitCode> {
    match &spec.output_path {
        Some(p) => write_csv(result, p)?,
        None => flmimo::harness::write_csv_to(&result.rows, std::io::stdout().lock())?,
    }
    if let Some(p) = trace_out {
        write_traces_to(&result.traces, std::fs::File::create(p)?)?;
    }
    for a in &result.aggregates {
        let mu = a.mu.map(|m| format!("  mu {:.2}% (se {:.2})", m.mean, m.se)).unwrap_or_default();
        eprintln!(
            "{} = {:<8} {:<6} mean {:>9.3} Mbps (se {:.3}), feasible {}/{}{mu}",
            spec.sweep_axis,
            a.sweep_value,
            a.scheme,
            a.rate.mean / 1e6,
            a.rate.se / 1e6,
            a.feasible,
            a.rate.n
        );
    }
    if result.all_infeasible() {
        eprintln!("every run is infeasible");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, overrides } => {
            let mut spec = ExperimentSpec::default();
            if let Some(path) = &config {
                ConfigFile::load(path)?.apply(&mut spec)?;
            }
            apply_overrides(&mut spec, &overrides)?;
            spec.points()?;
            let result = run_experiment(&spec)?;
            report(&spec, &result, overrides.trace_out.as_ref())
        }
        Command::Figure { name, overrides } => {
            let mut spec = figure_preset(&name)?;
            apply_overrides(&mut spec, &overrides)?;
            spec.points()?;
            let result = run_experiment(&spec)?;
            report(&spec, &result, overrides.trace_out.as_ref())
        }
        Command::ValidateBounds { scalar_cases, rate_cases, seed } => {
            let r = bound_suite(scalar_cases, rate_cases, seed)?;
            println!(
                "scalar: {} cases, {} failures, worst violation {:.3e}, worst tangency {:.3e}",
                r.scalar_cases, r.scalar_failures, r.scalar_worst, r.scalar_worst_tangency
            );
            println!(
                "rates:  {} cases, {} failures, worst violation {:.3e}, worst tangency {:.3e}",
                r.rate_cases, r.rate_failures, r.rate_worst, r.rate_worst_tangency
            );
            Ok(if r.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::VerifySi { m, samples, seed } => {
            if m == 0 || samples == 0 {
                return Err(Error::Config("M and samples must be positive".into()).into());
            }
            let p = SystemParams::default();
            let beta = db_to_linear(p.pl_si_db) * db_to_linear(p.si_over_noise_db);
            let (emp, approx) = verify_fd_si_variance(m, samples, beta, 1.0, 1.0, seed);
            let rel = (emp - approx).abs() / approx;
            println!("M = {m}, samples = {samples}");
            println!("empirical   {emp:.6e}");
            println!("closed form {approx:.6e}");
            println!("relative difference {:.3}%", rel * 100.0);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
