use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slowfast::scenario::{
    self, all_pass, local_spectrum_csv, render_report, write_output, Gate, ScenarioConfig, ScenarioError,
};

const DEFAULT_OUT: &str = "out";

#[derive(Debug, Parser)]
#[command(
    name = "slowfast",
    version,
    about = "Principal eigenvalues of slow-fast elliptic operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Monte Carlo seed; overrides `[qsd] seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Global principal eigenpairs along the eps list.
    Eig,
    /// Frozen-y principal eigenvalues k^y.
    LocalSpectrum,
    /// Regime and predicted eps -> 0 limit.
    Limit,
    /// Full eps sweep with extrapolation and every gate.
    Sweep,
    /// Particle estimate of the quasi-stationary law.
    QsdMc,
    /// Explicit Hamilton-Jacobi solution and its residual.
    HjCheck,
}

struct Outcome {
    report: String,
    gates: Vec<Gate>,
}

fn run(cli: &Cli) -> Result<Outcome, ScenarioError> {
    let path = cli.config.as_deref().ok_or_else(|| scenario::ConfigError::Invalid {
        line: None,
        key: "--config".into(),
        message: "a scenario file is required".into(),
    })?;
    let mut cfg = scenario::load_config(path)?;
    if let (Some(seed), Some(q)) = (cli.seed, cfg.qsd.as_mut()) {
        q.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    execute(&cli.command, &cfg, &out)
}

fn execute(command: &Command, cfg: &ScenarioConfig, out: &Path) -> Result<Outcome, ScenarioError> {
    let outcome = match command {
        Command::Eig => {
            let r = scenario::run_eig(cfg)?;
            write_output(out, "eigenvalues.csv", &r.csv())?;
            Outcome {
                report: "[eig]\n".into(),
                gates: r.gates,
            }
        }
        Command::LocalSpectrum => {
            let spec = scenario::run_local_spectrum(cfg)?;
            write_output(out, "local_spectrum.csv", &local_spectrum_csv(&spec))?;
            Outcome {
                report: format!("[local-spectrum]\nk_max_local = {}\n", scenario::fmt17(spec.k_max())),
                gates: Vec::new(),
            }
        }
        Command::Limit => {
            let r = scenario::run_limit(cfg)?;
            write_output(out, "local_spectrum.csv", &local_spectrum_csv(&r.local))?;
            Outcome {
                report: format!("[limit]\n{}", r.text()),
                gates: Vec::new(),
            }
        }
        Command::Sweep => {
            let r = scenario::run_sweep(cfg)?;
            write_output(out, "sweep.csv", &r.csv())?;
            write_output(out, "local_spectrum.csv", &local_spectrum_csv(&r.limit.local))?;
            if let Some(hj) = &r.hj {
                write_output(out, hj.file_name(), &hj.csv())?;
            }
            Outcome {
                report: r.summary(),
                gates: r.gates,
            }
        }
        Command::QsdMc => {
            let r = scenario::run_qsd(cfg)?;
            write_output(out, "qsd.csv", &r.csv())?;
            write_output(out, "qsd_histogram.csv", &r.histogram_csv())?;
            Outcome {
                report: r.summary(),
                gates: r.gates,
            }
        }
        Command::HjCheck => {
            let (limit, hj) = scenario::run_hj(cfg)?;
            write_output(out, hj.file_name(), &hj.csv())?;
            Outcome {
                report: format!("[hj-check]\n{}", limit.text()),
                gates: hj.gates,
            }
        }
    };
    let report = render_report(&outcome.report, &outcome.gates);
    write_output(out, "report.txt", &report)?;
    Ok(Outcome {
        report,
        gates: outcome.gates,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            if all_pass(&outcome.gates) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
