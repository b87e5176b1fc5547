//! `xstate`: discord sweeps, simulated tomography and fidelity fits.
//!
//! Data goes to `--out` (or the config's `output_path`) and otherwise to
//! stdout. Failures print `{"error": {"kind": ..., "message": ...}}` on stderr
//! and exit nonzero.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use xstate_core::experiment::{
    cmd_curve, cmd_fit, cmd_tomo, read_points_csv, read_points_json, tomo_from_records,
    write_density, ExperimentConfig, OutputFormat, TomoRun,
};
use xstate_core::states::{family, perturb};
use xstate_core::tomography::IntensityRecord;
use xstate_core::{Error, FamilyId};

#[derive(Parser, Debug)]
#[command(
    name = "xstate",
    version,
    about = "Spin-orbit X-state discord simulator"
)]
struct Cli {
    /// JSON experiment configuration; omitted fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    format: Option<OutputFormat>,
    /// Overrides the noise seed (ignored for a noiseless configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured family.
    #[arg(long, global = true)]
    family: Option<FamilyId>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Discord against weight c for every identity admixture α.
    Curve,
    /// Simulated tomography over the c grid, or reconstruction of measured records.
    Tomo {
        /// JSON list of nine intensity records to reconstruct instead of simulating.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Weight of the target state for fidelity of ingested records.
        #[arg(long)]
        c: Option<f64>,
    },
    /// Fits α to measured (c, discord) points from CSV or JSON.
    Fit {
        #[arg(long)]
        points: PathBuf,
    },
    /// Prints a family density matrix.
    State {
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(f) = cli.family {
        cfg.family = f;
    }
    if let Some(format) = cli.format {
        cfg.format = format;
    }
    if let Some(out) = &cli.out {
        cfg.output_path = Some(out.clone());
    }
    if let (Some(seed), Some(noise)) = (cli.seed, cfg.noise.as_mut()) {
        noise.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_output(
    path: Option<&Path>,
    write: impl FnOnce(&mut dyn Write) -> Result<(), Error>,
) -> Result<(), Error> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Full reports as JSON; in CSV mode a file output gets the summary and the
/// reports go next to it as `<stem>.reports.json`.
fn write_tomo(run: &TomoRun, cfg: &ExperimentConfig) -> Result<(), Error> {
    let out = cfg.output_path.as_deref();
    match cfg.format {
        OutputFormat::Json => with_output(out, |w| run.write_json(w)),
        OutputFormat::Csv => {
            with_output(out, |w| run.write_summary_csv(w))?;
            if let Some(p) = out {
                with_output(Some(&p.with_extension("reports.json")), |w| {
                    run.write_json(w)
                })?;
            }
            Ok(())
        }
    }
}

fn read_records(path: &Path) -> Result<Vec<IntensityRecord>, Error> {
    Ok(serde_json::from_reader(io::BufReader::new(File::open(
        path,
    )?))?)
}

fn read_points(path: &Path) -> Result<Vec<(f64, f64)>, Error> {
    let file = io::BufReader::new(File::open(path)?);
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        read_points_json(file)
    } else {
        read_points_csv(file)
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    let out = cfg.output_path.as_deref();
    match &cli.command {
        Command::Curve => {
            let curve = cmd_curve(&cfg)?;
            with_output(out, |w| curve.write(cfg.format, w))
        }
        Command::Tomo {
            records: None,
            c: _,
        } => write_tomo(&cmd_tomo(&cfg)?, &cfg),
        Command::Tomo {
            records: Some(path),
            c,
        } => {
            let target = c.map(|c| (cfg.family, c));
            write_tomo(&tomo_from_records(read_records(path)?, target, &cfg)?, &cfg)
        }
        Command::Fit { points } => {
            let fit = cmd_fit(&read_points(points)?, cfg.family, &cfg.minimizer)?;
            with_output(out, |w| fit.write(cfg.format, w))
        }
        Command::State { c, alpha } => {
            let rho = perturb(&family(cfg.family, *c)?, *alpha)?;
            with_output(out, |w| write_density(&rho, cfg.format, w))
        }
    }
}

fn report(kind: &str, message: &str) {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
