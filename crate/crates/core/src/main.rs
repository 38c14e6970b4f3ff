use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use maglev::harness::config::{load_scenarios, ScenarioConfig};
use maglev::harness::output::{default_out_root, sanitize, write_overlays, write_run};
use maglev::harness::presets;
use maglev::harness::sim::run_batch_partial;
use maglev::Error;

#[derive(Parser)]
#[command(name = "maglev", version, about = "Sensorless magnetic levitation scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named preset or a JSON scenario file.
    Run {
        /// Preset name (see `list-presets`) or path to a scenario file.
        target: String,
        /// Output root; defaults to $MAGLEV_OUT_DIR or ./out.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the integration step of every scenario.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the simulated horizon of every scenario.
        #[arg(long)]
        horizon: Option<f64>,
        /// Also write SVG plots.
        #[arg(long)]
        plots: bool,
    },
    /// List the built-in presets.
    ListPresets,
    /// Check a scenario file without running it.
    Validate { file: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation { .. } | Error::Parse { .. } | Error::UnknownPreset(_) => 2,
        Error::NonFinite { .. } | Error::StepCollapse { .. } | Error::DomainViolation { .. } => 3,
        Error::Io { .. } => 1,
    }
}

fn resolve(target: &str) -> Result<(String, Vec<ScenarioConfig>), Error> {
    if let Ok(p) = presets::find(target) {
        return Ok((p.name.to_string(), p.scenarios()));
    }
    let path = Path::new(target);
    let looks_like_file = path.exists() || target.ends_with(".json") || target.contains(std::path::MAIN_SEPARATOR);
    if !looks_like_file {
        return Err(Error::UnknownPreset(target.to_string()));
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into());
    Ok((stem, load_scenarios(path)?))
}

fn run(target: &str, out: Option<PathBuf>, dt: Option<f64>, horizon: Option<f64>, plots: bool) -> Result<(), Error> {
    let (label, mut scenarios) = resolve(target)?;
    for s in &mut scenarios {
        let run = s.run_options_mut();
        if let Some(dt) = dt {
            run.dt = dt;
        }
        if let Some(h) = horizon {
            run.horizon = h;
        }
        s.validate()?;
    }
    let root = out.unwrap_or_else(default_out_root).join(sanitize(&label));

    let mut records = Vec::with_capacity(scenarios.len());
    let mut first_error = None;
    for (cfg, result) in scenarios.iter().zip(run_batch_partial(&scenarios)) {
        let (rec, failure) = result?;
        // samples recorded before a mid-run failure are still written
        let m = write_run(cfg, &rec, &root.join(sanitize(cfg.name())), plots)?;
        match failure {
            None => {
                let verdict = if m.monotone { "monotone" } else { "NOT monotone" };
                println!(
                    "{}: {} samples over {} s, parameter errors {}, {} events",
                    m.name,
                    m.samples,
                    m.horizon,
                    verdict,
                    m.events.len()
                );
                records.push(rec);
            }
            Some(e) => {
                eprintln!("{}: {e} ({} samples kept)", cfg.name(), m.samples);
                first_error.get_or_insert(e);
            }
        }
    }
    if plots && first_error.is_none() {
        write_overlays(&records, &root)?;
    }
    println!("output written to {}", root.display());
    first_error.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            target,
            out,
            dt,
            horizon,
            plots,
        } => run(&target, out, dt, horizon, plots),
        Command::ListPresets => {
            for p in presets::PRESETS {
                println!("{:<34} {}", p.name, p.description);
            }
            Ok(())
        }
        Command::Validate { file } => load_scenarios(&file).map(|s| {
            for c in &s {
                println!("{}: ok", c.name());
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
