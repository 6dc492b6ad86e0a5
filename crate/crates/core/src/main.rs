use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pbsim::scenarios::{self, ScenarioConfig, ScenarioError, ScenarioKind};

#[derive(Parser, Debug)]
#[command(
    name = "pbsim",
    version,
    about = "Photon-pair polarization transfer through a hole-array film"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Configuration file, or one of the built-in presets.
    #[arg(long, default_value = "paper_defaults")]
    config: String,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra quadrature refinement levels.
    #[arg(long)]
    refine: Option<u32>,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Film transmittance spectra for tilted plane waves.
    Spectrum(Common),
    /// Fringe visibility versus telescope semiaperture.
    Visibility(Common),
    /// Output intensity and polarization maps.
    Polmap(Common),
    /// Monomode post-selected channel report.
    Channel(Common),
    /// Checks that the film and telescope are isotropic at normal incidence.
    ValidateFilm(Common),
}

fn exit_code(e: &ScenarioError) -> u8 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

fn configure_threads(verbose: bool) -> Result<(), ScenarioError> {
    let Ok(raw) = std::env::var("PBS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        ScenarioError::Config(format!(
            "PBS_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ScenarioError::Config(e.to_string()))?;
    if verbose {
        eprintln!("using {n} worker threads");
    }
    Ok(())
}

fn load(common: &Common) -> Result<ScenarioConfig, ScenarioError> {
    let mut cfg = ScenarioConfig::load(&common.config)?;
    if let Some(r) = common.refine {
        cfg.quadrature.refine = r;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    if common.verbose {
        eprintln!("configuration '{}' loaded", common.config);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, ScenarioError> {
    let (common, kind) = match &cli.command {
        Command::Spectrum(c) => (c, Some(ScenarioKind::Spectrum)),
        Command::Visibility(c) => (c, Some(ScenarioKind::VisibilitySweep)),
        Command::Polmap(c) => (c, Some(ScenarioKind::Polmap)),
        Command::Channel(c) => (c, Some(ScenarioKind::Channel)),
        Command::ValidateFilm(c) => (c, None),
    };
    configure_threads(common.verbose)?;
    let cfg = load(common)?;
    match kind {
        Some(kind) => {
            if common.verbose && kind != cfg.kind {
                eprintln!(
                    "note: configuration kind {:?} ignored, running {kind:?}",
                    cfg.kind
                );
            }
            let files = scenarios::run_to_dir(&cfg, kind, &cfg.output_dir)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(true)
        }
        None => {
            let checks = scenarios::validate_film(&cfg)?;
            let mut all = true;
            for c in &checks {
                let status = if c.passed() { "PASS" } else { "FAIL" };
                all &= c.passed();
                println!(
                    "{status} lambda={} nm  F(0) deviation={}  T(0,0) deviation={}",
                    c.wavelength_nm,
                    scenarios::fmt_num(c.film_deviation),
                    scenarios::fmt_num(c.telescope_deviation)
                );
            }
            println!("{}", if all { "PASS" } else { "FAIL" });
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
