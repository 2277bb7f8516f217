//! `ambstab`: simulate, verify and sweep the bearing controller from the command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 integration
//! diverged, 4 a certificate failed.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ambstab::config::{Check, Settings, PRESETS};
use ambstab::saturation::SaturationKind;
use ambstab::sim::{run_scenario, ControllerKind, InitialState, SimConfig};
use ambstab::sweep::summarize;
use ambstab::verify::{
    certify_equivalence, certify_pd, certify_trajectory, certify_unique_equilibrium, certify_vdot_bound, Certificate,
    Drive, EquivalenceSetup, StateBox,
};
use ambstab::Error;
use clap::{Args, Parser, Subcommand};

use output::Manifest;

#[derive(Parser)]
#[command(name = "ambstab", version, about = "Saturated magnetic-bearing stabilizer: simulation and certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trajectory as CSV.
    Simulate(RunArgs),
    /// Run the certificate suite for the configured gains.
    Verify(RunArgs),
    /// Run every cell of the `sweep.*` grid and write one summary row per run.
    Sweep(RunArgs),
    /// List the compiled presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// Compiled preset to start from.
    #[arg(long)]
    preset: Option<String>,
    /// Flat `section.key = value` file applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "ambstab-out")]
    out: PathBuf,
    /// Sampler seed (overrides `run.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Io(String),
    Config(String),
    Diverged(String),
    Certificate,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Diverged(_) => 3,
            Failure::Certificate => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } => Failure::Diverged(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Verify(a) => verify(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Io(m) => eprintln!("error: {m}"),
                Failure::Config(m) => eprintln!("configuration error: {m}"),
                Failure::Diverged(m) => eprintln!("{m}"),
                Failure::Certificate => eprintln!("certificate failure"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn resolve(args: &RunArgs) -> Result<Settings, Failure> {
    let base = match &args.preset {
        Some(name) => Settings::from_preset(name)?,
        None => Settings::default(),
    };
    let mut s = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            Settings::parse_with_base(&text, base)?
        }
        None => base,
    };
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    eprintln!("# resolved configuration");
    eprint!("{}", s.render());
    Ok(s)
}

fn prepare(args: &RunArgs, command: &str, settings: &Settings) -> Result<Manifest, Failure> {
    fs::create_dir_all(&args.out)?;
    Ok(Manifest { command: command.to_string(), seed: settings.seed, config: settings.render() })
}

fn finish(manifest: &Manifest, dir: &Path, data: PathBuf) -> Result<(), Failure> {
    let m = manifest.write(dir, std::slice::from_ref(&data))?;
    println!("wrote {} ({})", data.display(), m.display());
    Ok(())
}

fn certificate_suite(settings: &Settings, cfg: &SimConfig, checks: &[Check]) -> Result<Vec<Certificate>, Failure> {
    let spec = cfg.saturation;
    let gains = cfg.gains;
    let region = StateBox::symmetric(settings.verify.half_width);
    let n = settings.verify.samples;
    let seed = settings.seed;
    let mut out = Vec::new();
    for check in checks {
        let cert = match check {
            Check::Pd => certify_pd(spec, gains, region, n, seed)?,
            Check::Vdot => certify_vdot_bound(spec, gains, region, n, seed)?,
            Check::Equilibrium => {
                let half_width = settings.verify.half_width.max(f64::MIN_POSITIVE);
                certify_unique_equilibrium(spec, gains, half_width, n.max(2))?
            }
            Check::Trajectory => certify_trajectory(&run_scenario(cfg)?, gains, spec)?,
            Check::Equivalence => {
                let InitialState::Full(initial) = cfg.initial else {
                    return Err(Failure::Config(
                        "config error in `verify.checks`: equivalence needs `model = full`".into(),
                    ));
                };
                let drive = match cfg.controller {
                    ControllerKind::OpenLoop => Drive::OpenLoop(cfg.open_loop_input),
                    _ => Drive::ClosedLoop { saturation: spec, gains },
                };
                certify_equivalence(&EquivalenceSetup {
                    params: cfg.params,
                    initial,
                    drive,
                    dt: cfg.dt,
                    horizon: settings.verify.equivalence_horizon.unwrap_or(cfg.t_end),
                    reduced_params: None,
                })?
            }
        };
        println!("{cert}");
        out.push(cert);
    }
    Ok(out)
}

fn simulate(args: &RunArgs) -> Result<(), Failure> {
    let settings = resolve(args)?;
    let cfg = settings.sim_config()?;
    // smooth-saturation gains are only reported as stabilizing after the decrease estimate is certified
    if cfg.saturation.kind == SaturationKind::SmoothAtan && cfg.controller != ControllerKind::OpenLoop {
        let certs = certificate_suite(&settings, &cfg, &[Check::Vdot])?;
        if certs.iter().any(|c| !c.pass) {
            eprintln!("decrease estimate not certified for these smooth-saturation gains; run blocked");
            return Err(Failure::Certificate);
        }
    }
    let manifest = prepare(args, "simulate", &settings)?;
    let traj = run_scenario(&cfg)?;
    let data = manifest.data_path(&args.out);
    output::write_trajectory(&data, &traj)?;
    println!("{}", output::summary_line(&summarize(&traj)?));
    finish(&manifest, &args.out, data)
}

fn verify(args: &RunArgs) -> Result<(), Failure> {
    let settings = resolve(args)?;
    let cfg = settings.sim_config()?;
    let manifest = prepare(args, "verify", &settings)?;
    let certs = certificate_suite(&settings, &cfg, &settings.checks())?;
    let data = manifest.data_path(&args.out);
    output::write_certificates(&data, &certs)?;
    finish(&manifest, &args.out, data)?;
    if certs.iter().all(|c| c.pass) {
        println!("all {} certificates passed", certs.len());
        Ok(())
    } else {
        Err(Failure::Certificate)
    }
}

fn sweep(args: &RunArgs) -> Result<(), Failure> {
    let settings = resolve(args)?;
    let mut base = settings.clone();
    base.sweep.clear();
    // the base must parse; individual cells may still fail and are reported per row
    if settings.sweep.is_empty() {
        base.sim_config()?;
    }
    let manifest = prepare(args, "sweep", &settings)?;
    let rows = ambstab::sweep::run_sweep(&settings);
    let axes: Vec<String> = settings.sweep.iter().map(|(k, _)| k.clone()).collect();
    for r in &rows {
        let cell = r.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
        println!("[{}] {cell} {}", r.index, output::summary_line(&r.summary));
    }
    let data = manifest.data_path(&args.out);
    output::write_sweep(&data, &axes, &rows)?;
    finish(&manifest, &args.out, data)
}
