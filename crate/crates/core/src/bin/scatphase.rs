use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use funnel_scattering::cli::{load_checked, run, Command, RunConfig, OUTPUT_ENV};
use funnel_scattering::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Validate,
    Spectrum,
    Dimension,
    Zeta,
    Resonances,
    Phase,
    Weyl,
    BreitWigner,
    Escape,
    Report,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Validate => Command::Validate,
            Cmd::Spectrum => Command::Spectrum,
            Cmd::Dimension => Command::Dimension,
            Cmd::Zeta => Command::Zeta,
            Cmd::Resonances => Command::Resonances,
            Cmd::Phase => Command::Phase,
            Cmd::Weyl => Command::Weyl,
            Cmd::BreitWigner => Command::BreitWigner,
            Cmd::Escape => Command::Escape,
            Cmd::Report => Command::Report,
        }
    }
}

/// Scattering phase, zeta function and resonances of funnel surfaces.
#[derive(Debug, Parser)]
#[command(name = "scatphase", version)]
struct Args {
    /// What to compute.
    #[arg(value_enum)]
    command: Cmd,
    /// Surface description (TOML or JSON).
    surface: Option<PathBuf>,
    /// Run configuration (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the environment and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Length-spectrum cutoff.
    #[arg(long)]
    cutoff: Option<f64>,
}

fn resolve(args: &Args) -> anyhow::Result<RunConfig> {
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    config.command = args.command.into();
    if let Some(s) = &args.surface {
        config.surface = s.clone();
    }
    if config.surface.as_os_str().is_empty() {
        return Err(Error::Definition("no surface file given".into()).into());
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    } else if let Some(env) = std::env::var_os(OUTPUT_ENV) {
        config.output_dir = env.into();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(t) = args.threads {
        config.threads = t;
    }
    if let Some(c) = args.cutoff {
        config.spectrum.cutoff = c;
    }
    Ok(config)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map_or(4, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = resolve(&args).and_then(|config| {
        if let Ok((_, report)) = load_checked(&config.surface) {
            if !report.passed() {
                eprintln!("{}", serde_json::to_string_pretty(&report)?);
            }
        }
        let outcome = run(&config)?;
        println!("{}", outcome.output_dir.join("manifest.json").display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
