//! Drives the command pipeline from code, as the binary does.

use std::path::Path;

use funnel_scattering::cli::{run, Command, RunConfig};

fn main() -> funnel_scattering::Result<()> {
    let out = std::env::temp_dir().join("scatphase-example");
    let config = RunConfig {
        surface: Path::new(env!("CARGO_MANIFEST_DIR")).join("data/three_funnel.toml"),
        command: Command::Dimension,
        output_dir: out,
        ..RunConfig::default()
    };
    let outcome = run(&config)?;
    for a in &outcome.manifest.artifacts {
        println!("{}  {}", a.sha256, outcome.output_dir.join(&a.file).display());
    }
    println!("{}", config.to_canonical_json());
    Ok(())
}
