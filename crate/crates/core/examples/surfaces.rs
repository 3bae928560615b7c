//! Builds the bundled surfaces and prints their validation reports.

use std::path::Path;

use funnel_scattering::geometry::{load_surface, validate_schottky, Model, SchottkySurface};

fn main() -> funnel_scattering::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    for name in ["three_funnel.toml", "cylinder.toml", "pants_678.toml", "rank3.toml", "explicit_rank2.json"] {
        let s = load_surface(&data.join(name))?;
        println!(
            "{name}: rank {}, chi {}, Vol {:.6}, funnels {:?}",
            s.rank(),
            s.euler_characteristic,
            s.core_volume(),
            s.funnel_lengths()
        );
    }

    // too short: the isometric circles overlap
    let bad = SchottkySurface::isometric_circle_family(2, 1.0, Model::UpperHalfPlane)?;
    for check in validate_schottky(&bad).failures() {
        println!("failed check {}: {}", check.name, check.detail);
    }
    Ok(())
}
