use funnel_scattering::dimension::{default_s_grid, delta_poincare, delta_refinement};
use funnel_scattering::geometry::{Model, SchottkySurface};

fn main() -> funnel_scattering::Result<()> {
    for l in [4.0, 7.0, 10.0] {
        let s = SchottkySurface::symmetric(2, l, Model::UpperHalfPlane)?;
        let a = delta_poincare(&s, 12, &default_s_grid())?;
        let b = delta_refinement(&s, 8)?;
        println!("l = {l}: poincare {:.10}, refinement {:.10}", a.delta, b.delta);
    }
    Ok(())
}
