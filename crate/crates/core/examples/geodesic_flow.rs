//! Follows one geodesic on the surface and on the universal cover.

use num_complex::Complex64;

use funnel_scattering::dynamics::{flow, flow_unreduced, FlowState};
use funnel_scattering::geometry::{Model, SchottkySurface};

fn main() -> funnel_scattering::Result<()> {
    let s = SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane)?;
    let start = FlowState::new(Complex64::new(0.05, 0.4), 1.1);
    for t in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let on_surface = flow(&s, &start, t)?;
        let on_cover = flow_unreduced(&start, t);
        println!(
            "t = {t}: surface {:.6}, cover {:.6}, unfolded back {:.6}",
            on_surface.position,
            on_cover.position,
            on_surface.word_history.inverse().apply(on_cover.position)
        );
    }
    Ok(())
}
