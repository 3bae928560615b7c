//! Scattering phase on a uniform grid and its Weyl fit.

use funnel_scattering::dimension::delta_refinement;
use funnel_scattering::geometry::{Model, SchottkySurface};
use funnel_scattering::phase::{phase_table, weyl_fit, PhaseModel};
use funnel_scattering::spectrum::{enumerate_geodesics, Orientation};
use funnel_scattering::zeta::ZetaEvaluator;

fn main() -> funnel_scattering::Result<()> {
    let s = SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane)?;
    let delta = delta_refinement(&s, 8)?.delta;
    let spec = enumerate_geodesics(&s, 70.0, Orientation::Unoriented)?;
    let ev = ZetaEvaluator::with_tolerance(&spec, delta, 1e-7)?.with_class_weight(spec.oriented_weight());
    let model = PhaseModel::series(&s, ev)?;
    let zs: Vec<f64> = (0..=500).map(|i| i as f64 * 0.1).collect();
    let table = phase_table(&model, &zs)?;
    for row in table.iter().step_by(50) {
        println!("z = {:>5.1}  s = {:>12.6}  s' = {:>10.6}", row.z, row.s, row.ds_dz);
    }
    let fit = weyl_fit(&table, delta, (5.0, 50.0))?;
    println!(
        "leading {:.6} (expected {:.6}), remainder exponents {:.3} / {:.3}",
        fit.leading_coefficient,
        s.core_volume() / (4.0 * std::f64::consts::PI),
        fit.remainder_exponent,
        fit.integrated_remainder_exponent
    );
    Ok(())
}
