//! Euler product against the transfer-operator determinant on the critical line.

use num_complex::Complex64;

use funnel_scattering::continuation::{nodes_for_height, TransferDiscretization};
use funnel_scattering::dimension::delta_refinement;
use funnel_scattering::geometry::{Model, SchottkySurface};
use funnel_scattering::spectrum::{enumerate_geodesics, Orientation};
use funnel_scattering::zeta::{zeta_growth, ZetaEvaluator};

fn main() -> funnel_scattering::Result<()> {
    let s = SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane)?;
    let delta = delta_refinement(&s, 8)?.delta;
    let spec = enumerate_geodesics(&s, 70.0, Orientation::Unoriented)?;
    let ev = ZetaEvaluator::with_tolerance(&spec, delta, 1e-6)?.with_class_weight(spec.oriented_weight());
    let disc = TransferDiscretization::new(&s, nodes_for_height(10.0))?;
    for z in [1.0, 4.0, 10.0] {
        let p = Complex64::new(0.5, z);
        let e = ev.value(p)?;
        println!(
            "s = {p}: euler {:.10} (tail {:.1e}), determinant {:.10}",
            e.value,
            e.tail_bound,
            disc.determinant(p)
        );
    }
    let g = zeta_growth(&ev, &[1.0], (5.0, 30.0), 101)?;
    println!(
        "log|Z(1+iz)| exponent {:.4}, |Arg Z| exponent {:.4}, bound {:.4}",
        g.log_abs[0].1.exponent, g.argument.exponent, g.exponent_bound
    );
    Ok(())
}
