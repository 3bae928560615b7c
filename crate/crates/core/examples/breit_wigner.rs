use funnel_scattering::continuation::{find_resonances, nodes_for_height, TransferDiscretization};
use funnel_scattering::dimension::delta_refinement;
use funnel_scattering::geometry::{Model, SchottkySurface};
use funnel_scattering::phase::{breit_wigner_box, breit_wigner_check, PhaseModel};
use funnel_scattering::spectrum::{enumerate_geodesics, Orientation};
use funnel_scattering::zeta::ZetaEvaluator;

fn main() -> funnel_scattering::Result<()> {
    let s = SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane)?;
    let delta = delta_refinement(&s, 8)?.delta;
    let spec = enumerate_geodesics(&s, 70.0, Orientation::Unoriented)?;
    let ev = ZetaEvaluator::with_tolerance(&spec, delta, 1e-7)?.with_class_weight(spec.oriented_weight());
    let model = PhaseModel::series(&s, ev)?;
    let t = 8.0;
    let bx = breit_wigner_box(t, 1.0);
    let disc = TransferDiscretization::new(&s, nodes_for_height(bx.im_max))?;
    let res = find_resonances(&bx, &disc)?;
    let r = breit_wigner_check(&model, (t - 1.0, t + 1.0), &res, 1.0, 21)?;
    println!("{} resonances near z = {t}", r.resonances_in_disc);
    for row in r.samples.iter().step_by(5) {
        println!(
            "z = {:.2}  s' = {:.6}  Lorentzians {:.6}  residual {:.3e}",
            row.z, row.ds_dz, row.resonance_sum, row.residual_parity
        );
    }
    Ok(())
}
