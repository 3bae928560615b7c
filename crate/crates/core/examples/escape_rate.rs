use funnel_scattering::dynamics::{lambda_max_estimate, time_grid, trapped_fraction};
use funnel_scattering::geometry::{Model, SchottkySurface};

fn main() -> funnel_scattering::Result<()> {
    let s = SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane)?;
    let est = trapped_fraction(&s, &time_grid(10.0, 0.5), 50_000, 7)?;
    for (t, f) in est.times.iter().zip(&est.trapped_fractions).step_by(4) {
        println!("t = {t:>4.1}  trapped {f:.5}");
    }
    let lambda = lambda_max_estimate(&s, 20.0, 500, 7)?;
    println!(
        "escape rate {:.4} [{:.4}, {:.4}], lambda_max {:.6}, 1 + rate/lambda = {:.4}",
        est.fitted_rate,
        est.confidence_interval.0,
        est.confidence_interval.1,
        lambda,
        1.0 + est.fitted_rate / lambda
    );
    Ok(())
}
