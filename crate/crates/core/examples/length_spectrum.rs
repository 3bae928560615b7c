use funnel_scattering::geometry::{format_word, Model, SchottkySurface};
use funnel_scattering::spectrum::{counting_exponent, enumerate_geodesics, Orientation};

fn main() -> funnel_scattering::Result<()> {
    let s = SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane)?;
    let spec = enumerate_geodesics(&s, 60.0, Orientation::Unoriented)?;
    println!("{} primitive classes with length <= {}", spec.entries.len(), spec.cutoff);
    for g in spec.entries.iter().take(8) {
        println!("  {:>10}  {:.12}", format_word(&g.word), g.length);
    }
    let fit = counting_exponent(&spec)?;
    println!("counting exponent {:.4} +- {:.4}", fit.value, fit.stderr);
    Ok(())
}
