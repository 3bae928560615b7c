use funnel_scattering::continuation::{
    find_resonances, leading_real_zero, nodes_for_height, SearchBox, TransferDiscretization,
};
use funnel_scattering::geometry::{Model, SchottkySurface};

fn main() -> funnel_scattering::Result<()> {
    let s = SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane)?;
    let bx = SearchBox::new(-0.9, 0.5, -0.1, 4.0);
    let disc = TransferDiscretization::new(&s, nodes_for_height(bx.im_max))?;
    let set = find_resonances(&bx, &disc)?;
    for r in &set.resonances {
        println!("lambda = {:.8}  multiplicity {}", r.lambda, r.multiplicity);
    }
    println!("leading real zero {:.12}", leading_real_zero(&disc, 0.0, 1.0)?);
    set.write_csv(std::io::stdout().lock())
}
