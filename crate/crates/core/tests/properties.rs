use std::collections::BTreeSet;

use num_complex::Complex64;
use proptest::prelude::*;

use funnel_scattering::continuation::{find_resonances, SearchBox, TransferDiscretization};
use funnel_scattering::dimension::{default_s_grid, delta_poincare, delta_refinement};
use funnel_scattering::geometry::{
    translation_length, validate_schottky, Letter, Model, MoebiusMap, SchottkySurface,
};
use funnel_scattering::phase::{xi_argument_route, xi_exact_series};
use funnel_scattering::spectrum::{
    canonical, enumerate_geodesics, inverse_word, is_cyclically_reduced, Orientation,
};
use funnel_scattering::zeta::ZetaEvaluator;

const DELTA_7: f64 = 0.197_179_570_55;

fn three_funnel() -> SchottkySurface {
    SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane).unwrap()
}

fn sl2() -> impl Strategy<Value = MoebiusMap> {
    (0.3f64..2.0, any::<bool>(), -2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, neg, b, c)| {
        let a = if neg { -a } else { a };
        MoebiusMap::new(a, b, c, (1.0 + b * c) / a).unwrap()
    })
}

fn hyperbolic() -> impl Strategy<Value = MoebiusMap> {
    (0.5f64..4.0, sl2()).prop_map(|(l, h)| {
        h.compose(&MoebiusMap::dilation(l.exp())).compose(&h.inverse())
    })
}

fn close(a: &MoebiusMap, b: &MoebiusMap, tol: f64) -> bool {
    let s = [a.a, a.b, a.c, a.d];
    let t = [b.a, b.b, b.c, b.d];
    let scale = s.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let same = s.iter().zip(&t).all(|(x, y)| (x - y).abs() <= tol * scale);
    let flipped = s.iter().zip(&t).all(|(x, y)| (x + y).abs() <= tol * scale);
    same || flipped
}

/// All reduced words over `2 * rank` letters with lengths `1..=max_len`.
fn reduced_words(rank: usize, max_len: usize) -> Vec<Vec<Letter>> {
    let letters = (2 * rank) as Letter;
    let mut out = Vec::new();
    let mut level: Vec<Vec<Letter>> = (0..letters).map(|l| vec![l]).collect();
    for _ in 0..max_len {
        out.extend(level.iter().cloned());
        let mut next = Vec::new();
        for w in &level {
            let last = *w.last().unwrap();
            for l in 0..letters {
                if l != (last ^ 1) {
                    let mut v = w.clone();
                    v.push(l);
                    next.push(v);
                }
            }
        }
        level = next;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn composition_is_associative(f in sl2(), g in sl2(), h in sl2()) {
        let left = f.compose(&g).compose(&h);
        let right = f.compose(&g.compose(&h));
        prop_assert!(close(&left, &right, 1e-12));
    }

    #[test]
    fn translation_length_is_a_class_function(g in hyperbolic(), h in sl2()) {
        let l = translation_length(&g).unwrap();
        let li = translation_length(&g.inverse()).unwrap();
        let lc = translation_length(&h.compose(&g).compose(&h.inverse())).unwrap();
        prop_assert!((l - li).abs() <= 1e-12 * l.max(1.0));
        prop_assert!((l - lc).abs() <= 1e-12 * l.max(1.0), "{l} vs {lc}");
    }

    #[test]
    fn translation_length_of_powers(l in 0.3f64..3.0, n in 1i32..=8) {
        let g = MoebiusMap::translation_along_unit_circle(l);
        let ln = translation_length(&g.power(n)).unwrap();
        prop_assert!((ln - n as f64 * l).abs() < 1e-10, "{ln} vs {}", n as f64 * l);
    }

    #[test]
    fn word_length_invariant_under_rotation_and_inversion(
        word in proptest::collection::vec(0u8..4, 1..10),
        shift in 0usize..10,
    ) {
        let s = three_funnel();
        let mut w: Vec<Letter> = Vec::new();
        for l in word {
            if w.last().map_or(true, |&p| p != (l ^ 1)) {
                w.push(l);
            }
        }
        prop_assume!(is_cyclically_reduced(&w));
        let mut r = w.clone();
        r.rotate_left(shift % w.len());
        let t = s.word_map(&w).trace().abs();
        prop_assert!((t - s.word_map(&r).trace().abs()).abs() <= 1e-12 * t);
        prop_assert!((t - s.word_map(&inverse_word(&w)).trace().abs()).abs() <= 1e-12 * t);
    }
}

#[test]
fn reduced_words_are_hyperbolic() {
    for s in [
        three_funnel(),
        SchottkySurface::pants([3.0, 4.0, 6.0], Model::UpperHalfPlane).unwrap(),
    ] {
        assert!(validate_schottky(&s).passed());
        for w in reduced_words(2, 6) {
            assert!(s.word_map(&w).is_hyperbolic(), "{w:?}");
        }
    }
}

#[test]
fn canonicalization_is_idempotent() {
    for w in reduced_words(2, 8) {
        for o in [Orientation::Oriented, Orientation::Unoriented] {
            let c = canonical(&w, o);
            assert_eq!(canonical(&c, o), c);
        }
    }
}

#[test]
fn equal_lengths_are_all_kept() {
    let spec = enumerate_geodesics(&three_funnel(), 30.0, Orientation::Unoriented).unwrap();
    let shortest = spec.min_length().unwrap();
    let ties: BTreeSet<Vec<Letter>> = spec
        .entries
        .iter()
        .filter(|g| (g.length - shortest).abs() < 1e-9)
        .map(|g| g.word.clone())
        .collect();
    // the three funnel boundaries
    assert_eq!(ties.len(), 3);
}

#[test]
fn dimension_is_in_unit_interval_and_conjugation_invariant() {
    let s = SchottkySurface::pants([5.0, 6.0, 7.0], Model::UpperHalfPlane).unwrap();
    let d = delta_refinement(&s, 8).unwrap().delta;
    assert!((0.0..1.0).contains(&d));
    let p = delta_poincare(&s, 12, &default_s_grid()).unwrap().delta;
    assert!((0.0..1.0).contains(&p));
    let h = MoebiusMap::new(1.0, 0.3, 0.0, 1.0).unwrap();
    let t = s.conjugated(&h).unwrap();
    assert!(validate_schottky(&t).passed());
    let dc = delta_refinement(&t, 8).unwrap().delta;
    assert!((d - dc).abs() < 1e-6, "{d} vs {dc}");
}

#[test]
fn dimension_decreases_with_funnel_length() {
    let deltas: Vec<f64> = [5.0, 7.0, 9.0]
        .iter()
        .map(|&l| {
            let s = SchottkySurface::symmetric(2, l, Model::UpperHalfPlane).unwrap();
            delta_refinement(&s, 8).unwrap().delta
        })
        .collect();
    assert!(deltas[0] > deltas[1] && deltas[1] > deltas[2], "{deltas:?}");
}

#[test]
fn determinant_converges_under_mesh_doubling() {
    let s = three_funnel();
    let points = [
        Complex64::new(0.5, 2.0),
        Complex64::new(0.9, 7.5),
        Complex64::new(0.2, 0.3),
        Complex64::new(-0.4, 4.0),
        Complex64::new(-0.8, 1.5),
        Complex64::new(1.3, 9.0),
        Complex64::new(0.0, 6.0),
        Complex64::new(0.6, 3.3),
        Complex64::new(-0.2, 8.1),
        Complex64::new(0.35, 5.2),
    ];
    let discs: Vec<TransferDiscretization> = [4, 8, 16, 32]
        .iter()
        .map(|&n| TransferDiscretization::new(&s, n).unwrap())
        .collect();
    for p in points {
        let vals: Vec<Complex64> = discs.iter().map(|d| d.raw_determinant(p)).collect();
        let floor = 1e-12 * vals[3].norm().max(1.0);
        let diffs: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        for w in diffs.windows(2) {
            assert!(w[1] <= w[0] / 10.0 || w[1] < floor, "{p}: {diffs:?}");
        }
    }
}

#[test]
fn zeros_are_stable_under_mesh_doubling() {
    let s = three_funnel();
    let bx = SearchBox::new(-0.9, 0.45, -3.0, 3.0);
    let a = find_resonances(&bx, &TransferDiscretization::new(&s, 12).unwrap()).unwrap();
    let b = find_resonances(&bx, &TransferDiscretization::new(&s, 24).unwrap()).unwrap();
    assert!(!a.resonances.is_empty());
    assert_eq!(a.resonances.len(), b.resonances.len());
    for r in &a.resonances {
        let d = b
            .resonances
            .iter()
            .map(|q| (q.lambda - r.lambda).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(d < 1e-8, "{}: moved by {d}", r.lambda);
    }
}

#[test]
fn zeros_right_of_the_critical_line_are_real() {
    let s = SchottkySurface::symmetric(2, 2.0, Model::UpperHalfPlane).unwrap();
    assert!(validate_schottky(&s).passed());
    let disc = TransferDiscretization::new(&s, 16).unwrap();
    let set = find_resonances(&SearchBox::new(0.5, 1.2, -2.0, 2.0), &disc).unwrap();
    assert!(!set.resonances.is_empty());
    for r in &set.resonances {
        assert!(r.lambda.im.abs() < 1e-8, "{}", r.lambda);
    }
}

#[test]
fn zero_count_in_symmetric_box_is_even_off_the_axis() {
    let s = three_funnel();
    let disc = TransferDiscretization::new(&s, 16).unwrap();
    let set = find_resonances(&SearchBox::new(-1.2, 0.5, -3.0, 3.0), &disc).unwrap();
    let off_axis: u32 = set
        .resonances
        .iter()
        .filter(|r| r.lambda.im.abs() > 1e-8)
        .map(|r| r.multiplicity)
        .sum();
    assert!(off_axis > 0);
    assert_eq!(off_axis % 2, 0);
}

#[test]
fn xi_routes_agree() {
    let s = three_funnel();
    let spec = enumerate_geodesics(&s, 70.0, Orientation::Unoriented).unwrap();
    let ev = ZetaEvaluator::with_tolerance(&spec, DELTA_7, 1e-7)
        .unwrap()
        .with_class_weight(spec.oriented_weight());
    let disc = TransferDiscretization::new(&s, 20).unwrap();
    for z in [1.0, 4.0, 9.5] {
        let a = xi_exact_series(z, &ev, s.euler_characteristic).unwrap().xi;
        let b = xi_argument_route(z, &disc, s.euler_characteristic, 0).unwrap().xi;
        assert!((a - b).abs() < 1e-5, "z = {z}: {a} vs {b}");
    }
}
