//! Hausdorff dimension δ of the limit set.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{inverse_letter, Disk, Letter, MoebiusMap, SchottkySurface};
use crate::numerics::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionMethod {
    PoincareExponent,
    RefinementEigenvalue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub delta: f64,
    pub method: DimensionMethod,
    pub uncertainty: f64,
    /// Per-level estimates before extrapolation, `(level, δ_level)`.
    pub diagnostics: Vec<(usize, f64)>,
}

pub const DEFAULT_BISECTION_TOL: f64 = 1e-10;
pub const DEFAULT_REFINEMENT_DEPTH: usize = 8;
pub const DEFAULT_POINCARE_CUTOFF: usize = 12;

pub fn default_s_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 * 0.05).collect()
}

/// Displacements `d(m, w·m)` for all reduced words of the last `keep` lengths
/// up to `cutoff`, grouped by word length.
fn shells(s: &SchottkySurface, cutoff: usize, keep: usize, base: Complex64) -> Vec<Vec<f64>> {
    // conjugate so that the base point becomes i
    let h = MoebiusMap {
        a: base.im.sqrt(),
        b: base.re / base.im.sqrt(),
        c: 0.0,
        d: 1.0 / base.im.sqrt(),
    };
    let hinv = h.inverse();
    let maps: Vec<MoebiusMap> = s
        .letter_maps()
        .iter()
        .map(|g| hinv.compose(g).compose(&h))
        .collect();
    let n_letters = maps.len() as Letter;
    let first_kept = cutoff + 1 - keep.min(cutoff);

    fn walk(
        maps: &[MoebiusMap],
        g: [f64; 4],
        last: Letter,
        len: usize,
        cutoff: usize,
        first_kept: usize,
        out: &mut [Vec<f64>],
    ) {
        if len >= first_kept {
            let f2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3];
            out[len - first_kept].push((0.5 * f2).max(1.0).acosh());
        }
        if len == cutoff {
            return;
        }
        for (b, m) in maps.iter().enumerate() {
            if b as Letter == inverse_letter(last) {
                continue;
            }
            let p = [
                g[0] * m.a + g[1] * m.c,
                g[0] * m.b + g[1] * m.d,
                g[2] * m.a + g[3] * m.c,
                g[2] * m.b + g[3] * m.d,
            ];
            walk(maps, p, b as Letter, len + 1, cutoff, first_kept, out);
        }
    }

    let n_shells = cutoff + 1 - first_kept;
    let per_root: Vec<Vec<Vec<f64>>> = (0..n_letters)
        .into_par_iter()
        .map(|a| {
            let mut out = vec![Vec::new(); n_shells];
            let m = maps[a as usize];
            walk(&maps, [m.a, m.b, m.c, m.d], a, 1, cutoff, first_kept, &mut out);
            out
        })
        .collect();
    let mut merged = vec![Vec::new(); n_shells];
    for root in per_root {
        for (k, v) in root.into_iter().enumerate() {
            merged[k].extend(v);
        }
    }
    merged
}

fn shell_sum(shell: &[f64], s: f64) -> f64 {
    let terms: Vec<f64> = shell.par_iter().map(|d| (-s * d).exp()).collect();
    pairwise_sum(&terms)
}

/// Growth rate `log S_k(s) - log S_{k-1}(s)` of consecutive shell sums.
fn growth_rate(prev: &[f64], cur: &[f64], s: f64) -> f64 {
    shell_sum(cur, s).ln() - shell_sum(prev, s).ln()
}

fn rate_zero(prev: &[f64], cur: &[f64], grid: &[f64], tol: f64) -> Result<f64> {
    let rates: Vec<f64> = grid.iter().map(|&s| growth_rate(prev, cur, s)).collect();
    for (k, r) in rates.iter().enumerate() {
        if *r == 0.0 {
            return Ok(grid[k]);
        }
        if k + 1 < grid.len() && r.signum() != rates[k + 1].signum() && rates[k + 1] != 0.0 {
            return crate::numerics::bisect(|s| growth_rate(prev, cur, s), grid[k], grid[k + 1], tol);
        }
    }
    Err(Error::Bracketing(format!(
        "growth rate does not change sign on the grid; rates {:?} at s = {:?}",
        rates, grid
    )))
}

/// Aitken extrapolation of a geometrically converging sequence, falling back
/// to the last term when the differences do not contract.
fn aitken(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let last = x[n - 1];
    if n < 3 {
        let unc = if n == 2 { (x[1] - x[0]).abs() } else { f64::NAN };
        return (last, unc);
    }
    let d1 = x[n - 2] - x[n - 3];
    let d2 = x[n - 1] - x[n - 2];
    if d1 == 0.0 || d2 == 0.0 {
        return (last, d2.abs());
    }
    let q = d2 / d1;
    if !(q.abs() < 0.9) {
        return (last, d2.abs());
    }
    let extrapolated = last + d2 * q / (1.0 - q);
    (extrapolated, (extrapolated - last).abs().max(d2.abs() * q.abs()))
}

/// δ as the critical exponent of the Poincaré series based at the model center.
pub fn delta_poincare(
    s: &SchottkySurface,
    word_cutoff: usize,
    s_grid: &[f64],
) -> Result<DimensionEstimate> {
    let base = s.model.center();
    delta_poincare_at(s, word_cutoff, s_grid, base)
}

/// Same as [`delta_poincare`] with an explicit base point in the upper half-plane.
pub fn delta_poincare_at(
    s: &SchottkySurface,
    word_cutoff: usize,
    s_grid: &[f64],
    base: Complex64,
) -> Result<DimensionEstimate> {
    if word_cutoff < 8 {
        return Err(Error::Definition("word cutoff must be at least 8".into()));
    }
    if !(base.im > 0.0) {
        return Err(Error::Definition("base point must lie in the upper half-plane".into()));
    }
    let keep = 5;
    let sh = shells(s, word_cutoff, keep, base);
    let mut estimates = Vec::new();
    for k in 1..sh.len() {
        let d = rate_zero(&sh[k - 1], &sh[k], s_grid, DEFAULT_BISECTION_TOL)?;
        estimates.push((word_cutoff + 1 - keep + k, d));
    }
    let seq: Vec<f64> = estimates.iter().map(|e| e.1).collect();
    let (delta, unc) = if s.rank() == 1 { (seq[seq.len() - 1], 0.0) } else { aitken(&seq) };
    let grid_step = s_grid
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(f64::INFINITY, f64::min);
    let uncertainty = if s.rank() == 1 {
        grid_step.min(1.0) * 1e-6 + DEFAULT_BISECTION_TOL
    } else {
        unc.max(DEFAULT_BISECTION_TOL)
    };
    Ok(DimensionEstimate {
        delta: delta.max(0.0),
        method: DimensionMethod::PoincareExponent,
        uncertainty,
        diagnostics: estimates,
    })
}

/// Cylinder sets of a fixed level: disks `D_w` for reduced words `w`.
struct Level {
    words: Vec<Vec<Letter>>,
    disks: Vec<Disk>,
}

fn word_index(word: &[Letter], n_letters: usize) -> usize {
    let base = n_letters - 1;
    let mut idx = word[0] as usize;
    for j in 1..word.len() {
        let inv = inverse_letter(word[j - 1]) as usize;
        let b = word[j] as usize;
        let c = if b < inv { b } else { b - 1 };
        idx = idx * base + c;
    }
    idx
}

fn build_levels(s: &SchottkySurface, depth: usize) -> Result<Vec<Level>> {
    let n_letters = 2 * s.rank();
    let maps = s.letter_maps();
    let mut levels = vec![Level {
        words: (0..n_letters as Letter).map(|a| vec![a]).collect(),
        disks: (0..n_letters as Letter).map(|a| s.disks.letter_disk(a)).collect(),
    }];
    for _ in 1..depth {
        let prev = levels.last().unwrap();
        let mut words = Vec::with_capacity(prev.words.len() * (n_letters - 1));
        let mut disks = Vec::with_capacity(words.capacity());
        // children in index order
        let mut ordered = Vec::with_capacity(words.capacity());
        for w in prev.words.iter() {
            for b in 0..n_letters as Letter {
                if b != inverse_letter(*w.last().unwrap()) {
                    let mut v = w.clone();
                    v.push(b);
                    ordered.push(v);
                }
            }
        }
        for w in ordered {
            let tail = word_index(&w[1..], n_letters);
            let d = prev.disks[tail].image(&maps[w[0] as usize])?;
            disks.push(d);
            words.push(w);
        }
        levels.push(Level { words, disks });
    }
    Ok(levels)
}

/// Spectral radius of the sparse level-n transfer matrix with entries
/// `ratio^δ`, by power iteration.
fn spectral_radius(rows: &[Vec<(usize, f64)>], delta: f64, v: &mut Vec<f64>) -> f64 {
    let n = rows.len();
    let weights: Vec<Vec<(usize, f64)>> = rows
        .par_iter()
        .map(|r| r.iter().map(|&(j, lr)| (j, (delta * lr).exp())).collect())
        .collect();
    let mut lam = 1.0;
    for it in 0..2000 {
        let w: Vec<f64> = weights
            .par_iter()
            .map(|r| r.iter().map(|&(j, x)| x * v[j]).sum())
            .collect();
        let norm: f64 = w.iter().sum::<f64>() / n as f64;
        let new: Vec<f64> = w.iter().map(|x| x / norm).collect();
        let change = new
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        *v = new;
        let converged = (norm - lam).abs() <= 1e-15 * norm && change < 1e-13;
        lam = norm;
        if converged && it > 5 {
            break;
        }
    }
    lam
}

fn level_delta(level: &Level, next: &Level, n_letters: usize, tol: f64) -> Result<f64> {
    // row w: entries to σw·b with weight (r(D_{wb}) / r(D_{σwb}))^δ
    let rows: Vec<Vec<(usize, f64)>> = level
        .words
        .par_iter()
        .map(|w| {
            let last = *w.last().unwrap();
            (0..n_letters as Letter)
                .filter(|&b| b != inverse_letter(last))
                .map(|b| {
                    let mut wb = w.clone();
                    wb.push(b);
                    let child = next.disks[word_index(&wb, n_letters)].radius;
                    let j = word_index(&wb[1..], n_letters);
                    let image = level.disks[j].radius;
                    (j, (child / image).ln())
                })
                .collect()
        })
        .collect();
    let mut v = vec![1.0; rows.len()];
    let f = |d: f64, v: &mut Vec<f64>| spectral_radius(&rows, d, v).ln();
    let mut lo = 0.0;
    let mut hi = 1.0;
    if f(hi, &mut v) > 0.0 {
        return Err(Error::Bracketing("refinement pressure positive at δ = 1".into()));
    }
    // secant-safeguarded bisection
    let (mut flo, mut fhi) = (f(lo, &mut v), f(hi, &mut v));
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mut mid = lo - flo * (hi - lo) / (fhi - flo);
        if !(mid > lo + 0.01 * (hi - lo) && mid < hi - 0.01 * (hi - lo)) {
            mid = 0.5 * (lo + hi);
        }
        let fm = f(mid, &mut v);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm > 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
        if fm.abs() < 1e-14 {
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// δ from the eigenvalue-one condition of the disk-refinement transfer matrix,
/// extrapolated across depths.
pub fn delta_refinement(s: &SchottkySurface, refinement_depth: usize) -> Result<DimensionEstimate> {
    if s.rank() < 2 {
        return Err(Error::MethodNotApplicable(
            "refinement needs rank >= 2; use the Poincaré method".into(),
        ));
    }
    if refinement_depth < 3 {
        return Err(Error::Definition("refinement depth must be at least 3".into()));
    }
    let n_letters = 2 * s.rank();
    let levels = build_levels(s, refinement_depth + 1)?;
    let first = refinement_depth.saturating_sub(4).max(1);
    let mut estimates = Vec::new();
    for n in first..=refinement_depth {
        let d = level_delta(&levels[n - 1], &levels[n], n_letters, DEFAULT_BISECTION_TOL)?;
        estimates.push((n, d));
    }
    let seq: Vec<f64> = estimates.iter().map(|e| e.1).collect();
    let (delta, unc) = aitken(&seq);
    Ok(DimensionEstimate {
        delta,
        method: DimensionMethod::RefinementEigenvalue,
        uncertainty: unc.max(DEFAULT_BISECTION_TOL),
        diagnostics: estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Model;

    #[test]
    fn cylinder_has_dimension_zero() {
        let s = SchottkySurface::symmetric(1, 3.0, Model::UpperHalfPlane).unwrap();
        let d = delta_poincare(&s, 10, &default_s_grid()).unwrap();
        assert!(d.delta < 1e-3, "{d:?}");
        assert!(matches!(
            delta_refinement(&s, 6),
            Err(Error::MethodNotApplicable(_))
        ));
    }

    #[test]
    fn word_indices_are_dense() {
        let s = SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane).unwrap();
        let levels = build_levels(&s, 4).unwrap();
        for l in &levels {
            for (k, w) in l.words.iter().enumerate() {
                assert_eq!(word_index(w, 4), k);
            }
        }
    }

    #[test]
    fn grid_without_transition_is_a_bracketing_error() {
        let s = SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane).unwrap();
        let e = delta_poincare(&s, 8, &[0.6, 0.8, 1.0]).unwrap_err();
        assert!(matches!(e, Error::Bracketing(_)));
    }
}
