//! Fredholm determinant of the transfer operator and its zeros.
//!
//! For a Schottky surface, `Z(s) = det(1 - L_s)` with
//! `(L_s f)(x) = Σ_{b ≠ a⁻¹} g_b'(x)^s f(g_b x)` for `x` in the disk of letter
//! `a`. Functions are represented by Chebyshev interpolation on real
//! intervals covering the limit set inside each disk.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{inverse_letter, Letter, SchottkySurface};
use crate::numerics::{ComplexDD, DoubleDouble, DD_PI};

pub const DEFAULT_NODES: usize = 16;

/// Nodes per interval that resolve the determinant to about 1e-10 up to
/// height `|Im s| = height`.
pub fn nodes_for_height(height: f64) -> usize {
    let steps = ((height.abs() + 30.0) / 30.0).ceil() as usize;
    (8 * steps).max(DEFAULT_NODES)
}
const INTERVAL_MARGIN: f64 = 1.3;

/// A branch of the transfer operator evaluated at one collocation node.
#[derive(Debug, Clone)]
struct BranchRow {
    /// Target interval (letter of the branch map).
    target: usize,
    /// `ln g_b'(x)`; the weight is `exp(s · ln g_b'(x))`.
    log_derivative: f64,
    /// Lagrange basis of the target interval evaluated at `g_b(x)`.
    basis: Vec<f64>,
}

/// The same branch data carried in double-double.
#[derive(Debug, Clone)]
struct BranchRowDD {
    target: usize,
    log_derivative: DoubleDouble,
    basis: Vec<DoubleDouble>,
}

#[derive(Debug, Clone)]
pub struct TransferDiscretization {
    pub nodes_per_interval: usize,
    /// One interval per letter, inside that letter's disk.
    pub intervals: Vec<(f64, f64)>,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    /// Smallest relative gap between an image interval and the boundary of
    /// its target interval.
    pub containment_margin: f64,
    pub mesh_size: usize,
    /// `log Z_Euler(s₀) - log det(s₀)` at the calibration anchor.
    pub log_normalization: Complex64,
    pub anchor: Option<Complex64>,
    rows: Vec<Vec<BranchRow>>,
    rows_dd: Vec<Vec<BranchRowDD>>,
    rank: usize,
}

/// Below this real part the determinant is assembled and factored in
/// double-double.
pub const EXTENDED_PRECISION_BELOW: f64 = 0.0;

fn chebyshev(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let th = PI * (2 * i + 1) as f64 / (2 * n) as f64;
        x.push(mid + half * th.cos());
        w.push(if i % 2 == 0 { th.sin() } else { -th.sin() });
    }
    (x, w)
}

fn chebyshev_dd(n: usize, lo: f64, hi: f64) -> (Vec<DoubleDouble>, Vec<DoubleDouble>) {
    let lo = DoubleDouble::from_f64(lo);
    let hi = DoubleDouble::from_f64(hi);
    let mid = lo.add(hi).mul_f64(0.5);
    let half = hi.sub(lo).mul_f64(0.5);
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let th = DD_PI
            .mul_f64((2 * i + 1) as f64)
            .div(DoubleDouble::from_f64((2 * n) as f64));
        let (sn, cs) = th.sin_cos();
        x.push(mid.add(half.mul(cs)));
        w.push(if i % 2 == 0 { sn } else { sn.neg() });
    }
    (x, w)
}

fn lagrange_basis_dd(x: &[DoubleDouble], w: &[DoubleDouble], y: DoubleDouble) -> Vec<DoubleDouble> {
    if let Some(k) = x.iter().position(|&xi| xi == y) {
        let mut v = vec![DoubleDouble::ZERO; x.len()];
        v[k] = DoubleDouble::from_f64(1.0);
        return v;
    }
    let t: Vec<DoubleDouble> = x.iter().zip(w).map(|(&xi, &wi)| wi.div(y.sub(xi))).collect();
    let s = t.iter().fold(DoubleDouble::ZERO, |acc, &ti| acc.add(ti));
    t.iter().map(|ti| ti.div(s)).collect()
}

fn lagrange_basis(x: &[f64], w: &[f64], y: f64) -> Vec<f64> {
    if let Some(k) = x.iter().position(|&xi| xi == y) {
        let mut v = vec![0.0; x.len()];
        v[k] = 1.0;
        return v;
    }
    let t: Vec<f64> = x.iter().zip(w).map(|(xi, wi)| wi / (y - xi)).collect();
    let s: f64 = t.iter().sum();
    t.iter().map(|ti| ti / s).collect()
}

impl TransferDiscretization {
    pub fn new(s: &SchottkySurface, nodes_per_interval: usize) -> Result<Self> {
        if nodes_per_interval < 2 {
            return Err(Error::Definition("need at least two nodes per interval".into()));
        }
        let n = 2 * s.rank();
        let maps = s.letter_maps();
        let disks: Vec<_> = (0..n as Letter).map(|a| s.disks.letter_disk(a)).collect();

        let iv = s.limit_set_hulls()?;
        // enlarge each hull, staying inside the disk
        let intervals: Vec<(f64, f64)> = iv
            .iter()
            .zip(&disks)
            .map(|(&(lo, hi), d)| {
                let mid = 0.5 * (lo + hi);
                let half = (0.5 * (hi - lo) * INTERVAL_MARGIN).max(0.05 * d.radius);
                let (dl, dh) = d.endpoints();
                let lo2 = (mid - half).max(dl + 0.01 * d.radius);
                let hi2 = (mid + half).min(dh - 0.01 * d.radius);
                (lo2, hi2)
            })
            .collect();

        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut nodes_dd = Vec::with_capacity(n);
        let mut weights_dd = Vec::with_capacity(n);
        for &(lo, hi) in &intervals {
            let (x, w) = chebyshev(nodes_per_interval, lo, hi);
            nodes.push(x);
            weights.push(w);
            let (x, w) = chebyshev_dd(nodes_per_interval, lo, hi);
            nodes_dd.push(x);
            weights_dd.push(w);
        }

        let mut margin = f64::INFINITY;
        for b in 0..n {
            let (tl, th) = intervals[b];
            for a in 0..n {
                if a as Letter == inverse_letter(b as Letter) {
                    continue;
                }
                let y0 = maps[b].apply_real(intervals[a].0).unwrap();
                let y1 = maps[b].apply_real(intervals[a].1).unwrap();
                let (lo, hi) = (y0.min(y1), y0.max(y1));
                margin = margin.min((lo - tl).min(th - hi) / (th - tl));
            }
        }
        if !(margin > 0.0) {
            return Err(Error::Geometry(format!(
                "branch images are not contained in their target intervals (margin {margin:.3e})"
            )));
        }

        let mut rows = Vec::with_capacity(n * nodes_per_interval);
        for a in 0..n {
            for &x in &nodes[a] {
                let mut row = Vec::new();
                for b in 0..n {
                    if b as Letter == inverse_letter(a as Letter) {
                        continue;
                    }
                    let g = maps[b];
                    let q = g.c * x + g.d;
                    let y = g.apply_real(x).unwrap();
                    row.push(BranchRow {
                        target: b,
                        log_derivative: -(q * q).ln(),
                        basis: lagrange_basis(&nodes[b], &weights[b], y),
                    });
                }
                rows.push(row);
            }
        }
        let mut rows_dd = Vec::with_capacity(n * nodes_per_interval);
        for a in 0..n {
            for &x in &nodes_dd[a] {
                let mut row = Vec::new();
                for b in 0..n {
                    if b as Letter == inverse_letter(a as Letter) {
                        continue;
                    }
                    let g = maps[b];
                    let dd = DoubleDouble::from_f64;
                    let q = x.mul_f64(g.c).add(dd(g.d));
                    let p = x.mul_f64(g.a).add(dd(g.b));
                    let det = dd(g.a).mul_f64(g.d).sub(dd(g.b).mul_f64(g.c));
                    row.push(BranchRowDD {
                        target: b,
                        log_derivative: det.div(q.mul(q)).ln(),
                        basis: lagrange_basis_dd(&nodes_dd[b], &weights_dd[b], p.div(q)),
                    });
                }
                rows_dd.push(row);
            }
        }

        Ok(TransferDiscretization {
            nodes_per_interval,
            intervals,
            nodes,
            weights,
            containment_margin: margin,
            mesh_size: n * nodes_per_interval,
            log_normalization: Complex64::new(0.0, 0.0),
            anchor: None,
            rows,
            rows_dd,
            rank: s.rank(),
        })
    }

    /// Discretized operator `A(s)` and, optionally, `dA/ds`.
    fn matrices(&self, s: Complex64, derivative: bool) -> (DMatrix<Complex64>, Option<DMatrix<Complex64>>) {
        let m = self.mesh_size;
        let k = self.nodes_per_interval;
        let mut a = DMatrix::<Complex64>::zeros(m, m);
        let mut da = if derivative {
            Some(DMatrix::<Complex64>::zeros(m, m))
        } else {
            None
        };
        for (i, row) in self.rows.iter().enumerate() {
            for br in row {
                let w = (s * br.log_derivative).exp();
                for (j, &bj) in br.basis.iter().enumerate() {
                    let col = br.target * k + j;
                    a[(i, col)] = w * bj;
                    if let Some(d) = da.as_mut() {
                        d[(i, col)] = w * bj * br.log_derivative;
                    }
                }
            }
        }
        (a, da)
    }

    /// `1 - A(s)` and `dA/ds` in double-double, row-major.
    fn matrices_dd(&self, s: Complex64, derivative: bool) -> (Vec<ComplexDD>, Vec<ComplexDD>) {
        let m = self.mesh_size;
        let k = self.nodes_per_interval;
        let one = DoubleDouble::from_f64(1.0);
        let mut a = vec![ComplexDD::ZERO; m * m];
        let mut da = if derivative { vec![ComplexDD::ZERO; m * m] } else { Vec::new() };
        for (i, row) in self.rows_dd.iter().enumerate() {
            a[i * m + i].re = one;
            for br in row {
                let e = ComplexDD::new(br.log_derivative.mul_f64(s.re), br.log_derivative.mul_f64(s.im)).exp();
                for (j, &bj) in br.basis.iter().enumerate() {
                    let col = br.target * k + j;
                    let v = ComplexDD::new(e.re.mul(bj), e.im.mul(bj));
                    a[i * m + col] = a[i * m + col].sub(v);
                    if derivative {
                        da[i * m + col] = ComplexDD::new(v.re.mul(br.log_derivative), v.im.mul(br.log_derivative));
                    }
                }
            }
        }
        (a, da)
    }

    /// `det(1 - A(s))` assembled and factored in double-double.
    pub fn raw_determinant_extended(&self, s: Complex64) -> Complex64 {
        let (mut w, _) = self.matrices_dd(s, false);
        let lu = LuDD::factor(&mut w, self.mesh_size);
        lu.determinant(&w)
    }

    /// `det(1 - A(s))` in double precision.
    pub fn raw_determinant_f64(&self, s: Complex64) -> Complex64 {
        let (a, _) = self.matrices(s, false);
        let m = DMatrix::<Complex64>::identity(self.mesh_size, self.mesh_size) - a;
        m.lu().determinant()
    }

    /// Raw `det(1 - A(s))` without normalization. Uses double-double
    /// arithmetic for `Re s` below [`EXTENDED_PRECISION_BELOW`].
    pub fn raw_determinant(&self, s: Complex64) -> Complex64 {
        if s.re < EXTENDED_PRECISION_BELOW {
            self.raw_determinant_extended(s)
        } else {
            self.raw_determinant_f64(s)
        }
    }

    /// Normalized determinant, approximating `Z(s)`.
    pub fn determinant(&self, s: Complex64) -> Complex64 {
        self.raw_determinant(s) * self.log_normalization.exp()
    }

    /// `log det` (principal branch of each LU pivot, summed), normalized.
    pub fn log_determinant(&self, s: Complex64) -> Complex64 {
        if s.re < EXTENDED_PRECISION_BELOW {
            let (mut w, _) = self.matrices_dd(s, false);
            let lu = LuDD::factor(&mut w, self.mesh_size);
            let mut acc = Complex64::new(0.0, if lu.sign < 0.0 { PI } else { 0.0 });
            for k in 0..self.mesh_size {
                acc += w[k * self.mesh_size + k].to_c64().ln();
            }
            return acc + self.log_normalization;
        }
        let (a, _) = self.matrices(s, false);
        let m = DMatrix::<Complex64>::identity(self.mesh_size, self.mesh_size) - a;
        let lu = m.lu();
        let u = lu.u();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.mesh_size {
            acc += u[(i, i)].ln();
        }
        // permutation sign
        let det = lu.determinant();
        let prod_diag = acc.exp();
        if (det + prod_diag).norm() < (det - prod_diag).norm() {
            acc += Complex64::new(0.0, PI);
        }
        acc + self.log_normalization
    }

    /// `Z'/Z(s) = -tr((1 - A)⁻¹ A')`.
    pub fn log_derivative(&self, s: Complex64) -> Result<Complex64> {
        if s.re < EXTENDED_PRECISION_BELOW {
            let m = self.mesh_size;
            let (mut w, da) = self.matrices_dd(s, true);
            let lu = LuDD::factor(&mut w, m);
            if lu.singular {
                return Err(Error::Resolution(format!("singular determinant at s = {s}")));
            }
            let mut tr = ComplexDD::ZERO;
            let mut col = vec![ComplexDD::ZERO; m];
            for j in 0..m {
                for i in 0..m {
                    col[i] = da[i * m + j];
                }
                lu.solve_in_place(&w, &mut col);
                tr = tr.add(col[j]);
            }
            return Ok(-tr.to_c64());
        }
        let (a, da) = self.matrices(s, true);
        let da = da.unwrap();
        let m = DMatrix::<Complex64>::identity(self.mesh_size, self.mesh_size) - a;
        let x = m
            .lu()
            .solve(&da)
            .ok_or_else(|| Error::Resolution(format!("singular determinant at s = {s}")))?;
        Ok(-x.trace())
    }

    /// Sets the normalization so that the determinant matches a reference
    /// value of `log Z` at `anchor`.
    pub fn calibrate(&mut self, anchor: Complex64, reference_log: Complex64) {
        self.log_normalization = Complex64::new(0.0, 0.0);
        let raw = self.log_determinant(anchor);
        let mut d = reference_log - raw;
        d.im = (d.im + PI).rem_euclid(2.0 * PI) - PI;
        self.log_normalization = d;
        self.anchor = Some(anchor);
    }

    pub fn rank(&self) -> usize {
        self.rank
    }
}

/// In-place partial-pivot LU of a row-major double-double matrix.
struct LuDD {
    m: usize,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl LuDD {
    fn factor(w: &mut [ComplexDD], m: usize) -> Self {
        let mut perm: Vec<usize> = (0..m).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..m {
            let p = (k..m)
                .max_by(|&x, &y| w[x * m + k].abs_approx().total_cmp(&w[y * m + k].abs_approx()))
                .unwrap();
            if p != k {
                for j in 0..m {
                    w.swap(k * m + j, p * m + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let piv = w[k * m + k];
            if piv.abs_approx() == 0.0 {
                singular = true;
                continue;
            }
            for i in k + 1..m {
                let f = w[i * m + k].div(piv);
                w[i * m + k] = f;
                if f.abs_approx() == 0.0 {
                    continue;
                }
                for j in k + 1..m {
                    w[i * m + j] = w[i * m + j].sub(f.mul(w[k * m + j]));
                }
            }
        }
        LuDD {
            m,
            perm,
            sign,
            singular,
        }
    }

    fn determinant(&self, w: &[ComplexDD]) -> Complex64 {
        let mut det = Complex64::new(self.sign, 0.0);
        for k in 0..self.m {
            det *= w[k * self.m + k].to_c64();
        }
        det
    }

    fn solve_in_place(&self, w: &[ComplexDD], b: &mut [ComplexDD]) {
        let m = self.m;
        let mut x: Vec<ComplexDD> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..m {
            for j in 0..i {
                x[i] = x[i].sub(w[i * m + j].mul(x[j]));
            }
        }
        for i in (0..m).rev() {
            for j in i + 1..m {
                x[i] = x[i].sub(w[i * m + j].mul(x[j]));
            }
            x[i] = x[i].div(w[i * m + i]);
        }
        b.copy_from_slice(&x);
    }
}

/// Outcome of a mesh-doubling comparison.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResolutionCheck {
    pub coarse: Complex64,
    pub fine: Complex64,
    pub relative_change: f64,
}

/// Compares the determinant at `N` and `2N` nodes per interval.
pub fn resolution_check(
    s: &SchottkySurface,
    nodes: usize,
    at: Complex64,
) -> Result<ResolutionCheck> {
    let coarse = TransferDiscretization::new(s, nodes)?.raw_determinant(at);
    let fine = TransferDiscretization::new(s, 2 * nodes)?.raw_determinant(at);
    let relative_change = (fine - coarse).norm() / fine.norm().max(1.0);
    if relative_change > 1e-6 {
        return Err(Error::Resolution(format!(
            "mesh doubling at s = {at} changes the determinant by {relative_change:.3e}"
        )));
    }
    Ok(ResolutionCheck {
        coarse,
        fine,
        relative_change,
    })
}

/// Closed rectangle in the λ-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl SearchBox {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        SearchBox {
            re_min,
            re_max,
            im_min,
            im_max,
        }
    }

    pub fn contains(&self, s: Complex64, slack: f64) -> bool {
        s.re >= self.re_min - slack
            && s.re <= self.re_max + slack
            && s.im >= self.im_min - slack
            && s.im <= self.im_max + slack
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(
            0.5 * (self.re_min + self.re_max),
            0.5 * (self.im_min + self.im_max),
        )
    }

    pub fn diameter(&self) -> f64 {
        (self.re_max - self.re_min).hypot(self.im_max - self.im_min)
    }
}

/// Converts the spectral parameter `λ` to the frequency plane, `λ = 1/2 + iρ`.
pub fn lambda_to_z(lambda: Complex64) -> Complex64 {
    Complex64::new(lambda.im, 0.5 - lambda.re)
}

pub fn z_to_lambda(z: Complex64) -> Complex64 {
    Complex64::new(0.5 - z.im, z.re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    /// Zero of `Z` in the λ-plane.
    pub lambda: Complex64,
    /// The same point in the frequency plane.
    pub z: Complex64,
    pub multiplicity: u32,
    /// `|det|` at the located zero.
    pub residual: f64,
    /// Largest `|det|` on the boundary of the isolating cell.
    pub scale: f64,
}

/// Resonances found in a union of searched boxes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResonanceSet {
    pub resonances: Vec<Resonance>,
    pub boxes: Vec<SearchBox>,
}

impl ResonanceSet {
    pub fn merge(&mut self, other: ResonanceSet) {
        for r in other.resonances {
            let dup = self
                .resonances
                .iter()
                .any(|q| (q.lambda - r.lambda).norm() < 1e-7);
            if !dup {
                self.resonances.push(r);
            }
        }
        self.boxes.extend(other.boxes);
        sort_resonances(&mut self.resonances);
    }

    /// Whether the union of searched boxes covers the rectangle.
    pub fn covers(&self, target: &SearchBox) -> bool {
        rectangle_covered(target, &self.boxes)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "Re_lambda,Im_lambda,Re_z,Im_z,multiplicity,residual")?;
        for r in &self.resonances {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
                r.lambda.re, r.lambda.im, r.z.re, r.z.im, r.multiplicity, r.residual
            )?;
        }
        Ok(())
    }
}

fn sort_resonances(v: &mut [Resonance]) {
    v.sort_by(|a, b| {
        a.lambda
            .re
            .partial_cmp(&b.lambda.re)
            .unwrap()
            .then(a.lambda.im.partial_cmp(&b.lambda.im).unwrap())
    });
}

/// Exact test that `target` lies inside the union of `boxes`.
pub fn rectangle_covered(target: &SearchBox, boxes: &[SearchBox]) -> bool {
    let mut xs = vec![target.re_min, target.re_max];
    let mut ys = vec![target.im_min, target.im_max];
    for b in boxes {
        for x in [b.re_min, b.re_max] {
            if x > target.re_min && x < target.re_max {
                xs.push(x);
            }
        }
        for y in [b.im_min, b.im_max] {
            if y > target.im_min && y < target.im_max {
                ys.push(y);
            }
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    ys.dedup();
    for i in 0..xs.len() - 1 {
        for j in 0..ys.len() - 1 {
            let c = Complex64::new(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]));
            if !boxes.iter().any(|b| b.contains(c, 0.0)) {
                return false;
            }
        }
    }
    true
}

/// Anything that can be evaluated for zero finding.
pub trait Analytic: Sync {
    fn value(&self, s: Complex64) -> Complex64;
    fn log_derivative(&self, s: Complex64) -> Result<Complex64>;

    /// Value and a forward-difference estimate of `f'/f`.
    fn value_and_slope(&self, s: Complex64) -> (Complex64, Complex64) {
        let h = 1e-8 * s.norm().max(1.0);
        let v = self.value(s);
        let w = self.value(s + h);
        (v, (w / v).ln() / h)
    }
}

impl Analytic for TransferDiscretization {
    fn value(&self, s: Complex64) -> Complex64 {
        self.raw_determinant(s)
    }
    fn log_derivative(&self, s: Complex64) -> Result<Complex64> {
        TransferDiscretization::log_derivative(self, s)
    }
}

/// Longest edge piece sampled before adaptive refinement.
const EDGE_STEP: f64 = 1.0 / 8.0;
/// Target side of the coarse cells used to split a search box.
const CELL_SIDE: f64 = 0.5;

/// Entire nonvanishing factor `exp(-b u - c u²)`, `u = s - center`, that
/// removes the bulk growth and rotation of `f` over a search box. Windings
/// and zeros are unchanged.
#[derive(Debug, Clone, Copy)]
struct Tilt {
    center: Complex64,
    b: Complex64,
    c: Complex64,
}

impl Tilt {
    const NONE: Tilt = Tilt {
        center: Complex64::new(0.0, 0.0),
        b: Complex64::new(0.0, 0.0),
        c: Complex64::new(0.0, 0.0),
    };

    fn slope(&self, s: Complex64) -> Complex64 {
        self.b + 2.0 * self.c * (s - self.center)
    }

    /// Least-squares fit of `f'/f ≈ b + 2c u` on a 3 × 3 grid over the box.
    fn fit<F: Analytic + ?Sized>(f: &F, bx: &SearchBox) -> Tilt {
        let center = bx.center();
        let pts: Vec<Complex64> = (0..9)
            .map(|k| {
                let tx = (k % 3) as f64 / 2.0;
                let ty = (k / 3) as f64 / 2.0;
                Complex64::new(
                    bx.re_min + tx * (bx.re_max - bx.re_min),
                    bx.im_min + ty * (bx.im_max - bx.im_min),
                )
            })
            .collect();
        let data: Vec<(Complex64, Complex64)> = pts
            .par_iter()
            .map(|&p| (p - center, f.value_and_slope(p).1))
            .filter(|(_, d)| d.is_finite())
            .collect();
        if data.len() < 3 {
            return Tilt::NONE;
        }
        let n = data.len() as f64;
        let su: Complex64 = data.iter().map(|d| d.0).sum();
        let suu: f64 = data.iter().map(|d| d.0.norm_sqr()).sum();
        let sd: Complex64 = data.iter().map(|d| d.1).sum();
        let sud: Complex64 = data.iter().map(|d| d.0.conj() * d.1).sum();
        // [n, su; conj(su), suu] [b; c2] = [sd; sud]
        let det = n * suu - su.norm_sqr();
        if det.abs() < 1e-300 {
            return Tilt::NONE;
        }
        let b = (sd * suu - su * sud) / det;
        let c2 = (sud * n - su.conj() * sd) / det;
        if !(b.is_finite() && c2.is_finite()) {
            return Tilt::NONE;
        }
        Tilt { center, b, c: 0.5 * c2 }
    }
}

/// A sample of the tilted function with a finite-difference estimate of its
/// logarithmic derivative; `norm` is `|f|` before tilting.
#[derive(Clone, Copy)]
struct Sample {
    value: Complex64,
    slope: Complex64,
    norm: f64,
}

fn sample<F: Analytic + ?Sized>(f: &F, tilt: &Tilt, s: Complex64) -> Sample {
    let (v, d) = f.value_and_slope(s);
    let u = s - tilt.center;
    Sample {
        value: v * (-(tilt.b * u + tilt.c * u * u)).exp(),
        slope: d - tilt.slope(s),
        norm: v.norm(),
    }
}

/// Phase change of `f` from `p` to `q`, bisecting until both halves turn by
/// less than π/4 and `f'/f` varies little across the piece (a zero near the
/// piece makes it vary by about `1/distance`). Returns the phase and the
/// largest `|f|` seen, or `None` when a zero appears to sit on the segment.
fn piece_phase<F: Analytic + ?Sized>(
    f: &F,
    tilt: &Tilt,
    p: Complex64,
    q: Complex64,
    sp: Sample,
    sq: Sample,
    depth: u32,
) -> Option<(f64, f64)> {
    let m = 0.5 * (p + q);
    let sm = sample(f, tilt, m);
    let (fp, fm, fq) = (sp.value, sm.value, sq.value);
    if !(fm.is_finite() && fm.norm() > 0.0 && sm.slope.is_finite()) {
        return None;
    }
    let d1 = (fm / fp).arg();
    let d2 = (fq / fm).arg();
    let h = (q - p).norm();
    let spread = (sp.slope - sm.slope)
        .norm()
        .max((sm.slope - sq.slope).norm())
        .max((sp.slope - sq.slope).norm());
    let vmax = sp.norm.max(sq.norm).max(sm.norm);
    if d1.abs() < PI / 4.0 && d2.abs() < PI / 4.0 && h * spread < 0.5 {
        return Some((d1 + d2, vmax));
    }
    // below the slope step the test above is blind: treat as a zero on the piece
    if depth >= 48 || h < 1e-7 * m.norm().max(1.0) {
        return None;
    }
    let (a, va) = piece_phase(f, tilt, p, m, sp, sm, depth + 1)?;
    let (b, vb) = piece_phase(f, tilt, m, q, sm, sq, depth + 1)?;
    Some((a + b, va.max(vb).max(vmax)))
}

/// Phase change of `f` along the segment `[a, b]` with known end samples.
fn edge_phase<F: Analytic + ?Sized>(
    f: &F,
    tilt: &Tilt,
    a: Complex64,
    b: Complex64,
    sa: Sample,
    sb: Sample,
) -> Option<(f64, f64)> {
    let ok = |s: &Sample| s.value.is_finite() && s.value.norm() > 0.0 && s.slope.is_finite();
    if !(ok(&sa) && ok(&sb)) {
        return None;
    }
    let n = ((b - a).norm() / EDGE_STEP).ceil().max(1.0) as usize;
    let pts: Vec<Complex64> = (0..=n).map(|k| a + (b - a) * (k as f64 / n as f64)).collect();
    let mut vals = vec![sa; n + 1];
    vals[n] = sb;
    let inner: Vec<Sample> = pts[1..n].par_iter().map(|&p| sample(f, tilt, p)).collect();
    vals[1..n].copy_from_slice(&inner);
    let pieces: Vec<Option<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|k| piece_phase(f, tilt, pts[k], pts[k + 1], vals[k], vals[k + 1], 0))
        .collect();
    let mut total = 0.0;
    let mut vmax: f64 = 0.0;
    for p in pieces {
        let (d, v) = p?;
        total += d;
        vmax = vmax.max(v);
    }
    Some((total, vmax))
}

/// Winding numbers of `f` on an `nx × ny` grid of cells covering `bx`, with
/// every interior edge evaluated once and shared by its two cells. Returns
/// the cells, their counts and the largest `|f|` on each cell boundary.
fn grid_windings<F: Analytic + ?Sized>(
    f: &F,
    tilt: &Tilt,
    bx: &SearchBox,
    nx: usize,
    ny: usize,
    jitter: f64,
) -> Option<Vec<(SearchBox, i64, f64)>> {
    let xs: Vec<f64> = (0..=nx)
        .map(|i| {
            let t = i as f64 / nx as f64;
            let wiggle = if i == 0 || i == nx { 0.0 } else { jitter * (0.37 + 0.21 * i as f64).sin() };
            bx.re_min + (t + wiggle / nx as f64) * (bx.re_max - bx.re_min)
        })
        .collect();
    let ys: Vec<f64> = (0..=ny)
        .map(|j| {
            let t = j as f64 / ny as f64;
            let wiggle = if j == 0 || j == ny { 0.0 } else { jitter * (0.71 + 0.43 * j as f64).cos() };
            bx.im_min + (t + wiggle / ny as f64) * (bx.im_max - bx.im_min)
        })
        .collect();
    let corner = |i: usize, j: usize| Complex64::new(xs[i], ys[j]);
    let corners: Vec<Sample> = (0..=ny)
        .flat_map(|j| (0..=nx).map(move |i| (i, j)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(i, j)| sample(f, tilt, corner(i, j)))
        .collect();
    let fc = |i: usize, j: usize| corners[j * (nx + 1) + i];
    // horizontal edges (i, j) → (i + 1, j), then vertical (i, j) → (i, j + 1)
    let mut jobs = Vec::new();
    for j in 0..=ny {
        for i in 0..nx {
            jobs.push((i, j, i + 1, j));
        }
    }
    for i in 0..=nx {
        for j in 0..ny {
            jobs.push((i, j, i, j + 1));
        }
    }
    let phases: Vec<Option<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(i0, j0, i1, j1)| edge_phase(f, tilt, corner(i0, j0), corner(i1, j1), fc(i0, j0), fc(i1, j1)))
        .collect();
    let nh = (ny + 1) * nx;
    let h = |i: usize, j: usize| phases[j * nx + i];
    let v = |i: usize, j: usize| phases[nh + i * ny + j];
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (b, vb) = h(i, j)?;
            let (r, vr) = v(i + 1, j)?;
            let (t, vt) = h(i, j + 1)?;
            let (l, vl) = v(i, j)?;
            let w = (b + r - t - l) / (2.0 * PI);
            let k = w.round();
            if (w - k).abs() > 0.05 {
                return None;
            }
            cells.push((
                SearchBox::new(xs[i], xs[i + 1], ys[j], ys[j + 1]),
                k as i64,
                vb.max(vr).max(vt).max(vl),
            ));
        }
    }
    Some(cells)
}

fn grid_windings_jittered<F: Analytic + ?Sized>(
    f: &F,
    tilt: &Tilt,
    bx: &SearchBox,
    nx: usize,
    ny: usize,
) -> Option<Vec<(SearchBox, i64, f64)>> {
    (0..6).find_map(|attempt| grid_windings(f, tilt, bx, nx, ny, 0.02 * attempt as f64))
}

/// Winding number of `f` around the box boundary and the largest `|f|` seen.
pub fn winding_number<F: Analytic + ?Sized>(f: &F, bx: &SearchBox) -> Option<(i64, f64)> {
    grid_windings(f, &Tilt::NONE, bx, 1, 1, 0.0).map(|c| (c[0].1, c[0].2))
}

/// Newton iteration on `f / Π (s - zᵢ)^{mᵢ}` with the known zeros divided
/// out. Starts with multiplicity one and switches to the multiplicity
/// implied by linear convergence. Returns the zero and its multiplicity, or
/// `None` unless the steps settle within reach of `region`.
fn newton<F: Analytic + ?Sized>(
    f: &F,
    tilt: &Tilt,
    start: Complex64,
    known: &[(Complex64, u32)],
    region: Option<&SearchBox>,
) -> Option<(Complex64, u32)> {
    let mut s = start;
    let mut m = 1u32;
    let mut last_step = f64::INFINITY;
    let mut ratios: Vec<f64> = Vec::new();
    for _ in 0..40 {
        let mut ld = f.log_derivative(s).ok()? - tilt.slope(s);
        for &(z, k) in known {
            ld -= k as f64 / (s - z);
        }
        if !ld.is_finite() {
            return Some((s, m));
        }
        if ld.norm() == 0.0 {
            return None;
        }
        let step = m as f64 / ld;
        s -= step;
        if !s.is_finite() {
            return None;
        }
        if let Some(r) = region {
            if !r.contains(s, r.diameter()) {
                return None;
            }
        }
        let size = step.norm();
        let tiny = 1e-14 * s.norm().max(1.0);
        let ratio = size / last_step;
        // converged, or stalled at the noise floor of a multiple zero
        if size < tiny || (size < 1e-9 * s.norm().max(1.0) && ratio > 0.3) {
            return Some((s, m));
        }
        // simple Newton contracts by (k - 1)/k at a zero of order k
        ratios.push(ratio);
        let n = ratios.len();
        if n >= 3 {
            let r = &ratios[n - 3..];
            let spread = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - r.iter().cloned().fold(f64::INFINITY, f64::min);
            if m == 1 && r[2] > 0.4 && r[2] < 0.95 && spread < 0.05 {
                m = (1.0 / (1.0 - r[2])).round().max(1.0) as u32;
                ratios.clear();
            } else if m > 1 && r.iter().all(|&x| x > 0.9) {
                m = 1;
                ratios.clear();
            }
        }
        last_step = size;
    }
    None
}

/// Order of the zero at `z` from the winding of `f` on a small circle.
fn local_order<F: Analytic + ?Sized>(f: &F, z: Complex64, radius: f64) -> Option<u32> {
    let n = 16;
    let pts: Vec<Complex64> = (0..n)
        .map(|k| z + Complex64::from_polar(radius, 2.0 * PI * k as f64 / n as f64))
        .collect();
    let vals: Vec<Complex64> = pts.par_iter().map(|&p| f.value(p)).collect();
    let mut total = 0.0;
    for k in 0..n {
        let d = (vals[(k + 1) % n] / vals[k]).arg();
        if !(d.abs() < 0.75 * PI) {
            return None;
        }
        total += d;
    }
    let w = total / (2.0 * PI);
    let r = w.round();
    if (w - r).abs() > 0.05 || r < 1.0 {
        return None;
    }
    Some(r as u32)
}

/// Jitters box edges outward when a zero sits on the boundary.
fn nudge(bx: &SearchBox, attempt: u32) -> SearchBox {
    let e = 1e-3 * (bx.re_max - bx.re_min).min(bx.im_max - bx.im_min) * (attempt as f64 * 0.618_034).fract();
    SearchBox::new(bx.re_min - e, bx.re_max + 0.7 * e, bx.im_min - 0.9 * e, bx.im_max + 1.1 * e)
}

/// Zeros inside a cell known to hold `count` of them.
fn localize<F: Analytic + ?Sized>(
    f: &F,
    tilt: &Tilt,
    cell: &SearchBox,
    count: i64,
    scale: f64,
    min_size: f64,
) -> Result<Vec<Resonance>> {
    if count <= 0 {
        return Ok(Vec::new());
    }
    let diam = cell.diameter();
    let mut known: Vec<(Complex64, u32)> = Vec::new();
    let starts = [
        cell.center(),
        Complex64::new(
            cell.re_min + 0.3 * (cell.re_max - cell.re_min),
            cell.im_min + 0.7 * (cell.im_max - cell.im_min),
        ),
        Complex64::new(
            cell.re_min + 0.7 * (cell.re_max - cell.re_min),
            cell.im_min + 0.3 * (cell.im_max - cell.im_min),
        ),
    ];
    let mut located: i64 = 0;
    let mut misses = 0;
    while located < count && misses < starts.len() {
        let start = starts[(known.len() + misses) % starts.len()];
        let hit = newton(f, tilt, start, &known, Some(cell)).and_then(|(z, _)| {
            if !cell.contains(z, 1e-10 * diam) {
                return None;
            }
            let r = (1e-5 * diam).max(1e-10 * z.norm().max(1.0));
            let m = local_order(f, z, r)?;
            Some((z, m))
        });
        match hit {
            Some((z, m)) if located + (m as i64) <= count => {
                known.push((z, m));
                located += m as i64;
            }
            _ => misses += 1,
        }
    }
    if located == count {
        return Ok(known
            .into_iter()
            .map(|(z, m)| Resonance {
                lambda: z,
                z: lambda_to_z(z),
                multiplicity: m,
                residual: f.value(z).norm(),
                scale,
            })
            .collect());
    }
    if diam < min_size {
        return Err(Error::Localization(format!(
            "could not isolate {count} zero(s) in cell {cell:?}"
        )));
    }
    let kids = grid_windings_jittered(f, tilt, cell, 2, 2).ok_or_else(|| {
        Error::Localization(format!("subdivision of cell {cell:?} (count {count}) failed"))
    })?;
    let sum: i64 = kids.iter().map(|k| k.1).sum();
    if sum != count {
        return Err(Error::Localization(format!(
            "cell {cell:?} has winding {count} but its quarters sum to {sum}"
        )));
    }
    let mut out = Vec::new();
    for (k, c, sc) in kids {
        out.extend(localize(f, tilt, &k, c, sc, min_size)?);
    }
    Ok(out)
}

/// Zeros of `f` inside `bx` by the argument principle on a grid of cells,
/// recursive subdivision and Newton polishing. The total multiplicity
/// matches the winding number of the (possibly nudged) box.
pub fn find_zeros<F: Analytic + ?Sized>(f: &F, bx: &SearchBox) -> Result<ResonanceSet> {
    let nx = ((bx.re_max - bx.re_min) / CELL_SIDE).ceil().max(1.0) as usize;
    let ny = ((bx.im_max - bx.im_min) / CELL_SIDE).ceil().max(1.0) as usize;
    let tilt = Tilt::fit(f, bx);
    let mut grid = None;
    let mut outer = *bx;
    for attempt in 0..6 {
        if let Some(g) = grid_windings_jittered(f, &tilt, &outer, nx, ny) {
            grid = Some(g);
            break;
        }
        outer = nudge(bx, attempt + 1);
    }
    let cells = grid.ok_or_else(|| {
        Error::Localization(format!("box boundary {bx:?} passes through a zero"))
    })?;
    let total: i64 = cells.iter().map(|c| c.1).sum();
    let min_size = 1e-9 * outer.diameter().max(1.0);
    let mut found = Vec::new();
    for (cell, count, scale) in cells {
        found.extend(localize(f, &tilt, &cell, count, scale, min_size)?);
    }
    // split multiple zeros can land in neighbouring cells
    let mut merged: Vec<Resonance> = Vec::new();
    for r in found {
        match merged
            .iter_mut()
            .find(|q| (q.lambda - r.lambda).norm() < 1e-6 * q.lambda.norm().max(1.0))
        {
            Some(q) => {
                let w = q.multiplicity as f64 / (q.multiplicity + r.multiplicity) as f64;
                q.lambda = q.lambda * w + r.lambda * (1.0 - w);
                q.z = lambda_to_z(q.lambda);
                q.multiplicity += r.multiplicity;
                q.scale = q.scale.max(r.scale);
                q.residual = f.value(q.lambda).norm();
            }
            None => merged.push(r),
        }
    }
    let located: i64 = merged.iter().map(|r| r.multiplicity as i64).sum();
    if located != total {
        return Err(Error::Localization(format!(
            "winding number {total} but located {located} zeros in {bx:?}"
        )));
    }
    sort_resonances(&mut merged);
    Ok(ResonanceSet {
        resonances: merged,
        boxes: vec![*bx],
    })
}

/// Resonances of the surface in `bx` from the transfer-operator determinant.
pub fn find_resonances(bx: &SearchBox, disc: &TransferDiscretization) -> Result<ResonanceSet> {
    find_zeros(disc, bx)
}

/// Largest real zero of the determinant in `(lo, hi)`, located by bisection
/// on a sign change and polished by Newton.
pub fn leading_real_zero(disc: &TransferDiscretization, lo: f64, hi: f64) -> Result<f64> {
    let f = |x: f64| disc.raw_determinant(Complex64::new(x, 0.0)).re;
    // scan downward from hi to find the first sign change
    let n = 200;
    let mut prev_x = hi;
    let mut prev = f(hi);
    for k in 1..=n {
        let x = hi - (hi - lo) * k as f64 / n as f64;
        let v = f(x);
        if v == 0.0 {
            return Ok(x);
        }
        if v.signum() != prev.signum() {
            let r = crate::numerics::brent(f, x, prev_x, 1e-15)?;
            return Ok(r);
        }
        prev_x = x;
        prev = v;
    }
    Err(Error::Bracketing(format!(
        "no real zero of the determinant in ({lo}, {hi})"
    )))
}

/// Counts around frequency `z` (both in the frequency plane):
/// `in_region` — resonances with `Im ρ ≤ 1 + c log|Re ρ|` and
/// `|z - Re ρ| ≤ log z`; `in_disc` — resonances with `|z - ρ| ≤ c log z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogWindowCount {
    pub in_region: usize,
    pub in_disc: usize,
}

/// λ-plane rectangle that must be searched for [`count_log_window`].
pub fn log_window_box(z: f64, c: f64) -> SearchBox {
    let w = z.ln();
    let depth = (1.0 + c * (z + w).ln()).max(c * w) + 1e-9;
    let half = w.max(c * w);
    SearchBox::new(0.5 - depth, 1.0, z - half, z + half)
}

pub fn count_log_window(res: &ResonanceSet, z: f64, c: f64) -> Result<LogWindowCount> {
    if !(z > 1.0) {
        return Err(Error::Definition("window centre must exceed 1".into()));
    }
    let need = log_window_box(z, c);
    if !res.covers(&need) {
        return Err(Error::Coverage(format!(
            "searched boxes do not cover {need:?} needed for the window at z = {z}"
        )));
    }
    let w = z.ln();
    let mut in_region = 0;
    let mut in_disc = 0;
    for r in &res.resonances {
        let rho = r.z;
        let m = r.multiplicity as usize;
        if rho.im <= 1.0 + c * rho.re.abs().ln() && (z - rho.re).abs() <= w {
            in_region += m;
        }
        if (Complex64::new(z, 0.0) - rho).norm() <= c * w {
            in_disc += m;
        }
    }
    Ok(LogWindowCount { in_region, in_disc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Model;

    /// Closed-form Selberg zeta of the hyperbolic cylinder over oriented classes.
    struct Cylinder {
        ell: f64,
    }

    impl Analytic for Cylinder {
        fn value(&self, s: Complex64) -> Complex64 {
            let mut p = Complex64::new(1.0, 0.0);
            for k in 0..60 {
                let f = Complex64::new(1.0, 0.0) - (-(s + k as f64) * self.ell).exp();
                p *= f * f;
            }
            p
        }
        fn log_derivative(&self, s: Complex64) -> Result<Complex64> {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..60 {
                let e = (-(s + k as f64) * self.ell).exp();
                acc += 2.0 * self.ell * e / (Complex64::new(1.0, 0.0) - e);
            }
            Ok(acc)
        }
    }

    #[test]
    fn cylinder_determinant_matches_product() {
        let s = SchottkySurface::symmetric(1, 2.0, Model::UpperHalfPlane).unwrap();
        let disc = TransferDiscretization::new(&s, 24).unwrap();
        let exact = Cylinder { ell: 2.0 };
        for p in [Complex64::new(0.7, 3.0), Complex64::new(-0.4, 1.1), Complex64::new(2.0, -5.0)] {
            let d = disc.raw_determinant(p);
            let e = exact.value(p);
            assert!((d - e).norm() < 1e-10 * e.norm().max(1.0), "{p}: {d} vs {e}");
        }
    }

    #[test]
    fn large_real_part_gives_one() {
        let s = SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane).unwrap();
        let disc = TransferDiscretization::new(&s, 12).unwrap();
        let d = disc.raw_determinant(Complex64::new(6.0, 3.0));
        assert!((d - 1.0).norm() < 1e-15);
    }

    #[test]
    fn conjugation_symmetry() {
        let s = SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane).unwrap();
        let disc = TransferDiscretization::new(&s, 12).unwrap();
        for p in [Complex64::new(0.5, 7.3), Complex64::new(-1.0, 20.0)] {
            let a = disc.raw_determinant(p);
            let b = disc.raw_determinant(p.conj());
            assert!((a - b.conj()).norm() <= 1e-12 * a.norm().max(1.0));
        }
    }

    #[test]
    fn cylinder_zero_lattice_from_argument_principle() {
        let exact = Cylinder { ell: 2.0 };
        // zeros at -k + 2πim/ℓ, double
        let bx = SearchBox::new(-1.3, 0.4, -0.5, 3.5);
        let set = find_zeros(&exact, &bx).unwrap();
        let expect = [
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, PI),
            Complex64::new(-1.0, 0.0),
            Complex64::new(-1.0, PI),
        ];
        assert_eq!(set.resonances.len(), expect.len(), "{:?}", set.resonances);
        for e in expect {
            let r = set
                .resonances
                .iter()
                .find(|r| (r.lambda - e).norm() < 1e-8)
                .unwrap_or_else(|| panic!("missing {e}: {:?}", set.resonances));
            assert_eq!(r.multiplicity, 2);
        }
    }

    #[test]
    fn empty_box_far_away() {
        let s = SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane).unwrap();
        let disc = TransferDiscretization::new(&s, 12).unwrap();
        let set = find_resonances(&SearchBox::new(2.0, 3.0, 5.0, 6.0), &disc).unwrap();
        assert!(set.resonances.is_empty());
    }

    #[test]
    fn coverage_by_rectangle_union() {
        let boxes = [SearchBox::new(0.0, 1.0, 0.0, 1.0), SearchBox::new(0.5, 2.0, 0.0, 1.0)];
        assert!(rectangle_covered(&SearchBox::new(0.1, 1.9, 0.2, 0.8), &boxes));
        assert!(!rectangle_covered(&SearchBox::new(0.1, 2.1, 0.2, 0.8), &boxes));
    }

    #[test]
    fn plane_conversion_round_trip() {
        let l = Complex64::new(-0.3, 12.0);
        let z = lambda_to_z(l);
        assert!((z - Complex64::new(12.0, 0.8)).norm() < 1e-15);
        assert!((z_to_lambda(z) - l).norm() < 1e-15);
    }
}
