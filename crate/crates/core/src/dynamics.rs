//! Geodesic flow on Γ\H², trapped-set escape statistics and expansion rates.
//!
//! Trajectories are propagated in closed form: a geodesic through `z` with
//! direction angle `θ` is `t ↦ G(i e^t)` for the frame `G ∈ PSL(2,R)` with
//! `G(i) = z`. Reduction to the fundamental domain (the exterior of all
//! pairing disks) applies the generator paired with the disk that is hit.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{inverse_letter, translation_length, Disk, Letter, MoebiusMap, SchottkySurface};
use crate::numerics::weighted_linear_fit;

/// Relative distance to a disk boundary treated as lying on it.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;
/// Escape-rate fits use times where the trapped fraction lies in this band.
pub const FIT_WINDOW: (f64, f64) = (1e-3, 1e-1);
/// Minimum acceptance rate of the core rejection sampler.
pub const MIN_ACCEPTANCE: f64 = 0.01;
/// Half-width of the collar around the closed geodesic of a rank-1 surface.
pub const COLLAR_HALF_WIDTH: f64 = 1.0;
pub const MIN_SAMPLES: usize = 10_000;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Unit tangent vector over a point of the fundamental domain, together with
/// the deck transformation accumulated by the reductions so far.
///
/// `direction` is a Euclidean vector of length `Im(position)`, so it has unit
/// length in the hyperbolic metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub position: Complex64,
    pub direction: Complex64,
    pub word_history: MoebiusMap,
}

impl FlowState {
    pub fn new(position: Complex64, angle: f64) -> Self {
        FlowState {
            position,
            direction: Complex64::from_polar(position.im, angle),
            word_history: MoebiusMap::IDENTITY,
        }
    }

    pub fn angle(&self) -> f64 {
        self.direction.arg()
    }

    /// Length of the direction in the hyperbolic metric.
    pub fn speed(&self) -> f64 {
        self.direction.norm() / self.position.im
    }

    pub fn reversed(&self) -> Self {
        FlowState {
            direction: -self.direction,
            ..*self
        }
    }

    /// Position in the universal cover, `word_history(position)`.
    pub fn lifted_position(&self) -> Complex64 {
        self.word_history.apply(self.position)
    }
}

/// Frame `G = T_x ∘ G₀` with `G(i) = z`, taking the upward direction at `i`
/// to angle `θ`. The translation is kept apart so that `G₀` stays well
/// conditioned when `z` is close to the boundary line.
#[derive(Debug, Clone, Copy)]
struct Frame {
    shift: f64,
    core: MoebiusMap,
}

impl Frame {
    fn new(z: Complex64, theta: f64) -> Self {
        let phi = 0.5 * (0.5 * PI - theta);
        let (s, c) = phi.sin_cos();
        let r = z.im.sqrt();
        Frame {
            shift: z.re,
            core: MoebiusMap {
                a: r * c,
                b: -r * s,
                c: s / r,
                d: c / r,
            },
        }
    }

    /// Point and direction at time `t ≥ 0`.
    fn at(&self, t: f64) -> (Complex64, Complex64) {
        let g = &self.core;
        // G₀(i e^t) with numerator and denominator divided by e^t
        let u = (-t).exp();
        let den = I * g.c + u * g.d;
        let z = (I * g.a + u * g.b) / den + self.shift;
        let v = I * u / (den * den);
        (z, v)
    }

    /// Boundary point `x` pulled back by the frame.
    fn pull_back(&self, x: f64) -> Option<f64> {
        let g = &self.core;
        let y = x - self.shift;
        let den = -g.c * y + g.a;
        (den != 0.0).then(|| (g.d * y - g.b) / den)
    }

    /// Forward time at which the geodesic crosses the geodesic with the
    /// given boundary endpoints, if it does.
    fn crossing_time(&self, endpoints: (f64, f64)) -> Option<f64> {
        let p = self.pull_back(endpoints.0)?;
        let q = self.pull_back(endpoints.1)?;
        let pq = p * q;
        if pq < 0.0 {
            let t = 0.5 * (-pq).ln();
            (t > 0.0).then_some(t)
        } else {
            None
        }
    }
}

fn canonical(z: Complex64, v: Complex64) -> (Complex64, Complex64) {
    (z, Complex64::from_polar(z.im, v.arg()))
}

/// Reduction data of a surface: the pairing disks by letter and the maps that
/// carry each disk's interior back to the fundamental domain.
#[derive(Debug, Clone)]
pub struct FlowDomain {
    disks: Vec<Disk>,
    maps: Vec<MoebiusMap>,
    inverses: Vec<MoebiusMap>,
}

/// One fundamental-domain segment of a trajectory.
#[derive(Debug, Clone, Copy)]
struct Segment {
    frame: Frame,
    /// Exit time and the letter whose disk is entered.
    exit: Option<(f64, Letter)>,
}

impl FlowDomain {
    pub fn new(s: &SchottkySurface) -> Self {
        let maps = s.letter_maps();
        FlowDomain {
            disks: (0..maps.len() as Letter).map(|a| s.disks.letter_disk(a)).collect(),
            inverses: maps.iter().map(|m| m.inverse()).collect(),
            maps,
        }
    }

    pub fn disks(&self) -> &[Disk] {
        &self.disks
    }

    pub fn in_domain(&self, z: Complex64) -> bool {
        z.im > 0.0 && self.disks.iter().all(|d| !d.contains(z))
    }

    fn segment(&self, z: Complex64, v: Complex64, skip: Option<Letter>) -> Segment {
        let g = Frame::new(z, v.arg());
        let mut exit: Option<(f64, Letter)> = None;
        for (a, d) in self.disks.iter().enumerate() {
            if Some(a as Letter) == skip {
                continue;
            }
            if let Some(t) = g.crossing_time(d.endpoints()) {
                if exit.map_or(true, |(e, _)| t < e) {
                    exit = Some((t, a as Letter));
                }
            }
        }
        Segment { frame: g, exit }
    }

    /// Moves a point that has just entered the disk of `a` back to the
    /// fundamental domain; returns the new point, direction and the letter
    /// whose disk it now lies on.
    fn reduce(&self, z: Complex64, v: Complex64, a: Letter) -> (Complex64, Complex64, Letter) {
        let h = &self.inverses[a as usize];
        let z2 = h.apply(z);
        let v2 = h.derivative(z) * v;
        let (z2, v2) = canonical(z2, v2);
        (z2, v2, inverse_letter(a))
    }

    /// Validates a starting point; a point on a disk boundary is pushed off it
    /// by `BOUNDARY_TOLERANCE` relative to the radius.
    fn prepare(&self, state: &FlowState) -> Result<Complex64> {
        let z = state.position;
        if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::Geometry(format!("position {z} is not in the upper half-plane")));
        }
        for d in &self.disks {
            let c = Complex64::new(d.center, 0.0);
            let r = (z - c).norm();
            if (r - d.radius).abs() <= BOUNDARY_TOLERANCE * d.radius {
                let pushed = c + (z - c) * ((d.radius * (1.0 + BOUNDARY_TOLERANCE)) / r);
                log::warn!("flow started on a disk boundary; moved from {z} to {pushed}");
                return Ok(pushed);
            }
            if r < d.radius {
                return Err(Error::Geometry(format!(
                    "position {z} lies inside a pairing disk"
                )));
            }
        }
        Ok(z)
    }

    /// Exact flow for time `t` with reduction to the fundamental domain.
    pub fn flow(&self, state: &FlowState, t: f64) -> Result<FlowState> {
        if !t.is_finite() {
            return Err(Error::Definition(format!("flow time {t} is not finite")));
        }
        if t < 0.0 {
            return Ok(self.flow(&state.reversed(), -t)?.reversed());
        }
        let mut z = self.prepare(state)?;
        let mut v = Complex64::from_polar(z.im, state.angle());
        let mut w = state.word_history;
        let mut skip = None;
        let mut left = t;
        loop {
            let seg = self.segment(z, v, skip);
            match seg.exit {
                Some((tau, a)) if tau < left => {
                    let (z1, v1) = seg.frame.at(tau);
                    let (z2, v2, s) = self.reduce(z1, v1, a);
                    w = w.compose(&self.maps[a as usize]);
                    z = z2;
                    v = v2;
                    skip = Some(s);
                    left -= tau;
                }
                _ => {
                    let (z1, v1) = seg.frame.at(left);
                    let (z1, v1) = canonical(z1, v1);
                    return Ok(FlowState {
                        position: z1,
                        direction: v1,
                        word_history: w,
                    });
                }
            }
        }
    }
}

/// Exact flow for time `t` on the surface.
pub fn flow(s: &SchottkySurface, state: &FlowState, t: f64) -> Result<FlowState> {
    FlowDomain::new(s).flow(state, t)
}

/// Flow in the universal cover without any reduction.
pub fn flow_unreduced(state: &FlowState, t: f64) -> FlowState {
    if t < 0.0 {
        return flow_unreduced(&state.reversed(), -t).reversed();
    }
    let (z, v) = Frame::new(state.position, state.angle()).at(t);
    let (z, v) = canonical(z, v);
    FlowState {
        position: z,
        direction: v,
        word_history: state.word_history,
    }
}

/// Part of the fundamental domain lying in the convex core: inside `outer`
/// and outside every gap geodesic joining extreme limit points of adjacent
/// disks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreDomain {
    pub outer: Disk,
    pub gaps: Vec<Disk>,
    pub y_min: f64,
}

/// Compact region of the unit tangent bundle used as the trapping set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrappingRegion {
    /// Convex core of a surface of rank at least two.
    Core(CoreDomain),
    /// Neighbourhood of the single closed geodesic of a rank-1 surface, in
    /// coordinates `w = M(z)` where the geodesic is the imaginary axis.
    Collar {
        chart: MoebiusMap,
        length: f64,
        half_width: f64,
    },
}

fn circle_crossing_height(a: &Disk, b: &Disk) -> Option<f64> {
    let dc = b.center - a.center;
    if dc == 0.0 {
        return None;
    }
    let x = (a.radius * a.radius - b.radius * b.radius + dc * dc) / (2.0 * dc);
    let h2 = a.radius * a.radius - x * x;
    (h2 > 0.0).then(|| h2.sqrt())
}

impl CoreDomain {
    pub fn new(s: &SchottkySurface) -> Result<Self> {
        if s.rank() < 2 {
            return Err(Error::Geometry("convex core of a rank-1 surface has no area".into()));
        }
        let hulls = s.limit_set_hulls()?;
        let mut order: Vec<usize> = (0..hulls.len()).collect();
        order.sort_by(|&i, &j| hulls[i].0.total_cmp(&hulls[j].0));
        let disks: Vec<Disk> = order.iter().map(|&i| s.disks.letter_disk(i as Letter)).collect();
        let outer = Disk::from_endpoints(hulls[order[0]].0, hulls[*order.last().unwrap()].1);
        let gaps: Vec<Disk> = order
            .windows(2)
            .map(|w| Disk::from_endpoints(hulls[w[0]].1, hulls[w[1]].0))
            .collect();
        let mut y_min = f64::INFINITY;
        for d in &disks {
            for c in gaps.iter().chain(std::iter::once(&outer)) {
                if let Some(h) = circle_crossing_height(d, c) {
                    y_min = y_min.min(h);
                }
            }
        }
        if !y_min.is_finite() || y_min <= 0.0 {
            return Err(Error::Geometry("could not bound the core away from the boundary".into()));
        }
        Ok(CoreDomain { outer, gaps, y_min })
    }

    /// Membership for points already in the fundamental domain.
    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.outer.center).norm() <= self.outer.radius
            && self.gaps.iter().all(|g| (z - g.center).norm() >= g.radius)
    }

    fn boundaries(&self) -> impl Iterator<Item = &Disk> {
        std::iter::once(&self.outer).chain(self.gaps.iter())
    }
}

/// Outcome of following one sample up to a time horizon.
#[derive(Debug, Clone, PartialEq)]
struct Excursion {
    /// Time of leaving the trapping region, `None` if still inside.
    exit: Option<f64>,
    /// Durations of the fundamental-domain segments travelled.
    segments: Vec<f64>,
}

impl TrappingRegion {
    pub fn new(s: &SchottkySurface) -> Result<Self> {
        if s.rank() >= 2 {
            return Ok(TrappingRegion::Core(CoreDomain::new(s)?));
        }
        let g = s.generators[0];
        let (p, q) = g.fixed_points()?;
        let chart = if p.is_infinite() || q.is_infinite() {
            let f = if p.is_infinite() { q } else { p };
            // send the finite fixed point to 0, keep infinity
            let m = MoebiusMap::new(1.0, -f, 0.0, 1.0)?;
            if p.is_infinite() {
                MoebiusMap::new(0.0, -1.0, 1.0, 0.0)?.compose(&m)
            } else {
                m
            }
        } else if p > q {
            MoebiusMap::new(1.0, -p, 1.0, -q)?
        } else {
            MoebiusMap::new(-1.0, p, 1.0, -q)?
        };
        Ok(TrappingRegion::Collar {
            chart,
            length: translation_length(&g)?,
            half_width: COLLAR_HALF_WIDTH,
        })
    }

    /// Draws one state uniformly from the Liouville measure on the region;
    /// returns it with the number of proposals used.
    fn sample(&self, domain: &FlowDomain, rng: &mut ChaCha8Rng) -> Option<(FlowState, u64)> {
        match self {
            TrappingRegion::Core(core) => {
                let (x0, x1) = core.outer.endpoints();
                let (y0, y1) = (core.y_min, core.outer.radius);
                let (a, b) = (1.0 / y0, 1.0 / y1);
                for k in 1..=100_000u64 {
                    let x = x0 + (x1 - x0) * rng.gen::<f64>();
                    let y = 1.0 / (a - (a - b) * rng.gen::<f64>());
                    let theta = 2.0 * PI * rng.gen::<f64>();
                    let z = Complex64::new(x, y);
                    if domain.in_domain(z) && core.contains(z) {
                        return Some((FlowState::new(z, theta), k));
                    }
                }
                None
            }
            TrappingRegion::Collar { chart, length, half_width } => {
                let u = length * rng.gen::<f64>();
                let k = half_width.sinh() * (2.0 * rng.gen::<f64>() - 1.0);
                let theta = 2.0 * PI * rng.gen::<f64>();
                let w = Complex64::new(k, 1.0) * u.exp();
                let inv = chart.inverse();
                let z = inv.apply(w);
                let v = inv.derivative(w) * Complex64::from_polar(w.im, theta);
                let (z, v) = canonical(z, v);
                Some((
                    FlowState {
                        position: z,
                        direction: v,
                        word_history: MoebiusMap::IDENTITY,
                    },
                    1,
                ))
            }
        }
    }

    /// Follows a state that starts in the region up to time `horizon`.
    fn excursion(&self, domain: &FlowDomain, state: &FlowState, horizon: f64) -> Excursion {
        match self {
            TrappingRegion::Core(core) => {
                let mut z = state.position;
                let mut v = state.direction;
                let mut skip = None;
                let mut elapsed = 0.0;
                let mut segments = Vec::new();
                loop {
                    let seg = domain.segment(z, v, skip);
                    let leave = core
                        .boundaries()
                        .filter_map(|d| seg.frame.crossing_time(d.endpoints()))
                        .fold(f64::INFINITY, f64::min);
                    let next = seg.exit.map_or(f64::INFINITY, |(t, _)| t);
                    if leave <= next {
                        let exit = elapsed + leave;
                        segments.push(leave.min(horizon - elapsed));
                        return Excursion {
                            exit: (exit <= horizon).then_some(exit),
                            segments,
                        };
                    }
                    if elapsed + next > horizon {
                        segments.push(horizon - elapsed);
                        return Excursion { exit: None, segments };
                    }
                    let (tau, a) = seg.exit.unwrap();
                    segments.push(tau);
                    elapsed += tau;
                    let (z1, v1) = seg.frame.at(tau);
                    let (z2, v2, s) = domain.reduce(z1, v1, a);
                    z = z2;
                    v = v2;
                    skip = Some(s);
                }
            }
            TrappingRegion::Collar { chart, half_width, .. } => {
                let w = chart.apply(state.position);
                let dw = chart.derivative(state.position) * state.direction;
                let g = Frame::new(w, dw.arg());
                // the axis (0, ∞) seen from the frame; distance to it along
                // i u satisfies sinh d = |u² + pq| / (2 r u)
                let p = g.pull_back(0.0).unwrap_or(f64::INFINITY);
                let q = if g.core.c == 0.0 { f64::INFINITY } else { -g.core.d / g.core.c };
                let exit = if p.is_finite() && q.is_finite() {
                    let r = 0.5 * (q - p).abs();
                    let rs = r * half_width.sinh();
                    let u = rs + (rs * rs - p * q).max(0.0).sqrt();
                    u.ln()
                } else {
                    f64::INFINITY
                };
                let exit = exit.max(0.0);
                Excursion {
                    exit: (exit <= horizon).then_some(exit),
                    segments: vec![exit.min(horizon)],
                }
            }
        }
    }
}

/// Letters in the random words that pin down limit points.
const LIMIT_WORD_DEPTH: usize = 64;

fn random_reduced_word(rng: &mut ChaCha8Rng, letters: usize, first: Letter, len: usize) -> Vec<Letter> {
    let mut word = vec![first];
    while word.len() < len {
        let prev = *word.last().unwrap();
        let mut a = rng.gen_range(0..letters - 1) as Letter;
        if a >= inverse_letter(prev) {
            a += 1;
        }
        word.push(a);
    }
    word
}

/// Limit point `lim g_{w_0} g_{w_1} ⋯ g_{w_k}(x)` approximated by the word.
fn limit_point(domain: &FlowDomain, word: &[Letter]) -> f64 {
    let last = *word.last().unwrap();
    let mut x = domain.disks[last as usize].center;
    for &a in word.iter().rev() {
        x = domain.maps[a as usize].apply_real(x).unwrap_or(x);
    }
    x
}

/// State on a geodesic joining two random limit points, moved into the
/// fundamental domain. Such geodesics never leave the trapping region.
fn trapped_state(
    region: &TrappingRegion,
    domain: &FlowDomain,
    rng: &mut ChaCha8Rng,
) -> Option<FlowState> {
    if let TrappingRegion::Collar { chart, length, .. } = region {
        let w = Complex64::new(0.0, (length * rng.gen::<f64>()).exp());
        let up = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let inv = chart.inverse();
        let (z, v) = canonical(inv.apply(w), inv.derivative(w) * I * up);
        return Some(FlowState {
            position: z,
            direction: v,
            word_history: MoebiusMap::IDENTITY,
        });
    }
    let n = domain.disks.len();
    let first = rng.gen_range(0..n) as Letter;
    let mut back = rng.gen_range(0..n - 1) as Letter;
    if back >= first {
        back += 1;
    }
    let plus = limit_point(domain, &random_reduced_word(rng, n, first, LIMIT_WORD_DEPTH));
    let minus = limit_point(domain, &random_reduced_word(rng, n, back, LIMIT_WORD_DEPTH));
    let c = 0.5 * (plus + minus);
    let r = 0.5 * (plus - minus).abs();
    let mut z = Complex64::new(c, r);
    let mut v = Complex64::new(if plus > minus { r } else { -r }, 0.0);
    for _ in 0..1000 {
        match domain.disks.iter().position(|d| d.contains(z)) {
            None => {
                let (z, v) = canonical(z, v);
                return Some(FlowState {
                    position: z,
                    direction: v,
                    word_history: MoebiusMap::IDENTITY,
                });
            }
            Some(a) => {
                let h = &domain.inverses[a];
                v = h.derivative(z) * v;
                z = h.apply(z);
            }
        }
    }
    None
}

/// Monte Carlo estimate of `μ_L(T(t)) / μ_L(T(0))` on a grid of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeEstimate {
    pub times: Vec<f64>,
    pub trapped_fractions: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub sample_count: usize,
    pub seed: u64,
    pub acceptance_rate: f64,
    pub fitted_rate: f64,
    pub confidence_interval: (f64, f64),
    pub fit_window: (f64, f64),
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

struct Draw {
    state: FlowState,
    proposals: u64,
}

fn draw_samples(
    region: &TrappingRegion,
    domain: &FlowDomain,
    n: usize,
    seed: u64,
) -> Result<Vec<Draw>> {
    let draws: Vec<Option<Draw>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            region
                .sample(domain, &mut rng)
                .map(|(state, proposals)| Draw { state, proposals })
        })
        .collect();
    let draws: Option<Vec<Draw>> = draws.into_iter().collect();
    let draws = draws.ok_or_else(|| {
        Error::Geometry("rejection sampler found no point of the core".into())
    })?;
    let proposals: u64 = draws.iter().map(|d| d.proposals).sum();
    let rate = n as f64 / proposals as f64;
    if rate < MIN_ACCEPTANCE {
        return Err(Error::Geometry(format!(
            "core rejection sampling accepted {rate:.2e} of proposals"
        )));
    }
    Ok(draws)
}

/// Fraction of Liouville-uniform samples over the trapping region that are
/// still in it at each time.
pub fn trapped_fraction(
    s: &SchottkySurface,
    times: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<EscapeEstimate> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::Estimation(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Definition("times must be finite and nonnegative".into()));
    }
    let region = TrappingRegion::new(s)?;
    let domain = FlowDomain::new(s);
    let draws = draw_samples(&region, &domain, n_samples, seed)?;
    let proposals: u64 = draws.iter().map(|d| d.proposals).sum();
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let exits: Vec<f64> = draws
        .par_iter()
        .map(|d| {
            region
                .excursion(&domain, &d.state, horizon)
                .exit
                .unwrap_or(f64::INFINITY)
        })
        .collect();

    let n = n_samples as f64;
    let mut fractions = Vec::with_capacity(times.len());
    let mut errors = Vec::with_capacity(times.len());
    for &t in times {
        let f = if t == 0.0 {
            1.0
        } else {
            exits.iter().filter(|&&e| e > t).count() as f64 / n
        };
        fractions.push(f);
        errors.push((f * (1.0 - f) / n).sqrt());
    }

    let (lo, hi) = FIT_WINDOW;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for (&t, &f) in times.iter().zip(&fractions) {
        if f >= lo && f <= hi {
            xs.push(t);
            ys.push(f.ln());
            ws.push(n * f / (1.0 - f));
        }
    }
    if xs.len() < 3 {
        return Err(Error::Estimation(format!(
            "only {} times have a trapped fraction in [{lo}, {hi}]; extend the time grid",
            xs.len()
        )));
    }
    let fit = weighted_linear_fit(&xs, &ys, &ws)?;
    let half = 1.96 * fit.slope_stderr;
    Ok(EscapeEstimate {
        times: times.to_vec(),
        trapped_fractions: fractions,
        standard_errors: errors,
        sample_count: n_samples,
        seed,
        acceptance_rate: n / proposals as f64,
        fitted_rate: fit.slope,
        confidence_interval: (fit.slope - half, fit.slope + half),
        fit_window: (xs[0], *xs.last().unwrap()),
    })
}

/// Evenly spaced time grid `0, step, …, t_max`.
pub fn time_grid(t_max: f64, step: f64) -> Vec<f64> {
    let n = (t_max / step).round() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

/// Propagator of `(J, J')` for a normal Jacobi field in curvature −1.
fn jacobi_propagator(t: f64) -> [[f64; 2]; 2] {
    let (c, s) = (t.cosh(), t.sinh());
    [[c, s], [s, c]]
}

fn mat_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn largest_singular_value(m: &[[f64; 2]; 2]) -> f64 {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let s1 = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (s1 + disc)).sqrt()
}

/// `(1/t_max) log sup ‖dg^t‖` over samples still trapped at `t_max`, with the
/// differential assembled from Jacobi-field propagators along each segment.
///
/// Samples are drawn on geodesics between random limit points; the Liouville
/// mass surviving to `t_max` is too small to be reached by uniform sampling.
pub fn lambda_max_estimate(
    s: &SchottkySurface,
    t_max: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if !(t_max >= 10.0) {
        return Err(Error::Definition(format!("t_max must be at least 10, got {t_max}")));
    }
    let region = TrappingRegion::new(s)?;
    let domain = FlowDomain::new(s);
    let norms: Vec<Option<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let state = trapped_state(&region, &domain, &mut sample_rng(seed, i))?;
            let ex = region.excursion(&domain, &state, t_max);
            if ex.exit.is_some() {
                return None;
            }
            let mut m = [[1.0, 0.0], [0.0, 1.0]];
            let mut log_scale = 0.0;
            for &tau in &ex.segments {
                m = mat_mul(&jacobi_propagator(tau), &m);
                let size = largest_singular_value(&m);
                log_scale += size.ln();
                for row in m.iter_mut() {
                    for x in row.iter_mut() {
                        *x /= size;
                    }
                }
            }
            // the flow direction itself is neither stretched nor shrunk
            Some((log_scale + largest_singular_value(&m).ln()).max(0.0))
        })
        .collect();
    let best = norms.into_iter().flatten().fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(Error::InsufficientTrapping(format!(
            "no sample out of {n_samples} stays trapped up to t = {t_max}"
        )));
    }
    Ok(best / t_max)
}

/// Escape rate read as the pressure `P(J^u)` of the unstable Jacobian.
pub fn pressure_from_escape(est: &EscapeEstimate) -> Result<f64> {
    let width = est.confidence_interval.1 - est.confidence_interval.0;
    if !(width < 0.1) {
        return Err(Error::Precision(format!(
            "escape-rate confidence interval has width {width:.3}, need < 0.1"
        )));
    }
    Ok(est.fitted_rate)
}

/// Writes the escape curve as `t,fraction,stderr`.
pub fn write_escape_csv<W: Write>(est: &EscapeEstimate, mut out: W) -> Result<()> {
    writeln!(out, "t,fraction,stderr")?;
    for ((t, f), e) in est
        .times
        .iter()
        .zip(&est.trapped_fractions)
        .zip(&est.standard_errors)
    {
        writeln!(out, "{t},{f},{e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{hyperbolic_distance, Model};

    fn three_funnel() -> SchottkySurface {
        SchottkySurface::symmetric(2, 7.0, Model::UpperHalfPlane).unwrap()
    }

    fn cylinder() -> SchottkySurface {
        SchottkySurface::symmetric(1, 3.0, Model::UpperHalfPlane).unwrap()
    }

    fn core_states(s: &SchottkySurface, n: usize, seed: u64) -> Vec<FlowState> {
        let region = TrappingRegion::new(s).unwrap();
        let domain = FlowDomain::new(s);
        (0..n)
            .map(|i| region.sample(&domain, &mut sample_rng(seed, i)).unwrap().0)
            .collect()
    }

    fn close(a: &FlowState, b: &FlowState, tol: f64) -> bool {
        (a.position - b.position).norm() < tol
            && (a.direction / a.position.im - b.direction / b.position.im).norm() < tol
    }

    #[test]
    fn zero_time_is_identity() {
        let s = three_funnel();
        for st in core_states(&s, 20, 1) {
            let out = flow(&s, &st, 0.0).unwrap();
            assert!(close(&out, &st, 1e-15));
            assert_eq!(out.word_history, MoebiusMap::IDENTITY);
        }
    }

    #[test]
    fn generator_axis_is_periodic() {
        let s = three_funnel();
        let g = s.generators[0];
        let (p, q) = g.fixed_points().unwrap();
        let ell = translation_length(&g).unwrap();
        let domain = FlowDomain::new(&s);
        let (c, r) = (0.5 * (p + q), 0.5 * (q - p).abs());
        let z = (1..200)
            .map(|k| Complex64::new(c, 0.0) + Complex64::from_polar(r, PI * k as f64 / 200.0))
            .find(|&z| domain.in_domain(z))
            .expect("axis meets the fundamental domain");
        // tangent to the axis circle, oriented towards the attracting point
        let mut dir = (z - c) * I;
        if (z + dir * 1e-6 - q).norm() > (z - q).norm() {
            dir = -dir;
        }
        let st = FlowState::new(z, dir.arg());
        let out = flow(&s, &st, ell).unwrap();
        assert!(close(&out, &st, 1e-9), "{out:?} vs {st:?}");
        let w = out.word_history;
        let same = |m: &MoebiusMap| {
            (m.a - g.a).abs() + (m.b - g.b).abs() + (m.c - g.c).abs() + (m.d - g.d).abs() < 1e-9
        };
        assert!(same(&w), "{w:?} vs {g:?}");
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let s = three_funnel();
        for st in core_states(&s, 50, 2) {
            for t in [0.5, 3.0, 8.0] {
                let there = flow(&s, &st, t).unwrap();
                let back = flow(&s, &there.reversed(), t).unwrap().reversed();
                assert!(close(&back, &st, 1e-9), "t = {t}: {back:?} vs {st:?}");
            }
        }
    }

    #[test]
    fn flow_times_add() {
        let s = three_funnel();
        for st in core_states(&s, 50, 3) {
            let (a, b) = (1.7, 4.1);
            let two = flow(&s, &flow(&s, &st, a).unwrap(), b).unwrap();
            let one = flow(&s, &st, a + b).unwrap();
            assert!(close(&two, &one, 1e-9), "{two:?} vs {one:?}");
        }
    }

    #[test]
    fn direction_stays_unit() {
        let s = three_funnel();
        for st in core_states(&s, 50, 4) {
            let mut cur = st;
            for _ in 0..100 {
                cur = flow(&s, &cur, 1.0).unwrap();
                assert!((cur.speed() - 1.0).abs() < 1e-12, "{cur:?} {}", cur.speed());
            }
            let long = flow(&s, &st, 100.0).unwrap();
            assert!((long.speed() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reduction_matches_universal_cover() {
        let s = three_funnel();
        let region = TrappingRegion::new(&s).unwrap();
        let domain = FlowDomain::new(&s);
        let trapped = (0..100).filter_map(|i| trapped_state(&region, &domain, &mut sample_rng(6, i)));
        let mut reductions = 0;
        for st in core_states(&s, 100, 5).into_iter().chain(trapped) {
            for t in [2.0, 6.0, 10.0] {
                let reduced = flow(&s, &st, t).unwrap();
                let cover = flow_unreduced(&st, t);
                let back = reduced.word_history.inverse().apply(cover.position);
                assert!(
                    (back - reduced.position).norm() < 1e-9,
                    "t = {t}: {back} vs {}",
                    reduced.position
                );
                assert!(hyperbolic_distance(reduced.lifted_position(), cover.position) < 1e-6);
                assert!(domain_contains_closed(&s, reduced.position));
                if reduced.word_history != MoebiusMap::IDENTITY {
                    reductions += 1;
                }
            }
        }
        assert!(reductions > 100, "{reductions}");
    }

    fn domain_contains_closed(s: &SchottkySurface, z: Complex64) -> bool {
        FlowDomain::new(s)
            .disks()
            .iter()
            .all(|d| (z - d.center).norm() >= d.radius * (1.0 - 1e-9))
    }

    #[test]
    fn boundary_start_is_pushed_off() {
        let s = three_funnel();
        let d = s.disks.letter_disk(0);
        let z = d.boundary_point(1.0);
        let st = FlowState::new(z, 0.3);
        let out = flow(&s, &st, 2.0).unwrap();
        assert!((out.speed() - 1.0).abs() < 1e-12);
        let inside = FlowState::new(Complex64::new(d.center, 0.5 * d.radius), 0.0);
        assert!(matches!(flow(&s, &inside, 1.0), Err(Error::Geometry(_))));
    }

    #[test]
    fn core_sampler_recovers_area() {
        // area of the core inside the fundamental domain is -2πχ
        let s = three_funnel();
        let region = TrappingRegion::new(&s).unwrap();
        let TrappingRegion::Core(core) = &region else { panic!("rank 2 has a core") };
        let domain = FlowDomain::new(&s);
        let (x0, x1) = core.outer.endpoints();
        let box_area = (x1 - x0) * (1.0 / core.y_min - 1.0 / core.outer.radius);
        let draws = draw_samples(&region, &domain, 20_000, 9).unwrap();
        let proposals: u64 = draws.iter().map(|d| d.proposals).sum();
        let p = 20_000.0 / proposals as f64;
        let area = p * box_area;
        let err = box_area * (p * (1.0 - p) / proposals as f64).sqrt();
        assert!((area - s.core_volume()).abs() < 4.0 * err, "{area} ± {err}");
        for d in &draws {
            assert!(domain.in_domain(d.state.position) && core.contains(d.state.position));
        }
    }

    #[test]
    fn escape_curve_basic_properties() {
        let s = three_funnel();
        let times = time_grid(12.0, 0.25);
        let est = trapped_fraction(&s, &times, MIN_SAMPLES, 3).unwrap();
        assert_eq!(est.trapped_fractions[0], 1.0);
        for w in est.trapped_fractions.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let again = trapped_fraction(&s, &times, MIN_SAMPLES, 3).unwrap();
        assert_eq!(est, again);
        let other = trapped_fraction(&s, &times, MIN_SAMPLES, 4).unwrap();
        assert_ne!(est.trapped_fractions, other.trapped_fractions);
        assert!(matches!(
            trapped_fraction(&s, &times, 100, 3),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn cylinder_escape_rate_is_minus_one() {
        let est = trapped_fraction(&cylinder(), &time_grid(12.0, 0.25), 50_000, 1).unwrap();
        assert!((est.fitted_rate + 1.0).abs() < 0.05, "{}", est.fitted_rate);
        let p = pressure_from_escape(&est).unwrap();
        assert!(p < 0.0);
    }

    #[test]
    fn expansion_rate_is_one() {
        for s in [three_funnel(), cylinder()] {
            let a = lambda_max_estimate(&s, 10.0, MIN_SAMPLES, 1).unwrap();
            assert!((a - 1.0).abs() < 0.05, "{a}");
            let b = lambda_max_estimate(&s, 20.0, 50_000, 1).unwrap();
            assert!((a - b).abs() < 0.02 * a);
        }
        assert!(matches!(
            lambda_max_estimate(&three_funnel(), 200.0, MIN_SAMPLES, 1),
            Err(Error::InsufficientTrapping(_))
        ));
        assert!(lambda_max_estimate(&cylinder(), 5.0, MIN_SAMPLES, 1).is_err());
    }

    #[test]
    fn wide_interval_is_rejected() {
        let est = EscapeEstimate {
            times: vec![0.0, 1.0],
            trapped_fractions: vec![1.0, 0.5],
            standard_errors: vec![0.0, 0.1],
            sample_count: 10_000,
            seed: 0,
            acceptance_rate: 1.0,
            fitted_rate: -0.7,
            confidence_interval: (-0.8, -0.6),
            fit_window: (0.0, 1.0),
        };
        assert!(matches!(pressure_from_escape(&est), Err(Error::Precision(_))));
    }

    #[test]
    fn escape_csv_layout() {
        let s = three_funnel();
        let est = trapped_fraction(&s, &time_grid(10.0, 0.5), MIN_SAMPLES, 1).unwrap();
        let mut buf = Vec::new();
        write_escape_csv(&est, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,fraction,stderr");
        assert_eq!(lines.len(), est.times.len() + 1);
        assert_eq!(lines[1], "0,1,0");
    }
}
