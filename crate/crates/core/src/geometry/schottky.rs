use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::mobius::{product_with_trace, translation_length_from_trace, Model, MoebiusMap};
use crate::error::{Error, Result};

/// Letters are indexed `2i` for `g_i` and `2i + 1` for `g_i⁻¹`.
pub type Letter = u8;

pub fn inverse_letter(l: Letter) -> Letter {
    l ^ 1
}

/// Euclidean disk centered on the boundary line of the upper half-plane; its
/// boundary is a hyperbolic geodesic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: f64,
    pub radius: f64,
}

impl Disk {
    pub fn from_endpoints(p: f64, q: f64) -> Self {
        Disk {
            center: 0.5 * (p + q),
            radius: 0.5 * (p - q).abs(),
        }
    }

    pub fn endpoints(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm() < self.radius
    }

    pub fn boundary_point(&self, theta: f64) -> Complex64 {
        Complex64::new(self.center, 0.0) + Complex64::from_polar(self.radius, theta)
    }

    /// Euclidean gap between closures (negative when they overlap).
    pub fn gap(&self, other: &Disk) -> f64 {
        (self.center - other.center).abs() - self.radius - other.radius
    }

    /// Image under a Möbius map whose pole lies outside the closed disk. The
    /// radius is computed in closed form so that it keeps full relative
    /// accuracy for tiny images.
    pub fn image(&self, g: &MoebiusMap) -> Result<Disk> {
        if g.c == 0.0 {
            let k = g.a / g.d;
            return Ok(Disk {
                center: k * self.center + g.b / g.d,
                radius: self.radius * k.abs(),
            });
        }
        let pole = -g.d / g.c;
        let u = self.center - pole;
        let denom = u * u - self.radius * self.radius;
        if !(denom > 0.0) {
            return Err(Error::Geometry(
                "disk image is unbounded (pole inside disk)".into(),
            ));
        }
        let c2 = g.c * g.c;
        Ok(Disk {
            center: g.a / g.c - u / (c2 * denom),
            radius: self.radius / (c2 * denom),
        })
    }

    /// Hyperbolic distance between the boundary geodesics of two disks
    /// (zero when the geodesics intersect).
    pub fn geodesic_distance(&self, other: &Disk) -> f64 {
        let dc = self.center - other.center;
        let inv = (dc * dc - self.radius * self.radius - other.radius * other.radius)
            / (2.0 * self.radius * other.radius);
        if inv.abs() <= 1.0 {
            0.0
        } else {
            inv.abs().acosh()
        }
    }

    /// Reflection (inversion) in the boundary circle, as an anti-holomorphic
    /// map `z ↦ M(z̄)`; returns the real matrix `M` with negative determinant.
    pub fn reflection_matrix(&self) -> [f64; 4] {
        let c = self.center;
        let r = self.radius;
        [c, r * r - c * c, 1.0, -c]
    }

    pub fn reflect_real(&self, x: f64) -> f64 {
        self.center + self.radius * self.radius / (x - self.center)
    }

    pub fn reflect(&self, z: Complex64) -> Complex64 {
        Complex64::new(self.center, 0.0) + self.radius * self.radius / (z.conj() - self.center)
    }

    pub fn reflect_disk(&self, other: &Disk) -> Disk {
        let (p, q) = other.endpoints();
        Disk::from_endpoints(self.reflect_real(p), self.reflect_real(q))
    }
}

/// Pairing disks: generator `g_i` maps the exterior of `source[i]` onto the
/// interior of `target[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDisks {
    pub source: Vec<Disk>,
    pub target: Vec<Disk>,
    pub model: Model,
}

impl PairedDisks {
    /// Disk containing the image of everything outside the source disk of
    /// `letter`; for `g_i` this is `target[i]`, for `g_i⁻¹` it is `source[i]`.
    pub fn letter_disk(&self, letter: Letter) -> Disk {
        let i = (letter / 2) as usize;
        if letter % 2 == 0 {
            self.target[i]
        } else {
            self.source[i]
        }
    }

    pub fn all(&self) -> Vec<Disk> {
        (0..2 * self.source.len() as u8)
            .map(|l| self.letter_disk(l))
            .collect()
    }
}

/// Boundary geodesic of a funnel, given by a word in the generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Funnel {
    pub word: Vec<Letter>,
    pub length: f64,
    /// Length requested by the construction recipe, when there is one.
    pub target_length: Option<f64>,
}

/// Reflection data for surfaces obtained as the orientation double of a
/// reflection group in `r + 1` disjoint geodesics. Circle 0 is the one used
/// to form the generators `g_i = R_0 R_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionData {
    pub circles: Vec<Disk>,
    /// Cyclically adjacent circle pairs; each bounds one funnel.
    pub funnel_pairs: Vec<(usize, usize)>,
}

/// Convex co-compact hyperbolic surface Γ\H² given by a Schottky group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchottkySurface {
    pub generators: Vec<MoebiusMap>,
    pub disks: PairedDisks,
    pub funnels: Vec<Funnel>,
    pub euler_characteristic: i64,
    pub model: Model,
    pub reflection: Option<ReflectionData>,
}

impl SchottkySurface {
    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn funnel_lengths(&self) -> Vec<f64> {
        self.funnels.iter().map(|f| f.length).collect()
    }

    /// Area of the convex core, `-2πχ`.
    pub fn core_volume(&self) -> f64 {
        2.0 * std::f64::consts::PI * (-self.euler_characteristic) as f64
    }

    pub fn letter_map(&self, letter: Letter) -> MoebiusMap {
        let g = self.generators[(letter / 2) as usize];
        if letter % 2 == 0 {
            g
        } else {
            g.inverse()
        }
    }

    pub fn letter_maps(&self) -> Vec<MoebiusMap> {
        (0..2 * self.rank() as u8).map(|l| self.letter_map(l)).collect()
    }

    pub fn word_map(&self, word: &[Letter]) -> MoebiusMap {
        let maps = self.letter_maps();
        product_with_trace(word.iter().map(|&l| &maps[l as usize])).0
    }

    /// Translation length of a nontrivial cyclically reduced word.
    pub fn word_length(&self, word: &[Letter]) -> Result<f64> {
        let maps = self.letter_maps();
        let (_, tr) = product_with_trace(word.iter().map(|&l| &maps[l as usize]));
        translation_length_from_trace(tr)
    }

    /// Smallest real interval containing the limit points inside each letter
    /// disk, indexed by letter.
    pub fn limit_set_hulls(&self) -> Result<Vec<(f64, f64)>> {
        let n = 2 * self.rank();
        let maps = self.letter_maps();
        let mut iv: Vec<(f64, f64)> = (0..n as Letter)
            .map(|a| self.disks.letter_disk(a).endpoints())
            .collect();
        for _ in 0..500 {
            let mut next = vec![(f64::INFINITY, f64::NEG_INFINITY); n];
            for b in 0..n {
                for a in 0..n {
                    if a as Letter == inverse_letter(b as Letter) {
                        continue;
                    }
                    for x in [iv[a].0, iv[a].1] {
                        let y = maps[b]
                            .apply_real(x)
                            .ok_or_else(|| Error::Geometry("branch pole on interval".into()))?;
                        next[b].0 = next[b].0.min(y);
                        next[b].1 = next[b].1.max(y);
                    }
                }
            }
            let change = next
                .iter()
                .zip(&iv)
                .map(|(p, q)| ((p.0 - q.0).abs() + (p.1 - q.1).abs()) / (q.1 - q.0).max(1e-300))
                .fold(0.0, f64::max);
            iv = next;
            if change < 1e-14 {
                break;
            }
        }
        Ok(iv)
    }

    /// Surface built from `r + 1` pairwise disjoint bounded reflection circles
    /// whose common exterior is unbounded.
    pub fn from_reflection_circles(
        circles: Vec<Disk>,
        target_lengths: Option<Vec<f64>>,
        model: Model,
    ) -> Result<Self> {
        if circles.len() < 2 {
            return Err(Error::Definition("need at least two reflection circles".into()));
        }
        let c0 = circles[0];
        let m0 = c0.reflection_matrix();
        let mut generators = Vec::new();
        let mut source = Vec::new();
        let mut target = Vec::new();
        for ci in &circles[1..] {
            let mi = ci.reflection_matrix();
            let g = MoebiusMap {
                a: m0[0] * mi[0] + m0[1] * mi[2],
                b: m0[0] * mi[1] + m0[1] * mi[3],
                c: m0[2] * mi[0] + m0[3] * mi[2],
                d: m0[2] * mi[1] + m0[3] * mi[3],
            }
            .normalized();
            generators.push(g);
            source.push(*ci);
            target.push(c0.reflect_disk(ci));
        }

        // cyclic order of the circles along the boundary line
        let mut order: Vec<usize> = (0..circles.len()).collect();
        order.sort_by(|&i, &j| circles[i].center.partial_cmp(&circles[j].center).unwrap());
        let funnel_pairs: Vec<(usize, usize)> = if circles.len() == 2 {
            vec![(order[0], order[1]), (order[1], order[0])]
        } else {
            (0..order.len())
                .map(|k| (order[k], order[(k + 1) % order.len()]))
                .collect()
        };

        let surface_stub = SchottkySurface {
            generators: generators.clone(),
            disks: PairedDisks {
                source: source.clone(),
                target: target.clone(),
                model,
            },
            funnels: vec![],
            euler_characteristic: 1 - generators.len() as i64,
            model,
            reflection: None,
        };
        let mut funnels = Vec::new();
        for (k, &(i, j)) in funnel_pairs.iter().enumerate() {
            // R_i R_j = g_i⁻¹ g_j with g_0 = identity
            let mut word = Vec::new();
            if i != 0 {
                word.push(2 * (i as u8 - 1) + 1);
            }
            if j != 0 {
                word.push(2 * (j as u8 - 1));
            }
            let length = surface_stub.word_length(&word)?;
            let target_length = match &target_lengths {
                Some(t) if t.len() == funnel_pairs.len() => Some(t[k]),
                Some(t) if t.len() == 1 => Some(t[0]),
                _ => None,
            };
            funnels.push(Funnel {
                word,
                length,
                target_length,
            });
        }
        Ok(SchottkySurface {
            funnels,
            reflection: Some(ReflectionData {
                circles,
                funnel_pairs,
            }),
            ..surface_stub
        })
    }

    /// Symmetric surface of rank `r` with `r + 1` funnels of equal length
    /// (two funnels for the rank-one cylinder).
    pub fn symmetric(rank: usize, funnel_length: f64, model: Model) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Definition("rank must be at least 1".into()));
        }
        if !(funnel_length > 0.0) {
            return Err(Error::Definition("funnel length must be positive".into()));
        }
        let n = rank + 1;
        let half = 0.5 * funnel_length;
        let s = (std::f64::consts::PI / n as f64).sin();
        // circles orthogonal to the unit circle, centered at distance sec θ with
        // radius tan θ; adjacent inversive distance equals cosh(ℓ/2)
        let target = half.cosh();
        let f = |th: f64| {
            let t2 = th.tan().powi(2);
            (4.0 * s * s / th.cos().powi(2) - 2.0 * t2) / (2.0 * t2) - target
        };
        let hi = std::f64::consts::PI / n as f64 * (1.0 - 1e-12);
        let theta = crate::numerics::bisect(f, 1e-14, hi, 1e-16)?;
        let mut circles = Vec::with_capacity(n);
        for j in 0..n {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / n as f64
                + std::f64::consts::PI / n as f64;
            // Cayley image of e^{iα} is -cot(α/2)
            let x1 = -1.0 / ((phi - theta) / 2.0).tan();
            let x2 = -1.0 / ((phi + theta) / 2.0).tan();
            circles.push(Disk::from_endpoints(x1, x2));
        }
        Self::from_reflection_circles(circles, Some(vec![funnel_length]), model)
    }

    /// Rank-two surface with three funnels of lengths `(ℓ01, ℓ12, ℓ20)`.
    pub fn pants(lengths: [f64; 3], model: Model) -> Result<Self> {
        if lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Definition("funnel lengths must be positive".into()));
        }
        let d01 = 0.5 * lengths[0];
        let big_b = (0.5 * lengths[1]).cosh();
        let big_a = (0.5 * lengths[2]).cosh();
        // C0 = unit circle, C1 = circle of radius R (its "disk" is the outside),
        // C2 between them on the positive axis.
        let big_r = d01.exp();
        let rho = (big_r * big_r - 1.0) / (2.0 * big_a + 2.0 * big_b * big_r);
        let x = (1.0 + rho * rho + 2.0 * big_a * rho).sqrt();
        let t = MoebiusMap::new(0.0, -1.0, 1.0, big_r.sqrt())?;
        let map_circle = |p: f64, q: f64| -> Result<Disk> {
            let tp = t.apply_real(p).ok_or_else(|| Error::Geometry("pole".into()))?;
            let tq = t.apply_real(q).ok_or_else(|| Error::Geometry("pole".into()))?;
            Ok(Disk::from_endpoints(tp, tq))
        };
        let circles = vec![
            map_circle(-1.0, 1.0)?,
            map_circle(-big_r, big_r)?,
            map_circle(x - rho, x + rho)?,
        ];
        let mut s = Self::from_reflection_circles(circles, None, model)?;
        // label target lengths by the circle pair each funnel separates
        for (f, &(i, j)) in s
            .funnels
            .iter_mut()
            .zip(s.reflection.as_ref().unwrap().funnel_pairs.iter())
        {
            let key = (i.min(j), i.max(j));
            f.target_length = Some(match key {
                (0, 1) => lengths[0],
                (1, 2) => lengths[1],
                _ => lengths[2],
            });
        }
        Ok(s)
    }

    /// Recipe dispatch: rank 2 with three lengths builds a general pair of
    /// pants; otherwise all lengths must agree and the symmetric construction
    /// is used.
    pub fn from_recipe(rank: usize, funnel_lengths: &[f64], model: Model) -> Result<Self> {
        if funnel_lengths.is_empty() {
            return Err(Error::Definition("recipe needs funnel lengths".into()));
        }
        if rank == 2 && funnel_lengths.len() == 3 {
            return Self::pants([funnel_lengths[0], funnel_lengths[1], funnel_lengths[2]], model);
        }
        let l0 = funnel_lengths[0];
        if funnel_lengths.iter().any(|l| (l - l0).abs() > 1e-12 * l0.abs()) {
            return Err(Error::Definition(
                "unequal funnel lengths are only supported for rank 2 (three funnels)".into(),
            ));
        }
        let expected = if rank == 1 { 2 } else { rank + 1 };
        if funnel_lengths.len() != 1 && funnel_lengths.len() != expected {
            return Err(Error::Definition(format!(
                "rank {rank} symmetric recipe has {expected} funnels, got {} lengths",
                funnel_lengths.len()
            )));
        }
        Self::symmetric(rank, l0, model)
    }

    /// Surface from explicit generators. Without disks, the isometric circles
    /// `|cz + d| = 1` and `|cz - a| = 1` are used as the pairing.
    pub fn from_generators(
        generators: Vec<MoebiusMap>,
        disks: Option<PairedDisks>,
        funnel_words: Vec<Vec<Letter>>,
        model: Model,
    ) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::Definition("need at least one generator".into()));
        }
        let generators: Vec<MoebiusMap> = generators.into_iter().map(|g| g.normalized()).collect();
        let disks = match disks {
            Some(d) => d,
            None => {
                let mut source = Vec::new();
                let mut target = Vec::new();
                for g in &generators {
                    if g.c == 0.0 {
                        return Err(Error::Definition(
                            "isometric circles undefined for a generator fixing infinity; give disks explicitly"
                                .into(),
                        ));
                    }
                    let r = 1.0 / g.c.abs();
                    source.push(Disk {
                        center: -g.d / g.c,
                        radius: r,
                    });
                    target.push(Disk {
                        center: g.a / g.c,
                        radius: r,
                    });
                }
                PairedDisks {
                    source,
                    target,
                    model,
                }
            }
        };
        let stub = SchottkySurface {
            euler_characteristic: 1 - generators.len() as i64,
            generators,
            disks,
            funnels: vec![],
            model,
            reflection: None,
        };
        let mut funnels = Vec::new();
        for w in funnel_words {
            if w.iter().any(|&l| l as usize >= 2 * stub.rank()) {
                return Err(Error::Definition("funnel word uses an unknown letter".into()));
            }
            let length = stub.word_length(&w)?;
            funnels.push(Funnel {
                word: w,
                length,
                target_length: None,
            });
        }
        Ok(SchottkySurface { funnels, ..stub })
    }

    /// Rank-`r` family of translations of length `ℓ` along rotated copies of a
    /// fixed geodesic, paired by isometric circles. For small `ℓ` the circles
    /// overlap and the group is not Schottky with this pairing.
    pub fn isometric_circle_family(rank: usize, length: f64, model: Model) -> Result<Self> {
        let base = MoebiusMap::translation_along_unit_circle(length);
        let gens = (0..rank)
            .map(|k| {
                let alpha = std::f64::consts::PI * k as f64 / rank as f64
                    - std::f64::consts::PI / (4.0 * rank as f64);
                let rot = MoebiusMap::rotation(alpha);
                rot.compose(&base).compose(&rot.inverse())
            })
            .collect();
        Self::from_generators(gens, None, vec![], model)
    }

    /// Conjugate surface `hΓh⁻¹`; the pole of `h` must avoid every disk.
    pub fn conjugated(&self, h: &MoebiusMap) -> Result<Self> {
        let hinv = h.inverse();
        let generators = self
            .generators
            .iter()
            .map(|g| h.compose(g).compose(&hinv))
            .collect();
        let map_all = |ds: &[Disk]| -> Result<Vec<Disk>> { ds.iter().map(|d| d.image(h)).collect() };
        let disks = PairedDisks {
            source: map_all(&self.disks.source)?,
            target: map_all(&self.disks.target)?,
            model: self.model,
        };
        let reflection = match &self.reflection {
            Some(r) => Some(ReflectionData {
                circles: map_all(&r.circles)?,
                funnel_pairs: r.funnel_pairs.clone(),
            }),
            None => None,
        };
        Ok(SchottkySurface {
            generators,
            disks,
            funnels: self.funnels.clone(),
            euler_characteristic: self.euler_characteristic,
            model: self.model,
            reflection,
        })
    }
}

/// One invariant check with its measured margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            let msg = self
                .failures()
                .iter()
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::Validation(msg))
        }
    }
}

/// Determinant tolerance for generators with entries of moderate size.
pub const DET_TOLERANCE: f64 = 1e-12;

/// Checks every surface invariant and reports measured margins. Never panics.
pub fn validate_schottky(s: &SchottkySurface) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, margin: f64, detail: String| {
        checks.push(Check {
            name: name.to_string(),
            passed,
            margin,
            detail,
        })
    };

    let r = s.rank();
    let ok_shape = r >= 1 && s.disks.source.len() == r && s.disks.target.len() == r;
    push(
        "shape",
        ok_shape,
        r as f64,
        format!("rank {r}, {} source and {} target disks", s.disks.source.len(), s.disks.target.len()),
    );
    if !ok_shape {
        return ValidationReport { checks };
    }

    // the attainable determinant accuracy is limited by rounding of the entries
    let mut det_err: f64 = 0.0;
    let mut det_ok = true;
    for g in &s.generators {
        let scale = g.a.abs().max(g.b.abs()).max(g.c.abs()).max(g.d.abs());
        let tol = DET_TOLERANCE.max(8.0 * f64::EPSILON * scale * scale);
        let e = (g.det() - 1.0).abs();
        det_ok &= e <= tol;
        det_err = det_err.max(e);
    }
    push(
        "unit determinant",
        det_ok,
        det_err,
        format!("max |det - 1| = {det_err:.3e}"),
    );

    let min_trace = s
        .generators
        .iter()
        .map(|g| g.trace().abs())
        .fold(f64::INFINITY, f64::min);
    push(
        "hyperbolic generators",
        min_trace > 2.0,
        min_trace - 2.0,
        format!("min |trace| = {min_trace}"),
    );

    let all = s.disks.all();
    let min_radius = all.iter().map(|d| d.radius).fold(f64::INFINITY, f64::min);
    push(
        "positive radii",
        min_radius > 0.0 && min_radius.is_finite(),
        min_radius,
        format!("min radius {min_radius:.3e}"),
    );

    let mut min_gap = f64::INFINITY;
    let mut worst = (0, 0);
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let g = all[i].gap(&all[j]);
            if g < min_gap {
                min_gap = g;
                worst = (i, j);
            }
        }
    }
    push(
        "disjoint disks",
        min_gap > 0.0,
        min_gap,
        if min_gap > 0.0 {
            format!("min gap {min_gap:.3e}")
        } else {
            format!(
                "disks intersect (letters {} and {}, gap {min_gap:.3e})",
                worst.0, worst.1
            )
        },
    );

    let mut pairing_err: f64 = 0.0;
    let mut interior_ok = true;
    for (i, g) in s.generators.iter().enumerate() {
        let src = s.disks.source[i];
        let dst = s.disks.target[i];
        for k in 0..16 {
            let z = src.boundary_point(2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 16.0);
            let w = g.apply(z);
            let dev = ((w - dst.center).norm() - dst.radius).abs() / dst.radius;
            pairing_err = pairing_err.max(if dev.is_finite() { dev } else { f64::INFINITY });
        }
        // a point of the exterior of the source disk must land inside the target
        let probe = Complex64::new(src.center, 3.0 * src.radius);
        if !dst.contains(g.apply(probe)) {
            interior_ok = false;
        }
    }
    push(
        "pairing",
        pairing_err <= 1e-10 && interior_ok,
        pairing_err,
        if interior_ok {
            format!("max boundary deviation {pairing_err:.3e}")
        } else {
            "generator does not map the exterior of its source disk into its target disk".into()
        },
    );

    push(
        "euler characteristic",
        s.euler_characteristic == 1 - r as i64,
        (s.euler_characteristic - (1 - r as i64)) as f64,
        format!("chi = {}, rank {r}", s.euler_characteristic),
    );

    let mut funnel_err: f64 = 0.0;
    let mut funnel_ok = true;
    for f in &s.funnels {
        match s.word_length(&f.word) {
            Ok(l) => {
                funnel_err = funnel_err.max((l - f.length).abs());
                if let Some(t) = f.target_length {
                    funnel_err = funnel_err.max((l - t).abs());
                }
            }
            Err(_) => funnel_ok = false,
        }
    }
    push(
        "funnel lengths",
        funnel_ok && funnel_err <= 1e-10,
        funnel_err,
        format!("max deviation {funnel_err:.3e} over {} funnels", s.funnels.len()),
    );

    let vol = s.core_volume();
    push(
        "core volume",
        if r >= 2 { vol > 0.0 && vol.is_finite() } else { vol == 0.0 },
        vol,
        format!("Vol = -2πχ = {vol}"),
    );

    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mobius::translation_length;

    #[test]
    fn rank_one_dilation_with_symmetric_disks() {
        let g = MoebiusMap::translation_along_unit_circle(3.0);
        let s = SchottkySurface::from_generators(vec![g], None, vec![vec![0]], Model::UpperHalfPlane).unwrap();
        // isometric circles are mirror images under z -> -z̄
        assert!((s.disks.source[0].center + s.disks.target[0].center).abs() < 1e-12);
        assert!(validate_schottky(&s).passed());
    }

    #[test]
    fn disk_image_matches_endpoint_images() {
        let g = MoebiusMap::new(2.0, 1.0, 3.0, 2.0).unwrap();
        let d = Disk { center: 2.0, radius: 0.5 };
        let e = d.image(&g).unwrap();
        let (p, q) = d.endpoints();
        let f = Disk::from_endpoints(g.apply_real(p).unwrap(), g.apply_real(q).unwrap());
        assert!((e.center - f.center).abs() < 1e-14 && (e.radius - f.radius).abs() < 1e-14);
        let bad = Disk { center: -0.6, radius: 0.2 };
        assert!(bad.image(&g).is_err());
    }

    #[test]
    fn rank_one_elementary_group_validates() {
        let s = SchottkySurface::symmetric(1, 2.0, Model::UpperHalfPlane).unwrap();
        let rep = validate_schottky(&s);
        assert!(rep.passed(), "{rep:?}");
        assert_eq!(s.euler_characteristic, 0);
        assert!((translation_length(&s.generators[0]).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn three_funnel_symmetric_validates_with_disjoint_disks() {
        for ell in [4.0, 7.0, 12.0] {
            let s = SchottkySurface::symmetric(2, ell, Model::Disk).unwrap();
            let rep = validate_schottky(&s);
            assert!(rep.passed(), "{rep:?}");
            // brute-force disjointness of all 2r disks
            let all = s.disks.all();
            for i in 0..all.len() {
                for j in i + 1..all.len() {
                    assert!((all[i].center - all[j].center).abs() > all[i].radius + all[j].radius);
                }
            }
            assert_eq!(s.funnels.len(), 3);
            for f in &s.funnels {
                assert!((f.length - ell).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pants_with_unequal_lengths() {
        let s = SchottkySurface::pants([6.0, 7.0, 8.0], Model::UpperHalfPlane).unwrap();
        let rep = validate_schottky(&s);
        assert!(rep.passed(), "{rep:?}");
        let mut l = s.funnel_lengths();
        l.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in l.iter().zip([6.0, 7.0, 8.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn short_translations_make_isometric_circles_overlap() {
        let good = SchottkySurface::isometric_circle_family(2, 6.0, Model::UpperHalfPlane).unwrap();
        assert!(validate_schottky(&good).passed());
        let bad = SchottkySurface::isometric_circle_family(2, 0.6, Model::UpperHalfPlane).unwrap();
        let rep = validate_schottky(&bad);
        assert!(!rep.passed());
        let f = rep.failures();
        assert!(f.iter().any(|c| c.detail.contains("disks intersect")));
        // brute-force confirmation of the overlap
        let all = bad.disks.all();
        let overlap = (0..all.len()).any(|i| {
            (i + 1..all.len()).any(|j| (all[i].center - all[j].center).abs() <= all[i].radius + all[j].radius)
        });
        assert!(overlap);
    }

    #[test]
    fn wrong_pairing_is_reported() {
        let mut s = SchottkySurface::symmetric(2, 5.0, Model::UpperHalfPlane).unwrap();
        s.disks.target.swap(0, 1);
        assert!(!validate_schottky(&s).passed());
    }

    #[test]
    fn conjugation_preserves_validity() {
        let s = SchottkySurface::symmetric(2, 6.0, Model::UpperHalfPlane).unwrap();
        let h = MoebiusMap::new(1.3, 0.2, 0.0, 1.0).unwrap();
        let t = s.conjugated(&h).unwrap();
        assert!(validate_schottky(&t).passed());
    }
}
