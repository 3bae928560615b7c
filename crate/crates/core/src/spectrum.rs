//! Primitive closed geodesics as cyclically reduced conjugacy classes.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    format_word, inverse_letter, product_with_trace, translation_length_from_trace, Letter,
    MoebiusMap, SchottkySurface,
};
use crate::numerics::linear_fit;

/// Default cap on the predicted number of explored words.
pub const DEFAULT_WORD_BUDGET: f64 = 5.0e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    Oriented,
    #[default]
    Unoriented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveGeodesic {
    pub word: Vec<Letter>,
    pub length: f64,
    pub trace: f64,
    pub word_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthSpectrum {
    pub cutoff: f64,
    pub orientation: Orientation,
    pub entries: Vec<PrimitiveGeodesic>,
    /// Word-length bound `W(L)`: no class of length ≤ L has a longer word.
    pub completeness_certificate: usize,
    pub rank: usize,
}

impl LengthSpectrum {
    pub fn lengths(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.length).collect()
    }

    /// `N(R) = #{ℓ(γ) ≤ R}`.
    pub fn counting(&self, r: f64) -> usize {
        self.entries.partition_point(|e| e.length <= r)
    }

    /// Multiplicity of each entry in products over oriented classes.
    pub fn oriented_weight(&self) -> f64 {
        match self.orientation {
            Orientation::Oriented => 1.0,
            Orientation::Unoriented => 2.0,
        }
    }

    pub fn min_length(&self) -> Option<f64> {
        self.entries.first().map(|e| e.length)
    }

    /// Restriction to classes of length ≤ `cutoff`.
    pub fn truncated(&self, cutoff: f64) -> LengthSpectrum {
        let n = self.counting(cutoff);
        LengthSpectrum {
            cutoff: cutoff.min(self.cutoff),
            entries: self.entries[..n].to_vec(),
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "canonical_word,word_length,trace,length")?;
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{:.16e},{:.16e}",
                format_word(&e.word),
                e.word_length,
                e.trace,
                e.length
            )?;
        }
        Ok(())
    }
}

pub fn is_cyclically_reduced(word: &[Letter]) -> bool {
    if word.is_empty() {
        return false;
    }
    let n = word.len();
    (0..n).all(|i| word[(i + 1) % n] != inverse_letter(word[i]) || n == 1)
}

/// Smallest rotation in lexicographic order.
pub fn minimal_rotation(word: &[Letter]) -> Vec<Letter> {
    let n = word.len();
    (0..n)
        .map(|k| word[k..].iter().chain(word[..k].iter()).copied().collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}

pub fn inverse_word(word: &[Letter]) -> Vec<Letter> {
    word.iter().rev().map(|&l| inverse_letter(l)).collect()
}

/// Canonical representative of the conjugacy class (and of its inverse in
/// unoriented mode).
pub fn canonical(word: &[Letter], orientation: Orientation) -> Vec<Letter> {
    let a = minimal_rotation(word);
    match orientation {
        Orientation::Oriented => a,
        Orientation::Unoriented => a.min(minimal_rotation(&inverse_word(word))),
    }
}

/// Not a proper power: no nontrivial rotation fixes the word.
pub fn is_primitive(word: &[Letter]) -> bool {
    let n = word.len();
    (1..n).all(|k| n % k != 0 || word[k..] != word[..n - k] || word[n - k..] != word[..k])
}

/// Lower bounds `m(a, b)` on the length of the axis segment crossing the
/// fundamental domain between consecutive letters `a` then `b`.
#[derive(Debug, Clone)]
pub struct TransitionBounds {
    pub rank: usize,
    pub m: Vec<Vec<f64>>,
    pub m_min: f64,
}

impl TransitionBounds {
    pub fn new(s: &SchottkySurface) -> Result<Self> {
        let n = 2 * s.rank();
        let mut m = vec![vec![f64::INFINITY; n]; n];
        let mut m_min = f64::INFINITY;
        for a in 0..n as Letter {
            for b in 0..n as Letter {
                if b == inverse_letter(a) {
                    continue;
                }
                let d = s
                    .disks
                    .letter_disk(inverse_letter(a))
                    .geodesic_distance(&s.disks.letter_disk(b));
                m[a as usize][b as usize] = d;
                m_min = m_min.min(d);
            }
        }
        if !(m_min > 0.0) {
            return Err(Error::Validation(
                "disk boundaries are not separated; enumeration bound unavailable".into(),
            ));
        }
        Ok(TransitionBounds {
            rank: s.rank(),
            m,
            m_min,
        })
    }

    /// Cyclic sum of transition bounds, a lower bound for `ℓ(w)`.
    pub fn word_bound(&self, word: &[Letter]) -> f64 {
        let n = word.len();
        (0..n)
            .map(|i| self.m[word[i] as usize][word[(i + 1) % n] as usize])
            .sum()
    }

    /// Growth exponent `h` with spectral radius of `[e^{-h m(a,b)}]` equal to
    /// one; the number of words with bound ≤ L grows like `e^{hL}`.
    pub fn growth_exponent(&self) -> f64 {
        let n = 2 * self.rank;
        if self.rank == 1 {
            return 0.0;
        }
        let radius = |h: f64| {
            let mut v = vec![1.0; n];
            let mut lam = 1.0;
            for _ in 0..500 {
                let mut w = vec![0.0; n];
                for a in 0..n {
                    for b in 0..n {
                        if self.m[a][b].is_finite() {
                            w[a] += (-h * self.m[a][b]).exp() * v[b];
                        }
                    }
                }
                let norm = w.iter().cloned().fold(0.0, f64::max);
                v = w.iter().map(|x| x / norm).collect();
                lam = norm;
            }
            lam
        };
        let mut lo = 0.0;
        let mut hi = 1.0;
        while radius(hi) > 1.0 {
            hi *= 2.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if radius(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Predicted number of explored words for cutoff `l`.
    pub fn predicted_count(&self, l: f64) -> f64 {
        let n = 2.0 * self.rank as f64;
        if self.rank == 1 {
            return n * (l / self.m_min + 1.0);
        }
        n * (self.growth_exponent() * l).exp()
    }
}

const BOUND_SLACK: f64 = 1e-9;

fn word_geodesic(maps: &[MoebiusMap], word: &[Letter]) -> Result<PrimitiveGeodesic> {
    let (_, tr) = product_with_trace(word.iter().map(|&l| &maps[l as usize]));
    let length = translation_length_from_trace(tr)?;
    Ok(PrimitiveGeodesic {
        word: word.to_vec(),
        length,
        trace: tr.abs(),
        word_length: word.len(),
    })
}

fn accept_class(word: &[Letter], orientation: Orientation) -> bool {
    is_cyclically_reduced(word) && is_primitive(word) && canonical(word, orientation) == word
}

struct Search<'a> {
    bounds: &'a TransitionBounds,
    maps: &'a [MoebiusMap],
    cutoff: f64,
    orientation: Orientation,
    found: Vec<PrimitiveGeodesic>,
    error: Option<Error>,
}

impl Search<'_> {
    fn visit(&mut self, word: &mut Vec<Letter>, partial: f64) {
        let n = word.len();
        let first = word[0];
        let last = word[n - 1];
        let closing = self.bounds.m[last as usize][first as usize];
        if closing.is_finite()
            && partial + closing <= self.cutoff + BOUND_SLACK
            && accept_class(word, self.orientation)
        {
            match word_geodesic(self.maps, word) {
                Ok(g) if g.length <= self.cutoff => self.found.push(g),
                Ok(_) => {}
                Err(e) => {
                    self.error.get_or_insert(e);
                }
            }
        }
        let n_letters = 2 * self.bounds.rank as Letter;
        for b in first..n_letters {
            let step = self.bounds.m[last as usize][b as usize];
            if !step.is_finite() {
                continue;
            }
            if partial + step + self.bounds.m_min > self.cutoff + BOUND_SLACK {
                continue;
            }
            word.push(b);
            self.visit(word, partial + step);
            word.pop();
        }
    }
}

/// All primitive classes with `ℓ ≤ cutoff`, using the default word budget.
pub fn enumerate_geodesics(
    s: &SchottkySurface,
    cutoff: f64,
    orientation: Orientation,
) -> Result<LengthSpectrum> {
    enumerate_geodesics_with_budget(s, cutoff, orientation, DEFAULT_WORD_BUDGET)
}

pub fn enumerate_geodesics_with_budget(
    s: &SchottkySurface,
    cutoff: f64,
    orientation: Orientation,
    budget: f64,
) -> Result<LengthSpectrum> {
    if !(cutoff > 0.0) {
        return Err(Error::Definition("cutoff must be positive".into()));
    }
    let bounds = TransitionBounds::new(s)?;
    let predicted = bounds.predicted_count(cutoff);
    if !(predicted <= budget) {
        return Err(Error::Resource(format!(
            "cutoff {cutoff} predicts {predicted:.3e} words, budget {budget:.3e}"
        )));
    }
    let maps = s.letter_maps();
    let n_letters = 2 * s.rank() as Letter;
    let roots: Vec<(Letter, Option<Letter>)> = (0..n_letters)
        .flat_map(|a| {
            std::iter::once((a, None)).chain(
                (a..n_letters)
                    .filter(move |&b| b != inverse_letter(a))
                    .map(move |b| (a, Some(b))),
            )
        })
        .collect();

    let results: Vec<Result<Vec<PrimitiveGeodesic>>> = roots
        .par_iter()
        .map(|&(a, b)| {
            let mut search = Search {
                bounds: &bounds,
                maps: &maps,
                cutoff,
                orientation,
                found: Vec::new(),
                error: None,
            };
            match b {
                None => {
                    // the single-letter word only; longer words come from the (a, b) roots
                    let w = [a];
                    let closing = bounds.m[a as usize][a as usize];
                    if closing <= cutoff + BOUND_SLACK && accept_class(&w, orientation) {
                        let g = word_geodesic(&maps, &w)?;
                        if g.length <= cutoff {
                            search.found.push(g);
                        }
                    }
                }
                Some(b) => {
                    let step = bounds.m[a as usize][b as usize];
                    if step + bounds.m_min <= cutoff + BOUND_SLACK {
                        let mut w = vec![a, b];
                        search.visit(&mut w, step);
                    }
                }
            }
            match search.error {
                Some(e) => Err(e),
                None => Ok(search.found),
            }
        })
        .collect();

    let mut entries = Vec::new();
    for r in results {
        entries.extend(r?);
    }
    entries.sort_by(|x, y| {
        x.length
            .partial_cmp(&y.length)
            .unwrap()
            .then_with(|| x.word.cmp(&y.word))
    });
    Ok(LengthSpectrum {
        cutoff,
        orientation,
        entries,
        completeness_certificate: (cutoff / bounds.m_min).floor() as usize,
        rank: s.rank(),
    })
}

/// Exhaustive oracle: every primitive class with word length ≤ `max_len`,
/// found by listing all reduced words without any length pruning.
pub fn enumerate_by_word_length(
    s: &SchottkySurface,
    max_len: usize,
    orientation: Orientation,
) -> Result<Vec<PrimitiveGeodesic>> {
    let maps = s.letter_maps();
    let n_letters = 2 * s.rank() as Letter;
    let mut out = std::collections::BTreeMap::new();
    let mut frontier: Vec<Vec<Letter>> = (0..n_letters).map(|a| vec![a]).collect();
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            if is_cyclically_reduced(w) && is_primitive(w) {
                let c = canonical(w, orientation);
                if !out.contains_key(&c) {
                    let g = word_geodesic(&maps, &c)?;
                    out.insert(c, g);
                }
            }
            for b in 0..n_letters {
                if b != inverse_letter(*w.last().unwrap()) {
                    let mut v = w.clone();
                    v.push(b);
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    Ok(out.into_values().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub value: f64,
    pub stderr: f64,
    pub intercept: f64,
}

/// Slope of `log N(R)` against `R` over the upper half of the length range.
pub fn counting_exponent(spec: &LengthSpectrum) -> Result<ExponentEstimate> {
    if spec.rank == 1 {
        // a single closed geodesic: N(R) is eventually constant
        return Ok(ExponentEstimate {
            value: 0.0,
            stderr: 0.0,
            intercept: (spec.entries.len().max(1) as f64).ln(),
        });
    }
    if spec.entries.len() < 200 {
        return Err(Error::Estimation(format!(
            "counting exponent needs at least 200 geodesics, have {}",
            spec.entries.len()
        )));
    }
    let lo = spec.entries[0].length;
    let hi = spec.cutoff;
    let start = lo + 0.5 * (hi - lo);
    let npts = 100;
    let mut xs = Vec::with_capacity(npts);
    let mut ys = Vec::with_capacity(npts);
    for k in 0..npts {
        let r = start + (hi - start) * k as f64 / (npts - 1) as f64;
        let n = spec.counting(r);
        if n > 0 {
            xs.push(r);
            ys.push((n as f64).ln());
        }
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(ExponentEstimate {
        value: fit.slope,
        stderr: fit.slope_stderr,
        intercept: fit.intercept,
    })
}
