//! Outer measures, outer Lebesgue quasi-norms and covering algorithms.
//!
//! Generating sets are trees `T_Θ(ξ, x, s)` or strips `D_β(x, s)`. A cover is aggregated
//! through its counting function `N(z) = Σ 1_{B_s(x)}(z)`: `‖N‖_{L¹}` for `μ¹_Θ` and `ν_β`,
//! `‖N‖_{L^∞}` for `μ^∞_Θ`. Infima are approximated from above by explicit covers:
//!
//! - a set is sampled on a [`SampleWindow`] and covered by candidates from a finite
//!   [`Lattice`] (greedy), or by the best subset of a small supplied collection (oracle);
//! - superlevel measures of a size come from [`greedy_cover`], which removes trees of size
//!   `> λ` until every lattice tree has size `≤ λ` on the remainder.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{embed, product_field, EmbeddedField, GammaMap, Grid3, Mask, Star};
use crate::error::{param, Error, Result};
use crate::geometry::{boundary_of, Band, CountingFunction, PlaneGrid, Point, Region, Strip, Tree};
use crate::signal::SampledSignal;
use crate::sizes::{
    bht_triple, composite_nonuniform, composite_uniform_linear, evaluate, integral_size, lebesgue_size,
    tree_integral, Ext, SizeKind, SizeSpec,
};
use crate::wavepacket::WavePacket;
use crate::{lit, to_f64, Real};

/// Family of generating sets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Generator<T> {
    Trees { band: Band<T> },
    Strips { beta: T },
}

/// Norm of the counting function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    L1,
    LInf,
}

/// A tree or a strip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenSet<T> {
    Tree(Tree<T>),
    Strip(Strip<T>),
}

impl<T: Real> GenSet<T> {
    pub fn interval(&self) -> (T, T) {
        match self {
            GenSet::Tree(t) => t.interval(),
            GenSet::Strip(d) => d.interval(),
        }
    }

    pub fn scale(&self) -> T {
        match self {
            GenSet::Tree(t) => t.s,
            GenSet::Strip(d) => d.s,
        }
    }

    pub fn top_x(&self) -> T {
        match self {
            GenSet::Tree(t) => t.x,
            GenSet::Strip(d) => d.x,
        }
    }

    /// `ξ_T`, or 0 for strips.
    pub fn xi(&self) -> T {
        match self {
            GenSet::Tree(t) => t.xi,
            GenSet::Strip(_) => T::zero(),
        }
    }

    pub fn contains(&self, p: &Point<T>) -> bool {
        match self {
            GenSet::Tree(t) => t.contains(p),
            GenSet::Strip(d) => d.contains(p),
        }
    }

    pub fn region(&self) -> Region<T> {
        match self {
            GenSet::Tree(t) => Region::tree(*t),
            GenSet::Strip(d) => Region::strip(*d),
        }
    }

    /// A set of the pushed-forward family containing `Γ(self)`: `T_{Θ_Γ}(αξ, x, s)` or
    /// `D_{β/β_Γ}(x, s)`.
    pub fn pushed(&self, g: &GammaMap<T>) -> Result<Self> {
        Ok(match self {
            GenSet::Tree(t) => GenSet::Tree(Tree::new(g.alpha * t.xi, t.x, t.s, g.band(&t.band))?),
            GenSet::Strip(d) => GenSet::Strip(Strip::new(d.x, d.s, d.beta / g.beta)?),
        })
    }

    fn meets(&self, o: &Self) -> bool {
        let ((a, b), (c, d)) = (self.interval(), o.interval());
        a < d && c < b
    }
}

/// Region covered by a family of generating sets.
pub fn region_of<T: Real>(sets: &[GenSet<T>]) -> Region<T> {
    let trees: Vec<Tree<T>> = sets.iter().filter_map(|s| if let GenSet::Tree(t) = s { Some(*t) } else { None }).collect();
    let strips: Vec<Strip<T>> = sets.iter().filter_map(|s| if let GenSet::Strip(d) = s { Some(*d) } else { None }).collect();
    match (trees.is_empty(), strips.is_empty()) {
        (_, true) => Region::Forest { trees },
        (true, false) => Region::StripUnion { strips },
        (false, false) => Region::union(vec![Region::Forest { trees }, Region::StripUnion { strips }]),
    }
}

/// Counting function of the spatial intervals of `sets`.
pub fn counting<T: Real>(sets: &[GenSet<T>]) -> CountingFunction<T> {
    CountingFunction::from_intervals(&sets.iter().map(|s| s.interval()).collect::<Vec<_>>())
}

/// `‖N‖_{L¹}` or `‖N‖_{L^∞}` of the counting function of `sets`.
pub fn aggregate<T: Real>(sets: &[GenSet<T>], agg: Aggregation) -> T {
    let cf = counting(sets);
    match agg {
        Aggregation::L1 => cf.l1,
        Aggregation::LInf => lit(cf.linf as f64),
    }
}

/// Finite lattice of candidate sets: scales `s_max 2^{-j}`, tops `x ∈ (x_step s)ℤ` with
/// `B_s(x) ⊂ [x_lo, x_hi]`, and for trees `ξ ∈ (xi_step |Θ|/s)ℤ ∩ [xi_lo, xi_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice<T> {
    pub s_max: T,
    pub n_scales: usize,
    pub x_lo: T,
    pub x_hi: T,
    pub x_step: T,
    pub xi_lo: T,
    pub xi_hi: T,
    pub xi_step: T,
}

impl<T: Real> Lattice<T> {
    pub fn sets(&self, gen: &Generator<T>) -> Result<Vec<GenSet<T>>> {
        if !(self.s_max > T::zero()) || self.n_scales == 0 || !(self.x_step > T::zero()) || !(self.xi_step > T::zero()) {
            return param("lattice needs s_max > 0, n_scales ≥ 1 and positive steps");
        }
        if !(self.x_lo < self.x_hi) || self.xi_lo > self.xi_hi {
            return param("lattice windows must be nonempty");
        }
        let tol = lit::<T>(1e-9);
        let mut out = Vec::new();
        let mut s = self.s_max;
        for _ in 0..self.n_scales {
            let dx = self.x_step * s;
            let k0 = ((self.x_lo + s) / dx - tol).ceil();
            let k1 = ((self.x_hi - s) / dx + tol).floor();
            let mut k = k0;
            while k <= k1 {
                let x = k * dx;
                match gen {
                    Generator::Strips { beta } => out.push(GenSet::Strip(Strip::new(x, s, *beta)?)),
                    Generator::Trees { band } => {
                        let dxi = self.xi_step * band.width() / s;
                        let j0 = (self.xi_lo / dxi - tol).ceil();
                        let j1 = (self.xi_hi / dxi + tol).floor();
                        let mut j = j0;
                        while j <= j1 {
                            out.push(GenSet::Tree(Tree::new(j * dxi, x, s, *band)?));
                            j += T::one();
                        }
                    }
                }
                k += T::one();
            }
            s = s * lit(0.5);
        }
        Ok(out)
    }
}

/// Sample grid: midpoints in `η` and `y`, geometric in `t` including both endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleWindow<T> {
    pub eta: (T, T),
    pub n_eta: usize,
    pub y: (T, T),
    pub n_y: usize,
    pub t: (T, T),
    pub n_t: usize,
}

impl<T: Real> SampleWindow<T> {
    fn ts(&self) -> Vec<T> {
        let n = self.n_t.max(2);
        let r = (self.t.1 / self.t.0).ln() / lit::<T>((n - 1) as f64);
        (0..n).map(|k| self.t.0 * (r * lit::<T>(k as f64)).exp()).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n_eta == 0 || self.n_y == 0 || self.n_t < 2 || !(self.t.0 > T::zero() && self.t.0 < self.t.1) {
            return param("sample window needs nonempty axes and 0 < t_lo < t_hi");
        }
        Ok(())
    }

    /// All sample points, with a flag marking the top `t`-level.
    pub fn points(&self) -> Result<Vec<(Point<T>, bool)>> {
        self.validate()?;
        let mid = |lo: T, hi: T, n: usize, i: usize| lo + (hi - lo) * (lit::<T>(i as f64) + lit(0.5)) / lit::<T>(n as f64);
        let ts = self.ts();
        let mut out = Vec::with_capacity(self.n_eta * self.n_y * ts.len());
        for (k, &t) in ts.iter().enumerate() {
            for i in 0..self.n_eta {
                for j in 0..self.n_y {
                    let p = Point::new(mid(self.eta.0, self.eta.1, self.n_eta, i), mid(self.y.0, self.y.1, self.n_y, j), t);
                    out.push((p, k + 1 == ts.len()));
                }
            }
        }
        Ok(out)
    }
}

/// Measure, generating family and candidate lattice of an outer measure estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterSpec<T> {
    pub generator: Generator<T>,
    pub aggregation: Aggregation,
    pub lattice: Lattice<T>,
    pub window: SampleWindow<T>,
    #[serde(default = "default_cap")]
    pub max_iterations: usize,
}

fn default_cap() -> usize {
    10_000
}

impl<T: Real> OuterSpec<T> {
    pub fn new(generator: Generator<T>, aggregation: Aggregation, lattice: Lattice<T>, window: SampleWindow<T>) -> Self {
        OuterSpec { generator, aggregation, lattice, window, max_iterations: default_cap() }
    }

    pub fn with_aggregation(&self, aggregation: Aggregation) -> Self {
        OuterSpec { aggregation, ..*self }
    }

    /// The spec of the pushed-forward family: `Θ_Γ` or `β/β_Γ`, with the `ξ`-window scaled by `α`.
    pub fn pushed(&self, g: &GammaMap<T>) -> Result<Self> {
        let generator = match self.generator {
            Generator::Trees { band } => Generator::Trees { band: g.band(&band) },
            Generator::Strips { beta } => Generator::Strips { beta: beta / g.beta },
        };
        let (a, b) = (g.alpha * self.lattice.xi_lo, g.alpha * self.lattice.xi_hi);
        let lattice = Lattice { xi_lo: a.min(b), xi_hi: a.max(b), ..self.lattice };
        Ok(OuterSpec { generator, lattice, ..*self })
    }

    fn accepts(&self, s: &GenSet<T>) -> bool {
        match (self.generator, s) {
            (Generator::Trees { band }, GenSet::Tree(t)) => t.band == band,
            (Generator::Strips { beta }, GenSet::Strip(d)) => d.beta == beta,
            _ => false,
        }
    }
}

/// Sample points of a set inside a window.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSet<T> {
    pub points: Vec<Point<T>>,
    /// Some point lies on the top `t`-level of the window.
    pub reaches_top: bool,
}

impl<T: Real> SampledSet<T> {
    pub fn of(e: &Region<T>, window: &SampleWindow<T>) -> Result<Self> {
        let mut reaches_top = false;
        let mut points = Vec::new();
        for (p, top) in window.points()? {
            if e.contains(&p) {
                reaches_top |= top;
                points.push(p);
            }
        }
        Ok(SampledSet { points, reaches_top })
    }

    /// `Γ` applied to every sample.
    pub fn pushed(&self, g: &GammaMap<T>) -> Result<Self> {
        Ok(SampledSet { points: self.points.iter().map(|p| g.apply(p)).collect::<Result<_>>()?, reaches_top: self.reaches_top })
    }
}

/// How a sampled set is covered.
#[derive(Clone, Debug, PartialEq)]
pub enum CoverMode<T> {
    /// Lattice, leaves of the set and `extra` candidates, selected greedily.
    Greedy { extra: Vec<GenSet<T>> },
    /// Exhaustive minimum over subsets of at most [`BRUTE_MAX`] candidates.
    Brute { candidates: Vec<GenSet<T>> },
}

impl<T> CoverMode<T> {
    pub fn greedy() -> Self {
        CoverMode::Greedy { extra: Vec::new() }
    }
}

pub const BRUTE_MAX: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate<T> {
    pub value: T,
    pub cover: Vec<GenSet<T>>,
    pub samples: usize,
}

impl<T: Real> MeasureEstimate<T> {
    fn empty() -> Self {
        MeasureEstimate { value: T::zero(), cover: Vec::new(), samples: 0 }
    }
}

#[derive(Clone)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn or(&mut self, o: &Bits) {
        self.0.iter_mut().zip(&o.0).for_each(|(a, b)| *a |= b);
    }

    fn count_new(&self, covered: &Bits) -> u32 {
        self.0.iter().zip(&covered.0).map(|(a, b)| (a & !b).count_ones()).sum()
    }

    fn covers(&self, o: &Bits) -> bool {
        self.0.iter().zip(&o.0).all(|(a, b)| b & !a == 0)
    }

    fn full(n: usize) -> Self {
        let mut b = Bits::new(n);
        (0..n).for_each(|i| b.set(i));
        b
    }
}

/// Deterministic preference: larger `s`, then smaller `x`, then larger `ξ`.
fn prefer<T: Real>(a: &GenSet<T>, b: &GenSet<T>) -> Ordering {
    b.scale()
        .partial_cmp(&a.scale())
        .unwrap_or(Ordering::Equal)
        .then(a.top_x().partial_cmp(&b.top_x()).unwrap_or(Ordering::Equal))
        .then(b.xi().partial_cmp(&a.xi()).unwrap_or(Ordering::Equal))
}

/// Outer measure estimate of a region sampled on `spec.window`.
///
/// Greedy unions are also covered part by part, and the smaller of the two estimates is
/// kept, so that greedy estimates are subadditive.
pub fn outer_measure<T: Real>(e: &Region<T>, spec: &OuterSpec<T>, mode: &CoverMode<T>) -> Result<MeasureEstimate<T>> {
    let set = SampledSet::of(e, &spec.window)?;
    let leaves: Vec<GenSet<T>> =
        e.trees().into_iter().map(GenSet::Tree).chain(e.strips().into_iter().map(GenSet::Strip)).collect();
    let mut best = measure_of_samples(&set, &leaves, spec, mode)?;
    if let CoverMode::Greedy { .. } = mode {
        let parts: Vec<Region<T>> = match e {
            Region::Union { parts } => parts.clone(),
            Region::Forest { trees } if trees.len() > 1 => trees.iter().map(|t| Region::tree(*t)).collect(),
            Region::StripUnion { strips } if strips.len() > 1 => strips.iter().map(|d| Region::strip(*d)).collect(),
            _ => Vec::new(),
        };
        if parts.len() > 1 {
            let mut cover = Vec::new();
            for p in &parts {
                cover.extend(outer_measure(p, spec, mode)?.cover);
            }
            let value = aggregate(&cover, spec.aggregation);
            if value < best.value {
                best = MeasureEstimate { value, cover, samples: best.samples };
            }
        }
    }
    Ok(best)
}

/// Covers the sample points of a set; `leaves` are sets known to lie in the set's cover.
pub fn measure_of_samples<T: Real>(
    set: &SampledSet<T>,
    leaves: &[GenSet<T>],
    spec: &OuterSpec<T>,
    mode: &CoverMode<T>,
) -> Result<MeasureEstimate<T>> {
    if set.points.is_empty() {
        return Ok(MeasureEstimate::empty());
    }
    if set.reaches_top {
        return Err(Error::Precondition("the set reaches the top of the sampling window; no finite cover is certified".into()));
    }
    let cands: Vec<GenSet<T>> = match mode {
        CoverMode::Greedy { extra } => {
            let mut c = spec.lattice.sets(&spec.generator)?;
            c.extend(leaves.iter().chain(extra).filter(|s| spec.accepts(s)).copied());
            c
        }
        CoverMode::Brute { candidates } => {
            if candidates.len() > BRUTE_MAX {
                return param(format!("brute-force covers take at most {BRUTE_MAX} candidates"));
            }
            candidates.clone()
        }
    };
    let n = set.points.len();
    let bits: Vec<Bits> = cands
        .par_iter()
        .map(|c| {
            let mut b = Bits::new(n);
            set.points.iter().enumerate().filter(|(_, p)| c.contains(p)).for_each(|(i, _)| b.set(i));
            b
        })
        .collect();
    let mut all = Bits::new(n);
    bits.iter().for_each(|b| all.or(b));
    if let Some(i) = (0..n).find(|&i| all.0[i / 64] & (1 << (i % 64)) == 0) {
        let p = set.points[i];
        return Err(Error::Precondition(format!(
            "sample ({}, {}, {}) is not covered by any candidate",
            to_f64(p.eta),
            to_f64(p.y),
            to_f64(p.t)
        )));
    }
    let chosen = match mode {
        CoverMode::Greedy { .. } => {
            let mut best = greedy_set_cover(&cands, &bits, n, true);
            if spec.aggregation == Aggregation::LInf {
                let alt = greedy_set_cover(&cands, &bits, n, false);
                if aggregate(&pick(&cands, &alt), Aggregation::LInf) < aggregate(&pick(&cands, &best), Aggregation::LInf) {
                    best = alt;
                }
            }
            best
        }
        CoverMode::Brute { .. } => brute_set_cover(&cands, &bits, n, spec.aggregation),
    };
    let cover = pick(&cands, &chosen);
    Ok(MeasureEstimate { value: aggregate(&cover, spec.aggregation), cover, samples: n })
}

fn pick<T: Copy>(c: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| c[i]).collect()
}

/// Greedy weighted set cover (cost `2s`, or unit cost) followed by redundancy pruning.
fn greedy_set_cover<T: Real>(cands: &[GenSet<T>], bits: &[Bits], n: usize, weighted: bool) -> Vec<usize> {
    let mut covered = Bits::new(n);
    let full = Bits::full(n);
    let mut chosen = Vec::new();
    while !covered.covers(&full) {
        let mut best: Option<(usize, T)> = None;
        for (i, b) in bits.iter().enumerate() {
            let new = b.count_new(&covered);
            if new == 0 {
                continue;
            }
            let cost = if weighted { cands[i].scale() + cands[i].scale() } else { T::one() };
            let score = lit::<T>(new as f64) / cost;
            best = match best {
                None => Some((i, score)),
                Some((j, s)) if score > s || (score == s && prefer(&cands[i], &cands[j]) == Ordering::Less) => Some((i, score)),
                keep => keep,
            };
        }
        let (i, _) = best.expect("coverage was checked");
        covered.or(&bits[i]);
        chosen.push(i);
    }
    let mut order = chosen.clone();
    order.sort_by(|&a, &b| prefer(&cands[a], &cands[b]));
    for i in order {
        let mut rest = Bits::new(n);
        chosen.iter().filter(|&&j| j != i).for_each(|&j| rest.or(&bits[j]));
        if rest.covers(&full) {
            chosen.retain(|&j| j != i);
        }
    }
    chosen.sort_unstable();
    chosen
}

fn brute_set_cover<T: Real>(cands: &[GenSet<T>], bits: &[Bits], n: usize, agg: Aggregation) -> Vec<usize> {
    let full = Bits::full(n);
    let mut suffix = vec![Bits::new(n); cands.len() + 1];
    for i in (0..cands.len()).rev() {
        let mut b = suffix[i + 1].clone();
        b.or(&bits[i]);
        suffix[i] = b;
    }
    struct Search<'a, T> {
        cands: &'a [GenSet<T>],
        bits: &'a [Bits],
        suffix: &'a [Bits],
        full: &'a Bits,
        agg: Aggregation,
        best: Option<(T, Vec<usize>)>,
    }
    impl<T: Real> Search<'_, T> {
        fn cost(&self, chosen: &[usize]) -> T {
            aggregate(&pick(self.cands, chosen), self.agg)
        }

        fn go(&mut self, i: usize, covered: &Bits, chosen: &mut Vec<usize>) {
            let c = self.cost(chosen);
            if let Some((b, _)) = &self.best {
                if c >= *b {
                    return;
                }
            }
            if covered.covers(self.full) {
                self.best = Some((c, chosen.clone()));
                return;
            }
            if i == self.cands.len() {
                return;
            }
            let mut reach = covered.clone();
            reach.or(&self.suffix[i]);
            if !reach.covers(self.full) {
                return;
            }
            let mut with = covered.clone();
            with.or(&self.bits[i]);
            chosen.push(i);
            self.go(i + 1, &with, chosen);
            chosen.pop();
            self.go(i + 1, covered, chosen);
        }
    }
    let mut s = Search { cands, bits, suffix: &suffix, full: &full, agg, best: None };
    s.go(0, &Bits::new(n), &mut Vec::new());
    s.best.map(|(_, c)| c).expect("coverage was checked")
}

/// `ν_β` of a union of strips: exhaustive search over the strips and their pairwise hulls
/// when there are few of them, the strips themselves otherwise.
pub fn strip_measure<T: Real>(v: &[Strip<T>]) -> Result<T> {
    if v.is_empty() {
        return Ok(T::zero());
    }
    let beta = v[0].beta;
    if v.iter().any(|d| d.beta != beta) {
        return param("strips of one union share β");
    }
    let sets: Vec<GenSet<T>> = v.iter().map(|d| GenSet::Strip(*d)).collect();
    let own = aggregate(&sets, Aggregation::L1);
    let mut cands = sets.clone();
    for (i, a) in v.iter().enumerate() {
        for b in &v[i + 1..] {
            let (lo, hi) = (a.interval().0.min(b.interval().0), a.interval().1.max(b.interval().1));
            cands.push(GenSet::Strip(Strip::new((lo + hi) * lit(0.5), (hi - lo) * lit(0.5), beta)?));
        }
    }
    if cands.len() > BRUTE_MAX {
        return Ok(own);
    }
    let lo = v.iter().map(|d| d.interval().0).fold(T::infinity(), T::min);
    let hi = v.iter().map(|d| d.interval().1).fold(T::neg_infinity(), T::max);
    let top = v.iter().map(|d| d.s / d.beta).fold(T::zero(), T::max);
    let window = SampleWindow { eta: (T::zero(), T::one()), n_eta: 1, y: (lo, hi), n_y: 256, t: (top * lit(1e-3), top * lit(1.05)), n_t: 48 };
    let lattice = Lattice { s_max: hi - lo, n_scales: 1, x_lo: lo, x_hi: hi, x_step: T::one(), xi_lo: T::zero(), xi_hi: T::zero(), xi_step: T::one() };
    let spec = OuterSpec::new(Generator::Strips { beta }, Aggregation::L1, lattice, window);
    let set = SampledSet::of(&Region::StripUnion { strips: v.to_vec() }, &window)?;
    Ok(measure_of_samples(&set, &[], &spec, &CoverMode::Brute { candidates: cands })?.value.min(own))
}

/// Part of `ℝ³₊` a field is restricted to: `keep ∖ ⋃ remove` (`keep = ℝ³₊` if absent).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Cut<T> {
    pub keep: Option<Region<T>>,
    pub remove: Vec<Region<T>>,
}

impl<T: Real> Cut<T> {
    pub fn everything() -> Self {
        Cut { keep: None, remove: Vec::new() }
    }

    pub fn retains(&self, p: &Point<T>) -> bool {
        self.keep.as_ref().map_or(true, |k| k.contains(p)) && !self.remove.iter().any(|r| r.contains(p))
    }

    pub fn removing(&self, r: Region<T>) -> Self {
        let mut c = self.clone();
        c.remove.push(r);
        c
    }

    pub fn within(&self, r: Region<T>) -> Self {
        let keep = Some(match &self.keep {
            None => r,
            Some(k) => Region::intersection(vec![k.clone(), r]),
        });
        Cut { keep, remove: self.remove.clone() }
    }
}

/// A size functional attached to a fixed field.
pub trait LocalSize<T: Real>: Sync {
    /// Size of the restriction of the field to `cut`, on `set`.
    fn size(&self, set: &GenSet<T>, cut: &Cut<T>) -> Result<T>;

    fn sizes(&self, sets: &[GenSet<T>], cut: &Cut<T>) -> Result<Vec<T>> {
        sets.par_iter().map(|s| self.size(s, cut)).collect()
    }

    /// `∫|F| dη dy dt` over the part of a tree kept by `cut` with `θ` in the restriction band;
    /// `None` where no such integral is defined.
    fn mass(&self, set: &GenSet<T>, cut: &Cut<T>) -> Result<Option<T>>;

    /// Radius `S` with the spatial support inside `B_S(0)`.
    fn support_radius(&self) -> T;

    /// `|Θ^ex₊|` for trees with band `Θ`.
    fn restrict_width(&self, band: &Band<T>) -> T;
}

/// A size from the sizes module on an embedded field; cuts become masks.
#[derive(Clone, Debug)]
pub struct FieldSize<T: Real> {
    pub field: EmbeddedField<T>,
    pub spec: SizeSpec<T>,
    plane: PlaneGrid<T>,
}

impl<T: Real> FieldSize<T> {
    pub fn new(field: EmbeddedField<T>, spec: SizeSpec<T>) -> Result<Self> {
        let plane = PlaneGrid::new(T::zero(), T::one(), 2, T::zero(), T::one(), 2)?;
        Ok(FieldSize { field, spec, plane })
    }

    pub fn masked(&self, cut: &Cut<T>) -> Result<EmbeddedField<T>> {
        let mut f = self.field.clone();
        if let Some(k) = &cut.keep {
            f = f.with_mask(Mask::Below(boundary_of(k, &self.plane)?));
        }
        if !cut.remove.is_empty() {
            f = f.with_mask(Mask::AtOrAbove(boundary_of(&Region::union(cut.remove.clone()), &self.plane)?));
        }
        Ok(f)
    }

    fn tree(set: &GenSet<T>) -> Result<&Tree<T>> {
        match set {
            GenSet::Tree(t) => Ok(t),
            GenSet::Strip(_) => Err(Error::Unsupported("tree sizes are evaluated on trees only".into())),
        }
    }
}

impl<T: Real> LocalSize<T> for FieldSize<T> {
    fn size(&self, set: &GenSet<T>, cut: &Cut<T>) -> Result<T> {
        Ok(evaluate(&self.masked(cut)?, Self::tree(set)?, &self.spec)?.value)
    }

    fn sizes(&self, sets: &[GenSet<T>], cut: &Cut<T>) -> Result<Vec<T>> {
        let f = self.masked(cut)?;
        sets.par_iter().map(|s| Ok(evaluate(&f, Self::tree(s)?, &self.spec)?.value)).collect()
    }

    fn mass(&self, set: &GenSet<T>, cut: &Cut<T>) -> Result<Option<T>> {
        let t = Self::tree(set)?;
        let spec = SizeSpec { kind: SizeKind::Lebesgue, u: Ext(1.0), v: Ext(1.0), ..self.spec };
        let v = lebesgue_size(&self.masked(cut)?, t, &spec)?.value;
        Ok(Some(v * t.s * t.band.width()))
    }

    fn support_radius(&self) -> T {
        let g = &self.field.grid;
        g.y0.abs().max(g.y(g.n_y - 1).abs())
    }

    fn restrict_width(&self, band: &Band<T>) -> T {
        self.spec.restrict.map_or(band.width(), |b| b.width())
    }
}

/// Aggregation of a [`PointField`] over the points of a tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSize {
    /// `Σ m_i / (|Θ| s_T)`: the `(1,1)` Lebesgue size of the measure `Σ m_i δ_{p_i}`.
    Mass,
    /// `max m_i`.
    Sup,
}

/// The measure `Σ m_i δ_{p_i}` on `ℝ³₊`, `m_i ≥ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointField<T> {
    pub points: Vec<(Point<T>, T)>,
    /// Only points with `θ = t(η − ξ_T)` in this band count.
    pub restrict: Option<Band<T>>,
    pub kind: PointSize,
}

impl<T: Real> PointField<T> {
    pub fn new(points: Vec<(Point<T>, T)>, kind: PointSize) -> Result<Self> {
        if points.iter().any(|(p, m)| !(p.t > T::zero()) || !(*m >= T::zero())) {
            return param("point masses need t > 0 and m ≥ 0");
        }
        Ok(PointField { points, restrict: None, kind })
    }

    pub fn with_restrict(mut self, b: Band<T>) -> Self {
        self.restrict = Some(b);
        self
    }

    pub fn scaled(&self, c: T) -> Self {
        PointField { points: self.points.iter().map(|&(p, m)| (p, m * c.abs())).collect(), ..self.clone() }
    }

    fn counted<'a>(&'a self, t: &'a Tree<T>, cut: &'a Cut<T>) -> impl Iterator<Item = T> + 'a {
        self.points
            .iter()
            .filter(move |(p, _)| {
                t.contains(p) && cut.retains(p) && self.restrict.map_or(true, |b| b.contains(p.t * (p.eta - t.xi)))
            })
            .map(|&(_, m)| m)
    }
}

impl<T: Real> LocalSize<T> for PointField<T> {
    fn size(&self, set: &GenSet<T>, cut: &Cut<T>) -> Result<T> {
        let t = FieldSize::tree(set)?;
        Ok(match self.kind {
            PointSize::Mass => self.counted(t, cut).fold(T::zero(), |a, m| a + m) / (t.band.width() * t.s),
            PointSize::Sup => self.counted(t, cut).fold(T::zero(), T::max),
        })
    }

    fn mass(&self, set: &GenSet<T>, cut: &Cut<T>) -> Result<Option<T>> {
        let t = FieldSize::tree(set)?;
        Ok(Some(self.counted(t, cut).fold(T::zero(), |a, m| a + m)))
    }

    fn support_radius(&self) -> T {
        self.points.iter().map(|(p, _)| p.y.abs() + p.t).fold(T::zero(), T::max)
    }

    fn restrict_width(&self, band: &Band<T>) -> T {
        self.restrict.map_or(band.width(), |b| b.width())
    }
}

/// One selection of the covering algorithm. Its distinguished subset is
/// `X_T = T ∩ K ∖ ⋃_{earlier} T'`, with `K` the base region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection<T> {
    pub set: GenSet<T>,
    /// Size of `F` on `X_T` when selected.
    pub size: T,
    /// `∫_{X_T}|F|` over `θ ∈ Θ^ex₊`, where defined.
    pub mass: Option<T>,
    pub removed_before: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverResult<T> {
    pub lambda: T,
    pub selected: Vec<GenSet<T>>,
    pub distinguished_subsets: Vec<Selection<T>>,
    pub measure_estimate: T,
    /// Largest lattice size after the removal; at most `λ`.
    pub residual_size: T,
    pub iterations: usize,
    pub lattice_size: usize,
    /// `S` as used in `ε_max = λ|Θ^ex₊|/(2S)`.
    pub support_radius: T,
    pub eps_max: T,
}

impl<T: Real> CoverResult<T> {
    /// Removed region `⋃ T`, if anything was selected.
    pub fn removed_region(&self) -> Option<Region<T>> {
        (!self.selected.is_empty()).then(|| region_of(&self.selected))
    }

    pub fn in_distinguished(&self, i: usize, p: &Point<T>, base: &Cut<T>) -> bool {
        let sel = &self.distinguished_subsets[i];
        base.retains(p) && sel.set.contains(p) && !self.selected[..sel.removed_before].iter().any(|s| s.contains(p))
    }

    /// Every sample lies in at most one `X_T`.
    pub fn distinguished_disjoint(&self, samples: &[Point<T>], base: &Cut<T>) -> bool {
        samples.iter().all(|p| (0..self.selected.len()).filter(|&i| self.in_distinguished(i, p, base)).count() <= 1)
    }

    /// `min_T mass(X_T) / (λ μ¹(T))` over the selections with a mass.
    pub fn min_mass_ratio(&self) -> Option<T> {
        self.distinguished_subsets
            .iter()
            .filter_map(|s| s.mass.map(|m| m / (self.lambda * (s.set.scale() + s.set.scale()))))
            .reduce(T::min)
    }
}

/// Removes sets of size `> λ` until every lattice set has size `≤ λ` on the remainder.
///
/// Among admissible trees the selection is quasi-maximal in `ξ`: it picks among
/// `ξ_T ≥ max ξ − ε_max`, `ε_max = λ|Θ^ex₊|/(2S)`, by larger `s`, smaller `x`, larger `ξ`.
/// Only the selected set itself is removed.
pub fn greedy_cover<T: Real>(size: &dyn LocalSize<T>, lambda: T, spec: &OuterSpec<T>, base: &Cut<T>) -> Result<CoverResult<T>> {
    let cands = spec.lattice.sets(&spec.generator)?;
    let init = size.sizes(&cands, base)?;
    greedy_from(size, lambda, spec, base, &cands, &init)
}

fn greedy_from<T: Real>(
    size: &dyn LocalSize<T>,
    lambda: T,
    spec: &OuterSpec<T>,
    base: &Cut<T>,
    cands: &[GenSet<T>],
    init: &[T],
) -> Result<CoverResult<T>> {
    if !(lambda > T::zero()) {
        return param("the threshold λ must be positive");
    }
    let support = size.support_radius();
    let eps_max = match spec.generator {
        Generator::Trees { band } if support > T::zero() => lambda * size.restrict_width(&band) / (support + support),
        Generator::Trees { .. } => T::infinity(),
        Generator::Strips { .. } => T::zero(),
    };
    let mut sizes = init.to_vec();
    let mut cut = base.clone();
    let mut chosen: Vec<Selection<T>> = Vec::new();
    loop {
        let adm: Vec<usize> = (0..cands.len()).filter(|&i| sizes[i] > lambda).collect();
        if adm.is_empty() {
            break;
        }
        if chosen.len() >= spec.max_iterations {
            return Err(Error::IterationCap { cap: spec.max_iterations, selected: chosen.len() });
        }
        let xi_max = adm.iter().map(|&i| cands[i].xi()).fold(T::neg_infinity(), T::max);
        let k = adm
            .iter()
            .copied()
            .filter(|&i| cands[i].xi() >= xi_max - eps_max)
            .min_by(|&a, &b| prefer(&cands[a], &cands[b]))
            .expect("nonempty");
        let set = cands[k];
        let mass = size.mass(&set, &cut)?;
        chosen.push(Selection { set, size: sizes[k], mass, removed_before: chosen.len() });
        cut = cut.removing(set.region());
        let touched: Vec<usize> = adm.into_iter().filter(|&i| cands[i].meets(&set)).collect();
        let fresh = size.sizes(&pick(cands, &touched), &cut)?;
        touched.iter().zip(fresh).for_each(|(&i, v)| sizes[i] = v);
    }
    let fin = if chosen.is_empty() { sizes } else { size.sizes(cands, &cut)? };
    let residual = fin.iter().copied().fold(T::zero(), T::max);
    if residual > lambda {
        return Err(Error::Convergence(format!(
            "residual size {} exceeds λ = {} after removal",
            to_f64(residual),
            to_f64(lambda)
        )));
    }
    let selected: Vec<GenSet<T>> = chosen.iter().map(|s| s.set).collect();
    Ok(CoverResult {
        lambda,
        measure_estimate: aggregate(&selected, spec.aggregation),
        iterations: chosen.len(),
        selected,
        distinguished_subsets: chosen,
        residual_size: residual,
        lattice_size: cands.len(),
        support_radius: support,
        eps_max,
    })
}

/// `μ(size > λ)` with the removed set as witness.
pub fn superlevel_measure<T: Real>(size: &dyn LocalSize<T>, lambda: T, spec: &OuterSpec<T>, base: &Cut<T>) -> Result<(T, CoverResult<T>)> {
    let c = greedy_cover(size, lambda, spec, base)?;
    Ok((c.measure_estimate, c))
}

/// Resolution of the layer-cake sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpOptions {
    pub levels: usize,
    /// The grid spans `[top·2^{-span_log2}, top]`.
    pub span_log2: f64,
    /// The grid is extended while the tail below it exceeds this fraction of the sum.
    pub tail_tol: f64,
    pub max_levels: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions { levels: 64, span_log2: 32.0, tail_tol: 1e-6, max_levels: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord<T> {
    pub lambda: T,
    /// `min` of the estimates at this and all smaller thresholds' covers valid here.
    pub measure: T,
    pub raw_measure: T,
    pub residual: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpProfile<T> {
    pub p: Ext,
    /// Largest lattice size of `F`.
    pub top: T,
    pub strong: T,
    pub weak: T,
    pub levels: Vec<LevelRecord<T>>,
    /// Levels added beyond the default grid.
    pub widened: usize,
    /// The tail criterion was met.
    pub converged: bool,
    #[serde(skip)]
    pub covers: Vec<CoverResult<T>>,
}

impl<T: Real> LpProfile<T> {
    /// CSV with columns `lambda, measure, residual`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["lambda", "measure", "residual"])?;
        for l in &self.levels {
            wr.write_record([to_f64(l.lambda), to_f64(l.measure), to_f64(l.residual)].map(|x| format!("{x:.17e}")))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Cover valid at level `j` with the smallest measure.
    pub fn best_cover(&self, j: usize) -> &CoverResult<T> {
        let mut best = j;
        for i in j..self.covers.len() {
            if self.covers[i].measure_estimate < self.covers[best].measure_estimate {
                best = i;
            }
        }
        &self.covers[best]
    }
}

/// `‖F‖_{L^p_μ S}` (or the weak variant) of `1_{base}F`.
pub fn outer_lp<T: Real>(size: &dyn LocalSize<T>, spec: &OuterSpec<T>, p: Ext, weak: bool, base: &Cut<T>) -> Result<T> {
    let prof = outer_lp_profile(size, spec, p, base, &LpOptions::default())?;
    Ok(if weak { prof.weak } else { prof.strong })
}

/// Layer-cake evaluation on a geometric `λ`-grid.
///
/// With `λ_0 = top > λ_1 > …` and the envelope `μ̃_j = min_{i ≥ j} μ(size > λ_i)`,
/// `‖F‖^p = Σ_j μ̃_{j+1}(λ_j^p − λ_{j+1}^p) + μ̃_last λ_last^p` and
/// `‖F‖_{p,∞} = max_j λ_j μ̃_j^{1/p}`.
pub fn outer_lp_profile<T: Real>(size: &dyn LocalSize<T>, spec: &OuterSpec<T>, p: Ext, base: &Cut<T>, opts: &LpOptions) -> Result<LpProfile<T>> {
    if !(p.0 > 0.0) {
        return param("outer Lebesgue exponents must be positive");
    }
    if opts.levels < 2 || opts.max_levels < opts.levels || !(opts.span_log2 > 0.0) {
        return param("layer-cake grid needs at least two levels");
    }
    let cands = spec.lattice.sets(&spec.generator)?;
    let init = size.sizes(&cands, base)?;
    let top = init.iter().copied().fold(T::zero(), T::max);
    if top.is_infinite() {
        return Err(Error::Precondition("the size is infinite on some lattice set".into()));
    }
    let mut prof = LpProfile { p, top, strong: top, weak: top, levels: Vec::new(), widened: 0, converged: true, covers: Vec::new() };
    if top == T::zero() {
        prof.strong = T::zero();
        prof.weak = T::zero();
        return Ok(prof);
    }
    if p.is_inf() {
        return Ok(prof);
    }
    let ratio = lit::<T>(2f64.powf(-opts.span_log2 / (opts.levels - 1) as f64));
    let pp = p.get::<T>();
    let mut n = opts.levels;
    loop {
        let have = prof.covers.len();
        let fresh: Vec<CoverResult<T>> = (have..n)
            .into_par_iter()
            .map(|j| greedy_from(size, top * ratio.powi(j as i32), spec, base, &cands, &init))
            .collect::<Result<_>>()?;
        prof.covers.extend(fresh);
        let raw: Vec<T> = prof.covers.iter().map(|c| c.measure_estimate).collect();
        let mut env = raw.clone();
        for j in (0..n - 1).rev() {
            env[j] = env[j].min(env[j + 1]);
        }
        let lam: Vec<T> = (0..n).map(|j| top * ratio.powi(j as i32)).collect();
        let mut sum = T::zero();
        for j in 0..n - 1 {
            sum += env[j + 1] * (lam[j].powf(pp) - lam[j + 1].powf(pp));
        }
        let tail = env[n - 1] * lam[n - 1].powf(pp);
        let total = sum + tail;
        prof.levels = (0..n)
            .map(|j| LevelRecord { lambda: lam[j], measure: env[j], raw_measure: raw[j], residual: prof.covers[j].residual_size })
            .collect();
        prof.strong = total.powf(T::one() / pp);
        prof.weak = (0..n).map(|j| lam[j] * env[j].powf(T::one() / pp)).fold(T::zero(), T::max);
        if tail <= lit::<T>(opts.tail_tol) * total {
            break;
        }
        if n + 16 > opts.max_levels {
            prof.converged = false;
            break;
        }
        n += 16;
        prof.widened += 16;
    }
    Ok(prof)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicLevel<T> {
    pub k: i64,
    /// `2^{k/p}`.
    pub lambda: T,
    /// Sets of `A_k = ⋃_{l ≥ k} Ã_l`.
    pub a_k: Vec<GenSet<T>>,
    pub measure_a_k: T,
    /// Measure of a cover of `ΔA_k = A_{k−1} ∖ A_k`, namely `Ã_{k−1}`.
    pub measure_slice: T,
    /// Largest lattice size of `1_{ΔA_k}F`.
    pub slice_size: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicDecomposition<T> {
    pub p: T,
    /// Levels `k_lo < k ≤ k_top`; `A_k = ∅` for `k ≥ k_top`.
    pub levels: Vec<AtomicLevel<T>>,
    pub k_lo: i64,
    pub k_top: i64,
    /// `Σ_k 2^k μ(ΔA_k)`.
    pub sum: T,
    /// `‖F‖^p` from [`outer_lp_profile`].
    pub norm_p: T,
    /// `sum / norm_p`.
    pub ratio: T,
    /// `size(1_{ΔA_k}F) ≤ 2^{k/p}` on every level.
    pub slices_bounded: bool,
    /// Largest lattice size below the bottom level, `size(1_{ℝ³₊∖A_{k_lo}}F)`.
    pub bottom_size: T,
}

impl<T: Real> AtomicDecomposition<T> {
    fn a(&self, k: i64) -> Vec<GenSet<T>> {
        if k >= self.k_top {
            return Vec::new();
        }
        let k = k.max(self.k_lo);
        self.levels.iter().find(|l| l.k == k).map(|l| l.a_k.clone()).unwrap_or_default()
    }

    /// Restriction to `ℝ³₊ ∖ (A_{n_lo−1} ∖ A_{n_hi})`, the remainder of `Σ_{n_lo ≤ k ≤ n_hi} 1_{ΔA_k}F`.
    pub fn remainder_cut(&self, base: &Cut<T>, n_lo: i64, n_hi: i64) -> Cut<T> {
        let (outer, inner) = (self.a(n_lo - 1), self.a(n_hi));
        if outer.is_empty() {
            return base.clone();
        }
        let slab = if inner.is_empty() { region_of(&outer) } else { Region::difference(region_of(&outer), region_of(&inner)) };
        base.removing(slab)
    }
}

/// `A_k` from greedy superlevel covers `Ã_k` at `2^{k/p}` over `levels` dyadic steps.
pub fn atomic_decompose<T: Real>(size: &dyn LocalSize<T>, spec: &OuterSpec<T>, p: T, base: &Cut<T>, levels: usize) -> Result<AtomicDecomposition<T>> {
    if !(p > T::zero()) || !p.is_finite() {
        return param("atomic decompositions need a finite p > 0");
    }
    let cands = spec.lattice.sets(&spec.generator)?;
    let init = size.sizes(&cands, base)?;
    let top = init.iter().copied().fold(T::zero(), T::max);
    let prof = outer_lp_profile(size, spec, Ext::from_real(p), base, &LpOptions::default())?;
    let norm_p = prof.strong.powf(p);
    if top == T::zero() {
        return Ok(AtomicDecomposition {
            p,
            levels: Vec::new(),
            k_lo: 0,
            k_top: 0,
            sum: T::zero(),
            norm_p,
            ratio: T::zero(),
            slices_bounded: true,
            bottom_size: T::zero(),
        });
    }
    let lam = |k: i64| lit::<T>(2f64.powf(k as f64 / to_f64(p)));
    let mut k_top = (to_f64(p) * to_f64(top).log2()).ceil() as i64;
    while lam(k_top) < top {
        k_top += 1;
    }
    let k_lo = k_top - levels.max(1) as i64;
    let covers: Vec<CoverResult<T>> =
        (k_lo..k_top).into_par_iter().map(|k| greedy_from(size, lam(k), spec, base, &cands, &init)).collect::<Result<_>>()?;
    // Ã_k: the cheapest cover among those at thresholds ≤ 2^{k/p}.
    let mut tilde: Vec<&CoverResult<T>> = Vec::with_capacity(covers.len());
    for (i, c) in covers.iter().enumerate() {
        let prev = if i == 0 { c } else { tilde[i - 1] };
        tilde.push(if prev.measure_estimate < c.measure_estimate { prev } else { c });
    }
    let n = covers.len();
    let mut a: Vec<Vec<GenSet<T>>> = vec![Vec::new(); n + 1];
    for i in (0..n).rev() {
        let mut sets = a[i + 1].clone();
        for s in &tilde[i].selected {
            if !sets.contains(s) {
                sets.push(*s);
            }
        }
        a[i] = sets;
    }
    let mut out = Vec::with_capacity(n);
    let mut sum = T::zero();
    let mut slices_bounded = true;
    for i in 0..n {
        let k = k_lo + i as i64;
        let (measure_slice, slice_size) = if i == 0 {
            (T::zero(), T::zero())
        } else {
            let cut = if a[i - 1].is_empty() {
                None
            } else {
                let mut c = base.within(region_of(&a[i - 1]));
                if !a[i].is_empty() {
                    c = c.removing(region_of(&a[i]));
                }
                Some(c)
            };
            let ss = match cut {
                Some(c) => size.sizes(&cands, &c)?.into_iter().fold(T::zero(), T::max),
                None => T::zero(),
            };
            (tilde[i - 1].measure_estimate, ss)
        };
        if slice_size > lam(k) {
            slices_bounded = false;
        }
        sum += lit::<T>(2f64.powi(k as i32)) * measure_slice;
        out.push(AtomicLevel {
            k,
            lambda: lam(k),
            measure_a_k: aggregate(&a[i], spec.aggregation),
            a_k: a[i].clone(),
            measure_slice,
            slice_size,
        });
    }
    // ΔA_{k_top} = A_{k_top − 1}.
    let last = n - 1;
    let top_slice = if a[last].is_empty() {
        T::zero()
    } else {
        size.sizes(&cands, &base.within(region_of(&a[last])))?.into_iter().fold(T::zero(), T::max)
    };
    if top_slice > lam(k_top) {
        slices_bounded = false;
    }
    sum += lit::<T>(2f64.powi(k_top as i32)) * tilde[last].measure_estimate;
    out.push(AtomicLevel {
        k: k_top,
        lambda: lam(k_top),
        a_k: Vec::new(),
        measure_a_k: T::zero(),
        measure_slice: tilde[last].measure_estimate,
        slice_size: top_slice,
    });
    let bottom_size = if a[0].is_empty() {
        top
    } else {
        size.sizes(&cands, &base.removing(region_of(&a[0])))?.into_iter().fold(T::zero(), T::max)
    };
    let ratio = if norm_p > T::zero() { sum / norm_p } else { T::zero() };
    Ok(AtomicDecomposition { p, levels: out, k_lo, k_top, sum, norm_p, ratio, slices_bounded, bottom_size })
}

/// Localized quasi-norms on a union of strips `V⁺`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LocalizedKind {
    /// `ν_β(V⁺)^{-1/q}‖1_{V⁺}F‖_{L^q_{μ¹}}`; `plus` takes the sup over `q̄ ∈ {q, ∞}`.
    FLqMu1 { q: Ext, plus: bool },
    /// `‖1_{V⁺}F‖_{L^q_{μ^∞}}`; `plus` takes the sup over `q̄ ∈ {q, ∞}`.
    FLqMuInf { q: Ext, plus: bool },
    /// `ν_β(V⁺)^{-1/r} sup_W μ^∞(W)^{1/q−1/r}‖1_{V⁺∩W}F‖_{L^r_{μ¹}}`; `plus` takes the sup
    /// over `r̄ ∈ {r, q}`.
    Xqr { q: Ext, r: Ext, plus: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizedValue<T> {
    pub value: T,
    pub nu: T,
    pub components: Vec<(String, T)>,
}

fn inv(e: Ext) -> f64 {
    if e.is_inf() {
        0.0
    } else {
        1.0 / e.0
    }
}

/// Number of single trees and of superlevel covers tried as `W⁺` in the `X`-sizes.
pub const X_CANDIDATES: usize = 4;

/// Local value at `V⁺` of the restriction of the field to `base` (`base` carries `V⁻`).
///
/// `trees` fixes the tree lattice; its aggregation is ignored. For `X^{q,r}` with `r < q` the
/// sup over `W⁺` runs over the [`X_CANDIDATES`] largest lattice trees and the superlevel covers
/// of `1_{V⁺}F` at [`X_CANDIDATES`] quantiles of the `λ`-grid; for `r = q` it is attained at
/// `W⁺ ⊇ V⁺`.
pub fn localized_norm<T: Real>(
    size: &dyn LocalSize<T>,
    kind: LocalizedKind,
    v_plus: &[Strip<T>],
    base: &Cut<T>,
    trees: &OuterSpec<T>,
    opts: &LpOptions,
) -> Result<LocalizedValue<T>> {
    if let LocalizedKind::Xqr { q, r, .. } = kind {
        if r.0 > q.0 {
            return param(format!("X^{{q,r}} needs r ≤ q, got q = {q}, r = {r}"));
        }
    }
    let nu = strip_measure(v_plus)?;
    if v_plus.is_empty() || nu == T::zero() {
        return Ok(LocalizedValue { value: T::zero(), nu, components: Vec::new() });
    }
    let cut = base.within(Region::StripUnion { strips: v_plus.to_vec() });
    let mu1 = trees.with_aggregation(Aggregation::L1);
    let muinf = trees.with_aggregation(Aggregation::LInf);
    let nu_pow = |e: Ext| nu.powf(-lit::<T>(inv(e)));
    let mut components = Vec::new();
    let value = match kind {
        LocalizedKind::FLqMu1 { q, plus } => {
            let prof = outer_lp_profile(size, &mu1, q, &cut, opts)?;
            let v = nu_pow(q) * prof.strong;
            components.push((format!("q={q}"), v));
            if plus {
                components.push(("q=inf".into(), prof.top));
                v.max(prof.top)
            } else {
                v
            }
        }
        LocalizedKind::FLqMuInf { q, plus } => {
            let prof = outer_lp_profile(size, &muinf, q, &cut, opts)?;
            components.push((format!("q={q}"), prof.strong));
            if plus {
                components.push(("q=inf".into(), prof.top));
                prof.strong.max(prof.top)
            } else {
                prof.strong
            }
        }
        LocalizedKind::Xqr { q, r, plus } => {
            let rs = if plus && r != q { vec![r, q] } else { vec![r] };
            let mut best = T::zero();
            for rb in rs {
                let v = x_value(size, q, rb, &cut, &mu1, opts)? * nu_pow(rb);
                components.push((format!("r={rb}"), v));
                best = best.max(v);
            }
            best
        }
    };
    Ok(LocalizedValue { value, nu, components })
}

/// `sup_W μ^∞(W)^{1/q−1/r}‖1_{cut∩W}F‖_{L^r_{μ¹}}` over the candidate family.
fn x_value<T: Real>(size: &dyn LocalSize<T>, q: Ext, r: Ext, cut: &Cut<T>, mu1: &OuterSpec<T>, opts: &LpOptions) -> Result<T> {
    let prof = outer_lp_profile(size, mu1, r, cut, opts)?;
    if r == q || prof.top == T::zero() {
        return Ok(prof.strong);
    }
    let expo = lit::<T>(inv(q) - inv(r));
    let cands = mu1.lattice.sets(&mu1.generator)?;
    let init = size.sizes(&cands, cut)?;
    let mut order: Vec<usize> = (0..cands.len()).filter(|&i| init[i] > T::zero()).collect();
    order.sort_by(|&a, &b| init[b].partial_cmp(&init[a]).unwrap_or(Ordering::Equal).then(prefer(&cands[a], &cands[b])));
    let mut ws: Vec<Vec<GenSet<T>>> = order.iter().take(X_CANDIDATES).map(|&i| vec![cands[i]]).collect();
    let n = prof.covers.len();
    for m in 1..=X_CANDIDATES {
        let j = (m * (n - 1)) / X_CANDIDATES;
        if n > 0 {
            let c = prof.best_cover(j);
            if !c.selected.is_empty() && !ws.contains(&c.selected) {
                ws.push(c.selected.clone());
            }
        }
    }
    let mut best = T::zero();
    for w in ws {
        let m_inf = aggregate(&w, Aggregation::LInf);
        let inner = outer_lp_profile(size, mu1, r, &cut.within(region_of(&w)), opts)?.strong;
        best = best.max(m_inf.powf(expo) * inner);
    }
    Ok(best)
}

/// A localized quasi-norm used as a size on strips `D`: the local value at `V⁺ = D`.
pub struct LocalizedSize<'a, T: Real> {
    pub inner: &'a dyn LocalSize<T>,
    pub kind: LocalizedKind,
    pub trees: OuterSpec<T>,
    pub opts: LpOptions,
}

impl<T: Real> LocalSize<T> for LocalizedSize<'_, T> {
    fn size(&self, set: &GenSet<T>, cut: &Cut<T>) -> Result<T> {
        match set {
            GenSet::Strip(d) => Ok(localized_norm(self.inner, self.kind, &[*d], cut, &self.trees, &self.opts)?.value),
            GenSet::Tree(_) => Err(Error::Unsupported("localized sizes are evaluated on strips".into())),
        }
    }

    fn sizes(&self, sets: &[GenSet<T>], cut: &Cut<T>) -> Result<Vec<T>> {
        sets.iter().map(|s| self.size(s, cut)).collect()
    }

    fn mass(&self, _set: &GenSet<T>, _cut: &Cut<T>) -> Result<Option<T>> {
        Ok(None)
    }

    fn support_radius(&self) -> T {
        self.inner.support_radius()
    }

    fn restrict_width(&self, band: &Band<T>) -> T {
        self.inner.restrict_width(band)
    }
}

/// Open superlevel set `{M N > h}` of the uncentered maximal function of a counting function,
/// as sorted disjoint intervals.
pub fn maximal_superlevel<T: Real>(cf: &CountingFunction<T>, h: T) -> Vec<(T, T)> {
    if cf.breakpoints.len() < 2 || !(h > T::zero()) {
        return Vec::new();
    }
    let bp = &cf.breakpoints;
    let reach = cf.l1 / h + T::one();
    let mut xs = vec![bp[0] - reach];
    xs.extend(bp.iter().copied());
    xs.push(bp[bp.len() - 1] + reach);
    let mut vals = vec![T::zero()];
    vals.extend(cf.values.iter().map(|&v| lit::<T>(v as f64)));
    vals.push(T::zero());
    // G(x) = ∫ (N − h) from the left end; x ∈ {MN > h} iff min_{a<x} G(a) < max_{b>x} G(b).
    let mut g = vec![T::zero(); xs.len()];
    for i in 0..vals.len() {
        g[i + 1] = g[i] + (vals[i] - h) * (xs[i + 1] - xs[i]);
    }
    let mut pmin = g.clone();
    for i in 1..g.len() {
        pmin[i] = pmin[i].min(pmin[i - 1]);
    }
    let mut qmax = g.clone();
    for i in (0..g.len() - 1).rev() {
        qmax[i] = qmax[i].max(qmax[i + 1]);
    }
    let mut pieces: Vec<(T, T)> = Vec::new();
    for i in 0..vals.len() {
        let (u, v) = (xs[i], xs[i + 1]);
        let m = vals[i] - h;
        let (pu, qv) = (pmin[i], qmax[i + 1]);
        if m >= T::zero() {
            if pu < qv {
                pieces.push((u, v));
            }
            continue;
        }
        let a1 = (u + (g[i] - pu) / (-m)).max(u);
        let a2 = (u + (g[i] - qv) / (-m)).min(v);
        if a1 > a2 {
            pieces.push((u, v));
        } else {
            if a1 > u {
                pieces.push((u, a1));
            }
            if a2 < v {
                pieces.push((a2, v));
            }
        }
    }
    let mut out: Vec<(T, T)> = Vec::new();
    for (a, b) in pieces {
        if !(b > a) {
            continue;
        }
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineLevel<T> {
    pub k: i64,
    /// `C 2^{(q̄/q₀)k}`.
    pub threshold: T,
    /// Components `B_{s_{k,n}}(x_{k,n})` of `{M N > threshold}` as intervals.
    pub components: Vec<(T, T)>,
    /// `V_k = ⋃ D_1(x_{k,n}, 100 s_{k,n})`.
    pub strips: Vec<Strip<T>>,
    /// `𝒯^∞_k`.
    pub kept: Vec<Tree<T>>,
    pub dropped: Vec<Tree<T>>,
    pub max_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement<T> {
    pub c: T,
    pub doublings: usize,
    pub levels: Vec<RefineLevel<T>>,
    /// `V^ecc = ⋃_k V_k`.
    pub v_ecc: Vec<Strip<T>>,
    /// `Σ_k ‖N_{V_k}‖_{L¹} ≥ ν₁(V^ecc)`.
    pub nu_ecc: T,
    pub budget: T,
}

/// Thins per-level covers `𝒯¹_k` to `𝒯^∞_k` with bounded counting functions, moving the
/// rest into eccentric strips `V^ecc`.
///
/// `𝒯^∞_k` keeps the trees that meet a component `B_{k,n}` with `s_T > 10 s_{k,n}` and those
/// whose interval misses every component. `C` starts at `c0` and doubles until
/// `ν₁(V^ecc) ≤ budget/2`. Asserted on output: `N_{𝒯^∞_k} ≤ 3C 2^{(q̄/q₀)k}` and every dropped
/// tree lies in `V_k`.
pub fn refine_to_linfty<T: Real>(covers: &[(i64, Vec<Tree<T>>)], q0: T, qbar: T, budget: T, c0: T) -> Result<Refinement<T>> {
    if !(q0 > T::zero() && qbar > q0) {
        return param("refinement needs 0 < q₀ < q̄");
    }
    if !(budget > T::zero() && c0 > T::zero()) {
        return param("refinement needs a positive budget and C");
    }
    let mut c = c0;
    for doublings in 0..64 {
        let mut levels = Vec::with_capacity(covers.len());
        let mut v_ecc = Vec::new();
        let mut nu_ecc = T::zero();
        for (k, trees) in covers {
            let threshold = c * lit::<T>(2f64.powf(to_f64(qbar / q0) * *k as f64));
            let cf = CountingFunction::from_intervals(&trees.iter().map(|t| t.interval()).collect::<Vec<_>>());
            let components = maximal_superlevel(&cf, threshold);
            let strips: Vec<Strip<T>> = components
                .iter()
                .map(|&(a, b)| Strip::new((a + b) * lit(0.5), (b - a) * lit(50.0), T::one()))
                .collect::<Result<_>>()?;
            let meets = |t: &Tree<T>, (a, b): (T, T)| {
                let (lo, hi) = t.interval();
                lo < b && a < hi
            };
            let (mut kept, mut dropped) = (Vec::new(), Vec::new());
            for t in trees {
                let big = components.iter().any(|&iv| meets(t, iv) && t.s > (iv.1 - iv.0) * lit(5.0));
                let apart = !components.iter().any(|&iv| meets(t, iv));
                if big || apart {
                    kept.push(*t);
                } else {
                    dropped.push(*t);
                }
            }
            let max_count = CountingFunction::from_intervals(&kept.iter().map(|t| t.interval()).collect::<Vec<_>>()).linf;
            if lit::<T>(max_count as f64) > threshold * lit(3.0) {
                return Err(Error::Convergence(format!("counting function {max_count} exceeds 3C·2^(q̄k/q₀) at level {k}")));
            }
            for t in &dropped {
                let (lo, hi) = t.interval();
                if !strips.iter().any(|d| d.interval().0 <= lo && hi <= d.interval().1) {
                    return Err(Error::Convergence(format!("a dropped tree at level {k} is not contained in V_k")));
                }
            }
            nu_ecc += strips.iter().fold(T::zero(), |a, d| a + d.s + d.s);
            v_ecc.extend(strips.iter().copied());
            levels.push(RefineLevel { k: *k, threshold, components, strips, kept, dropped, max_count });
        }
        if nu_ecc <= budget * lit(0.5) {
            return Ok(Refinement { c, doublings, levels, v_ecc, nu_ecc, budget });
        }
        c = c + c;
    }
    Err(Error::Convergence("no C up to 2^64·c0 meets the eccentric budget".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport<T> {
    pub beta: T,
    /// Greedy `μ¹_Θ(W ∩ V)`.
    pub mu1: T,
    /// Oracle `ν_β(V)`.
    pub nu: T,
    /// Oracle `μ^∞_Θ(W ∩ V)`.
    pub muinf: T,
    /// `4β⁻¹ ν μ^∞`.
    pub rhs: T,
    pub holds: bool,
    pub samples: usize,
}

/// Trees `T(ξ_T, x_{D,T}, 2β⁻¹ s_{D,T})` with `B_{s_{D,T}}(x_{D,T}) = I_T ∩ I_D`, which contain `T ∩ D`.
pub fn comparison_trees<T: Real>(w: &[Tree<T>], v: &[Strip<T>]) -> Result<Vec<Tree<T>>> {
    let mut out = Vec::new();
    for t in w {
        for d in v {
            let (lo, hi) = (t.interval().0.max(d.interval().0), t.interval().1.min(d.interval().1));
            if hi > lo {
                out.push(Tree::new(t.xi, (lo + hi) * lit(0.5), (hi - lo) / d.beta, t.band)?);
            }
        }
    }
    Ok(out)
}

/// `μ¹_Θ(W∩V) ≤ 4β⁻¹ν_β(V)μ^∞_Θ(W∩V)` with a greedy left side and oracle right side.
///
/// `spec` supplies the tree family, lattice and sampling window.
pub fn measure_compare<T: Real>(w: &[Tree<T>], v: &[Strip<T>], spec: &OuterSpec<T>) -> Result<CompareReport<T>> {
    let beta = v.first().map_or(T::one(), |d| d.beta);
    let e = Region::intersection(vec![Region::Forest { trees: w.to_vec() }, Region::StripUnion { strips: v.to_vec() }]);
    let set = SampledSet::of(&e, &spec.window)?;
    let proof: Vec<GenSet<T>> = comparison_trees(w, v)?.into_iter().map(GenSet::Tree).collect();
    let leaves: Vec<GenSet<T>> = w.iter().map(|t| GenSet::Tree(*t)).collect();
    let mu1 = measure_of_samples(&set, &leaves, &spec.with_aggregation(Aggregation::L1), &CoverMode::Greedy { extra: proof.clone() })?;
    let nu = strip_measure(v)?;
    let pool: Vec<GenSet<T>> = leaves.iter().chain(&proof).copied().collect();
    let linf = spec.with_aggregation(Aggregation::LInf);
    let muinf = if pool.len() <= BRUTE_MAX {
        measure_of_samples(&set, &[], &linf, &CoverMode::Brute { candidates: pool })?
    } else {
        measure_of_samples(&set, &leaves, &linf, &CoverMode::Greedy { extra: proof })?
    };
    let rhs = lit::<T>(4.0) / beta * nu * muinf.value;
    Ok(CompareReport { beta, mu1: mu1.value, nu, muinf: muinf.value, rhs, holds: mu1.value <= rhs, samples: set.points.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityKind {
    RnDomination,
    OuterHolder,
    SingleTree,
    UniformEmbedding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub label: String,
    pub beta: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` for `0/0`.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub kind: InequalityKind,
    pub trials: Vec<TrialRecord>,
    pub skipped: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// `(β, max ratio at β)`, β decreasing.
    pub beta_profile: Vec<(f64, f64)>,
    pub factor: f64,
    /// `max_β ratio ≤ factor · ratio at the largest β`.
    pub uniform: bool,
}

impl RatioReport {
    pub fn from_trials(kind: InequalityKind, trials: Vec<TrialRecord>, factor: f64) -> Self {
        let mut ratios: Vec<f64> = trials.iter().filter_map(|t| t.ratio).collect();
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        let skipped = trials.len() - ratios.len();
        let max_ratio = ratios.last().copied().unwrap_or(0.0);
        let median_ratio = if ratios.is_empty() { 0.0 } else { ratios[ratios.len() / 2] };
        let mut betas: Vec<f64> = trials.iter().map(|t| t.beta).collect();
        betas.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
        betas.dedup();
        let beta_profile: Vec<(f64, f64)> = betas
            .iter()
            .map(|&b| (b, trials.iter().filter(|t| t.beta == b).filter_map(|t| t.ratio).fold(0.0, f64::max)))
            .collect();
        let uniform = match beta_profile.first() {
            Some(&(_, r0)) => beta_profile.iter().all(|&(_, r)| r <= factor * r0),
            None => true,
        };
        RatioReport { kind, trials, skipped, max_ratio, median_ratio, beta_profile, factor, uniform }
    }
}

fn trial<T: Real>(label: String, beta: T, lhs: T, rhs: T) -> TrialRecord {
    let (l, r) = (to_f64(lhs), to_f64(rhs));
    let ratio = if l == 0.0 && r == 0.0 { None } else { Some(l / r) };
    TrialRecord { label, beta: to_f64(beta), lhs: l, rhs: r, ratio }
}

/// Inputs of [`inequality_sampler`]; signals and trees are used cyclically.
pub struct SamplerInputs<'a, T: Real> {
    pub signals: &'a [SampledSignal<T>],
    pub grid: &'a Grid3<T>,
    pub packets: &'a [WavePacket<T>],
    pub betas: &'a [T],
    pub trees: &'a [Tree<T>],
    /// `u₁, u₂, u₃` (single tree), `p₁, p₂` (Hölder), `u` (uniform embedding).
    pub exponents: &'a [f64],
    /// Quadrature settings shared by all sizes.
    pub size: SizeSpec<T>,
    /// Needed by the Hölder sampler.
    pub outer: Option<&'a OuterSpec<T>>,
    pub lp: LpOptions,
    pub factor: f64,
}

/// `Θ^in = B_{1/16}(−γ)`.
pub fn inner_band<T: Real>(g: &GammaMap<T>) -> Band<T> {
    let h = lit::<T>(1.0 / 16.0);
    Band { lo: -g.gamma - h, hi: -g.gamma + h }
}

/// Per trial, the two sides of the cited inequality and their ratio.
///
/// - `rn_domination`: `|∫_T H|` against `μ¹(T)·SI(H)(T)` for the BHT triple `H`;
/// - `outer_holder`: `‖F₁F₂‖_{L^p SL^{(1,∞)}}` against `‖F₁‖_{L^{p₁}SL^{(2,∞)}}‖F₂‖_{L^{p₂}SL^{(2,∞)}}`;
/// - `single_tree`: `Σ SI^{(l,l,l),(o,l,l),(l,o,l),(l,l,o)}(H)(T)` against
///   `SF^{u₁}(F₁)·S̃F^{u₂}_{Γ₂}(F₂)·S̃F^{u₃}_{Γ₃}(F₃)` on `T`;
/// - `uniform_embedding`: `sup_T S̃F^u_{Γ₂}(E[f]∘Γ₂)(T)` against `‖f‖_∞`.
pub fn inequality_sampler<T: Real>(kind: InequalityKind, inp: &SamplerInputs<'_, T>, trials: usize) -> Result<RatioReport> {
    if inp.signals.is_empty() || inp.trees.is_empty() || inp.betas.is_empty() {
        return param("the sampler needs signals, trees and β values");
    }
    let sig = |i: usize| &inp.signals[i % inp.signals.len()];
    let tree = |i: usize| inp.trees[i % inp.trees.len()];
    let mut recs = Vec::new();
    match kind {
        InequalityKind::RnDomination => {
            for &beta in inp.betas {
                for i in 0..trials {
                    let t = tree(i);
                    let h = bht_triple([sig(3 * i), sig(3 * i + 1), sig(3 * i + 2)], inp.grid, inp.packets, beta, t.xi, [Star::L; 3])?;
                    let lhs = tree_integral(&h, &t, &inp.size)?;
                    let si = integral_size(&h, &t, [Star::L; 3], &inp.size)?.value;
                    recs.push(trial(format!("trial {i}"), beta, lhs, (t.s + t.s) * si));
                }
            }
        }
        InequalityKind::SingleTree => {
            let u = match inp.exponents {
                [a, b, c] => [*a, *b, *c],
                _ => return param("the single tree estimate takes three exponents u₁, u₂, u₃"),
            };
            if u.iter().any(|&x| !(x >= 1.0)) || u.iter().map(|x| 1.0 / x).sum::<f64>() > 1.0 + 1e-12 {
                return param("the single tree estimate needs u_j ≥ 1 and Σ 1/u_j ≤ 1");
            }
            let patterns = [[Star::L, Star::L, Star::L], [Star::O, Star::L, Star::L], [Star::L, Star::O, Star::L], [Star::L, Star::L, Star::O]];
            for &beta in inp.betas {
                let (g2, g3) = (GammaMap::gamma2(beta)?, GammaMap::gamma3(beta)?);
                let defect = T::one() + g2.alpha + g3.alpha;
                if defect.abs() > lit::<T>(1e-9) * (T::one() + g2.alpha.abs() + g3.alpha.abs()) {
                    return Err(Error::Precondition("the BHT triple needs 1 + α₂ + α₃ = 0".into()));
                }
                for i in 0..trials {
                    let t = tree(i);
                    let f = [sig(3 * i), sig(3 * i + 1), sig(3 * i + 2)];
                    let mut lhs = T::zero();
                    for pat in patterns {
                        lhs += integral_size(&bht_triple(f, inp.grid, inp.packets, beta, t.xi, pat)?, &t, pat, &inp.size)?.value;
                    }
                    let e1 = embed(f[0], inp.grid, inp.packets, None)?;
                    let e2 = embed(f[1], inp.grid, inp.packets, Some(g2))?;
                    let e3 = embed(f[2], inp.grid, inp.packets, Some(g3))?;
                    let s1 = composite_nonuniform(&e1, &t, &SizeSpec { u: Ext(u[0]), ..inp.size })?.value;
                    let spec_j = |g: GammaMap<T>, uj: f64| SizeSpec { u: Ext(uj), ..inp.size }.with_gamma(g).with_restrict(inner_band(&g));
                    let s2 = composite_uniform_linear(&e2, &t, &spec_j(g2, u[1]))?.value;
                    let s3 = composite_uniform_linear(&e3, &t, &spec_j(g3, u[2]))?.value;
                    recs.push(trial(format!("trial {i}"), beta, lhs, s1 * s2 * s3));
                }
            }
        }
        InequalityKind::UniformEmbedding => {
            let u = inp.exponents.first().copied().unwrap_or(f64::INFINITY);
            for &beta in inp.betas {
                let g = GammaMap::gamma2(beta)?;
                let spec = SizeSpec { u: Ext(u), ..inp.size }.with_gamma(g).with_restrict(inner_band(&g));
                for i in 0..trials {
                    let e = embed(sig(i), inp.grid, inp.packets, Some(g))?;
                    let mut lhs = T::zero();
                    for t in inp.trees {
                        lhs = lhs.max(composite_uniform_linear(&e, t, &spec)?.value);
                    }
                    let rhs = sig(i).samples.iter().map(|c| c.norm()).fold(T::zero(), T::max);
                    recs.push(trial(format!("trial {i}"), beta, lhs, rhs));
                }
            }
        }
        InequalityKind::OuterHolder => {
            let (p1, p2) = match inp.exponents {
                [a, b] if *a >= 1.0 && *b >= 1.0 => (*a, *b),
                _ => return param("the outer Hölder inequality takes p₁, p₂ ≥ 1"),
            };
            let outer = inp.outer.ok_or_else(|| Error::Parameter("the outer Hölder sampler needs an outer spec".into()))?;
            let p = 1.0 / (1.0 / p1 + 1.0 / p2);
            let s12 = SizeSpec { kind: SizeKind::Lebesgue, u: Ext(1.0), v: Ext::INF, ..inp.size };
            let sj = SizeSpec { kind: SizeKind::Lebesgue, u: Ext(2.0), v: Ext::INF, ..inp.size };
            let cut = Cut::everything();
            for i in 0..trials {
                let e1 = embed(sig(2 * i), inp.grid, inp.packets, None)?;
                let e2 = embed(sig(2 * i + 1), inp.grid, inp.packets, None)?;
                let h = product_field(&e1, &e2)?;
                let lhs = outer_lp_profile(&FieldSize::new(h, s12)?, outer, Ext(p), &cut, &inp.lp)?.strong;
                let a = outer_lp_profile(&FieldSize::new(e1, sj)?, outer, Ext(p1), &cut, &inp.lp)?.strong;
                let b = outer_lp_profile(&FieldSize::new(e2, sj)?, outer, Ext(p2), &cut, &inp.lp)?.strong;
                recs.push(trial(format!("trial {i}"), T::one(), lhs, a * b));
            }
        }
    }
    Ok(RatioReport::from_trials(kind, recs, inp.factor))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band() -> Band<f64> {
        Band::symmetric(1.0)
    }

    fn lattice() -> Lattice<f64> {
        Lattice { s_max: 1.0, n_scales: 4, x_lo: -2.0, x_hi: 2.0, x_step: 0.5, xi_lo: -1.0, xi_hi: 1.0, xi_step: 0.25 }
    }

    fn window() -> SampleWindow<f64> {
        SampleWindow { eta: (-3.0, 3.0), n_eta: 24, y: (-2.0, 2.0), n_y: 64, t: (1.0 / 16.0, 2.0), n_t: 24 }
    }

    fn spec(agg: Aggregation) -> OuterSpec<f64> {
        OuterSpec::new(Generator::Trees { band: band() }, agg, lattice(), window())
    }

    fn tree(xi: f64, x: f64, s: f64) -> Tree<f64> {
        Tree::new(xi, x, s, band()).unwrap()
    }

    #[test]
    fn lattice_respects_windows() {
        let sets = lattice().sets(&Generator::Trees { band: band() }).unwrap();
        assert!(!sets.is_empty());
        for s in &sets {
            let (lo, hi) = s.interval();
            assert!(lo >= -2.0 - 1e-12 && hi <= 2.0 + 1e-12);
            assert!(s.xi().abs() <= 1.0 + 1e-12);
        }
        let strips = lattice().sets(&Generator::Strips { beta: 0.5 }).unwrap();
        assert!(strips.iter().all(|s| matches!(s, GenSet::Strip(d) if d.beta == 0.5)));
    }

    #[test]
    fn single_tree_covers_itself_and_empty_set_is_null() {
        let t = tree(0.25, 0.5, 0.5);
        let m = outer_measure(&Region::tree(t), &spec(Aggregation::L1), &CoverMode::greedy()).unwrap();
        assert!((m.value - 1.0).abs() < 0.1 * 1.0, "{}", m.value);
        let empty = Region::Forest { trees: vec![] };
        assert_eq!(outer_measure(&empty, &spec(Aggregation::L1), &CoverMode::greedy()).unwrap().value, 0.0);
    }

    #[test]
    fn unbounded_sets_are_rejected() {
        let t = tree(0.0, 0.0, 4.0);
        let r = outer_measure(&Region::tree(t), &spec(Aggregation::L1), &CoverMode::greedy());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn greedy_is_within_twice_the_oracle() {
        let trees = [tree(0.0, -1.0, 0.5), tree(0.5, 0.0, 0.5), tree(0.0, 0.75, 0.25)];
        let e = Region::Forest { trees: trees.to_vec() };
        let mut cands: Vec<GenSet<f64>> = trees.iter().map(|t| GenSet::Tree(*t)).collect();
        for (xi, x, s) in [(0.0, -0.5, 1.0), (0.0, 0.5, 1.0), (0.0, 0.0, 2.0), (0.5, -1.0, 0.5), (0.0, 0.0, 0.5), (0.25, 0.75, 0.5), (0.0, 1.0, 1.0), (0.5, 0.5, 1.0), (0.0, -1.0, 1.0)] {
            cands.push(GenSet::Tree(tree(xi, x, s)));
        }
        assert_eq!(cands.len(), 12);
        let sp = spec(Aggregation::L1);
        let g = outer_measure(&e, &sp, &CoverMode::greedy()).unwrap().value;
        let b = outer_measure(&e, &sp, &CoverMode::Brute { candidates: cands }).unwrap().value;
        assert!(g <= 2.0 * b + 1e-12, "{g} vs {b}");
        assert!(b <= 2.5 + 1e-12);
    }

    #[test]
    fn greedy_measure_is_subadditive() {
        let (a, b) = (Region::tree(tree(0.0, -0.5, 0.5)), Region::tree(tree(0.25, 0.25, 0.5)));
        let sp = spec(Aggregation::L1);
        let u = outer_measure(&Region::union(vec![a.clone(), b.clone()]), &sp, &CoverMode::greedy()).unwrap().value;
        let (ma, mb) = (outer_measure(&a, &sp, &CoverMode::greedy()).unwrap().value, outer_measure(&b, &sp, &CoverMode::greedy()).unwrap().value);
        assert!(u <= ma + mb + 1e-12);
    }

    #[test]
    fn strip_measure_is_the_merged_length() {
        let d = Strip::new(0.0f64, 1.0, 0.5).unwrap();
        assert!((strip_measure(&[d]).unwrap() - 2.0).abs() < 1e-12);
        let e = Strip::new(0.5, 1.0, 0.5).unwrap();
        assert!((strip_measure(&[d, e]).unwrap() - 2.5).abs() < 1e-12);
    }

    fn points_in(t: &Tree<f64>, n: usize, m: f64) -> Vec<(Point<f64>, f64)> {
        (0..n)
            .map(|i| {
                let z = -0.5 + i as f64 / n as f64;
                (t.from_model(0.1, z * 0.5, 0.3).unwrap(), m)
            })
            .collect()
    }

    #[test]
    fn greedy_cover_postconditions_on_a_point_field() {
        let t0 = tree(0.0, 0.0, 1.0);
        let f = PointField::new(points_in(&t0, 8, 1.0), PointSize::Mass).unwrap();
        let sp = spec(Aggregation::L1);
        let top = f.size(&GenSet::Tree(t0), &Cut::everything()).unwrap();
        let lam = top / 2.0;
        let c = greedy_cover(&f, lam, &sp, &Cut::everything()).unwrap();
        assert!(c.residual_size <= lam);
        assert!(c.min_mass_ratio().unwrap() >= band().width() / 2.0 * (1.0 - 1e-12));
        let samples: Vec<Point<f64>> = window().points().unwrap().into_iter().map(|p| p.0).collect();
        assert!(c.distinguished_disjoint(&samples, &Cut::everything()));
        let zero = PointField::new(vec![], PointSize::Mass).unwrap();
        assert!(greedy_cover(&zero, 1.0, &sp, &Cut::everything()).unwrap().selected.is_empty());
    }

    #[test]
    fn superlevel_measure_is_monotone_and_vanishes_above_the_top() {
        let f = PointField::new(
            points_in(&tree(0.0, -1.0, 0.5), 5, 1.0).into_iter().chain(points_in(&tree(0.5, 0.5, 1.0), 7, 2.0)).collect(),
            PointSize::Mass,
        )
        .unwrap();
        let sp = spec(Aggregation::L1);
        let prof = outer_lp_profile(&f, &sp, Ext(1.0), &Cut::everything(), &LpOptions { levels: 10, span_log2: 6.0, ..LpOptions::default() }).unwrap();
        let mut last = 0.0;
        for l in &prof.levels {
            let (m, _) = superlevel_measure(&f, l.lambda, &sp, &Cut::everything()).unwrap();
            assert!(m >= last - 1e-12);
            last = m;
        }
        assert_eq!(superlevel_measure(&f, prof.top, &sp, &Cut::everything()).unwrap().0, 0.0);
    }

    #[test]
    fn outer_lp_of_zero_is_zero_and_p_infinity_is_the_top() {
        let sp = spec(Aggregation::L1);
        let zero = PointField::new(vec![], PointSize::Mass).unwrap();
        assert_eq!(outer_lp(&zero, &sp, Ext(2.0), false, &Cut::everything()).unwrap(), 0.0);
        let f = PointField::new(points_in(&tree(0.0, 0.0, 1.0), 4, 1.0), PointSize::Sup).unwrap();
        assert_eq!(outer_lp(&f, &sp, Ext::INF, false, &Cut::everything()).unwrap(), 1.0);
    }

    #[test]
    fn maximal_superlevel_matches_the_hand_computation() {
        let cf = CountingFunction::from_intervals(&[(0.0f64, 1.0), (0.0, 1.0), (0.0, 1.0)]);
        let s = maximal_superlevel(&cf, 1.0);
        assert_eq!(s.len(), 1);
        assert!((s[0].0 + 2.0).abs() < 1e-12 && (s[0].1 - 3.0).abs() < 1e-12, "{s:?}");
        assert!(maximal_superlevel(&cf, 3.0).is_empty());
    }

    #[test]
    fn refinement_of_a_single_tree_is_trivial() {
        let r = refine_to_linfty(&[(0, vec![tree(0.0, 0.0, 1.0)])], 1.0, 2.0, 2.0, 2.0).unwrap();
        assert!(r.v_ecc.is_empty());
        assert_eq!(r.levels[0].kept.len(), 1);
    }

    #[test]
    fn refinement_caps_stacked_trees() {
        let stack: Vec<Tree<f64>> = (0..40).map(|i| tree(i as f64 * 0.01, 0.0, 0.01)).collect();
        let r = refine_to_linfty(&[(1, stack)], 1.0, 2.0, 1000.0, 1.0).unwrap();
        let l = &r.levels[0];
        assert!(l.max_count as f64 <= 3.0 * l.threshold);
        assert!(!l.dropped.is_empty());
        assert!(r.nu_ecc <= 500.0);
    }

    #[test]
    fn measure_comparison_with_empty_intersection() {
        let r = measure_compare(&[tree(0.0, -1.0, 0.5)], &[Strip::new(1.0, 0.5, 0.5).unwrap()], &spec(Aggregation::L1)).unwrap();
        assert_eq!(r.mu1, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn x_sizes_reject_r_above_q() {
        let f = PointField::new(vec![], PointSize::Mass).unwrap();
        let kind = LocalizedKind::Xqr { q: Ext(2.0), r: Ext(3.0), plus: false };
        let d = Strip::new(0.0, 1.0, 1.0).unwrap();
        assert!(localized_norm(&f, kind, &[d], &Cut::everything(), &spec(Aggregation::L1), &LpOptions::default()).is_err());
    }

    #[test]
    fn ratio_report_skips_zero_over_zero() {
        let recs = vec![trial("a".into(), 1.0, 0.0, 0.0), trial("b".into(), 0.5, 1.0, 2.0)];
        let r = RatioReport::from_trials(InequalityKind::RnDomination, recs, 3.0);
        assert_eq!(r.skipped, 1);
        assert_eq!(r.max_ratio, 0.5);
    }
}
