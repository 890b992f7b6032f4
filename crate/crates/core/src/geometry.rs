//! Trees, strips, regions of `ℝ³₊` and the boundary graphs `t = b(η, y)`.
//!
//! A tree `T_Θ(ξ, x, s)` is the image of the model tree
//! `mT_Θ = {θ ∈ Θ, 0 < σ < 1 − |ζ|}` under
//! `π_T(θ, ζ, σ) = (ξ + θ/(sσ), x + sζ, sσ)`. A strip is
//! `D_β(x, s) = {0 < t < β⁻¹(s − |y − x|)}`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::embedding::GammaMap;
use crate::error::{param, Error, Result};
use crate::{lit, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub eta: T,
    pub y: T,
    pub t: T,
}

impl<T> Point<T> {
    pub fn new(eta: T, y: T, t: T) -> Self {
        Point { eta, y, t }
    }
}

/// Open interval `(lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Band<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return param("band must be a bounded open interval");
        }
        Ok(Band { lo, hi })
    }

    pub fn symmetric(h: T) -> Self {
        Band { lo: -h, hi: h }
    }

    pub fn contains(&self, v: T) -> bool {
        v > self.lo && v < self.hi
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn is_subset_of(&self, o: &Self) -> bool {
        self.lo >= o.lo && self.hi <= o.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree<T> {
    pub xi: T,
    pub x: T,
    pub s: T,
    pub band: Band<T>,
}

impl<T: Real> Tree<T> {
    pub fn new(xi: T, x: T, s: T, band: Band<T>) -> Result<Self> {
        if !(s > T::zero()) || !s.is_finite() {
            return param("tree scale must be positive");
        }
        Ok(Tree { xi, x, s, band })
    }

    pub fn contains(&self, p: &Point<T>) -> bool {
        if !(p.t > T::zero()) {
            return false;
        }
        let sigma = p.t / self.s;
        let zeta = (p.y - self.x) / self.s;
        sigma < T::one() && sigma < T::one() - zeta.abs() && self.band.contains(p.t * (p.eta - self.xi))
    }

    /// `π_T⁻¹(p) = (θ, ζ, σ)`.
    pub fn model_coords(&self, p: &Point<T>) -> Result<(T, T, T)> {
        if !(p.t > T::zero()) {
            return param("t must be positive");
        }
        Ok((p.t * (p.eta - self.xi), (p.y - self.x) / self.s, p.t / self.s))
    }

    /// `π_T(θ, ζ, σ)`.
    pub fn from_model(&self, theta: T, zeta: T, sigma: T) -> Result<Point<T>> {
        if !(sigma > T::zero()) {
            return param("sigma must be positive");
        }
        let t = self.s * sigma;
        Ok(Point { eta: self.xi + theta / t, y: self.x + self.s * zeta, t })
    }

    pub fn in_model(&self, theta: T, zeta: T, sigma: T) -> bool {
        sigma > T::zero() && sigma < T::one() - zeta.abs() && self.band.contains(theta)
    }

    /// `sup{t : (η, y, t) ∈ T}`; requires `0 ∈ Θ` so that the t-section is `(0, b)`.
    pub fn boundary(&self, eta: T, y: T) -> T {
        let spatial = (self.s - (y - self.x).abs()).max(T::zero());
        let d = eta - self.xi;
        let band = if d > T::zero() {
            self.band.hi / d
        } else if d < T::zero() {
            self.band.lo / d
        } else {
            T::infinity()
        };
        spatial.min(band)
    }

    /// Spatial interval `B_s(x)`.
    pub fn interval(&self) -> (T, T) {
        (self.x - self.s, self.x + self.s)
    }

    pub fn top(&self) -> Point<T> {
        Point { eta: self.xi, y: self.x, t: self.s }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strip<T> {
    pub x: T,
    pub s: T,
    pub beta: T,
}

impl<T: Real> Strip<T> {
    pub fn new(x: T, s: T, beta: T) -> Result<Self> {
        if !(s > T::zero()) || !s.is_finite() {
            return param("strip scale must be positive");
        }
        if !(beta > T::zero() && beta <= T::one()) {
            return param("strip beta must lie in (0, 1]");
        }
        Ok(Strip { x, s, beta })
    }

    pub fn contains(&self, p: &Point<T>) -> bool {
        p.t > T::zero() && p.t < self.boundary(p.eta, p.y)
    }

    pub fn boundary(&self, _eta: T, y: T) -> T {
        (self.s - (y - self.x).abs()).max(T::zero()) / self.beta
    }

    pub fn interval(&self) -> (T, T) {
        (self.x - self.s, self.x + self.s)
    }
}

/// Boolean combination of trees and strips.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Region<T> {
    Tree { tree: Tree<T> },
    Strip { strip: Strip<T> },
    Forest { trees: Vec<Tree<T>> },
    StripUnion { strips: Vec<Strip<T>> },
    Union { parts: Vec<Region<T>> },
    Intersection { parts: Vec<Region<T>> },
    Difference { keep: Box<Region<T>>, remove: Box<Region<T>> },
}

impl<T: Real> Region<T> {
    pub fn tree(t: Tree<T>) -> Self {
        Region::Tree { tree: t }
    }

    pub fn strip(s: Strip<T>) -> Self {
        Region::Strip { strip: s }
    }

    pub fn union(parts: Vec<Region<T>>) -> Self {
        Region::Union { parts }
    }

    pub fn intersection(parts: Vec<Region<T>>) -> Self {
        Region::Intersection { parts }
    }

    pub fn difference(keep: Region<T>, remove: Region<T>) -> Self {
        Region::Difference { keep: Box::new(keep), remove: Box::new(remove) }
    }

    pub fn contains(&self, p: &Point<T>) -> bool {
        match self {
            Region::Tree { tree } => tree.contains(p),
            Region::Strip { strip } => strip.contains(p),
            Region::Forest { trees } => trees.iter().any(|t| t.contains(p)),
            Region::StripUnion { strips } => strips.iter().any(|s| s.contains(p)),
            Region::Union { parts } => parts.iter().any(|r| r.contains(p)),
            Region::Intersection { parts } => !parts.is_empty() && parts.iter().all(|r| r.contains(p)),
            Region::Difference { keep, remove } => keep.contains(p) && !remove.contains(p),
        }
    }

    /// All tree leaves.
    pub fn trees(&self) -> Vec<Tree<T>> {
        let mut out = Vec::new();
        self.visit(&mut |r| match r {
            Region::Tree { tree } => out.push(*tree),
            Region::Forest { trees } => out.extend(trees.iter().copied()),
            _ => {}
        });
        out
    }

    /// All strip leaves.
    pub fn strips(&self) -> Vec<Strip<T>> {
        let mut out = Vec::new();
        self.visit(&mut |r| match r {
            Region::Strip { strip } => out.push(*strip),
            Region::StripUnion { strips } => out.extend(strips.iter().copied()),
            _ => {}
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Region<T>)) {
        f(self);
        match self {
            Region::Union { parts } | Region::Intersection { parts } => parts.iter().for_each(|p| p.visit(f)),
            Region::Difference { keep, remove } => {
                keep.visit(f);
                remove.visit(f);
            }
            _ => {}
        }
    }

    fn has_difference(&self) -> bool {
        let mut d = false;
        self.visit(&mut |r| d |= matches!(r, Region::Difference { .. }));
        d
    }

    /// Common β of the strip leaves (1 if there are none).
    pub fn beta(&self) -> Result<T> {
        let strips = self.strips();
        let Some(first) = strips.first() else { return Ok(T::one()) };
        if strips.iter().any(|s| s.beta != first.beta) {
            return param("strip leaves carry different beta values");
        }
        Ok(first.beta)
    }

    /// Common band of the tree leaves, if any.
    pub fn band(&self) -> Result<Option<Band<T>>> {
        let trees = self.trees();
        let Some(first) = trees.first() else { return Ok(None) };
        if trees.iter().any(|t| t.band != first.band) {
            return param("tree leaves carry different bands");
        }
        Ok(Some(first.band))
    }

    /// `b_E(η, y)`; unions take the sup, intersections the inf.
    pub fn boundary(&self, eta: T, y: T) -> Result<T> {
        Ok(match self {
            Region::Tree { tree } => tree.boundary(eta, y),
            Region::Strip { strip } => strip.boundary(eta, y),
            Region::Forest { trees } => trees.iter().map(|t| t.boundary(eta, y)).fold(T::zero(), T::max),
            Region::StripUnion { strips } => strips.iter().map(|s| s.boundary(eta, y)).fold(T::zero(), T::max),
            Region::Union { parts } => {
                let mut m = T::zero();
                for p in parts {
                    m = m.max(p.boundary(eta, y)?);
                }
                m
            }
            Region::Intersection { parts } => {
                if parts.is_empty() {
                    return Ok(T::zero());
                }
                let mut m = T::infinity();
                for p in parts {
                    m = m.min(p.boundary(eta, y)?);
                }
                m
            }
            Region::Difference { .. } => {
                return Err(Error::Unsupported("set differences have no single boundary graph".into()))
            }
        })
    }

    /// Pushes strip leaves forward under Γ: `Γ(D_β(x, s)) = D_1(x, s)` when `β_Γ = β`.
    pub fn gamma_image_of_strips(&self, g: &GammaMap<T>) -> Result<Region<T>> {
        let push = |s: &Strip<T>| -> Result<Strip<T>> {
            Strip::new(s.x, s.s, s.beta / g.beta)
        };
        Ok(match self {
            Region::Strip { strip } => Region::strip(push(strip)?),
            Region::StripUnion { strips } => Region::StripUnion { strips: strips.iter().map(push).collect::<Result<_>>()? },
            Region::Union { parts } => Region::union(parts.iter().map(|p| p.gamma_image_of_strips(g)).collect::<Result<_>>()?),
            Region::Intersection { parts } => {
                Region::intersection(parts.iter().map(|p| p.gamma_image_of_strips(g)).collect::<Result<_>>()?)
            }
            _ => return Err(Error::Unsupported("only strip regions are pushed forward exactly".into())),
        })
    }

    pub fn to_json(&self) -> Result<String>
    where
        T: Serialize,
    {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        Ok(serde_json::from_str(s)?)
    }
}

/// Uniform `(η, y)` grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneGrid<T> {
    pub eta0: T,
    pub deta: T,
    pub n_eta: usize,
    pub y0: T,
    pub dy: T,
    pub n_y: usize,
}

impl<T: Real> PlaneGrid<T> {
    pub fn new(eta0: T, deta: T, n_eta: usize, y0: T, dy: T, n_y: usize) -> Result<Self> {
        if !(deta > T::zero() && dy > T::zero()) || n_eta == 0 || n_y == 0 {
            return param("plane grid needs positive spacings and node counts");
        }
        Ok(PlaneGrid { eta0, deta, n_eta, y0, dy, n_y })
    }

    pub fn eta(&self, i: usize) -> T {
        self.eta0 + self.deta * lit::<T>(i as f64)
    }

    pub fn y(&self, j: usize) -> T {
        self.y0 + self.dy * lit::<T>(j as f64)
    }
}

/// Outcome of the discrete regularity checks on a boundary graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `max |Δb/Δy|` over adjacent finite nodes.
    pub max_y_slope: f64,
    pub y_bound: f64,
    pub y_ok: bool,
    /// Extreme values of `Δ(1/b)/Δη` over adjacent nodes with `b > 0`.
    pub min_eta_slope: f64,
    pub max_eta_slope: f64,
    pub eta_bounds: (f64, f64),
    pub eta_ok: bool,
}

impl Certificate {
    pub fn ok(&self) -> bool {
        self.y_ok && self.eta_ok
    }
}

/// Relative slack for rounding in the certificate difference quotients.
const CERT_RTOL: f64 = 1e-9;

/// `b_E` sampled on a plane grid, with its certificate; exact evaluation stays available.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFn<T: Real> {
    pub region: Region<T>,
    pub grid: PlaneGrid<T>,
    /// Row-major in `η` then `y`.
    pub values: Vec<T>,
    pub beta: T,
    pub band: Option<Band<T>>,
    pub certificate: Certificate,
}

impl<T: Real> BoundaryFn<T> {
    pub fn value(&self, i_eta: usize, i_y: usize) -> T {
        self.values[i_eta * self.grid.n_y + i_y]
    }

    pub fn eval(&self, eta: T, y: T) -> T {
        self.region.boundary(eta, y).expect("checked at construction")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["eta", "y", "b"])?;
        for i in 0..self.grid.n_eta {
            for j in 0..self.grid.n_y {
                let b = crate::to_f64(self.value(i, j));
                wr.write_record([
                    format!("{:.17e}", crate::to_f64(self.grid.eta(i))),
                    format!("{:.17e}", crate::to_f64(self.grid.y(j))),
                    if b.is_infinite() { "inf".to_string() } else { format!("{b:.17e}") },
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Samples `b_E` on the grid and attaches the regularity certificate.
pub fn boundary_of<T: Real>(region: &Region<T>, grid: &PlaneGrid<T>) -> Result<BoundaryFn<T>> {
    if region.has_difference() {
        return Err(Error::Unsupported("set differences have no single boundary graph".into()));
    }
    let beta = region.beta()?;
    let band = region.band()?;
    if let Some(b) = band {
        if !(b.lo < T::zero() && b.hi > T::zero()) {
            return Err(Error::Precondition("tree bands must contain 0 for a boundary graph".into()));
        }
    }
    let mut values = Vec::with_capacity(grid.n_eta * grid.n_y);
    for i in 0..grid.n_eta {
        for j in 0..grid.n_y {
            values.push(region.boundary(grid.eta(i), grid.y(j))?);
        }
    }
    let certificate = certify(&values, grid, beta, band);
    Ok(BoundaryFn { region: region.clone(), grid: *grid, values, beta, band, certificate })
}

fn certify<T: Real>(values: &[T], grid: &PlaneGrid<T>, beta: T, band: Option<Band<T>>) -> Certificate {
    let f = crate::to_f64::<T>;
    let ny = grid.n_y;
    let y_bound = 1.0 / f(beta);
    let mut max_y_slope: f64 = 0.0;
    let mut y_ok = true;
    for i in 0..grid.n_eta {
        for j in 0..ny.saturating_sub(1) {
            let (a, b) = (f(values[i * ny + j]), f(values[i * ny + j + 1]));
            if a.is_infinite() || b.is_infinite() {
                continue;
            }
            let q = (b - a).abs() / f(grid.dy);
            max_y_slope = max_y_slope.max(q);
            if q > y_bound * (1.0 + CERT_RTOL) + CERT_RTOL * a.abs().max(b.abs()) / f(grid.dy) {
                y_ok = false;
            }
        }
    }
    let eta_bounds = match band {
        Some(b) => (1.0 / f(b.lo), 1.0 / f(b.hi)),
        None => (0.0, 0.0),
    };
    let mut min_eta_slope = f64::INFINITY;
    let mut max_eta_slope = f64::NEG_INFINITY;
    let mut eta_ok = true;
    for i in 0..grid.n_eta.saturating_sub(1) {
        for j in 0..ny {
            let (a, b) = (f(values[i * ny + j]), f(values[(i + 1) * ny + j]));
            if !(a > 0.0 && b > 0.0) {
                continue;
            }
            let (ia, ib) = (1.0 / a, 1.0 / b);
            let q = (ib - ia) / f(grid.deta);
            min_eta_slope = min_eta_slope.min(q);
            max_eta_slope = max_eta_slope.max(q);
            let slack = CERT_RTOL * (1.0 + ia.abs().max(ib.abs()) / f(grid.deta));
            if q < eta_bounds.0 - slack || q > eta_bounds.1 + slack {
                eta_ok = false;
            }
        }
    }
    Certificate { max_y_slope, y_bound, y_ok, min_eta_slope, max_eta_slope, eta_bounds, eta_ok }
}

/// `b*` in model coordinates of `T`: the `σ` with `s_T σ = b(ξ_T + θ/(s_T σ), x_T + s_T ζ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBoundary<T: Real> {
    pub tree: Tree<T>,
    pub thetas: Vec<T>,
    pub zetas: Vec<T>,
    /// Row-major in `θ` then `ζ`; `σ`-units.
    pub values: Vec<T>,
    pub y_ok: bool,
    pub theta_ok: bool,
}

const ROOT_SCAN: usize = 400;

/// Root of `s σ − b(π_T(θ, ζ, σ))` in `σ`; `0` if the graph lies below every scale,
/// `∞` if it lies above every scale.
pub fn pullback_root<T: Real>(tree: &Tree<T>, b: &BoundaryFn<T>, theta: T, zeta: T) -> Result<T> {
    let g = |sigma: T| -> T {
        let p = tree.from_model(theta, zeta, sigma).expect("sigma > 0");
        tree.s * sigma - b.eval(p.eta, p.y)
    };
    // geometric scan from 1e-9 to 1e9 (relative to s_T)
    let lo = lit::<T>(-9.0 * std::f64::consts::LN_10);
    let hi = lit::<T>(9.0 * std::f64::consts::LN_10);
    let step = (hi - lo) / lit::<T>(ROOT_SCAN as f64);
    let mut prev_sigma = lo.exp();
    let mut prev = g(prev_sigma);
    if prev >= T::zero() {
        return Ok(T::zero());
    }
    let mut root = None;
    for k in 1..=ROOT_SCAN {
        let sigma = (lo + step * lit::<T>(k as f64)).exp();
        let v = g(sigma);
        if (v >= T::zero()) != (prev >= T::zero()) {
            if root.is_some() {
                return Err(Error::Precondition("boundary graph crosses the model scale axis twice".into()));
            }
            let (mut a, mut c) = (prev_sigma, sigma);
            for _ in 0..200 {
                let m = (a * c).sqrt();
                if g(m) >= T::zero() {
                    c = m;
                } else {
                    a = m;
                }
                if c - a <= T::epsilon() * c * lit(4.0) {
                    break;
                }
            }
            root = Some(c);
        }
        prev_sigma = sigma;
        prev = v;
    }
    Ok(root.unwrap_or(T::infinity()))
}

/// Pulls a boundary graph back to model coordinates on a `(θ, ζ)` grid and checks
/// `|∂_ζ b*| ≤ β⁻¹` and `1/(θ − θ₊) ≤ ∂_θ b*/b* ≤ 1/(θ − θ₋)` discretely.
pub fn pullback_boundary<T: Real>(tree: &Tree<T>, b: &BoundaryFn<T>, thetas: &[T], zetas: &[T]) -> Result<ModelBoundary<T>> {
    let mut values = Vec::with_capacity(thetas.len() * zetas.len());
    for &th in thetas {
        for &z in zetas {
            values.push(pullback_root(tree, b, th, z)?);
        }
    }
    let f = crate::to_f64::<T>;
    let nz = zetas.len();
    let mut y_ok = true;
    for i in 0..thetas.len() {
        for j in 0..nz.saturating_sub(1) {
            let (a, c) = (f(values[i * nz + j]), f(values[i * nz + j + 1]));
            if a.is_infinite() || c.is_infinite() {
                continue;
            }
            let q = (c - a).abs() / f(zetas[j + 1] - zetas[j]);
            if q > (1.0 / f(b.beta)) * (1.0 + 1e-6) + 1e-9 {
                y_ok = false;
            }
        }
    }
    let mut theta_ok = true;
    let band = tree.band;
    for i in 0..thetas.len().saturating_sub(1) {
        for j in 0..nz {
            let (a, c) = (f(values[i * nz + j]), f(values[(i + 1) * nz + j]));
            if !(a > 0.0 && c > 0.0) || a.is_infinite() || c.is_infinite() {
                continue;
            }
            let (t0, t1) = (f(thetas[i]), f(thetas[i + 1]));
            // ln b* has derivative between 1/(θ − θ₊) and 1/(θ − θ₋); integrate the bounds
            let q = c.ln() - a.ln();
            let lo = ((t1 - f(band.hi)).abs().ln() - (t0 - f(band.hi)).abs().ln()).min(0.0);
            let hi = ((t1 - f(band.lo)).abs().ln() - (t0 - f(band.lo)).abs().ln()).max(0.0);
            if q < lo - 1e-6 || q > hi + 1e-6 {
                theta_ok = false;
            }
        }
    }
    Ok(ModelBoundary { tree: *tree, thetas: thetas.to_vec(), zetas: zetas.to_vec(), values, y_ok, theta_ok })
}

/// Step function `N(z) = Σ 1_{B_s(x)}(z)` of a family of spatial intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingFunction<T> {
    /// Sorted distinct interval endpoints.
    pub breakpoints: Vec<T>,
    /// Value on each open segment between consecutive breakpoints.
    pub values: Vec<usize>,
    pub l1: T,
    pub linf: usize,
}

impl<T: Real> CountingFunction<T> {
    pub fn from_intervals(iv: &[(T, T)]) -> Self {
        let mut pts: Vec<T> = iv.iter().flat_map(|&(a, b)| [a, b]).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        pts.dedup();
        let mut values = Vec::with_capacity(pts.len().saturating_sub(1));
        for w in pts.windows(2) {
            let mid = (w[0] + w[1]) * lit::<T>(0.5);
            values.push(iv.iter().filter(|&&(a, b)| mid > a && mid < b).count());
        }
        let l1 = iv.iter().fold(T::zero(), |acc, &(a, b)| acc + (b - a));
        let linf = values.iter().copied().max().unwrap_or(0);
        CountingFunction { breakpoints: pts, values, l1, linf }
    }

    pub fn eval(&self, z: T) -> usize {
        for (k, w) in self.breakpoints.windows(2).enumerate() {
            if z > w[0] && z < w[1] {
                return self.values[k];
            }
        }
        0
    }
}

pub fn counting_function_trees<T: Real>(trees: &[Tree<T>]) -> CountingFunction<T> {
    CountingFunction::from_intervals(&trees.iter().map(|t| t.interval()).collect::<Vec<_>>())
}

pub fn counting_function_strips<T: Real>(strips: &[Strip<T>]) -> CountingFunction<T> {
    CountingFunction::from_intervals(&strips.iter().map(|s| s.interval()).collect::<Vec<_>>())
}
