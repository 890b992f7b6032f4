//! `BHT_β` through its frequency multiplier, the halfplane multiplier `m`,
//! the constant `C_{φ,β}` and the wave packet representation.
//!
//! Inputs are periodic band-limited samples, so every frequency integral is
//! a finite sum over Fourier-series coefficients.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::signal::{signed_index, FftPair, SampledSignal};
use crate::wavepacket::WavePacket;
use crate::{lit, to_f64, Cplx, Real};

/// Coefficients below this fraction of the largest are treated as zero.
pub const SPECTRUM_TOL: f64 = 1e-13;

/// `(k, c_k)` for the significant Fourier coefficients, ascending in `k`.
pub fn indexed_spectrum<T: Real>(f: &SampledSignal<T>, tol: T) -> Vec<(i64, Cplx<T>)> {
    let c = f.spectrum();
    let max = c.iter().map(|z| z.norm()).fold(T::zero(), T::max);
    let mut v: Vec<(i64, Cplx<T>)> = c
        .iter()
        .enumerate()
        .filter(|(_, z)| max > T::zero() && z.norm() > tol * max)
        .map(|(k, z)| (signed_index(k, f.len()), *z))
        .collect();
    v.sort_by_key(|p| p.0);
    v
}

fn same_grid<T: Real>(a: &SampledSignal<T>, b: &SampledSignal<T>) -> Result<()> {
    if a.len() != b.len() || a.dx != b.dx || a.x0 != b.x0 {
        return Err(Error::Shape("signals live on different grids".into()));
    }
    Ok(())
}

fn sgn<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// `Σ_{k1,k2} c1 c2 μ(k1, k2) e^{2πi(ξ1+ξ2)x}`, rejecting aliased output frequencies.
fn bilinear_multiplier<T: Real>(
    f1: &SampledSignal<T>,
    f2: &SampledSignal<T>,
    mu: impl Fn(i64, i64) -> Cplx<T>,
) -> Result<SampledSignal<T>> {
    same_grid(f1, f2)?;
    let n = f1.len();
    let half = (n / 2) as i64;
    let s1 = indexed_spectrum(f1, lit(SPECTRUM_TOL));
    let s2 = indexed_spectrum(f2, lit(SPECTRUM_TOL));
    let mut out = vec![Cplx::new(T::zero(), T::zero()); n];
    for &(k1, c1) in &s1 {
        for &(k2, c2) in &s2 {
            let k = k1 + k2;
            if k.abs() >= half {
                return Err(Error::Resolution(format!(
                    "output frequency index {k} reaches the Nyquist index {half}; refine the grid"
                )));
            }
            out[k.rem_euclid(n as i64) as usize] += c1 * c2 * mu(k1, k2);
        }
    }
    SampledSignal::from_spectrum(out, f1.dx, f1.x0)
}

/// `BHT_β[f1, f2] = −πi Σ f̂1(ξ1) f̂2(ξ2) sgn(ξ1 − βξ2) e^{2πi(ξ1+ξ2)x}`.
pub fn direct_bht<T: Real>(f1: &SampledSignal<T>, f2: &SampledSignal<T>, beta: T) -> Result<SampledSignal<T>> {
    if !(beta > T::zero() && beta <= T::one()) {
        return param("beta must lie in (0, 1]");
    }
    let mpi = Cplx::new(T::zero(), -T::PI());
    bilinear_multiplier(f1, f2, |k1, k2| {
        mpi * sgn(lit::<T>(k1 as f64) - beta * lit::<T>(k2 as f64))
    })
}

/// `BHT_0[f1, f2]` evaluated by the same double sum with multiplier `−πi sgn(ξ1)`.
pub fn bht_zero_multiplier<T: Real>(f1: &SampledSignal<T>, f2: &SampledSignal<T>) -> Result<SampledSignal<T>> {
    let mpi = Cplx::new(T::zero(), -T::PI());
    bilinear_multiplier(f1, f2, |k1, _| mpi * sgn(lit::<T>(k1 as f64)))
}

/// Hilbert transform, multiplier `−i sgn(ξ)`; the Nyquist bin is zeroed.
pub fn hilbert<T: Real>(f: &SampledSignal<T>) -> SampledSignal<T> {
    let n = f.len();
    let plan = FftPair::new(n);
    let mut c = f.spectrum_with(&plan);
    for (k, z) in c.iter_mut().enumerate() {
        let kk = signed_index(k, n);
        let s = if 2 * kk.unsigned_abs() as usize == n { T::zero() } else { sgn(lit::<T>(kk as f64)) };
        *z = *z * Cplx::new(T::zero(), -s);
    }
    SampledSignal::from_spectrum_with(c, f.dx, f.x0, &plan).expect("same length")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZeroLimitReport {
    pub betas: Vec<f64>,
    /// `sup |BHT_β − π H f1 · f2|` for each β.
    pub deviations: Vec<f64>,
    /// `sup |BHT_0 − π H f1 · f2|`: the β = 0 multiplier sum against the pointwise product.
    pub quadrature_error: f64,
    /// Round-off floor `n ε sup|π H f1| sup|f2|`.
    pub roundoff_floor: f64,
    pub decreasing_trend: bool,
}

/// Compares `BHT_β` with `BHT_0 = π H f1 · f2` over a decreasing sequence of β.
pub fn bht_zero_limit_check<T: Real>(f1: &SampledSignal<T>, f2: &SampledSignal<T>, betas: &[T]) -> Result<ZeroLimitReport> {
    let h = hilbert(f1).scale(Cplx::new(T::PI(), T::zero()));
    let reference = h.mul(f2)?;
    let sup_diff = |a: &SampledSignal<T>| to_f64(a.sub(&reference).expect("same grid").sup_norm());
    let quadrature_error = sup_diff(&bht_zero_multiplier(f1, f2)?);
    let mut deviations = Vec::with_capacity(betas.len());
    for &b in betas {
        deviations.push(sup_diff(&direct_bht(f1, f2, b)?));
    }
    let first = deviations.first().copied().unwrap_or(0.0);
    let last = deviations.last().copied().unwrap_or(0.0);
    let roundoff_floor = f1.len() as f64 * to_f64(T::epsilon())
        * to_f64(h.sup_norm())
        * to_f64(f2.sup_norm());
    Ok(ZeroLimitReport {
        betas: betas.iter().map(|b| to_f64(*b)).collect(),
        decreasing_trend: last <= first,
        deviations,
        quadrature_error,
        roundoff_floor,
    })
}

/// θ-quadrature nodes over `B_r` used for `m`.
pub const THETA_NODES: usize = 1024;

/// `m(ξ̃) = ∫ φ̂0(−θ) φ̂0(−ξ̃−θ+1) φ̂0(−ξ̃−(1+β)θ+1) dθ`.
pub fn halfplane_multiplier<T: Real>(phi0: &WavePacket<T>, beta: T, xi_tilde: T) -> T {
    halfplane_multiplier_with(phi0, beta, xi_tilde, THETA_NODES)
}

pub fn halfplane_multiplier_with<T: Real>(phi0: &WavePacket<T>, beta: T, xi_tilde: T, nodes: usize) -> T {
    let r = phi0.radius;
    let h = (r + r) / lit::<T>((nodes - 1) as f64);
    let one = T::one();
    let mut acc = T::zero();
    for j in 0..nodes {
        let th = -r + h * lit::<T>(j as f64);
        let a = phi0.fourier(-th).re;
        if a == T::zero() {
            continue;
        }
        let b = phi0.fourier(-xi_tilde - th + one).re;
        if b == T::zero() {
            continue;
        }
        acc += a * b * phi0.fourier(-xi_tilde - (one + beta) * th + one).re;
    }
    acc * h
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CBeta {
    pub value: f64,
    /// `(ξ̃, ∫ m(tξ̃) dt/t)` recomputations.
    pub samples: Vec<(f64, f64)>,
    pub relative_spread: f64,
}

/// Geometric t-nodes per octave for `C_{φ,β}`.
pub const C_BETA_NODES_PER_OCTAVE: usize = 2048;
/// Tolerated relative spread of `C_{φ,β}` across the ξ̃ recomputations.
pub const C_BETA_SPREAD_TOL: f64 = 1e-8;

/// `C_{φ,β} = ∫ m(tξ̃) dt/t`, recomputed at ξ̃ ∈ {1, 1.37, 2.71} on a t-grid anchored at 1.
pub fn c_beta<T: Real>(phi0: &WavePacket<T>, beta: T) -> Result<CBeta> {
    c_beta_with(phi0, beta, C_BETA_NODES_PER_OCTAVE, THETA_NODES, C_BETA_SPREAD_TOL)
}

pub fn c_beta_with<T: Real>(phi0: &WavePacket<T>, beta: T, per_octave: usize, theta_nodes: usize, tol: f64) -> Result<CBeta> {
    if !(beta > T::zero() && beta <= T::one()) {
        return param("beta must lie in (0, 1]");
    }
    let r = phi0.radius;
    let two_r = r + r;
    if two_r >= T::one() {
        return param("packet radius must be below 1/2");
    }
    let h = T::LN_2() / lit::<T>(per_octave as f64);
    let xis = [1.0, 1.37, 2.71];
    let mut samples = Vec::new();
    for &xt in &xis {
        let xt_t = lit::<T>(xt);
        // m(tξ̃) vanishes unless tξ̃ ∈ B_{2r}(1)
        let lo = ((T::one() - two_r) / xt_t).ln() / h;
        let hi = ((T::one() + two_r) / xt_t).ln() / h;
        let j0 = lo.floor().to_i64().unwrap_or(0) - 1;
        let j1 = hi.ceil().to_i64().unwrap_or(0) + 1;
        let vals: Vec<T> = (j0..=j1)
            .into_par_iter()
            .map(|j| {
                let t = (h * lit::<T>(j as f64)).exp();
                halfplane_multiplier_with(phi0, beta, t * xt_t, theta_nodes)
            })
            .collect();
        let s = vals.into_iter().fold(T::zero(), |a, b| a + b) * h;
        samples.push((xt, to_f64(s)));
    }
    let vmax = samples.iter().map(|s| s.1).fold(f64::MIN, f64::max);
    let vmin = samples.iter().map(|s| s.1).fold(f64::MAX, f64::min);
    let value = samples[0].1;
    let relative_spread = (vmax - vmin) / value.abs();
    if !(relative_spread <= tol) || !(value > 0.0) {
        return Err(Error::Resolution(format!(
            "C_phi_beta varies by {relative_spread:e} across xi_tilde; refine the t or theta grid"
        )));
    }
    Ok(CBeta { value, samples, relative_spread })
}

/// For θ ∈ B_r the shifted bands θ − 1 and (1+β)θ − 1 avoid B_r.
pub fn support_separated<T: Real>(r: T, beta: T) -> bool {
    r > T::zero() && r <= T::one() / (lit::<T>(2.0) + beta)
}

/// Box of `(η, t)` quadrature for the triple integral. `y_range = None` means all of `ℝ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationRegion<T> {
    pub eta_range: (T, T),
    pub y_range: Option<(T, T)>,
    pub t_range: (T, T),
}

impl<T: Real> TruncationRegion<T> {
    pub fn new(eta_range: (T, T), t_range: (T, T)) -> Result<Self> {
        if !(eta_range.0 < eta_range.1) {
            return param("empty eta range");
        }
        if !(t_range.0 > T::zero() && t_range.0 < t_range.1 && t_range.1.is_finite()) {
            return param("t range must be a bounded interval in (0, ∞)");
        }
        Ok(TruncationRegion { eta_range, y_range: None, t_range })
    }

    pub fn contains(&self, eta: T, t: T) -> bool {
        eta >= self.eta_range.0 && eta <= self.eta_range.1 && t >= self.t_range.0 && t <= self.t_range.1
    }

    /// Shrinks the box about its centre (geometric centre in t) by `factor ∈ (0, 1]`.
    pub fn scaled(&self, factor: T) -> Self {
        let half = lit::<T>(0.5);
        let ce = (self.eta_range.0 + self.eta_range.1) * half;
        let he = (self.eta_range.1 - self.eta_range.0) * half * factor;
        let (l0, l1) = (self.t_range.0.ln(), self.t_range.1.ln());
        let ct = (l0 + l1) * half;
        let ht = (l1 - l0) * half * factor;
        TruncationRegion { eta_range: (ce - he, ce + he), y_range: self.y_range, t_range: ((ct - ht).exp(), (ct + ht).exp()) }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RepresentationOpts<T> {
    /// `Δη = eta_step · r / t_max`.
    pub eta_step: T,
    pub t_per_octave: usize,
}

impl<T: Real> Default for RepresentationOpts<T> {
    fn default() -> Self {
        RepresentationOpts { eta_step: lit(0.125), t_per_octave: 128 }
    }
}

#[derive(Clone, Debug)]
pub struct Representation<T: Real> {
    /// `f1 f2 − (2 / C_{φ,β}) I`: approximates `BHT_β[f1, f2] / (πi)`.
    pub signal: SampledSignal<T>,
    pub product: SampledSignal<T>,
    /// The triple integral `I` over the region.
    pub integral: SampledSignal<T>,
    /// Bound on `(2 / C_{φ,β}) |I_ext|` from the a-priori support outside the region.
    pub tail_estimate: T,
    pub c_phi_beta: T,
    pub slices: usize,
}

/// Coefficients of `y ↦ E[f](η, y, t)[φ]`: `c_k φ̂(t(η − ξ_k))`.
pub fn embedded_coefficients<T: Real>(spec: &[(i64, Cplx<T>)], period: T, phi: &WavePacket<T>, eta: T, t: T) -> Vec<Cplx<T>> {
    spec.iter()
        .map(|&(k, c)| {
            let xi = lit::<T>(k as f64) / period;
            c * phi.fourier(t * (eta - xi))
        })
        .collect()
}

/// Γ parameters `(η2, t2, η3, t3)` paired with `(η, t)` in the triple integral.
pub fn gamma_params<T: Real>(eta: T, t: T, beta: T) -> (T, T, T, T) {
    let bt = beta * t;
    let inv = T::one() / bt;
    (eta / beta - inv, bt, (T::one() + beta) * eta / beta - inv, bt)
}

struct Slice<T: Real> {
    terms: Vec<(i64, Cplx<T>)>,
    bound: T,
}

fn slice<T: Real>(s1: &[(i64, Cplx<T>)], s2: &[(i64, Cplx<T>)], period: T, phi: &WavePacket<T>, beta: T, eta: T, t: T) -> Slice<T> {
    let (e2, t2, e3, t3) = gamma_params(eta, t, beta);
    let w1 = embedded_coefficients(s1, period, phi, eta, t);
    let w2 = embedded_coefficients(s2, period, phi, e2, t2);
    let mut acc: BTreeMap<i64, Cplx<T>> = BTreeMap::new();
    let mut bound = T::zero();
    for (&(k1, _), a) in s1.iter().zip(&w1) {
        if a.norm() == T::zero() {
            continue;
        }
        for (&(k2, _), b) in s2.iter().zip(&w2) {
            if b.norm() == T::zero() {
                continue;
            }
            let k = k1 + k2;
            let xi = lit::<T>(k as f64) / period;
            let psi = phi.fourier(t3 * (xi - e3));
            if psi.norm() == T::zero() {
                continue;
            }
            bound += a.norm() * b.norm() * psi.norm();
            *acc.entry(k).or_insert(Cplx::new(T::zero(), T::zero())) += a * b * psi;
        }
    }
    Slice { terms: acc.into_iter().collect(), bound }
}

struct Quadrature<T> {
    etas: Vec<(T, T)>,
    ts: Vec<(T, T)>,
}

fn quadrature<T: Real>(region: &TruncationRegion<T>, r: T, opts: &RepresentationOpts<T>) -> Quadrature<T> {
    let (a, b) = region.eta_range;
    let de = opts.eta_step * r / region.t_range.1;
    let ne = ((b - a) / de).ceil().to_usize().unwrap_or(1).max(1);
    let he = (b - a) / lit::<T>(ne as f64);
    let etas = (0..=ne)
        .map(|j| {
            let w = if j == 0 || j == ne { he * lit::<T>(0.5) } else { he };
            (a + he * lit::<T>(j as f64), w)
        })
        .collect();
    let (l0, l1) = (region.t_range.0.ln(), region.t_range.1.ln());
    let nt = ((l1 - l0) / T::LN_2() * lit::<T>(opts.t_per_octave as f64)).ceil().to_usize().unwrap_or(1).max(1);
    let ht = (l1 - l0) / lit::<T>(nt as f64);
    // dt = t d(log t)
    let ts = (0..=nt)
        .map(|j| {
            let t = (l0 + ht * lit::<T>(j as f64)).exp();
            let w = if j == 0 || j == nt { ht * lit::<T>(0.5) } else { ht };
            (t, w * t)
        })
        .collect();
    Quadrature { etas, ts }
}

/// A-priori `(η, t)` support of the integrand: `t(ξ1 − βξ2) ∈ B_{2r}(1)` and `t(η − ξ1) ∈ B_r`.
pub fn support_region<T: Real>(f1: &SampledSignal<T>, f2: &SampledSignal<T>, beta: T, r: T) -> Result<Option<TruncationRegion<T>>> {
    same_grid(f1, f2)?;
    let p = f1.period();
    let s1 = indexed_spectrum(f1, lit(SPECTRUM_TOL));
    let s2 = indexed_spectrum(f2, lit(SPECTRUM_TOL));
    let two_r = r + r;
    let mut tl = T::infinity();
    let mut th = T::zero();
    let mut el = T::infinity();
    let mut eh = T::neg_infinity();
    for &(k1, _) in &s1 {
        let x1 = lit::<T>(k1 as f64) / p;
        for &(k2, _) in &s2 {
            let d = x1 - beta * lit::<T>(k2 as f64) / p;
            if d <= T::zero() {
                continue;
            }
            let a = (T::one() - two_r) / d;
            let b = (T::one() + two_r) / d;
            tl = tl.min(a);
            th = th.max(b);
            el = el.min(x1 - r / a);
            eh = eh.max(x1 + r / a);
        }
    }
    if !(th > T::zero()) {
        return Ok(None);
    }
    Ok(Some(TruncationRegion { eta_range: (el, eh), y_range: None, t_range: (tl, th) }))
}

/// `f1 f2 − (2 / C_{φ,β}) ∫∫∫_region E[f1](η,y,t) E[f2](Γ) Tr_y Mod_{η3} Dil_{t3} φ0 dη dy dt`.
pub fn wp_representation<T: Real>(
    f1: &SampledSignal<T>,
    f2: &SampledSignal<T>,
    beta: T,
    phi0: &WavePacket<T>,
    region: &TruncationRegion<T>,
    opts: &RepresentationOpts<T>,
) -> Result<Representation<T>> {
    same_grid(f1, f2)?;
    let r = phi0.radius;
    if !(beta > T::zero() && beta <= T::one()) {
        return param("beta must lie in (0, 1]");
    }
    if !support_separated(r, beta) {
        return Err(Error::Precondition(format!(
            "shifted packet bands overlap for r = {r}; use r ≤ 1/(2+β)"
        )));
    }
    if region.y_range.is_some() {
        return Err(Error::Unsupported("y truncation of periodic inputs; leave y_range unset".into()));
    }
    let c = T::from_f64(c_beta(phi0, beta)?.value).expect("finite");
    let n = f1.len();
    let period = f1.period();
    let s1 = indexed_spectrum(f1, lit(SPECTRUM_TOL));
    let s2 = indexed_spectrum(f2, lit(SPECTRUM_TOL));
    if let Some(&(k, _)) = s1.iter().chain(&s2).find(|(k, _)| 2 * k.unsigned_abs() as usize >= n / 2) {
        return Err(Error::Resolution(format!("input frequency index {k} too close to Nyquist")));
    }
    let q = quadrature(region, r, opts);
    // ascending-t reduction for reproducibility
    let partial: Vec<Vec<Cplx<T>>> = q
        .ts
        .par_iter()
        .map(|&(t, wt)| {
            let mut out = vec![Cplx::new(T::zero(), T::zero()); n];
            for &(eta, we) in &q.etas {
                let sl = slice(&s1, &s2, period, phi0, beta, eta, t);
                for (k, v) in sl.terms {
                    out[k.rem_euclid(n as i64) as usize] += v * (we * wt);
                }
            }
            out
        })
        .collect();
    let mut spec = vec![Cplx::new(T::zero(), T::zero()); n];
    for p in partial {
        for (a, b) in spec.iter_mut().zip(p) {
            *a += b;
        }
    }
    let integral = SampledSignal::from_spectrum(spec, f1.dx, f1.x0)?;
    let product = f1.mul(f2)?;
    let k = lit::<T>(2.0) / c;
    let signal = product.sub(&integral.scale(Cplx::new(k, T::zero())))?;
    let tail_estimate = match support_region(f1, f2, beta, r)? {
        None => T::zero(),
        Some(sup) => {
            let qs = quadrature(&sup, r, opts);
            let tails: Vec<T> = qs
                .ts
                .par_iter()
                .map(|&(t, wt)| {
                    let mut acc = T::zero();
                    for &(eta, we) in &qs.etas {
                        if region.contains(eta, t) {
                            continue;
                        }
                        acc += slice(&s1, &s2, period, phi0, beta, eta, t).bound * we * wt;
                    }
                    acc
                })
                .collect();
            tails.into_iter().fold(T::zero(), |a, b| a + b) * k
        }
    };
    Ok(Representation { signal, product, integral, tail_estimate, c_phi_beta: c, slices: q.etas.len() * q.ts.len() })
}

/// Relative L² distance on the central half of the period.
pub fn central_relative_l2<T: Real>(a: &SampledSignal<T>, b: &SampledSignal<T>) -> T {
    let n = a.len();
    let (lo, hi) = (n / 4, 3 * n / 4);
    let mut num = T::zero();
    let mut den = T::zero();
    for j in lo..hi {
        num += (a.samples[j] - b.samples[j]).norm_sqr();
        den += b.samples[j].norm_sqr();
    }
    if den == T::zero() {
        return num.sqrt();
    }
    (num / den).sqrt()
}
