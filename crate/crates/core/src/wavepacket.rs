//! Band-limited wave packets stored by their Fourier profile.
//!
//! A packet `φ ∈ Φ^N_r` is described through `φ̂`, supported in `[−r, r]`.
//! Profiles are expression trees evaluated with derivative jets, so every
//! derivative used downstream (norms, `σ`-boosts, defects) is exact up to
//! rounding.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::jet::Jet;
use crate::signal::{cis, FftPair, SampledSignal};
use crate::{japanese, lit, Cplx, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoostKind {
    /// `(−d_z + 2πiθ) φ`
    Zeta,
    /// `(−d_z + 2πiθ)(z φ)`
    Sigma,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Profile<T: Real> {
    /// Smooth plateau bump: 1 on `[−p, p]`, 0 outside `(−r, r)`.
    Bump { r: T, plateau: T },
    /// Uniform samples `values[j] ≈ φ̂(xi0 + j·dxi)` plus spectral derivatives.
    Sampled { xi0: T, dxi: T, derivs: Vec<Vec<Cplx<T>>> },
    /// Shifted lattice atom `⟨k⟩^{−N'} e^{2πikξ/(4r)} ((4r² − ξ²)/(2r))^{N'+ε}` on `B_{2r}`.
    Atom { r: T, k: i64, n_prime: u32, eps: T },
    Scaled(Cplx<T>, Box<Profile<T>>),
    Boosted(T, BoostKind, Box<Profile<T>>),
    Sum(Box<Profile<T>>, Box<Profile<T>>),
}

const BUMP_ORDER_CAP: usize = 16;

impl<T: Real> Profile<T> {
    /// Jet of derivatives `0..=order` at `xi`.
    pub fn jet(&self, xi: T, order: usize) -> Jet<T> {
        match self {
            Profile::Bump { r, plateau } => bump_jet(*r, *plateau, xi, order),
            Profile::Sampled { xi0, dxi, derivs } => sampled_jet(*xi0, *dxi, derivs, xi, order),
            Profile::Atom { r, k, n_prime, eps } => atom_jet(*r, *k, *n_prime, *eps, xi, order),
            Profile::Scaled(c, p) => p.jet(xi, order).scale(*c),
            Profile::Boosted(theta, kind, p) => {
                let two_pi_i = Cplx::new(T::zero(), T::PI() + T::PI());
                match kind {
                    BoostKind::Zeta => {
                        let base = p.jet(xi, order);
                        let lin = Jet::variable(xi, order).scale(Cplx::new(-T::one(), T::zero()));
                        let lin = lin.add(&Jet::constant(Cplx::new(*theta, T::zero()), order));
                        lin.mul(&base).scale(two_pi_i)
                    }
                    BoostKind::Sigma => {
                        let d = p.jet(xi, order + 1).derivative();
                        let lin = Jet::variable(xi, order)
                            .sub(&Jet::constant(Cplx::new(*theta, T::zero()), order));
                        lin.mul(&d)
                    }
                }
            }
            Profile::Sum(a, b) => a.jet(xi, order).add(&b.jet(xi, order)),
        }
    }

    pub fn value(&self, xi: T) -> Cplx<T> {
        match self {
            Profile::Bump { r, plateau } => Cplx::new(bump_value(*r, *plateau, xi), T::zero()),
            Profile::Scaled(c, p) => p.value(xi) * c,
            Profile::Sum(a, b) => a.value(xi) + b.value(xi),
            _ => self.jet(xi, 0).value(),
        }
    }

    fn max_order(&self) -> usize {
        match self {
            Profile::Bump { .. } => BUMP_ORDER_CAP,
            Profile::Sampled { derivs, .. } => derivs.len() - 1,
            Profile::Atom { n_prime, .. } => *n_prime as usize,
            Profile::Scaled(_, p) => p.max_order(),
            Profile::Boosted(_, BoostKind::Zeta, p) => p.max_order(),
            Profile::Boosted(_, BoostKind::Sigma, p) => p.max_order().saturating_sub(1),
            Profile::Sum(a, b) => a.max_order().min(b.max_order()),
        }
    }
}

fn bump_jet<T: Real>(r: T, p: T, xi: T, order: usize) -> Jet<T> {
    let a = xi.abs();
    if a >= r {
        return Jet::zero(order);
    }
    if a <= p {
        return Jet::constant(Cplx::new(T::one(), T::zero()), order);
    }
    // profile = 1 / (1 + exp(1/(1−u) − 1/u)),  u = (|ξ| − p)/(r − p)
    let w = r - p;
    let u = (a - p) / w;
    let uj = Jet::variable(u, order);
    let one = Jet::constant(Cplx::new(T::one(), T::zero()), order);
    let expo = one.sub(&uj).recip().sub(&uj.recip());
    let cap = T::max_value().ln() * lit::<T>(0.5);
    if expo.value().re > cap {
        return Jet::zero(order);
    }
    let prof = one.add(&expo.exp()).recip();
    let s = if xi < T::zero() { -T::one() } else { T::one() };
    prof.chain_affine(s / w)
}

fn bump_value<T: Real>(r: T, p: T, xi: T) -> T {
    let a = xi.abs();
    if a >= r {
        return T::zero();
    }
    if a <= p {
        return T::one();
    }
    let u = (a - p) / (r - p);
    let e = T::one() / (T::one() - u) - T::one() / u;
    if e > T::max_value().ln() * lit::<T>(0.5) {
        return T::zero();
    }
    T::one() / (T::one() + e.exp())
}

fn sampled_jet<T: Real>(xi0: T, dxi: T, derivs: &[Vec<Cplx<T>>], xi: T, order: usize) -> Jet<T> {
    let n = derivs[0].len();
    let pos = (xi - xi0) / dxi;
    let mut j = Jet::zero(order);
    if !(pos >= T::zero()) || pos > lit::<T>((n - 1) as f64) {
        return j;
    }
    let i = pos.floor().to_usize().unwrap_or(0).min(n - 2);
    let f = pos - lit::<T>(i as f64);
    for (m, d) in j.d.iter_mut().enumerate() {
        if m < derivs.len() {
            *d = derivs[m][i] * (T::one() - f) + derivs[m][i + 1] * f;
        }
    }
    j
}

fn atom_jet<T: Real>(r: T, k: i64, n_prime: u32, eps: T, xi: T, order: usize) -> Jet<T> {
    let two_r = r + r;
    if xi.abs() >= two_r {
        return Jet::zero(order);
    }
    let x = Jet::variable(xi, order);
    let base = Jet::constant(Cplx::new(two_r * two_r, T::zero()), order)
        .sub(&x.mul(&x))
        .scale(Cplx::new(T::one() / two_r, T::zero()));
    let h = base.powf(lit::<T>(n_prime as f64) + eps);
    let kk = lit::<T>(k as f64);
    let two_pi = T::PI() + T::PI();
    let phase = x.scale(Cplx::new(T::zero(), two_pi * kk / (two_r + two_r))).exp();
    let w = japanese(kk).powf(-lit::<T>(n_prime as f64));
    h.mul(&phase).scale(Cplx::new(w, T::zero()))
}

/// Fourier-side wave packet with support radius `r` and regularity order `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct WavePacket<T: Real> {
    pub profile: Profile<T>,
    pub radius: T,
    pub order: usize,
}

/// Parameters of `Tr_y Mod_η Dil_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryParams<T> {
    pub y: T,
    pub eta: T,
    pub t: T,
}

impl<T: Real> SymmetryParams<T> {
    pub fn new(y: T, eta: T, t: T) -> Result<Self> {
        if !(t > T::zero()) {
            return param("dilation t must be positive");
        }
        Ok(SymmetryParams { y, eta, t })
    }

    pub fn identity() -> Self {
        SymmetryParams { y: T::zero(), eta: T::zero(), t: T::one() }
    }

    /// Parameters and unimodular phase `c` with `S_self ∘ S_first = c · S_composed`.
    pub fn after(&self, first: &Self) -> (Self, Cplx<T>) {
        let two_pi = T::PI() + T::PI();
        let composed = SymmetryParams {
            y: self.y + self.t * first.y,
            eta: self.eta + first.eta / self.t,
            t: self.t * first.t,
        };
        (composed, cis(two_pi * self.eta * self.t * first.y))
    }
}

/// Options for [`WavePacket::decompose`].
#[derive(Clone, Copy, Debug)]
pub struct DecomposeOpts<T> {
    /// Fixed truncation `|k| ≤ k_max`; if `None`, chosen from `tol`.
    pub k_max: Option<usize>,
    pub tol: T,
    pub eps: T,
}

impl<T: Real> Default for DecomposeOpts<T> {
    fn default() -> Self {
        DecomposeOpts { k_max: None, tol: lit(1e-8), eps: lit(0.5) }
    }
}

/// `φ = Σ_k a_k φ̃_k` with lattice atoms supported in `B_{2r}`.
#[derive(Clone, Debug)]
pub struct Decomposition<T: Real> {
    pub ks: Vec<i64>,
    pub coeffs: Vec<Cplx<T>>,
    pub atoms: Vec<WavePacket<T>>,
    pub n: usize,
    pub n_prime: usize,
    pub eps: T,
    /// `Σ_{|k| > K} |a_k| sup|φ̃̂_k|` over the computed coefficient range.
    pub tail: T,
    /// Constant `C` of the bound `|a_k| ⟨k⟩^{N−N'} ≤ C ‖φ‖_{Φ^N}`.
    pub decay_constant: T,
}

impl<T: Real> Decomposition<T> {
    /// Evaluates `Σ_k a_k φ̃̂_k(ξ)` for `|k| ≤ k_max`.
    pub fn reconstruct(&self, xi: T, k_max: usize) -> Cplx<T> {
        self.ks
            .iter()
            .zip(&self.coeffs)
            .zip(&self.atoms)
            .filter(|((k, _), _)| k.unsigned_abs() as usize <= k_max)
            .fold(Cplx::new(T::zero(), T::zero()), |acc, ((_, a), at)| acc + a * at.profile.value(xi))
    }
}

impl<T: Real> WavePacket<T> {
    pub fn from_profile(profile: Profile<T>, radius: T) -> Self {
        let order = profile.max_order();
        WavePacket { profile, radius, order }
    }

    pub fn zero(radius: T) -> Self {
        let p = Profile::Scaled(Cplx::new(T::zero(), T::zero()), Box::new(Profile::Bump { r: radius, plateau: radius * lit(0.5) }));
        Self::from_profile(p, radius)
    }

    pub fn fourier(&self, xi: T) -> Cplx<T> {
        self.profile.value(xi)
    }

    pub fn fourier_jet(&self, xi: T, order: usize) -> Jet<T> {
        self.profile.jet(xi, order)
    }

    pub fn scaled(&self, c: Cplx<T>) -> Self {
        WavePacket { profile: Profile::Scaled(c, Box::new(self.profile.clone())), radius: self.radius, order: self.order }
    }

    pub fn plus(&self, o: &Self) -> Self {
        WavePacket {
            profile: Profile::Sum(Box::new(self.profile.clone()), Box::new(o.profile.clone())),
            radius: self.radius.max(o.radius),
            order: self.order.min(o.order),
        }
    }

    /// Uniform profile samples `(ξ_j, φ̂(ξ_j))` on `[−radius, radius]`.
    pub fn profile_grid(&self, m: usize) -> Vec<(T, Cplx<T>)> {
        let m = m.max(2);
        (0..m)
            .map(|j| {
                let xi = -self.radius + (self.radius + self.radius) * lit::<T>(j as f64) / lit::<T>((m - 1) as f64);
                (xi, self.fourier(xi))
            })
            .collect()
    }

    /// Spatial value `φ(z) = ∫ φ̂(ξ) e^{2πizξ} dξ` by trapezoid quadrature on `nodes` points.
    pub fn spatial(&self, z: T, nodes: usize) -> Cplx<T> {
        let r = self.radius;
        let h = (r + r) / lit::<T>((nodes - 1) as f64);
        let two_pi = T::PI() + T::PI();
        let mut acc = Cplx::new(T::zero(), T::zero());
        for j in 0..nodes {
            let xi = -r + h * lit::<T>(j as f64);
            let w = if j == 0 || j + 1 == nodes { lit::<T>(0.5) } else { T::one() };
            acc += self.fourier(xi) * cis(two_pi * z * xi) * w;
        }
        acc * h
    }

    /// Quadrature node count resolving the profile and `e^{2πizξ}` for `|z| ≤ zmax`.
    pub fn spatial_nodes(&self, zmax: T) -> usize {
        let by_osc = (self.radius * zmax * lit::<T>(32.0)).to_usize().unwrap_or(0);
        (by_osc.max(1024) | 1) + 1
    }
}

/// The mother packet: real, even, `0 ≤ φ̂ ≤ 1`, `φ̂ = 1` on `B_{fr}`, support `B_r`.
pub fn make_mother_packet<T: Real>(r: T, plateau_fraction: T) -> Result<WavePacket<T>> {
    if !(r > T::zero()) || !r.is_finite() {
        return param("packet radius must be positive");
    }
    if !(plateau_fraction > T::zero() && plateau_fraction < T::one()) {
        return param("plateau fraction must lie in (0, 1)");
    }
    Ok(WavePacket::from_profile(Profile::Bump { r, plateau: r * plateau_fraction }, r))
}

/// Finite stand-in for the unit ball of `Φ^N_r`: `φ`, its ζ/σ boosts at `θ ∈ {−r/2, 0, r/2}`
/// and the lattice atoms `|k| ≤ atoms`, each scaled to sup-norm 1.
pub fn packet_family<T: Real>(phi: &WavePacket<T>, boosts: bool, atoms: usize) -> Result<Vec<WavePacket<T>>> {
    let mut out = vec![phi.clone()];
    if boosts {
        let r = phi.radius;
        for kind in [BoostKind::Zeta, BoostKind::Sigma] {
            for th in [-r * lit(0.5), T::zero(), r * lit(0.5)] {
                out.push(boost_packet(phi, th, kind));
            }
        }
    }
    if atoms > 0 {
        let d = wp_decompose(phi, 4, 2, DecomposeOpts { k_max: Some(atoms), ..Default::default() })?;
        out.extend(d.atoms.into_iter().filter(|a| a.radius > T::zero()));
    }
    out.into_iter()
        .map(|p| {
            let m = packet_norm(&p, 0)?;
            Ok(if m > T::zero() { p.scaled(Cplx::new(T::one() / m, T::zero())) } else { p })
        })
        .collect()
}

/// Dense grid size used for sup-norms of profile derivatives.
pub const NORM_GRID: usize = 4097;

/// `‖φ‖_{Φ^N} = max_{k ≤ N} sup_ξ |φ̂^{(k)}(ξ)|` on a dense uniform grid.
pub fn packet_norm<T: Real>(phi: &WavePacket<T>, n: usize) -> Result<T> {
    if n > phi.order {
        return Err(Error::Resolution(format!(
            "order {n} exceeds the {} derivatives the profile resolves",
            phi.order
        )));
    }
    let r = phi.radius;
    let mut best = T::zero();
    for j in 0..NORM_GRID {
        let xi = -r + (r + r) * lit::<T>(j as f64) / lit::<T>((NORM_GRID - 1) as f64);
        let jet = phi.profile.jet(xi, n);
        for d in &jet.d {
            best = best.max(d.norm());
        }
    }
    Ok(best)
}

/// `Tr_y Mod_η Dil_t φ` sampled on the grid `x0 + j dx`, `j < n`.
pub fn apply_symmetry<T: Real>(phi: &WavePacket<T>, s: &SymmetryParams<T>, n: usize, dx: T, x0: T) -> Result<SampledSignal<T>> {
    let zmax = (x0.abs() + dx * lit::<T>(n as f64) + s.y.abs()) / s.t;
    let nodes = phi.spatial_nodes(zmax);
    let two_pi = T::PI() + T::PI();
    SampledSignal::from_fn(n, dx, x0, |x| {
        let z = x - s.y;
        cis(two_pi * s.eta * z) * phi.spatial(z / s.t, nodes) / s.t
    })
}

/// Applies `Tr_y Mod_η Dil_t` to a sampled signal through its trigonometric interpolant.
pub fn apply_symmetry_signal<T: Real>(f: &SampledSignal<T>, s: &SymmetryParams<T>) -> SampledSignal<T> {
    f.dilate(s.t).modulate(s.eta).translate(s.y)
}

/// Boosted packet: `(−d_z + 2πiθ)φ` for `Zeta`, `(−d_z + 2πiθ)(zφ)` for `Sigma`.
pub fn boost_packet<T: Real>(phi: &WavePacket<T>, theta: T, kind: BoostKind) -> WavePacket<T> {
    let profile = Profile::Boosted(theta, kind, Box::new(phi.profile.clone()));
    WavePacket::from_profile(profile, phi.radius)
}

/// Lattice decomposition `φ = Σ_k a_k φ̃_k` with `φ̃_k ∈ Φ^{N'}_{2r}`.
pub fn wp_decompose<T: Real>(phi: &WavePacket<T>, n: usize, n_prime: usize, opts: DecomposeOpts<T>) -> Result<Decomposition<T>> {
    if n_prime == 0 || n_prime >= n {
        return param("need 0 < N' < N");
    }
    if n <= n_prime + 1 {
        return Err(Error::Convergence("the series converges absolutely only for N > N' + 1".into()));
    }
    let r = phi.radius;
    let two_r = r + r;
    let a = lit::<T>(n_prime as f64) + opts.eps;
    // g = φ̂ / h on one period [−2r, 2r); g vanishes outside B_r.
    let m: usize = 4096;
    let period = two_r + two_r;
    let h_of = |xi: T| ((two_r * two_r - xi * xi) / two_r).powf(a);
    let g: Vec<Cplx<T>> = (0..m)
        .map(|j| {
            let xi = -two_r + period * lit::<T>(j as f64) / lit::<T>(m as f64);
            if xi.abs() >= r {
                Cplx::new(T::zero(), T::zero())
            } else {
                phi.fourier(xi) / h_of(xi)
            }
        })
        .collect();
    // c_k = (1/m) Σ_j g_j e^{−2πik ξ_j/(4r)}, ξ_j = −2r + j·4r/m
    let plan = FftPair::new(m);
    let mut buf = g;
    plan.forward(&mut buf);
    let inv_m = T::one() / lit::<T>(m as f64);
    let kcap = m / 2 - 1;
    let coeff = |k: i64| -> Cplx<T> {
        let idx = if k >= 0 { k as usize } else { (m as i64 + k) as usize };
        // shift from ξ_0 = −2r: e^{−2πik(−2r)/(4r)} = e^{iπk}
        let sign = if k.rem_euclid(2) == 0 { T::one() } else { -T::one() };
        buf[idx] * inv_m * sign * japanese(lit::<T>(k as f64)).powf(lit(n_prime as f64))
    };
    let h_sup = h_of(T::zero());
    let k_max = match opts.k_max {
        Some(k) => k.min(kcap),
        None => {
            let mut k = 1usize;
            loop {
                let tail: T = ((k + 1)..=kcap)
                    .map(|kk| {
                        let w = japanese(lit::<T>(kk as f64)).powf(-lit::<T>(n_prime as f64));
                        (coeff(kk as i64).norm() + coeff(-(kk as i64)).norm()) * w * h_sup
                    })
                    .fold(T::zero(), |x, y| x + y);
                if tail < opts.tol || k >= kcap {
                    break k;
                }
                k = (k * 2).min(kcap);
            }
        }
    };
    let tail = ((k_max + 1)..=kcap)
        .map(|kk| {
            let w = japanese(lit::<T>(kk as f64)).powf(-lit::<T>(n_prime as f64));
            (coeff(kk as i64).norm() + coeff(-(kk as i64)).norm()) * w * h_sup
        })
        .fold(T::zero(), |x, y| x + y);
    let mut ks = Vec::new();
    let mut coeffs = Vec::new();
    let mut atoms = Vec::new();
    for k in -(k_max as i64)..=(k_max as i64) {
        ks.push(k);
        coeffs.push(coeff(k));
        atoms.push(WavePacket::from_profile(Profile::Atom { r, k, n_prime: n_prime as u32, eps: opts.eps }, two_r));
    }
    let decay_constant = decay_constant(r, n, n_prime, opts.eps);
    Ok(Decomposition { ks, coeffs, atoms, n, n_prime, eps: opts.eps, tail, decay_constant })
}

/// `C = max(H_0, 2^{3N/2} (4r/2π)^N H_N)` with `H_j` the sup on `B_r` of the
/// derivatives of `1/h` up to order `j`.
fn decay_constant<T: Real>(r: T, n: usize, n_prime: usize, eps: T) -> T {
    let two_r = r + r;
    let a = lit::<T>(n_prime as f64) + eps;
    let mut h0 = T::zero();
    let mut hn = T::zero();
    let pts = 2049;
    for j in 0..pts {
        let xi = -r + (r + r) * lit::<T>(j as f64) / lit::<T>((pts - 1) as f64);
        let x = Jet::variable(xi, n);
        let base = Jet::constant(Cplx::new(two_r * two_r, T::zero()), n)
            .sub(&x.mul(&x))
            .scale(Cplx::new(T::one() / two_r, T::zero()));
        let inv_h = base.powf(-a);
        h0 = h0.max(inv_h.d[0].norm());
        for d in &inv_h.d {
            hn = hn.max(d.norm());
        }
    }
    let nn = lit::<T>(n as f64);
    let geo = (lit::<T>(4.0) * r / (T::PI() + T::PI())).powf(nn) * lit::<T>(2.0).powf(lit::<T>(1.5) * nn);
    h0.max(geo * hn)
}

/// Writes `(xi, re, im)` rows of the profile on `m` uniform nodes over `[−r, r]`.
pub fn write_profile_csv<T: Real, W: Write>(phi: &WavePacket<T>, m: usize, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["xi", "re", "im"])?;
    for (xi, v) in phi.profile_grid(m) {
        wr.write_record([
            format!("{:.17e}", crate::to_f64(xi)),
            format!("{:.17e}", crate::to_f64(v.re)),
            format!("{:.17e}", crate::to_f64(v.im)),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Loads a sampled profile and validates support, finiteness and grid uniformity.
pub fn read_profile_csv<T: Real, R: Read>(r: R, radius: T, max_order: usize) -> Result<WavePacket<T>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Io("short csv row".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Io(e.to_string()))
        };
        xs.push(get(0)?);
        vs.push(Cplx::new(lit::<T>(get(1)?), lit::<T>(get(2)?)));
    }
    if xs.len() < 8 {
        return param("profile csv needs at least 8 rows");
    }
    let dxi = xs[1] - xs[0];
    if !(dxi > 0.0) {
        return param("profile grid must be increasing");
    }
    for w in xs.windows(2) {
        if ((w[1] - w[0]) - dxi).abs() > 1e-9 * dxi {
            return param("profile grid is not uniform");
        }
    }
    let rad = crate::to_f64(radius);
    let scale = vs.iter().map(|z| z.norm()).fold(T::zero(), T::max);
    for (x, v) in xs.iter().zip(&vs) {
        if !v.re.is_finite() || !v.im.is_finite() {
            return param("profile contains non-finite values");
        }
        if x.abs() >= rad * (1.0 - 1e-12) && v.norm() > lit::<T>(1e-12) * scale {
            return param(format!("profile does not vanish at ξ = {x} outside (−r, r)"));
        }
    }
    let derivs = spectral_derivatives(&vs, lit(dxi), max_order);
    Ok(WavePacket {
        profile: Profile::Sampled { xi0: lit(xs[0]), dxi: lit(dxi), derivs },
        radius,
        order: max_order,
    })
}

/// Derivatives `0..=order` of uniformly sampled compactly supported data by FFT.
pub fn spectral_derivatives<T: Real>(vals: &[Cplx<T>], h: T, order: usize) -> Vec<Vec<Cplx<T>>> {
    let m = vals.len();
    let p = (2 * m).next_power_of_two();
    let plan = FftPair::new(p);
    let mut spec: Vec<Cplx<T>> = vals.to_vec();
    spec.resize(p, Cplx::new(T::zero(), T::zero()));
    plan.forward(&mut spec);
    let two_pi = T::PI() + T::PI();
    let len = h * lit::<T>(p as f64);
    let mut out = vec![vals.to_vec()];
    for ord in 1..=order {
        let mut buf = spec.clone();
        for (k, z) in buf.iter_mut().enumerate() {
            let kk = crate::signal::signed_index(k, p);
            if 2 * kk.unsigned_abs() as usize == p {
                *z = Cplx::new(T::zero(), T::zero());
                continue;
            }
            let w = Cplx::new(T::zero(), two_pi * lit::<T>(kk as f64) / len);
            *z = *z * w.powu(ord as u32);
        }
        plan.inverse(&mut buf);
        buf.truncate(m);
        out.push(buf);
    }
    out
}
