//! The embedding `E[f](η, y, t)[φ] = ∫ f̂(ξ) φ̂(t(η − ξ)) e^{2πiξy} dξ`, the maps
//! `Γ_{(α,β,γ)}`, boosted layers, defect fields and products of fields.
//!
//! Fields are evaluated lazily along `(η, t)` columns: embedded fields from the
//! sparse Fourier series of the signal (exact up to rounding), stored fields by
//! interpolation on their [`Grid3`]. The grid supplies the node sets used by the
//! size functionals and the finite-difference steps used by defects.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::geometry::{Band, BoundaryFn, PlaneGrid, Point};
use crate::signal::{cis, SampledSignal};
use crate::wavepacket::{BoostKind, WavePacket};
use crate::{lit, to_f64, Cplx, Real};

/// Relative threshold below which Fourier coefficients are dropped.
pub const SPECTRUM_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid3<T> {
    pub eta0: T,
    pub deta: T,
    pub n_eta: usize,
    pub y0: T,
    pub dy: T,
    pub n_y: usize,
    pub t0: T,
    pub rho: T,
    pub n_t: usize,
}

impl<T: Real> Grid3<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(eta0: T, deta: T, n_eta: usize, y0: T, dy: T, n_y: usize, t0: T, rho: T, n_t: usize) -> Result<Self> {
        if !(deta > T::zero() && dy > T::zero()) || n_eta == 0 || n_y == 0 || n_t == 0 {
            return param("grid needs positive spacings and node counts");
        }
        if !(t0 > T::zero()) {
            return param("smallest scale must be positive");
        }
        if !(rho > T::one() && rho <= lit(2.0)) {
            return param("scale ratio must lie in (1, 2]");
        }
        Ok(Grid3 { eta0, deta, n_eta, y0, dy, n_y, t0, rho, n_t })
    }

    pub fn eta(&self, i: usize) -> T {
        self.eta0 + self.deta * lit::<T>(i as f64)
    }

    pub fn y(&self, j: usize) -> T {
        self.y0 + self.dy * lit::<T>(j as f64)
    }

    pub fn t(&self, k: usize) -> T {
        self.t0 * self.rho.powi(k as i32)
    }

    pub fn ln_rho(&self) -> T {
        self.rho.ln()
    }

    pub fn len(&self) -> usize {
        self.n_eta * self.n_y * self.n_t
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i_eta: usize, i_y: usize, i_t: usize) -> usize {
        (i_t * self.n_eta + i_eta) * self.n_y + i_y
    }

    pub fn ys(&self) -> Vec<T> {
        (0..self.n_y).map(|j| self.y(j)).collect()
    }

    pub fn plane(&self) -> PlaneGrid<T> {
        PlaneGrid { eta0: self.eta0, deta: self.deta, n_eta: self.n_eta, y0: self.y0, dy: self.dy, n_y: self.n_y }
    }

    /// Same box with every spacing halved (and twice as many scales per octave).
    pub fn refined(&self) -> Self {
        Grid3 {
            eta0: self.eta0,
            deta: self.deta * lit(0.5),
            n_eta: 2 * self.n_eta - 1,
            y0: self.y0,
            dy: self.dy * lit(0.5),
            n_y: 2 * self.n_y - 1,
            t0: self.t0,
            rho: self.rho.sqrt(),
            n_t: 2 * self.n_t - 1,
        }
    }

    fn locate(x: T, x0: T, h: T, n: usize) -> (usize, T, bool) {
        let u = (x - x0) / h;
        if n == 1 {
            return (0, T::zero(), u.abs() > lit(1e-9));
        }
        let last = lit::<T>((n - 1) as f64);
        if u < T::zero() {
            return (0, T::zero(), u < -lit::<T>(1e-9));
        }
        if u >= last {
            return (n - 2, T::one(), u > last + lit::<T>(1e-9));
        }
        let i = u.floor().to_usize().expect("finite").min(n - 2);
        (i, u - lit::<T>(i as f64), false)
    }
}

/// `Γ(η, y, t) = (α(η + γ/t), y, βt)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaMap<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
}

impl<T: Real> GammaMap<T> {
    /// Accepts `β ∈ (0, 1]`, `|αβ| ∈ [1/2, 2]`, `|γ| ≤ 1`.
    pub fn new(alpha: T, beta: T, gamma: T) -> Result<Self> {
        if !(beta > T::zero() && beta <= T::one()) {
            return param("Γ needs beta in (0, 1]");
        }
        let ab = (alpha * beta).abs();
        if !(ab >= lit(0.5) && ab <= lit(2.0)) {
            return param("Γ needs |alpha·beta| in [1/2, 2]");
        }
        if !(gamma.abs() <= T::one()) {
            return param("Γ needs |gamma| ≤ 1");
        }
        Ok(GammaMap { alpha, beta, gamma })
    }

    pub fn identity() -> Self {
        GammaMap { alpha: T::one(), beta: T::one(), gamma: T::zero() }
    }

    /// `Γ₂ = (1/β, β, −1)`.
    pub fn gamma2(beta: T) -> Result<Self> {
        Self::new(T::one() / beta, beta, -T::one())
    }

    /// `Γ₃ = (−(1+β)/β, β, −1/(1+β))`.
    pub fn gamma3(beta: T) -> Result<Self> {
        let opb = T::one() + beta;
        Self::new(-opb / beta, beta, -T::one() / opb)
    }

    pub fn is_identity(&self) -> bool {
        self.alpha == T::one() && self.beta == T::one() && self.gamma == T::zero()
    }

    pub fn apply(&self, p: &Point<T>) -> Result<Point<T>> {
        if !(p.t > T::zero()) {
            return param("t must be positive");
        }
        let (eta, t) = self.apply_et(p.eta, p.t);
        Ok(Point { eta, y: p.y, t })
    }

    pub fn invert(&self, p: &Point<T>) -> Result<Point<T>> {
        if !(p.t > T::zero()) {
            return param("t must be positive");
        }
        let t = p.t / self.beta;
        Ok(Point { eta: p.eta / self.alpha - self.gamma / t, y: p.y, t })
    }

    #[inline]
    pub fn apply_et(&self, eta: T, t: T) -> (T, T) {
        (self.alpha * (eta + self.gamma / t), self.beta * t)
    }

    /// `θ_Γ = αβ(θ + γ)`.
    pub fn theta(&self, theta: T) -> T {
        self.alpha * self.beta * (theta + self.gamma)
    }

    /// `Θ_Γ`, reordered when `α < 0`.
    pub fn band(&self, b: &Band<T>) -> Band<T> {
        let (a, c) = (self.theta(b.lo), self.theta(b.hi));
        Band { lo: a.min(c), hi: a.max(c) }
    }
}

/// One entry of a field's packet family.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerPacket<T: Real> {
    Plain(WavePacket<T>),
    /// Boost with the point-dependent `θ = t'(η' − α ξ_T)` taken in image coordinates of `Γ`.
    Boosted { base: WavePacket<T>, kind: BoostKind, xi_t: T },
    /// `φ^o = φ̂(θ)·ω̂` or `φ^l = φ − φ^o`, with `θ` read off as for boosts.
    Split { base: WavePacket<T>, omega: WavePacket<T>, star: Star, xi_t: T },
}

/// Which half of the split `φ = φ^o + φ^l`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Star {
    O,
    L,
}

/// The cutoff `ω` for splitting packets of radius `r`: `ω̂ = 1` on `B_{7r/4}`, supported in `B_{2r}`.
pub fn make_omega<T: Real>(r: T) -> Result<WavePacket<T>> {
    crate::wavepacket::make_mother_packet(r * lit(2.0), lit(0.875))
}

impl<T: Real> LayerPacket<T> {
    pub fn radius(&self) -> T {
        match self {
            LayerPacket::Plain(p) | LayerPacket::Boosted { base: p, .. } => p.radius,
            LayerPacket::Split { base, omega, .. } => base.radius.max(omega.radius),
        }
    }

    pub fn base(&self) -> &WavePacket<T> {
        match self {
            LayerPacket::Plain(p) | LayerPacket::Boosted { base: p, .. } | LayerPacket::Split { base: p, .. } => p,
        }
    }

    #[inline]
    fn value(&self, w: T, theta: T) -> Cplx<T> {
        match self {
            LayerPacket::Plain(p) => p.fourier(w),
            LayerPacket::Boosted { base, kind: BoostKind::Zeta, .. } => {
                let two_pi = T::PI() + T::PI();
                base.fourier(w) * Cplx::new(T::zero(), two_pi * (theta - w))
            }
            LayerPacket::Boosted { base, kind: BoostKind::Sigma, .. } => base.fourier_jet(w, 1).d[1] * (w - theta),
            LayerPacket::Split { base, omega, star, .. } => {
                let o = base.fourier(theta) * omega.fourier(w);
                match star {
                    Star::O => o,
                    Star::L => base.fourier(w) - o,
                }
            }
        }
    }
}

/// Multiplies a field by `1_{t < b}` or `1_{t ≥ b}`.
#[derive(Clone, Debug, PartialEq)]
pub enum Mask<T: Real> {
    Below(BoundaryFn<T>),
    AtOrAbove(BoundaryFn<T>),
}

impl<T: Real> Mask<T> {
    pub fn boundary(&self) -> &BoundaryFn<T> {
        match self {
            Mask::Below(b) | Mask::AtOrAbove(b) => b,
        }
    }

    fn keeps(&self, b: T, t: T) -> bool {
        match self {
            Mask::Below(_) => t < b,
            Mask::AtOrAbove(_) => t >= b,
        }
    }

    /// `+1` for `1_{t<b}`, `−1` for `1_{t≥b}`: the sign of `−∂_t` of the indicator's jump.
    fn sign(&self) -> T {
        match self {
            Mask::Below(_) => T::one(),
            Mask::AtOrAbove(_) => -T::one(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum DefectKind<T> {
    /// `D_ζ(θ_Γ) − βt∂_y + 2πi α β t ξ_T`, with `α` summed over factors of a product.
    Zeta { xi_t: T, beta: T },
    /// `D_σ(θ_Γ) − t∂_t + (η − ξ_T)∂_η`.
    Sigma { xi_t: T },
}

/// The measure `g(η, y) · t δ(t − b(η, y))` produced by a defect hitting a cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularLayer<T: Real> {
    pub boundary: BoundaryFn<T>,
    sign: T,
    kind: DefectKind<T>,
    /// Smooth factor with the remaining cutoffs applied.
    trace: Box<EmbeddedField<T>>,
}

impl<T: Real> SingularLayer<T> {
    fn steps(eta: T, y: T) -> (T, T) {
        let h = lit::<T>(1e-6);
        (h * eta.abs().max(T::one()), h * y.abs().max(T::one()))
    }

    /// `(∂_η b, ∂_y b)` by centred differences of the exact graph.
    pub fn gradient(&self, eta: T, y: T) -> (T, T) {
        let (he, hy) = Self::steps(eta, y);
        let b = &self.boundary;
        let two = lit::<T>(2.0);
        ((b.eval(eta + he, y) - b.eval(eta - he, y)) / (two * he), (b.eval(eta, y + hy) - b.eval(eta, y - hy)) / (two * hy))
    }

    /// Density `g` at `(η, y)`, together with `b(η, y)`.
    pub fn weight(&self, layer: usize, eta: T, y: T) -> (Cplx<T>, T) {
        let b = self.boundary.eval(eta, y);
        if !(b > T::zero()) || !b.is_finite() {
            return (Cplx::new(T::zero(), T::zero()), b);
        }
        let (db_eta, db_y) = self.gradient(eta, y);
        let coef = match self.kind {
            DefectKind::Zeta { beta, .. } => -beta * db_y,
            DefectKind::Sigma { xi_t } => T::one() + (eta - xi_t) * db_eta / b,
        };
        let g = self.trace.column(layer, eta, b, &[y]).values[0];
        (g * (self.sign * coef), b)
    }

    /// `|1 + (η − ξ)∂_η b / b|` at `(η, y)`.
    pub fn jacobian(&self, xi: T, eta: T, y: T) -> T {
        let b = self.boundary.eval(eta, y);
        let (db_eta, _) = self.gradient(eta, y);
        (T::one() + (eta - xi) * db_eta / b).abs()
    }
}

/// Values along one `(η, t)` column, with the number of clamped evaluations.
#[derive(Clone, Debug, PartialEq)]
pub struct Column<T: Real> {
    pub values: Vec<Cplx<T>>,
    pub edges: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Data<T: Real> {
    Embedded { spectrum: Arc<Vec<(T, Cplx<T>)>>, gamma: GammaMap<T>, layers: Vec<LayerPacket<T>> },
    Sampled { values: Arc<Vec<Vec<Cplx<T>>>> },
    Product { f2: Box<EmbeddedField<T>>, f3: Box<EmbeddedField<T>> },
    Defect { inner: Box<EmbeddedField<T>>, kind: DefectKind<T>, smooth_masks: Vec<Mask<T>> },
}

/// A field on `ℝ³₊` valued in a finite packet family, possibly with singular layers.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedField<T: Real> {
    pub grid: Grid3<T>,
    data: Data<T>,
    pub masks: Vec<Mask<T>>,
    pub singular: Vec<SingularLayer<T>>,
    pub factor: Cplx<T>,
}

fn zero<T: Real>() -> Cplx<T> {
    Cplx::new(T::zero(), T::zero())
}

/// Embeds `f` for each packet of the family, optionally composed with `Γ`.
pub fn embed<T: Real>(f: &SampledSignal<T>, grid: &Grid3<T>, packets: &[WavePacket<T>], gamma: Option<GammaMap<T>>) -> Result<EmbeddedField<T>> {
    if packets.is_empty() {
        return param("packet family is empty");
    }
    let spectrum = f.sparse_spectrum(lit(SPECTRUM_TOL));
    let band = spectrum.iter().map(|(xi, _)| xi.abs()).fold(T::zero(), T::max);
    if grid.dy * band * lit(2.0) >= T::one() {
        return Err(Error::Resolution(format!(
            "y-spacing {} does not resolve the signal band {}",
            to_f64(grid.dy),
            to_f64(band)
        )));
    }
    let r = packets.iter().map(|p| p.radius).fold(T::infinity(), T::min);
    let t_max = grid.t(grid.n_t - 1);
    if grid.deta * t_max > r {
        return Err(Error::Resolution(format!(
            "eta-spacing {} does not resolve packets of radius {} at scale {}",
            to_f64(grid.deta),
            to_f64(r),
            to_f64(t_max)
        )));
    }
    Ok(EmbeddedField {
        grid: *grid,
        data: Data::Embedded {
            spectrum: Arc::new(spectrum),
            gamma: gamma.unwrap_or_else(GammaMap::identity),
            layers: packets.iter().cloned().map(LayerPacket::Plain).collect(),
        },
        masks: Vec::new(),
        singular: Vec::new(),
        factor: Cplx::new(T::one(), T::zero()),
    })
}

/// Replaces every packet layer by its boost with `θ` read off relative to `ξ_T`.
pub fn field_boost<T: Real>(f: &EmbeddedField<T>, xi_t: T, kind: BoostKind) -> Result<EmbeddedField<T>> {
    match &f.data {
        Data::Embedded { spectrum, gamma, layers } => {
            let layers = layers
                .iter()
                .map(|l| match l {
                    LayerPacket::Plain(p) => {
                        if kind == BoostKind::Sigma && p.order < 1 {
                            return Err(Error::Resolution("sigma boost needs a differentiable packet".into()));
                        }
                        Ok(LayerPacket::Boosted { base: p.clone(), kind, xi_t })
                    }
                    _ => Err(Error::Unsupported("repeated boosts are not modelled".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EmbeddedField { data: Data::Embedded { spectrum: spectrum.clone(), gamma: *gamma, layers }, ..f.clone() })
        }
        Data::Product { .. } => Err(Error::Unsupported("boost a product through its factors".into())),
        _ => Err(Error::Unsupported("boosts need an embedded source".into())),
    }
}

/// Replaces every packet layer by `φ^o` or `φ^l` relative to `ξ_T`, using the cutoff `omega`.
pub fn field_split<T: Real>(f: &EmbeddedField<T>, xi_t: T, star: Star, omega: &WavePacket<T>) -> Result<EmbeddedField<T>> {
    match &f.data {
        Data::Embedded { spectrum, gamma, layers } => {
            let layers = layers
                .iter()
                .map(|l| match l {
                    LayerPacket::Plain(p) => Ok(LayerPacket::Split { base: p.clone(), omega: omega.clone(), star, xi_t }),
                    _ => Err(Error::Unsupported("only plain layers can be split".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EmbeddedField { data: Data::Embedded { spectrum: spectrum.clone(), gamma: *gamma, layers }, ..f.clone() })
        }
        _ => Err(Error::Unsupported("splits need an embedded source".into())),
    }
}

/// Pointwise product `F₂[φ₂]·F₃[φ₃]` over the tensor family.
pub fn product_field<T: Real>(f2: &EmbeddedField<T>, f3: &EmbeddedField<T>) -> Result<EmbeddedField<T>> {
    if f2.grid != f3.grid {
        return Err(Error::Shape("product factors live on different grids".into()));
    }
    Ok(EmbeddedField {
        grid: f2.grid,
        data: Data::Product { f2: Box::new(f2.clone()), f3: Box::new(f3.clone()) },
        masks: Vec::new(),
        singular: Vec::new(),
        factor: Cplx::new(T::one(), T::zero()),
    })
}

/// Defect field relative to a tree frequency `ξ_T`.
///
/// Cutoffs of `F` turn into singular layers on their boundary graphs. The smooth part
/// uses centred differences with the grid steps `dy`, `dη` and `ln ρ`, taken in the image
/// coordinates of `Γ`.
pub fn defect_field<T: Real>(f: &EmbeddedField<T>, xi_t: T, kind: BoostKind) -> Result<EmbeddedField<T>> {
    if !f.singular.is_empty() {
        return Err(Error::Unsupported("defects of singular fields are not modelled".into()));
    }
    let dk = match kind {
        BoostKind::Sigma => DefectKind::Sigma { xi_t },
        BoostKind::Zeta => {
            let beta = f.gamma_beta()?;
            DefectKind::Zeta { xi_t, beta }
        }
    };
    // check that the boosted layers exist
    match &f.data {
        Data::Embedded { .. } => {
            field_boost(f, xi_t, kind)?;
        }
        Data::Product { f2, f3 } => {
            if !f2.masks.is_empty() || !f3.masks.is_empty() {
                return Err(Error::Unsupported("cutoffs must sit on the product, not its factors".into()));
            }
            field_boost(f2, xi_t, kind)?;
            field_boost(f3, xi_t, kind)?;
        }
        _ => return Err(Error::Unsupported("defects need an embedded source".into())),
    }
    let mut inner = f.clone();
    inner.masks.clear();
    let mut singular = Vec::new();
    for (i, m) in f.masks.iter().enumerate() {
        let mut trace = f.clone();
        trace.masks.remove(i);
        singular.push(SingularLayer { boundary: m.boundary().clone(), sign: m.sign(), kind: dk, trace: Box::new(trace) });
    }
    Ok(EmbeddedField {
        grid: f.grid,
        data: Data::Defect { inner: Box::new(inner), kind: dk, smooth_masks: f.masks.clone() },
        masks: Vec::new(),
        singular,
        factor: Cplx::new(T::one(), T::zero()),
    })
}

impl<T: Real> EmbeddedField<T> {
    /// Stored field from per-layer values laid out by [`Grid3::index`].
    pub fn sampled(grid: Grid3<T>, values: Vec<Vec<Cplx<T>>>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| v.len() != grid.len()) {
            return Err(Error::Shape("layer values must match the grid".into()));
        }
        if values.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return param("field values must be finite");
        }
        Ok(EmbeddedField {
            grid,
            data: Data::Sampled { values: Arc::new(values) },
            masks: Vec::new(),
            singular: Vec::new(),
            factor: Cplx::new(T::one(), T::zero()),
        })
    }

    pub fn n_layers(&self) -> usize {
        match &self.data {
            Data::Embedded { layers, .. } => layers.len(),
            Data::Sampled { values } => values.len(),
            Data::Product { f2, f3 } => f2.n_layers() * f3.n_layers(),
            Data::Defect { inner, .. } => inner.n_layers(),
        }
    }

    /// Whether the values come from a signal (so boosts and defects are available).
    pub fn has_source(&self) -> bool {
        match &self.data {
            Data::Embedded { .. } => true,
            Data::Product { f2, f3 } => f2.has_source() && f3.has_source(),
            _ => false,
        }
    }

    /// `lim_{t→0} F(ξ + θ/t, y, t)` for every `y` in `ys`, for fields with a source.
    ///
    /// Masks are applied at the smallest grid scale `t₀`.
    pub fn bottom_limit(&self, layer: usize, xi: T, theta: T, ys: &[T]) -> Option<Vec<Cplx<T>>> {
        let mut out = match &self.data {
            Data::Embedded { spectrum, gamma, layers } => {
                let th = gamma.theta(theta);
                let a = layers[layer].value(th, th);
                let two_pi = T::PI() + T::PI();
                ys.iter()
                    .map(|&y| spectrum.iter().fold(zero::<T>(), |acc, (k, c)| acc + c * cis(two_pi * *k * y)) * a)
                    .collect::<Vec<_>>()
            }
            Data::Product { f2, f3 } => {
                let (i, j) = (layer / f3.n_layers(), layer % f3.n_layers());
                let a = f2.bottom_limit(i, xi, theta, ys)?;
                let b = f3.bottom_limit(j, xi, theta, ys)?;
                a.iter().zip(&b).map(|(x, y)| x * y).collect()
            }
            _ => return None,
        };
        let t0 = self.grid.t0;
        apply_masks(&self.masks, xi + theta / t0, t0, ys, &mut out);
        out.iter_mut().for_each(|v| *v = *v * self.factor);
        Some(out)
    }

    /// Smallest packet radius of the family, if the field has a source.
    pub fn packet_radius(&self) -> Option<T> {
        match &self.data {
            Data::Embedded { layers, .. } => Some(layers.iter().map(|l| l.base().radius).fold(T::infinity(), T::min)),
            Data::Product { f2, f3 } => Some(f2.packet_radius()?.min(f3.packet_radius()?)),
            Data::Defect { inner, .. } => inner.packet_radius(),
            Data::Sampled { .. } => None,
        }
    }

    pub fn is_product(&self) -> bool {
        matches!(self.data, Data::Product { .. })
    }

    /// Factors of a product field.
    pub fn factors(&self) -> Option<(&EmbeddedField<T>, &EmbeddedField<T>)> {
        match &self.data {
            Data::Product { f2, f3 } => Some((f2, f3)),
            _ => None,
        }
    }

    /// The `Γ` attached to an embedded field.
    pub fn gamma(&self) -> Option<GammaMap<T>> {
        match &self.data {
            Data::Embedded { gamma, .. } => Some(*gamma),
            _ => None,
        }
    }

    /// `β` of the attached `Γ` (common to both factors of a product).
    fn gamma_beta(&self) -> Result<T> {
        match &self.data {
            Data::Embedded { gamma, .. } => Ok(gamma.beta),
            Data::Product { f2, f3 } => {
                let (b2, b3) = (f2.gamma_beta()?, f3.gamma_beta()?);
                if b2 != b3 {
                    return Err(Error::Unsupported("product factors with different beta".into()));
                }
                Ok(b2)
            }
            _ => Err(Error::Unsupported("defects need an embedded source".into())),
        }
    }

    pub fn scaled(&self, c: Cplx<T>) -> Self {
        let mut out = self.clone();
        out.factor = out.factor * c;
        for s in &mut out.singular {
            s.trace.factor = s.trace.factor * c;
        }
        out
    }

    pub fn with_mask(&self, m: Mask<T>) -> Self {
        let mut out = self.clone();
        out.masks.push(m);
        out
    }

    /// Values at `(η, y, t)` for every `y` in `ys`.
    pub fn column(&self, layer: usize, eta: T, t: T, ys: &[T]) -> Column<T> {
        let mut col = self.column_unmasked(layer, eta, t, ys);
        apply_masks(&self.masks, eta, t, ys, &mut col.values);
        if self.factor != Cplx::new(T::one(), T::zero()) {
            col.values.iter_mut().for_each(|v| *v = *v * self.factor);
        }
        col
    }

    pub fn value(&self, layer: usize, p: &Point<T>) -> Cplx<T> {
        self.column(layer, p.eta, p.t, &[p.y]).values[0]
    }

    fn column_unmasked(&self, layer: usize, eta: T, t: T, ys: &[T]) -> Column<T> {
        match &self.data {
            Data::Embedded { spectrum, gamma, layers } => {
                Column { values: embedded_column(spectrum, gamma, &layers[layer], eta, t, ys), edges: 0 }
            }
            Data::Sampled { values } => sampled_column(&self.grid, &values[layer], eta, t, ys),
            Data::Product { f2, f3 } => {
                let (i, j) = (layer / f3.n_layers(), layer % f3.n_layers());
                let a = f2.column(i, eta, t, ys);
                let b = f3.column(j, eta, t, ys);
                Column { values: a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect(), edges: a.edges + b.edges }
            }
            Data::Defect { inner, kind, smooth_masks } => {
                let mut v = defect_column(inner, kind, layer, eta, t, ys);
                apply_masks(smooth_masks, eta, t, ys, &mut v);
                Column { values: v, edges: 0 }
            }
        }
    }

    /// All values of one layer on the grid.
    pub fn materialize(&self, layer: usize) -> Vec<Cplx<T>> {
        let g = &self.grid;
        let ys = g.ys();
        let slices: Vec<Vec<Cplx<T>>> = (0..g.n_t * g.n_eta)
            .into_par_iter()
            .map(|s| {
                let (it, ie) = (s / g.n_eta, s % g.n_eta);
                self.column(layer, g.eta(ie), g.t(it), &ys).values
            })
            .collect();
        slices.concat()
    }

    pub fn sup_norm(&self, layer: usize) -> T {
        self.materialize(layer).iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    /// JSON header followed by a CSV dump `(i_eta, i_y, i_t, layer, re, im)`.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()>
    where
        T: Serialize,
    {
        let header = FieldHeader { grid: self.grid, n_layers: self.n_layers(), singular_layers: self.singular.len() };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["i_eta", "i_y", "i_t", "layer", "re", "im"])?;
        let g = &self.grid;
        for l in 0..self.n_layers() {
            let v = self.materialize(l);
            for it in 0..g.n_t {
                for ie in 0..g.n_eta {
                    for iy in 0..g.n_y {
                        let z = v[g.index(ie, iy, it)];
                        wr.write_record([
                            ie.to_string(),
                            iy.to_string(),
                            it.to_string(),
                            l.to_string(),
                            format!("{:.17e}", to_f64(z.re)),
                            format!("{:.17e}", to_f64(z.im)),
                        ])?;
                    }
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a dump written by [`EmbeddedField::write`] as a stored field.
    pub fn read<R: Read>(r: R) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let mut text = String::new();
        let mut r = r;
        r.read_to_string(&mut text)?;
        let (first, rest) = text.split_once('\n').ok_or_else(|| Error::Io("missing field header".into()))?;
        let header: FieldHeader<T> = serde_json::from_str(first)?;
        let g = header.grid;
        let mut values = vec![vec![zero::<T>(); g.len()]; header.n_layers];
        let mut seen = 0usize;
        let mut rd = csv::Reader::from_reader(rest.as_bytes());
        for rec in rd.records() {
            let rec = rec?;
            let get = |i: usize| rec.get(i).ok_or_else(|| Error::Io("short row".into()));
            let parse_u = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Io(e.to_string()));
            let parse_f = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Io(e.to_string()));
            let (ie, iy, it, l) = (parse_u(get(0)?)?, parse_u(get(1)?)?, parse_u(get(2)?)?, parse_u(get(3)?)?);
            if ie >= g.n_eta || iy >= g.n_y || it >= g.n_t || l >= header.n_layers {
                return Err(Error::Shape("field row outside the grid".into()));
            }
            values[l][g.index(ie, iy, it)] = Cplx::new(lit(parse_f(get(4)?)?), lit(parse_f(get(5)?)?));
            seen += 1;
        }
        if seen != g.len() * header.n_layers {
            return Err(Error::Shape(format!("expected {} rows, found {seen}", g.len() * header.n_layers)));
        }
        Self::sampled(g, values)
    }
}

#[derive(Serialize, Deserialize)]
struct FieldHeader<T> {
    grid: Grid3<T>,
    n_layers: usize,
    singular_layers: usize,
}

fn apply_masks<T: Real>(masks: &[Mask<T>], eta: T, t: T, ys: &[T], values: &mut [Cplx<T>]) {
    for m in masks {
        let bf = m.boundary();
        for (v, &y) in values.iter_mut().zip(ys) {
            if !m.keeps(bf.eval(eta, y), t) {
                *v = zero();
            }
        }
    }
}

fn embedded_column<T: Real>(spectrum: &[(T, Cplx<T>)], gamma: &GammaMap<T>, layer: &LayerPacket<T>, eta: T, t: T, ys: &[T]) -> Vec<Cplx<T>> {
    let (ep, tp) = gamma.apply_et(eta, t);
    let theta = match layer {
        LayerPacket::Boosted { xi_t, .. } | LayerPacket::Split { xi_t, .. } => tp * (ep - gamma.alpha * *xi_t),
        LayerPacket::Plain(_) => T::zero(),
    };
    let reach = layer.radius() / tp;
    let lo = spectrum.partition_point(|(xi, _)| *xi <= ep - reach);
    let hi = spectrum.partition_point(|(xi, _)| *xi < ep + reach);
    let two_pi = T::PI() + T::PI();
    let mut out = vec![zero::<T>(); ys.len()];
    for (xi, c) in &spectrum[lo..hi] {
        let a = c * layer.value(tp * (ep - *xi), theta);
        if a == zero() {
            continue;
        }
        for (o, &y) in out.iter_mut().zip(ys) {
            *o += a * cis(two_pi * *xi * y);
        }
    }
    out
}

fn sampled_column<T: Real>(g: &Grid3<T>, v: &[Cplx<T>], eta: T, t: T, ys: &[T]) -> Column<T> {
    let (ie, fe, e1) = Grid3::locate(eta, g.eta0, g.deta, g.n_eta);
    let (it, ft, e3) = Grid3::locate((t / g.t0).ln(), T::zero(), g.ln_rho(), g.n_t);
    let mut edges = 0;
    let values = ys
        .iter()
        .map(|&y| {
            let (iy, fy, e2) = Grid3::locate(y, g.y0, g.dy, g.n_y);
            if e1 || e2 || e3 {
                edges += 1;
            }
            let mut acc = zero::<T>();
            for (de, we) in [(0usize, T::one() - fe), (1, fe)] {
                for (dy, wy) in [(0usize, T::one() - fy), (1, fy)] {
                    for (dt, wt) in [(0usize, T::one() - ft), (1, ft)] {
                        let w = we * wy * wt;
                        if w == T::zero() {
                            continue;
                        }
                        let (a, b, c) = ((ie + de).min(g.n_eta - 1), (iy + dy).min(g.n_y - 1), (it + dt).min(g.n_t - 1));
                        acc += v[g.index(a, b, c)] * w;
                    }
                }
            }
            acc
        })
        .collect();
    Column { values, edges }
}

fn defect_column<T: Real>(f: &EmbeddedField<T>, kind: &DefectKind<T>, layer: usize, eta: T, t: T, ys: &[T]) -> Vec<Cplx<T>> {
    match &f.data {
        Data::Embedded { spectrum, gamma, layers } => {
            // difference in image coordinates: F = E∘Γ and the operator is Γ-covariant
            let image = EmbeddedField {
                data: Data::Embedded { spectrum: spectrum.clone(), gamma: GammaMap::identity(), layers: layers.clone() },
                ..f.clone()
            };
            let (ep, tp) = gamma.apply_et(eta, t);
            let xi = match *kind {
                DefectKind::Zeta { xi_t, .. } | DefectKind::Sigma { xi_t } => gamma.alpha * xi_t,
            };
            let boosted = |k: BoostKind| field_boost(&image, xi, k).expect("checked").column(layer, ep, tp, ys).values;
            let g = &f.grid;
            let two = lit::<T>(2.0);
            match kind {
                DefectKind::Zeta { .. } => {
                    let two_pi = T::PI() + T::PI();
                    let d = boosted(BoostKind::Zeta);
                    let up: Vec<T> = ys.iter().map(|&y| y + g.dy).collect();
                    let dn: Vec<T> = ys.iter().map(|&y| y - g.dy).collect();
                    let fp = image.column(layer, ep, tp, &up).values;
                    let fm = image.column(layer, ep, tp, &dn).values;
                    let f0 = image.column(layer, ep, tp, ys).values;
                    let phase = Cplx::new(T::zero(), two_pi * tp * xi);
                    (0..ys.len()).map(|k| d[k] - (fp[k] - fm[k]) * (tp / (two * g.dy)) + f0[k] * phase).collect()
                }
                DefectKind::Sigma { .. } => {
                    // −t∂_t + (η − ξ)∂_η = −t∂_t along t(η − ξ_c) = const, plus (ξ_c − ξ)∂_η;
                    // the anchor keeps the packet argument within the packet radius
                    let d = boosted(BoostKind::Sigma);
                    let reach = layers[layer].radius();
                    let theta = tp * (ep - xi);
                    let wc = theta.max(-reach).min(reach);
                    let xc = ep - wc / tp;
                    let (tu, td) = (tp * g.rho, tp / g.rho);
                    let fu = image.column(layer, xc + wc / tu, tu, ys).values;
                    let fd = image.column(layer, xc + wc / td, td, ys).values;
                    let lr = two * g.ln_rho();
                    let ce = (xc - xi) / (two * g.deta);
                    if ce == T::zero() {
                        (0..ys.len()).map(|k| d[k] - (fu[k] - fd[k]) / lr).collect()
                    } else {
                        let eu = image.column(layer, ep + g.deta, tp, ys).values;
                        let ed = image.column(layer, ep - g.deta, tp, ys).values;
                        (0..ys.len()).map(|k| d[k] - (fu[k] - fd[k]) / lr + (eu[k] - ed[k]) * ce).collect()
                    }
                }
            }
        }
        Data::Product { f2, f3 } => {
            // product rule: the bilinear defect is a sum of factor defects
            let (i, j) = (layer / f3.n_layers(), layer % f3.n_layers());
            let a = f2.column(i, eta, t, ys).values;
            let b = f3.column(j, eta, t, ys).values;
            let da = defect_column(f2, kind, i, eta, t, ys);
            let db = defect_column(f3, kind, j, eta, t, ys);
            (0..ys.len()).map(|k| (da[k] * b[k] + a[k] * db[k]) * f.factor).collect()
        }
        _ => unreachable!("defects are only built for embedded sources"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{boundary_of, Region, Strip, Tree};
    use crate::wavepacket::make_mother_packet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn signal(seed: u64) -> SampledSignal<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms: Vec<(f64, Cplx<f64>)> =
            (-24..=24).map(|k| (k as f64 / 16.0, Cplx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))).collect();
        SampledSignal::from_fourier_series(256, 1.0 / 16.0, -8.0, &terms).unwrap()
    }

    fn grid(h: f64) -> Grid3<f64> {
        let n = (1.0 / h) as usize;
        Grid3::new(-1.0, 0.004 * h, 100 * n + 1, -2.0, h / 4.0, 16 * n + 1, 0.25, 2f64.powf(h), (4.0 / h) as usize + 1).unwrap()
    }

    fn mother() -> WavePacket<f64> {
        make_mother_packet(1.0 / 32.0, 0.5).unwrap()
    }

    #[test]
    fn gamma_maps() {
        let id = GammaMap::<f64>::new(1.0, 1.0, 0.0).unwrap();
        let p = Point::new(0.3, -1.0, 0.7);
        assert_eq!(id.apply(&p).unwrap(), p);
        let g2 = GammaMap::gamma2(0.5).unwrap();
        assert_eq!((g2.alpha, g2.beta, g2.gamma), (2.0, 0.5, -1.0));
        let q = g2.apply(&p).unwrap();
        assert!((q.eta - 2.0 * (0.3 - 1.0 / 0.7)).abs() < 1e-15 && q.t == 0.35 && q.y == -1.0);
        assert!(GammaMap::new(1.0, 1.5, 0.0).is_err());
        assert!(GammaMap::new(5.0, 1.0, 0.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let beta: f64 = rng.gen_range(0.05..1.0);
            let g = if rng.gen_bool(0.5) { GammaMap::gamma2(beta) } else { GammaMap::gamma3(beta) }.unwrap();
            let p: Point<f64> = Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(0.01..5.0));
            let back = g.invert(&g.apply(&p).unwrap()).unwrap();
            assert!((back.eta - p.eta).abs() < 1e-12 * (1.0 + p.eta.abs() + 1.0 / p.t));
            assert!((back.t - p.t).abs() < 1e-15 * p.t.max(1.0));
        }
    }

    #[test]
    fn gamma_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let beta = 0.5;
        let band = Band::symmetric(4.0);
        for g in [GammaMap::gamma2(beta).unwrap(), GammaMap::gamma3(beta).unwrap()] {
            let tree = Tree::new(0.7, 0.2, 1.5, band).unwrap();
            let image = Tree::new(g.alpha * tree.xi, tree.x, tree.s, g.band(&band)).unwrap();
            let mut n = 0;
            while n < 1000 {
                let (th, z, s): (f64, f64, f64) = (rng.gen_range(-4.0..4.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0));
                if !tree.in_model(th, z, s) {
                    continue;
                }
                n += 1;
                let p = g.apply(&tree.from_model(th, z, s).unwrap()).unwrap();
                let (a, _, _) = image.model_coords(&p).unwrap();
                assert!((a - g.theta(th)).abs() < 1e-9);
                // open bands: compare with a relative slack for points near the band edge
                let mut q = p;
                q.t *= 1.0 - 1e-12;
                assert!(image.contains(&p) || image.contains(&q), "{p:?}");
            }
            let d = Strip::new(0.4, 1.0, beta).unwrap();
            let d1 = Strip::new(0.4, 1.0, 1.0).unwrap();
            for _ in 0..1000 {
                let p = Point::new(rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..2.0), rng.gen_range(0.01..2.5));
                assert_eq!(d.contains(&p), d1.contains(&g.apply(&p).unwrap()));
            }
        }
    }

    #[test]
    fn zero_signal_and_linearity() {
        let g = grid(0.25);
        let phi = mother();
        let z = SampledSignal::zeros(256, 1.0 / 16.0, -8.0).unwrap();
        let f0 = embed(&z, &g, &[phi.clone()], None).unwrap();
        assert_eq!(f0.column(0, 1.0, 0.5, &g.ys()).values.iter().map(|v| v.norm()).sum::<f64>(), 0.0);
        let (a, b) = (signal(1), signal(2));
        let c = Cplx::new(0.3, -1.2);
        let sum = a.add(&b.scale(c)).unwrap();
        let ea = embed(&a, &g, &[phi.clone()], None).unwrap();
        let eb = embed(&b, &g, &[phi.clone()], None).unwrap();
        let es = embed(&sum, &g, &[phi.clone()], None).unwrap();
        let ys = g.ys();
        for &(eta, t) in &[(0.5, 0.5), (-0.3, 1.7), (1.1, 0.9)] {
            let (x, y, s) = (ea.column(0, eta, t, &ys), eb.column(0, eta, t, &ys), es.column(0, eta, t, &ys));
            for k in 0..ys.len() {
                assert!((x.values[k] + y.values[k] * c - s.values[k]).norm() < 1e-12);
            }
        }
        // conjugation: E[f̄](η) = conj E[f](−η) for a real even packet
        let ec = embed(&a.conj(), &g, &[phi], None).unwrap();
        let u = ec.column(0, 0.6, 0.8, &ys);
        let v = ea.column(0, -0.6, 0.8, &ys);
        for k in 0..ys.len() {
            assert!((u.values[k] - v.values[k].conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn resolution_errors() {
        let phi = mother();
        let coarse = Grid3::new(-1.0, 0.01, 10, 0.0, 0.5, 10, 0.25, 2.0, 3).unwrap();
        assert!(matches!(embed(&signal(1), &coarse, &[phi.clone()], None), Err(Error::Resolution(_))));
        let wide = Grid3::new(-1.0, 0.1, 10, 0.0, 0.05, 10, 0.25, 2.0, 6).unwrap();
        assert!(matches!(embed(&signal(1), &wide, &[phi], None), Err(Error::Resolution(_))));
    }

    #[test]
    fn pointwise_quadrature_oracle() {
        // E[f](η,y,t) = ∫ f(z) φ_t(z − y) e^{−2πiη(z−y)} ... written as ∫ f(z) Tr_y Mod_{−η} Dil_t φ(z) dz
        let r = 0.25;
        let phi = make_mother_packet(r, 0.5).unwrap();
        let f = signal(9);
        let g = Grid3::new(-2.0, 0.01, 401, -4.0, 1.0 / 32.0, 257, 0.5, 2f64.sqrt(), 3).unwrap();
        let e = embed(&f, &g, &[phi.clone()], None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..8 {
            let (ie, iy, it) = (rng.gen_range(0..g.n_eta), rng.gen_range(0..g.n_y), rng.gen_range(0..g.n_t));
            let (eta, y, t) = (g.eta(ie), g.y(iy), g.t(it));
            let zmax = 60.0 * t / r;
            let nodes = phi.spatial_nodes(zmax / t);
            let h = f.dx;
            let n = f.len() as i64;
            let j0 = ((y - f.x0) / h).floor() as i64;
            let m = (zmax / h) as i64;
            let two_pi = 2.0 * std::f64::consts::PI;
            let mut acc = Cplx::new(0.0, 0.0);
            for j in (j0 - m)..=(j0 + m) {
                let z = f.x0 + j as f64 * h;
                let dil = phi.spatial((z - y) / t, nodes) / t;
                acc += f.samples[j.rem_euclid(n) as usize] * dil * cis(-two_pi * eta * (z - y));
            }
            acc *= h;
            let v = e.value(0, &Point::new(eta, y, t));
            assert!((acc - v).norm() < 1e-6 * (1.0 + v.norm()), "{acc} vs {v}");
        }
    }

    #[test]
    fn tree_symmetry_identity() {
        let f = signal(4);
        let phi = mother();
        let g = grid(0.25);
        let (xi, x, s) = (0.5, 1.0, 1.0);
        let local = f.translate(-x).modulate(-xi);
        let e = embed(&f, &g, &[phi.clone()], None).unwrap();
        let el = embed(&local, &g, &[phi], None).unwrap();
        let tree = Tree::new(xi, x, s, Band::symmetric(4.0)).unwrap();
        let origin = Tree::new(0.0, 0.0, 1.0, Band::symmetric(4.0)).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        for &(th, z, sg) in &[(0.01, 0.2, 0.3), (-0.02, -0.5, 0.45), (0.0, 0.0, 0.9)] {
            let a = e.value(0, &tree.from_model(th, z, sg).unwrap());
            let b = el.value(0, &origin.from_model(th, z, sg).unwrap()) * cis(two_pi * xi * s * z);
            assert!((a - b).norm() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn zeta_boost_is_scale_times_zeta_derivative() {
        let f = signal(6);
        let phi = mother();
        let g = grid(0.25);
        let (xi, x, s) = (0.5, 0.0, 1.0);
        let e = embed(&f, &g, &[phi.clone()], None).unwrap();
        let b = field_boost(&e, xi, BoostKind::Zeta).unwrap();
        let tree = Tree::new(xi, x, s, Band::symmetric(4.0)).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let corrected = |th: f64, z: f64, sg: f64| e.value(0, &tree.from_model(th, z, sg).unwrap()) * cis(-two_pi * xi * s * z);
        let hz = 1e-5;
        for &(th, z, sg) in &[(0.01, 0.1, 0.5), (-0.015, -0.3, 0.7)] {
            let fd = (corrected(th, z + hz, sg) - corrected(th, z - hz, sg)) / (2.0 * hz) * sg;
            let lhs = b.value(0, &tree.from_model(th, z, sg).unwrap()) * cis(-two_pi * xi * s * z);
            assert!((fd - lhs).norm() < 1e-6 * (1.0 + lhs.norm()), "{fd} {lhs}");
        }
        let id = embed(&f, &g, &[phi], Some(GammaMap::identity())).unwrap();
        let bi = field_boost(&id, xi, BoostKind::Zeta).unwrap();
        assert_eq!(bi.column(0, 0.6, 0.8, &g.ys()), b.column(0, 0.6, 0.8, &g.ys()));
    }

    fn defect_sup(f: &EmbeddedField<f64>, xi: f64, kind: BoostKind) -> f64 {
        let d = defect_field(f, xi, kind).unwrap();
        let g = &f.grid;
        let ys: Vec<f64> = (0..33).map(|j| -1.0 + j as f64 / 16.0).collect();
        let mut m: f64 = 0.0;
        for &t in &[0.3, 0.6, 1.2] {
            for &th in &[-0.02, 0.0, 0.015] {
                let eta = xi + th / t;
                m = m.max(d.column(0, eta, t, &ys).values.iter().map(|v| v.norm()).fold(0.0, f64::max));
            }
        }
        let _ = g;
        m
    }

    #[test]
    fn embedded_fields_have_vanishing_defect() {
        let f = signal(7);
        let phi = mother();
        let xi = 0.4;
        for kind in [BoostKind::Zeta, BoostKind::Sigma] {
            let e1 = embed(&f, &grid(0.25), &[phi.clone()], None).unwrap();
            let e2 = embed(&f, &grid(0.125), &[phi.clone()], None).unwrap();
            let (d1, d2) = (defect_sup(&e1, xi, kind), defect_sup(&e2, xi, kind));
            assert!(d1 < 0.25 * 10.0, "{kind:?} {d1}");
            assert!(d1 / d2 >= 2.0, "{kind:?} rate {d1} {d2}");
        }
        // pullbacks and products: the constant grows with |θ_Γ|/r, here θ_Γ ≈ ±1
        let beta = 0.5;
        let g2 = GammaMap::gamma2(beta).unwrap();
        let g3 = GammaMap::gamma3(beta).unwrap();
        let amp = 1.0 + 1.0 / phi.radius;
        let mut prev: Option<Vec<f64>> = None;
        for h in [0.125, 0.0625] {
            let gr = grid(h);
            let a = embed(&f, &gr, &[phi.clone()], Some(g2)).unwrap();
            let b = embed(&signal(8), &gr, &[phi.clone()], Some(g3)).unwrap();
            let p = product_field(&a, &b).unwrap();
            let mut cur = Vec::new();
            for kind in [BoostKind::Zeta, BoostKind::Sigma] {
                let (da, dp) = (defect_sup(&a, xi, kind), defect_sup(&p, xi, kind));
                assert!(da < 10.0 * h * amp && dp < 40.0 * h * amp, "{kind:?} {da} {dp}");
                cur.extend([da, dp]);
            }
            if let Some(pr) = &prev {
                for (x, y) in pr.iter().zip(&cur) {
                    assert!(x / y >= 2.0, "rate {x} {y}");
                }
            }
            prev = Some(cur);
        }
    }

    #[test]
    fn split_halves_sum_to_the_field() {
        let g = grid(0.25);
        let phi = mother();
        let omega = make_omega(phi.radius).unwrap();
        let gam = GammaMap::gamma2(0.5).unwrap();
        let f = embed(&signal(3), &g, &[phi.clone()], Some(gam)).unwrap();
        let xi = 0.25;
        let o = field_split(&f, xi, Star::O, &omega).unwrap();
        let l = field_split(&f, xi, Star::L, &omega).unwrap();
        let ys = g.ys();
        let mut seen_o = 0.0f64;
        for (eta, t) in [(0.3, 0.4), (-0.6, 1.1), (0.9, 2.0)] {
            let (a, b, c) = (f.column(0, eta, t, &ys), o.column(0, eta, t, &ys), l.column(0, eta, t, &ys));
            for k in 0..ys.len() {
                assert!((a.values[k] - b.values[k] - c.values[k]).norm() < 1e-12);
                seen_o = seen_o.max(b.values[k].norm());
            }
            // the o-half carries the constant φ̂(θ_Γ)
            let (ep, tp) = gam.apply_et(eta, t);
            if phi.fourier(tp * (ep - gam.alpha * xi)).norm() == 0.0 {
                assert!(b.values.iter().all(|v| v.norm() == 0.0));
            }
        }
        assert!(field_split(&o, xi, Star::O, &omega).is_err());
        assert!(field_boost(&o, xi, BoostKind::Zeta).is_err());
    }

    #[test]
    fn products() {
        let g = grid(0.25);
        let phi = mother();
        let a = embed(&signal(1), &g, &[phi.clone()], None).unwrap();
        let z = embed(&SampledSignal::zeros(256, 1.0 / 16.0, -8.0).unwrap(), &g, &[phi.clone()], None).unwrap();
        let ys = g.ys();
        let p0 = product_field(&a, &z).unwrap();
        assert!(p0.column(0, 0.5, 0.5, &ys).values.iter().all(|v| v.norm() == 0.0));
        let b = embed(&signal(2), &g, &[phi.clone(), make_mother_packet(1.0 / 32.0, 0.25).unwrap()], None).unwrap();
        let p = product_field(&a, &b).unwrap();
        assert_eq!(p.n_layers(), 2);
        for l in 0..2 {
            let (u, v, w) = (a.column(0, 0.5, 0.7, &ys), b.column(l, 0.5, 0.7, &ys), p.column(l, 0.5, 0.7, &ys));
            for k in 0..ys.len() {
                assert!((w.values[k].norm() - u.values[k].norm() * v.values[k].norm()).abs() < 1e-12);
            }
        }
        let other = Grid3 { n_y: g.n_y + 1, ..g };
        let c = embed(&signal(1), &other, &[phi], None).unwrap();
        assert!(product_field(&a, &c).is_err());
    }

    #[test]
    fn cutoff_defect_concentrates_on_the_boundary() {
        let f = signal(3);
        let phi = mother();
        let g = grid(0.125);
        let strip = Region::strip(Strip::new(0.0, 0.8, 0.5).unwrap());
        let b = boundary_of(&strip, &g.plane()).unwrap();
        let e = embed(&f, &g, &[phi], None).unwrap().with_mask(Mask::Below(b.clone()));
        let d = defect_field(&e, 0.4, BoostKind::Zeta).unwrap();
        assert_eq!(d.singular.len(), 1);
        let ys: Vec<f64> = (0..65).map(|j| -2.0 + j as f64 / 16.0).collect();
        for &t in &[0.3, 0.6, 1.2] {
            let col = d.column(0, 0.4, t, &ys);
            for (k, &y) in ys.iter().enumerate() {
                let bb = b.eval(0.4, y);
                let collar = (t / bb - 1.0).abs() < 2.0 * g.ln_rho() || (bb - t).abs() < 2.0 * g.dy;
                if !collar {
                    assert!(col.values[k].norm() < 0.125 * 10.0);
                }
            }
        }
        let (w, bb) = d.singular[0].weight(0, 0.4, 0.5);
        assert!((bb - 0.6).abs() < 1e-12);
        // ∂_y b = −2 on the right flank of the strip, and β_Γ = 1
        let g0 = e.value(0, &Point::new(0.4, 0.5, 0.6 * (1.0 - 1e-12)));
        assert!((w - g0 * 2.0).norm() < 1e-6 * (1.0 + g0.norm()));
    }

    #[test]
    fn dump_round_trip() {
        let g = Grid3::new(0.0, 0.01, 3, 0.0, 0.25, 4, 0.5, 2.0, 2).unwrap();
        let e = embed(&signal(1), &g, &[mother()], None).unwrap();
        let mut buf = Vec::new();
        e.write(&mut buf).unwrap();
        let back = EmbeddedField::<f64>::read(buf.as_slice()).unwrap();
        let (u, v) = (e.materialize(0), back.materialize(0));
        for (a, b) in u.iter().zip(&v) {
            assert!((a - b).norm() < 1e-15 * (1.0 + a.norm()));
        }
        assert_eq!(back.column(0, g.eta(1), g.t(1), &[g.y(2)]).edges, 0);
        assert_eq!(back.column(0, 5.0, g.t(1), &[g.y(2)]).edges, 1);
    }
}
