//! Local sizes of fields on trees.
//!
//! Every size is evaluated in the model coordinates `(θ, ζ, σ)` of the tree, with the
//! measure `dθ dζ dσ/σ / |Θ|`:
//!
//! - `θ` at `n_theta` midpoints of `Θ`, kept only inside the restriction band if one is set;
//! - `ζ` at the field's y-nodes inside `B_s(x)`, weight `dy/s`;
//! - `σ` at the field's t-nodes below `s(1 − |ζ|)`, weight `ln ρ`.
//!
//! The sup over the packet class is the max over the field's layers. Nothing is
//! extrapolated below the smallest grid scale, except that a sourced field with a nonzero
//! limit as `σ → 0` is reported as `∞` for inner exponents `v < ∞`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::embedding::{
    defect_field, embed, field_boost, field_split, make_omega, product_field, EmbeddedField, GammaMap, Star,
};
use crate::error::{param, Error, Result};
use crate::geometry::{pullback_root, Band, Tree};
use crate::signal::SampledSignal;
use crate::wavepacket::{BoostKind, WavePacket};
use crate::{lit, to_f64, Cplx, Real};

/// `θ`-nodes for fields without a packet family when `n_theta = 0`.
pub const DEFAULT_N_THETA: usize = 64;
/// `θ`-nodes per packet radius when `n_theta = 0`.
pub const THETA_NODES_PER_RADIUS: f64 = 8.0;
/// A `σ → 0` limit below this fraction of the sheet's sup counts as zero.
const LIMIT_TOL: f64 = 1e-8;

/// An exponent or value in `[0, ∞]`; serialised as a number or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Ext(pub f64);

impl Ext {
    pub const INF: Ext = Ext(f64::INFINITY);

    pub fn is_inf(self) -> bool {
        self.0.is_infinite()
    }

    pub fn get<T: Real>(self) -> T {
        if self.is_inf() {
            T::infinity()
        } else {
            lit(self.0)
        }
    }

    pub fn from_real<T: Real>(x: T) -> Self {
        Ext(to_f64(x))
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inf() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Ext {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_inf() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Ext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(Ext(x)),
            Repr::Str(s) if s == "inf" || s == "∞" => Ok(Ext::INF),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeKind {
    Lebesgue,
    Lacunary,
    DefectZeta,
    DefectSigma,
    /// Sum of the ζ and σ defect sizes.
    Defect,
    Sio,
    Integral,
    CompositeNonuniform,
    CompositeUniformLinear,
    CompositeUniformBilinear,
}

/// Selects a size functional. `Θ` is the band of the tree the size is evaluated on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSpec<T> {
    pub kind: SizeKind,
    pub u: Ext,
    pub v: Ext,
    /// `Θ^in` or `Θ^ex`, a sub-interval of `Θ`.
    #[serde(default)]
    pub restrict: Option<Band<T>>,
    /// Supplies `β` (and `γ` for `Θ^in`) of the uniform composite sizes.
    #[serde(default)]
    pub gamma: Option<GammaMap<T>>,
    /// Midpoints across `Θ`; `0` picks [`THETA_NODES_PER_RADIUS`] per packet radius.
    #[serde(default)]
    pub n_theta: usize,
}

impl<T: Real> SizeSpec<T> {
    pub fn new(kind: SizeKind, u: f64, v: f64) -> Self {
        SizeSpec { kind, u: Ext(u), v: Ext(v), restrict: None, gamma: None, n_theta: 0 }
    }

    pub fn lebesgue(u: f64, v: f64) -> Self {
        Self::new(SizeKind::Lebesgue, u, v)
    }

    pub fn with_restrict(mut self, b: Band<T>) -> Self {
        self.restrict = Some(b);
        self
    }

    pub fn with_gamma(mut self, g: GammaMap<T>) -> Self {
        self.gamma = Some(g);
        self
    }

    pub fn with_n_theta(mut self, n: usize) -> Self {
        self.n_theta = n;
        self
    }

    fn with_exponents(&self, u: Ext, v: Ext) -> Self {
        SizeSpec { u, v, ..*self }
    }

    fn unrestricted(&self) -> Self {
        SizeSpec { restrict: None, ..*self }
    }

    fn validate(&self, tree: &Tree<T>) -> Result<()> {
        for (name, e) in [("u", self.u), ("v", self.v)] {
            if !(e.0 >= 1.0) {
                return param(format!("exponent {name} = {e} must be at least 1"));
            }
        }
        if let Some(r) = self.restrict {
            if !r.is_subset_of(&tree.band) {
                return param("restriction band must lie inside the tree band");
            }
        }
        Ok(())
    }
}

/// A size value with the number of clamped field evaluations and its constituents.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeValue<T> {
    pub value: T,
    pub edges: usize,
    pub breakdown: Vec<(String, T)>,
}

impl<T: Real> SizeValue<T> {
    fn single(value: T, edges: usize) -> Self {
        SizeValue { value, edges, breakdown: Vec::new() }
    }

    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }

    pub fn constituent(&self, name: &str) -> Option<T> {
        self.breakdown.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

/// Quadrature nodes of the model tree.
struct Model<T> {
    thetas: Vec<T>,
    w_theta: T,
    ys: Vec<T>,
    zetas: Vec<T>,
    d_zeta: T,
    ts: Vec<T>,
    /// Per `ζ`, the number of `σ`-nodes below `1 − |ζ|`.
    inside: Vec<usize>,
    ln_rho: T,
}

impl<T: Real> Model<T> {
    fn new(f: &EmbeddedField<T>, tree: &Tree<T>, spec: &SizeSpec<T>) -> Result<Self> {
        let g = &f.grid;
        let tol = g.dy * lit(1e-9);
        let y_last = g.y(g.n_y - 1);
        if tree.x - tree.s < g.y0 - tol || tree.x + tree.s > y_last + tol {
            return Err(Error::Resolution("tree leaves the spatial window of the grid".into()));
        }
        let mut ys = Vec::new();
        for j in 0..g.n_y {
            let y = g.y(j);
            if (y - tree.x).abs() < tree.s {
                ys.push(y);
            }
        }
        let ts: Vec<T> = (0..g.n_t).map(|k| g.t(k)).take_while(|&t| t < tree.s).collect();
        if ys.is_empty() || ts.is_empty() {
            return Err(Error::Resolution("tree is not resolved by the grid".into()));
        }
        let zetas: Vec<T> = ys.iter().map(|&y| (y - tree.x) / tree.s).collect();
        let inside = zetas
            .iter()
            .map(|z| {
                let top = tree.s * (T::one() - z.abs());
                ts.iter().take_while(|&&t| t < top).count()
            })
            .collect();
        let band = tree.band;
        let n = match (spec.n_theta, f.packet_radius()) {
            (0, Some(r)) => (to_f64(band.width() / r) * THETA_NODES_PER_RADIUS).ceil().max(1.0) as usize,
            (0, None) => DEFAULT_N_THETA,
            (n, _) => n,
        };
        let dth = band.width() / lit::<T>(n as f64);
        let thetas = (0..n)
            .map(|i| band.lo + dth * (lit::<T>(i as f64) + lit(0.5)))
            .filter(|&th| spec.restrict.map_or(true, |r| r.contains(th)))
            .collect();
        Ok(Model {
            thetas,
            w_theta: T::one() / lit::<T>(n as f64),
            ys,
            zetas,
            d_zeta: g.dy / tree.s,
            ts,
            inside,
            ln_rho: g.ln_rho(),
        })
    }

    fn depth(&self) -> usize {
        self.inside.iter().copied().max().unwrap_or(0)
    }

    /// Field values at fixed `θ`, indexed `[σ-node][ζ-node]`.
    fn sheet(&self, f: &EmbeddedField<T>, layer: usize, tree: &Tree<T>, theta: T) -> (Vec<Vec<Cplx<T>>>, usize) {
        let mut edges = 0;
        let rows = self.ts[..self.depth()]
            .iter()
            .map(|&t| {
                let c = f.column(layer, tree.xi + theta / t, t, &self.ys);
                edges += c.edges;
                c.values
            })
            .collect();
        (rows, edges)
    }

    fn outer(&self, inner: &[Vec<T>], u: Ext) -> T {
        let mut acc = T::zero();
        for row in inner {
            for &x in row {
                if u.is_inf() {
                    acc = acc.max(x);
                } else {
                    acc += x.powf(u.get()) * self.w_theta * self.d_zeta;
                }
            }
        }
        if u.is_inf() {
            acc
        } else {
            acc.powf(T::one() / u.get())
        }
    }
}

fn inner_norm<T: Real>(vals: impl Iterator<Item = T>, v: Ext, w: T) -> T {
    if v.is_inf() {
        return vals.fold(T::zero(), T::max);
    }
    let p = v.get::<T>();
    vals.fold(T::zero(), |acc, x| acc + x.powf(p) * w).powf(T::one() / p)
}

/// Contribution of the singular layers to the inner `L^v_{dσ/σ}` norm at `(θ, ζ)`:
/// `Σ |g|/J` at the graph crossing for `v = 1`, `∞` for `v ∈ {2, ∞}` if some `g ≠ 0`.
fn singular_inner<T: Real>(f: &EmbeddedField<T>, layer: usize, tree: &Tree<T>, theta: T, zeta: T, y: T, v: Ext) -> Result<T> {
    let mut acc = T::zero();
    for sl in &f.singular {
        let sigma = pullback_root(tree, &sl.boundary, theta, zeta)?;
        if !(sigma > T::zero() && sigma < T::one() - zeta.abs()) {
            continue;
        }
        let t = tree.s * sigma;
        let eta = tree.xi + theta / t;
        let (g, _) = sl.weight(layer, eta, y);
        if g.norm() == T::zero() {
            continue;
        }
        if v.0 != 1.0 {
            return Ok(T::infinity());
        }
        acc += g.norm() / sl.jacobian(tree.xi, eta, y);
    }
    Ok(acc)
}

/// `SL^{(u,v)}_Θ`, optionally restricted to `θ ∈ Θ_restrict`.
///
/// The breakdown lists the sizes of the smooth part and of the singular layers alone.
pub fn lebesgue_size<T: Real>(f: &EmbeddedField<T>, tree: &Tree<T>, spec: &SizeSpec<T>) -> Result<SizeValue<T>> {
    spec.validate(tree)?;
    let (u, v) = (spec.u, spec.v);
    if !f.singular.is_empty() && !(v.0 == 1.0 || v.0 == 2.0 || v.is_inf()) {
        return Err(Error::Unsupported(format!("singular layers with inner exponent {v}")));
    }
    let m = Model::new(f, tree, spec)?;
    let divergence_rule = f.has_source() && !v.is_inf();
    let mut best: Option<SizeValue<T>> = None;
    let mut edges = 0;
    for layer in 0..f.n_layers() {
        let rows = m
            .thetas
            .par_iter()
            .map(|&th| -> Result<(Vec<(T, T)>, usize)> {
                let (vals, e) = m.sheet(f, layer, tree, th);
                let limit = if divergence_rule { f.bottom_limit(layer, tree.xi, th, &m.ys) } else { None };
                let scale = vals.iter().flatten().map(|z| z.norm()).fold(T::zero(), T::max);
                let mut out = Vec::with_capacity(m.zetas.len());
                for j in 0..m.zetas.len() {
                    let n = m.inside[j];
                    let mut smooth = inner_norm(vals[..n].iter().map(|row| row[j].norm()), v, m.ln_rho);
                    if let Some(l) = &limit {
                        if l[j].norm() > lit::<T>(LIMIT_TOL) * scale {
                            smooth = T::infinity();
                        }
                    }
                    let sing = singular_inner(f, layer, tree, th, m.zetas[j], m.ys[j], v)?;
                    out.push((smooth, sing));
                }
                Ok((out, e))
            })
            .collect::<Result<Vec<_>>>()?;
        let combine = |s: T, g: T| {
            if g == T::zero() {
                s
            } else if v.0 == 1.0 {
                s + g
            } else {
                T::infinity()
            }
        };
        let pick = |k: usize| -> Vec<Vec<T>> {
            rows.iter()
                .map(|(r, _)| r.iter().map(|&(s, g)| [s, g, combine(s, g)][k]).collect())
                .collect()
        };
        edges += rows.iter().map(|(_, e)| e).sum::<usize>();
        let value = m.outer(&pick(2), u);
        let mut breakdown = Vec::new();
        if !f.singular.is_empty() {
            breakdown.push(("smooth".to_string(), m.outer(&pick(0), u)));
            breakdown.push(("singular".to_string(), m.outer(&pick(1), u)));
        }
        if best.as_ref().map_or(true, |b| value > b.value || value.is_nan()) {
            best = Some(SizeValue { value, edges: 0, breakdown });
        }
    }
    let mut out = best.expect("fields have at least one layer");
    out.edges = edges;
    Ok(out)
}

/// `SL^{(u,v)}` of `D_ζ(t(η − ξ_T))F`, taken through `Γ` when `F = E[f]∘Γ`.
pub fn lacunary_size<T: Real>(f: &EmbeddedField<T>, tree: &Tree<T>, spec: &SizeSpec<T>) -> Result<SizeValue<T>> {
    lebesgue_size(&field_boost(f, tree.xi, BoostKind::Zeta)?, tree, spec)
}

/// `SL^{(u,v)}` of the ζ- or σ-defect of `F` relative to `T`.
pub fn defect_size<T: Real>(f: &EmbeddedField<T>, tree: &Tree<T>, spec: &SizeSpec<T>, kind: BoostKind) -> Result<SizeValue<T>> {
    lebesgue_size(&defect_field(f, tree.xi, kind)?, tree, spec)
}

/// Sum of the ζ- and σ-defect sizes.
pub fn total_defect_size<T: Real>(f: &EmbeddedField<T>, tree: &Tree<T>, spec: &SizeSpec<T>) -> Result<SizeValue<T>> {
    let z = defect_size(f, tree, spec, BoostKind::Zeta)?;
    let s = defect_size(f, tree, spec, BoostKind::Sigma)?;
    Ok(SizeValue {
        value: z.value + s.value,
        edges: z.edges + s.edges,
        breakdown: vec![("defect_zeta".into(), z.value), ("defect_sigma".into(), s.value)],
    })
}

/// `L^u_{dθdζ/|Θ|}` of `sup_m |Σ_{σ_k ≥ σ_m} G(θ, ζ, σ_k) ln ρ|`, the maximal truncation of
/// the `dσ/σ` integral from the top of the tree.
pub fn truncation_size<T: Real>(g: &EmbeddedField<T>, tree: &Tree<T>, spec: &SizeSpec<T>) -> Result<SizeValue<T>> {
    spec.validate(tree)?;
    if !g.singular.is_empty() {
        return Err(Error::Unsupported("truncated integrals of singular fields".into()));
    }
    let m = Model::new(g, tree, spec)?;
    let mut value = T::zero();
    let mut edges = 0;
    for layer in 0..g.n_layers() {
        let rows: Vec<(Vec<T>, usize)> = m
            .thetas
            .par_iter()
            .map(|&th| {
                let (vals, e) = m.sheet(g, layer, tree, th);
                let inner = (0..m.zetas.len())
                    .map(|j| {
                        let mut acc = Cplx::new(T::zero(), T::zero());
                        let mut best = T::zero();
                        for k in (0..m.inside[j]).rev() {
                            acc += vals[k][j] * m.ln_rho;
                            best = best.max(acc.norm());
                        }
                        best
                    })
                    .collect();
                (inner, e)
            })
            .collect();
        edges += rows.iter().map(|(_, e)| e).sum::<usize>();
        let inner: Vec<Vec<T>> = rows.into_iter().map(|(r, _)| r).collect();
        value = value.max(m.outer(&inner, spec.u));
    }
    Ok(SizeValue::single(value, edges))
}

/// `SJ^u`: maximal truncations of `D_ζ F`.
pub fn sio_size<T: Real>(f: &EmbeddedField<T>, tree: &Tree<T>, spec: &SizeSpec<T>) -> Result<SizeValue<T>> {
    truncation_size(&field_boost(f, tree.xi, BoostKind::Zeta)?, tree, spec)
}

/// `SI` of a (product) field, with the lower `σ`-truncation at the smallest grid scale `ε`
/// and at `2ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegralValue<T> {
    pub value: T,
    pub value_2eps: T,
    /// The pattern is `(o,o,l)` or `(o,l,o)`, which vanishes on the trilinear form.
    pub vanishing_pattern: bool,
    /// `|value − value_2eps| ≤ 10% · value`.
    pub stable: bool,
    pub edges: usize,
}

pub fn integral_size<T: Real>(h: &EmbeddedField<T>, tree: &Tree<T>, pattern: [Star; 3], spec: &SizeSpec<T>) -> Result<IntegralValue<T>> {
    spec.validate(tree)?;
    if !h.singular.is_empty() {
        return Err(Error::Unsupported("integral sizes of singular fields".into()));
    }
    let m = Model::new(h, tree, spec)?;
    let eps2 = h.grid.t0 * lit(2.0) * (T::one() - lit(1e-9));
    let (mut value, mut value_2eps, mut edges) = (T::zero(), T::zero(), 0);
    for layer in 0..h.n_layers() {
        let rows: Vec<(T, T, usize)> = m
            .thetas
            .par_iter()
            .map(|&th| {
                let (vals, e) = m.sheet(h, layer, tree, th);
                let (mut all, mut upper) = (Cplx::new(T::zero(), T::zero()), Cplx::new(T::zero(), T::zero()));
                for j in 0..m.zetas.len() {
                    for k in 0..m.inside[j] {
                        let w = vals[k][j] * (m.ln_rho * m.d_zeta);
                        all += w;
                        if m.ts[k] >= eps2 {
                            upper += w;
                        }
                    }
                }
                (all.norm() * m.w_theta, upper.norm() * m.w_theta, e)
            })
            .collect();
        value = value.max(rows.iter().fold(T::zero(), |a, r| a + r.0));
        value_2eps = value_2eps.max(rows.iter().fold(T::zero(), |a, r| a + r.1));
        edges += rows.iter().map(|r| r.2).sum::<usize>();
    }
    let vanishing_pattern = matches!(pattern, [Star::O, Star::O, Star::L] | [Star::O, Star::L, Star::O]);
    let stable = (value - value_2eps).abs() <= lit::<T>(0.1) * value;
    Ok(IntegralValue { value, value_2eps, vanishing_pattern, stable, edges })
}

/// `max_layer |∫_T H dη dy dt|` on the quadrature of the integral sizes, so that
/// `|∫_T H| ≤ s_T |Θ| SI(H)(T)` holds exactly.
pub fn tree_integral<T: Real>(h: &EmbeddedField<T>, tree: &Tree<T>, spec: &SizeSpec<T>) -> Result<T> {
    spec.validate(tree)?;
    if !h.singular.is_empty() {
        return Err(Error::Unsupported("integrals of singular fields".into()));
    }
    let m = Model::new(h, tree, spec)?;
    let mut best = T::zero();
    for layer in 0..h.n_layers() {
        let total = m
            .thetas
            .par_iter()
            .map(|&th| {
                let (vals, _) = m.sheet(h, layer, tree, th);
                let mut acc = Cplx::new(T::zero(), T::zero());
                for j in 0..m.zetas.len() {
                    for k in 0..m.inside[j] {
                        acc += vals[k][j] * (m.ln_rho * m.d_zeta);
                    }
                }
                acc * m.w_theta
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(Cplx::new(T::zero(), T::zero()), |a, b| a + b);
        best = best.max(total.norm() * tree.s * tree.band.width());
    }
    Ok(best)
}

/// `E[f₁]·E[f₂]∘Γ₂·E[f₃]∘Γ₃` with each factor split into its `pattern` half relative to `ξ_T`.
pub fn bht_triple<T: Real>(
    f: [&SampledSignal<T>; 3],
    grid: &crate::embedding::Grid3<T>,
    packets: &[WavePacket<T>],
    beta: T,
    xi_t: T,
    pattern: [Star; 3],
) -> Result<EmbeddedField<T>> {
    let gammas = [GammaMap::identity(), GammaMap::gamma2(beta)?, GammaMap::gamma3(beta)?];
    let r = packets.iter().map(|p| p.radius).fold(T::zero(), T::max);
    let omega = make_omega(r)?;
    let mut parts = Vec::with_capacity(3);
    for j in 0..3 {
        let e = embed(f[j], grid, packets, Some(gammas[j]))?;
        parts.push(field_split(&e, xi_t, pattern[j], &omega)?);
    }
    product_field(&product_field(&parts[0], &parts[1])?, &parts[2])
}

/// Tensor variants of a product `H = F₂·F₃`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductVariant {
    PhiPhi,
    PhiD,
    DPhi,
    DD,
    DefectZeta,
    DefectSigma,
}

/// The product `a·b` carrying the cutoffs and scale of `h`.
fn rebuild<T: Real>(h: &EmbeddedField<T>, a: &EmbeddedField<T>, b: &EmbeddedField<T>) -> Result<EmbeddedField<T>> {
    let mut p = product_field(a, b)?;
    p.masks = h.masks.clone();
    p.factor = h.factor;
    Ok(p)
}

/// The two-argument field of `variant`, relative to `ξ_T`.
pub fn product_variant<T: Real>(h: &EmbeddedField<T>, xi_t: T, variant: ProductVariant) -> Result<EmbeddedField<T>> {
    let (f2, f3) = h.factors().ok_or_else(|| Error::Shape("product sizes need a two-argument field".into()))?;
    let d = |f: &EmbeddedField<T>| field_boost(f, xi_t, BoostKind::Zeta);
    match variant {
        ProductVariant::PhiPhi => Ok(h.clone()),
        ProductVariant::PhiD => rebuild(h, f2, &d(f3)?),
        ProductVariant::DPhi => rebuild(h, &d(f2)?, f3),
        ProductVariant::DD => rebuild(h, &d(f2)?, &d(f3)?),
        ProductVariant::DefectZeta => defect_field(h, xi_t, BoostKind::Zeta),
        ProductVariant::DefectSigma => defect_field(h, xi_t, BoostKind::Sigma),
    }
}

/// `SL^{(u,v)}` of the tensor variant of `H`; the sup runs over packet pairs.
pub fn product_size<T: Real>(h: &EmbeddedField<T>, tree: &Tree<T>, variant: ProductVariant, spec: &SizeSpec<T>) -> Result<SizeValue<T>> {
    lebesgue_size(&product_variant(h, tree.xi, variant)?, tree, spec)
}

fn arity<T: Real>(f: &EmbeddedField<T>, product: bool) -> Result<()> {
    if f.is_product() != product {
        let want = if product { "a two-argument" } else { "a one-argument" };
        return Err(Error::Shape(format!("size needs {want} field")));
    }
    Ok(())
}

fn composite<T: Real>(parts: Vec<(String, T, SizeValue<T>)>) -> SizeValue<T> {
    let mut value = T::zero();
    let mut edges = 0;
    let mut breakdown = Vec::new();
    for (name, w, s) in parts {
        value += w * s.value;
        edges += s.edges;
        breakdown.push((name, w * s.value));
    }
    SizeValue { value, edges, breakdown }
}

/// `SF^u_Θ = SL^{(∞,∞)} + SL^{(u,2)}D_ζ + SL^{(u,1)}(defect_ζ + defect_σ) + SJ^u`.
pub fn composite_nonuniform<T: Real>(f: &EmbeddedField<T>, tree: &Tree<T>, spec: &SizeSpec<T>) -> Result<SizeValue<T>> {
    arity(f, false)?;
    let u = spec.u;
    let parts = vec![
        ("lebesgue_inf_inf".into(), T::one(), lebesgue_size(f, tree, &spec.with_exponents(Ext::INF, Ext::INF))?),
        ("lacunary_u_2".into(), T::one(), lacunary_size(f, tree, &spec.with_exponents(u, Ext(2.0)))?),
        ("defect_zeta_u_1".into(), T::one(), defect_size(f, tree, &spec.with_exponents(u, Ext(1.0)), BoostKind::Zeta)?),
        ("defect_sigma_u_1".into(), T::one(), defect_size(f, tree, &spec.with_exponents(u, Ext(1.0)), BoostKind::Sigma)?),
        ("sio_u".into(), T::one(), sio_size(f, tree, spec)?),
    ];
    Ok(composite(parts))
}

/// Checks `B_{2⁻⁵}(−γ) ⊊ Θ^in ⊊ B_{2⁻³}(−γ)` and returns `(β, Θ^in)`.
fn uniform_params<T: Real>(spec: &SizeSpec<T>) -> Result<(T, Band<T>)> {
    let g = spec.gamma.ok_or_else(|| Error::Parameter("uniform sizes need a Γ for β".into()))?;
    let inner = spec.restrict.ok_or_else(|| Error::Parameter("uniform sizes need Θ^in".into()))?;
    let c = -g.gamma;
    let (small, large) = (Band::symmetric(lit::<T>(1.0 / 32.0)), Band::symmetric(lit::<T>(0.125)));
    let shift = |b: Band<T>| Band { lo: b.lo + c, hi: b.hi + c };
    let (small, large) = (shift(small), shift(large));
    let proper = |a: &Band<T>, b: &Band<T>| a.is_subset_of(b) && a != b;
    if !(proper(&small, &inner) && proper(&inner, &large)) {
        return param("Θ^in must satisfy B_{1/32}(−γ) ⊊ Θ^in ⊊ B_{1/8}(−γ)");
    }
    Ok((g.beta, inner))
}

/// `S̃F^u_Γ = β^{1/u}SL^{(u,∞)} + SL^{(u,2)}D_ζ + SL^{(u,1)}_{(Θ,Θ^in)}(defect_ζ + defect_σ)`.
pub fn composite_uniform_linear<T: Real>(f: &EmbeddedField<T>, tree: &Tree<T>, spec: &SizeSpec<T>) -> Result<SizeValue<T>> {
    arity(f, false)?;
    let (beta, inner) = uniform_params(spec)?;
    let u = spec.u;
    let full = spec.unrestricted();
    let pre = if u.is_inf() { T::one() } else { beta.powf(T::one() / u.get()) };
    let rs = full.with_restrict(inner).with_exponents(u, Ext(1.0));
    let parts = vec![
        ("lebesgue_u_inf".into(), pre, lebesgue_size(f, tree, &full.with_exponents(u, Ext::INF))?),
        ("lacunary_u_2".into(), T::one(), lacunary_size(f, tree, &full.with_exponents(u, Ext(2.0)))?),
        ("defect_zeta_u_1_in".into(), T::one(), defect_size(f, tree, &rs, BoostKind::Zeta)?),
        ("defect_sigma_u_1_in".into(), T::one(), defect_size(f, tree, &rs, BoostKind::Sigma)?),
    ];
    Ok(composite(parts))
}

/// `S̃F^u_{Γ×} = β^{1/u}(SL^{(u,∞)}_{in}ΦΦ + SL^{(u,2)}_{in}ΦD + SL^{(u,2)}_{in}DΦ)
/// + SL^{(u,1)}_Θ DD + SL^{(u,1)}_{in}(defect_ζ + defect_σ)`.
pub fn composite_uniform_bilinear<T: Real>(h: &EmbeddedField<T>, tree: &Tree<T>, spec: &SizeSpec<T>) -> Result<SizeValue<T>> {
    arity(h, true)?;
    let (beta, inner) = uniform_params(spec)?;
    let u = spec.u;
    let full = spec.unrestricted();
    let pre = if u.is_inf() { T::one() } else { beta.powf(T::one() / u.get()) };
    let rin = full.with_restrict(inner);
    let parts = vec![
        ("phi_phi_u_inf_in".into(), pre, product_size(h, tree, ProductVariant::PhiPhi, &rin.with_exponents(u, Ext::INF))?),
        ("phi_d_u_2_in".into(), pre, product_size(h, tree, ProductVariant::PhiD, &rin.with_exponents(u, Ext(2.0)))?),
        ("d_phi_u_2_in".into(), pre, product_size(h, tree, ProductVariant::DPhi, &rin.with_exponents(u, Ext(2.0)))?),
        ("d_d_u_1".into(), T::one(), product_size(h, tree, ProductVariant::DD, &full.with_exponents(u, Ext(1.0)))?),
        ("defect_zeta_u_1_in".into(), T::one(), product_size(h, tree, ProductVariant::DefectZeta, &rin.with_exponents(u, Ext(1.0)))?),
        ("defect_sigma_u_1_in".into(), T::one(), product_size(h, tree, ProductVariant::DefectSigma, &rin.with_exponents(u, Ext(1.0)))?),
    ];
    Ok(composite(parts))
}

/// Evaluates the size selected by `spec.kind`. Integral sizes go through [`integral_size`].
pub fn evaluate<T: Real>(f: &EmbeddedField<T>, tree: &Tree<T>, spec: &SizeSpec<T>) -> Result<SizeValue<T>> {
    match spec.kind {
        SizeKind::Lebesgue => lebesgue_size(f, tree, spec),
        SizeKind::Lacunary => lacunary_size(f, tree, spec),
        SizeKind::DefectZeta => defect_size(f, tree, spec, BoostKind::Zeta),
        SizeKind::DefectSigma => defect_size(f, tree, spec, BoostKind::Sigma),
        SizeKind::Defect => total_defect_size(f, tree, spec),
        SizeKind::Sio => sio_size(f, tree, spec),
        SizeKind::Integral => {
            let v = integral_size(f, tree, [Star::L; 3], spec)?;
            Ok(SizeValue {
                value: v.value,
                edges: v.edges,
                breakdown: vec![("value_2eps".into(), v.value_2eps)],
            })
        }
        SizeKind::CompositeNonuniform => composite_nonuniform(f, tree, spec),
        SizeKind::CompositeUniformLinear => composite_uniform_linear(f, tree, spec),
        SizeKind::CompositeUniformBilinear => composite_uniform_bilinear(f, tree, spec),
    }
}

/// JSON record of one size evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub tree: Tree<f64>,
    pub size_kind: SizeKind,
    pub exponents: (Ext, Ext),
    pub value: Ext,
    pub edges: usize,
    pub constituent_breakdown: Vec<(String, Ext)>,
}

impl SizeReport {
    pub fn new<T: Real>(tree: &Tree<T>, spec: &SizeSpec<T>, v: &SizeValue<T>) -> Self {
        let f = to_f64::<T>;
        SizeReport {
            tree: Tree { xi: f(tree.xi), x: f(tree.x), s: f(tree.s), band: Band { lo: f(tree.band.lo), hi: f(tree.band.hi) } },
            size_kind: spec.kind,
            exponents: (spec.u, spec.v),
            value: Ext::from_real(v.value),
            edges: v.edges,
            constituent_breakdown: v.breakdown.iter().map(|(n, x)| (n.clone(), Ext::from_real(*x))).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Grid3, Mask};
    use crate::geometry::{boundary_of, PlaneGrid, Point, Region, Strip};
    use crate::signal::cis;
    use crate::wavepacket::make_mother_packet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const R: f64 = 0.25;

    fn signal(seed: u64, terms: i64) -> SampledSignal<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<(f64, Cplx<f64>)> =
            (-terms..=terms).map(|k| (k as f64 / 8.0, Cplx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))).collect();
        SampledSignal::from_fourier_series(256, 1.0 / 16.0, -8.0, &t).unwrap()
    }

    fn phi() -> WavePacket<f64> {
        make_mother_packet(R, 0.5).unwrap()
    }

    /// y ∈ [−2, 2] with step `dy`, t from 2⁻⁶ to 2 with ratio `2^{1/per_octave}`.
    fn grid(dy: f64, per_octave: usize) -> Grid3<f64> {
        let ny = (4.0 / dy).round() as usize + 1;
        Grid3::new(-8.0, 0.002, 8001, -2.0, dy, ny, 1.0 / 64.0, 2f64.powf(1.0 / per_octave as f64), 7 * per_octave + 1).unwrap()
    }

    fn tree(xi: f64, x: f64, s: f64, h: f64) -> Tree<f64> {
        Tree::new(xi, x, s, Band::symmetric(h)).unwrap()
    }

    #[test]
    fn zero_fields_have_zero_sizes() {
        let g = grid(1.0 / 16.0, 4);
        let z = embed(&SampledSignal::zeros(256, 1.0 / 16.0, -8.0).unwrap(), &g, &[phi()], Some(GammaMap::gamma2(0.5).unwrap())).unwrap();
        let t = tree(0.0, 0.0, 1.0, 1.0);
        for spec in [SizeSpec::lebesgue(1.0, 1.0), SizeSpec::lebesgue(2.0, f64::INFINITY), SizeSpec::lebesgue(f64::INFINITY, 2.0)] {
            assert_eq!(lebesgue_size(&z, &t, &spec).unwrap().value, 0.0);
            assert_eq!(lacunary_size(&z, &t, &spec).unwrap().value, 0.0);
            assert_eq!(total_defect_size(&z, &t, &spec).unwrap().value, 0.0);
            assert_eq!(sio_size(&z, &t, &spec).unwrap().value, 0.0);
            assert_eq!(composite_nonuniform(&z, &t, &spec).unwrap().value, 0.0);
        }
        let h = product_field(&z, &z).unwrap();
        for v in [ProductVariant::PhiPhi, ProductVariant::PhiD, ProductVariant::DD, ProductVariant::DefectSigma] {
            assert_eq!(product_size(&h, &t, v, &SizeSpec::lebesgue(1.0, 1.0)).unwrap().value, 0.0);
        }
        let h3 = product_field(&h, &z).unwrap();
        assert_eq!(integral_size(&h3, &t, [Star::L; 3], &SizeSpec::lebesgue(1.0, 1.0)).unwrap().value, 0.0);
    }

    #[test]
    fn constant_profile_diverges_for_finite_inner_exponent() {
        // E[1](θ/t, y, t) = φ̂(θ) does not decay as σ → 0
        let one = SampledSignal::from_fourier_series(256, 1.0 / 16.0, -8.0, &[(0.0, Cplx::new(1.0, 0.0))]).unwrap();
        let g = grid(1.0 / 16.0, 4);
        let e = embed(&one, &g, &[phi()], None).unwrap();
        let t = tree(0.0, 0.0, 1.0, 1.0);
        assert!(lebesgue_size(&e, &t, &SizeSpec::lebesgue(1.0, 1.0)).unwrap().is_infinite());
        assert!(lebesgue_size(&e, &t, &SizeSpec::lebesgue(f64::INFINITY, 2.0)).unwrap().is_infinite());
        let sup = lebesgue_size(&e, &t, &SizeSpec::lebesgue(f64::INFINITY, f64::INFINITY)).unwrap().value;
        assert!((sup - 1.0).abs() < 1e-12, "{sup}");
        // its ζ-boost vanishes identically: ξ_k = ξ_T
        assert!(lacunary_size(&e, &t, &SizeSpec::lebesgue(1.0, 2.0)).unwrap().value < 1e-12);
    }

    #[test]
    fn slab_size_matches_closed_form() {
        // F = c on σ ∈ [1/2, 1): SL^{(1,1)} = c ∫_{−1/2}^{1/2} ln(2(1 − |ζ|)) dζ = c(2 ln 2 − 1)
        let c = 1.7;
        let g = Grid3::new(-260.0, 1.0, 521, -1.0, 1.0 / 512.0, 1025, 1.0 / 64.0, 2f64.powf(1.0 / 64.0), 6 * 64 + 1).unwrap();
        let t = tree(0.0, 0.0, 1.0, 4.0);
        let mut vals = vec![Cplx::new(0.0, 0.0); g.len()];
        for it in 0..g.n_t {
            if g.t(it) >= 0.5 * (1.0 - 1e-12) {
                for ie in 0..g.n_eta {
                    for iy in 0..g.n_y {
                        vals[g.index(ie, iy, it)] = Cplx::new(0.0, c);
                    }
                }
            }
        }
        let f = EmbeddedField::sampled(g, vec![vals]).unwrap();
        let spec = SizeSpec::lebesgue(1.0, 1.0).with_n_theta(16);
        let got = lebesgue_size(&f, &t, &spec).unwrap();
        let exact = c * (2.0 * 2f64.ln() - 1.0);
        assert!((got.value - exact).abs() < g.ln_rho() * c, "{} vs {exact}", got.value);
        assert_eq!(got.edges, 0);
        // the sup is attained and u = ∞ ignores the spatial profile
        let sup = lebesgue_size(&f, &t, &SizeSpec::lebesgue(f64::INFINITY, f64::INFINITY).with_n_theta(16)).unwrap().value;
        assert!((sup - c).abs() < 1e-12);
        // dual pairing with the extremal G = conj(F)/|F| gives the same number
        let mut pairing = 0.0;
        let m = Model::new(&f, &t, &spec).unwrap();
        for &th in &m.thetas {
            let (v, _) = m.sheet(&f, 0, &t, th);
            for j in 0..m.zetas.len() {
                for k in 0..m.inside[j] {
                    let z = v[k][j];
                    if z.norm() > 0.0 {
                        pairing += (z * z.conj() / z.norm()).re * m.ln_rho * m.d_zeta * m.w_theta;
                    }
                }
            }
        }
        assert!((pairing - got.value).abs() < 1e-10 * got.value, "{pairing} vs {}", got.value);
    }

    /// `(1/(|Θ|s)) ∫∫ |g| b 1_T(η, y, b) dη dy` by a midpoint rule in physical coordinates.
    fn trace_integral(t: &Tree<f64>, b: impl Fn(f64, f64) -> f64, g: impl Fn(f64, f64, f64) -> f64, eta: (f64, f64), ne: usize, ny: usize) -> f64 {
        let (y0, y1) = (t.x - t.s, t.x + t.s);
        let (dy, de) = ((y1 - y0) / ny as f64, (eta.1 - eta.0) / ne as f64);
        let mut acc = 0.0;
        for j in 0..ny {
            let y = y0 + (j as f64 + 0.5) * dy;
            for i in 0..ne {
                let e = eta.0 + (i as f64 + 0.5) * de;
                let bv = b(e, y);
                if bv > 0.0 && t.contains(&Point::new(e, y, bv)) {
                    acc += g(e, y, bv) * bv * de * dy;
                }
            }
        }
        acc / (t.band.width() * t.s)
    }

    #[test]
    fn strip_cutoff_defect_matches_trace_integral() {
        let f = signal(5, 4);
        let g = grid(1.0 / 256.0, 8);
        let e = embed(&f, &g, &[phi()], None).unwrap();
        let strip = Strip::new(0.2, 0.6, 1.0).unwrap();
        let plane = PlaneGrid::new(-8.0, 0.05, 321, -2.0, 1.0 / 64.0, 257).unwrap();
        let bf = boundary_of(&Region::strip(strip), &plane).unwrap();
        let cut = e.with_mask(Mask::Below(bf));
        let t = tree(0.1, 0.0, 1.0, 1.0);
        let got = defect_size(&cut, &t, &SizeSpec::lebesgue(1.0, 1.0), BoostKind::Zeta).unwrap();
        // |g| = |β ∂_y b|·|E[f](η, y, b)| = |E[f]| on the graph
        let b = |_: f64, y: f64| (0.6 - (y - 0.2).abs()).max(0.0);
        let oracle = trace_integral(&t, b, |eta, y, bv| e.value(0, &Point::new(eta, y, bv)).norm(), (-200.0, 200.0), 40000, 400);
        let sing = got.constituent("singular").unwrap();
        assert!((sing - oracle).abs() < 1e-2 * oracle, "{sing} vs {oracle}");
        assert!((got.value - oracle).abs() < 1e-2 * oracle, "{} vs {oracle}", got.value);
    }

    #[test]
    fn removed_tree_defect_matches_trace_integral() {
        // the smooth residue of the σ-defect decays like (ln ρ)², so this needs 32 nodes per octave
        let f = signal(6, 4);
        let g = grid(1.0 / 256.0, 32);
        let e = embed(&f, &g, &[phi()], None).unwrap();
        let te = tree(0.4, 0.1, 0.5, 1.0);
        let plane = PlaneGrid::new(-8.0, 0.05, 321, -2.0, 1.0 / 64.0, 257).unwrap();
        let bf = boundary_of(&Region::tree(te), &plane).unwrap();
        let cut = e.with_mask(Mask::AtOrAbove(bf));
        let t = tree(0.1, 0.0, 1.0, 1.0);
        let got = defect_size(&cut, &t, &SizeSpec::lebesgue(1.0, 1.0), BoostKind::Sigma).unwrap();
        // b = min(s_E − |y − x_E|, θ_±/(η − ξ_E)); on the band branch ∂_η b = −b/(η − ξ_E)
        let b = |eta: f64, y: f64| te.boundary(eta, y);
        let slope = |eta: f64, y: f64| {
            let spatial = te.s - (y - te.x).abs();
            let bv = te.boundary(eta, y);
            if bv < spatial { -bv / (eta - te.xi) } else { 0.0 }
        };
        let weight = |eta: f64, y: f64, bv: f64| {
            (1.0 + (eta - t.xi) * slope(eta, y) / bv).abs() * e.value(0, &Point::new(eta, y, bv)).norm()
        };
        let oracle = trace_integral(&t, b, weight, (-60.0, 60.0), 60000, 1600);
        let sing = got.constituent("singular").unwrap();
        assert!(oracle > 1e-3);
        assert!((sing - oracle).abs() < 1e-2 * oracle, "{sing} vs {oracle}");
        assert!((got.value - oracle).abs() < 1e-2 * oracle, "{} vs {oracle}", got.value);
    }

    #[test]
    fn lacunary_square_function_matches_spatial_convolution() {
        // at θ = 0 the lacunary field is f ∗ Dil_t Mod_{ξ_T}(−φ')^∨-type convolutions: compare
        // (Σ_{ζ,σ} |·|² ln ρ dζ)^{1/2} against spatial quadrature with ψ = −d_z φ by differences
        let f = signal(8, 6);
        let g = Grid3::new(-8.0, 0.01, 1601, -2.0, 1.0 / 16.0, 65, 1.0 / 16.0, 2f64.powf(0.25), 17).unwrap();
        let p = phi();
        let e = embed(&f, &g, &[p.clone()], None).unwrap();
        let t = tree(0.3, 0.0, 1.0, 1e-3);
        let got = lacunary_size(&e, &t, &SizeSpec::lebesgue(2.0, 2.0).with_n_theta(1)).unwrap().value;
        let dx = f.dx;
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut acc = 0.0;
        for it in 0..g.n_t {
            let tt = g.t(it);
            let m = (30.0 * tt / R / dx) as i64;
            let nodes = p.spatial_nodes(30.0 / R);
            let hd = 1e-4;
            let psi: Vec<Cplx<f64>> = (-m..=m)
                .map(|j| {
                    let z = j as f64 * dx / tt;
                    -(p.spatial(z + hd, nodes) - p.spatial(z - hd, nodes)) / (2.0 * hd) / tt
                })
                .collect();
            for iy in 0..g.n_y {
                let y = g.y(iy);
                let zeta = (y - t.x) / t.s;
                if zeta.abs() >= 1.0 || tt >= t.s * (1.0 - zeta.abs()) {
                    continue;
                }
                let j0 = ((y - f.x0) / dx).round() as i64;
                let mut v = Cplx::new(0.0, 0.0);
                for j in -m..=m {
                    let z = j as f64 * dx;
                    v += f.samples[(j0 + j).rem_euclid(f.len() as i64) as usize] * psi[(j + m) as usize] * cis(-two_pi * t.xi * z);
                }
                acc += (v * dx).norm_sqr() * g.ln_rho() * g.dy / t.s;
            }
        }
        let oracle = acc.sqrt();
        assert!((got - oracle).abs() < 1e-4 * oracle, "{got} vs {oracle}");
        // identity Γ is the plain lacunary size
        let id = embed(&f, &g, &[p], Some(GammaMap::identity())).unwrap();
        let again = lacunary_size(&id, &t, &SizeSpec::lebesgue(2.0, 2.0).with_n_theta(1)).unwrap().value;
        assert_eq!(got, again);
    }

    #[test]
    fn single_sign_profiles_truncate_at_the_bottom() {
        let g = Grid3::new(-40.0, 0.5, 161, -1.0, 1.0 / 32.0, 65, 1.0 / 16.0, 2f64.powf(0.25), 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<Cplx<f64>> = (0..g.len()).map(|_| Cplx::new(rng.gen_range(0.0..1.0), 0.0)).collect();
        let f = EmbeddedField::sampled(g, vec![vals]).unwrap();
        let t = tree(0.0, 0.0, 1.0, 1.0);
        for u in [1.0, 3.0, f64::INFINITY] {
            let spec = SizeSpec::lebesgue(u, 1.0).with_n_theta(8);
            let a = truncation_size(&f, &t, &spec).unwrap().value;
            let b = lebesgue_size(&f, &t, &spec).unwrap().value;
            assert!((a - b).abs() < 1e-12 * b, "{a} vs {b}");
        }
    }

    fn triple(pattern: [Star; 3], per_octave: usize) -> (EmbeddedField<f64>, Tree<f64>) {
        let (a, b, c) = (signal(11, 4), signal(12, 4), signal(13, 4));
        let g = Grid3::new(-8.0, 0.002, 8001, -2.0, 1.0 / 32.0, 129, 1.0 / 64.0, 2f64.powf(1.0 / per_octave as f64), 6 * per_octave + 1).unwrap();
        let h = bht_triple([&a, &b, &c], &g, &[phi()], 0.5, 0.2, pattern).unwrap();
        (h, tree(0.2, 0.0, 1.0, 1.0))
    }

    #[test]
    fn overlap_patterns_vanish_on_the_trilinear_form() {
        use Star::{L, O};
        let spec = SizeSpec::lebesgue(1.0, 1.0);
        for pattern in [[O, O, L], [O, L, O]] {
            let (h, t) = triple(pattern, 4);
            let v = integral_size(&h, &t, pattern, &spec).unwrap();
            assert!(v.vanishing_pattern);
            assert_eq!((v.value, v.value_2eps), (0.0, 0.0));
        }
        let (h, t) = triple([L, L, L], 4);
        let v = integral_size(&h, &t, [L, L, L], &spec).unwrap();
        assert!(!v.vanishing_pattern && v.value > 0.0);
        assert!(v.stable, "{} vs {}", v.value, v.value_2eps);
    }

    #[test]
    fn uniform_prefactor_scales_only_the_first_constituent() {
        let f = signal(21, 4);
        let g = grid(1.0 / 32.0, 4);
        let gam = GammaMap::gamma2(0.5).unwrap();
        let e = embed(&f, &g, &[phi()], Some(gam)).unwrap();
        let t = tree(0.1, 0.0, 1.0, 2.0);
        let inner = Band::new(1.0 - 0.0625, 1.0 + 0.0625).unwrap();
        let g1 = GammaMap::new(4.0, 0.25, -1.0).unwrap();
        let g2 = GammaMap::new(2.0, 0.5, -1.0).unwrap();
        let base = SizeSpec::new(SizeKind::CompositeUniformLinear, 2.0, 1.0).with_restrict(inner);
        let a = composite_uniform_linear(&e, &t, &base.with_gamma(g1)).unwrap();
        let b = composite_uniform_linear(&e, &t, &base.with_gamma(g2)).unwrap();
        let first = |v: &SizeValue<f64>| v.breakdown[0].1;
        assert!(first(&a) > 0.0);
        assert!((first(&b) / first(&a) - 2f64.sqrt()).abs() < 1e-12);
        for k in 1..a.breakdown.len() {
            assert_eq!(a.breakdown[k], b.breakdown[k]);
        }
        // Θ^in must sit between B_{1/32}(−γ) and B_{1/8}(−γ)
        let bad = base.with_gamma(g1).with_restrict(Band::new(0.99, 1.01).unwrap());
        assert!(matches!(composite_uniform_linear(&e, &t, &bad), Err(Error::Parameter(_))));
        // arity
        let h = product_field(&e, &e).unwrap();
        assert!(matches!(composite_uniform_linear(&h, &t, &base.with_gamma(g1)), Err(Error::Shape(_))));
        assert!(matches!(composite_uniform_bilinear(&e, &t, &base.with_gamma(g1)), Err(Error::Shape(_))));
    }

    #[test]
    fn embedded_fields_have_negligible_defect_constituents() {
        let f = signal(22, 4);
        let g = grid(1.0 / 32.0, 32);
        let e = embed(&f, &g, &[phi()], None).unwrap();
        let t = tree(0.25, 0.0, 1.0, 1.0);
        let v = composite_nonuniform(&e, &t, &SizeSpec::new(SizeKind::CompositeNonuniform, 2.0, 1.0)).unwrap();
        let sup = v.constituent("lebesgue_inf_inf").unwrap();
        for name in ["defect_zeta_u_1", "defect_sigma_u_1"] {
            let d = v.constituent(name).unwrap();
            assert!(d < 1e-2 * sup, "{name}: {d} vs {sup}");
        }
        assert!(v.constituent("lacunary_u_2").unwrap() > 0.0);
        assert!(v.constituent("sio_u").unwrap() > 0.0);
    }

    #[test]
    fn product_sizes() {
        let g = grid(1.0 / 32.0, 8);
        let e2 = embed(&signal(31, 4), &g, &[phi()], Some(GammaMap::gamma2(0.5).unwrap())).unwrap();
        let e3 = embed(&signal(32, 4), &g, &[phi()], Some(GammaMap::gamma3(0.5).unwrap())).unwrap();
        let h = product_field(&e2, &e3).unwrap();
        let t = tree(0.0, 0.0, 1.0, 2.0);
        // Hölder: SL^{(1,∞)}(F₂F₃) ≤ SL^{(2,∞)}(F₂)·SL^{(2,∞)}(F₃)
        let s1 = SizeSpec::lebesgue(1.0, f64::INFINITY);
        let s2 = SizeSpec::lebesgue(2.0, f64::INFINITY);
        let lhs = product_size(&h, &t, ProductVariant::PhiPhi, &s1).unwrap().value;
        let rhs = lebesgue_size(&e2, &t, &s2).unwrap().value * lebesgue_size(&e3, &t, &s2).unwrap().value;
        assert!(lhs > 0.0 && lhs <= rhs * (1.0 + 1e-12), "{lhs} vs {rhs}");
        // the bilinear defects are second-order residue: ζ in the y-step, σ in the t-step
        let spec = SizeSpec::lebesgue(1.0, 1.0);
        let sup = product_size(&h, &t, ProductVariant::PhiPhi, &SizeSpec::lebesgue(f64::INFINITY, f64::INFINITY)).unwrap().value;
        let defect = |dy: f64, per_octave: usize, v: ProductVariant| {
            let g = grid(dy, per_octave);
            let e2 = embed(&signal(31, 4), &g, &[phi()], Some(GammaMap::gamma2(0.5).unwrap())).unwrap();
            let e3 = embed(&signal(32, 4), &g, &[phi()], Some(GammaMap::gamma3(0.5).unwrap())).unwrap();
            product_size(&product_field(&e2, &e3).unwrap(), &t, v, &spec).unwrap().value
        };
        let (z1, z2) = (defect(1.0 / 32.0, 8, ProductVariant::DefectZeta), defect(1.0 / 64.0, 8, ProductVariant::DefectZeta));
        let (s1, s2) = (defect(1.0 / 32.0, 8, ProductVariant::DefectSigma), defect(1.0 / 32.0, 16, ProductVariant::DefectSigma));
        for (a, b) in [(z1, z2), (s1, s2)] {
            assert!(a < 1e-2 * sup && a / b > 3.5, "{a} -> {b} vs {sup}");
        }
        // the variants with a boost are nonzero, and D on both factors is a different field
        let pd = product_size(&h, &t, ProductVariant::PhiD, &spec).unwrap().value;
        let dd = product_size(&h, &t, ProductVariant::DD, &spec).unwrap().value;
        assert!(pd > 0.0 && dd > 0.0 && pd != dd);
        let u = SizeSpec::new(SizeKind::CompositeUniformBilinear, 2.0, 1.0)
            .with_gamma(GammaMap::gamma2(0.5).unwrap())
            .with_restrict(Band::new(0.9375, 1.0625).unwrap());
        let c = composite_uniform_bilinear(&h, &t, &u).unwrap();
        assert_eq!(c.breakdown.len(), 6);
        assert!((c.value - c.breakdown.iter().map(|x| x.1).sum::<f64>()).abs() < 1e-12 * c.value);
    }

    #[test]
    fn sizes_are_covariant_under_tree_symmetries() {
        // |E[Mod_{−ξ} Tr_{−x} f](θ/t, y − x, t)| = |E[f](ξ + θ/t, y, t)|
        let f = signal(41, 4);
        let (xi, x) = (0.5625, 0.5);
        let moved = f.translate(-x).modulate(-xi);
        let g = grid(1.0 / 32.0, 4);
        let a = embed(&f, &g, &[phi()], None).unwrap();
        let b = embed(&moved, &g, &[phi()], None).unwrap();
        let (ta, tb) = (tree(xi, x, 1.0, 1.0), tree(0.0, 0.0, 1.0, 1.0));
        for spec in [SizeSpec::lebesgue(f64::INFINITY, f64::INFINITY), SizeSpec::lebesgue(2.0, f64::INFINITY)] {
            let (u, v) = (lebesgue_size(&a, &ta, &spec).unwrap().value, lebesgue_size(&b, &tb, &spec).unwrap().value);
            assert!((u - v).abs() < 1e-10 * u, "{u} vs {v}");
        }
        let spec = SizeSpec::lebesgue(2.0, 2.0);
        let (u, v) = (lacunary_size(&a, &ta, &spec).unwrap().value, lacunary_size(&b, &tb, &spec).unwrap().value);
        assert!(u.is_finite() && (u - v).abs() < 1e-10 * u, "{u} vs {v}");
    }

    #[test]
    fn report_round_trips_infinite_values() {
        let t = tree(0.0, 0.0, 1.0, 1.0);
        let spec = SizeSpec::<f64>::lebesgue(1.0, f64::INFINITY);
        let v = SizeValue { value: f64::INFINITY, edges: 3, breakdown: vec![("smooth".into(), 1.5)] };
        let rep = SizeReport::new(&t, &spec, &v);
        let js = serde_json::to_string(&rep).unwrap();
        assert!(js.contains("\"inf\""));
        let back: SizeReport = serde_json::from_str(&js).unwrap();
        assert_eq!(back, rep);
        let spec_js = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SizeSpec<f64>>(&spec_js).unwrap(), spec);
    }
}
