//! Periodic, uniformly sampled complex signals.
//!
//! A signal with `n` samples at spacing `dx` starting at `x0` is identified with
//! its trigonometric interpolant `f(x) = Σ_k c_k e^{2πi ξ_k x}`, `ξ_k = k / (n dx)`,
//! `k ∈ [−n/2, n/2)`. The coefficients `c_k` play the role of `f̂(ξ_k)·(1/L)`.

use std::io::{Read, Write};
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{param, Error, Result};
use crate::{lit, Cplx, Real};

/// Cached forward/inverse FFT plans of one length.
#[derive(Clone)]
pub struct FftPair<T: Real> {
    pub n: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> FftPair<T> {
    pub fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        FftPair { n, fwd: p.plan_fft_forward(n), inv: p.plan_fft_inverse(n) }
    }

    /// Unnormalised forward transform `X_k = Σ_j x_j e^{−2πijk/n}`.
    pub fn forward(&self, buf: &mut [Cplx<T>]) {
        self.fwd.process(buf);
    }

    /// Normalised inverse transform.
    pub fn inverse(&self, buf: &mut [Cplx<T>]) {
        self.inv.process(buf);
        let s = T::one() / lit::<T>(self.n as f64);
        for z in buf.iter_mut() {
            *z = *z * s;
        }
    }
}

impl<T: Real> std::fmt::Debug for FftPair<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FftPair({})", self.n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledSignal<T: Real> {
    pub samples: Vec<Cplx<T>>,
    pub dx: T,
    pub x0: T,
}

/// Signed frequency index of FFT slot `k` for length `n`.
#[inline]
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

#[inline]
pub fn cis<T: Real>(phase: T) -> Cplx<T> {
    Cplx::new(phase.cos(), phase.sin())
}

impl<T: Real> SampledSignal<T> {
    pub fn new(samples: Vec<Cplx<T>>, dx: T, x0: T) -> Result<Self> {
        if !samples.len().is_power_of_two() || samples.len() < 2 {
            return param(format!("signal length {} is not a power of two", samples.len()));
        }
        if !(dx > T::zero()) || !dx.is_finite() {
            return param("signal spacing must be positive");
        }
        Ok(SampledSignal { samples, dx, x0 })
    }

    pub fn zeros(n: usize, dx: T, x0: T) -> Result<Self> {
        Self::new(vec![Cplx::new(T::zero(), T::zero()); n], dx, x0)
    }

    pub fn from_fn(n: usize, dx: T, x0: T, f: impl Fn(T) -> Cplx<T>) -> Result<Self> {
        let s = (0..n).map(|j| f(x0 + dx * lit::<T>(j as f64))).collect();
        Self::new(s, dx, x0)
    }

    /// Samples of `Σ c e^{2πiξx}` for the given `(ξ, c)` terms.
    pub fn from_fourier_series(n: usize, dx: T, x0: T, terms: &[(T, Cplx<T>)]) -> Result<Self> {
        let two_pi = T::PI() + T::PI();
        Self::from_fn(n, dx, x0, |x| {
            terms.iter().fold(Cplx::new(T::zero(), T::zero()), |acc, (xi, c)| {
                acc + c * cis(two_pi * *xi * x)
            })
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn period(&self) -> T {
        self.dx * lit::<T>(self.len() as f64)
    }

    pub fn x(&self, j: usize) -> T {
        self.x0 + self.dx * lit::<T>(j as f64)
    }

    /// Frequency of FFT slot `k`.
    pub fn freq(&self, k: usize) -> T {
        lit::<T>(signed_index(k, self.len()) as f64) / self.period()
    }

    pub fn nyquist(&self) -> T {
        lit::<T>(0.5) / self.dx
    }

    /// Fourier-series coefficients in FFT order.
    pub fn spectrum_with(&self, plan: &FftPair<T>) -> Vec<Cplx<T>> {
        let n = self.len();
        let mut buf = self.samples.clone();
        plan.forward(&mut buf);
        let two_pi = T::PI() + T::PI();
        let inv_n = T::one() / lit::<T>(n as f64);
        for (k, z) in buf.iter_mut().enumerate() {
            *z = *z * inv_n * cis(-two_pi * self.freq(k) * self.x0);
        }
        buf
    }

    pub fn spectrum(&self) -> Vec<Cplx<T>> {
        self.spectrum_with(&FftPair::new(self.len()))
    }

    /// Inverse of [`Self::spectrum`].
    pub fn from_spectrum(coeffs: Vec<Cplx<T>>, dx: T, x0: T) -> Result<Self> {
        let n = coeffs.len();
        let plan = FftPair::new(n);
        Self::from_spectrum_with(coeffs, dx, x0, &plan)
    }

    pub fn from_spectrum_with(mut coeffs: Vec<Cplx<T>>, dx: T, x0: T, plan: &FftPair<T>) -> Result<Self> {
        let n = coeffs.len();
        let two_pi = T::PI() + T::PI();
        let period = dx * lit::<T>(n as f64);
        let nn = lit::<T>(n as f64);
        for (k, z) in coeffs.iter_mut().enumerate() {
            let xi = lit::<T>(signed_index(k, n) as f64) / period;
            *z = *z * nn * cis(two_pi * xi * x0);
        }
        plan.inverse(&mut coeffs);
        Self::new(coeffs, dx, x0)
    }

    /// Nonzero Fourier terms `(ξ_k, c_k)` with `|c_k| > tol · max |c|`, ascending in `ξ`.
    pub fn sparse_spectrum(&self, tol: T) -> Vec<(T, Cplx<T>)> {
        let c = self.spectrum();
        let max = c.iter().map(|z| z.norm()).fold(T::zero(), T::max);
        if max == T::zero() {
            return Vec::new();
        }
        let mut v: Vec<(i64, Cplx<T>)> = c
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > tol * max)
            .map(|(k, z)| (signed_index(k, self.len()), *z))
            .collect();
        v.sort_by_key(|(k, _)| *k);
        let p = self.period();
        v.into_iter().map(|(k, z)| (lit::<T>(k as f64) / p, z)).collect()
    }

    /// Largest `|ξ|` carrying a coefficient above `tol · max |c|`.
    pub fn band_limit(&self, tol: T) -> T {
        self.sparse_spectrum(tol).iter().map(|(xi, _)| xi.abs()).fold(T::zero(), T::max)
    }

    /// Trigonometric interpolant at an arbitrary point.
    pub fn eval(&self, x: T) -> Cplx<T> {
        let c = self.spectrum();
        let two_pi = T::PI() + T::PI();
        c.iter().enumerate().fold(Cplx::new(T::zero(), T::zero()), |acc, (k, z)| {
            acc + z * cis(two_pi * self.freq(k) * x)
        })
    }

    pub fn map(&self, f: impl Fn(Cplx<T>) -> Cplx<T>) -> Self {
        SampledSignal { samples: self.samples.iter().map(|z| f(*z)).collect(), dx: self.dx, x0: self.x0 }
    }

    pub fn scale(&self, c: Cplx<T>) -> Self {
        self.map(|z| z * c)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    fn check_same_grid(&self, o: &Self) -> Result<()> {
        if self.len() != o.len() || self.dx != o.dx || self.x0 != o.x0 {
            return Err(Error::Shape("signals live on different grids".into()));
        }
        Ok(())
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.check_same_grid(o)?;
        let s = self.samples.iter().zip(&o.samples).map(|(a, b)| a + b).collect();
        Ok(SampledSignal { samples: s, dx: self.dx, x0: self.x0 })
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        self.check_same_grid(o)?;
        let s = self.samples.iter().zip(&o.samples).map(|(a, b)| a - b).collect();
        Ok(SampledSignal { samples: s, dx: self.dx, x0: self.x0 })
    }

    pub fn mul(&self, o: &Self) -> Result<Self> {
        self.check_same_grid(o)?;
        let s = self.samples.iter().zip(&o.samples).map(|(a, b)| a * b).collect();
        Ok(SampledSignal { samples: s, dx: self.dx, x0: self.x0 })
    }

    /// `(∫ |f|^p dx)^{1/p}` over one period (`p = ∞` gives the sup).
    pub fn lp_norm(&self, p: T) -> T {
        if p.is_infinite() {
            return self.samples.iter().map(|z| z.norm()).fold(T::zero(), T::max);
        }
        let s = self.samples.iter().map(|z| z.norm().powf(p)).fold(T::zero(), |a, b| a + b);
        (s * self.dx).powf(T::one() / p)
    }

    pub fn l2_norm(&self) -> T {
        self.lp_norm(lit(2.0))
    }

    pub fn sup_norm(&self) -> T {
        self.lp_norm(T::infinity())
    }

    /// `Tr_y f(x) = f(x − y)`, exact on the trigonometric interpolant.
    pub fn translate(&self, y: T) -> Self {
        let mut c = self.spectrum();
        let two_pi = T::PI() + T::PI();
        for (k, z) in c.iter_mut().enumerate() {
            *z = *z * cis(-two_pi * self.freq(k) * y);
        }
        Self::from_spectrum(c, self.dx, self.x0).expect("same length")
    }

    /// `Mod_η f(x) = e^{2πiηx} f(x)`, pointwise on the samples.
    pub fn modulate(&self, eta: T) -> Self {
        let two_pi = T::PI() + T::PI();
        let s = (0..self.len()).map(|j| self.samples[j] * cis(two_pi * eta * self.x(j))).collect();
        SampledSignal { samples: s, dx: self.dx, x0: self.x0 }
    }

    /// `Dil_t f(x) = t⁻¹ f(x / t)` evaluated through the trigonometric interpolant.
    pub fn dilate(&self, t: T) -> Self {
        let c = self.spectrum();
        let two_pi = T::PI() + T::PI();
        let inv_t = T::one() / t;
        let s = (0..self.len())
            .map(|j| {
                let x = self.x(j) * inv_t;
                c.iter().enumerate().fold(Cplx::new(T::zero(), T::zero()), |acc, (k, z)| {
                    acc + z * cis(two_pi * self.freq(k) * x)
                }) * inv_t
            })
            .collect();
        SampledSignal { samples: s, dx: self.dx, x0: self.x0 }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "re", "im"])?;
        for j in 0..self.len() {
            let z = self.samples[j];
            wr.write_record([
                format!("{:.17e}", crate::to_f64(self.x(j))),
                format!("{:.17e}", crate::to_f64(z.re)),
                format!("{:.17e}", crate::to_f64(z.im)),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut xs = Vec::new();
        let mut s = Vec::new();
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
            s.push(Cplx::new(lit::<T>(get(1)?), lit::<T>(get(2)?)));
        }
        if xs.len() < 2 {
            return Err(Error::Io("signal csv needs at least two rows".into()));
        }
        let dx = xs[1] - xs[0];
        for w in xs.windows(2) {
            if ((w[1] - w[0]) - dx).abs() > 1e-9 * dx.abs().max(1.0) {
                return Err(Error::Io("signal csv grid is not uniform".into()));
            }
        }
        Self::new(s, lit(dx), lit(xs[0]))
    }
}
