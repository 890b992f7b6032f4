//! Numerical toolkit for the bilinear Hilbert transform and its wave packet
//! analysis on the time-frequency-scale space `(η, y, t)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: periodic band-limited samples and their Fourier series.
//! - [`wavepacket`]: Fourier-side packets, symmetries, boosts, lattice decomposition.
//! - [`transform`]: `BHT_β` through its multiplier, the halfplane multiplier and
//!   the wave packet representation.
//! - [`embedding`]: the embedding `E[f](η,y,t)[φ]` on 3-D grids, `Γ` maps, defects.
//! - [`geometry`]: trees, strips, regions and their boundary graphs.
//! - [`sizes`]: local size functionals on trees.
//! - [`outer`]: outer measures, quasi-norms and covering algorithms.
//!
//! All numerics are generic over [`Real`]; `f64` aliases are provided for
//! the common case.

pub mod embedding;
pub mod error;
pub mod geometry;
pub mod jet;
pub mod outer;
pub mod signal;
pub mod sizes;
pub mod transform;
pub mod wavepacket;

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

pub use error::{Error, Result};
pub use num_complex::Complex;

/// Version of this crate, embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Scalar type accepted by every numerical routine.
pub trait Real:
    'static
    + Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + rustfft::FftNum
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable")
}

/// Converts a working scalar into `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("finite conversion")
}

/// `⟨x⟩ = (1 + x²)^{1/2}`.
#[inline]
pub fn japanese<T: Real>(x: T) -> T {
    (T::one() + x * x).sqrt()
}

pub type Cplx<T> = Complex<T>;

pub type Signal64 = signal::SampledSignal<f64>;
pub type WavePacket64 = wavepacket::WavePacket<f64>;
pub type Grid3D64 = embedding::Grid3<f64>;
pub type Field64 = embedding::EmbeddedField<f64>;
pub type GammaMap64 = embedding::GammaMap<f64>;
pub type Tree64 = geometry::Tree<f64>;
pub type Strip64 = geometry::Strip<f64>;
pub type Region64 = geometry::Region<f64>;

pub type Signal32 = signal::SampledSignal<f32>;
pub type WavePacket32 = wavepacket::WavePacket<f32>;
