//! Derivative jets: `(f, f', …, f^{(K)})` at a point, with exact propagation
//! through arithmetic, `exp`, `ln` and real powers.

use crate::{Cplx, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct Jet<T: Real> {
    pub d: Vec<Cplx<T>>,
}

fn binom(n: usize, k: usize) -> f64 {
    let mut b = 1.0;
    for i in 0..k {
        b = b * (n - i) as f64 / (i + 1) as f64;
    }
    b
}

impl<T: Real> Jet<T> {
    pub fn zero(order: usize) -> Self {
        Jet { d: vec![Cplx::new(T::zero(), T::zero()); order + 1] }
    }

    pub fn constant(c: Cplx<T>, order: usize) -> Self {
        let mut j = Self::zero(order);
        j.d[0] = c;
        j
    }

    /// The identity function evaluated at `x`.
    pub fn variable(x: T, order: usize) -> Self {
        let mut j = Self::zero(order);
        j.d[0] = Cplx::new(x, T::zero());
        if order >= 1 {
            j.d[1] = Cplx::new(T::one(), T::zero());
        }
        j
    }

    pub fn order(&self) -> usize {
        self.d.len() - 1
    }

    pub fn value(&self) -> Cplx<T> {
        self.d[0]
    }

    pub fn is_zero(&self) -> bool {
        self.d.iter().all(|z| z.re == T::zero() && z.im == T::zero())
    }

    pub fn add(&self, o: &Self) -> Self {
        Jet { d: self.d.iter().zip(&o.d).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Jet { d: self.d.iter().zip(&o.d).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, c: Cplx<T>) -> Self {
        Jet { d: self.d.iter().map(|a| a * c).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let k = self.order().min(o.order());
        let mut d = vec![Cplx::new(T::zero(), T::zero()); k + 1];
        for (n, dn) in d.iter_mut().enumerate() {
            for j in 0..=n {
                *dn += self.d[j] * o.d[n - j] * crate::lit::<T>(binom(n, j));
            }
        }
        Jet { d }
    }

    pub fn recip(&self) -> Self {
        let k = self.order();
        let inv = Cplx::new(T::one(), T::zero()) / self.d[0];
        let mut h = vec![Cplx::new(T::zero(), T::zero()); k + 1];
        h[0] = inv;
        for n in 1..=k {
            let mut s = Cplx::new(T::zero(), T::zero());
            for j in 1..=n {
                s += self.d[j] * h[n - j] * crate::lit::<T>(binom(n, j));
            }
            h[n] = -s * inv;
        }
        Jet { d: h }
    }

    pub fn div(&self, o: &Self) -> Self {
        self.mul(&o.recip())
    }

    pub fn exp(&self) -> Self {
        let k = self.order();
        let mut g = vec![Cplx::new(T::zero(), T::zero()); k + 1];
        g[0] = self.d[0].exp();
        for n in 1..=k {
            let mut s = Cplx::new(T::zero(), T::zero());
            for j in 0..n {
                s += self.d[j + 1] * g[n - 1 - j] * crate::lit::<T>(binom(n - 1, j));
            }
            g[n] = s;
        }
        Jet { d: g }
    }

    /// Derivative jet, one order shorter.
    pub fn derivative(&self) -> Self {
        if self.d.len() == 1 {
            return Self::zero(0);
        }
        Jet { d: self.d[1..].to_vec() }
    }

    /// Jet of `ln f`, for `f` with positive real value.
    pub fn ln(&self) -> Self {
        let k = self.order();
        let mut h = Self::zero(k);
        h.d[0] = self.d[0].ln();
        if k == 0 {
            return h;
        }
        let q = self.derivative().mul(&Jet { d: self.d[..k].to_vec() }.recip());
        h.d[1..].copy_from_slice(&q.d);
        h
    }

    pub fn powf(&self, a: T) -> Self {
        self.ln().scale(Cplx::new(a, T::zero())).exp()
    }

    /// Jet of `x ↦ f(a x + b)` given the jet of `f` at `a x + b`.
    pub fn chain_affine(&self, a: T) -> Self {
        let mut p = T::one();
        let mut d = self.d.clone();
        for dn in d.iter_mut() {
            *dn = *dn * p;
            p = p * a;
        }
        Jet { d }
    }

    pub fn truncate(&self, order: usize) -> Self {
        Jet { d: self.d[..=order.min(self.order())].to_vec() }
    }
}
