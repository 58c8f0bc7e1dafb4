//! Pair potentials for the Si–Si and Cu–Si interactions.
//!
//! Both forms are smooth even functions of the signed distance and are
//! blended to zero on `[r_c - w, r_c]` by a quintic smoothstep, so value,
//! first and second derivative are continuous everywhere.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Value and first two derivatives of a pair term at one distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEval<T> {
    pub value: T,
    pub d1: T,
    pub d2: T,
}

impl<T: Real> PairEval<T> {
    pub fn zero() -> Self {
        Self {
            value: T::zero(),
            d1: T::zero(),
            d2: T::zero(),
        }
    }
}

/// Quintic C² switch from 1 at `start` to 0 at `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taper<T> {
    pub start: T,
    pub end: T,
}

impl<T: Real> Taper<T> {
    pub fn new(cutoff: T, width: T) -> Self {
        Self {
            start: cutoff - width,
            end: cutoff,
        }
    }

    /// Returns `(s, s', s'')` at a nonnegative distance.
    #[inline]
    pub fn switch(&self, d: T) -> (T, T, T) {
        if d <= self.start {
            return (T::one(), T::zero(), T::zero());
        }
        if d >= self.end {
            return (T::zero(), T::zero(), T::zero());
        }
        let w = self.end - self.start;
        let x = (d - self.start) / w;
        let (c6, c10, c15, c30, c60) = (T::lit(6.0), T::lit(10.0), T::lit(15.0), T::lit(30.0), T::lit(60.0));
        let one = T::one();
        let x2 = x * x;
        let s = one - x2 * x * (c10 - c15 * x + c6 * x2);
        let ds = -c30 * x2 * (one - x) * (one - x) / w;
        let d2s = -c60 * x * (one - x) * (one - x - x) / (w * w);
        (s, ds, d2s)
    }
}

/// Functional form of a pair interaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairForm<T> {
    /// `D·[(r_e/r)^4 - 2(r_e/r)^2]`: well of depth `D` at `r_e`, infinite at the origin.
    Mie42 { re: T, depth: T },
    /// `B·exp(-(r/s_b)^2) - C·[exp(-((r-r_m)/s_w)^2) + exp(-((r+r_m)/s_w)^2)]`.
    TwoGaussian { b: T, c: T, rm: T, sb: T, sw: T },
}

/// Which species pair a potential describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    SiSi,
    CuSi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPotential<T> {
    pub kind: PairKind,
    pub form: PairForm<T>,
    pub taper: Taper<T>,
}

impl<T: Real> PairPotential<T> {
    pub fn si_si(re: T, depth: T, cutoff: T, width: T) -> Self {
        Self {
            kind: PairKind::SiSi,
            form: PairForm::Mie42 { re, depth },
            taper: Taper::new(cutoff, width),
        }
    }

    pub fn cu_si(b: T, c: T, rm: T, sb: T, sw: T, cutoff: T, width: T) -> Self {
        Self {
            kind: PairKind::CuSi,
            form: PairForm::TwoGaussian { b, c, rm, sb, sw },
            taper: Taper::new(cutoff, width),
        }
    }

    #[inline]
    pub fn cutoff(&self) -> T {
        self.taper.end
    }

    /// Untapered form at a nonnegative distance.
    #[inline]
    fn raw(&self, d: T) -> PairEval<T> {
        match self.form {
            PairForm::Mie42 { re, depth } => {
                let inv = T::one() / d;
                let x = re * inv;
                let x2 = x * x;
                let x4 = x2 * x2;
                let two = T::lit(2.0);
                PairEval {
                    value: depth * (x4 - two * x2),
                    d1: depth * (T::lit(-4.0) * x4 + T::lit(4.0) * x2) * inv,
                    d2: depth * (T::lit(20.0) * x4 - T::lit(12.0) * x2) * inv * inv,
                }
            }
            PairForm::TwoGaussian { b, c, rm, sb, sw } => {
                let two = T::lit(2.0);
                let four = T::lit(4.0);
                let gauss = |u: T, s: T| {
                    let s2 = s * s;
                    let g = (-(u * u) / s2).exp();
                    (g, -two * u / s2 * g, (four * u * u / (s2 * s2) - two / s2) * g)
                };
                let (g0, g1, g2) = gauss(d, sb);
                let (a0, a1, a2) = gauss(d - rm, sw);
                let (m0, m1, m2) = gauss(d + rm, sw);
                PairEval {
                    value: b * g0 - c * (a0 + m0),
                    d1: b * g1 - c * (a1 + m1),
                    d2: b * g2 - c * (a2 + m2),
                }
            }
        }
    }

    /// Tapered value and derivatives at a nonnegative distance.
    ///
    /// Returns `+inf` for a Si–Si pair at distance zero.
    #[inline]
    pub fn eval_abs(&self, d: T) -> PairEval<T> {
        if d >= self.taper.end {
            return PairEval::zero();
        }
        if self.kind == PairKind::SiSi && d <= T::zero() {
            return PairEval {
                value: T::infinity(),
                d1: T::neg_infinity(),
                d2: T::infinity(),
            };
        }
        let g = self.raw(d);
        if d <= self.taper.start {
            return g;
        }
        let (s, ds, d2s) = self.taper.switch(d);
        PairEval {
            value: s * g.value,
            d1: ds * g.value + s * g.d1,
            d2: d2s * g.value + T::lit(2.0) * ds * g.d1 + s * g.d2,
        }
    }

    /// Value and derivatives at a signed distance; the derivative is odd.
    #[inline]
    pub fn eval(&self, r: T) -> PairEval<T> {
        let e = self.eval_abs(r.abs());
        if r < T::zero() {
            PairEval { d1: -e.d1, ..e }
        } else {
            e
        }
    }

    /// Checked evaluation: a Si–Si pair at distance zero is outside the domain.
    pub fn try_eval(&self, r: T) -> Result<PairEval<T>> {
        if self.kind == PairKind::SiSi && r == T::zero() {
            return Err(Error::Domain("Si-Si pair at zero distance".into()));
        }
        Ok(self.eval(r))
    }

    pub fn value(&self, r: T) -> T {
        self.eval(r).value
    }

    pub fn derivative(&self, r: T) -> T {
        self.eval(r).d1
    }

    pub fn second_derivative(&self, r: T) -> T {
        self.eval(r).d2
    }

    /// Same potential with every energy scaled by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        let form = match self.form {
            PairForm::Mie42 { re, depth } => PairForm::Mie42 {
                re,
                depth: depth * factor,
            },
            PairForm::TwoGaussian { b, c, rm, sb, sw } => PairForm::TwoGaussian {
                b: b * factor,
                c: c * factor,
                rm,
                sb,
                sw,
            },
        };
        Self { form, ..*self }
    }

    /// Location of the Cu–Si well minimum in `[lo, hi]`, by bisection on the derivative.
    pub fn well_minimum(&self, lo: T, hi: T) -> Result<T> {
        let (mut a, mut b) = (lo, hi);
        let (fa, fb) = (self.derivative(a), self.derivative(b));
        if !(fa < T::zero() && fb > T::zero()) {
            return Err(Error::Domain("derivative does not bracket a minimum".into()));
        }
        for _ in 0..200 {
            let mid = (a + b) / T::lit(2.0);
            if self.derivative(mid) < T::zero() {
                a = mid;
            } else {
                b = mid;
            }
            if b - a <= T::epsilon() * b {
                break;
            }
        }
        Ok((a + b) / T::lit(2.0))
    }
}
