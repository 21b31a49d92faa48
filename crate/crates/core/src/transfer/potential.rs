use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Expr, RealFn};

/// A positive potential `g` on `[0,1]`, stored through `A = log g`.
#[derive(Clone)]
pub struct PotentialSpec {
    label: String,
    a: RealFn,
    g: Option<RealFn>,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec").field("label", &self.label).finish()
    }
}

impl PotentialSpec {
    /// From `g`; `A = ln g` is NaN wherever `g ≤ 0`.
    pub fn from_g(label: impl Into<String>, g: RealFn) -> Self {
        let gg = g.clone();
        let a: RealFn = Arc::new(move |x| {
            let v = gg(x);
            if v > 0.0 {
                v.ln()
            } else {
                f64::NAN
            }
        });
        Self {
            label: label.into(),
            a,
            g: Some(g),
        }
    }

    /// From `A = log g` directly.
    pub fn from_a(label: impl Into<String>, a: RealFn) -> Self {
        Self {
            label: label.into(),
            a,
            g: None,
        }
    }

    pub fn parse_g(src: &str) -> Result<Self> {
        Ok(Self::from_g(format!("g = {src}"), Expr::parse(src)?.into_fn()))
    }

    pub fn parse_a(src: &str) -> Result<Self> {
        Ok(Self::from_a(format!("A = {src}"), Expr::parse(src)?.into_fn()))
    }

    /// `g ≡ c`.
    pub fn constant(c: f64) -> Self {
        Self::from_g(format!("g = {c}"), Arc::new(move |_| c))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `A(x) = log g(x)`.
    #[inline]
    pub fn a(&self, x: f64) -> f64 {
        (self.a)(x)
    }

    pub fn a_fn(&self) -> RealFn {
        self.a.clone()
    }

    /// Checks `g > 0` and `A` finite on `samples` uniform points.
    pub fn validate(&self, samples: usize) -> Result<()> {
        let samples = samples.max(2);
        for k in 0..samples {
            let x = k as f64 / (samples - 1) as f64;
            if let Some(g) = &self.g {
                let v = g(x);
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::NonPositivePotential { x, value: v });
                }
            }
            if !self.a(x).is_finite() {
                return Err(Error::NonFinite { what: "potential A", x });
            }
        }
        Ok(())
    }

    /// Sampled `(min A, max A)`.
    pub fn range(&self, samples: usize) -> (f64, f64) {
        let samples = samples.max(2);
        (0..samples)
            .map(|k| self.a(k as f64 / (samples - 1) as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Sampled Lipschitz constant of `A` (largest difference quotient on a
    /// uniform grid).
    pub fn lipschitz(&self, samples: usize) -> f64 {
        let samples = samples.max(2);
        let h = 1.0 / (samples - 1) as f64;
        let vals: Vec<f64> = (0..samples).map(|k| self.a(k as f64 * h)).collect();
        vals.windows(2)
            .map(|w| (w[1] - w[0]).abs() / h)
            .fold(0.0, f64::max)
    }
}
