use serde::{Deserialize, Serialize};

use crate::laws::NormingConstants;

/// An interval of the extended real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    pub lower: f64,
    pub upper: f64,
}

impl SupportInterval {
    pub const fn new(lower: f64, upper: f64) -> Self {
        SupportInterval { lower, upper }
    }

    pub fn contains_open(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    pub fn is_finite(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }
}

/// A density value together with a flag marking support endpoints where the
/// density has no finite limit and was replaced by 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density {
    pub value: f64,
    pub boundary: bool,
}

impl Density {
    pub const fn interior(value: f64) -> Self {
        Density {
            value,
            boundary: false,
        }
    }

    pub const fn singular_boundary() -> Self {
        Density {
            value: 0.0,
            boundary: true,
        }
    }
}

/// Absolutely continuous univariate law.
pub trait Distribution {
    fn cdf(&self, x: f64) -> f64;

    /// `1 - cdf(x)`, overridden where a more accurate form exists.
    fn ccdf(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    fn density(&self, x: f64) -> Density;

    fn pdf(&self, x: f64) -> f64 {
        self.density(x).value
    }

    fn quantile(&self, p: f64) -> f64;

    fn support(&self) -> SupportInterval;

    /// `F(A|x|^B sign x)`.
    fn cdf_normed(&self, x: f64, c: NormingConstants) -> f64 {
        self.cdf(c.apply(x))
    }

    /// `1 - F(A|x|^B sign x)`.
    fn ccdf_normed(&self, x: f64, c: NormingConstants) -> f64 {
        self.ccdf(c.apply(x))
    }

    /// Log density of `sign(X) (|X|/A)^{1/B}` at `x`; `-inf` where it is 0.
    fn ln_pdf_normed(&self, x: f64, c: NormingConstants) -> f64 {
        (self.pdf(c.apply(x)) * c.derivative(x)).ln()
    }
}

impl<D: Distribution + ?Sized> Distribution for &D {
    fn cdf(&self, x: f64) -> f64 {
        (**self).cdf(x)
    }
    fn ccdf(&self, x: f64) -> f64 {
        (**self).ccdf(x)
    }
    fn density(&self, x: f64) -> Density {
        (**self).density(x)
    }
    fn quantile(&self, p: f64) -> f64 {
        (**self).quantile(p)
    }
    fn support(&self) -> SupportInterval {
        (**self).support()
    }
    fn cdf_normed(&self, x: f64, c: NormingConstants) -> f64 {
        (**self).cdf_normed(x, c)
    }
    fn ccdf_normed(&self, x: f64, c: NormingConstants) -> f64 {
        (**self).ccdf_normed(x, c)
    }
    fn ln_pdf_normed(&self, x: f64, c: NormingConstants) -> f64 {
        (**self).ln_pdf_normed(x, c)
    }
}

/// The uniform law on `(0, 1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Uniform01;

impl Distribution for Uniform01 {
    fn cdf(&self, x: f64) -> f64 {
        x.clamp(0.0, 1.0)
    }
    fn ccdf(&self, x: f64) -> f64 {
        (1.0 - x).clamp(0.0, 1.0)
    }
    fn density(&self, x: f64) -> Density {
        Density::interior(if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 })
    }
    fn quantile(&self, p: f64) -> f64 {
        p
    }
    fn support(&self) -> SupportInterval {
        SupportInterval::new(0.0, 1.0)
    }
}
