//! Perturbed glogPd densities `f = w e^g`, exact laws of power-normalized
//! order statistics, and seeded samplers.
//!
//! A perturbed density is stored on the exponential scale `sigma = s(X) =
//! -log H(X)`, where it has density `e^{g(sigma)}` on `(0, s0)`. Every family
//! shares this representation, which keeps the heavy-tailed families
//! numerically tame: the change of variable is a bijection, so distances
//! computed in `sigma` (or in the normalized scale `t` below) equal distances
//! in `x`.
//!
//! For the normalized k-th largest `Y` of `n` draws, `t = s(Y)` has the
//! density of `phi^{-1}` applied to the k-th smallest `sigma`, where
//! `phi(t) = s(A |x(t)|^B sign x(t))`. Its limit is `Gamma(k, 1)`.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{Density, Distribution, SupportInterval};
use crate::error::{invalid, Error, Result};
use crate::laws::{poisson_cdf_below, Family, NormingConstants, PMaxLaw};
use std::sync::Arc;

use crate::quadrature::{integrate_with, kronrod21_fixed, ln_gamma, QuadOptions};

/// Frequency of the log-periodic oscillation in the `envelope-sine` model.
pub const SINE_FREQUENCY: f64 = 4.0;

/// Slack allowed by [`PerturbedDensity::envelope_check`].
pub const ENVELOPE_SLACK: f64 = 1e-9;

/// The catalog of log-perturbations `g`, written on the `sigma` scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    /// `g = 0`: the glogPd itself.
    Zero,
    /// `g = L sigma^delta`, the upper edge of the envelope.
    Envelope,
    /// `g = -L sigma^delta`, the lower edge.
    EnvelopeNeg,
    /// `g = L sigma^delta sin(4 log sigma)`.
    EnvelopeSine,
    /// `g = -sigma`, which makes `f = h`; for family 2 with `alpha = 1` this
    /// is the uniform density on `(0, 1)`.
    Uniform,
}

impl Perturbation {
    pub const ALL: [Perturbation; 5] = [
        Perturbation::Zero,
        Perturbation::Envelope,
        Perturbation::EnvelopeNeg,
        Perturbation::EnvelopeSine,
        Perturbation::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Perturbation::Zero => "zero",
            Perturbation::Envelope => "envelope",
            Perturbation::EnvelopeNeg => "envelope-neg",
            Perturbation::EnvelopeSine => "envelope-sine",
            Perturbation::Uniform => "uniform",
        }
    }

    fn value(self, sigma: f64, amp: f64, exp: f64) -> f64 {
        match self {
            Perturbation::Zero => 0.0,
            Perturbation::Envelope => amp * sigma.powf(exp),
            Perturbation::EnvelopeNeg => -amp * sigma.powf(exp),
            Perturbation::EnvelopeSine => {
                if sigma == 0.0 {
                    0.0
                } else {
                    amp * sigma.powf(exp) * (SINE_FREQUENCY * sigma.ln()).sin()
                }
            }
            Perturbation::Uniform => -sigma,
        }
    }
}

impl std::fmt::Display for Perturbation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Perturbation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Perturbation::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .map_or_else(|| invalid(format!("unknown perturbation {s:?}")), Ok)
    }
}

/// How a perturbed density is brought to unit mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Normalization {
    /// Choose the left edge so that the untouched `w e^g` has mass 1. The
    /// edge `x0` is an output.
    #[default]
    Truncate,
    /// Truncate at `T(x0)` and divide by the mass; `g` is shifted by the log
    /// of the normalizer, so it no longer vanishes at `r(H)`.
    Rescale { x0: f64 },
}

/// Parameters of a perturbed density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedSpec {
    pub family: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Envelope scale `L`.
    #[serde(rename = "L")]
    pub l: f64,
    /// Envelope exponent.
    pub delta: f64,
    pub perturbation: Perturbation,
    #[serde(default)]
    pub normalization: Normalization,
}

/// Outcome of an envelope check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub pass: bool,
    pub max_ratio: f64,
    /// Location of the maximum in the original scale.
    pub argmax: f64,
    /// The same location as `sigma = -log H(argmax)`.
    pub argmax_sigma: f64,
}

/// `f(x) = w(x) exp(g(x))` on `(T(x0), r(H))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedDensity {
    law: PMaxLaw,
    perturbation: Perturbation,
    amplitude: f64,
    exponent: f64,
    envelope_scale: f64,
    envelope_exponent: f64,
    normalization: Normalization,
    edge: f64,
    ln_normalizer: f64,
    table: Option<Arc<MassTable>>,
}

/// Cumulative mass `int_0^sigma e^g` of the oscillating model at geometric
/// nodes, so that one evaluation costs one fixed-rule panel.
#[derive(Debug, PartialEq)]
struct MassTable {
    ln_lo: f64,
    cum: Vec<f64>,
}

const TABLE_STEP: f64 = 1.0 / 16.0;
const TABLE_TOP: f64 = 1024.0;

impl MassTable {
    fn node(&self, i: usize) -> f64 {
        (self.ln_lo + i as f64 * TABLE_STEP).exp()
    }

    fn lo(&self) -> f64 {
        self.node(0)
    }
}

/// First-order mass term of the sine model: `L int_0^s t^d sin(w log t) dt`.
fn sine_first_order(s: f64, amp: f64, d: f64) -> f64 {
    let p = d + 1.0;
    let w = SINE_FREQUENCY;
    let ls = s.ln();
    amp * s.powf(p) * (p * (w * ls).sin() - w * (w * ls).cos()) / (p * p + w * w)
}

/// Builds a catalog density and rejects it if the raw perturbation leaves
/// the envelope `L sigma^delta`.
pub fn build_perturbed(spec: &PerturbedSpec) -> Result<PerturbedDensity> {
    let law = PMaxLaw::new(spec.family, spec.alpha)?;
    if !(spec.l > 0.0 && spec.l.is_finite() && spec.delta > 0.0 && spec.delta.is_finite()) {
        return invalid(format!(
            "envelope needs L > 0 and delta > 0, got L = {}, delta = {}",
            spec.l, spec.delta
        ));
    }
    let mut model = PerturbedDensity {
        law,
        perturbation: spec.perturbation,
        amplitude: spec.l,
        exponent: spec.delta,
        envelope_scale: spec.l,
        envelope_exponent: spec.delta,
        normalization: spec.normalization,
        edge: f64::INFINITY,
        ln_normalizer: 0.0,
        table: None,
    };
    if spec.perturbation == Perturbation::EnvelopeSine {
        model.table = Some(Arc::new(model.build_table()));
    }
    if let Some((sigma, ratio)) = model.first_raw_violation(ENVELOPE_GRID) {
        return Err(Error::EnvelopeViolation {
            x: law.point_at_neg_log(sigma),
            ratio,
        });
    }
    match spec.normalization {
        Normalization::Truncate => {
            model.edge = model.solve_unit_mass()?;
        }
        Normalization::Rescale { x0 } => {
            if !(x0 > 0.0 && x0 < 1.0) {
                return invalid(format!("x0 must lie in (0, 1), got {x0}"));
            }
            model.edge = -x0.ln();
            let z = model.raw_mass(model.edge)?;
            model.ln_normalizer = z.ln();
        }
    }
    Ok(model)
}

const ENVELOPE_GRID: usize = 2000;

impl PerturbedDensity {
    pub fn law(&self) -> PMaxLaw {
        self.law
    }

    pub fn perturbation(&self) -> Perturbation {
        self.perturbation
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// The same density checked against a different envelope.
    pub fn with_envelope(mut self, scale: f64, exponent: f64) -> Self {
        self.envelope_scale = scale;
        self.envelope_exponent = exponent;
        self
    }

    /// Left edge on the `sigma` scale.
    pub fn sigma_edge(&self) -> f64 {
        self.edge
    }

    /// Truncation point `x0` on the uniform scale, `e^{-s0}`.
    pub fn x0(&self) -> f64 {
        (-self.edge).exp()
    }

    /// Normalizing constant the raw density was divided by (1 when truncated).
    pub fn normalizer(&self) -> f64 {
        self.ln_normalizer.exp()
    }

    /// `g(x)` after normalization, as a function of `sigma = s(x)`.
    pub fn log_perturbation(&self, sigma: f64) -> f64 {
        self.raw_g(sigma) - self.ln_normalizer
    }

    fn raw_g(&self, sigma: f64) -> f64 {
        self.perturbation.value(sigma, self.amplitude, self.exponent)
    }

    /// `g(x)` in the original scale; `NaN` off the support.
    pub fn g_at(&self, x: f64) -> f64 {
        let sigma = self.law.neg_log_cdf(x);
        if sigma < self.edge && sigma > 0.0 {
            self.log_perturbation(sigma)
        } else {
            f64::NAN
        }
    }

    /// The bound `L s(x)^delta` in the original scale.
    pub fn envelope_at(&self, x: f64) -> f64 {
        self.envelope_scale * self.law.neg_log_cdf(x).powf(self.envelope_exponent)
    }

    fn check_grid(&self, size: usize) -> Vec<f64> {
        let size = size.max(2);
        let hi = if self.edge.is_finite() { self.edge } else { 1e4 };
        // geometric near 0 where the envelope vanishes, linear elsewhere
        let half = size / 2;
        let lo = hi * 1e-12;
        let mut pts = Vec::with_capacity(size);
        for i in 0..half {
            let u = i as f64 / half as f64;
            pts.push(lo * (hi / lo).powf(u));
        }
        let rest = size - half;
        for i in 1..=rest {
            // stop one step short of a finite edge, which is not in the support
            let frac = i as f64 / (rest + 1) as f64;
            pts.push(hi * frac);
        }
        pts.sort_by(f64::total_cmp);
        pts
    }

    fn first_raw_violation(&self, size: usize) -> Option<(f64, f64)> {
        let hi = 1e4;
        (0..size).find_map(|i| {
            let sigma = hi * 1e-12 * (1e12f64).powf(i as f64 / (size - 1) as f64);
            let ratio = self.raw_g(sigma).abs()
                / (self.envelope_scale * sigma.powf(self.envelope_exponent));
            (ratio > 1.0 + ENVELOPE_SLACK).then_some((sigma, ratio))
        })
    }

    /// Largest `|g(x)| / (L s(x)^delta)` over a grid of the support, using the
    /// normalized `g`.
    pub fn envelope_check(&self, grid_size: usize) -> Result<EnvelopeCheck> {
        if grid_size < 100 {
            return invalid(format!("envelope grid needs at least 100 points, got {grid_size}"));
        }
        let mut best = (0.0, f64::NAN);
        for sigma in self.check_grid(grid_size) {
            let env = self.envelope_scale * sigma.powf(self.envelope_exponent);
            let ratio = self.log_perturbation(sigma).abs() / env;
            if ratio > best.0 || best.1.is_nan() {
                best = (ratio, sigma);
            }
        }
        Ok(EnvelopeCheck {
            pass: best.0 <= 1.0 + ENVELOPE_SLACK,
            max_ratio: best.0,
            argmax: self.law.point_at_neg_log(best.1),
            argmax_sigma: best.1,
        })
    }

    /// `int_0^sigma e^{g_raw}`.
    fn raw_mass(&self, sigma: f64) -> Result<f64> {
        if sigma <= 0.0 {
            return Ok(0.0);
        }
        let (amp, exp) = (self.amplitude, self.exponent);
        match self.perturbation {
            Perturbation::Zero => Ok(sigma),
            Perturbation::Uniform => Ok(-(-sigma).exp_m1()),
            Perturbation::Envelope | Perturbation::EnvelopeNeg => {
                let c = if self.perturbation == Perturbation::Envelope { amp } else { -amp };
                let z = c * sigma.powf(exp);
                if z.abs() <= 8.0 {
                    Ok(sigma * power_series_mass(z, exp))
                } else {
                    self.quad_mass(sigma)
                }
            }
            Perturbation::EnvelopeSine => self.quad_mass(sigma),
        }
    }

    fn build_table(&self) -> MassTable {
        // below lo the perturbation is under 1e-17 and the first-order term
        // is exact to rounding
        let lo = (1e-17 / self.amplitude).powf(1.0 / self.exponent).max(1e-300);
        let ln_lo = lo.ln();
        let count = ((TABLE_TOP.ln() - ln_lo) / TABLE_STEP).ceil() as usize;
        let mut table = MassTable {
            ln_lo,
            cum: Vec::with_capacity(count + 1),
        };
        let g = |s: f64| self.raw_g(s).exp();
        let mut acc = lo + sine_first_order(lo, self.amplitude, self.exponent);
        table.cum.push(acc);
        for i in 0..count {
            acc += kronrod21_fixed(&g, table.node(i), table.node(i + 1));
            table.cum.push(acc);
        }
        table
    }

    fn table_mass(&self, table: &MassTable, sigma: f64) -> Option<f64> {
        if sigma <= table.lo() {
            return Some(sigma + sine_first_order(sigma, self.amplitude, self.exponent));
        }
        let i = ((sigma.ln() - table.ln_lo) / TABLE_STEP).floor() as usize;
        if i + 1 >= table.cum.len() {
            return None;
        }
        let a = table.node(i);
        let g = |s: f64| self.raw_g(s).exp();
        Some(table.cum[i] + if sigma > a { kronrod21_fixed(&g, a, sigma) } else { -kronrod21_fixed(&g, sigma, a) })
    }

    fn quad_mass(&self, sigma: f64) -> Result<f64> {
        if let Some(v) = self.table.as_deref().and_then(|t| self.table_mass(t, sigma)) {
            return Ok(v);
        }
        if sigma.is_infinite() {
            return Ok(f64::INFINITY);
        }
        // the integrand minus 1 keeps full relative accuracy for small sigma
        let opts = QuadOptions {
            abs_tol: 1e-17 * sigma,
            rel_tol: 1e-13,
            ..Default::default()
        };
        let r = integrate_with(|s| self.raw_g(s).exp_m1(), 0.0, sigma, opts)?;
        Ok(sigma + r.value)
    }

    fn solve_unit_mass(&self) -> Result<f64> {
        let total = match self.perturbation {
            Perturbation::Zero => return Ok(1.0),
            Perturbation::Uniform => return Ok(f64::INFINITY),
            Perturbation::EnvelopeNeg => {
                let d = self.exponent;
                (ln_gamma(1.0 + 1.0 / d)? - self.amplitude.ln() / d).exp()
            }
            _ => f64::INFINITY,
        };
        if total < 1.0 {
            return invalid(format!(
                "{} with L = {} has total mass {total} < 1 and cannot be truncated to a density",
                self.perturbation, self.amplitude
            ));
        }
        let mut hi = 1.0;
        while self.raw_mass(hi)? < 1.0 {
            hi *= 2.0;
            if hi > 1e6 {
                return invalid("could not bracket the unit-mass edge");
            }
        }
        invert_monotone(|s| self.raw_mass(s), |s| self.raw_g(s).exp(), 1.0, 0.0, hi)
    }

    /// `P(sigma <= s)`, equal to `1 - F(x)` at the point with `s(x) = s`.
    pub fn sigma_cdf(&self, s: f64) -> Result<f64> {
        if s >= self.edge {
            return Ok(1.0);
        }
        Ok((self.raw_mass(s)? / self.normalizer()).min(1.0))
    }

    /// `P(sigma <= s) = u`, solved for `s`.
    pub fn sigma_quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain {
                what: "sigma_quantile",
                value: u,
            });
        }
        if u == 0.0 {
            return Ok(0.0);
        }
        if u == 1.0 {
            return Ok(self.edge);
        }
        if self.perturbation == Perturbation::Uniform && self.ln_normalizer == 0.0 {
            return Ok(-(-u).ln_1p());
        }
        let mut hi = if self.edge.is_finite() { self.edge } else { 1.0 };
        while self.sigma_cdf(hi)? < u {
            hi *= 2.0;
        }
        invert_monotone(
            |s| self.sigma_cdf(s),
            |s| (self.log_perturbation(s)).exp(),
            u,
            0.0,
            hi,
        )
    }
}

/// `sum_m z^m / (m! (m delta + 1))`, so that `int_0^s e^{c t^delta} dt =
/// s * series(c s^delta)`.
fn power_series_mass(z: f64, delta: f64) -> f64 {
    let mut term = 1.0;
    let mut acc = 1.0;
    for m in 1..200 {
        term *= z / m as f64;
        let add = term / (m as f64 * delta + 1.0);
        acc += add;
        if add.abs() <= 1e-17 * acc.abs() {
            break;
        }
    }
    acc
}

/// Safeguarded Newton for an increasing `f` on `[lo, hi]` with `f(lo) <= y <= f(hi)`.
fn invert_monotone<F, D>(f: F, df: D, y: f64, mut lo: f64, mut hi: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    D: Fn(f64) -> f64,
{
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x)? - y;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let newton = x - fx / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) || hi - lo <= 1e-16 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

impl Distribution for PerturbedDensity {
    fn cdf(&self, x: f64) -> f64 {
        1.0 - self.ccdf(x)
    }

    fn ccdf(&self, x: f64) -> f64 {
        let s = self.law.neg_log_cdf(x);
        self.sigma_cdf(s).unwrap_or(f64::NAN)
    }

    fn density(&self, x: f64) -> Density {
        let s = self.law.neg_log_cdf(x);
        if !(s > 0.0 && s < self.edge) {
            return Density::interior(0.0);
        }
        let w = self.law.auxiliary(x);
        Density::interior(w * self.log_perturbation(s).exp())
    }

    fn quantile(&self, p: f64) -> f64 {
        match self.sigma_quantile(1.0 - p) {
            Ok(s) => self.law.point_at_neg_log(s),
            Err(_) => f64::NAN,
        }
    }

    fn support(&self) -> SupportInterval {
        SupportInterval::new(
            self.law.point_at_neg_log(self.edge),
            self.law.support().upper,
        )
    }

    fn ccdf_normed(&self, x: f64, c: NormingConstants) -> f64 {
        let s = self.law.neg_log_cdf_ptype(x, c.a_n, c.b_n);
        self.sigma_cdf(s).unwrap_or(f64::NAN)
    }

    fn cdf_normed(&self, x: f64, c: NormingConstants) -> f64 {
        1.0 - self.ccdf_normed(x, c)
    }

    fn ln_pdf_normed(&self, x: f64, c: NormingConstants) -> f64 {
        let s = self.law.neg_log_cdf_ptype(x, c.a_n, c.b_n);
        if !(s > 0.0 && s < self.edge) {
            return f64::NEG_INFINITY;
        }
        self.law.ln_auxiliary_ptype(x, c) + self.log_perturbation(s)
    }
}

/// A base law seen on the exponential scale of a p-max law.
pub trait SigmaModel: Sync {
    fn law(&self) -> PMaxLaw;

    /// Upper end of the support of `sigma`.
    fn sigma_edge(&self) -> f64;

    /// `P(sigma <= s)`.
    fn sigma_cdf(&self, s: f64) -> f64;

    /// Log density of `sigma` at `s`.
    fn sigma_ln_density(&self, s: f64) -> f64;
}

impl SigmaModel for PerturbedDensity {
    fn law(&self) -> PMaxLaw {
        self.law
    }
    fn sigma_edge(&self) -> f64 {
        self.edge
    }
    fn sigma_cdf(&self, s: f64) -> f64 {
        PerturbedDensity::sigma_cdf(self, s).unwrap_or(f64::NAN)
    }
    fn sigma_ln_density(&self, s: f64) -> f64 {
        if s > 0.0 && s < self.edge {
            self.log_perturbation(s)
        } else if s == 0.0 {
            -self.ln_normalizer
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Any [`Distribution`] expressed in the exponential scale of `law`.
#[derive(Debug, Clone, Copy)]
pub struct InLawScale<D> {
    pub base: D,
    pub law: PMaxLaw,
}

impl<D: Distribution + Sync> SigmaModel for InLawScale<D> {
    fn law(&self) -> PMaxLaw {
        self.law
    }
    fn sigma_edge(&self) -> f64 {
        let lo = self.base.support().lower;
        self.law.neg_log_cdf(lo)
    }
    fn sigma_cdf(&self, s: f64) -> f64 {
        self.base.ccdf(self.law.point_at_neg_log(s))
    }
    fn sigma_ln_density(&self, s: f64) -> f64 {
        let x = self.law.point_at_neg_log(s);
        // x has underflowed onto an edge, where w vanishes
        if !self.law.support().contains_open(x) {
            return f64::NEG_INFINITY;
        }
        self.base.pdf(x).ln() - self.law.auxiliary(x).ln()
    }
}

/// `P(Bin(n, q) < k)`.
pub fn binomial_cdf_below(n: u64, q: f64, k: u32) -> f64 {
    if q <= 0.0 {
        return 1.0;
    }
    if q >= 1.0 {
        return if (k as u64) > n { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    let (lq, lp) = (q.ln(), (-q).ln_1p());
    let mut ln_choose = 0.0;
    let mut acc = 0.0;
    for j in 0..(k as u64).min(n + 1) {
        if j > 0 {
            ln_choose += ((nf - j as f64 + 1.0) / j as f64).ln();
        }
        acc += (ln_choose + j as f64 * lq + (nf - j as f64) * lp).exp();
    }
    acc.min(1.0)
}

/// `log(n! / ((k-1)! (n-k)!))`.
fn ln_order_stat_constant(n: u64, k: u32) -> f64 {
    let nf = n as f64;
    let mut acc = nf.ln();
    for i in 1..k as u64 {
        acc += ((nf - i as f64) / i as f64).ln();
    }
    acc
}

fn check_order(n: u64, k: u32) -> Result<()> {
    if k < 1 || k as u64 > n {
        return Err(Error::Domain {
            what: "order statistic index k (need 1 <= k <= n)",
            value: k as f64,
        });
    }
    Ok(())
}

/// Exact law of the power-normalized k-th largest of `n` iid draws from
/// `base`: `sign(X) (|X| / A)^{1/B}` with `X` the k-th largest.
#[derive(Debug, Clone, Copy)]
pub struct ExactMaxLaw<D> {
    base: D,
    n: u64,
    norming: NormingConstants,
    k: u32,
}

impl<D: Distribution> ExactMaxLaw<D> {
    pub fn new(base: D, n: u64, norming: NormingConstants, k: u32) -> Result<Self> {
        check_order(n, k)?;
        Ok(ExactMaxLaw { base, n, norming, k })
    }

    pub fn base(&self) -> &D {
        &self.base
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn norming(&self) -> NormingConstants {
        self.norming
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        let q = self.base.ccdf_normed(x, self.norming);
        if self.k == 1 {
            // F^n, from whichever of F and 1 - F is accurate
            let lnf = if q < 0.5 {
                (-q).ln_1p()
            } else {
                self.base.cdf_normed(x, self.norming).ln()
            };
            return (self.n as f64 * lnf).exp();
        }
        binomial_cdf_below(self.n, q, self.k)
    }

    /// Density with the chain-rule factor `A B |x|^{B-1}`. At `x = 0` with
    /// `B < 1` that factor blows up; the larger one-sided limit is
    /// returned with `boundary` set.
    pub fn density(&self, x: f64) -> Density {
        if x == 0.0 && self.norming.b_n < 1.0 {
            let eps = 1e-300;
            let v = self.interior_pdf(eps).max(self.interior_pdf(-eps));
            return Density {
                value: v,
                boundary: true,
            };
        }
        Density::interior(self.interior_pdf(x))
    }

    fn interior_pdf(&self, x: f64) -> f64 {
        let c = self.norming;
        let lf = self.base.ln_pdf_normed(x, c);
        if lf == f64::NEG_INFINITY || lf.is_nan() {
            return 0.0;
        }
        let q = self.base.ccdf_normed(x, c);
        let lnf = if q < 0.5 {
            (-q).ln_1p()
        } else {
            self.base.cdf_normed(x, c).ln()
        };
        let k = self.k as f64;
        let mut ln = ln_order_stat_constant(self.n, self.k) + (self.n as f64 - k) * lnf + lf;
        if self.k > 1 {
            ln += (k - 1.0) * q.ln();
        }
        ln.exp()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.density(x).value
    }

    /// Closed support of the normalized statistic.
    pub fn support(&self) -> SupportInterval {
        let s = self.base.support();
        SupportInterval::new(self.norming.invert(s.lower), self.norming.invert(s.upper))
    }
}

/// Exact and limiting laws of `t = s(Y)` for the normalized k-th largest
/// `Y` of `n` draws.
pub struct NormalizedOrderStat<'a, M: SigmaModel + ?Sized> {
    model: &'a M,
    law: PMaxLaw,
    norming: NormingConstants,
    n: u64,
    k: u32,
    t_edge: f64,
    ln_constant: f64,
}

impl<'a, M: SigmaModel + ?Sized> NormalizedOrderStat<'a, M> {
    pub fn new(model: &'a M, norming: NormingConstants, n: u64, k: u32) -> Result<Self> {
        check_order(n, k)?;
        let law = model.law();
        let s0 = model.sigma_edge();
        let t_edge = if s0.is_finite() {
            find_t_edge(&law, norming, s0)
        } else {
            f64::INFINITY
        };
        let mut ln_constant = -ln_gamma(k as f64)?;
        for i in 1..k {
            ln_constant += (-(i as f64) / n as f64).ln_1p();
        }
        Ok(NormalizedOrderStat {
            model,
            law,
            norming,
            n,
            k,
            t_edge,
            ln_constant,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn law(&self) -> PMaxLaw {
        self.law
    }

    /// Sup of the support of the exact `t`.
    pub fn t_edge(&self) -> f64 {
        self.t_edge
    }

    /// `log(n f_sigma(phi(t)) phi'(t))`, the log of the density ratio `n f / w`
    /// of a single normalized draw against `H`.
    pub fn log_ratio(&self, t: f64) -> f64 {
        let (phi, dphi) = self.law.pushforward(t, self.norming);
        if !(dphi > 0.0) || !(phi < self.model.sigma_edge()) {
            return f64::NEG_INFINITY;
        }
        (self.n as f64).ln() + self.model.sigma_ln_density(phi) + dphi.ln()
    }

    pub fn ln_density(&self, t: f64) -> f64 {
        if !(t > 0.0) || t >= self.t_edge {
            return f64::NEG_INFINITY;
        }
        let (phi, dphi) = self.law.pushforward(t, self.norming);
        if !(dphi > 0.0) {
            return f64::NEG_INFINITY;
        }
        let q = self.model.sigma_cdf(phi);
        let nf = self.n as f64;
        let k = self.k as f64;
        let mut ln = self.ln_constant
            + (nf - k) * (-q).ln_1p()
            + nf.ln()
            + self.model.sigma_ln_density(phi)
            + dphi.ln();
        if self.k > 1 {
            ln += (k - 1.0) * (nf * q).ln();
        }
        ln
    }

    pub fn density(&self, t: f64) -> f64 {
        self.ln_density(t).exp()
    }

    /// `P(T > t)`.
    pub fn ccdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        if t >= self.t_edge {
            return 0.0;
        }
        let (phi, _) = self.law.pushforward(t, self.norming);
        binomial_cdf_below(self.n, self.model.sigma_cdf(phi), self.k)
    }

    pub fn limit_ln_density(&self, t: f64) -> f64 {
        gamma_ln_density(self.k, t)
    }

    /// `P(Gamma_k > t)`.
    pub fn limit_ccdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            1.0
        } else {
            poisson_cdf_below(self.k, t)
        }
    }
}

/// Log density of `Gamma(k, 1)`.
pub fn gamma_ln_density(k: u32, t: f64) -> f64 {
    if !(t > 0.0) {
        return if t == 0.0 && k == 1 { 0.0 } else { f64::NEG_INFINITY };
    }
    let km1 = (k - 1) as f64;
    let lg = crate::quadrature::ln_factorial((k - 1) as u64);
    if k == 1 {
        -t
    } else {
        km1 * t.ln() - t - lg
    }
}

fn find_t_edge(law: &PMaxLaw, c: NormingConstants, s0: f64) -> f64 {
    // phi is increasing in t; bracket and bisect phi(t) = s0
    let phi = |t: f64| law.pushforward(t, c).0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while phi(hi) < s0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) < s0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Draws with `stream` index `i` are generated from their own ChaCha8 stream,
/// so output does not depend on scheduling.
fn draw_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `m` draws of the normalized top-`k` vector, largest first, each from `n`
/// inverse-transform base draws.
pub fn sample_top_k<D: Distribution + Sync>(
    law: &ExactMaxLaw<D>,
    m: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if m < 1 {
        return invalid("sample count m must be at least 1");
    }
    let n = usize::try_from(law.n).map_err(|_| Error::Domain {
        what: "sample size n",
        value: law.n as f64,
    })?;
    if m.checked_mul(n).is_none() {
        return Err(Error::Domain {
            what: "m * n overflows",
            value: m as f64 * n as f64,
        });
    }
    let k = law.k as usize;
    let out = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = draw_rng(seed, i as u64);
            let mut xs: Vec<f64> = (0..n)
                .map(|_| law.base.quantile(rng.sample::<f64, _>(Open01)))
                .collect();
            // descending; the sort is stable so ties keep draw order
            xs.sort_by(|a, b| b.total_cmp(a));
            xs.truncate(k);
            xs.into_iter().map(|x| law.norming.invert(x)).collect()
        })
        .collect();
    Ok(out)
}

/// Partial sums `Gamma_1 < ... < Gamma_k` of standard exponentials.
pub fn exponential_spacings<R: Rng + ?Sized>(k: u32, rng: &mut R) -> Vec<f64> {
    let mut acc = 0.0;
    (0..k)
        .map(|_| {
            acc += rng.sample::<f64, _>(Exp1);
            acc
        })
        .collect()
}

/// `m` seeded draws of `(Gamma_1, ..., Gamma_k)`.
pub fn sample_spacings(k: u32, m: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..m)
        .into_par_iter()
        .map(|i| exponential_spacings(k, &mut draw_rng(seed, i as u64)))
        .collect()
}

/// `m` draws from the joint limit law of the top `k`: the j-th component is
/// the point `x` with `-log H(x) = Gamma_j`.
pub fn sample_limit_top_k(law: &PMaxLaw, k: u32, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k < 1 {
        return invalid("k must be at least 1");
    }
    Ok(sample_spacings(k, m, seed)
        .into_iter()
        .map(|g| g.into_iter().map(|s| law.point_at_neg_log(s)).collect())
        .collect())
}

/// Convenience for the family used by most examples.
pub fn uniform_family_law() -> PMaxLaw {
    PMaxLaw::with_family(Family::Two, Some(1.0)).expect("alpha = 1 is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::Uniform01;
    use crate::glogpd::GLogPareto;
    use crate::laws::NormingSource;
    use crate::quadrature::integrate;

    fn spec(fam: u8, pert: Perturbation, l: f64, delta: f64) -> PerturbedSpec {
        PerturbedSpec {
            family: fam,
            alpha: (fam != 3 && fam != 6).then_some(1.0),
            l,
            delta,
            perturbation: pert,
            normalization: Normalization::Truncate,
        }
    }

    #[test]
    fn zero_perturbation_is_the_glogpd() {
        let m = build_perturbed(&spec(3, Perturbation::Zero, 1.0, 1.0)).unwrap();
        let w = GLogPareto::new(3, None).unwrap();
        assert_eq!(m.sigma_edge(), 1.0);
        for &x in &[1.0, 1.5, 2.0, 10.0, 1e6] {
            assert!((m.pdf(x) - w.pdf(x)).abs() < 1e-15);
            assert!((Distribution::cdf(&m, x) - w.cdf(x)).abs() < 1e-15);
        }
        let chk = m.envelope_check(500).unwrap();
        assert!(chk.pass);
        assert_eq!(chk.max_ratio, 0.0);
    }

    #[test]
    fn uniform_catalog_entry() {
        let m = build_perturbed(&spec(2, Perturbation::Uniform, 1.0, 1.0)).unwrap();
        for &x in &[0.01, 0.2, 0.5, 0.9, 0.999] {
            assert!((m.pdf(x) - 1.0).abs() < 1e-14, "{x}");
            assert!((m.g_at(x) - x.ln()).abs() < 1e-14);
            assert!((Distribution::cdf(&m, x) - x).abs() < 1e-14);
        }
        let chk = m.envelope_check(1000).unwrap();
        assert!(chk.pass);
        assert!((chk.max_ratio - 1.0).abs() < 1e-12);
        assert_eq!(m.x0(), 0.0);
    }

    #[test]
    fn halving_the_envelope_doubles_the_ratio() {
        let m = build_perturbed(&spec(2, Perturbation::Envelope, 0.8, 0.5)).unwrap();
        let chk = m.with_envelope(0.4, 0.5).envelope_check(1000).unwrap();
        assert!(!chk.pass);
        assert!((chk.max_ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_sine_passes_and_violations_are_rejected() {
        let m = build_perturbed(&spec(2, Perturbation::EnvelopeSine, 1.0, 0.5)).unwrap();
        assert!(m.envelope_check(1000).unwrap().pass);
        let bad = build_perturbed(&spec(2, Perturbation::Uniform, 1.0, 0.5));
        assert!(matches!(bad, Err(Error::EnvelopeViolation { .. })));
    }

    #[test]
    fn catalog_densities_have_unit_mass() {
        for pert in Perturbation::ALL {
            let delta = if pert == Perturbation::Uniform { 1.0 } else { 0.5 };
            for fam in 1..=6 {
                let m = build_perturbed(&spec(fam, pert, 0.7_f64.max(delta), delta)).unwrap();
                let s0 = m.sigma_edge();
                let upper = if s0.is_finite() { s0 } else { f64::INFINITY };
                let r = integrate(|s| m.sigma_ln_density(s).exp(), 0.0, upper, 1e-12).unwrap();
                assert!((r.value - 1.0).abs() < 1e-8, "{pert} fam {fam}: {r:?}");
                assert!(m.envelope_check(500).unwrap().pass, "{pert}");
            }
        }
    }

    #[test]
    fn x_space_density_integrates_to_one() {
        for fam in [2, 6] {
            let m = build_perturbed(&spec(fam, Perturbation::EnvelopeNeg, 0.5, 0.5)).unwrap();
            let sup = Distribution::support(&m);
            let r = integrate(|x| m.pdf(x), sup.lower, sup.upper, 1e-12).unwrap();
            assert!((r.value - 1.0).abs() < 1e-8, "{r:?} {sup:?}");
        }
    }

    #[test]
    fn sine_mass_table_matches_direct_quadrature() {
        let m = build_perturbed(&spec(2, Perturbation::EnvelopeSine, 0.9, 0.5)).unwrap();
        for &s in &[1e-40, 1e-20, 1e-6, 0.003, 0.2, 0.77, 1.0, 3.5] {
            let direct = integrate_with(
                |t| m.raw_g(t).exp_m1(),
                0.0,
                s,
                QuadOptions { abs_tol: 1e-18 * s, rel_tol: 1e-13, ..Default::default() },
            )
            .unwrap();
            let tabled = m.raw_mass(s).unwrap();
            assert!((tabled - (s + direct.value)).abs() < 1e-13 * s, "{s}: {tabled} vs {}", s + direct.value);
        }
    }

    #[test]
    fn sigma_quantile_inverts_cdf() {
        let m = build_perturbed(&spec(1, Perturbation::EnvelopeSine, 0.6, 0.5)).unwrap();
        for &u in &[1e-9, 0.01, 0.3, 0.77, 0.999] {
            let s = m.sigma_quantile(u).unwrap();
            assert!((m.sigma_cdf(s).unwrap() - u).abs() < 1e-12 * u.max(1e-3), "{u}");
        }
    }

    #[test]
    fn rescale_mode_reports_normalizer() {
        let mut sp = spec(2, Perturbation::Envelope, 0.5, 0.5);
        sp.normalization = Normalization::Rescale { x0: 0.6 };
        let m = build_perturbed(&sp).unwrap();
        assert!((m.x0() - 0.6).abs() < 1e-15);
        let s0 = -(0.6f64).ln();
        assert!(m.normalizer() > s0);
        assert!((m.sigma_cdf(s0 * 0.999_999_999).unwrap() - 1.0).abs() < 1e-8);
        // the shift by log Z breaks g -> 0 at r(H)
        assert!(!m.envelope_check(500).unwrap().pass);
    }

    #[test]
    fn exact_max_uniform_identity() {
        for &n in &[1u64, 7, 100, 10_000] {
            let law = ExactMaxLaw::new(Uniform01, n, NormingConstants::new(1.0, 1.0 / n as f64).unwrap(), 1)
                .unwrap();
            // rounding x^{1/n} costs about n ulps once raised back to the n
            for &x in &[0.01, 0.25, 0.5, 0.99] {
                assert!((law.cdf(x) - x).abs() < 1e-11, "n={n} x={x}");
                assert!((law.pdf(x) - 1.0).abs() < 1e-11, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn exact_max_is_max_stable_for_h() {
        for fam in Family::ALL {
            for &a in &[0.5, 2.0] {
                let h = PMaxLaw::with_family(fam, fam.has_alpha().then_some(a)).unwrap();
                for &n in &[2u64, 10, 1000] {
                    let c = h.norming(n, NormingSource::Derived);
                    let law = ExactMaxLaw::new(h, n, c, 1).unwrap();
                    for &p in &[0.05, 0.3, 0.6, 0.95] {
                        let x = h.quantile(p);
                        assert!((law.cdf(x) - p).abs() < 1e-12, "{h} n={n} p={p}");
                    }
                }
            }
        }
    }

    #[test]
    fn pareto_max_example() {
        let w3 = GLogPareto::new(3, None).unwrap();
        let law = ExactMaxLaw::new(w3, 50, NormingConstants::new(50.0, 1.0).unwrap(), 1).unwrap();
        let v = law.cdf(1.0);
        assert!((v - 0.98f64.powi(50)).abs() < 1e-14);
        assert!((v - 0.3642).abs() < 1e-4);
    }

    #[test]
    fn kth_reduces_and_integrates() {
        let w3 = GLogPareto::new(3, None).unwrap();
        let c = NormingConstants::new(20.0, 1.0).unwrap();
        let k1 = ExactMaxLaw::new(w3, 20, c, 1).unwrap();
        let law = ExactMaxLaw::new(w3, 20, c, 3).unwrap();
        let sup = law.support();
        let r = integrate(|x| law.pdf(x), sup.lower, f64::INFINITY, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-8, "{r:?}");
        let via_k1 = ExactMaxLaw::new(w3, 20, c, 1).unwrap();
        for &x in &[0.06, 0.5, 1.0, 4.0] {
            assert!((via_k1.cdf(x) - binomial_cdf_below(20, w3.ccdf(20.0 * x), 1)).abs() < 1e-14);
            assert!((k1.cdf(x) - via_k1.cdf(x)).abs() < 1e-14);
        }
        assert!(ExactMaxLaw::new(w3, 3, c, 4).is_err());
    }

    #[test]
    fn kth_at_n_is_the_minimum() {
        let n = 6;
        let law = ExactMaxLaw::new(Uniform01, n, NormingConstants::IDENTITY, n as u32).unwrap();
        for &x in &[0.1f64, 0.4, 0.8] {
            let direct = 1.0 - (1.0 - x).powi(n as i32);
            assert!((law.cdf(x) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn t_scale_density_matches_beta_form() {
        let m = build_perturbed(&spec(3, Perturbation::Zero, 1.0, 1.0)).unwrap();
        let h = m.law();
        let (n, k) = (30u64, 3u32);
        let os = NormalizedOrderStat::new(&m, h.derive_norming(n), n, k).unwrap();
        assert!((os.t_edge() - n as f64).abs() < 1e-9);
        let r = integrate(|t| os.density(t), 0.0, os.t_edge(), 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        // k-th smallest of n uniforms on (0,1), scaled by n
        let t = 2.5;
        let u = t / n as f64;
        let beta = (ln_order_stat_constant(n, k) + 2.0 * u.ln() + 27.0 * (1.0 - u).ln()).exp() / n as f64;
        assert!((os.density(t) - beta).abs() < 1e-13);
        let cdf_direct = 1.0 - binomial_cdf_below(n, u, k);
        assert!((1.0 - os.ccdf(t) - cdf_direct).abs() < 1e-14);
    }

    #[test]
    fn samples_are_deterministic_and_ordered() {
        let law = ExactMaxLaw::new(Uniform01, 25, NormingConstants::new(1.0, 1.0 / 25.0).unwrap(), 2).unwrap();
        let a = sample_top_k(&law, 200, 42).unwrap();
        let b = sample_top_k(&law, 200, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|d| d.len() == 2 && d[0] >= d[1]));
        assert_ne!(a, sample_top_k(&law, 200, 43).unwrap());
    }

    fn ks_gap(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let m = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                ((i as f64 + 1.0) / m - f).abs().max((f - i as f64 / m).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn sampled_maximum_is_uniform() {
        let n = 40;
        let m = 4000;
        let law = ExactMaxLaw::new(Uniform01, n, NormingConstants::new(1.0, 1.0 / n as f64).unwrap(), 1).unwrap();
        let xs: Vec<f64> = sample_top_k(&law, m, 7).unwrap().into_iter().map(|d| d[0]).collect();
        assert!(ks_gap(xs, |x| x) < 1.36 / (m as f64).sqrt());
    }

    #[test]
    fn limit_sampler_marginals() {
        let h = PMaxLaw::new(5, Some(1.5)).unwrap();
        let m = 4000;
        let draws = sample_limit_top_k(&h, 2, m, 11).unwrap();
        for j in 1..=2u32 {
            let xs: Vec<f64> = draws.iter().map(|d| d[j as usize - 1]).collect();
            let gap = ks_gap(xs, |x| h.kth_limit_cdf(j, x).unwrap());
            assert!(gap < 1.36 / (m as f64).sqrt(), "j={j} gap={gap}");
        }
        let u = sample_limit_top_k(&uniform_family_law(), 3, 50, 1).unwrap();
        assert!(u.iter().all(|d| d.windows(2).all(|w| w[0] > w[1]) && d[0] < 1.0 && d[2] > 0.0));
    }

    #[test]
    fn overflow_guard() {
        let law = ExactMaxLaw::new(Uniform01, u64::MAX / 2, NormingConstants::IDENTITY, 1).unwrap();
        assert!(sample_top_k(&law, 4, 1).is_err());
    }
}
