//! Hellinger, total variation and Kolmogorov distances, and the computable
//! parts of the Hellinger and variational bounds for power-normalized maxima.
//!
//! Hellinger distance is `(int (sqrt f - sqrt g)^2)^{1/2}` without the usual
//! factor 1/2, so it ranges over `[0, sqrt 2]`.
//!
//! Exact-versus-limit distances and the bounds are evaluated in `t = s(Y)`,
//! where the limit of the k-th largest is `Gamma(k, 1)` for every family;
//! see [`crate::models`].

use serde::{Deserialize, Serialize};

use crate::distribution::SupportInterval;
use crate::error::{invalid, Error, Result};
use crate::laws::{poisson_cdf_below, NormingConstants, PMaxLaw};
use crate::models::{gamma_ln_density, sample_spacings, NormalizedOrderStat, SigmaModel};
use crate::quadrature::{gamma_function, integrate_with, IntegrationResult, QuadOptions};

/// Mass tolerance for the input densities of [`hellinger`] and friends.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Default Monte Carlo sample count for the joint term.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    Hellinger,
    TotalVariation,
    Kolmogorov,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 3] = [
        DistanceKind::Hellinger,
        DistanceKind::TotalVariation,
        DistanceKind::Kolmogorov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Hellinger => "hellinger",
            DistanceKind::TotalVariation => "total_variation",
            DistanceKind::Kolmogorov => "kolmogorov",
        }
    }
}

impl std::fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DistanceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hellinger" => Ok(DistanceKind::Hellinger),
            "tv" | "total_variation" => Ok(DistanceKind::TotalVariation),
            "ks" | "kolmogorov" => Ok(DistanceKind::Kolmogorov),
            other => invalid(format!("unknown distance {other:?}")),
        }
    }
}

/// Computable parts of an upper bound; `total = sqrt(integral + tail +
/// |joint|) + universal_constant_term`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub integral_term: f64,
    pub tail_term: f64,
    /// Absolute value of the Monte Carlo joint term; `None` for single
    /// maxima.
    pub joint_term: Option<f64>,
    pub joint_term_signed: Option<f64>,
    pub joint_std_error: Option<f64>,
    pub universal_constant_term: f64,
    pub c: f64,
    pub total: f64,
    /// Truncation point on the uniform scale and its image `t0 = -n log x0`.
    pub x0: f64,
    pub t0: f64,
    pub integral_error: f64,
    pub converged: bool,
    /// Joint-term standard error above 10% of its magnitude.
    pub mc_flagged: bool,
    /// The tail involved `H_0`, taken to be 0.
    pub h0_convention: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub kind: DistanceKind,
    pub value: f64,
    pub error_estimate: f64,
    /// Sample size and order; 0 for plain density pairs.
    pub n: u64,
    pub k: u32,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundReport>,
}

impl DistanceReport {
    fn plain(kind: DistanceKind, value: f64, error_estimate: f64, converged: bool) -> Self {
        DistanceReport {
            kind,
            value,
            error_estimate,
            n: 0,
            k: 0,
            converged,
            bound: None,
        }
    }
}

fn opts(tol: f64) -> QuadOptions {
    QuadOptions {
        abs_tol: tol * tol,
        rel_tol: tol,
        ..Default::default()
    }
}

/// Splits the union of `support` into pieces on which neither density jumps
/// at an interior edge.
fn pieces(support: &[SupportInterval]) -> Result<Vec<(f64, f64)>> {
    if support.is_empty() {
        return invalid("support union is empty");
    }
    let mut cuts: Vec<f64> = Vec::new();
    for s in support {
        if s.lower.is_nan() || s.upper.is_nan() || s.lower >= s.upper {
            return invalid(format!("bad support interval [{}, {}]", s.lower, s.upper));
        }
        cuts.push(s.lower);
        cuts.push(s.upper);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let inside = |a: f64, b: f64| {
        let mid = match (a.is_finite(), b.is_finite()) {
            (true, true) => 0.5 * (a + b),
            (true, false) => a + 1.0,
            (false, true) => b - 1.0,
            (false, false) => 0.0,
        };
        support.iter().any(|s| s.contains_open(mid))
    };
    Ok(cuts
        .windows(2)
        .filter(|w| inside(w[0], w[1]))
        .map(|w| (w[0], w[1]))
        .collect())
}

fn integrate_pieces(f: &dyn Fn(f64) -> f64, parts: &[(f64, f64)], tol: f64) -> Result<IntegrationResult> {
    let mut out = IntegrationResult {
        value: 0.0,
        error_estimate: 0.0,
        subdivisions: 0,
        converged: true,
    };
    for &(a, b) in parts {
        let r = integrate_with(f, a, b, opts(tol))?;
        out.value += r.value;
        out.error_estimate += r.error_estimate;
        out.subdivisions += r.subdivisions;
        out.converged &= r.converged;
    }
    Ok(out)
}

fn check_mass(f: &dyn Fn(f64) -> f64, parts: &[(f64, f64)], tol: f64, which: &str) -> Result<()> {
    let m = integrate_pieces(f, parts, tol)?;
    if (m.value - 1.0).abs() > MASS_TOLERANCE {
        return invalid(format!("{which} density has mass {} on the given support", m.value));
    }
    Ok(())
}

/// `sqrt(I)` with error `e` on `I` turned into an error on the root.
fn root_error(i: f64, e: f64) -> f64 {
    (i + e).sqrt() - (i - e).max(0.0).sqrt()
}

/// Hellinger distance between two densities over a union of intervals.
pub fn hellinger(
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
    support: &[SupportInterval],
    tol: f64,
) -> Result<DistanceReport> {
    let parts = pieces(support)?;
    check_mass(f, &parts, tol, "first")?;
    check_mass(g, &parts, tol, "second")?;
    let r = integrate_pieces(
        &|x| {
            let d = f(x).sqrt() - g(x).sqrt();
            d * d
        },
        &parts,
        tol,
    )?;
    let i = r.value.max(0.0);
    Ok(DistanceReport::plain(
        DistanceKind::Hellinger,
        i.sqrt(),
        root_error(i, r.error_estimate),
        r.converged,
    ))
}

/// `1/2 int |f - g|`.
pub fn total_variation(
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
    support: &[SupportInterval],
    tol: f64,
) -> Result<DistanceReport> {
    let parts = pieces(support)?;
    check_mass(f, &parts, tol, "first")?;
    check_mass(g, &parts, tol, "second")?;
    let d = |x: f64| f(x) - g(x);
    let cut: Vec<(f64, f64)> = parts
        .iter()
        .flat_map(|&(a, b)| {
            let c = sign_change_cuts(&d, a, b);
            c.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()
        })
        .collect();
    let r = integrate_pieces(&|x| d(x).abs(), &cut, tol)?;
    Ok(DistanceReport::plain(
        DistanceKind::TotalVariation,
        0.5 * r.value,
        0.5 * r.error_estimate,
        r.converged,
    ))
}

/// Scan points per piece when looking for crossings of two densities.
const SIGN_SCAN: usize = 256;

/// `[a, ..., b]` with the sign changes of `d` found on a scan grid in
/// between. Kronrod error estimates miss a kink in `|d|` that sits near a
/// panel edge, so `|d|` is integrated between crossings.
fn sign_change_cuts(d: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Vec<f64> {
    let mut cuts = vec![a];
    let mut prev: Option<(f64, f64)> = None;
    for i in 1..SIGN_SCAN {
        let x = piece_point(a, b, i as f64 / SIGN_SCAN as f64);
        let v = d(x);
        if !v.is_finite() || v == 0.0 {
            continue;
        }
        if let Some((xp, vp)) = prev {
            if vp.signum() != v.signum() {
                let (mut lo, mut hi) = (xp, x);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if d(mid).signum() == vp.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                cuts.push(0.5 * (lo + hi));
            }
        }
        prev = Some((x, v));
    }
    cuts.push(b);
    cuts.dedup();
    cuts
}

/// Maps `u in [0, 1]` onto a piece, rationally for infinite ends.
fn piece_point(a: f64, b: f64, u: f64) -> f64 {
    match (a.is_finite(), b.is_finite()) {
        (true, true) => a + (b - a) * u,
        (true, false) => a + u / (1.0 - u),
        (false, true) => b - (1.0 - u) / u,
        (false, false) => (u - 0.5) / (u * (1.0 - u)),
    }
}

/// Largest `|F - G|` over a grid of a function of one variable, refined by
/// golden-section search around the best grid cell.
fn sup_abs_on_grid(d: &dyn Fn(f64) -> f64, grid: &[f64]) -> (f64, f64) {
    let mut best = (0.0, 0.0);
    let mut at = 0usize;
    for (i, &x) in grid.iter().enumerate() {
        let v = d(x).abs();
        if v > best.0 {
            best = (v, x);
            at = i;
        }
    }
    if grid.len() < 3 {
        return best;
    }
    let lo = grid[at.saturating_sub(1)];
    let hi = grid[(at + 1).min(grid.len() - 1)];
    let (mut a, mut b) = (lo, hi);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut e = a + phi * (b - a);
    let (mut fc, mut fe) = (d(c).abs(), d(e).abs());
    for _ in 0..100 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc > fe {
            b = e;
            e = c;
            fe = fc;
            c = b - phi * (b - a);
            fc = d(c).abs();
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + phi * (b - a);
            fe = d(e).abs();
        }
    }
    for (v, x) in [(fc, c), (fe, e)] {
        if v > best.0 {
            best = (v, x);
        }
    }
    best
}

/// `sup |F - G|` over a grid of `grid` points per piece plus local
/// refinement. The error estimate is the gain from the refinement step.
pub fn kolmogorov(
    cdf_f: &dyn Fn(f64) -> f64,
    cdf_g: &dyn Fn(f64) -> f64,
    support: &[SupportInterval],
    grid: usize,
) -> Result<DistanceReport> {
    if grid < 3 {
        return invalid("kolmogorov grid needs at least 3 points");
    }
    let parts = pieces(support)?;
    let d = |x: f64| cdf_f(x) - cdf_g(x);
    let mut best: f64 = 0.0;
    let mut coarse: f64 = 0.0;
    for (a, b) in parts {
        let pts: Vec<f64> = (1..grid)
            .map(|i| piece_point(a, b, i as f64 / grid as f64))
            .collect();
        coarse = coarse.max(pts.iter().map(|&x| d(x).abs()).fold(0.0, f64::max));
        best = best.max(sup_abs_on_grid(&d, &pts).0);
    }
    Ok(DistanceReport::plain(
        DistanceKind::Kolmogorov,
        best,
        best - coarse,
        true,
    ))
}

/// Beyond this many units of `t` past `k`, the Gamma tail is below 1e-17.
fn t_split(k: u32) -> f64 {
    40.0 + 2.0 * k as f64
}

/// Distance between the exact law of the normalized k-th largest of `n`
/// draws from `model` and its p-max limit.
pub fn exact_vs_limit<M: SigmaModel + ?Sized>(
    model: &M,
    norming: NormingConstants,
    n: u64,
    k: u32,
    kind: DistanceKind,
    tol: f64,
) -> Result<DistanceReport> {
    let os = NormalizedOrderStat::new(model, norming, n, k)?;
    let edge = os.t_edge();
    let split = t_split(k);
    let mut ranges = vec![(0.0, edge.min(split))];
    if edge > split {
        ranges.push((split, edge));
    }
    let tail = if edge.is_finite() { os.limit_ccdf(edge) } else { 0.0 };
    let (value, error, converged) = match kind {
        DistanceKind::Hellinger | DistanceKind::TotalVariation => {
            let hell = kind == DistanceKind::Hellinger;
            let integrand = |t: f64| {
                let lp = os.ln_density(t);
                let lg = os.limit_ln_density(t);
                if lp == f64::NEG_INFINITY {
                    return if hell { lg.exp() } else { 0.5 * lg.exp() };
                }
                if lg == f64::NEG_INFINITY {
                    return if hell { lp.exp() } else { 0.5 * lp.exp() };
                }
                // written around the limit density to keep relative accuracy
                let half = 0.5 * (lp - lg);
                if hell {
                    let e = half.exp_m1();
                    lg.exp() * e * e
                } else {
                    0.5 * lg.exp() * (2.0 * half).exp_m1().abs()
                }
            };
            let mut i = if hell { tail } else { 0.5 * tail };
            let mut e = 0.0;
            let mut ok = true;
            let sign = |t: f64| os.ln_density(t) - os.limit_ln_density(t);
            for &(a, b) in &ranges {
                if b <= a {
                    continue;
                }
                // Hellinger integrates H^2, so tol^2 there matches tol on TV
                let (o, cuts) = if hell {
                    (opts(tol), vec![a, b])
                } else {
                    let o = QuadOptions { abs_tol: tol * 1e-2, ..opts(tol) };
                    (o, sign_change_cuts(&sign, a, b))
                };
                for w in cuts.windows(2) {
                    let r = integrate_with(integrand, w[0], w[1], o)?;
                    i += r.value;
                    e += r.error_estimate;
                    ok &= r.converged;
                }
            }
            if hell {
                (i.sqrt(), root_error(i, e), ok)
            } else {
                (i, e, ok)
            }
        }
        DistanceKind::Kolmogorov => {
            let d = |t: f64| os.ccdf(t) - os.limit_ccdf(t);
            let hi = edge.min(split);
            let pts = 4000;
            let mut grid: Vec<f64> = (1..pts)
                .map(|i| hi * (i as f64 / pts as f64).powi(2))
                .collect();
            if edge.is_finite() && edge <= split {
                grid.push(edge);
            }
            let coarse = grid.iter().map(|&t| d(t).abs()).fold(0.0, f64::max);
            let (v, _) = sup_abs_on_grid(&d, &grid);
            (v, v - coarse, true)
        }
    };
    Ok(DistanceReport {
        kind,
        value,
        error_estimate: error,
        n,
        k,
        converged,
        bound: None,
    })
}

/// `e^x - 1 - x`, accurate for small `x`.
fn excess(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        x2 * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)))
    } else {
        x.exp_m1() - x
    }
}

/// Integral of `nf/w - 1 - log(nf/w)` against `dH_j` for `j = 1..=k`, on
/// `(0, t0)` in `t`, given `log(nf/w)` as a function of `t`.
fn integral_terms(lr: &dyn Fn(f64) -> f64, k: u32, t0: f64, tol: f64) -> Result<IntegrationResult> {
    let integrand = |t: f64| {
        let l = lr(t);
        if !l.is_finite() {
            return f64::NAN;
        }
        let v = excess(l);
        debug_assert!(v >= 0.0, "t - 1 - log t < 0 at t = {t}");
        let weight: f64 = (1..=k).map(|j| gamma_ln_density(j, t).exp()).sum();
        v * weight
    };
    let opts = QuadOptions {
        abs_tol: tol * tol,
        rel_tol: tol,
        ..Default::default()
    };
    let split = t_split(k).min(t0);
    let mut r = integrate_with(integrand, 0.0, split, opts).map_err(domain_from_nan)?;
    if t0 > split {
        let rest = integrate_with(integrand, split, t0, opts).map_err(domain_from_nan)?;
        r.value += rest.value;
        r.error_estimate += rest.error_estimate;
        r.subdivisions += rest.subdivisions;
        r.converged &= rest.converged;
    }
    Ok(r)
}

fn domain_from_nan(e: Error) -> Error {
    match e {
        Error::NonFinite { x, .. } => Error::Domain {
            what: "log(nf/w) undefined (nf/w <= 0) at t",
            value: x,
        },
        other => other,
    }
}

fn check_bound_args(n: u64, x0: f64, c: f64) -> Result<()> {
    if n < 1 {
        return invalid("n must be at least 1");
    }
    if !(x0 > 0.0 && x0 < 1.0) {
        return invalid(format!("x0 must lie in (0, 1), got {x0}"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return invalid(format!("universal constant must be positive, got {c}"));
    }
    Ok(())
}

/// Hellinger bound for the normalized maximum given `log(nf/w)` on the
/// `t` scale: `(int_0^{t0} (nf/w - 1 - log(nf/w)) e^{-t} dt + 2H(x_{0,n}) -
/// H(x_{0,n}) log H(x_{0,n}))^{1/2} + c/n`, where `x_{0,n} = x0^n` on the
/// uniform scale, i.e. `t0 = -n log x0`.
pub fn eq23_from_log_ratio(
    log_ratio: &dyn Fn(f64) -> f64,
    n: u64,
    x0: f64,
    c: f64,
    tol: f64,
) -> Result<BoundReport> {
    check_bound_args(n, x0, c)?;
    let t0 = -(n as f64) * x0.ln();
    let r = integral_terms(log_ratio, 1, t0, tol)?;
    let tail = (-t0).exp() * (2.0 + t0);
    let ct = c / n as f64;
    Ok(BoundReport {
        integral_term: r.value,
        tail_term: tail,
        joint_term: None,
        joint_term_signed: None,
        joint_std_error: None,
        universal_constant_term: ct,
        c,
        total: (r.value + tail).sqrt() + ct,
        x0,
        t0,
        integral_error: r.error_estimate,
        converged: r.converged,
        mc_flagged: false,
        h0_convention: false,
    })
}

/// Default truncation point: 0.6, moved inside the model's support when its
/// edge `e^{-s0}` is higher.
pub fn default_x0<M: SigmaModel + ?Sized>(model: &M) -> f64 {
    let edge = model.sigma_edge();
    if edge.is_finite() {
        0.6f64.max((-0.5 * edge).exp())
    } else {
        0.6
    }
}

/// [`eq23_from_log_ratio`] for the normalized maximum of a model.
pub fn hellinger_bound_eq23<M: SigmaModel + ?Sized>(
    model: &M,
    norming: NormingConstants,
    n: u64,
    x0: Option<f64>,
    c: f64,
    tol: f64,
) -> Result<BoundReport> {
    let os = NormalizedOrderStat::new(model, norming, n, 1)?;
    let x0 = x0.unwrap_or_else(|| default_x0(model));
    eq23_from_log_ratio(&|t| os.log_ratio(t), n, x0, c, tol)
}

/// [`eq23_from_log_ratio`] for an already normalized density `f` in the
/// original scale of `law`; `x0` here is a point of that scale.
pub fn hellinger_bound_eq23_density(
    f: &dyn Fn(f64) -> f64,
    law: &PMaxLaw,
    n: u64,
    x0: f64,
    c: f64,
    tol: f64,
) -> Result<BoundReport> {
    let s0 = law.neg_log_cdf(x0);
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::Domain {
            what: "x0 outside the open support",
            value: x0,
        });
    }
    let nf = n as f64;
    let lr = |t: f64| {
        let x = law.point_at_neg_log(t);
        (nf * f(x)).ln() - law.auxiliary(x).ln()
    };
    // express the point through the uniform scale: t0 = -n log u0
    let u0 = (-s0 / nf).exp();
    eq23_from_log_ratio(&lr, n, u0, c, tol)
}

/// Monte Carlo settings for the joint term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

/// Bound on the variational distance between the exact joint law of the
/// normalized top `k` and its limit: integral terms against `dH_j`, tail
/// terms `H_k(x_{0,n}) + k H_{k-1}(x_{0,n})` with `H_0 = 0`, and the joint
/// term by Monte Carlo over exponential spacings, composed as
/// `sqrt(integral + tail + |joint|) + c k / n`.
#[allow(clippy::too_many_arguments)]
pub fn thm33_bound<M: SigmaModel + ?Sized>(
    model: &M,
    norming: NormingConstants,
    n: u64,
    k: u32,
    x0: Option<f64>,
    c: f64,
    mc: McOptions,
    tol: f64,
) -> Result<BoundReport> {
    let os = NormalizedOrderStat::new(model, norming, n, k)?;
    let x0 = x0.unwrap_or_else(|| default_x0(model));
    check_bound_args(n, x0, c)?;
    let t0 = -(n as f64) * x0.ln();
    let lr = |t: f64| os.log_ratio(t);
    let r = integral_terms(&lr, k, t0, tol)?;
    let below_k_minus_1 = if k > 1 { poisson_cdf_below(k - 1, t0) } else { 0.0 };
    let tail = poisson_cdf_below(k, t0) + k as f64 * below_k_minus_1;
    let (joint, se) = if k > 1 {
        joint_term_mc(&lr, k, t0, mc)?
    } else {
        (0.0, 0.0)
    };
    let ct = c * k as f64 / n as f64;
    let mc_flagged = se > 0.1 * joint.abs() && se > 0.0;
    Ok(BoundReport {
        integral_term: r.value,
        tail_term: tail,
        joint_term: Some(joint.abs()),
        joint_term_signed: Some(joint),
        joint_std_error: Some(se),
        universal_constant_term: ct,
        c,
        total: (r.value + tail + joint.abs()).sqrt() + ct,
        x0,
        t0,
        integral_error: r.error_estimate,
        converged: r.converged,
        mc_flagged,
        h0_convention: k == 1,
    })
}

/// Mean and standard error of `sum_{j<k} log(nf/w)(Gamma_j) 1{Gamma_j < t0 <
/// Gamma_k}`.
fn joint_term_mc(lr: &dyn Fn(f64) -> f64, k: u32, t0: f64, mc: McOptions) -> Result<(f64, f64)> {
    if mc.samples < 2 {
        return invalid("joint term needs at least 2 Monte Carlo samples");
    }
    let draws = sample_spacings(k, mc.samples, mc.seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for g in &draws {
        let last = g[k as usize - 1];
        let mut v = 0.0;
        if last > t0 {
            for &gj in &g[..k as usize - 1] {
                if gj < t0 {
                    v += lr(gj);
                }
            }
        }
        sum += v;
        sum_sq += v * v;
    }
    let m = mc.samples as f64;
    let mean = sum / m;
    let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok((mean, (var / m).sqrt()))
}

/// The closed form of the joint term's expectation:
/// `P(Poisson(t0) <= k - 2) int_0^{t0} log(nf/w)`.
pub fn joint_term_expectation(lr: &dyn Fn(f64) -> f64, k: u32, t0: f64, tol: f64) -> Result<f64> {
    if k < 2 {
        return Ok(0.0);
    }
    let r = integrate_with(lr, 0.0, t0, QuadOptions { abs_tol: tol, rel_tol: tol, ..Default::default() })?;
    Ok(poisson_cdf_below(k - 1, t0) * r.value)
}

/// `D n^{-min(delta, 1)}` with `D = sqrt(D*/2) L sqrt(Gamma(2 delta + 1))`.
pub fn thm22_rate(l: f64, delta: f64, n: u64, d_star: f64) -> Result<f64> {
    if !(l > 0.0 && delta > 0.0 && d_star > 0.0) || n < 1 {
        return invalid("rate arguments must be positive");
    }
    let d = (d_star / 2.0).sqrt() * l * gamma_function(2.0 * delta + 1.0)?.sqrt();
    Ok(d * (n as f64).powf(-delta.min(1.0)))
}

/// `D ((k/n)^delta sqrt(k) + k/n)`.
pub fn thm34_rate(k: u32, n: u64, delta: f64, d: f64) -> Result<f64> {
    if k < 1 || k as u64 > n {
        return Err(Error::Domain {
            what: "thm34_rate k (need 1 <= k <= n)",
            value: k as f64,
        });
    }
    if !(delta > 0.0 && d > 0.0) {
        return invalid("rate arguments must be positive");
    }
    let r = k as f64 / n as f64;
    Ok(d * (r.powf(delta) * (k as f64).sqrt() + r))
}
