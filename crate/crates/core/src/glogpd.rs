//! Generalized log-Pareto distributions `W = 1 + log H` and their von
//! Mises-type parameterization.
//!
//! The six `W_{i,alpha}` are written out directly from their piecewise
//! forms, independently of [`crate::laws`], so that `W = 1 + log H` can be
//! checked rather than assumed.
//!
//! The von Mises pair is
//!
//! ```text
//! V1(x) = 1 - (1 + g log x)^{-1/g},      g >= 0, x >= 1
//! V2(x) = 1 - (1 - g log(-x))^{-1/g},    g <= 0, -1 <= x
//! ```
//!
//! with `g = 0` read as the Pareto `W3` and uniform `W6` limits. The
//! regain identities recovering `W_1, W_2, W_4, W_5` from `V1`/`V2` are
//! implemented in the form that holds numerically; see [`regain_glogpd`].

use serde::{Deserialize, Serialize};

use crate::distribution::{Density, Distribution, SupportInterval};
use crate::error::{invalid, Error, Result};
use crate::laws::{validate_alpha, Family, NormingConstants, PMaxLaw};

/// Below this `|gamma|` the von Mises forms switch to their closed-form limit.
pub const GAMMA_ZERO_CUTOFF: f64 = 1e-8;

/// A generalized log-Pareto distribution `W_{i,alpha}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GLogPareto {
    family: Family,
    alpha: Option<f64>,
}

impl std::fmt::Display for GLogPareto {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.alpha {
            Some(a) => write!(f, "w{}(alpha={})", self.family, a),
            None => write!(f, "w{}", self.family),
        }
    }
}

impl GLogPareto {
    pub fn new(family: u8, alpha: Option<f64>) -> Result<Self> {
        Self::with_family(Family::from_index(family)?, alpha)
    }

    pub fn with_family(family: Family, alpha: Option<f64>) -> Result<Self> {
        validate_alpha(family, alpha)?;
        Ok(GLogPareto { family, alpha })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    fn a(&self) -> f64 {
        self.alpha.unwrap_or(1.0)
    }

    /// Closed support `[lower, upper]`.
    pub fn support(&self) -> SupportInterval {
        let e = std::f64::consts::E;
        match self.family {
            Family::One => SupportInterval::new(e, f64::INFINITY),
            Family::Two => SupportInterval::new(e.recip(), 1.0),
            Family::Three => SupportInterval::new(1.0, f64::INFINITY),
            Family::Four => SupportInterval::new(-e.recip(), 0.0),
            Family::Five => SupportInterval::new(-e, -1.0),
            Family::Six => SupportInterval::new(-1.0, 0.0),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let a = self.a();
        let e = std::f64::consts::E;
        match self.family {
            Family::One => {
                if x < e {
                    0.0
                } else {
                    1.0 - x.ln().powf(-a)
                }
            }
            Family::Two => {
                if x < e.recip() {
                    0.0
                } else if x < 1.0 {
                    1.0 - (-x.ln()).powf(a)
                } else {
                    1.0
                }
            }
            Family::Three => {
                if x <= 1.0 {
                    0.0
                } else {
                    1.0 - 1.0 / x
                }
            }
            Family::Four => {
                if x < -e.recip() {
                    0.0
                } else if x < 0.0 {
                    1.0 - (-(-x).ln()).powf(-a)
                } else {
                    1.0
                }
            }
            Family::Five => {
                if x < -e {
                    0.0
                } else if x < -1.0 {
                    1.0 - (-x).ln().powf(a)
                } else {
                    1.0
                }
            }
            Family::Six => {
                if x < -1.0 {
                    0.0
                } else if x <= 0.0 {
                    1.0 + x
                } else {
                    1.0
                }
            }
        }
    }

    /// Density with the same endpoint convention as the p-max laws: an
    /// infinite endpoint limit is reported as 0 with `boundary` set.
    pub fn density(&self, x: f64) -> Density {
        let a = self.a();
        let sup = self.support();
        if x.is_nan() || x < sup.lower || x > sup.upper {
            return Density::interior(0.0);
        }
        let v = match self.family {
            Family::One => a / x * x.ln().powf(-(a + 1.0)),
            Family::Two => {
                if x == 1.0 {
                    // (-log x)^{a-1} at the right edge
                    return endpoint(a);
                }
                a / x * (-x.ln()).powf(a - 1.0)
            }
            Family::Three => {
                if x == 1.0 {
                    return Density::interior(0.0);
                }
                1.0 / (x * x)
            }
            Family::Four => {
                if x == 0.0 {
                    return Density::singular_boundary();
                }
                -a / x * (-(-x).ln()).powf(-(a + 1.0))
            }
            Family::Five => {
                if x == -1.0 {
                    return endpoint(a);
                }
                -a / x * (-x).ln().powf(a - 1.0)
            }
            Family::Six => 1.0,
        };
        if v.is_finite() {
            Density::interior(v)
        } else {
            Density::singular_boundary()
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.density(x).value
    }

    /// The matching glogPd of a p-max law, together with the largest
    /// pointwise gap `|1 + log H(x) - W(x)|` over a grid of the region
    /// `{x : H(x) >= 1/e}`.
    pub fn from_pmax(law: &PMaxLaw) -> (GLogPareto, GridCheck) {
        let w = GLogPareto {
            family: law.family(),
            alpha: law.alpha(),
        };
        let points = 2001;
        let mut max_gap: f64 = 0.0;
        for i in 0..points {
            // s = -log H runs over [0, 1] exactly on the glogPd region.
            let s = i as f64 / (points - 1) as f64;
            let x = law.point_at_neg_log(s);
            if !x.is_finite() {
                continue;
            }
            let lhs = 1.0 + law.cdf(x).ln();
            max_gap = max_gap.max((lhs - w.cdf(x)).abs());
        }
        (w, GridCheck { points, max_gap })
    }
}

impl GLogPareto {
    fn law(&self) -> PMaxLaw {
        PMaxLaw::with_family(self.family, self.alpha).expect("validated at construction")
    }
}

impl Distribution for GLogPareto {
    fn cdf(&self, x: f64) -> f64 {
        GLogPareto::cdf(self, x)
    }

    fn ccdf(&self, x: f64) -> f64 {
        self.law().neg_log_cdf(x).min(1.0)
    }

    fn density(&self, x: f64) -> Density {
        GLogPareto::density(self, x)
    }

    fn quantile(&self, p: f64) -> f64 {
        if p.is_nan() {
            return f64::NAN;
        }
        let sup = GLogPareto::support(self);
        if p <= 0.0 {
            return sup.lower;
        }
        if p >= 1.0 {
            return sup.upper;
        }
        self.law().point_at_neg_log(1.0 - p)
    }

    fn support(&self) -> SupportInterval {
        GLogPareto::support(self)
    }

    fn cdf_normed(&self, x: f64, c: NormingConstants) -> f64 {
        1.0 - self.ccdf_normed(x, c)
    }

    fn ccdf_normed(&self, x: f64, c: NormingConstants) -> f64 {
        self.law().neg_log_cdf_ptype(x, c.a_n, c.b_n).min(1.0)
    }

    fn ln_pdf_normed(&self, x: f64, c: NormingConstants) -> f64 {
        let law = self.law();
        if law.neg_log_cdf_ptype(x, c.a_n, c.b_n) > 1.0 {
            return f64::NEG_INFINITY;
        }
        law.ln_auxiliary_ptype(x, c)
    }
}

fn endpoint(a: f64) -> Density {
    if a > 1.0 {
        Density::interior(0.0)
    } else if a == 1.0 {
        Density::interior(1.0)
    } else {
        Density::singular_boundary()
    }
}

/// Result of a pointwise grid comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCheck {
    pub points: usize,
    pub max_gap: f64,
}

/// Branch of the von Mises-type parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    V1,
    V2,
}

impl std::str::FromStr for Branch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v1" | "V1" => Ok(Branch::V1),
            "v2" | "V2" => Ok(Branch::V2),
            other => invalid(format!("unknown branch {other:?}")),
        }
    }
}

/// `V1` with `gamma >= 0` or `V2` with `gamma <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VonMises {
    branch: Branch,
    gamma: f64,
}

impl std::fmt::Display for VonMises {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let b = match self.branch {
            Branch::V1 => "v1",
            Branch::V2 => "v2",
        };
        write!(f, "{b}(gamma={})", self.gamma)
    }
}

impl VonMises {
    pub fn new(branch: Branch, gamma: f64) -> Result<Self> {
        let ok = gamma.is_finite()
            && match branch {
                Branch::V1 => gamma >= 0.0,
                Branch::V2 => gamma <= 0.0,
            };
        if !ok {
            return invalid(format!("gamma {gamma} has the wrong sign for {branch:?}"));
        }
        Ok(VonMises { branch, gamma })
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn is_limit(&self) -> bool {
        self.gamma.abs() < GAMMA_ZERO_CUTOFF
    }

    /// Closed support `[lower, upper]`.
    pub fn support(&self) -> SupportInterval {
        match self.branch {
            Branch::V1 => SupportInterval::new(1.0, f64::INFINITY),
            Branch::V2 => {
                if self.is_limit() {
                    SupportInterval::new(-1.0, 0.0)
                } else {
                    SupportInterval::new(-1.0, -(1.0 / self.gamma).exp())
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.branch {
            Branch::V1 => {
                if x.is_nan() {
                    f64::NAN
                } else if x <= 1.0 {
                    0.0
                } else {
                    self.v1_from_log(x.ln())
                }
            }
            Branch::V2 => {
                if x.is_nan() {
                    f64::NAN
                } else if x < -1.0 {
                    0.0
                } else if x >= 0.0 {
                    1.0
                } else {
                    self.v2_from_log((-x).ln())
                }
            }
        }
    }

    /// `V1` at the point with `log x = l`, clamped to `[0, 1]`.
    fn v1_from_log(&self, l: f64) -> f64 {
        if l <= 0.0 {
            return 0.0;
        }
        if self.is_limit() {
            return -(-l).exp_m1();
        }
        let g = self.gamma;
        -(-(g * l).ln_1p() / g).exp_m1()
    }

    /// `V2` at the point with `log(-x) = l`, clamped to `[0, 1]`.
    fn v2_from_log(&self, l: f64) -> f64 {
        if l > 0.0 {
            return 0.0;
        }
        if self.is_limit() {
            return -l.exp_m1();
        }
        let g = -self.gamma;
        let inner = g * l;
        if inner <= -1.0 {
            return 1.0;
        }
        -(inner.ln_1p() / g).exp_m1()
    }

    pub fn density(&self, x: f64) -> Density {
        let sup = self.support();
        if x.is_nan() || x < sup.lower || x > sup.upper {
            return Density::interior(0.0);
        }
        let v = match self.branch {
            Branch::V1 => {
                let l = x.ln();
                if self.is_limit() {
                    1.0 / (x * x)
                } else {
                    let g = self.gamma;
                    (-(1.0 / g + 1.0) * (g * l).ln_1p()).exp() / x
                }
            }
            Branch::V2 => {
                if self.is_limit() {
                    1.0
                } else {
                    let g = -self.gamma;
                    let inner = g * (-x).ln();
                    if inner <= -1.0 {
                        // right edge: (1 + g l)^{1/g - 1}
                        return if g < 1.0 {
                            Density::interior(0.0)
                        } else if g == 1.0 {
                            Density::interior(-1.0 / x)
                        } else {
                            Density::singular_boundary()
                        };
                    }
                    -((1.0 / g - 1.0) * inner.ln_1p()).exp() / x
                }
            }
        };
        if v.is_finite() {
            Density::interior(v)
        } else {
            Density::singular_boundary()
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.density(x).value
    }
}

/// Evaluates the regain identity for `W_i` from the von Mises pair:
///
/// ```text
/// W_{1, 1/g}(x)  = V1_g( e^{-1/g} x^{1/g} ),        g > 0
/// W_{2,-1/g}(x)  = V2_g( -e^{1/g} x^{1/g} ),        g < 0
/// W_{4, 1/g}(x)  = V1_g( e^{-1/g} (-x)^{-1/g} ),    g > 0
/// W_{5,-1/g}(x)  = V2_g( -e^{1/g} (-x)^{-1/g} ),    g < 0
/// ```
///
/// outside the glogPd support the value is the 0/1 extension.
pub fn regain_glogpd(family: u8, gamma: f64, x: f64) -> Result<f64> {
    let fam = Family::from_index(family)?;
    let admissible = match fam {
        Family::One | Family::Four => gamma > 0.0,
        Family::Two | Family::Five => gamma < 0.0,
        _ => false,
    };
    if !admissible || !gamma.is_finite() {
        return Err(Error::Domain {
            what: "regain_glogpd gamma for this family",
            value: gamma,
        });
    }
    let target = regained_spec(fam, gamma)?;
    let sup = target.support();
    if x.is_nan() {
        return Err(Error::Domain {
            what: "regain_glogpd",
            value: x,
        });
    }
    if x < sup.lower {
        return Ok(0.0);
    }
    if x >= sup.upper {
        return Ok(1.0);
    }
    let g = gamma;
    Ok(match fam {
        Family::One => VonMises::new(Branch::V1, g)?.v1_from_log((x.ln() - 1.0) / g),
        Family::Two => VonMises::new(Branch::V2, g)?.v2_from_log((1.0 + x.ln()) / g),
        Family::Four => VonMises::new(Branch::V1, g)?.v1_from_log((-1.0 - (-x).ln()) / g),
        Family::Five => VonMises::new(Branch::V2, g)?.v2_from_log((1.0 - (-x).ln()) / g),
        _ => unreachable!(),
    })
}

/// The glogPd recovered by [`regain_glogpd`] for `(family, gamma)`.
pub fn regained_spec(family: Family, gamma: f64) -> Result<GLogPareto> {
    let alpha = match family {
        Family::One | Family::Four => 1.0 / gamma,
        Family::Two | Family::Five => -1.0 / gamma,
        _ => return invalid("only families 1, 2, 4, 5 are regained from V1/V2"),
    };
    GLogPareto::with_family(family, Some(alpha))
}

/// A naive reading of the identities, kept for comparison:
/// `W_2` via `V1(e^{-1/g} x^{-1/g})` with `g > 0`, and `W_4`, `W_5` both via
/// `V2(-e^{1/g} (-x)^{1/g})` with `g < 0`. Only the `W_1` line agrees with
/// [`regain_glogpd`].
pub fn regain_glogpd_naive(family: u8, gamma: f64, x: f64) -> Result<f64> {
    let fam = Family::from_index(family)?;
    let g = gamma;
    let bad = || Error::Domain {
        what: "regain_glogpd_naive gamma",
        value: g,
    };
    match fam {
        Family::One | Family::Two if g > 0.0 => {
            let v = VonMises::new(Branch::V1, g)?;
            let l = match fam {
                Family::One => (x.ln() - 1.0) / g,
                _ => (-1.0 - x.ln()) / g,
            };
            Ok(if x > 0.0 { v.v1_from_log(l) } else { 0.0 })
        }
        Family::Four | Family::Five if g < 0.0 => {
            let v = VonMises::new(Branch::V2, g)?;
            Ok(if x < 0.0 {
                v.v2_from_log((1.0 + (-x).ln()) / g)
            } else {
                1.0
            })
        }
        _ => Err(bad()),
    }
}

/// Something whose density can be tabulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensitySource {
    GLogPareto(GLogPareto),
    VonMises(VonMises),
}

impl DensitySource {
    pub fn label(&self) -> String {
        match self {
            DensitySource::GLogPareto(w) => w.to_string(),
            DensitySource::VonMises(v) => v.to_string(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            DensitySource::GLogPareto(w) => w.pdf(x),
            DensitySource::VonMises(v) => v.pdf(x),
        }
    }
}

/// The curves of the standard glogPd density figure: `v1` for
/// `gamma in {0, 0.5, 1, 2}` and `v2` for `gamma in {0, -0.5, -1, -2}`.
pub fn fig1_sources() -> Vec<DensitySource> {
    let mut out = Vec::new();
    for g in [0.0, 0.5, 1.0, 2.0] {
        out.push(DensitySource::VonMises(VonMises { branch: Branch::V1, gamma: g }));
    }
    for g in [0.0, -0.5, -1.0, -2.0] {
        out.push(DensitySource::VonMises(VonMises { branch: Branch::V2, gamma: g }));
    }
    out
}

/// One `(label, x, density)` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub label: String,
    pub x: f64,
    pub density: f64,
}

/// Density values of several sources over a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub rows: Vec<DensityRow>,
}

/// Tabulates every source over `grid`, source-major.
pub fn density_table(sources: &[DensitySource], grid: &[f64]) -> Result<DensityTable> {
    if grid.is_empty() {
        return invalid("density grid is empty");
    }
    if sources.is_empty() {
        return invalid("no density sources given");
    }
    let mut rows = Vec::with_capacity(sources.len() * grid.len());
    for src in sources {
        let label = src.label();
        for &x in grid {
            rows.push(DensityRow {
                label: label.clone(),
                x,
                density: src.pdf(x),
            });
        }
    }
    Ok(DensityTable { rows })
}

/// `points` equally spaced values from `start` to `end` inclusive.
pub fn linear_grid(start: f64, end: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(start < end) {
        return invalid(format!(
            "grid needs start < end and at least 2 points, got [{start}, {end}] x {points}"
        ));
    }
    let step = (end - start) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| if i + 1 == points { end } else { start + step * i as f64 })
        .collect())
}

impl DensityTable {
    /// CSV with header `label,x,density`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["label", "x", "density"])?;
        for r in &self.rows {
            w.write_record([r.label.clone(), r.x.to_string(), r.density.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One gnuplot data block per label, separated by two blank lines so
    /// that `index` selects a curve.
    pub fn write_gnuplot<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        let mut current: Option<&str> = None;
        for r in &self.rows {
            if current != Some(r.label.as_str()) {
                if current.is_some() {
                    writeln!(out, "\n")?;
                }
                writeln!(out, "# {}", r.label)?;
                writeln!(out, "# x density")?;
                current = Some(r.label.as_str());
            }
            writeln!(out, "{} {}", r.x, r.density)?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for rec in rd.deserialize() {
            rows.push(rec?);
        }
        Ok(DensityTable { rows })
    }
}
