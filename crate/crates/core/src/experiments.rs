//! Distance-versus-n experiments, log-log rate fits and report output.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::{
    exact_vs_limit, hellinger_bound_eq23, thm22_rate, thm33_bound, thm34_rate, BoundReport,
    DistanceKind, McOptions,
};
use crate::error::{invalid, Error, Result};
use crate::laws::{NormingSource, PMaxLaw};
use crate::models::{build_perturbed, Normalization, Perturbation, PerturbedDensity, PerturbedSpec};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "PMAXEVT_SEED";

pub const DEFAULT_N_GRID: [u64; 7] = [10, 31, 100, 316, 1000, 3162, 10_000];

/// The base distribution whose maxima are studied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSpec {
    pub perturbation: Perturbation,
    #[serde(rename = "L", default = "one")]
    pub l: f64,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default)]
    pub normalization: Normalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Universal constant `c` of the Hellinger bounds.
    #[serde(default = "one")]
    pub c: f64,
    /// Constant `D*` of the rate formula.
    #[serde(default = "one")]
    pub d_star: f64,
    /// Truncation point on the uniform scale; defaults per model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            enabled: true,
            c: 1.0,
            d_star: 1.0,
            x0: None,
            mc_samples: default_mc_samples(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
    GnuplotText,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "gnuplot" | "gnuplot-text" => Ok(ReportFormat::GnuplotText),
            other => invalid(format!("unknown report format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: ReportFormat,
}

/// A full experiment description, usually read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub base: BaseSpec,
    pub family: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub norming: NormingSource,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<u64>,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<u32>,
    #[serde(default = "default_distances")]
    pub distances: Vec<DistanceKind>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub bound: BoundConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_mc_samples() -> usize {
    20_000
}
fn default_n_grid() -> Vec<u64> {
    DEFAULT_N_GRID.to_vec()
}
fn default_k_list() -> Vec<u32> {
    vec![1]
}
fn default_distances() -> Vec<DistanceKind> {
    vec![DistanceKind::Hellinger]
}
fn default_tol() -> f64 {
    1e-10
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(family: u8, alpha: Option<f64>, base: BaseSpec) -> Self {
        ExperimentConfig {
            name: String::new(),
            base,
            family,
            alpha,
            norming: NormingSource::Derived,
            n_grid: default_n_grid(),
            k_list: default_k_list(),
            distances: default_distances(),
            tol: default_tol(),
            bound: BoundConfig::default(),
            seed: 0,
            output: OutputConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Replaces the seed with a parsed override such as the value of
    /// [`SEED_ENV`].
    pub fn with_seed_override(mut self, value: Option<&str>) -> Result<Self> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("{SEED_ENV}={v:?} is not a u64")))?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.k_list.is_empty() || self.distances.is_empty() {
            return invalid("n_grid, k_list and distances must be non-empty");
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("n_grid must be strictly increasing");
        }
        let kmax = *self.k_list.iter().max().unwrap_or(&1);
        if self.k_list.contains(&0) {
            return invalid("k values start at 1");
        }
        if self.n_grid[0] < kmax as u64 {
            return invalid(format!("every n must be at least max k = {kmax}"));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return invalid(format!("tol must lie in (0, 1), got {}", self.tol));
        }
        if self.bound.enabled && !(self.bound.c > 0.0 && self.bound.d_star > 0.0) {
            return invalid("bound constants must be positive");
        }
        self.model().map(|_| ())
    }

    pub fn perturbed_spec(&self) -> PerturbedSpec {
        PerturbedSpec {
            family: self.family,
            alpha: self.alpha,
            l: self.base.l,
            delta: self.base.delta,
            perturbation: self.base.perturbation,
            normalization: self.base.normalization,
        }
    }

    pub fn model(&self) -> Result<PerturbedDensity> {
        build_perturbed(&self.perturbed_spec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Converged,
    NotConverged,
    Failed,
}

/// One `(n, k, kind)` cell of a rate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: u64,
    pub k: u32,
    pub kind: DistanceKind,
    pub value: f64,
    pub error: f64,
    pub status: RowStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundReport>,
}

/// Least-squares line through `(log n, log distance)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

impl RateFit {
    /// `None` with fewer than two points or a degenerate abscissa.
    pub fn fit(points: Vec<(f64, f64)>) -> Option<RateFit> {
        if points.len() < 2 {
            return None;
        }
        let m = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
        let my = points.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
        if sxx == 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
        Some(RateFit {
            slope,
            intercept: my - slope * mx,
            r_squared,
            points,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    pub kind: DistanceKind,
    pub k: u32,
    pub fit: Option<RateFit>,
}

/// Smallest constants that would make the bounds dominate every converged
/// row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Smallest universal constant `c` in the Hellinger bound.
    pub c_min: f64,
    /// Smallest `D*` in the single-maximum rate `D n^{-min(delta,1)}`.
    pub d_star_min: f64,
    /// Smallest `D` in `D((k/n)^delta sqrt(k) + k/n)`.
    pub kth_d_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResults {
    pub name: String,
    pub seed: u64,
    pub rows: Vec<RateRow>,
    pub fits: Vec<FitEntry>,
    pub calibration: Calibration,
}

impl RateResults {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.status == RowStatus::Converged)
    }

    pub fn fit_for(&self, kind: DistanceKind, k: u32) -> Option<&RateFit> {
        self.fits
            .iter()
            .find(|f| f.kind == kind && f.k == k)
            .and_then(|f| f.fit.as_ref())
    }
}

fn compute_row(cfg: &ExperimentConfig, model: &PerturbedDensity, law: PMaxLaw, n: u64, k: u32, kind: DistanceKind) -> RateRow {
    let norming = law.norming(n, cfg.norming);
    let mut row = RateRow {
        n,
        k,
        kind,
        value: f64::NAN,
        error: f64::NAN,
        status: RowStatus::Failed,
        message: None,
        bound: None,
    };
    match exact_vs_limit(model, norming, n, k, kind, cfg.tol) {
        Ok(d) => {
            row.value = d.value;
            row.error = d.error_estimate;
            row.status = if d.converged {
                RowStatus::Converged
            } else {
                RowStatus::NotConverged
            };
        }
        Err(e) => {
            row.message = Some(e.to_string());
            return row;
        }
    }
    if cfg.bound.enabled {
        let b = if k == 1 && kind == DistanceKind::Hellinger {
            hellinger_bound_eq23(model, norming, n, cfg.bound.x0, cfg.bound.c, cfg.tol)
        } else {
            let mc = McOptions {
                samples: cfg.bound.mc_samples,
                seed: cfg.seed,
            };
            thm33_bound(model, norming, n, k, cfg.bound.x0, cfg.bound.c, mc, cfg.tol)
        };
        match b {
            Ok(b) => {
                if !b.converged && row.status == RowStatus::Converged {
                    row.status = RowStatus::NotConverged;
                }
                if b.mc_flagged {
                    row.message = Some("joint-term Monte Carlo error above 10%".into());
                }
                row.bound = Some(b);
            }
            Err(e) => {
                row.status = RowStatus::Failed;
                row.message = Some(format!("bound: {e}"));
            }
        }
    }
    row
}

/// Every configured `(n, k, distance)` cell, computed in parallel and
/// returned in the order n, then k, then distance.
pub fn rate_experiment(cfg: &ExperimentConfig) -> Result<RateResults> {
    cfg.validate()?;
    let model = cfg.model()?;
    let law = model.law();
    let mut cells = Vec::new();
    for &n in &cfg.n_grid {
        for &k in &cfg.k_list {
            for &kind in &cfg.distances {
                cells.push((n, k, kind));
            }
        }
    }
    let rows: Vec<RateRow> = cells
        .par_iter()
        .map(|&(n, k, kind)| compute_row(cfg, &model, law, n, k, kind))
        .collect();

    let mut fits = Vec::new();
    for &k in &cfg.k_list {
        for &kind in &cfg.distances {
            let points = rows
                .iter()
                .filter(|r| {
                    r.k == k
                        && r.kind == kind
                        && r.status == RowStatus::Converged
                        && r.value > 0.0
                        && r.value >= 10.0 * r.error
                })
                .map(|r| ((r.n as f64).ln(), r.value.ln()))
                .collect();
            fits.push(FitEntry {
                kind,
                k,
                fit: RateFit::fit(points),
            });
        }
    }
    let calibration = calibrate(cfg, &rows)?;
    Ok(RateResults {
        name: cfg.name.clone(),
        seed: cfg.seed,
        rows,
        fits,
        calibration,
    })
}

fn calibrate(cfg: &ExperimentConfig, rows: &[RateRow]) -> Result<Calibration> {
    let mut cal = Calibration {
        c_min: 0.0,
        d_star_min: 0.0,
        kth_d_min: 0.0,
    };
    let (l, delta) = (cfg.base.l, cfg.base.delta);
    for r in rows.iter().filter(|r| r.status == RowStatus::Converged) {
        if let Some(b) = &r.bound {
            let root = (b.integral_term + b.tail_term + b.joint_term.unwrap_or(0.0)).sqrt();
            let c = (r.value - root).max(0.0) * r.n as f64 / r.k as f64;
            cal.c_min = cal.c_min.max(c);
        }
        if r.k == 1 {
            // the rate is linear in sqrt(D*)
            let unit = thm22_rate(l, delta, r.n, 1.0)?;
            cal.d_star_min = cal.d_star_min.max((r.value / unit).powi(2));
        }
        let unit = thm34_rate(r.k, r.n, delta.min(1.0), 1.0)?;
        cal.kth_d_min = cal.kth_d_min.max(r.value / unit);
    }
    Ok(cal)
}

const CSV_HEADER: [&str; 9] = [
    "n",
    "k",
    "kind",
    "value",
    "error",
    "bound_total",
    "bound_integral",
    "bound_tail",
    "bound_joint",
];

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e6)`.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e6).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn write_csv<W: Write>(res: &RateResults, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &res.rows {
        let b = r.bound.as_ref();
        w.write_record([
            r.n.to_string(),
            r.k.to_string(),
            r.kind.to_string(),
            fmt_num(r.value),
            fmt_num(r.error),
            opt(b.map(|b| b.total)),
            opt(b.map(|b| b.integral_term)),
            opt(b.map(|b| b.tail_term)),
            opt(b.and_then(|b| b.joint_term)),
        ])?;
    }
    let mut out = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_footer(res, &mut out)?;
    Ok(())
}

fn write_footer<W: Write>(res: &RateResults, out: &mut W) -> Result<()> {
    for f in &res.fits {
        match &f.fit {
            Some(fit) => writeln!(
                out,
                "# slope kind={} k={} slope={} intercept={} r_squared={} points={}",
                f.kind,
                f.k,
                fmt_num(fit.slope),
                fmt_num(fit.intercept),
                fmt_num(fit.r_squared),
                fit.points.len()
            )?,
            None => writeln!(out, "# slope kind={} k={} slope= points=0", f.kind, f.k)?,
        }
    }
    for r in res.rows.iter().filter(|r| r.status != RowStatus::Converged) {
        let status = match r.status {
            RowStatus::NotConverged => "not-converged",
            _ => "failed",
        };
        writeln!(out, "# status n={} k={} kind={} {}", r.n, r.k, r.kind, status)?;
    }
    let c = &res.calibration;
    writeln!(
        out,
        "# calibration c_min={} d_star_min={} kth_d_min={}",
        fmt_num(c.c_min),
        fmt_num(c.d_star_min),
        fmt_num(c.kth_d_min)
    )?;
    Ok(())
}

fn write_gnuplot<W: Write>(res: &RateResults, out: &mut W) -> Result<()> {
    let mut first = true;
    for f in &res.fits {
        if !first {
            writeln!(out, "\n")?;
        }
        first = false;
        writeln!(out, "# kind={} k={}", f.kind, f.k)?;
        if let Some(fit) = &f.fit {
            writeln!(out, "# fit slope={} intercept={}", fmt_num(fit.slope), fmt_num(fit.intercept))?;
        }
        writeln!(out, "# n value error bound_total")?;
        for r in res.rows.iter().filter(|r| r.kind == f.kind && r.k == f.k) {
            let bt = r.bound.as_ref().map_or(f64::NAN, |b| b.total);
            writeln!(out, "{} {} {} {}", r.n, fmt_num(r.value), fmt_num(r.error), fmt_num(bt))?;
        }
    }
    Ok(())
}

/// Writes `res` in the given format.
pub fn report_emit<W: Write>(res: &RateResults, format: ReportFormat, mut out: W) -> Result<()> {
    match format {
        ReportFormat::Csv => write_csv(res, out),
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, res)?;
            writeln!(out)?;
            Ok(())
        }
        ReportFormat::GnuplotText => write_gnuplot(res, &mut out),
    }
}

/// [`report_emit`] into a file.
pub fn report_emit_to_path(res: &RateResults, format: ReportFormat, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    report_emit(res, format, &mut buf)?;
    buf.flush()?;
    Ok(())
}

/// A row read back from the CSV report.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub n: u64,
    pub k: u32,
    pub kind: DistanceKind,
    pub value: f64,
    pub error: f64,
    pub bound_total: Option<f64>,
    pub bound_integral: Option<f64>,
    pub bound_tail: Option<f64>,
    pub bound_joint: Option<f64>,
}

/// Parses a CSV report into its rows and `#` footer lines.
pub fn parse_csv_report(text: &str) -> Result<(Vec<CsvRow>, Vec<String>)> {
    let footer = text
        .lines()
        .filter(|l| l.starts_with('#'))
        .map(str::to_owned)
        .collect();
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rd.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return invalid(format!("unexpected CSV header {headers:?}"));
    }
    let rows = rd.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?;
    Ok((rows, footer))
}
