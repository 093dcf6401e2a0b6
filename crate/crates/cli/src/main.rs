use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pmaxevt_core::distances::{self, McOptions};
use pmaxevt_core::experiments::{self, ExperimentConfig, ReportFormat, SEED_ENV};
use pmaxevt_core::glogpd::{self, Branch, GLogPareto, VonMises};
use pmaxevt_core::models::{self, InLawScale, SigmaModel};
use pmaxevt_core::{
    build_perturbed, DistanceKind, Distribution, Error, ExactMaxLaw, Normalization, NormingSource,
    PMaxLaw, Perturbation, PerturbedSpec, Result, Uniform01,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "pmaxevt", version, about = "p-max stable laws, glogPds and convergence rates of power-normalized maxima")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a p-max stable law.
    Law {
        #[command(subcommand)]
        op: LawOp,
    },
    /// Generalized log-Pareto and von Mises-type densities.
    Glogpd {
        #[command(subcommand)]
        op: GlogpdOp,
    },
    /// Base distributions and their power-normalized order statistics.
    Model {
        #[command(subcommand)]
        op: ModelOp,
    },
    /// Distances between exact and limiting laws, and their bounds.
    Distance {
        #[command(subcommand)]
        op: DistanceOp,
    },
    /// Run a rate experiment from a JSON config.
    Rate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the output path of the config; stdout when neither is set.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Same as `glogpd fig1`.
    Fig1(Fig1Args),
}

#[derive(Args, Clone, Copy)]
struct LawArgs {
    #[arg(long)]
    family: u8,
    #[arg(long)]
    alpha: Option<f64>,
}

impl LawArgs {
    fn law(self) -> Result<PMaxLaw> {
        PMaxLaw::new(self.family, self.alpha)
    }
}

#[derive(Subcommand)]
enum LawOp {
    Cdf {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    Pdf {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    Quantile {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        p: f64,
    },
    /// Limit df of the k-th largest.
    Kcdf {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    Norming {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        n: u64,
        #[arg(long, value_enum, default_value_t = SourceArg::Derived)]
        source: SourceArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Paper,
    Derived,
}

impl From<SourceArg> for NormingSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Paper => NormingSource::Paper,
            SourceArg::Derived => NormingSource::Derived,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BranchArg {
    V1,
    V2,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Gnuplot,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    GnuplotText,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
            FormatArg::GnuplotText => ReportFormat::GnuplotText,
        }
    }
}

#[derive(Args)]
struct Fig1Args {
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    grid_start: f64,
    #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
    grid_end: f64,
    #[arg(long, default_value_t = 501)]
    points: usize,
    /// Written to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    format: TableFormat,
}

#[derive(Subcommand)]
enum GlogpdOp {
    Cdf {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    Pdf {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    Vonmises {
        #[arg(long, value_enum)]
        branch: BranchArg,
        #[arg(long, allow_hyphen_values = true)]
        gamma: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    /// Density tables of the standard von Mises curves.
    Fig1(Fig1Args),
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum BaseArg {
    Zero,
    Envelope,
    EnvelopeNeg,
    EnvelopeSine,
    Uniform,
    /// The limit law itself.
    Law,
    /// The uniform law on (0, 1), whatever the family.
    UnitUniform,
}

#[derive(Args, Clone)]
struct BaseArgs {
    #[arg(long, value_enum, default_value_t = BaseArg::Zero)]
    base: BaseArg,
    #[command(flatten)]
    law: LawArgs,
    /// Envelope scale.
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Truncate at this uniform-scale point and rescale instead of solving
    /// for the unit-mass edge.
    #[arg(long)]
    rescale_x0: Option<f64>,
    #[arg(long, value_enum, default_value_t = SourceArg::Derived)]
    norming: SourceArg,
}

enum Base {
    Perturbed(pmaxevt_core::PerturbedDensity),
    Law(PMaxLaw),
    UnitUniform(PMaxLaw),
}

impl BaseArgs {
    fn build(&self) -> Result<Base> {
        let law = self.law.law()?;
        let perturbation = match self.base {
            BaseArg::Zero => Perturbation::Zero,
            BaseArg::Envelope => Perturbation::Envelope,
            BaseArg::EnvelopeNeg => Perturbation::EnvelopeNeg,
            BaseArg::EnvelopeSine => Perturbation::EnvelopeSine,
            BaseArg::Uniform => Perturbation::Uniform,
            BaseArg::Law => return Ok(Base::Law(law)),
            BaseArg::UnitUniform => return Ok(Base::UnitUniform(law)),
        };
        let spec = PerturbedSpec {
            family: self.law.family,
            alpha: self.law.alpha,
            l: self.l,
            delta: self.delta,
            perturbation,
            normalization: match self.rescale_x0 {
                Some(x0) => Normalization::Rescale { x0 },
                None => Normalization::Truncate,
            },
        };
        Ok(Base::Perturbed(build_perturbed(&spec)?))
    }
}

impl Base {
    fn law(&self) -> PMaxLaw {
        match self {
            Base::Perturbed(p) => p.law(),
            Base::Law(l) | Base::UnitUniform(l) => *l,
        }
    }

    fn distribution(&self) -> &(dyn Distribution + Sync) {
        match self {
            Base::Perturbed(p) => p,
            Base::Law(l) => l,
            Base::UnitUniform(_) => &Uniform01,
        }
    }

    fn with_sigma<T>(&self, f: impl FnOnce(&dyn SigmaModel) -> T) -> T {
        match self {
            Base::Perturbed(p) => f(p),
            Base::Law(l) => f(&InLawScale { base: *l, law: *l }),
            Base::UnitUniform(l) => f(&InLawScale { base: Uniform01, law: *l }),
        }
    }
}

#[derive(Subcommand)]
enum ModelOp {
    /// Df of the power-normalized k-th largest of n draws.
    Exactcdf {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
    /// Seeded draws of the normalized top-k vector, one CSV row per draw.
    Sample {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long)]
        m: usize,
        /// Falls back to PMAXEVT_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid check of the perturbation against its envelope.
    EnvelopeCheck {
        #[command(flatten)]
        base: BaseArgs,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichBound {
    Eq23,
    Thm33,
}

#[derive(Args)]
struct DistanceArgs {
    #[command(flatten)]
    base: BaseArgs,
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 1)]
    k: u32,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Subcommand)]
enum DistanceOp {
    /// Hellinger distance, exact law versus limit
    Hellinger(DistanceArgs),
    /// Total variation distance, exact law versus limit
    Tv(DistanceArgs),
    /// Kolmogorov distance, exact law versus limit
    Ks(DistanceArgs),
    /// Computable upper bound on the Hellinger or variational distance
    Bound {
        #[arg(long, value_enum)]
        which: WhichBound,
        #[command(flatten)]
        args: DistanceArgs,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long, default_value_t = distances::DEFAULT_MC_SAMPLES)]
        mc_samples: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn print_json(v: &Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn law_value(law: LawArgs, op: &str, value: Value) -> Value {
    json!({ "family": law.family, "alpha": law.alpha, "op": op, "value": value })
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidParameter(format!("{SEED_ENV}={v:?} is not a u64"))),
        Err(_) => Ok(None),
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run_law(op: LawOp) -> Result<()> {
    let v = match op {
        LawOp::Cdf { law, x } => law_value(law, "cdf", json!(law.law()?.checked_cdf(x)?)),
        LawOp::Pdf { law, x } => law_value(law, "pdf", json!(law.law()?.pdf(x))),
        LawOp::Quantile { law, p } => {
            law_value(law, "quantile", json!(law.law()?.checked_quantile(p)?))
        }
        LawOp::Kcdf { law, k, x } => {
            let mut v = law_value(law, "kcdf", json!(law.law()?.kth_limit_cdf(k, x)?));
            v["k"] = json!(k);
            v
        }
        LawOp::Norming { law, n, source } => {
            let h = law.law()?;
            let c = h.norming(n, source.into());
            let mut v = law_value(law, "norming", serde_json::to_value(c)?);
            v["n"] = json!(n);
            v["source"] = serde_json::to_value(NormingSource::from(source))?;
            v["residual"] = json!(h.max_stability_residual(n, c));
            v
        }
    };
    print_json(&v)
}

fn run_fig1(a: Fig1Args) -> Result<()> {
    let grid = glogpd::linear_grid(a.grid_start, a.grid_end, a.points)?;
    let table = glogpd::density_table(&glogpd::fig1_sources(), &grid)?;
    let mut out = open_out(a.out.as_deref())?;
    match a.format {
        TableFormat::Csv => table.write_csv(&mut out)?,
        TableFormat::Gnuplot => table.write_gnuplot(&mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn run_glogpd(op: GlogpdOp) -> Result<()> {
    let v = match op {
        GlogpdOp::Cdf { law, x } => {
            law_value(law, "cdf", json!(GLogPareto::new(law.family, law.alpha)?.cdf(x)))
        }
        GlogpdOp::Pdf { law, x } => {
            law_value(law, "pdf", json!(GLogPareto::new(law.family, law.alpha)?.pdf(x)))
        }
        GlogpdOp::Vonmises { branch, gamma, x } => {
            let branch = match branch {
                BranchArg::V1 => Branch::V1,
                BranchArg::V2 => Branch::V2,
            };
            let v = VonMises::new(branch, gamma)?;
            json!({ "label": v.to_string(), "x": x, "cdf": v.cdf(x), "pdf": v.pdf(x) })
        }
        GlogpdOp::Fig1(a) => return run_fig1(a),
    };
    print_json(&v)
}

fn run_model(op: ModelOp) -> Result<()> {
    match op {
        ModelOp::Exactcdf { base, n, k, x } => {
            let b = base.build()?;
            let norming = b.law().norming(n, base.norming.into());
            let law = ExactMaxLaw::new(b.distribution(), n, norming, k)?;
            print_json(&json!({ "n": n, "k": k, "x": x, "cdf": law.cdf(x), "pdf": law.pdf(x) }))
        }
        ModelOp::Sample { base, n, k, m, seed, out } => {
            let seed = match seed {
                Some(s) => s,
                None => env_seed()?.unwrap_or(0),
            };
            let b = base.build()?;
            let norming = b.law().norming(n, base.norming.into());
            let law = ExactMaxLaw::new(b.distribution(), n, norming, k)?;
            let draws = models::sample_top_k(&law, m, seed)?;
            let mut w = csv::Writer::from_writer(open_out(out.as_deref())?);
            w.write_record((1..=k).map(|j| format!("x{j}")))?;
            for d in draws {
                w.write_record(d.iter().map(|v| experiments::fmt_num(*v)))?;
            }
            w.flush()?;
            Ok(())
        }
        ModelOp::EnvelopeCheck { base, grid } => match base.build()? {
            Base::Perturbed(p) => {
                let check = p.envelope_check(grid)?;
                print_json(&json!({
                    "check": serde_json::to_value(check)?,
                    "sigma_edge": p.sigma_edge(),
                    "x0": p.x0(),
                    "normalizer": p.normalizer(),
                }))
            }
            _ => Err(Error::InvalidParameter(
                "envelope-check needs a catalog perturbation as base".into(),
            )),
        },
    }
}

fn run_distance(op: DistanceOp) -> Result<()> {
    let (kind, a) = match op {
        DistanceOp::Hellinger(a) => (DistanceKind::Hellinger, a),
        DistanceOp::Tv(a) => (DistanceKind::TotalVariation, a),
        DistanceOp::Ks(a) => (DistanceKind::Kolmogorov, a),
        DistanceOp::Bound { which, args: a, c, x0, mc_samples, seed } => {
            let b = a.base.build()?;
            let norming = b.law().norming(a.n, a.base.norming.into());
            let seed = match seed {
                Some(s) => s,
                None => env_seed()?.unwrap_or(0),
            };
            let report = b.with_sigma(|m| match which {
                WhichBound::Eq23 => {
                    if a.k != 1 {
                        return Err(Error::InvalidParameter(
                            "the eq23 bound is for the maximum; use --k 1 or thm33".into(),
                        ));
                    }
                    distances::hellinger_bound_eq23(m, norming, a.n, x0, c, a.tol)
                }
                WhichBound::Thm33 => {
                    let mc = McOptions { samples: mc_samples, seed };
                    distances::thm33_bound(m, norming, a.n, a.k, x0, c, mc, a.tol)
                }
            })?;
            return print_json(&serde_json::to_value(report)?);
        }
    };
    let b = a.base.build()?;
    let norming = b.law().norming(a.n, a.base.norming.into());
    let report = b.with_sigma(|m| distances::exact_vs_limit(m, norming, a.n, a.k, kind, a.tol))?;
    print_json(&serde_json::to_value(report)?)
}

/// Returns whether every row converged.
fn run_rate(config: &Path, out: Option<PathBuf>, format: Option<FormatArg>) -> Result<bool> {
    let cfg = ExperimentConfig::from_path(config)?
        .with_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
    let res = experiments::rate_experiment(&cfg)?;
    let format = format.map(ReportFormat::from).unwrap_or(cfg.output.format);
    let path = out.or_else(|| cfg.output.path.clone());
    match path {
        Some(p) => experiments::report_emit_to_path(&res, format, &p)?,
        None => experiments::report_emit(&res, format, std::io::stdout().lock())?,
    }
    for r in res.rows.iter().filter(|r| r.status != experiments::RowStatus::Converged) {
        eprintln!(
            "row n={} k={} kind={} {:?}{}",
            r.n,
            r.k,
            r.kind,
            r.status,
            r.message.as_deref().map(|m| format!(": {m}")).unwrap_or_default()
        );
    }
    Ok(res.all_converged())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Law { op } => run_law(op).map(|_| true),
        Command::Glogpd { op } => run_glogpd(op).map(|_| true),
        Command::Model { op } => run_model(op).map(|_| true),
        Command::Distance { op } => run_distance(op).map(|_| true),
        Command::Rate { config, out, format } => run_rate(&config, out, format),
        Command::Fig1(a) => run_fig1(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
