use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use serde_json::{json, Value};

use ipm_pacbayes::bounds::{self, BoundReport};
use ipm_pacbayes::divergences::{self, DivergenceKind, DivergenceValue};
use ipm_pacbayes::experiment::{run_experiment, ExperimentConfig};
use ipm_pacbayes::measures::{
    DiscreteMeasure, FiniteMetricSpace, GaussianMeasure, ProjectedGaussianMeasure,
};
use ipm_pacbayes::verify;
use ipm_pacbayes::Error;

use crate::operands::{matrix, vector};
use crate::Outcome;

#[derive(Debug, Args)]
pub struct DivergenceArgs {
    #[command(subcommand)]
    kind: DivergenceCmd,
}

#[derive(Debug, Args)]
struct GaussianPair {
    /// Posterior mean (inline `a,b,c` or `@file.json`).
    #[arg(long, allow_hyphen_values = true)]
    mu_q: String,
    #[arg(long)]
    sigma_q: f64,
    /// Prior mean (inline `a,b,c` or `@file.json`).
    #[arg(long, allow_hyphen_values = true)]
    mu_p: String,
    #[arg(long)]
    sigma_p: f64,
}

impl GaussianPair {
    fn measures(&self) -> Result<(GaussianMeasure, GaussianMeasure)> {
        Ok((
            GaussianMeasure::new(vector(&self.mu_q)?, self.sigma_q)?,
            GaussianMeasure::new(vector(&self.mu_p)?, self.sigma_p)?,
        ))
    }

    fn inputs(&self) -> Result<Value> {
        Ok(json!({
            "mu_q": vector(&self.mu_q)?, "sigma_q": self.sigma_q,
            "mu_p": vector(&self.mu_p)?, "sigma_p": self.sigma_p,
        }))
    }
}

#[derive(Debug, Args)]
struct DiscretePair {
    /// First weight vector.
    #[arg(long)]
    q: String,
    /// Second weight vector.
    #[arg(long)]
    p: String,
}

impl DiscretePair {
    fn measures(&self) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
        Ok((
            DiscreteMeasure::new(vector(&self.q)?)?,
            DiscreteMeasure::new(vector(&self.p)?)?,
        ))
    }
}

#[derive(Debug, Subcommand)]
enum DivergenceCmd {
    /// KL between isotropic Gaussians (undefined if a sigma is 0).
    KlGaussian(GaussianPair),
    /// Total variation between two weight vectors.
    Tv(DiscretePair),
    /// Exact W1 on a finite metric space.
    W1Finite {
        #[command(flatten)]
        pair: DiscretePair,
        /// Distance matrix: rows separated by `;`, or `@file.json`.
        #[arg(long, conflicts_with = "line")]
        dist: Option<String>,
        /// Points on the real line instead of a distance matrix.
        #[arg(long, allow_hyphen_values = true)]
        line: Option<String>,
    },
    /// W2 between isotropic Gaussians.
    W2Gaussian(GaussianPair),
    /// Closed-form W1 upper bound between ball-projected Gaussians.
    W1ProjGauss {
        #[command(flatten)]
        pair: GaussianPair,
        /// Projection radius.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn print_json(v: &Value) {
    emit(&format!(
        "{}\n",
        serde_json::to_string_pretty(v).expect("json")
    ));
}

fn undefined(kind: &str, e: &Error, inputs: Value) -> Outcome {
    print_json(
        &json!({ "kind": kind, "value": "undefined", "reason": e.to_string(), "inputs": inputs }),
    );
    Outcome::Undefined
}

fn report_divergence(d: DivergenceValue, inputs: Value) -> Outcome {
    print_json(&json!({ "kind": d.kind, "value": d.value, "inputs": inputs }));
    Outcome::Ok
}

pub fn divergence(args: &DivergenceArgs) -> Result<Outcome> {
    match &args.kind {
        DivergenceCmd::KlGaussian(pair) => {
            let (q, p) = pair.measures()?;
            match divergences::kl_gaussian_isotropic(&q, &p) {
                Ok(d) => Ok(report_divergence(d, pair.inputs()?)),
                Err(e) if e.is_undefined() => Ok(undefined("KL", &e, pair.inputs()?)),
                Err(e) => Err(e.into()),
            }
        }
        DivergenceCmd::Tv(pair) => {
            let (q, p) = pair.measures()?;
            let d = divergences::tv_discrete(&q, &p)?;
            Ok(report_divergence(
                d,
                json!({ "q": q.weights(), "p": p.weights() }),
            ))
        }
        DivergenceCmd::W1Finite { pair, dist, line } => {
            let (q, p) = pair.measures()?;
            let space = match (dist, line) {
                (Some(m), None) => FiniteMetricSpace::new(matrix(m)?)?,
                (None, Some(l)) => FiniteMetricSpace::on_line(&vector(l)?)?,
                _ => bail!("w1-finite needs exactly one of --dist or --line"),
            };
            let d = divergences::w1_discrete_exact(&q, &p, &space)?;
            Ok(report_divergence(
                d,
                json!({ "q": q.weights(), "p": p.weights(), "dist": space.matrix() }),
            ))
        }
        DivergenceCmd::W2Gaussian(pair) => {
            let (q, p) = pair.measures()?;
            Ok(report_divergence(
                divergences::w2_gaussian(&q, &p)?,
                pair.inputs()?,
            ))
        }
        DivergenceCmd::W1ProjGauss { pair, radius } => {
            let (q, p) = pair.measures()?;
            let q = ProjectedGaussianMeasure::new(q, *radius)?;
            let p = ProjectedGaussianMeasure::new(p, *radius)?;
            let terms = divergences::w1_projected_gaussian_terms(&q, &p)?;
            let mut inputs = pair.inputs()?;
            inputs["radius"] = json!(radius);
            inputs["terms"] = serde_json::to_value(terms)?;
            Ok(report_divergence(
                DivergenceValue::new(terms.total(), DivergenceKind::W1ProjGaussUpper)?,
                inputs,
            ))
        }
    }
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(subcommand)]
    name: BoundCmd,
}

#[derive(Debug, Args)]
struct Common {
    /// Sample size.
    #[arg(long)]
    m: usize,
    /// Confidence parameter.
    #[arg(long)]
    delta: f64,
}

#[derive(Debug, Subcommand)]
enum BoundCmd {
    /// Classical KL bound from a KL value.
    KlpbClassic {
        #[arg(long)]
        kl: f64,
        #[command(flatten)]
        c: Common,
    },
    /// IPM template from an IPM value gamma.
    IpmTemplate {
        #[arg(long)]
        gamma: f64,
        #[command(flatten)]
        c: Common,
    },
    /// Total-variation bound from uc(m, delta/2).
    Tvpb {
        #[arg(long)]
        uc: f64,
        #[arg(long)]
        tv: f64,
        #[command(flatten)]
        c: Common,
    },
    /// Total-variation bound for a VC class; the constant c must be given.
    TvpbVc {
        #[arg(long)]
        vc: usize,
        /// Constant of the VC uniform-convergence bound.
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        tv: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Wasserstein template with Lipschitz constant K.
    WpbTemplate {
        #[arg(long)]
        k: f64,
        #[arg(long)]
        w1: f64,
        #[command(flatten)]
        c: Common,
    },
    /// Wasserstein bound for a finite class with G-Lipschitz loss.
    WpbFinite {
        #[arg(long)]
        class_size: usize,
        #[arg(long)]
        g: f64,
        #[arg(long)]
        w1: f64,
        #[command(flatten)]
        c: Common,
    },
    /// Wasserstein bound from uc and ucg evaluated at delta/4.
    WpbGradUc {
        #[arg(long)]
        uc: f64,
        #[arg(long)]
        ucg: f64,
        #[arg(long)]
        w1: f64,
        #[command(flatten)]
        c: Common,
    },
    /// Seeger-type total-variation bound for a finite class.
    SeegerTv {
        #[arg(long)]
        emp_risk: f64,
        #[arg(long)]
        class_size: usize,
        #[arg(long)]
        tv: f64,
        #[command(flatten)]
        c: Common,
    },
    /// Uniform-convergence term for linear regression.
    UcLinreg {
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[command(flatten)]
        c: Common,
    },
    /// Gradient uniform-convergence term for linear regression.
    UcgLinreg {
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[command(flatten)]
        c: Common,
    },
    /// Wasserstein risk bound for linear regression.
    WpbLinreg {
        #[arg(long)]
        jhat: f64,
        #[arg(long)]
        w_bound: f64,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[command(flatten)]
        c: Common,
    },
    /// KL risk bound for linear regression (undefined if a sigma is 0).
    KlpbLinreg {
        #[arg(long)]
        jhat: f64,
        #[command(flatten)]
        pair: GaussianPair,
        #[command(flatten)]
        c: Common,
    },
}

fn div(value: f64, kind: DivergenceKind) -> Result<DivergenceValue> {
    Ok(DivergenceValue::new(value, kind)?)
}

fn print_report(name: &str, r: &BoundReport) -> Outcome {
    let mut v = serde_json::to_value(r).expect("report serializes");
    v["name"] = json!(name);
    print_json(&v);
    Outcome::Ok
}

fn print_scalar(name: &str, value: f64, inputs: Value) -> Outcome {
    print_json(&json!({ "name": name, "value": value, "inputs": inputs }));
    Outcome::Ok
}

pub fn bound(args: &BoundArgs) -> Result<Outcome> {
    use BoundCmd as B;
    use DivergenceKind as K;
    let out = match &args.name {
        B::KlpbClassic { kl, c } => print_report(
            "klpb-classic",
            &bounds::klpb_classic(div(*kl, K::Kl)?, c.m, c.delta)?,
        ),
        B::IpmTemplate { gamma, c } => print_report(
            "ipm-template",
            &bounds::ipm_pb_template(*gamma, c.m, c.delta)?,
        ),
        B::Tvpb { uc, tv, c } => print_report(
            "tvpb",
            &bounds::tvpb_from_uc(*uc, div(*tv, K::Tv)?, c.m, c.delta)?,
        ),
        B::TvpbVc { vc, c, tv, common } => {
            let Some(c) = c else {
                bail!(
                    "tvpb-vc requires --c: the constant of the VC uniform-convergence bound \
                     has no known explicit value, so it must be supplied"
                );
            };
            print_report(
                "tvpb-vc",
                &bounds::tvpb_vc(*vc, *c, div(*tv, K::Tv)?, common.m, common.delta)?,
            )
        }
        B::WpbTemplate { k, w1, c } => print_report(
            "wpb-template",
            &bounds::wpb_template(*k, div(*w1, K::W1Exact)?, c.m, c.delta)?,
        ),
        B::WpbFinite {
            class_size,
            g,
            w1,
            c,
        } => print_report(
            "wpb-finite",
            &bounds::wpb_finite(*class_size, *g, div(*w1, K::W1Exact)?, c.m, c.delta)?,
        ),
        B::WpbGradUc { uc, ucg, w1, c } => print_report(
            "wpb-grad-uc",
            &bounds::wpb_grad_uc(*uc, *ucg, div(*w1, K::W1Exact)?, c.m, c.delta)?,
        ),
        B::SeegerTv {
            emp_risk,
            class_size,
            tv,
            c,
        } => print_report(
            "seeger-tv",
            &bounds::seeger_tv_finite(*emp_risk, *class_size, div(*tv, K::Tv)?, c.m, c.delta)?,
        ),
        B::UcLinreg { d, c } => print_scalar(
            "uc-linreg",
            bounds::uc_linreg(c.m, c.delta, *d)?,
            json!({ "m": c.m, "delta": c.delta, "d": d }),
        ),
        B::UcgLinreg { d, r, c } => print_scalar(
            "ucg-linreg",
            bounds::ucg_linreg(c.m, c.delta, *d, *r)?,
            json!({ "m": c.m, "delta": c.delta, "d": d, "r": r }),
        ),
        B::WpbLinreg {
            jhat,
            w_bound,
            d,
            r,
            c,
        } => print_report(
            "wpb-linreg",
            &bounds::wpb_linreg(
                *jhat,
                div(*w_bound, K::W1ProjGaussUpper)?,
                c.m,
                c.delta,
                *d,
                *r,
            )?,
        ),
        B::KlpbLinreg { jhat, pair, c } => {
            let (q, p) = pair.measures()?;
            match bounds::klpb_linreg(*jhat, &q, &p, c.m, c.delta) {
                Ok(r) => print_report("klpb-linreg", &r),
                Err(e) if e.is_undefined() => {
                    print_json(&json!({
                        "name": "klpb-linreg",
                        "empirical_risk": jhat,
                        "complexity": "undefined",
                        "bound_value": "undefined",
                        "reason": e.to_string(),
                    }));
                    Outcome::Undefined
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    Ok(out)
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Named configuration: wide-prior, narrow-prior or dirac.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
}

pub fn experiment(
    args: &ExperimentArgs,
    config: Option<&Path>,
    seed: Option<u64>,
    out_dir: Option<&Path>,
) -> Result<Outcome> {
    let mut cfg = match (config, &args.preset) {
        (Some(path), _) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_json(&text)?
        }
        (None, Some(name)) => ExperimentConfig::preset(name).with_context(|| {
            format!(
                "unknown preset '{name}' (expected one of: {})",
                ExperimentConfig::PRESETS.join(", ")
            )
        })?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let result = run_experiment(&cfg)?;
    let dir = out_dir.map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    result
        .write_to(&dir)
        .with_context(|| format!("writing results to {}", dir.display()))?;
    emit(&result.to_csv());
    eprintln!(
        "wrote results.csv, results.json, plot.svg to {}",
        dir.display()
    );
    Ok(Outcome::Ok)
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// transport, gradients, lipschitz-lemma, validity or projected-risk.
    suite: String,
    /// Confidence level for the Monte-Carlo suites.
    #[arg(long)]
    delta: Option<f64>,
}

pub fn verify(args: &VerifyArgs, seed: Option<u64>) -> Result<Outcome> {
    let reports = verify::run_suite(&args.suite, seed.unwrap_or(0), args.delta)?;
    print_json(&serde_json::to_value(&reports)?);
    Ok(if reports.iter().all(|r| r.pass) {
        Outcome::Ok
    } else {
        Outcome::Failed
    })
}
