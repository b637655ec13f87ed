//! Repeated linear-regression runs aggregated into risk and bound tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bounds::uc_linreg;
use crate::error::{Error, Result};
use crate::linreg::{
    empirical_risk_closed_form, generate_task_with_x_radius, klpb_objective, sample_dataset,
    test_risk_monte_carlo, train_posterior, wpb_objective, AdamConfig, Objective, TrainConfig,
};
use crate::measures::{derive_seed, GaussianMeasure, ProjectedGaussianMeasure, RandomSource};

pub const CSV_HEADER: &str =
    "n_samples,train_risk,train_ci,test_risk,test_ci,uc_bound,uc_ci,wpb_bound,wpb_ci,klpb_bound,klpb_ci";
pub const UNDEFINED: &str = "undefined";
pub const CI_METHOD: &str = "student-t 95%, df = repetitions - 1, half-width t * sd / sqrt(n)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_batch: usize,
    pub max_epochs: usize,
    pub tol: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        let a = AdamConfig::default();
        let t = TrainConfig::default();
        Self {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            max_batch: t.max_batch,
            max_epochs: t.max_epochs,
            tol: t.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub m_values: Vec<usize>,
    pub repetitions: usize,
    pub delta: f64,
    pub sigma_p: f64,
    pub sigma_q: f64,
    pub objective: Objective,
    pub r: f64,
    pub r_q: f64,
    pub x_radius: f64,
    pub n_test: usize,
    pub master_seed: u64,
    pub optimizer: OptimizerSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            d: 10,
            m_values: vec![100, 200, 300, 400],
            repetitions: 10,
            delta: 0.05,
            sigma_p: 1e-2,
            sigma_q: 1e-3,
            objective: Objective::Klpb,
            r: 1.0,
            r_q: 0.05,
            x_radius: 0.1,
            n_test: 10_000,
            master_seed: 0,
            optimizer: OptimizerSettings::default(),
        }
    }
}

impl ExperimentConfig {
    /// Wide prior, KL objective.
    pub fn wide_prior() -> Self {
        Self::default()
    }

    /// Narrow prior (`sigma_p = 1e-4`), KL objective.
    pub fn narrow_prior() -> Self {
        Self {
            sigma_p: 1e-4,
            ..Self::default()
        }
    }

    /// Point-mass prior and posterior, Wasserstein objective.
    pub fn dirac() -> Self {
        Self {
            sigma_p: 0.0,
            sigma_q: 0.0,
            objective: Objective::Wpb,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "wide-prior" => Some(Self::wide_prior()),
            "narrow-prior" => Some(Self::narrow_prior()),
            "dirac" => Some(Self::dirac()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 3] = ["wide-prior", "narrow-prior", "dirac"];

    /// Parses a config, or extracts the embedded config from a `results.json`.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let cfg: Self = match value.get("metadata").and_then(|m| m.get("config")) {
            Some(inner) => serde_json::from_value(inner.clone())?,
            None => serde_json::from_value(value)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(msg.to_string()));
        if self.d == 0 {
            return bad("d must be >= 1");
        }
        if self.m_values.is_empty() || self.m_values.iter().any(|&m| m < 2) {
            return bad("m_values must be non-empty with every m >= 2");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be >= 1");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if !(self.sigma_p >= 0.0 && self.sigma_p.is_finite())
            || !(self.sigma_q >= 0.0 && self.sigma_q.is_finite())
        {
            return bad("sigma_p and sigma_q must be finite and >= 0");
        }
        for (v, name) in [
            (self.r, "r"),
            (self.r_q, "r_q"),
            (self.x_radius, "x_radius"),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be > 0"));
            }
        }
        if self.n_test == 0 {
            return bad("n_test must be >= 1");
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0
            && (0.0..1.0).contains(&o.beta1)
            && (0.0..1.0).contains(&o.beta2)
            && o.eps > 0.0)
        {
            return bad("optimizer needs lr > 0, betas in [0, 1), eps > 0");
        }
        if o.max_batch == 0 || o.max_epochs == 0 || !(o.tol >= 0.0) {
            return bad("optimizer needs max_batch, max_epochs > 0 and tol >= 0");
        }
        Ok(())
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn train_config(&self) -> TrainConfig {
        let o = &self.optimizer;
        TrainConfig {
            objective: self.objective,
            sigma_q: self.sigma_q,
            r_q: self.r_q,
            delta: self.delta,
            max_batch: o.max_batch,
            max_epochs: o.max_epochs,
            tol: o.tol,
            adam: AdamConfig {
                lr: o.lr,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
            },
        }
    }
}

/// Raw outcome of one `(m, repetition)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub m: usize,
    pub repetition: usize,
    pub seed: u64,
    pub train_risk: f64,
    pub test_risk: f64,
    pub uc_bound: f64,
    pub wpb_bound: f64,
    /// `None` when the KL bound is undefined.
    pub klpb_bound: Option<f64>,
    pub mu_q_norm: f64,
    pub epochs: usize,
    pub converged: bool,
}

/// Mean and 95% confidence half-width over repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci: f64,
}

/// A table cell that may be mathematically undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Value(Estimate),
    Undefined(UndefinedTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum UndefinedTag {
    #[serde(rename = "undefined")]
    Undefined,
}

impl Cell {
    pub fn estimate(&self) -> Option<Estimate> {
        match self {
            Cell::Value(e) => Some(*e),
            Cell::Undefined(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n_samples: usize,
    pub train_risk: Estimate,
    pub test_risk: Estimate,
    pub uc_bound: Estimate,
    pub wpb_bound: Estimate,
    pub klpb_bound: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub rng: String,
    pub config_hash: String,
    pub ci_method: String,
    pub init: String,
    pub stopping_rule: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub metadata: Metadata,
    pub rows: Vec<ResultRow>,
    pub runs: Vec<RunRecord>,
}

/// 95% Student-t interval half-width; 0 for fewer than two values.
pub fn estimate(values: &[f64]) -> Estimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Estimate { mean, ci: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let t = StudentsT::new(0.0, 1.0, n as f64 - 1.0)
        .expect("df >= 1")
        .inverse_cdf(0.975);
    Estimate {
        mean,
        ci: t * var.sqrt() / (n as f64).sqrt(),
    }
}

/// Runs one repetition. Data depend only on `(master_seed, m, repetition)`,
/// so configs that differ only in prior or objective see identical samples.
pub fn run_single(config: &ExperimentConfig, m: usize, repetition: usize) -> Result<RunRecord> {
    let seed = derive_seed(config.master_seed, &[m as u64, repetition as u64]);
    let root = RandomSource::new(seed);
    let task = generate_task_with_x_radius(&mut root.fork(&[0]), config.d, config.x_radius)?;
    let data = sample_dataset(&mut root.fork(&[1]), &task, m)?;
    let prior = ProjectedGaussianMeasure::new(
        GaussianMeasure::new(vec![0.0; config.d], config.sigma_p)?,
        config.r,
    )?;
    let outcome = train_posterior(&mut root.fork(&[2]), &data, &prior, &config.train_config())?;
    let post = &outcome.posterior;
    let train_risk = empirical_risk_closed_form(&data, post)?;
    let test_risk = test_risk_monte_carlo(&mut root.fork(&[3]), &task, post, config.n_test)?;
    let uc_bound = train_risk + uc_linreg(m, config.delta, config.d)?;
    let wpb_bound = wpb_objective(&data, post, &prior, config.delta, config.r)?;
    let klpb_bound = match klpb_objective(&data, post, prior.base(), config.delta) {
        Ok(v) => Some(v),
        Err(e) if e.is_undefined() => None,
        Err(e) => return Err(e),
    };
    Ok(RunRecord {
        m,
        repetition,
        seed,
        train_risk,
        test_risk,
        uc_bound,
        wpb_bound,
        klpb_bound,
        mu_q_norm: crate::measures::norm2(&post.mu_q),
        epochs: outcome.epochs,
        converged: outcome.converged,
    })
}

fn run_all(config: &ExperimentConfig, jobs: &[(usize, usize)]) -> Result<Vec<RunRecord>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(m, rep)| run_single(config, m, rep))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.iter()
            .map(|&(m, rep)| run_single(config, m, rep))
            .collect()
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = config
        .m_values
        .iter()
        .flat_map(|&m| (0..config.repetitions).map(move |rep| (m, rep)))
        .collect();
    let runs = run_all(config, &jobs)?;

    let rows = config
        .m_values
        .iter()
        .map(|&m| {
            let rs: Vec<&RunRecord> = runs.iter().filter(|r| r.m == m).collect();
            let col =
                |f: fn(&RunRecord) -> f64| estimate(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let kl: Option<Vec<f64>> = rs.iter().map(|r| r.klpb_bound).collect();
            ResultRow {
                n_samples: m,
                train_risk: col(|r| r.train_risk),
                test_risk: col(|r| r.test_risk),
                uc_bound: col(|r| r.uc_bound),
                wpb_bound: col(|r| r.wpb_bound),
                klpb_bound: match kl {
                    Some(v) => Cell::Value(estimate(&v)),
                    None => Cell::Undefined(UndefinedTag::Undefined),
                },
            }
        })
        .collect();

    let o = &config.optimizer;
    Ok(ExperimentResult {
        metadata: Metadata {
            tool: "ipm-pacbayes".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed: config.master_seed,
            rng: RandomSource::ALGORITHM.into(),
            config_hash: config.hash(),
            ci_method: CI_METHOD.into(),
            init: "mu_q = 0".into(),
            stopping_rule: format!(
                "|change in full-data objective over an epoch| < {} or {} epochs; final iterate",
                o.tol, o.max_epochs
            ),
            config: config.clone(),
        },
        rows,
        runs,
    })
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let e = |e: Estimate| format!("{:.4},{:.4}", e.mean, e.ci);
            let kl = match row.klpb_bound {
                Cell::Value(v) => e(v),
                Cell::Undefined(_) => format!("{UNDEFINED},{UNDEFINED}"),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                row.n_samples,
                e(row.train_risk),
                e(row.test_risk),
                e(row.uc_bound),
                e(row.wpb_bound),
                kl
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }

    /// Line chart of the mean columns against the sample size.
    pub fn to_svg(&self) -> String {
        plot_svg(&self.rows)
    }

    /// Writes `results.csv`, `results.json` and `plot.svg` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), self.to_csv())?;
        std::fs::write(dir.join("results.json"), self.to_json())?;
        std::fs::write(dir.join("plot.svg"), self.to_svg())?;
        Ok(())
    }
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

fn plot_svg(rows: &[ResultRow]) -> String {
    type Getter = fn(&ResultRow) -> Option<f64>;
    let series: [(&str, &str, Getter); 5] = [
        ("train risk", "#1f77b4", |r| Some(r.train_risk.mean)),
        ("test risk", "#ff7f0e", |r| Some(r.test_risk.mean)),
        ("UC bound", "#2ca02c", |r| Some(r.uc_bound.mean)),
        ("WPB bound", "#d62728", |r| Some(r.wpb_bound.mean)),
        ("KLPB bound", "#9467bd", |r| {
            r.klpb_bound.estimate().map(|e| e.mean)
        }),
    ];
    let xs: Vec<f64> = rows.iter().map(|r| r.n_samples as f64).collect();
    let (xmin, xmax) = bounds_of(&xs);
    let ys: Vec<f64> = rows
        .iter()
        .flat_map(|r| series.iter().filter_map(move |s| (s.2)(r)))
        .collect();
    let (_, ymax) = bounds_of(&ys);
    let ymax = if ymax > 0.0 { ymax * 1.05 } else { 1.0 };
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| {
        if xmax > xmin {
            LEFT + (x - xmin) / (xmax - xmin) * pw
        } else {
            LEFT + pw / 2.0
        }
    };
    let sy = |y: f64| TOP + ph - y / ymax * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT} {TOP} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for i in 0..=4 {
        let y = ymax * i as f64 / 4.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{y:.3}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            py + 4.0
        );
    }
    for &x in &xs {
        let px = sx(x);
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            TOP + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">number of samples</text>"#,
        LEFT + pw / 2.0,
        H - 10.0
    );
    for (k, (name, color, get)) in series.iter().enumerate() {
        let pts: Vec<String> = rows
            .iter()
            .filter_map(|r| get(r).map(|y| format!("{:.2},{:.2}", sx(r.n_samples as f64), sy(y))))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
            for p in &pts {
                let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
                let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
            }
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = W - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.0}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{:.0}" y="{:.0}">{name}{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            if pts.is_empty() { " (undefined)" } else { "" }
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds_of(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}
