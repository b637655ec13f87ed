//! Generalization-bound evaluators.
//!
//! Every evaluator takes precomputed divergences and returns a
//! [`BoundReport`] that keeps the pieces of the bound apart. Gap bounds
//! (no empirical risk) report `bound_value == complexity`; risk bounds
//! report `bound_value == empirical_risk + complexity`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::divergences::{kl_gaussian_isotropic, DivergenceKind, DivergenceValue};
use crate::error::{Error, Result};
use crate::measures::GaussianMeasure;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundInputs {
    pub m: usize,
    pub delta: f64,
    pub divergence: Option<DivergenceValue>,
    pub uc: Option<f64>,
    pub ucg: Option<f64>,
    pub extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub empirical_risk: Option<f64>,
    pub complexity: f64,
    pub bound_value: f64,
    pub inputs: BoundInputs,
}

impl BoundReport {
    fn gap(complexity: f64, inputs: BoundInputs) -> Self {
        Self {
            empirical_risk: None,
            complexity,
            bound_value: complexity,
            inputs,
        }
    }

    /// Turns a gap bound into a risk bound by adding the empirical risk.
    pub fn with_empirical_risk(mut self, risk: f64) -> Self {
        self.empirical_risk = Some(risk);
        self.bound_value = risk + self.complexity;
        self
    }

    fn extra(mut self, key: &str, value: f64) -> Self {
        self.inputs.extra.insert(key.to_string(), value);
        self
    }
}

fn inputs(m: usize, delta: f64) -> BoundInputs {
    BoundInputs {
        m,
        delta,
        divergence: None,
        uc: None,
        ucg: None,
        extra: BTreeMap::new(),
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "delta must lie in (0, 1), got {delta}"
        )))
    }
}

fn check_m(m: usize) -> Result<()> {
    if m >= 2 {
        Ok(())
    } else {
        Err(Error::invalid(format!("sample size must be >= 2, got {m}")))
    }
}

fn check_nonneg(x: f64, name: &str) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} must be finite and >= 0, got {x}"
        )))
    }
}

fn check_kind(div: &DivergenceValue, ok: bool, want: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "expected a {want} divergence, got {:?}",
            div.kind
        )))
    }
}

/// `ln(factor * m / delta) / (2 (m - 1))`.
fn log_residual(factor: f64, m: usize, delta: f64) -> f64 {
    (factor * m as f64 / delta).ln() / (2.0 * (m as f64 - 1.0))
}

/// Classical KL PAC-Bayes gap bound `sqrt((KL + ln(m/delta)) / (2(m-1)))`.
pub fn klpb_classic(kl: DivergenceValue, m: usize, delta: f64) -> Result<BoundReport> {
    check_kind(&kl, kl.kind == DivergenceKind::Kl, "KL")?;
    check_m(m)?;
    check_delta(delta)?;
    let complexity = (kl.value / (2.0 * (m as f64 - 1.0)) + log_residual(1.0, m, delta)).sqrt();
    let mut inp = inputs(m, delta);
    inp.divergence = Some(kl);
    Ok(BoundReport::gap(complexity, inp))
}

/// IPM template `sqrt((gamma + ln(m/delta)) / (2(m-1)))` for a caller-computed IPM value.
pub fn ipm_pb_template(gamma: f64, m: usize, delta: f64) -> Result<BoundReport> {
    check_nonneg(gamma, "gamma")?;
    check_m(m)?;
    check_delta(delta)?;
    let complexity = (gamma / (2.0 * (m as f64 - 1.0)) + log_residual(1.0, m, delta)).sqrt();
    Ok(BoundReport::gap(complexity, inputs(m, delta)).extra("gamma", gamma))
}

/// Total-variation bound from a uniform-convergence bound evaluated at `delta/2`:
/// `sqrt(uc^2 TV + ln(2m/delta) / (2(m-1)))`.
pub fn tvpb_from_uc(
    uc_half_delta: f64,
    tv: DivergenceValue,
    m: usize,
    delta: f64,
) -> Result<BoundReport> {
    check_kind(&tv, tv.kind == DivergenceKind::Tv, "TV")?;
    check_nonneg(uc_half_delta, "uc")?;
    check_m(m)?;
    check_delta(delta)?;
    let complexity =
        (uc_half_delta * uc_half_delta * tv.value + log_residual(2.0, m, delta)).sqrt();
    let mut inp = inputs(m, delta);
    inp.divergence = Some(tv);
    inp.uc = Some(uc_half_delta);
    Ok(BoundReport::gap(complexity, inp))
}

/// Total-variation bound for a VC class. The constant `c` of the underlying
/// VC uniform-convergence bound has no known explicit value and must be
/// supplied by the caller.
pub fn tvpb_vc(
    vc_dim: usize,
    c: f64,
    tv: DivergenceValue,
    m: usize,
    delta: f64,
) -> Result<BoundReport> {
    check_kind(&tv, tv.kind == DivergenceKind::Tv, "TV")?;
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::invalid(format!(
            "VC constant c must be > 0, got {c}"
        )));
    }
    if vc_dim == 0 {
        return Err(Error::invalid("VC dimension must be positive"));
    }
    check_m(m)?;
    check_delta(delta)?;
    let vc_term = c * (vc_dim as f64 + (1.0 / delta).ln()) / m as f64;
    let complexity = (vc_term * tv.value + log_residual(1.0, m, delta)).sqrt();
    let mut inp = inputs(m, delta);
    inp.divergence = Some(tv);
    Ok(BoundReport::gap(complexity, inp)
        .extra("c", c)
        .extra("vc_dim", vc_dim as f64))
}

/// Wasserstein template `sqrt(K W1 + ln(2m/delta) / (2(m-1)))`, where `K`
/// is the Lipschitz constant of the squared gap at confidence `delta/2`.
pub fn wpb_template(k: f64, w1: DivergenceValue, m: usize, delta: f64) -> Result<BoundReport> {
    check_kind(&w1, w1.kind.bounds_w1(), "Wasserstein")?;
    check_nonneg(k, "K")?;
    check_m(m)?;
    check_delta(delta)?;
    let complexity = (k * w1.value + log_residual(2.0, m, delta)).sqrt();
    let mut inp = inputs(m, delta);
    inp.divergence = Some(w1);
    Ok(BoundReport::gap(complexity, inp).extra("K", k))
}

/// Finite class with `G`-Lipschitz loss: `K = 8 G ln(4|H|/delta) / m`.
pub fn wpb_finite(
    class_size: usize,
    g: f64,
    w1: DivergenceValue,
    m: usize,
    delta: f64,
) -> Result<BoundReport> {
    if class_size == 0 {
        return Err(Error::invalid("class size must be >= 1"));
    }
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::invalid(format!(
            "loss Lipschitz constant must be > 0, got {g}"
        )));
    }
    check_m(m)?;
    check_delta(delta)?;
    let k = 8.0 * g * (4.0 * class_size as f64 / delta).ln() / m as f64;
    Ok(wpb_template(k, w1, m, delta)?
        .extra("G", g)
        .extra("class_size", class_size as f64))
}

/// Loss-gradient UC class: `K = 2 uc ucg` with both evaluated at `delta/4`.
pub fn wpb_grad_uc(
    uc_q: f64,
    ucg_q: f64,
    w1: DivergenceValue,
    m: usize,
    delta: f64,
) -> Result<BoundReport> {
    check_nonneg(uc_q, "uc")?;
    check_nonneg(ucg_q, "ucg")?;
    let mut report = wpb_template(2.0 * uc_q * ucg_q, w1, m, delta)?;
    report.inputs.uc = Some(uc_q);
    report.inputs.ucg = Some(ucg_q);
    Ok(report)
}

/// Seeger-type total-variation bound for a finite class, relaxed with the
/// refined Pinsker inequality:
/// `sqrt(2 L C / m) + 2 C / m`, `C = ln(4|H|/delta) TV + ln(4 sqrt(m)/delta)`.
pub fn seeger_tv_finite(
    emp_risk: f64,
    class_size: usize,
    tv: DivergenceValue,
    m: usize,
    delta: f64,
) -> Result<BoundReport> {
    check_kind(&tv, tv.kind == DivergenceKind::Tv, "TV")?;
    if !(0.0..=1.0).contains(&emp_risk) {
        return Err(Error::invalid(format!(
            "empirical risk must lie in [0, 1], got {emp_risk}"
        )));
    }
    if class_size == 0 {
        return Err(Error::invalid("class size must be >= 1"));
    }
    check_m(m)?;
    check_delta(delta)?;
    let mf = m as f64;
    let c = (4.0 * class_size as f64 / delta).ln() * tv.value + (4.0 * mf.sqrt() / delta).ln();
    let complexity = (2.0 * emp_risk * c / mf).sqrt() + 2.0 * c / mf;
    let mut inp = inputs(m, delta);
    inp.divergence = Some(tv);
    Ok(BoundReport::gap(complexity, inp)
        .extra("C", c)
        .extra("class_size", class_size as f64)
        .extra("emp_risk", emp_risk))
}

/// Uniform-convergence bound for a finite class of losses in `[0, 1]`:
/// `sqrt(ln(2|H|/delta) / (2m))` (Hoeffding plus a union bound).
pub fn uc_finite_class(class_size: usize, m: usize, delta: f64) -> Result<f64> {
    if class_size == 0 || m == 0 {
        return Err(Error::invalid("class size and sample size must be >= 1"));
    }
    check_delta(delta)?;
    Ok(((2.0 * class_size as f64 / delta).ln() / (2.0 * m as f64)).sqrt())
}

fn check_linreg_args(m: usize, delta: f64, d: usize) -> Result<()> {
    if m == 0 || d == 0 {
        return Err(Error::invalid("m and d must be >= 1"));
    }
    check_delta(delta)
}

/// `max(sqrt(t), t)` with `t = (5d + 2 ln(c/delta)) / m`.
fn covariance_deviation(m: usize, delta: f64, d: usize, c: f64) -> f64 {
    let t = (5.0 * d as f64 + 2.0 * (c / delta).ln()) / m as f64;
    t.sqrt().max(t)
}

/// `sqrt((d + 2 d sqrt(L) + 2 L) / (4m))` with `L = ln(c/delta)`.
fn cross_moment_deviation(m: usize, delta: f64, d: usize, c: f64) -> f64 {
    let l = (c / delta).ln();
    let d = d as f64;
    ((d + 2.0 * d * l.sqrt() + 2.0 * l) / (4.0 * m as f64)).sqrt()
}

/// Uniform-convergence bound on the gap for the linear class with loss
/// `(h.x - y)^2 / 4`, `|x| <= r`, `|y| <= 1`, `|h| <= 1/r`. Does not depend on `r`.
pub fn uc_linreg(m: usize, delta: f64, d: usize) -> Result<f64> {
    check_linreg_args(m, delta, d)?;
    let target = ((6.0 / delta).ln() / (32.0 * m as f64)).sqrt();
    Ok(target
        + cross_moment_deviation(m, delta, d, 3.0)
        + 8.0 * covariance_deviation(m, delta, d, 6.0))
}

/// Uniform-convergence bound on the L2 deviation of the loss gradient for
/// the same class. Linear in `r`.
pub fn ucg_linreg(m: usize, delta: f64, d: usize, r: f64) -> Result<f64> {
    check_linreg_args(m, delta, d)?;
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid(format!("r must be > 0, got {r}")));
    }
    Ok(16.0 * r * covariance_deviation(m, delta, d, 4.0)
        + r * cross_moment_deviation(m, delta, d, 2.0))
}

/// Wasserstein risk bound for the linear-regression class:
/// `jhat + sqrt(2 uc(m, delta/4) ucg(m, delta/4) W + ln(2m/delta) / (2(m-1)))`.
pub fn wpb_linreg(
    jhat: f64,
    w_bound: DivergenceValue,
    m: usize,
    delta: f64,
    d: usize,
    r: f64,
) -> Result<BoundReport> {
    check_delta(delta)?;
    let uc = uc_linreg(m, delta / 4.0, d)?;
    let ucg = ucg_linreg(m, delta / 4.0, d, r)?;
    Ok(wpb_grad_uc(uc, ucg, w_bound, m, delta)?
        .with_empirical_risk(jhat)
        .extra("d", d as f64)
        .extra("r", r))
}

/// KL risk bound for Gaussian posterior and prior:
/// `jhat + sqrt((KL(Q||P) + ln(m/delta)) / (2(m-1)))`.
/// Undefined when either sigma is zero.
pub fn klpb_linreg(
    jhat: f64,
    q: &GaussianMeasure,
    p: &GaussianMeasure,
    m: usize,
    delta: f64,
) -> Result<BoundReport> {
    let kl = kl_gaussian_isotropic(q, p)?;
    Ok(klpb_classic(kl, m, delta)?.with_empirical_risk(jhat))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn div(v: f64, kind: DivergenceKind) -> DivergenceValue {
        DivergenceValue::new(v, kind).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn klpb_classic_examples() {
        let r = klpb_classic(div(0.0, DivergenceKind::Kl), 100, 0.05).unwrap();
        close(r.bound_value, 0.19592956964254667, 1e-14);
        assert_eq!(r.empirical_risk, None);
        let r = klpb_classic(div(18.07585092994045684, DivergenceKind::Kl), 100, 0.05).unwrap();
        close(r.bound_value, 0.36011188910414252, 1e-14);
        let mut prev = f64::INFINITY;
        for m in [10, 100, 1_000, 10_000, 100_000] {
            let v = klpb_classic(div(0.0, DivergenceKind::Kl), m, 0.05)
                .unwrap()
                .bound_value;
            assert!(v < prev);
            prev = v;
        }
        assert!(klpb_classic(div(0.0, DivergenceKind::Kl), 1, 0.05).is_err());
        assert!(klpb_classic(div(0.0, DivergenceKind::Tv), 100, 0.05).is_err());
        assert!(klpb_classic(div(0.0, DivergenceKind::Kl), 100, 1.0).is_err());
    }

    #[test]
    fn ipm_template_examples() {
        let a = ipm_pb_template(0.0, 50, 0.1).unwrap().bound_value;
        let b = klpb_classic(div(0.0, DivergenceKind::Kl), 50, 0.1)
            .unwrap()
            .bound_value;
        assert_eq!(a, b);
        close(
            ipm_pb_template(1.0, 101, 0.05).unwrap().bound_value,
            0.20749521428692338,
            1e-14,
        );
        assert!(ipm_pb_template(-1.0, 101, 0.05).is_err());
    }

    #[test]
    fn tvpb_examples() {
        let r = tvpb_from_uc(0.7, div(0.0, DivergenceKind::Tv), 100, 0.05).unwrap();
        close(r.bound_value, 0.20466836491376699, 1e-14);
        let r = tvpb_from_uc(0.5, div(1.0, DivergenceKind::Tv), 100, 0.05).unwrap();
        close(r.bound_value, 0.54026765551574054, 1e-14);
        assert_eq!(r.inputs.uc, Some(0.5));
    }

    #[test]
    fn tvpb_vc_examples() {
        let r = tvpb_vc(5, 1.0, div(0.5, DivergenceKind::Tv), 1000, 0.05).unwrap();
        close(r.bound_value, 0.094628571866650319, 1e-14);
        let zero = tvpb_vc(5, 3.0, div(0.0, DivergenceKind::Tv), 1000, 0.05).unwrap();
        close(zero.bound_value, ((20000f64).ln() / 1998.0).sqrt(), 1e-15);
        assert!(tvpb_vc(5, 0.0, div(0.5, DivergenceKind::Tv), 1000, 0.05).is_err());
        assert!(tvpb_vc(5, -1.0, div(0.5, DivergenceKind::Tv), 1000, 0.05).is_err());
    }

    #[test]
    fn wpb_examples() {
        let r = wpb_template(0.1, div(0.5, DivergenceKind::W1Exact), 100, 0.05).unwrap();
        close(r.bound_value, 0.30313221471244999, 1e-14);
        assert!(wpb_template(0.1, div(0.5, DivergenceKind::Tv), 100, 0.05).is_err());
        let r = wpb_finite(8, 1.0, div(0.2, DivergenceKind::W1Exact), 200, 0.05).unwrap();
        close(r.bound_value, 0.27253007530391266, 1e-14);
        let r = wpb_grad_uc(6.77, 12.95, div(0.0285, DivergenceKind::W1Exact), 100, 0.05).unwrap();
        close(r.bound_value, 2.2448083748054030, 1e-13);
    }

    #[test]
    fn seeger_examples() {
        let r = seeger_tv_finite(0.1, 8, div(0.3, DivergenceKind::Tv), 400, 0.05).unwrap();
        close(r.bound_value, 0.11483126919023258, 1e-14);
        close(r.inputs.extra["C"], 9.3161993611339879, 1e-13);
        let r = seeger_tv_finite(0.0, 8, div(0.3, DivergenceKind::Tv), 400, 0.05).unwrap();
        assert_eq!(r.bound_value, 2.0 * r.inputs.extra["C"] / 400.0);
    }

    #[test]
    fn linreg_uc_examples() {
        close(uc_linreg(100, 0.05, 10).unwrap(), 6.5964073811864197, 1e-12);
        close(uc_linreg(400, 0.05, 10).unwrap(), 3.2982036905932098, 1e-12);
        close(
            uc_linreg(100, 0.0125, 10).unwrap(),
            6.7724137709844954,
            1e-12,
        );
        close(
            ucg_linreg(100, 0.0125, 10, 1.0).unwrap(),
            12.955000233286282,
            1e-12,
        );
        let a = ucg_linreg(150, 0.03, 7, 1.0).unwrap();
        let b = ucg_linreg(150, 0.03, 7, 2.5).unwrap();
        close(b, 2.5 * a, 1e-14);
        assert!(ucg_linreg(1_000_000_000, 0.05, 10, 1.0).unwrap() < 0.005);
    }

    #[test]
    fn linreg_bound_examples() {
        let w = div(0.0285, DivergenceKind::W1ProjGaussUpper);
        let r = wpb_linreg(0.0211, w, 100, 0.05, 10, 1.0).unwrap();
        close(r.bound_value, 2.2667350087733204, 1e-12);
        assert_eq!(r.empirical_risk, Some(0.0211));

        let r = wpb_linreg(
            0.02,
            div(0.0, DivergenceKind::W1ProjGaussUpper),
            100,
            0.05,
            10,
            1.0,
        )
        .unwrap();
        close(r.bound_value, 0.02 + (4000f64.ln() / 198.0).sqrt(), 1e-15);

        let q = GaussianMeasure::new(vec![0.0; 10], 1e-3).unwrap();
        let p = GaussianMeasure::new(vec![0.0; 10], 1e-2).unwrap();
        let r = klpb_linreg(0.0211, &q, &p, 100, 0.05).unwrap();
        close(r.bound_value, 0.38121188910414252, 1e-13);

        let dirac = GaussianMeasure::new(vec![0.0; 10], 0.0).unwrap();
        assert!(klpb_linreg(0.0211, &q, &dirac, 100, 0.05)
            .unwrap_err()
            .is_undefined());
    }
}
