//! Closed-form and exact divergences between measures.
//!
//! | function | value |
//! |---|---|
//! | [`kl_gaussian_isotropic`] | `KL(Q || P)` for isotropic Gaussians |
//! | [`kl_discrete`] | `KL(Q || P)` for probability vectors |
//! | [`kl_bernoulli`] | `kl(p || q)` between Bernoulli parameters |
//! | [`tv_discrete`] | total variation, half the L1 distance |
//! | [`w1_discrete_exact`] | 1-Wasserstein by exact optimal transport |
//! | [`w2_gaussian`] | 2-Wasserstein between isotropic Gaussians |
//! | [`w1_projected_gaussian_upper`] | upper bound on W1 between ball-projected Gaussians |

mod erfc;
pub mod transport;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use self::erfc::erfc;
use crate::error::{Error, Result};
use crate::measures::{
    norm2, sq_dist, DiscreteMeasure, FiniteMetricSpace, GaussianMeasure, ProjectedGaussianMeasure,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DivergenceKind {
    #[serde(rename = "KL")]
    Kl,
    #[serde(rename = "BernoulliKL")]
    BernoulliKl,
    #[serde(rename = "TV")]
    Tv,
    W1Exact,
    W2Gaussian,
    W1ProjGaussUpper,
}

impl DivergenceKind {
    /// Kinds that equal or upper-bound a 1-Wasserstein distance.
    pub fn bounds_w1(self) -> bool {
        matches!(
            self,
            Self::W1Exact | Self::W2Gaussian | Self::W1ProjGaussUpper
        )
    }
}

/// A divergence value tagged with what it measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceValue {
    pub value: f64,
    pub kind: DivergenceKind,
}

impl DivergenceValue {
    pub fn new(value: f64, kind: DivergenceKind) -> Result<Self> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::invalid(format!(
                "{kind:?} value must be finite and >= 0, got {value}"
            )));
        }
        if kind == DivergenceKind::Tv && value > 1.0 {
            return Err(Error::invalid(format!(
                "total variation must be <= 1, got {value}"
            )));
        }
        Ok(Self { value, kind })
    }

    // Only for values produced by this module, already known to be valid.
    fn known(value: f64, kind: DivergenceKind) -> Self {
        Self { value, kind }
    }
}

fn same_dim(q: &GaussianMeasure, p: &GaussianMeasure) -> Result<()> {
    if q.dim() == p.dim() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            q.dim(),
            p.dim()
        )))
    }
}

/// `KL(Q || P) = |mu_Q - mu_P|^2 / (2 s_P^2) + d (ln(s_P / s_Q) + s_Q^2 / (2 s_P^2) - 1/2)`.
pub fn kl_gaussian_isotropic(q: &GaussianMeasure, p: &GaussianMeasure) -> Result<DivergenceValue> {
    same_dim(q, p)?;
    let (sq, sp) = (q.sigma(), p.sigma());
    if sq == 0.0 || sp == 0.0 {
        return Err(Error::Undefined(format!(
            "KL divergence between Gaussians requires positive sigmas (sigma_q = {sq}, sigma_p = {sp})"
        )));
    }
    let d = q.dim() as f64;
    let mean_term = sq_dist(q.mean(), p.mean()) / (2.0 * sp * sp);
    let scale_term = d * ((sp / sq).ln() + sq * sq / (2.0 * sp * sp) - 0.5);
    // Rounding can push an exact zero slightly negative.
    Ok(DivergenceValue::known(
        (mean_term + scale_term).max(0.0),
        DivergenceKind::Kl,
    ))
}

/// `KL(Q || P) = sum q_i ln(q_i / p_i)` with `0 ln 0 = 0`.
pub fn kl_discrete(q: &DiscreteMeasure, p: &DiscreteMeasure) -> Result<DivergenceValue> {
    if q.len() != p.len() {
        return Err(Error::invalid("measures live on different supports"));
    }
    let mut kl = 0.0;
    for (&qi, &pi) in q.weights().iter().zip(p.weights()) {
        if qi == 0.0 {
            continue;
        }
        if pi == 0.0 {
            return Err(Error::Undefined(
                "posterior is not absolutely continuous w.r.t. prior".into(),
            ));
        }
        kl += qi * (qi / pi).ln();
    }
    Ok(DivergenceValue::known(kl.max(0.0), DivergenceKind::Kl))
}

fn check_unit(x: f64, name: &str) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} must lie in [0, 1], got {x}"
        )))
    }
}

fn xlogy_ratio(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// Bernoulli relative entropy `kl(p || q)`; undefined when `q` is 0 or 1
/// and differs from `p`.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<DivergenceValue> {
    check_unit(p, "p")?;
    check_unit(q, "q")?;
    if p == q {
        return Ok(DivergenceValue::known(0.0, DivergenceKind::BernoulliKl));
    }
    if q == 0.0 || q == 1.0 {
        return Err(Error::Undefined(format!("kl({p} || {q}) is undefined")));
    }
    let v = xlogy_ratio(p, q) + xlogy_ratio(1.0 - p, 1.0 - q);
    Ok(DivergenceValue::known(
        v.max(0.0),
        DivergenceKind::BernoulliKl,
    ))
}

/// Largest `q` in `[p, 1]` with `kl(p || q) <= eps`, by bisection.
pub fn kl_bernoulli_inverse_upper(p: f64, eps: f64) -> Result<f64> {
    check_unit(p, "p")?;
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::invalid(format!(
            "eps must be finite and >= 0, got {eps}"
        )));
    }
    if eps == 0.0 || p == 1.0 {
        return Ok(p);
    }
    let kl = |q: f64| -> f64 {
        if q >= 1.0 {
            f64::INFINITY
        } else {
            xlogy_ratio(p, q) + xlogy_ratio(1.0 - p, 1.0 - q)
        }
    };
    let (mut lo, mut hi) = (p, 1.0);
    // Runs to machine resolution, well inside the 1e-12 target.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if kl(mid) <= eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Total variation `(1/2) sum |q_i - p_i|`.
pub fn tv_discrete(q: &DiscreteMeasure, p: &DiscreteMeasure) -> Result<DivergenceValue> {
    if q.len() != p.len() {
        return Err(Error::invalid("measures live on different supports"));
    }
    let tv = 0.5
        * q.weights()
            .iter()
            .zip(p.weights())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    Ok(DivergenceValue::known(
        tv.clamp(0.0, 1.0),
        DivergenceKind::Tv,
    ))
}

/// Exact 1-Wasserstein distance between two measures on a finite metric space.
pub fn w1_discrete_exact(
    q: &DiscreteMeasure,
    p: &DiscreteMeasure,
    space: &FiniteMetricSpace,
) -> Result<DivergenceValue> {
    if q.len() != space.size() || p.len() != space.size() {
        return Err(Error::invalid(format!(
            "measures of size {} and {} do not live on a space of size {}",
            q.len(),
            p.len(),
            space.size()
        )));
    }
    let plan = transport::solve(q.weights(), p.weights(), space.matrix())?;
    Ok(DivergenceValue::known(
        plan.cost.max(0.0),
        DivergenceKind::W1Exact,
    ))
}

/// `W2` between isotropic Gaussians: `sqrt(|mu_Q - mu_P|^2 + d (s_Q - s_P)^2)`.
pub fn w2_gaussian(q: &GaussianMeasure, p: &GaussianMeasure) -> Result<DivergenceValue> {
    same_dim(q, p)?;
    let ds = q.sigma() - p.sigma();
    let v = (sq_dist(q.mean(), p.mean()) + q.dim() as f64 * ds * ds).sqrt();
    Ok(DivergenceValue::known(v, DivergenceKind::W2Gaussian))
}

/// Upper bound on `W1(N, proj # N)`: the mass a Gaussian moves when pushed
/// onto the ball of radius `r`, `sqrt(pi/2) s erfc((r - sqrt(|mu|^2 + d s^2)) / (sqrt(2) s))`.
/// Exactly 0 for a point mass.
pub fn projection_tail(g: &GaussianMeasure, r: f64) -> f64 {
    let s = g.sigma();
    if s == 0.0 {
        return 0.0;
    }
    (PI / 2.0).sqrt() * s * erfc((r - g.second_moment().sqrt()) / (2f64.sqrt() * s))
}

/// Gradient of [`projection_tail`] with respect to the mean:
/// `exp(-u^2) mu / sqrt(|mu|^2 + d s^2)` with `u` the erfc argument.
pub fn projection_tail_grad_mean(g: &GaussianMeasure, r: f64) -> Vec<f64> {
    let s = g.sigma();
    if s == 0.0 {
        return vec![0.0; g.dim()];
    }
    let root = g.second_moment().sqrt();
    let u = (r - root) / (2f64.sqrt() * s);
    let w = (-u * u).exp() / root;
    g.mean().iter().map(|m| w * m).collect()
}

/// The three additive pieces of the projected-Gaussian W1 bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectedW1Terms {
    pub gaussian_w2: f64,
    pub posterior_tail: f64,
    pub prior_tail: f64,
}

impl ProjectedW1Terms {
    pub fn total(&self) -> f64 {
        self.gaussian_w2 + self.posterior_tail + self.prior_tail
    }
}

/// Checks `r^2 >= |mu|^2 + d s^2`, the condition for the tail bound.
pub fn check_projection_precondition(g: &GaussianMeasure, r: f64, name: &str) -> Result<()> {
    let m2 = g.second_moment();
    if r * r >= m2 {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "{name}: radius^2 = {} < |mu|^2 + d sigma^2 = {m2}",
            r * r
        )))
    }
}

pub fn w1_projected_gaussian_terms(
    q: &ProjectedGaussianMeasure,
    p: &ProjectedGaussianMeasure,
) -> Result<ProjectedW1Terms> {
    same_dim(q.base(), p.base())?;
    if q.radius() != p.radius() {
        return Err(Error::invalid(format!(
            "projection radii differ: {} vs {}",
            q.radius(),
            p.radius()
        )));
    }
    let r = q.radius();
    check_projection_precondition(q.base(), r, "posterior Q")?;
    check_projection_precondition(p.base(), r, "prior P")?;
    Ok(ProjectedW1Terms {
        gaussian_w2: w2_gaussian(q.base(), p.base())?.value,
        posterior_tail: projection_tail(q.base(), r),
        prior_tail: projection_tail(p.base(), r),
    })
}

/// Closed-form upper bound on `W1(Q, P)` for ball-projected Gaussians:
/// Gaussian W2 plus the two projection tails.
pub fn w1_projected_gaussian_upper(
    q: &ProjectedGaussianMeasure,
    p: &ProjectedGaussianMeasure,
) -> Result<DivergenceValue> {
    let terms = w1_projected_gaussian_terms(q, p)?;
    Ok(DivergenceValue::known(
        terms.total(),
        DivergenceKind::W1ProjGaussUpper,
    ))
}

/// Euclidean distance, the W1 between two point masses.
pub fn dirac_distance(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&diff)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(mean: Vec<f64>, s: f64) -> GaussianMeasure {
        GaussianMeasure::new(mean, s).unwrap()
    }

    fn proj(mean: Vec<f64>, s: f64, r: f64) -> ProjectedGaussianMeasure {
        ProjectedGaussianMeasure::new(gauss(mean, s), r).unwrap()
    }

    #[test]
    fn kl_gaussian_examples() {
        let p = gauss(vec![0.3, -0.2], 0.7);
        assert_eq!(kl_gaussian_isotropic(&p, &p).unwrap().value, 0.0);
        let v = kl_gaussian_isotropic(&gauss(vec![1.0], 1.0), &gauss(vec![0.0], 1.0)).unwrap();
        assert!((v.value - 0.5).abs() < 1e-15);
        let v = kl_gaussian_isotropic(&gauss(vec![0.0; 10], 1e-3), &gauss(vec![0.0; 10], 1e-2))
            .unwrap();
        assert!((v.value - 18.07585092994045684).abs() < 1e-12);
    }

    #[test]
    fn kl_gaussian_zero_sigma_is_undefined() {
        let e = kl_gaussian_isotropic(&gauss(vec![0.0], 1e-3), &gauss(vec![0.0], 0.0)).unwrap_err();
        assert!(e.is_undefined());
        let e = kl_gaussian_isotropic(&gauss(vec![0.0], 0.0), &gauss(vec![0.0], 1.0)).unwrap_err();
        assert!(e.is_undefined());
    }

    #[test]
    fn kl_bernoulli_examples() {
        assert_eq!(kl_bernoulli(0.3, 0.3).unwrap().value, 0.0);
        let v = kl_bernoulli(0.5, 0.25).unwrap().value;
        assert!((v - 0.14384103622589046).abs() < 1e-15);
        assert!(kl_bernoulli(0.0, 1.0).unwrap_err().is_undefined());
        assert!(kl_bernoulli(0.2, 0.0).unwrap_err().is_undefined());
        assert_eq!(kl_bernoulli(0.0, 0.0).unwrap().value, 0.0);
        assert!(kl_bernoulli(1.2, 0.5).is_err());
    }

    #[test]
    fn kl_inverse_examples() {
        assert_eq!(kl_bernoulli_inverse_upper(0.37, 0.0).unwrap(), 0.37);
        let q = kl_bernoulli_inverse_upper(0.0, 2f64.ln()).unwrap();
        assert!((q - 0.5).abs() < 1e-12);
        assert_eq!(kl_bernoulli_inverse_upper(1.0, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn tv_examples() {
        let a = DiscreteMeasure::new(vec![0.7, 0.3]).unwrap();
        let b = DiscreteMeasure::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(tv_discrete(&a, &a).unwrap().value, 0.0);
        assert!((tv_discrete(&a, &b).unwrap().value - 0.4).abs() < 1e-15);
        let e0 = DiscreteMeasure::point_mass(2, 0).unwrap();
        let e1 = DiscreteMeasure::point_mass(2, 1).unwrap();
        assert_eq!(tv_discrete(&e0, &e1).unwrap().value, 1.0);
        assert!(tv_discrete(&a, &DiscreteMeasure::uniform(3).unwrap()).is_err());
    }

    #[test]
    fn w1_examples() {
        let space = FiniteMetricSpace::on_line(&[0.0, 2.0]).unwrap();
        let a = DiscreteMeasure::new(vec![0.7, 0.3]).unwrap();
        let b = DiscreteMeasure::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(w1_discrete_exact(&a, &a, &space).unwrap().value, 0.0);
        let e0 = DiscreteMeasure::point_mass(2, 0).unwrap();
        let e1 = DiscreteMeasure::point_mass(2, 1).unwrap();
        assert!((w1_discrete_exact(&e0, &e1, &space).unwrap().value - 2.0).abs() < 1e-15);
        assert!((w1_discrete_exact(&a, &b, &space).unwrap().value - 0.8).abs() < 1e-12);
    }

    #[test]
    fn w2_examples() {
        let a = gauss(vec![0.0], 1.0);
        let b = gauss(vec![3.0], 2.0);
        assert_eq!(w2_gaussian(&a, &a).unwrap().value, 0.0);
        assert!((w2_gaussian(&a, &b).unwrap().value - 10f64.sqrt()).abs() < 1e-15);
        let c = gauss(vec![1.0, 2.0], 0.0);
        let d = gauss(vec![4.0, 6.0], 0.0);
        assert_eq!(w2_gaussian(&c, &d).unwrap().value, 5.0);
    }

    #[test]
    fn projected_upper_examples() {
        // Point masses: exactly the mean distance.
        let q = proj(vec![0.03, 0.04], 0.0, 1.0);
        let p = proj(vec![0.0, 0.0], 0.0, 1.0);
        assert!((w1_projected_gaussian_upper(&q, &p).unwrap().value - 0.05).abs() < 1e-15);

        // Identical narrow measures: the tails are far below any representable scale.
        let q = proj(vec![0.0; 10], 1e-3, 1.0);
        let terms = w1_projected_gaussian_terms(&q, &q).unwrap();
        assert_eq!(terms.gaussian_w2, 0.0);
        assert!(terms.posterior_tail < 1e-300 && terms.prior_tail < 1e-300);

        let q = proj(vec![0.0; 10], 1e-3, 1.0);
        let p = proj(vec![0.0; 10], 1e-2, 1.0);
        let v = w1_projected_gaussian_upper(&q, &p).unwrap().value;
        assert!((v - 0.028460498941515414).abs() < 1e-15);
    }

    #[test]
    fn projected_upper_precondition() {
        let q = proj(vec![0.9, 0.0], 0.5, 1.0);
        let p = proj(vec![0.0, 0.0], 0.1, 1.0);
        match w1_projected_gaussian_upper(&q, &p) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("posterior Q")),
            other => panic!("expected precondition error, got {other:?}"),
        }
        match w1_projected_gaussian_upper(&p, &q) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("prior P")),
            other => panic!("expected precondition error, got {other:?}"),
        }
        let r2 = proj(vec![0.0, 0.0], 0.1, 2.0);
        assert!(w1_projected_gaussian_upper(&p, &r2).is_err());
    }

    #[test]
    fn tail_gradient_matches_finite_differences() {
        let mean = vec![0.3, -0.2, 0.1];
        let (s, r) = (0.25, 0.8);
        let g = projection_tail_grad_mean(&gauss(mean.clone(), s), r);
        for k in 0..3 {
            let h = 1e-6;
            let mut up = mean.clone();
            up[k] += h;
            let mut dn = mean.clone();
            dn[k] -= h;
            let fd =
                (projection_tail(&gauss(up, s), r) - projection_tail(&gauss(dn, s), r)) / (2.0 * h);
            assert!(
                (fd - g[k]).abs() <= 1e-7 * fd.abs().max(1e-3),
                "{k}: {fd} vs {}",
                g[k]
            );
        }
    }
}
