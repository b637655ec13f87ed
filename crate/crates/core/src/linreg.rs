//! Linear regression with Gaussian posteriors over the weight vector.
//!
//! Loss `(h.x - y)^2 / 4` with `|x| <= 0.1` and targets clipped to `[-1, 1]`.
//! The posterior mean is trained by projected Adam on either the
//! Wasserstein or the KL risk bound, using analytic gradients.

use serde::{Deserialize, Serialize};

use crate::bounds::{klpb_linreg, uc_linreg, ucg_linreg, wpb_linreg};
use crate::divergences::{projection_tail_grad_mean, w1_projected_gaussian_upper, w2_gaussian};
use crate::error::{Error, Result};
use crate::measures::{
    norm2, project_ball, sample_uniform_ball, GaussianMeasure, ProjectedGaussianMeasure,
    RandomSource,
};

pub const X_RADIUS: f64 = 0.1;
pub const LATENT_RADIUS: f64 = 0.1;
pub const NOISE_HALF_WIDTH: f64 = 0.5;

/// A data distribution determined by the latent vector `g`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionTask {
    g: Vec<f64>,
    x_radius: f64,
    noise_half_width: f64,
}

impl RegressionTask {
    pub fn new(g: Vec<f64>) -> Result<Self> {
        Self::with_x_radius(g, X_RADIUS)
    }

    pub fn with_x_radius(g: Vec<f64>, x_radius: f64) -> Result<Self> {
        if !(x_radius.is_finite() && x_radius > 0.0) {
            return Err(Error::invalid(format!(
                "x radius must be > 0, got {x_radius}"
            )));
        }
        if g.is_empty() {
            return Err(Error::invalid("latent vector must be non-empty"));
        }
        if norm2(&g) > LATENT_RADIUS {
            return Err(Error::invalid(
                "latent vector must lie in the ball of radius 0.1",
            ));
        }
        Ok(Self {
            g,
            x_radius,
            noise_half_width: NOISE_HALF_WIDTH,
        })
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn d(&self) -> usize {
        self.g.len()
    }

    pub fn x_radius(&self) -> f64 {
        self.x_radius
    }

    pub fn noise_half_width(&self) -> f64 {
        self.noise_half_width
    }
}

/// Training or test sample: rows `x[i]` with targets `y[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::invalid("need matching, non-empty x and y"));
        }
        let d = x[0].len();
        if d == 0 || x.iter().any(|row| row.len() != d) {
            return Err(Error::invalid("rows must share a positive dimension"));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("inputs must be finite"));
        }
        if y.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::invalid("targets must lie in [-1, 1]"));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn d(&self) -> usize {
        self.x[0].len()
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Posterior `N(mu_q, sigma_q^2 I)` with the mean confined to the ball of radius `r_q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorParams {
    pub mu_q: Vec<f64>,
    pub sigma_q: f64,
    pub r_q: f64,
}

impl PosteriorParams {
    pub fn zero(d: usize, sigma_q: f64, r_q: f64) -> Result<Self> {
        let p = Self {
            mu_q: vec![0.0; d],
            sigma_q,
            r_q,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_q.is_finite() && self.sigma_q >= 0.0) {
            return Err(Error::invalid("sigma_q must be finite and >= 0"));
        }
        if !(self.r_q.is_finite() && self.r_q > 0.0) {
            return Err(Error::invalid("r_q must be > 0"));
        }
        if norm2(&self.mu_q) > self.r_q {
            return Err(Error::invalid("posterior mean lies outside its ball"));
        }
        Ok(())
    }

    pub fn gaussian(&self) -> Result<GaussianMeasure> {
        GaussianMeasure::new(self.mu_q.clone(), self.sigma_q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub config: AdamConfig,
}

impl OptimizerState {
    pub fn new(d: usize, config: AdamConfig) -> Self {
        Self {
            step: 0,
            m1: vec![0.0; d],
            m2: vec![0.0; d],
            config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "WPB")]
    Wpb,
    #[serde(rename = "KLPB")]
    Klpb,
}

pub fn generate_task(rng: &mut RandomSource, d: usize) -> Result<RegressionTask> {
    RegressionTask::new(sample_uniform_ball(rng, d, LATENT_RADIUS)?)
}

/// Same as [`generate_task`] with a non-default input radius.
pub fn generate_task_with_x_radius(
    rng: &mut RandomSource,
    d: usize,
    x_radius: f64,
) -> Result<RegressionTask> {
    RegressionTask::with_x_radius(sample_uniform_ball(rng, d, LATENT_RADIUS)?, x_radius)
}

pub fn sample_dataset(rng: &mut RandomSource, task: &RegressionTask, m: usize) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    let mut x = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    for _ in 0..m {
        let xi = sample_uniform_ball(rng, task.d(), task.x_radius)?;
        let noise = rng.uniform_range(-task.noise_half_width, task.noise_half_width);
        y.push((dot(task.g(), &xi) + noise).clamp(-1.0, 1.0));
        x.push(xi);
    }
    Ok(Dataset { x, y })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(data: &Dataset, post: &PosteriorParams) -> Result<()> {
    if data.d() != post.mu_q.len() {
        return Err(Error::invalid(format!(
            "data dimension {} does not match posterior dimension {}",
            data.d(),
            post.mu_q.len()
        )));
    }
    Ok(())
}

/// Expected loss of `N(mu_q, sigma_q^2 I)` on the sample:
/// `(|X mu_q - Y|^2 + sigma_q^2 |X|_F^2) / (4m)`.
pub fn empirical_risk_closed_form(data: &Dataset, post: &PosteriorParams) -> Result<f64> {
    check_dims(data, post)?;
    let s2 = post.sigma_q * post.sigma_q;
    let total: f64 = data
        .x
        .iter()
        .zip(&data.y)
        .map(|(xi, yi)| {
            let r = dot(xi, &post.mu_q) - yi;
            r * r + s2 * dot(xi, xi)
        })
        .sum();
    Ok(total / (4.0 * data.len() as f64))
}

/// Gradient of the closed-form risk in `mu_q`: `X^T (X mu_q - Y) / (2m)`.
pub fn empirical_risk_gradient(data: &Dataset, post: &PosteriorParams) -> Result<Vec<f64>> {
    check_dims(data, post)?;
    Ok(risk_gradient(data, &post.mu_q))
}

fn risk_gradient(data: &Dataset, mu: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; mu.len()];
    for (xi, yi) in data.x.iter().zip(&data.y) {
        let r = dot(xi, mu) - yi;
        for (gk, xk) in g.iter_mut().zip(xi) {
            *gk += r * xk;
        }
    }
    let scale = 1.0 / (2.0 * data.len() as f64);
    g.iter_mut().for_each(|v| *v *= scale);
    g
}

fn projected_posterior(post: &PosteriorParams, r: f64) -> Result<ProjectedGaussianMeasure> {
    ProjectedGaussianMeasure::new(post.gaussian()?, r)
}

/// Wasserstein risk bound evaluated at the posterior. `r` is the radius of
/// the hypothesis ball; the prior must be projected onto the same ball.
pub fn wpb_objective(
    data: &Dataset,
    post: &PosteriorParams,
    prior: &ProjectedGaussianMeasure,
    delta: f64,
    r: f64,
) -> Result<f64> {
    wpb_objective_with_m(data, data.len(), post, prior, delta, r)
}

fn wpb_objective_with_m(
    data: &Dataset,
    m: usize,
    post: &PosteriorParams,
    prior: &ProjectedGaussianMeasure,
    delta: f64,
    r: f64,
) -> Result<f64> {
    let jhat = empirical_risk_closed_form(data, post)?;
    let w = w1_projected_gaussian_upper(&projected_posterior(post, prior.radius())?, prior)?;
    Ok(wpb_linreg(jhat, w, m, delta, data.d(), r)?.bound_value)
}

/// KL risk bound evaluated at the posterior. Undefined when either sigma is zero.
pub fn klpb_objective(
    data: &Dataset,
    post: &PosteriorParams,
    prior: &GaussianMeasure,
    delta: f64,
) -> Result<f64> {
    klpb_objective_with_m(data, data.len(), post, prior, delta)
}

fn klpb_objective_with_m(
    data: &Dataset,
    m: usize,
    post: &PosteriorParams,
    prior: &GaussianMeasure,
    delta: f64,
) -> Result<f64> {
    let jhat = empirical_risk_closed_form(data, post)?;
    Ok(klpb_linreg(jhat, &post.gaussian()?, prior, m, delta)?.bound_value)
}

/// Value of the selected objective.
pub fn objective_value(
    data: &Dataset,
    post: &PosteriorParams,
    prior: &ProjectedGaussianMeasure,
    delta: f64,
    which: Objective,
) -> Result<f64> {
    match which {
        Objective::Wpb => wpb_objective(data, post, prior, delta, prior.radius()),
        Objective::Klpb => klpb_objective(data, post, prior.base(), delta),
    }
}

/// Analytic gradient of the selected objective with respect to `mu_q`.
///
/// Where the Gaussian W2 term is not differentiable (equal means and equal
/// sigmas) its contribution is taken to be zero, a valid subgradient.
pub fn objective_gradient(
    data: &Dataset,
    post: &PosteriorParams,
    prior: &ProjectedGaussianMeasure,
    delta: f64,
    which: Objective,
) -> Result<Vec<f64>> {
    objective_gradient_with_m(data, data.len(), post, prior, delta, which)
}

/// `m` is the training-set size used by the complexity term; `data` may be a mini-batch.
fn objective_gradient_with_m(
    data: &Dataset,
    m: usize,
    post: &PosteriorParams,
    prior: &ProjectedGaussianMeasure,
    delta: f64,
    which: Objective,
) -> Result<Vec<f64>> {
    check_dims(data, post)?;
    let q = post.gaussian()?;
    let p = prior.base();
    let mut grad = risk_gradient(data, &post.mu_q);
    let diff: Vec<f64> = q.mean().iter().zip(p.mean()).map(|(a, b)| a - b).collect();
    let mf = m as f64;
    let d = data.d();
    match which {
        Objective::Wpb => {
            let r = prior.radius();
            let qp = ProjectedGaussianMeasure::new(q.clone(), r)?;
            let w = w1_projected_gaussian_upper(&qp, prior)?.value;
            let k = uc_linreg(m, delta / 4.0, d)? * ucg_linreg(m, delta / 4.0, d, r)?;
            let root = (2.0 * k * w + (2.0 * mf / delta).ln() / (2.0 * (mf - 1.0))).sqrt();
            let outer = k / root;
            let w2 = w2_gaussian(&q, p)?.value;
            let tail = projection_tail_grad_mean(&q, r);
            for (i, g) in grad.iter_mut().enumerate() {
                let w2_part = if w2 > 0.0 { diff[i] / w2 } else { 0.0 };
                *g += outer * (w2_part + tail[i]);
            }
        }
        Objective::Klpb => {
            let kl = crate::divergences::kl_gaussian_isotropic(&q, p)?.value;
            let denom = 2.0 * (mf - 1.0);
            let root = ((kl + (mf / delta).ln()) / denom).sqrt();
            let s2 = p.sigma() * p.sigma();
            for (g, dk) in grad.iter_mut().zip(&diff) {
                *g += dk / s2 / denom / (2.0 * root);
            }
        }
    }
    Ok(grad)
}

/// One Adam step on `mu_q` followed by projection onto the ball of radius `r_q`.
pub fn adam_project_step(
    state: &mut OptimizerState,
    post: &PosteriorParams,
    grad: &[f64],
) -> Result<PosteriorParams> {
    if grad.len() != post.mu_q.len() || state.m1.len() != grad.len() {
        return Err(Error::invalid(
            "gradient, moments and parameters must share a dimension",
        ));
    }
    let c = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let mut mu = post.mu_q.clone();
    for i in 0..mu.len() {
        state.m1[i] = c.beta1 * state.m1[i] + (1.0 - c.beta1) * grad[i];
        state.m2[i] = c.beta2 * state.m2[i] + (1.0 - c.beta2) * grad[i] * grad[i];
        let mhat = state.m1[i] / bc1;
        let vhat = state.m2[i] / bc2;
        mu[i] -= c.lr * mhat / (vhat.sqrt() + c.eps);
    }
    Ok(PosteriorParams {
        mu_q: project_ball(&mu, post.r_q)?,
        sigma_q: post.sigma_q,
        r_q: post.r_q,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub sigma_q: f64,
    pub r_q: f64,
    pub delta: f64,
    pub max_batch: usize,
    pub max_epochs: usize,
    /// Stop once the full-data objective changes by less than this over an epoch.
    pub tol: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Klpb,
            sigma_q: 1e-3,
            r_q: 0.05,
            delta: 0.05,
            max_batch: 256,
            max_epochs: 2000,
            tol: 1e-8,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainOutcome {
    pub posterior: PosteriorParams,
    pub epochs: usize,
    pub converged: bool,
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// Mini-batch projected Adam from `mu_q = 0`. Each epoch visits a fresh
/// shuffle in batches of `min(m, max_batch)`; the final iterate is returned.
pub fn train_posterior(
    rng: &mut RandomSource,
    data: &Dataset,
    prior: &ProjectedGaussianMeasure,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if config.max_batch == 0 || config.max_epochs == 0 {
        return Err(Error::invalid("batch size and epoch cap must be positive"));
    }
    if prior.dim() != data.d() {
        return Err(Error::invalid("prior dimension does not match data"));
    }
    let m = data.len();
    let eval = |post: &PosteriorParams| -> Result<f64> {
        match config.objective {
            Objective::Wpb => {
                wpb_objective_with_m(data, m, post, prior, config.delta, prior.radius())
            }
            Objective::Klpb => klpb_objective_with_m(data, m, post, prior.base(), config.delta),
        }
    };
    let mut post = PosteriorParams::zero(data.d(), config.sigma_q, config.r_q)?;
    let mut state = OptimizerState::new(data.d(), config.adam);
    let initial = eval(&post)?;
    let mut prev = initial;
    let batch = m.min(config.max_batch);
    let mut order: Vec<usize> = (0..m).collect();
    let mut epochs = 0;
    let mut converged = false;
    while epochs < config.max_epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(batch) {
            let b = if chunk.len() == m {
                data.clone()
            } else {
                data.subset(chunk)
            };
            let g = objective_gradient_with_m(&b, m, &post, prior, config.delta, config.objective)?;
            post = adam_project_step(&mut state, &post, &g)?;
        }
        epochs += 1;
        let cur = eval(&post)?;
        if (prev - cur).abs() < config.tol {
            prev = cur;
            converged = true;
            break;
        }
        prev = cur;
    }
    Ok(TrainOutcome {
        posterior: post,
        epochs,
        converged,
        initial_objective: initial,
        final_objective: prev,
    })
}

/// Risk of the posterior on `n_test` fresh samples from the task.
pub fn test_risk_monte_carlo(
    rng: &mut RandomSource,
    task: &RegressionTask,
    post: &PosteriorParams,
    n_test: usize,
) -> Result<f64> {
    if n_test == 0 {
        return Err(Error::invalid("n_test must be >= 1"));
    }
    let test = sample_dataset(rng, task, n_test)?;
    empirical_risk_closed_form(&test, post)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset {
            x: vec![vec![1.0, 0.0]],
            y: vec![1.0],
        }
    }

    fn post(mu: Vec<f64>, sigma: f64) -> PosteriorParams {
        PosteriorParams {
            mu_q: mu,
            sigma_q: sigma,
            r_q: 2.0,
        }
    }

    #[test]
    fn closed_form_risk_examples() {
        let data = tiny();
        assert_eq!(
            empirical_risk_closed_form(&data, &post(vec![1.0, 0.0], 0.0)).unwrap(),
            0.0
        );
        let v = empirical_risk_closed_form(&data, &post(vec![1.0, 0.0], 0.2)).unwrap();
        assert!((v - 0.01).abs() < 1e-15);
        let v = empirical_risk_closed_form(&data, &post(vec![0.0, 0.0], 0.2)).unwrap();
        assert!((v - 0.26).abs() < 1e-15);
    }

    #[test]
    fn task_and_data_invariants() {
        let mut rng = RandomSource::new(3);
        let task = generate_task(&mut rng, 10).unwrap();
        assert!(norm2(task.g()) <= 0.1);
        let data = sample_dataset(&mut rng, &task, 500).unwrap();
        assert!(data.y().iter().all(|y| y.abs() <= 1.0));
        assert!(data.x().iter().all(|x| norm2(x) <= 0.1));
        let again = generate_task(&mut RandomSource::new(3), 10).unwrap();
        assert_eq!(task, again);

        let zero = RegressionTask::new(vec![0.0; 4]).unwrap();
        let mut a = RandomSource::new(9);
        let data = sample_dataset(&mut a, &zero, 50).unwrap();
        let mut b = RandomSource::new(9);
        for y in data.y() {
            sample_uniform_ball(&mut b, 4, 0.1).unwrap();
            assert_eq!(*y, b.uniform_range(-0.5, 0.5));
        }
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let p = PosteriorParams {
            mu_q: vec![0.01, -0.02],
            sigma_q: 0.0,
            r_q: 0.05,
        };
        let mut st = OptimizerState::new(2, AdamConfig::default());
        let next = adam_project_step(&mut st, &p, &[0.0, 0.0]).unwrap();
        assert_eq!(next, p);
        let far = adam_project_step(&mut st, &p, &[-1e6, 1e6]).unwrap();
        assert!(norm2(&far.mu_q) <= 0.05);
    }
}
