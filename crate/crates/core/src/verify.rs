//! Independent checks of the library's formulas: brute-force transport,
//! finite-difference gradients, Monte-Carlo validity of the bounds, and
//! Monte-Carlo checks of the closed-form risk and W1 upper bound.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::bounds::{klpb_classic, seeger_tv_finite, tvpb_from_uc, uc_finite_class, wpb_finite};
use crate::divergences::{
    kl_discrete, transport, tv_discrete, w1_discrete_exact, w1_projected_gaussian_upper,
};
use crate::error::{Error, Result};
use crate::linreg::{
    empirical_risk_closed_form, empirical_risk_gradient, generate_task, objective_gradient,
    objective_value, sample_dataset, Dataset, Objective, PosteriorParams, RegressionTask,
};
use crate::measures::{
    norm2, project_ball, sample_uniform_ball, DiscreteMeasure, FiniteMetricSpace, GaussianMeasure,
    ProjectedGaussianMeasure, RandomSource,
};

/// Outcome of a repeated check: `pass` iff `violations / trials <= delta + slack`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    pub delta: f64,
    pub slack: f64,
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl ValidityReport {
    fn new(name: &str, trials: usize, violations: usize, delta: f64, slack: f64) -> Self {
        let rate = if trials == 0 {
            0.0
        } else {
            violations as f64 / trials as f64
        };
        Self {
            name: name.to_string(),
            trials,
            violations,
            delta,
            slack,
            pass: rate <= delta + slack,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    /// Zero-tolerance report: passes only without violations.
    fn exact(name: &str, trials: usize, violations: usize) -> Self {
        Self::new(name, trials, violations, 0.0, 0.0)
    }

    fn metric(mut self, key: &str, value: f64) -> Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    fn note(mut self, text: &str) -> Self {
        self.notes.push(text.to_string());
        self
    }

    pub fn violation_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.violations as f64 / self.trials as f64
        }
    }
}

/// Two-sigma binomial allowance `2 sqrt(delta (1 - delta) / trials)`.
pub fn binomial_slack(delta: f64, trials: usize) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    2.0 * (delta * (1.0 - delta) / trials as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Transport oracles

pub const BRUTEFORCE_PRIMAL_MAX: usize = 4;
pub const BRUTEFORCE_DUAL_MAX: usize = 5;

fn check_transport_args(
    q: &DiscreteMeasure,
    p: &DiscreteMeasure,
    space: &FiniteMetricSpace,
    max: usize,
) -> Result<usize> {
    let n = space.size();
    if n > max {
        return Err(Error::UnsupportedSize { size: n, max });
    }
    if q.len() != n || p.len() != n {
        return Err(Error::invalid("measures and space differ in size"));
    }
    Ok(n)
}

/// Minimum transport cost by enumerating every vertex of the coupling
/// polytope. Vertices are supported on spanning trees of the complete
/// bipartite row/column graph, so each `(2n-1)`-cell subset that forms a
/// tree is solved by peeling leaves and kept if non-negative.
pub fn w1_bruteforce_oracle(
    q: &DiscreteMeasure,
    p: &DiscreteMeasure,
    space: &FiniteMetricSpace,
) -> Result<f64> {
    let n = check_transport_args(q, p, space, BRUTEFORCE_PRIMAL_MAX)?;
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = 2 * n - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(k);
    for_each_subset(cells.len(), k, &mut chosen, &mut |subset| {
        let edges: Vec<(usize, usize)> = subset.iter().map(|&c| cells[c]).collect();
        if let Some(flow) = peel_tree(n, &edges, q.weights(), p.weights()) {
            let cost: f64 = edges
                .iter()
                .zip(&flow)
                .map(|(&(i, j), f)| f * space.dist(i, j))
                .sum();
            best = best.min(cost);
        }
    });
    Ok(best.max(0.0))
}

fn for_each_subset(n: usize, k: usize, chosen: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    let start = chosen.last().map_or(0, |&c| c + 1);
    let need = k - chosen.len();
    for c in start..=(n - need) {
        chosen.push(c);
        for_each_subset(n, k, chosen, f);
        chosen.pop();
    }
}

/// Flow on a tree support matching the marginals, or `None` if `edges`
/// is not a spanning tree or the flow is negative somewhere.
fn peel_tree(n: usize, edges: &[(usize, usize)], rows: &[f64], cols: &[f64]) -> Option<Vec<f64>> {
    // Nodes: rows 0..n, columns n..2n.
    let mut rem: Vec<f64> = rows.iter().chain(cols).copied().collect();
    let mut degree = vec![0usize; 2 * n];
    for &(i, j) in edges {
        degree[i] += 1;
        degree[n + j] += 1;
    }
    if degree.iter().any(|&d| d == 0) {
        return None;
    }
    let mut alive = vec![true; edges.len()];
    let mut flow = vec![0.0; edges.len()];
    for _ in 0..edges.len() {
        let leaf = (0..2 * n).find(|&v| degree[v] == 1)?;
        let e = (0..edges.len())
            .find(|&e| alive[e] && (edges[e].0 == leaf || n + edges[e].1 == leaf))?;
        let (i, j) = edges[e];
        let other = if leaf == i { n + j } else { i };
        let amount = rem[leaf];
        if amount < -1e-12 {
            return None;
        }
        flow[e] = amount.max(0.0);
        rem[leaf] = 0.0;
        rem[other] -= amount;
        alive[e] = false;
        degree[leaf] -= 1;
        degree[other] -= 1;
    }
    // A cycle would leave edges without leaves; balance is then automatic.
    if rem.iter().any(|r| r.abs() > 1e-9) {
        return None;
    }
    Some(flow)
}

/// Maximum of `sum_i f_i (q_i - p_i)` over 1-Lipschitz potentials `f`, by
/// enumerating vertices of the potential polyhedron (with `f_0 = 0`).
/// Each vertex is fixed by a spanning tree of tight constraints
/// `f_child = f_parent +/- d(child, parent)`.
pub fn kantorovich_dual_bruteforce(
    q: &DiscreteMeasure,
    p: &DiscreteMeasure,
    space: &FiniteMetricSpace,
) -> Result<f64> {
    let n = check_transport_args(q, p, space, BRUTEFORCE_DUAL_MAX)?;
    if n == 1 {
        return Ok(0.0);
    }
    let diff: Vec<f64> = q
        .weights()
        .iter()
        .zip(p.weights())
        .map(|(a, b)| a - b)
        .collect();
    let tol = 1e-12 * space.diameter().max(1.0);
    let mut best = f64::NEG_INFINITY;
    let mut parent = vec![0usize; n];
    let choices = (n - 1).pow((n - 1) as u32);
    for code in 0..choices {
        let mut c = code;
        for (v, slot) in parent.iter_mut().enumerate().skip(1) {
            let k = c % (n - 1);
            c /= n - 1;
            *slot = if k >= v { k + 1 } else { k };
        }
        let Some(order) = tree_order(&parent) else {
            continue;
        };
        for signs in 0..(1u32 << (n - 1)) {
            let mut f = vec![0.0; n];
            for &v in &order {
                let s = if signs >> (v - 1) & 1 == 1 { 1.0 } else { -1.0 };
                f[v] = f[parent[v]] + s * space.dist(v, parent[v]);
            }
            let feasible =
                (0..n).all(|i| (0..i).all(|j| (f[i] - f[j]).abs() <= space.dist(i, j) + tol));
            if feasible {
                best = best.max(f.iter().zip(&diff).map(|(a, b)| a * b).sum());
            }
        }
    }
    Ok(best.max(0.0))
}

/// Nodes `1..n` ordered so every parent precedes its child; `None` on a cycle.
fn tree_order(parent: &[usize]) -> Option<Vec<usize>> {
    let n = parent.len();
    let mut placed = vec![false; n];
    placed[0] = true;
    let mut order = Vec::with_capacity(n - 1);
    while order.len() < n - 1 {
        let before = order.len();
        for v in 1..n {
            if !placed[v] && placed[parent[v]] {
                placed[v] = true;
                order.push(v);
            }
        }
        if order.len() == before {
            return None;
        }
    }
    Some(order)
}

/// Random instance on `n` points in the unit square.
pub fn random_transport_instance(
    rng: &mut RandomSource,
    n: usize,
) -> Result<(DiscreteMeasure, DiscreteMeasure, FiniteMetricSpace)> {
    let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.uniform(), rng.uniform()]).collect();
    let space = FiniteMetricSpace::from_points(&pts)?;
    let masses = |rng: &mut RandomSource| -> Result<DiscreteMeasure> {
        let m: Vec<f64> = (0..n)
            .map(|_| {
                if rng.uniform() < 0.2 {
                    0.0
                } else {
                    rng.uniform()
                }
            })
            .collect();
        if m.iter().all(|&x| x == 0.0) {
            DiscreteMeasure::uniform(n)
        } else {
            DiscreteMeasure::from_masses(&m)
        }
    };
    let q = masses(rng)?;
    let p = masses(rng)?;
    Ok((q, p, space))
}

/// Exact W1 against the primal vertex oracle (`n` in 2..=4) and the dual
/// oracle (`n` in 2..=5) on random instances. Any disagreement above `tol`
/// counts as a violation.
pub fn transport_suite(
    rng: &mut RandomSource,
    instances: usize,
    tol: f64,
) -> Result<ValidityReport> {
    let mut violations = 0;
    let mut max_primal: f64 = 0.0;
    let mut max_dual: f64 = 0.0;
    for t in 0..instances {
        let mut r = rng.fork(&[t as u64]);
        let n = 2 + t % 3;
        let (q, p, space) = random_transport_instance(&mut r, n)?;
        let exact = w1_discrete_exact(&q, &p, &space)?.value;
        let primal = w1_bruteforce_oracle(&q, &p, &space)?;
        let dual = kantorovich_dual_bruteforce(&q, &p, &space)?;
        let (e1, e2) = ((exact - primal).abs(), (exact - dual).abs());
        max_primal = max_primal.max(e1);
        max_dual = max_dual.max(e2);
        if e1 > tol || e2 > tol {
            violations += 1;
        }
    }
    for t in 0..instances / 4 {
        let mut r = rng.fork(&[1 << 32, t as u64]);
        let (q, p, space) = random_transport_instance(&mut r, 5)?;
        let e = (w1_discrete_exact(&q, &p, &space)?.value
            - kantorovich_dual_bruteforce(&q, &p, &space)?)
        .abs();
        max_dual = max_dual.max(e);
        if e > tol {
            violations += 1;
        }
    }
    Ok(
        ValidityReport::exact("transport", instances + instances / 4, violations)
            .metric("tolerance", tol)
            .metric("max_abs_error_primal", max_primal)
            .metric("max_abs_error_dual", max_dual),
    )
}

// ---------------------------------------------------------------------------
// Finite-class scenarios

/// Finite hypothesis class on a metric space, a finite data domain with a
/// known distribution, and a loss table `loss[h][z]` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteClassScenario {
    pub space: FiniteMetricSpace,
    pub loss: Vec<Vec<f64>>,
    pub data_dist: DiscreteMeasure,
    pub prior: DiscreteMeasure,
    pub lipschitz: f64,
}

impl FiniteClassScenario {
    pub fn new(
        space: FiniteMetricSpace,
        loss: Vec<Vec<f64>>,
        data_dist: DiscreteMeasure,
        prior: DiscreteMeasure,
        lipschitz: f64,
    ) -> Result<Self> {
        let n = space.size();
        let k = data_dist.len();
        if loss.len() != n || loss.iter().any(|row| row.len() != k) || prior.len() != n {
            return Err(Error::invalid(
                "loss table must be |H| x |Z| and the prior must live on H",
            ));
        }
        if loss.iter().flatten().any(|&l| !(0.0..=1.0).contains(&l)) {
            return Err(Error::invalid("losses must lie in [0, 1]"));
        }
        check_loss_lipschitz(&space, &loss, lipschitz)?;
        Ok(Self {
            space,
            loss,
            data_dist,
            prior,
            lipschitz,
        })
    }

    /// Eight hypotheses `j/7` on `[0, 1]`, sixteen data points with a skewed
    /// distribution, absolute loss (1-Lipschitz), uniform prior.
    pub fn default_line() -> Self {
        let hyps: Vec<f64> = (0..8).map(|j| j as f64 / 7.0).collect();
        let zs: Vec<f64> = (0..16).map(|k| (k as f64 + 0.5) / 16.0).collect();
        let masses: Vec<f64> = (0..16)
            .map(|k| 1.0 + (k % 4) as f64 + if k < 4 { 2.0 } else { 0.0 })
            .collect();
        let loss = hyps
            .iter()
            .map(|h| zs.iter().map(|z| (h - z).abs()).collect())
            .collect();
        Self::new(
            FiniteMetricSpace::on_line(&hyps).expect("line metric"),
            loss,
            DiscreteMeasure::from_masses(&masses).expect("positive masses"),
            DiscreteMeasure::uniform(8).expect("non-empty"),
            1.0,
        )
        .expect("default scenario is valid")
    }

    pub fn class_size(&self) -> usize {
        self.space.size()
    }

    pub fn true_risks(&self) -> Vec<f64> {
        self.loss
            .iter()
            .map(|row| self.data_dist.expect(row))
            .collect()
    }

    pub fn empirical_risks(&self, sample: &[usize]) -> Vec<f64> {
        let m = sample.len() as f64;
        self.loss
            .iter()
            .map(|row| sample.iter().map(|&z| row[z]).sum::<f64>() / m)
            .collect()
    }

    pub fn draw_sample(&self, rng: &mut RandomSource, m: usize) -> Vec<usize> {
        (0..m)
            .map(|_| draw_index(rng, self.data_dist.weights()))
            .collect()
    }
}

fn draw_index(rng: &mut RandomSource, weights: &[f64]) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn check_loss_lipschitz(space: &FiniteMetricSpace, loss: &[Vec<f64>], g: f64) -> Result<()> {
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::invalid("loss Lipschitz constant must be > 0"));
    }
    let n = space.size();
    for a in 0..n {
        for b in 0..a {
            let slack = g * space.dist(a, b) + 1e-12;
            if loss[a]
                .iter()
                .zip(&loss[b])
                .any(|(x, y)| (x - y).abs() > slack)
            {
                return Err(Error::invalid(format!(
                    "loss is not {g}-Lipschitz between hypotheses {a} and {b}"
                )));
            }
        }
    }
    Ok(())
}

/// Exact sharp Lipschitz constant of `h -> (L_D(h) - L_S(h))^2` over a
/// finite class, by enumeration of hypothesis pairs. `data_indices` is the
/// sample as indices into the data domain and `dist_weights` its true
/// distribution.
pub fn lipschitz_constant_bruteforce(
    space: &FiniteMetricSpace,
    loss_table: &[Vec<f64>],
    data_indices: &[usize],
    dist_weights: &DiscreteMeasure,
) -> Result<f64> {
    let n = space.size();
    if loss_table.len() != n || loss_table.iter().any(|r| r.len() != dist_weights.len()) {
        return Err(Error::invalid("loss table must be |H| x |Z|"));
    }
    if data_indices.is_empty() || data_indices.iter().any(|&z| z >= dist_weights.len()) {
        return Err(Error::invalid(
            "sample indices must be non-empty and in range",
        ));
    }
    let m = data_indices.len() as f64;
    let sq_gap: Vec<f64> = loss_table
        .iter()
        .map(|row| {
            let gap =
                dist_weights.expect(row) - data_indices.iter().map(|&z| row[z]).sum::<f64>() / m;
            gap * gap
        })
        .collect();
    let mut best: f64 = 0.0;
    for a in 0..n {
        for b in 0..a {
            let num = (sq_gap[a] - sq_gap[b]).abs();
            let rho = space.dist(a, b);
            if rho == 0.0 {
                if num > 0.0 {
                    return Err(Error::invalid("distinct gaps at zero distance"));
                }
                continue;
            }
            best = best.max(num / rho);
        }
    }
    Ok(best)
}

fn check_validity_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "delta must lie in (0, 1], got {delta}"
        )))
    }
}

/// Counts samples where the sharp Lipschitz constant of the squared gap
/// exceeds `(8 G / m) ln(2|H| / delta)`.
pub fn lemma_lipschitz_validity(
    rng: &mut RandomSource,
    trials: usize,
    scenario: &FiniteClassScenario,
    g: f64,
    m: usize,
    delta: f64,
) -> Result<ValidityReport> {
    check_validity_delta(delta)?;
    check_loss_lipschitz(&scenario.space, &scenario.loss, g)?;
    if m == 0 {
        return Err(Error::invalid("m must be >= 1"));
    }
    let bound = 8.0 * g / m as f64 * (2.0 * scenario.class_size() as f64 / delta).ln();
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let sample = scenario.draw_sample(&mut rng.fork(&[t as u64]), m);
        let k = lipschitz_constant_bruteforce(
            &scenario.space,
            &scenario.loss,
            &sample,
            &scenario.data_dist,
        )?;
        worst = worst.max(k);
        if k > bound {
            violations += 1;
        }
    }
    Ok(ValidityReport::new(
        "lipschitz-lemma",
        trials,
        violations,
        delta,
        binomial_slack(delta, trials),
    )
    .metric("bound", bound)
    .metric("max_observed", worst)
    .metric("m", m as f64)
    .metric("G", g))
}

/// Bounds checked by [`bound_validity_mc`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FiniteBound {
    /// Total-variation bound with the exact finite-class UC term.
    TvPb,
    KlPb,
    WpbFinite,
    SeegerTv,
}

impl FiniteBound {
    pub const ALL: [FiniteBound; 4] = [
        FiniteBound::TvPb,
        FiniteBound::KlPb,
        FiniteBound::WpbFinite,
        FiniteBound::SeegerTv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FiniteBound::TvPb => "tvpb",
            FiniteBound::KlPb => "klpb",
            FiniteBound::WpbFinite => "wpb-finite",
            FiniteBound::SeegerTv => "seeger-tv",
        }
    }
}

/// How the posterior is chosen from the sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PosteriorRule {
    /// `Q(h) ∝ P(h) exp(-L_S(h) / temperature)`.
    Gibbs {
        temperature: f64,
    },
    Prior,
}

fn posterior(
    scenario: &FiniteClassScenario,
    emp: &[f64],
    rule: PosteriorRule,
) -> Result<DiscreteMeasure> {
    match rule {
        PosteriorRule::Prior => Ok(scenario.prior.clone()),
        PosteriorRule::Gibbs { temperature } => {
            let lo = emp.iter().copied().fold(f64::INFINITY, f64::min);
            let masses: Vec<f64> = scenario
                .prior
                .weights()
                .iter()
                .zip(emp)
                .map(|(p, l)| p * (-(l - lo) / temperature).exp())
                .collect();
            DiscreteMeasure::from_masses(&masses)
        }
    }
}

/// Draws `trials` samples of size `m`, picks a posterior by `rule`, and
/// counts samples where the true gap `L_D(Q) - L_S(Q)` exceeds the bound's
/// complexity term. True risks are exact over the finite data domain.
pub fn bound_validity_mc(
    rng: &mut RandomSource,
    trials: usize,
    scenario: &FiniteClassScenario,
    bound: FiniteBound,
    rule: PosteriorRule,
    m: usize,
    delta: f64,
) -> Result<ValidityReport> {
    check_validity_delta(delta)?;
    let slack = binomial_slack(delta, trials);
    let name = format!("validity/{}", bound.name());
    if delta >= 1.0 {
        return Ok(ValidityReport::new(&name, trials, 0, delta, slack).note("delta >= 1: vacuous"));
    }
    let truth = scenario.true_risks();
    let size = scenario.class_size();
    let mut violations = 0;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut mean_complexity = 0.0;
    for t in 0..trials {
        let sample = scenario.draw_sample(&mut rng.fork(&[t as u64]), m);
        let emp = scenario.empirical_risks(&sample);
        let q = posterior(scenario, &emp, rule)?;
        let emp_q = q.expect(&emp);
        let gap = q.expect(&truth) - emp_q;
        let complexity = match bound {
            FiniteBound::TvPb => {
                let uc = uc_finite_class(size, m, delta / 2.0)?;
                tvpb_from_uc(uc, tv_discrete(&q, &scenario.prior)?, m, delta)?.complexity
            }
            FiniteBound::KlPb => {
                klpb_classic(kl_discrete(&q, &scenario.prior)?, m, delta)?.complexity
            }
            FiniteBound::WpbFinite => {
                let w = w1_discrete_exact(&q, &scenario.prior, &scenario.space)?;
                wpb_finite(size, scenario.lipschitz, w, m, delta)?.complexity
            }
            FiniteBound::SeegerTv => {
                let tv = tv_discrete(&q, &scenario.prior)?;
                seeger_tv_finite(emp_q.clamp(0.0, 1.0), size, tv, m, delta)?.complexity
            }
        };
        mean_complexity += complexity / trials as f64;
        worst_margin = worst_margin.max(gap - complexity);
        if gap > complexity {
            violations += 1;
        }
    }
    Ok(ValidityReport::new(&name, trials, violations, delta, slack)
        .metric("m", m as f64)
        .metric("mean_complexity", mean_complexity)
        .metric("max_gap_minus_bound", worst_margin)
        .note("one posterior rule per run; the bounds hold for all posteriors simultaneously"))
}

// ---------------------------------------------------------------------------
// Gradient checks

/// What [`gradient_check`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GradientTarget {
    Objective(Objective),
    EmpiricalRisk,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheckSetup {
    pub d: usize,
    pub m: usize,
    pub sigma_q: f64,
    pub sigma_p: f64,
    pub r: f64,
    pub r_q: f64,
    pub delta: f64,
    pub points: usize,
    pub step: f64,
}

impl Default for GradientCheckSetup {
    fn default() -> Self {
        Self {
            d: 10,
            m: 100,
            sigma_q: 1e-3,
            sigma_p: 1e-2,
            r: 1.0,
            r_q: 0.05,
            delta: 0.05,
            points: 100,
            step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheckReport {
    pub points: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

fn target_value(
    target: GradientTarget,
    data: &Dataset,
    post: &PosteriorParams,
    prior: &ProjectedGaussianMeasure,
    delta: f64,
) -> Result<f64> {
    match target {
        GradientTarget::Objective(o) => objective_value(data, post, prior, delta, o),
        GradientTarget::EmpiricalRisk => empirical_risk_closed_form(data, post),
    }
}

/// Max norm-wise relative error `|g - g_fd| / |g_fd|` between the analytic
/// gradient and central differences, over random points of the mean ball.
pub fn gradient_check(
    rng: &mut RandomSource,
    target: GradientTarget,
    setup: &GradientCheckSetup,
) -> Result<GradientCheckReport> {
    let task = generate_task(&mut rng.fork(&[0]), setup.d)?;
    let data = sample_dataset(&mut rng.fork(&[1]), &task, setup.m)?;
    let prior = ProjectedGaussianMeasure::new(
        GaussianMeasure::new(vec![0.0; setup.d], setup.sigma_p)?,
        setup.r,
    )?;
    let mut pts = rng.fork(&[2]);
    let h = setup.step;
    let mut max_err: f64 = 0.0;
    let mut sum_err = 0.0;
    for _ in 0..setup.points {
        // Stay a step away from the ball boundary and from the prior mean.
        let mu = loop {
            let v = sample_uniform_ball(&mut pts, setup.d, setup.r_q - 2.0 * h)?;
            if norm2(&v) > 1e-3 {
                break v;
            }
        };
        let post = PosteriorParams {
            mu_q: mu.clone(),
            sigma_q: setup.sigma_q,
            r_q: setup.r_q,
        };
        let analytic = match target {
            GradientTarget::Objective(o) => {
                objective_gradient(&data, &post, &prior, setup.delta, o)?
            }
            GradientTarget::EmpiricalRisk => empirical_risk_gradient(&data, &post)?,
        };
        let mut fd = vec![0.0; setup.d];
        for k in 0..setup.d {
            let mut plus = post.clone();
            plus.mu_q[k] += h;
            let mut minus = post.clone();
            minus.mu_q[k] -= h;
            let fp = target_value(target, &data, &plus, &prior, setup.delta)?;
            let fm = target_value(target, &data, &minus, &prior, setup.delta)?;
            fd[k] = (fp - fm) / (2.0 * h);
        }
        let diff: Vec<f64> = analytic.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let err = norm2(&diff) / norm2(&fd).max(f64::MIN_POSITIVE);
        max_err = max_err.max(err);
        sum_err += err;
    }
    Ok(GradientCheckReport {
        points: setup.points,
        max_rel_error: max_err,
        mean_rel_error: sum_err / setup.points.max(1) as f64,
    })
}

// ---------------------------------------------------------------------------
// Monte-Carlo cross-checks

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectedRiskReport {
    /// Closed-form risk of the unprojected Gaussian.
    pub closed_form: f64,
    /// Monte-Carlo risk with every sampled hypothesis projected onto the ball.
    pub projected_mc: f64,
    /// Same draws without projection.
    pub unprojected_mc: f64,
    /// `|closed_form - projected_mc|`.
    pub diff: f64,
    /// `|projected_mc - unprojected_mc|`: exactly 0 when no draw leaves the ball.
    pub projection_effect: f64,
    pub projected_fraction: f64,
}

/// Compares the closed-form sample risk with a Monte-Carlo estimate over a
/// posterior whose draws are projected onto the ball of radius `r`.
pub fn projected_risk_crosscheck(
    rng: &mut RandomSource,
    task: &RegressionTask,
    post: &PosteriorParams,
    r: f64,
    m: usize,
    n_mc: usize,
) -> Result<ProjectedRiskReport> {
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be >= 1"));
    }
    let data = sample_dataset(&mut rng.fork(&[0]), task, m)?;
    let closed_form = empirical_risk_closed_form(&data, post)?;
    let gauss = post.gaussian()?;
    let mut draws = rng.fork(&[1]);
    let point = |h: Vec<f64>| PosteriorParams {
        mu_q: h,
        sigma_q: 0.0,
        r_q: f64::MAX,
    };
    let (mut proj_mean, mut raw_mean) = (0.0, 0.0);
    let mut projected = 0usize;
    for k in 1..=n_mc {
        let h = crate::measures::sample_gaussian(&mut draws, &gauss);
        let hp = project_ball(&h, r)?;
        if hp != h {
            projected += 1;
        }
        let raw = empirical_risk_closed_form(&data, &point(h))?;
        let prj = empirical_risk_closed_form(&data, &point(hp))?;
        raw_mean += (raw - raw_mean) / k as f64;
        proj_mean += (prj - proj_mean) / k as f64;
    }
    Ok(ProjectedRiskReport {
        closed_form,
        projected_mc: proj_mean,
        unprojected_mc: raw_mean,
        diff: (closed_form - proj_mean).abs(),
        projection_effect: (proj_mean - raw_mean).abs(),
        projected_fraction: projected as f64 / n_mc as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WBoundCheck {
    pub w_bound: f64,
    pub empirical_w1: f64,
    /// Standard error of the paired transport costs.
    pub standard_error: f64,
    pub pass: bool,
}

/// Compares the closed-form W1 upper bound with the optimal assignment cost
/// between `n` projected draws from each measure. Both samples share the
/// same standard-normal draws, so the assignment cost estimates W1 of a
/// coupling and its sampling error is that of the paired costs. Passes when
/// the estimate is at most `w_bound + 3 SE`, up to rounding: with two Diracs
/// both sides equal the distance between the means.
pub fn w_bound_upper_check(
    rng: &mut RandomSource,
    q: &ProjectedGaussianMeasure,
    p: &ProjectedGaussianMeasure,
    n: usize,
) -> Result<WBoundCheck> {
    if n < 2 {
        return Err(Error::invalid("need at least two sample points"));
    }
    let w_bound = w1_projected_gaussian_upper(q, p)?.value;
    let d = q.dim();
    let (mq, sq) = (q.base().mean(), q.base().sigma());
    let (mp, sp) = (p.base().mean(), p.base().sigma());
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let a: Vec<f64> = mq.iter().zip(&z).map(|(m, z)| m + sq * z).collect();
        let b: Vec<f64> = mp.iter().zip(&z).map(|(m, z)| m + sp * z).collect();
        xs.push(project_ball(&a, q.radius())?);
        ys.push(project_ball(&b, p.radius())?);
    }
    let cost: Vec<Vec<f64>> = xs
        .iter()
        .map(|a| {
            ys.iter()
                .map(|b| crate::divergences::dirac_distance(a, b))
                .collect()
        })
        .collect();
    let w = vec![1.0 / n as f64; n];
    let empirical_w1 = transport::solve(&w, &w, &cost)?.cost;
    let paired: Vec<f64> = (0..n).map(|i| cost[i][i]).collect();
    let mean = paired.iter().sum::<f64>() / n as f64;
    let var = paired.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let standard_error = (var / n as f64).sqrt();
    Ok(WBoundCheck {
        w_bound,
        empirical_w1,
        standard_error,
        pass: empirical_w1
            <= w_bound + 3.0 * standard_error + 16.0 * f64::EPSILON * w_bound.max(empirical_w1),
    })
}

/// Random projected-Gaussian pair satisfying `r^2 >= |mu|^2 + d sigma^2` for both.
pub fn random_projected_pair(
    rng: &mut RandomSource,
) -> Result<(ProjectedGaussianMeasure, ProjectedGaussianMeasure)> {
    let d = 1 + rng.index(10);
    let r = rng.uniform_range(0.5, 2.0);
    let one = |rng: &mut RandomSource| -> Result<GaussianMeasure> {
        // split the budget r^2 between the mean and the spread
        let frac = rng.uniform();
        let mean_norm = r * frac.sqrt() * rng.uniform().sqrt();
        let sigma = if rng.uniform() < 0.15 {
            0.0
        } else {
            r * ((1.0 - frac) / d as f64).sqrt() * rng.uniform()
        };
        let dir = sample_uniform_ball(rng, d, 1.0)?;
        let n = norm2(&dir).max(f64::MIN_POSITIVE);
        GaussianMeasure::new(dir.iter().map(|x| x / n * mean_norm).collect(), sigma)
    };
    let q = one(rng)?;
    let p = one(rng)?;
    Ok((
        ProjectedGaussianMeasure::new(q, r)?,
        ProjectedGaussianMeasure::new(p, r)?,
    ))
}

// ---------------------------------------------------------------------------
// Named suites

pub const SUITES: [&str; 5] = [
    "transport",
    "gradients",
    "lipschitz-lemma",
    "validity",
    "projected-risk",
];

/// Runs a named suite. `delta` overrides the confidence level where one applies.
pub fn run_suite(name: &str, seed: u64, delta: Option<f64>) -> Result<Vec<ValidityReport>> {
    let rng = RandomSource::new(seed);
    match name {
        "transport" => Ok(vec![transport_suite(&mut rng.fork(&[1]), 200, 1e-8)?]),
        "gradients" => {
            let setup = GradientCheckSetup::default();
            let mut out = Vec::new();
            for (label, target, tol) in [
                (
                    "gradients/wpb",
                    GradientTarget::Objective(Objective::Wpb),
                    1e-5,
                ),
                (
                    "gradients/klpb",
                    GradientTarget::Objective(Objective::Klpb),
                    1e-5,
                ),
                (
                    "gradients/empirical-risk",
                    GradientTarget::EmpiricalRisk,
                    1e-7,
                ),
            ] {
                let rep = gradient_check(&mut rng.fork(&[2]), target, &setup)?;
                let bad = usize::from(rep.max_rel_error > tol);
                out.push(
                    ValidityReport::exact(label, 1, bad)
                        .metric("points", rep.points as f64)
                        .metric("max_rel_error", rep.max_rel_error)
                        .metric("mean_rel_error", rep.mean_rel_error)
                        .metric("tolerance", tol),
                );
            }
            Ok(out)
        }
        "lipschitz-lemma" => {
            let sc = FiniteClassScenario::default_line();
            let deltas = delta.map_or(vec![0.05, 0.1, 0.2], |d| vec![d]);
            deltas
                .into_iter()
                .map(|d| {
                    lemma_lipschitz_validity(&mut rng.fork(&[3]), 1000, &sc, sc.lipschitz, 50, d)
                })
                .collect()
        }
        "validity" => {
            let sc = FiniteClassScenario::default_line();
            let d = delta.unwrap_or(0.05);
            let rule = PosteriorRule::Gibbs { temperature: 1.0 };
            FiniteBound::ALL
                .iter()
                .map(|&b| bound_validity_mc(&mut rng.fork(&[4]), 2000, &sc, b, rule, 50, d))
                .collect()
        }
        "projected-risk" => {
            let task = generate_task(&mut rng.fork(&[5]), 10)?;
            let mut out = Vec::new();
            for (label, sigma, want_small) in [
                ("projected-risk/model", 1e-3, true),
                ("projected-risk/wide", 0.5, false),
            ] {
                let post = PosteriorParams {
                    mu_q: project_ball(&vec![0.01; 10], 0.05)?,
                    sigma_q: sigma,
                    r_q: 0.05,
                };
                let rep =
                    projected_risk_crosscheck(&mut rng.fork(&[6]), &task, &post, 1.0, 100, 20_000)?;
                let ok = if want_small {
                    rep.projection_effect == 0.0 && rep.diff <= 1e-6
                } else {
                    rep.projection_effect > 0.0
                };
                out.push(
                    ValidityReport::exact(label, 1, usize::from(!ok))
                        .metric("sigma_q", sigma)
                        .metric("closed_form", rep.closed_form)
                        .metric("projected_mc", rep.projected_mc)
                        .metric("diff", rep.diff)
                        .metric("projection_effect", rep.projection_effect)
                        .metric("projected_fraction", rep.projected_fraction),
                );
            }
            Ok(out)
        }
        _ => Err(Error::invalid(format!(
            "unknown suite '{name}' (expected one of: {})",
            SUITES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primal_oracle_small_cases() {
        let space = FiniteMetricSpace::on_line(&[0.0, 2.0]).unwrap();
        let q = DiscreteMeasure::new(vec![0.7, 0.3]).unwrap();
        let p = DiscreteMeasure::new(vec![0.3, 0.7]).unwrap();
        assert!((w1_bruteforce_oracle(&q, &p, &space).unwrap() - 0.8).abs() < 1e-12);
        assert!((kantorovich_dual_bruteforce(&q, &p, &space).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(w1_bruteforce_oracle(&q, &q, &space).unwrap(), 0.0);
        let big = FiniteMetricSpace::on_line(&[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let u = DiscreteMeasure::uniform(5).unwrap();
        assert!(matches!(
            w1_bruteforce_oracle(&u, &u, &big),
            Err(Error::UnsupportedSize { size: 5, max: 4 })
        ));
    }

    #[test]
    fn lipschitz_bruteforce_small_cases() {
        let space = FiniteMetricSpace::on_line(&[0.0, 1.0]).unwrap();
        let dist = DiscreteMeasure::new(vec![0.5, 0.5]).unwrap();
        let flat = vec![vec![0.3, 0.3], vec![0.3, 0.3]];
        assert_eq!(
            lipschitz_constant_bruteforce(&space, &flat, &[0, 1, 1], &dist).unwrap(),
            0.0
        );
        // h0 losses (0, 1), h1 losses (1, 0); sample {z0}: gaps 0.5 and -0.5
        let table = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(
            lipschitz_constant_bruteforce(&space, &table, &[0], &dist).unwrap(),
            0.0
        );
        // h1 losses (0.5, 0.5): gaps 0.5 and 0 => |0.25 - 0| / 1
        let table = vec![vec![0.0, 1.0], vec![0.5, 0.5]];
        assert_eq!(
            lipschitz_constant_bruteforce(&space, &table, &[0], &dist).unwrap(),
            0.25
        );
    }

    #[test]
    fn vacuous_delta_passes() {
        let sc = FiniteClassScenario::default_line();
        let mut rng = RandomSource::new(1);
        let rep = bound_validity_mc(
            &mut rng,
            50,
            &sc,
            FiniteBound::TvPb,
            PosteriorRule::Prior,
            20,
            1.0,
        )
        .unwrap();
        assert!(rep.pass);
        let rep = lemma_lipschitz_validity(&mut rng, 50, &sc, 1.0, 20, 1.0).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn dirac_projected_risk_is_exact() {
        let task = RegressionTask::new(vec![0.05; 4]).unwrap();
        let post = PosteriorParams {
            mu_q: vec![0.01, 0.0, -0.02, 0.0],
            sigma_q: 0.0,
            r_q: 0.05,
        };
        let rep = projected_risk_crosscheck(&mut RandomSource::new(2), &task, &post, 1.0, 30, 100)
            .unwrap();
        assert_eq!(rep.diff, 0.0);
        assert_eq!(rep.projection_effect, 0.0);
    }
}
