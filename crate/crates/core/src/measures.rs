//! Probability measures, finite metric spaces and seeded sampling.
//!
//! Everything here is an immutable value except [`RandomSource`], which is a
//! single-owner stream. Parallel work derives child sources with
//! [`RandomSource::fork`] instead of sharing one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`DiscreteMeasure`].
pub const MASS_TOLERANCE: f64 = 1e-12;

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} has non-finite coordinates")))
    }
}

/// Isotropic Gaussian `N(mean, sigma^2 I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMeasure {
    mean: Vec<f64>,
    sigma: f64,
}

impl GaussianMeasure {
    pub fn new(mean: Vec<f64>, sigma: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::invalid("gaussian mean must have dimension >= 1"));
        }
        check_finite(&mean, "gaussian mean")?;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self { mean, sigma })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `E ||X||^2 = ||mean||^2 + d sigma^2`.
    pub fn second_moment(&self) -> f64 {
        let n = norm2(&self.mean);
        n * n + self.dim() as f64 * self.sigma * self.sigma
    }
}

impl From<DiracMeasure> for GaussianMeasure {
    fn from(d: DiracMeasure) -> Self {
        GaussianMeasure {
            mean: d.point,
            sigma: 0.0,
        }
    }
}

/// Push-forward of a Gaussian under Euclidean projection onto the ball of
/// the given radius around the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedGaussianMeasure {
    base: GaussianMeasure,
    radius: f64,
}

impl ProjectedGaussianMeasure {
    pub fn new(base: GaussianMeasure, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!(
                "projection radius must be > 0, got {radius}"
            )));
        }
        Ok(Self { base, radius })
    }

    pub fn base(&self) -> &GaussianMeasure {
        &self.base
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn sample(&self, rng: &mut RandomSource) -> Vec<f64> {
        let raw = sample_gaussian(rng, &self.base);
        project_ball(&raw, self.radius).expect("gaussian samples are finite")
    }
}

/// Point mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracMeasure {
    point: Vec<f64>,
}

impl DiracMeasure {
    pub fn new(point: Vec<f64>) -> Result<Self> {
        check_finite(&point, "dirac point")?;
        Ok(Self { point })
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }
}

/// Finite set of points with a validated metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteMetricSpace {
    dist: Vec<Vec<f64>>,
}

impl FiniteMetricSpace {
    /// Validates symmetry, zero diagonal, non-negativity and the triangle
    /// inequality (O(n^3), construction only).
    pub fn new(dist: Vec<Vec<f64>>) -> Result<Self> {
        let n = dist.len();
        if n == 0 {
            return Err(Error::invalid(
                "metric space must contain at least one point",
            ));
        }
        let mut scale: f64 = 0.0;
        for (i, row) in dist.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "distance matrix row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
            for &x in row {
                if !(x.is_finite() && x >= 0.0) {
                    return Err(Error::invalid("distances must be finite and non-negative"));
                }
                scale = scale.max(x);
            }
        }
        let tol = 1e-12 * scale.max(1.0);
        for i in 0..n {
            if dist[i][i] != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal entry at {i}")));
            }
            for j in 0..i {
                if (dist[i][j] - dist[j][i]).abs() > tol {
                    return Err(Error::invalid(format!(
                        "asymmetric distances at ({i}, {j})"
                    )));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if dist[i][k] > dist[i][j] + dist[j][k] + tol {
                        return Err(Error::invalid(format!(
                            "triangle inequality fails for ({i}, {j}, {k})"
                        )));
                    }
                }
            }
        }
        Ok(Self { dist })
    }

    /// Euclidean distances between the given points.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dist = points
            .iter()
            .map(|a| points.iter().map(|b| sq_dist(a, b).sqrt()).collect())
            .collect();
        Self::new(dist)
    }

    /// Points on the real line with `|a - b|`.
    pub fn on_line(points: &[f64]) -> Result<Self> {
        let dist = points
            .iter()
            .map(|a| points.iter().map(|b| (a - b).abs()).collect())
            .collect();
        Self::new(dist)
    }

    pub fn size(&self) -> usize {
        self.dist.len()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Probability vector over the points of a finite space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("discrete measure needs at least one atom"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Normalizes non-negative masses to a probability vector.
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::invalid("masses must have positive finite total"));
        }
        Self::new(masses.iter().map(|m| m / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_masses(&vec![1.0; n])
    }

    /// Dirac mass on atom `i` of an `n`-point space.
    pub fn point_mass(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::invalid(format!(
                "atom {i} out of range for size {n}"
            )));
        }
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self::new(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Expectation of `f` indexed by atom.
    pub fn expect(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum()
    }
}

/// SplitMix64 finalizer, used to derive independent child seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a path of indices, e.g. `(m, repetition)`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &x| {
        splitmix64(acc ^ splitmix64(x))
    })
}

/// Deterministic random stream: ChaCha8 keyed by a 64-bit seed.
///
/// Identical seeds give identical streams on every platform.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub const ALGORITHM: &'static str = "chacha8-seed_from_u64";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        Self::ALGORITHM
    }

    /// Fresh source whose seed is derived from this source's seed and `path`.
    /// Does not advance `self`.
    pub fn fork(&self, path: &[u64]) -> RandomSource {
        RandomSource::new(derive_seed(self.seed, path))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.rng.random_range(0..=i);
            xs.swap(i, j);
        }
    }
}

/// Euclidean projection onto the closed ball of radius `r`.
///
/// The result always satisfies `norm2(result) <= r` as computed in floating
/// point, which makes the map bitwise idempotent.
pub fn project_ball(v: &[f64], r: f64) -> Result<Vec<f64>> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid(format!("ball radius must be > 0, got {r}")));
    }
    check_finite(v, "vector")?;
    let n = norm2(v);
    if n <= r {
        return Ok(v.to_vec());
    }
    let mut scale = r / n;
    loop {
        let w: Vec<f64> = v.iter().map(|x| x * scale).collect();
        if norm2(&w) <= r {
            return Ok(w);
        }
        scale *= 1.0 - f64::EPSILON;
    }
}

/// Uniform sample from the closed `d`-dimensional ball of radius `r`:
/// a normalized Gaussian direction scaled by `r U^(1/d)`.
pub fn sample_uniform_ball(rng: &mut RandomSource, d: usize, r: f64) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid(format!("ball radius must be > 0, got {r}")));
    }
    let dir = loop {
        let z: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let n = norm2(&z);
        if n > 0.0 {
            break z.into_iter().map(|x| x / n).collect::<Vec<_>>();
        }
    };
    let radius = r * rng.uniform().powf(1.0 / d as f64);
    let v: Vec<f64> = dir.into_iter().map(|x| x * radius).collect();
    project_ball(&v, r)
}

/// Draw from `N(mean, sigma^2 I)`; returns the mean exactly when `sigma = 0`.
pub fn sample_gaussian(rng: &mut RandomSource, g: &GaussianMeasure) -> Vec<f64> {
    if g.sigma == 0.0 {
        return g.mean.clone();
    }
    g.mean
        .iter()
        .map(|m| m + g.sigma * rng.standard_normal())
        .collect()
}
