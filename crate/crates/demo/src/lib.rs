//! Browser bindings for exploring the bounds interactively.
//!
//! Each exported function takes plain numbers or comma-separated strings
//! and returns a JSON string, so the page needs no generated type glue.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ipm_pacbayes::bounds::{klpb_linreg, uc_linreg, wpb_linreg};
use ipm_pacbayes::divergences::{
    kl_discrete, kl_gaussian_isotropic, tv_discrete, w1_discrete_exact,
    w1_projected_gaussian_terms, DivergenceKind, DivergenceValue, ProjectedW1Terms,
};
use ipm_pacbayes::measures::{
    DiscreteMeasure, FiniteMetricSpace, GaussianMeasure, ProjectedGaussianMeasure,
};
use ipm_pacbayes::{Error, Result};

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub m: usize,
    pub uc: f64,
    pub wpb: f64,
    /// `None` when the KL divergence is undefined.
    pub klpb: Option<f64>,
}

/// Two Gaussians in `d` dimensions whose means are `gap` apart along the
/// first axis, with the prior mean at the origin.
fn gaussian_pair(
    d: usize,
    gap: f64,
    sigma_q: f64,
    sigma_p: f64,
) -> Result<(GaussianMeasure, GaussianMeasure)> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be >= 1".into()));
    }
    let mut mu_q = vec![0.0; d];
    mu_q[0] = gap;
    Ok((
        GaussianMeasure::new(mu_q, sigma_q)?,
        GaussianMeasure::new(vec![0.0; d], sigma_p)?,
    ))
}

/// Risk bounds against the sample size for a fixed posterior and prior.
pub fn bound_curves(
    d: usize,
    delta: f64,
    jhat: f64,
    gap: f64,
    sigma_q: f64,
    sigma_p: f64,
    m_max: usize,
) -> Result<Vec<CurvePoint>> {
    let (q, p) = gaussian_pair(d, gap, sigma_q, sigma_p)?;
    let r = 1.0;
    let w = w1_projected_gaussian_terms(
        &ProjectedGaussianMeasure::new(q.clone(), r)?,
        &ProjectedGaussianMeasure::new(p.clone(), r)?,
    )?
    .total();
    let w = DivergenceValue::new(w, DivergenceKind::W1ProjGaussUpper)?;
    let m_max = m_max.clamp(20, 100_000);
    let step = (m_max / 60).max(1);
    (1..)
        .map(|k| 10 + k * step)
        .take_while(|&m| m <= m_max)
        .map(|m| {
            let klpb = match klpb_linreg(jhat, &q, &p, m, delta) {
                Ok(rep) => Some(rep.bound_value),
                Err(e) if e.is_undefined() => None,
                Err(e) => return Err(e),
            };
            Ok(CurvePoint {
                m,
                uc: jhat + uc_linreg(m, delta, d)?,
                wpb: wpb_linreg(jhat, w, m, delta, d, r)?.bound_value,
                klpb,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct GaussianComparison {
    pub terms: ProjectedW1Terms,
    pub w_bound: f64,
    pub kl: Option<f64>,
}

/// The W1 upper bound, split into its parts, next to the KL divergence.
pub fn compare_gaussians(
    d: usize,
    radius: f64,
    gap: f64,
    sigma_q: f64,
    sigma_p: f64,
) -> Result<GaussianComparison> {
    let (q, p) = gaussian_pair(d, gap, sigma_q, sigma_p)?;
    let kl = match kl_gaussian_isotropic(&q, &p) {
        Ok(v) => Some(v.value),
        Err(e) if e.is_undefined() => None,
        Err(e) => return Err(e),
    };
    let terms = w1_projected_gaussian_terms(
        &ProjectedGaussianMeasure::new(q, radius)?,
        &ProjectedGaussianMeasure::new(p, radius)?,
    )?;
    Ok(GaussianComparison {
        terms,
        w_bound: terms.total(),
        kl,
    })
}

#[derive(Debug, Serialize)]
pub struct DiscreteComparison {
    pub tv: f64,
    pub w1: f64,
    /// `None` when the first measure charges a point the second does not.
    pub kl: Option<f64>,
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("'{}' is not a number", t.trim())))
        })
        .collect()
}

/// TV, W1 and KL between two histograms on points of the real line.
/// Masses are normalized; `points`, `q` and `p` are comma-separated.
pub fn compare_histograms(points: &str, q: &str, p: &str) -> Result<DiscreteComparison> {
    let space = FiniteMetricSpace::on_line(&parse_list(points)?)?;
    let q = DiscreteMeasure::from_masses(&parse_list(q)?)?;
    let p = DiscreteMeasure::from_masses(&parse_list(p)?)?;
    let kl = match kl_discrete(&q, &p) {
        Ok(v) => Some(v.value),
        Err(e) if e.is_undefined() => None,
        Err(e) => return Err(e),
    };
    Ok(DiscreteComparison {
        tv: tv_discrete(&q, &p)?.value,
        w1: w1_discrete_exact(&q, &p, &space)?.value,
        kl,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
        .and_then(|v| serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string())))
}

#[wasm_bindgen(js_name = boundCurves)]
pub fn bound_curves_js(
    d: usize,
    delta: f64,
    jhat: f64,
    gap: f64,
    sigma_q: f64,
    sigma_p: f64,
    m_max: usize,
) -> std::result::Result<String, JsValue> {
    to_js(bound_curves(d, delta, jhat, gap, sigma_q, sigma_p, m_max))
}

#[wasm_bindgen(js_name = compareGaussians)]
pub fn compare_gaussians_js(
    d: usize,
    radius: f64,
    gap: f64,
    sigma_q: f64,
    sigma_p: f64,
) -> std::result::Result<String, JsValue> {
    to_js(compare_gaussians(d, radius, gap, sigma_q, sigma_p))
}

#[wasm_bindgen(js_name = compareHistograms)]
pub fn compare_histograms_js(
    points: &str,
    q: &str,
    p: &str,
) -> std::result::Result<String, JsValue> {
    to_js(compare_histograms(points, q, p))
}
