//! Exact discrete optimal transport.
//!
//! Balanced transportation problem solved by successive shortest augmenting
//! paths on the complete bipartite graph. Reverse residual arcs carry
//! negative costs, so shortest paths use Bellman-Ford. Each augmentation
//! exhausts a supply, a demand or a reverse arc, and the flow stays
//! cost-optimal for the mass routed so far.

use crate::error::{Error, Result};

const MASS_EPS: f64 = 1e-15;

/// Optimal coupling and its cost.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub cost: f64,
    /// `plan[i][j]` is the mass moved from source atom `i` to target atom `j`.
    pub plan: Vec<Vec<f64>>,
}

/// Minimum-cost coupling between `supply` and `demand` under `cost`.
pub fn solve(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Result<TransportPlan> {
    let ns = supply.len();
    let nt = demand.len();
    if cost.len() != ns || cost.iter().any(|row| row.len() != nt) {
        return Err(Error::invalid("cost matrix shape does not match marginals"));
    }
    let mut rem_s = supply.to_vec();
    let mut rem_t = demand.to_vec();
    let mut flow = vec![vec![0.0; nt]; ns];
    // Relaxations must beat rounding: on a line metric many residual cycles
    // have exactly zero cost and would otherwise look slightly negative.
    let max_cost = cost.iter().flatten().fold(0.0f64, |a, c| a.max(c.abs()));
    let tol = 1e-12 * max_cost.max(f64::MIN_POSITIVE);

    // Node layout: sources 0..ns, targets ns..ns+nt.
    let n = ns + nt;
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];

    let max_rounds = 64 * (ns * nt + ns + nt) + 16;
    let mut rounds = 0;
    loop {
        if rem_s.iter().all(|&s| s <= MASS_EPS) || rem_t.iter().all(|&t| t <= MASS_EPS) {
            break;
        }
        rounds += 1;
        if rounds > max_rounds {
            return Err(Error::Numerical(format!(
                "transport did not finish in {max_rounds} augmentations"
            )));
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        pred.iter_mut().for_each(|p| *p = usize::MAX);
        for i in 0..ns {
            if rem_s[i] > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        // Bellman-Ford; the residual graph has no negative cycles.
        for _ in 0..n {
            let mut changed = false;
            for i in 0..ns {
                if dist[i].is_finite() {
                    for j in 0..nt {
                        let cand = dist[i] + cost[i][j];
                        if cand < dist[ns + j] - tol {
                            dist[ns + j] = cand;
                            pred[ns + j] = i;
                            changed = true;
                        }
                    }
                }
            }
            for j in 0..nt {
                if dist[ns + j].is_finite() {
                    for i in 0..ns {
                        if flow[i][j] > MASS_EPS {
                            let cand = dist[ns + j] - cost[i][j];
                            if cand < dist[i] - tol {
                                dist[i] = cand;
                                pred[i] = ns + j;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let target = (0..nt)
            .filter(|&j| rem_t[j] > MASS_EPS && dist[ns + j].is_finite())
            .min_by(|&a, &b| dist[ns + a].total_cmp(&dist[ns + b]));
        let Some(target) = target else { break };

        // Walk back to the originating source, collecting the bottleneck.
        let mut amount = rem_t[target];
        let mut node = ns + target;
        let mut steps = 0;
        let source = loop {
            steps += 1;
            if steps > n {
                return Err(Error::Numerical("cycle in shortest-path tree".into()));
            }
            let p = pred[node];
            if node < ns {
                if p == usize::MAX {
                    break node;
                }
                amount = amount.min(flow[node][p - ns]);
            }
            node = p;
        };
        amount = amount.min(rem_s[source]);

        let mut node = ns + target;
        while node != source {
            let p = pred[node];
            if node >= ns {
                flow[p][node - ns] += amount;
            } else {
                flow[node][p - ns] -= amount;
            }
            node = p;
        }
        rem_s[source] -= amount;
        rem_t[target] -= amount;
    }

    for row in flow.iter_mut() {
        for f in row.iter_mut() {
            if *f < 0.0 {
                *f = 0.0;
            }
        }
    }
    let total: f64 = flow
        .iter()
        .zip(cost)
        .map(|(fr, cr)| fr.iter().zip(cr).map(|(f, c)| f * c).sum::<f64>())
        .sum();
    Ok(TransportPlan {
        cost: total,
        plan: flow,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_line() {
        let cost = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        let plan = solve(&[0.7, 0.3], &[0.3, 0.7], &cost).unwrap();
        assert!((plan.cost - 0.8).abs() < 1e-12);
        assert!((plan.plan[0][1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn requires_rerouting() {
        // Greedy cheapest-first would send s0 -> t0 and then pay 10 for s1 -> t1.
        let cost = vec![vec![1.0, 2.0], vec![1.5, 10.0]];
        let plan = solve(&[0.5, 0.5], &[0.5, 0.5], &cost).unwrap();
        assert!(
            (plan.cost - 0.5 * (2.0 + 1.5)).abs() < 1e-12,
            "{}",
            plan.cost
        );
    }

    #[test]
    fn marginals_are_respected() {
        let cost = vec![
            vec![0.0, 1.0, 3.0],
            vec![1.0, 0.0, 2.0],
            vec![3.0, 2.0, 0.0],
        ];
        let q = [0.2, 0.5, 0.3];
        let p = [0.6, 0.1, 0.3];
        let plan = solve(&q, &p, &cost).unwrap();
        for i in 0..3 {
            let row: f64 = plan.plan[i].iter().sum();
            let col: f64 = plan.plan.iter().map(|r| r[i]).sum();
            assert!((row - q[i]).abs() < 1e-12);
            assert!((col - p[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(solve(&[1.0], &[0.5, 0.5], &[vec![0.0]]).is_err());
    }
}
