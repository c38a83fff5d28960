//! Expected-value, wait-and-see and on-demand-only reference values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reservation::{build_item, optimize_group};
use super::search::{evaluate_plan, solve_core, Prepared};
use super::{solve, Plan, PlanEvaluation, Problem, Resource, SolverOptions};
use crate::error::Result;

/// Joint scenarios × route assignments above which the per-scenario
/// wait-and-see solve is replaced by the relaxation (outside exhaustive mode).
const WS_WORK_CAP: u128 = 2_000_000;

/// Shortest path per request, nothing reserved, all demand on demand.
pub fn greedy_on_demand_baseline(problem: &Problem, _options: &SolverOptions) -> Result<(Plan, PlanEvaluation)> {
    let routes = problem
        .candidate_paths(1)?
        .into_iter()
        .map(|mut ps| ps.remove(0))
        .collect();
    let plan = Plan {
        routes,
        ..Default::default()
    };
    let eval = evaluate_plan(problem, &plan, u64::MAX)?;
    Ok((plan, eval))
}

/// Plan optimal for expected demands, evaluated under the true distributions.
pub fn solve_eev(problem: &Problem, options: &SolverOptions) -> Result<(Plan, PlanEvaluation)> {
    let (plan, _, _) = solve_core(&problem.expected_value_problem()?, options)?;
    let eval = evaluate_plan(problem, &plan, options.scenario_cap)?;
    Ok((plan, eval))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsBound {
    pub value: f64,
    /// True when every scenario was solved to optimality; otherwise `value`
    /// is the per-request relaxation, a weaker lower bound.
    pub exact: bool,
}

/// Wait-and-see lower bound: demand is revealed before routing and
/// reserving. Reservation prices stay those of the stochastic problem.
pub fn solve_ws(problem: &Problem, options: &SolverOptions) -> Result<WsBound> {
    let base = Prepared::new(problem, options)?;
    let joint: u128 = base.dists.iter().map(|d| d.len() as u128).product();
    let routes: u128 = base.paths.iter().map(|p| p.len() as u128).product();
    let small = joint <= options.ws_cap as u128
        && (options.exhaustive
            || (routes <= options.route_budget as u128 && joint.saturating_mul(routes) <= WS_WORK_CAP));
    if small {
        let n = problem.requests.len();
        let scenarios: Vec<(Vec<u32>, f64)> = {
            let mut out = Vec::with_capacity(joint as usize);
            let mut digits = vec![0usize; n];
            'outer: loop {
                let mut prob = 1.0;
                let mut p = Vec::with_capacity(n);
                for f in 0..n {
                    let (pf, pr) = base.dists[f][digits[f]];
                    p.push(pf);
                    prob *= pr;
                }
                out.push((p, prob));
                let mut pos = n;
                loop {
                    if pos == 0 {
                        break 'outer;
                    }
                    pos -= 1;
                    digits[pos] += 1;
                    if digits[pos] < base.dists[pos].len() {
                        break;
                    }
                    digits[pos] = 0;
                }
            }
            out
        };
        let values: Vec<Result<(f64, bool)>> = scenarios
            .par_iter()
            .map(|(p, _)| {
                let mut prep = Prepared::with_paths(problem, options, base.paths.clone());
                prep.dists = p.iter().map(|&v| vec![(v, 1.0)]).collect();
                let (choice, exhaustive) = prep.search()?;
                let wrapped: Vec<Option<usize>> = choice.into_iter().map(Some).collect();
                let (cost, exact) = prep.assignment_cost(&wrapped)?;
                Ok((cost, exact && exhaustive))
            })
            .collect();
        let mut value = 0.0;
        let mut exact = true;
        for ((_, prob), v) in scenarios.iter().zip(values) {
            let (c, e) = v?;
            value += prob * c;
            exact &= e;
        }
        if exact {
            return Ok(WsBound { value, exact: true });
        }
    }
    // Each request alone with the full pool on every link.
    let mut value = 0.0;
    for f in 0..problem.requests.len() {
        for &(p, prob) in &base.dists[f] {
            let mut best = f64::INFINITY;
            for (j, path) in base.paths[f].iter().enumerate() {
                let mut c = base.energy[f][j];
                for &l in &path.links {
                    for r in Resource::ALL {
                        let item = build_item(problem, l, r, base.p_bar[f], &[(p, 1.0)]);
                        c += optimize_group(&[item], problem.pools.capacity(l, r), None, u64::MAX)?.cost;
                    }
                }
                best = best.min(c);
            }
            value += prob * best;
        }
    }
    Ok(WsBound { value, exact: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub ws: f64,
    pub ws_exact: bool,
    pub sp: f64,
    pub sp_exact: bool,
    pub eev: f64,
    pub baseline: Option<f64>,
}

impl BoundsReport {
    /// (EEV − SP) / SP in percent.
    pub fn eev_gap_percent(&self) -> f64 {
        gap(self.eev - self.sp, self.sp)
    }

    /// (SP − WS) / SP in percent.
    pub fn ws_gap_percent(&self) -> f64 {
        gap(self.sp - self.ws, self.sp)
    }
}

fn gap(diff: f64, sp: f64) -> f64 {
    if sp == 0.0 {
        0.0
    } else {
        100.0 * diff / sp
    }
}

pub fn bounds(problem: &Problem, options: &SolverOptions, with_baseline: bool) -> Result<BoundsReport> {
    let sp = solve(problem, options)?;
    let (_, eev) = solve_eev(problem, options)?;
    let ws = solve_ws(problem, options)?;
    let baseline = if with_baseline {
        Some(greedy_on_demand_baseline(problem, options)?.1.total)
    } else {
        None
    };
    Ok(BoundsReport {
        ws: ws.value,
        ws_exact: ws.exact,
        sp: sp.evaluation.total,
        sp_exact: sp.exact,
        eev: eev.total,
        baseline,
    })
}
