//! Exhaustive reference solver for tiny instances.
//!
//! Shares nothing with the main solver beyond the cost model: no merging of
//! equal parallel counts, no greedy recourse, no pruning of the
//! reservation grid by pool size.

use std::collections::HashMap;

use super::{Problem, Resource};
use crate::cost::{objective_coefficients, parallel_links, Phase};
use crate::demand::expected_demand;
use crate::error::{Error, Result};

pub const ORACLE_MAX_REQUESTS: usize = 3;
pub const ORACLE_MAX_PATHS: usize = 6;
pub const ORACLE_MAX_SCENARIOS: u128 = 10_000;
const ORACLE_MAX_WORK: u128 = 2_000_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub total: f64,
    /// Candidate index chosen per request.
    pub routes: Vec<usize>,
}

struct Member {
    c_r: f64,
    /// (wavelengths, probability, utilization price, on-demand price)
    outcomes: Vec<(u32, f64, f64, f64)>,
}

fn coefficient(problem: &Problem, link: usize, resource: Resource, parallel: u32, phase: Phase) -> f64 {
    let c = objective_coefficients(problem.topology.link(link).km, parallel, &problem.prices, &problem.params, phase)
        .expect("validated parameters");
    match resource {
        Resource::Qkd => c.per_qkd_wavelength,
        Resource::Km => c.per_km_wavelength,
    }
}

fn best_usage(i: usize, left: u32, d: &[u32], y: &[u32], c_e: &[f64], c_o: &[f64]) -> f64 {
    if i == d.len() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for u in 0..=d[i].min(y[i]).min(left) {
        let here = c_e[i] * u as f64 + c_o[i] * (d[i] - u) as f64;
        best = best.min(here + best_usage(i + 1, left - u, d, y, c_e, c_o));
    }
    best
}

fn group_min(members: &[Member], capacity: u32) -> f64 {
    let n = members.len();
    let max: Vec<u32> = members
        .iter()
        .map(|m| m.outcomes.iter().map(|o| o.0).max().unwrap_or(0))
        .collect();
    // Joint outcomes over the raw supports.
    let mut joint: Vec<(f64, Vec<u32>, Vec<f64>, Vec<f64>)> = vec![(1.0, vec![], vec![], vec![])];
    for m in members {
        let mut next = Vec::new();
        for (p, d, ce, co) in &joint {
            for &(dd, pp, e, o) in &m.outcomes {
                let mut d2 = d.clone();
                d2.push(dd);
                let mut e2 = ce.clone();
                e2.push(e);
                let mut o2 = co.clone();
                o2.push(o);
                next.push((p * pp, d2, e2, o2));
            }
        }
        joint = next;
    }
    let mut y = vec![0u32; n];
    let mut best = f64::INFINITY;
    loop {
        let mut cost: f64 = members.iter().zip(&y).map(|(m, &v)| m.c_r * v as f64).sum();
        for (p, d, ce, co) in &joint {
            cost += p * best_usage(0, capacity, d, &y, ce, co);
        }
        best = best.min(cost);
        let mut pos = n;
        loop {
            if pos == 0 {
                return best;
            }
            pos -= 1;
            y[pos] += 1;
            if y[pos] <= max[pos] {
                break;
            }
            y[pos] = 0;
        }
    }
}

/// Global optimum by enumeration of routes, reservation vectors and
/// utilization vectors.
pub fn brute_force_oracle(problem: &Problem, k: usize) -> Result<OracleResult> {
    let n = problem.requests.len();
    if n > ORACLE_MAX_REQUESTS {
        return Err(Error::OracleLimit(format!("{n} requests (limit {ORACLE_MAX_REQUESTS})")));
    }
    let paths = problem.candidate_paths(k)?;
    let path_total: usize = paths.iter().map(Vec::len).sum();
    if path_total > ORACLE_MAX_PATHS {
        return Err(Error::OracleLimit(format!(
            "{path_total} candidate paths (limit {ORACLE_MAX_PATHS})"
        )));
    }
    let scenarios: u128 = problem.requests.iter().map(|r| r.demand.len() as u128).product();
    if scenarios > ORACLE_MAX_SCENARIOS {
        return Err(Error::OracleLimit(format!(
            "{scenarios} joint scenarios (limit {ORACLE_MAX_SCENARIOS})"
        )));
    }
    let key_rate = problem.params.key_rate_per_link;
    let p_bar: Vec<u32> = problem
        .requests
        .iter()
        .map(|r| parallel_links(expected_demand(&r.demand), key_rate))
        .collect::<Result<_>>()?;

    let member = |f: usize, link: usize, resource: Resource| -> Result<Member> {
        let req = &problem.requests[f];
        let mut outcomes = Vec::new();
        for (rate, prob) in req.demand.iter() {
            let p = parallel_links(rate, key_rate)?;
            outcomes.push((
                resource.demand(p),
                prob,
                coefficient(problem, link, resource, p, Phase::Utilization),
                coefficient(problem, link, resource, p, Phase::OnDemand),
            ));
        }
        Ok(Member {
            c_r: coefficient(problem, link, resource, p_bar[f], Phase::Reservation),
            outcomes,
        })
    };

    let mut memo: HashMap<(usize, Resource, Vec<usize>), f64> = HashMap::new();
    let mut best: Option<OracleResult> = None;
    let mut choice = vec![0usize; n];
    loop {
        let mut total = 0.0;
        let mut on_link: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for f in 0..n {
            let path = &paths[f][choice[f]];
            total += path.nodes[1..]
                .iter()
                .map(|&v| problem.params.energy_cost(problem.topology.node_name(v)))
                .sum::<f64>();
            for &l in &path.links {
                on_link.entry(l).or_default().push(f);
            }
        }
        for (l, users) in on_link {
            for r in Resource::ALL {
                let key = (l, r, users.clone());
                if let Some(v) = memo.get(&key) {
                    total += v;
                    continue;
                }
                let members = users.iter().map(|&f| member(f, l, r)).collect::<Result<Vec<_>>>()?;
                let grid: u128 = members
                    .iter()
                    .map(|m| m.outcomes.iter().map(|o| o.0 as u128 + 1).max().unwrap_or(1))
                    .product();
                let joint: u128 = members.iter().map(|m| m.outcomes.len() as u128).product();
                let work = grid.saturating_mul(grid).saturating_mul(joint);
                if work > ORACLE_MAX_WORK {
                    return Err(Error::OracleLimit(format!(
                        "group on link {} needs about {work} evaluations",
                        problem.topology.link_label(l)
                    )));
                }
                let v = group_min(&members, problem.pools.capacity(l, r));
                memo.insert(key, v);
                total += v;
            }
        }
        if best.as_ref().is_none_or(|b| total < b.total) {
            best = Some(OracleResult {
                total,
                routes: choice.clone(),
            });
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(best.unwrap_or(OracleResult {
                    total: 0.0,
                    routes: vec![],
                }));
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < paths[pos].len() {
                break;
            }
            choice[pos] = 0;
        }
    }
}
