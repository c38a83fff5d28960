use serde::{Deserialize, Serialize};

use super::{Plan, Problem, Recourse, Resource};
use crate::cost::Phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinkRecourse {
    pub qkd_used: u32,
    pub qkd_on_demand: u32,
    pub km_used: u32,
    pub km_on_demand: u32,
}

/// Writes the greedy utilization into `used` and returns the cost.
///
/// Reserved wavelengths go to requests in descending order of per-wavelength
/// savings (on-demand minus utilization), ties by position; a request whose
/// savings are negative buys everything on demand.
pub(crate) fn allocate(
    demands: &[u32],
    reserved: &[u32],
    capacity: u32,
    c_e: &[f64],
    c_o: &[f64],
    order: &mut Vec<usize>,
    used: &mut [u32],
) -> f64 {
    order.clear();
    order.extend(0..demands.len());
    order.sort_by(|&a, &b| {
        let sa = c_o[a] - c_e[a];
        let sb = c_o[b] - c_e[b];
        sb.total_cmp(&sa).then(a.cmp(&b))
    });
    let mut left = capacity;
    for &f in order.iter() {
        used[f] = 0;
        if c_o[f] - c_e[f] >= 0.0 {
            let u = demands[f].min(reserved[f]).min(left);
            used[f] = u;
            left -= u;
        }
    }
    let mut cost = 0.0;
    for f in 0..demands.len() {
        cost += c_e[f] * used[f] as f64 + c_o[f] * (demands[f] - used[f]) as f64;
    }
    cost
}

/// Cost-minimal second stage for one link and one resource type.
/// Returns (used, on-demand, cost).
pub fn single_link_recourse(
    demands: &[u32],
    reserved: &[u32],
    capacity: u32,
    c_e: &[f64],
    c_o: &[f64],
) -> (Vec<u32>, Vec<u32>, f64) {
    assert!(
        demands.len() == reserved.len() && demands.len() == c_e.len() && demands.len() == c_o.len(),
        "per-request slices must have equal length"
    );
    let mut used = vec![0; demands.len()];
    let cost = allocate(demands, reserved, capacity, c_e, c_o, &mut Vec::new(), &mut used);
    let on_demand = demands.iter().zip(&used).map(|(d, u)| d - u).collect();
    (used, on_demand, cost)
}

/// Optimal recourse of `plan` when request `f` needs `rates[f]` kbps.
pub fn optimal_recourse(problem: &Problem, plan: &Plan, rates: &[f64]) -> (Recourse, f64) {
    let parallel: Vec<u32> = rates.iter().map(|&r| problem.parallel(r)).collect();
    let mut out = Recourse::default();
    let mut total = 0.0;
    for (link, users) in plan.link_users() {
        for resource in Resource::ALL {
            let demands: Vec<u32> = users.iter().map(|&f| resource.demand(parallel[f])).collect();
            let reserved: Vec<u32> = users.iter().map(|&f| plan.reserved(resource, link, f)).collect();
            let c_e: Vec<f64> = users
                .iter()
                .map(|&f| problem.coefficient(link, resource, parallel[f], Phase::Utilization))
                .collect();
            let c_o: Vec<f64> = users
                .iter()
                .map(|&f| problem.coefficient(link, resource, parallel[f], Phase::OnDemand))
                .collect();
            let (used, od, cost) =
                single_link_recourse(&demands, &reserved, problem.pools.capacity(link, resource), &c_e, &c_o);
            total += cost;
            for (i, &f) in users.iter().enumerate() {
                let hop = out.hops.entry((link, f)).or_default();
                match resource {
                    Resource::Qkd => {
                        hop.qkd_used = used[i];
                        hop.qkd_on_demand = od[i];
                    }
                    Resource::Km => {
                        hop.km_used = used[i];
                        hop.km_on_demand = od[i];
                    }
                }
            }
        }
    }
    (out, total)
}
