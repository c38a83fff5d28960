//! Independent feasibility checker for a returned solution.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{Problem, Resource, Solution};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

pub fn audit(problem: &Problem, solution: &Solution) -> AuditReport {
    let mut v = Vec::new();
    let topo = &problem.topology;
    let plan = &solution.plan;

    if plan.routes.len() != problem.requests.len() {
        v.push(format!(
            "{} routes for {} requests",
            plan.routes.len(),
            problem.requests.len()
        ));
        return AuditReport { violations: v };
    }

    let mut on_route: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (f, (req, path)) in problem.requests.iter().zip(&plan.routes).enumerate() {
        let src = topo.node_id(&req.source);
        let dst = topo.node_id(&req.destination);
        if path.nodes.first().copied() != src || path.nodes.last().copied() != dst {
            v.push(format!("route of `{}` does not join its endpoints", req.id));
        }
        let distinct: HashSet<_> = path.nodes.iter().collect();
        if distinct.len() != path.nodes.len() {
            v.push(format!("route of `{}` revisits a node", req.id));
        }
        if path.links.len() + 1 != path.nodes.len() {
            v.push(format!("route of `{}` has inconsistent hop count", req.id));
            continue;
        }
        let mut km = 0.0;
        for (i, &l) in path.links.iter().enumerate() {
            if l >= topo.links().len() {
                v.push(format!("route of `{}` uses unknown link {l}", req.id));
                continue;
            }
            let link = topo.link(l);
            let (a, b) = (path.nodes[i], path.nodes[i + 1]);
            if !((link.a == a && link.b == b) || (link.a == b && link.b == a)) {
                v.push(format!("route of `{}` hop {i} does not follow link {l}", req.id));
            }
            km += link.km;
            on_route.insert((l, f));
        }
        if !close(km, path.length_km, 1e-9) {
            v.push(format!("route of `{}` misreports its length", req.id));
        }
    }

    for (resource, map) in [(Resource::Qkd, &plan.qkd_reserved), (Resource::Km, &plan.km_reserved)] {
        for &(l, f) in map.keys() {
            if !on_route.contains(&(l, f)) {
                v.push(format!("{resource:?} reservation for request {f} on link {l} off its route"));
            }
        }
    }

    let pools = &problem.pools;
    if pools.qkd_per_link.iter().any(|&c| c > pools.qkd_cap) || pools.km_per_link.iter().any(|&c| c > pools.km_cap) {
        v.push("pool capacity above its maximum".into());
    }

    let e = &solution.evaluation;
    if !close(e.total, e.first_stage_cost + e.expected_second_stage_cost, 1e-9) {
        v.push("total differs from first plus expected second stage".into());
    }

    if let (Some(recourse), Some(costs)) = (&solution.recourse, &e.per_scenario) {
        let order = problem.scenario_order();
        let space = problem.scenario_space();
        let mut expected = 0.0;
        let mut mass = 0.0;
        let mut rates = vec![0.0; problem.requests.len()];
        let scenarios = space.enumerate(u64::MAX).expect("listed scenarios fit");
        for (s, ((values, prob), rec)) in scenarios.zip(recourse).enumerate() {
            for (&f, x) in order.iter().zip(values) {
                rates[f] = x;
            }
            let mut used: BTreeMap<(usize, Resource), u64> = BTreeMap::new();
            for (&(l, f), hop) in &rec.hops {
                if !on_route.contains(&(l, f)) {
                    v.push(format!("scenario {s}: recourse for request {f} on link {l} off its route"));
                }
                let p = problem.parallel(rates[f]);
                for (r, u, o) in [
                    (Resource::Qkd, hop.qkd_used, hop.qkd_on_demand),
                    (Resource::Km, hop.km_used, hop.km_on_demand),
                ] {
                    if u > plan.reserved(r, l, f) {
                        v.push(format!("scenario {s}: {r:?} use above reservation on link {l}, request {f}"));
                    }
                    if u + o < r.demand(p) {
                        v.push(format!("scenario {s}: {r:?} demand unmet on link {l}, request {f}"));
                    }
                    *used.entry((l, r)).or_default() += u as u64;
                }
            }
            for &(l, f) in &on_route {
                if problem.parallel(rates[f]) > 0 && !rec.hops.contains_key(&(l, f)) {
                    v.push(format!("scenario {s}: no recourse for request {f} on link {l}"));
                }
            }
            for ((l, r), u) in used {
                if u > pools.capacity(l, r) as u64 {
                    v.push(format!("scenario {s}: {r:?} pool exceeded on link {l}"));
                }
            }
            expected += prob * costs[s].second_stage;
            mass += prob;
        }
        if !close(mass, 1.0, 1e-9) {
            v.push("scenario probabilities do not sum to one".into());
        }
        if !close(expected, e.expected_second_stage_cost, 1e-6) {
            v.push(format!(
                "scenario breakdown averages to {expected}, evaluation reports {}",
                e.expected_second_stage_cost
            ));
        }
    }

    AuditReport { violations: v }
}
