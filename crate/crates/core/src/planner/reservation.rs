//! Reservation levels for one (link, resource) group of requests.

use super::{Problem, Resource};
use crate::cost::Phase;
use crate::error::{Error, Result};
use crate::network::{LinkId, Path};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    /// Wavelengths needed.
    pub demand: u32,
    pub prob: f64,
    pub c_e: f64,
    pub c_o: f64,
}

/// One request's view of a (link, resource) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct NewsvendorItem {
    /// Reservation cost per wavelength.
    pub c_r: f64,
    pub outcomes: Vec<Outcome>,
}

impl NewsvendorItem {
    pub fn max_demand(&self) -> u32 {
        self.outcomes.iter().map(|o| o.demand).max().unwrap_or(0)
    }

    /// Reservation plus expected recourse at level `y` with an unlimited pool.
    pub fn slack_cost(&self, y: u32) -> f64 {
        let mut cost = self.c_r * y as f64;
        for o in &self.outcomes {
            let u = if o.c_o >= o.c_e { o.demand.min(y) } else { 0 };
            cost += o.prob * (o.c_e * u as f64 + o.c_o * (o.demand - u) as f64);
        }
        cost
    }
}

/// Scans y ∈ 0..=y_max; returns the smallest minimizer and its cost.
pub fn newsvendor(item: &NewsvendorItem, y_max: u32) -> (u32, f64) {
    let mut best = (0, item.slack_cost(0));
    for y in 1..=y_max {
        let c = item.slack_cost(y);
        if c < best.1 {
            best = (y, c);
        }
    }
    best
}

pub(crate) fn build_item(
    problem: &Problem,
    link: LinkId,
    resource: Resource,
    expected_parallel: u32,
    parallel_dist: &[(u32, f64)],
) -> NewsvendorItem {
    NewsvendorItem {
        c_r: problem.coefficient(link, resource, expected_parallel, Phase::Reservation),
        outcomes: parallel_dist
            .iter()
            .map(|&(p, prob)| Outcome {
                demand: resource.demand(p),
                prob,
                c_e: problem.coefficient(link, resource, p, Phase::Utilization),
                c_o: problem.coefficient(link, resource, p, Phase::OnDemand),
            })
            .collect(),
    }
}

/// Per-link (QKD, KM) reservations minimizing the request's own expected
/// cost on `path`, ignoring pool limits.
pub fn optimal_reservation_for_route(problem: &Problem, request: usize, path: &Path) -> Vec<(LinkId, u32, u32)> {
    let dist = problem.parallel_distribution(request);
    let p_bar = problem.expected_parallel(request);
    path.links
        .iter()
        .map(|&l| {
            let q = build_item(problem, l, Resource::Qkd, p_bar, &dist);
            let k = build_item(problem, l, Resource::Km, p_bar, &dist);
            (l, newsvendor(&q, q.max_demand()).0, newsvendor(&k, k.max_demand()).0)
        })
        .collect()
}

/// One joint outcome of a coupled group, with its greedy order prepared.
struct Row {
    prob: f64,
    /// Cost if everything were bought on demand.
    base: f64,
    /// (item, demand, savings) for items that use reservations, best first.
    order: Vec<(usize, u32, f64)>,
}

/// Joint outcome table of a capacity-bound group.
pub(crate) struct JointTable {
    rows: Vec<Row>,
    capacity: u32,
    c_r: Vec<f64>,
}

impl JointTable {
    pub(crate) fn new(items: &[NewsvendorItem], capacity: u32, cap: u64) -> Result<Self> {
        let size: u128 = items.iter().map(|i| i.outcomes.len() as u128).product();
        if size > cap as u128 {
            return Err(Error::ScenarioCap { size, cap });
        }
        let n = items.len();
        let mut rows = Vec::with_capacity(size as usize);
        let mut digits = vec![0usize; n];
        loop {
            let mut prob = 1.0;
            let mut base = 0.0;
            let mut order = Vec::with_capacity(n);
            for (f, item) in items.iter().enumerate() {
                let o = &item.outcomes[digits[f]];
                prob *= o.prob;
                base += o.c_o * o.demand as f64;
                let s = o.c_o - o.c_e;
                if s >= 0.0 && o.demand > 0 {
                    order.push((f, o.demand, s));
                }
            }
            order.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
            rows.push(Row { prob, base, order });
            let mut pos = n;
            loop {
                if pos == 0 {
                    return Ok(JointTable {
                        rows,
                        capacity,
                        c_r: items.iter().map(|i| i.c_r).collect(),
                    });
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < items[pos].outcomes.len() {
                    break;
                }
                digits[pos] = 0;
            }
        }
    }

    pub(crate) fn cost(&self, y: &[u32]) -> f64 {
        let mut total: f64 = self.c_r.iter().zip(y).map(|(c, &v)| c * v as f64).sum();
        for row in &self.rows {
            let mut left = self.capacity;
            let mut saved = 0.0;
            for &(f, d, s) in &row.order {
                if left == 0 {
                    break;
                }
                let u = d.min(y[f]).min(left);
                left -= u;
                saved += s * u as f64;
            }
            total += row.prob * (row.base - saved);
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GroupResult {
    pub y: Vec<u32>,
    pub cost: f64,
    pub exact: bool,
}

/// Expected group cost of fixed reservations `y`.
pub(crate) fn group_cost(items: &[NewsvendorItem], capacity: u32, y: &[u32], scenario_cap: u64) -> Result<f64> {
    let reach: u64 = items
        .iter()
        .zip(y)
        .map(|(i, &v)| i.max_demand().min(v) as u64)
        .sum();
    if reach <= capacity as u64 {
        return Ok(items.iter().zip(y).map(|(i, &v)| i.slack_cost(v)).sum());
    }
    // Items without reservations never touch the pool.
    let (coupled, free): (Vec<usize>, Vec<usize>) = (0..items.len()).partition(|&f| y[f] > 0);
    let sub: Vec<NewsvendorItem> = coupled.iter().map(|&f| items[f].clone()).collect();
    let sub_y: Vec<u32> = coupled.iter().map(|&f| y[f]).collect();
    let table = JointTable::new(&sub, capacity, scenario_cap)?;
    let mut cost = table.cost(&sub_y);
    for f in free {
        cost += items[f].slack_cost(0);
    }
    Ok(cost)
}

/// Minimizes reservation plus expected recourse cost for one group.
///
/// Exact when the pool is slack, when every demand is deterministic, or when
/// the reservation grid times the joint outcome count fits `budget`
/// (`None` = unlimited). Otherwise runs newsvendor, capacity repair and a
/// ±1 coordinate descent, and reports the result as inexact.
pub(crate) fn optimize_group(
    items: &[NewsvendorItem],
    capacity: u32,
    budget: Option<u64>,
    scenario_cap: u64,
) -> Result<GroupResult> {
    let n = items.len();
    let max_d: Vec<u32> = items.iter().map(NewsvendorItem::max_demand).collect();
    let total_max: u64 = max_d.iter().map(|&d| d as u64).sum();

    if total_max <= capacity as u64 {
        let y: Vec<u32> = items.iter().zip(&max_d).map(|(i, &m)| newsvendor(i, m).0).collect();
        let cost = group_cost(items, capacity, &y, scenario_cap)?;
        return Ok(GroupResult { y, cost, exact: true });
    }

    if items.iter().all(|i| i.outcomes.len() == 1) {
        // Known demand: reserve exactly what is used; fill the pool by
        // decreasing net savings.
        let mut order: Vec<usize> = (0..n).collect();
        let net = |f: usize| {
            let o = &items[f].outcomes[0];
            o.c_o - o.c_e - items[f].c_r
        };
        order.sort_by(|&a, &b| net(b).total_cmp(&net(a)).then(a.cmp(&b)));
        let mut y = vec![0; n];
        let mut left = capacity;
        for f in order {
            if net(f) > 0.0 {
                let u = items[f].outcomes[0].demand.min(left);
                y[f] = u;
                left -= u;
            }
        }
        let cost = group_cost(items, capacity, &y, scenario_cap)?;
        return Ok(GroupResult { y, cost, exact: true });
    }

    let y_max: Vec<u32> = max_d.iter().map(|&d| d.min(capacity)).collect();
    let grid: u128 = y_max.iter().map(|&m| m as u128 + 1).product();
    let joint: u128 = items.iter().map(|i| i.outcomes.len() as u128).product();
    let table = JointTable::new(items, capacity, scenario_cap)?;

    if budget.is_none_or(|b| grid.saturating_mul(joint) <= b as u128) {
        let mut y = vec![0u32; n];
        let mut best_y = y.clone();
        let mut best = table.cost(&y);
        loop {
            let mut pos = n;
            loop {
                if pos == 0 {
                    let cost = group_cost(items, capacity, &best_y, scenario_cap)?;
                    return Ok(GroupResult {
                        y: best_y,
                        cost,
                        exact: true,
                    });
                }
                pos -= 1;
                y[pos] += 1;
                if y[pos] <= y_max[pos] {
                    break;
                }
                y[pos] = 0;
            }
            let c = table.cost(&y);
            if c < best {
                best = c;
                best_y.clone_from(&y);
            }
        }
    }

    let mut y: Vec<u32> = items.iter().zip(&y_max).map(|(i, &m)| newsvendor(i, m).0).collect();
    let savings: Vec<f64> = items
        .iter()
        .map(|i| i.outcomes.iter().map(|o| o.prob * (o.c_o - o.c_e)).sum())
        .collect();
    let mut repair: Vec<usize> = (0..n).collect();
    repair.sort_by(|&a, &b| savings[a].total_cmp(&savings[b]).then(b.cmp(&a)));
    let mut excess = y.iter().map(|&v| v as u64).sum::<u64>().saturating_sub(capacity as u64);
    for &f in &repair {
        if excess == 0 {
            break;
        }
        let cut = (y[f] as u64).min(excess) as u32;
        y[f] -= cut;
        excess -= cut as u64;
    }
    let mut best = table.cost(&y);
    for _ in 0..200 {
        let mut improved = false;
        for f in 0..n {
            for up in [true, false] {
                if (up && y[f] >= y_max[f]) || (!up && y[f] == 0) {
                    continue;
                }
                let old = y[f];
                y[f] = if up { old + 1 } else { old - 1 };
                let c = table.cost(&y);
                if c < best - 1e-12 * best.abs() {
                    best = c;
                    improved = true;
                } else {
                    y[f] = old;
                }
            }
        }
        if !improved {
            break;
        }
    }
    let cost = group_cost(items, capacity, &y, scenario_cap)?;
    Ok(GroupResult { y, cost, exact: false })
}
