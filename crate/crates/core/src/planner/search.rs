//! Route search and the top-level solve.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::recourse::optimal_recourse;
use super::reservation::{build_item, group_cost, optimize_group, GroupResult, NewsvendorItem};
use super::{Plan, PlanEvaluation, Problem, Recourse, Resource, ScenarioCost, Solution, SolverOptions, BREAKDOWN_CAP};
use crate::demand::expected_demand;
use crate::error::Result;
use crate::network::{LinkId, Path};

type GroupKey = (LinkId, Resource, Vec<usize>);

/// Per-request data shared by every route assignment.
pub(crate) struct Prepared<'a> {
    pub problem: &'a Problem,
    pub options: &'a SolverOptions,
    pub paths: Vec<Vec<Path>>,
    pub energy: Vec<Vec<f64>>,
    pub dists: Vec<Vec<(u32, f64)>>,
    pub p_bar: Vec<u32>,
    memo: Mutex<HashMap<GroupKey, Arc<GroupResult>>>,
}

impl<'a> Prepared<'a> {
    pub fn new(problem: &'a Problem, options: &'a SolverOptions) -> Result<Self> {
        options.validate()?;
        let paths = problem.candidate_paths(options.k)?;
        Ok(Self::with_paths(problem, options, paths))
    }

    pub fn with_paths(problem: &'a Problem, options: &'a SolverOptions, paths: Vec<Vec<Path>>) -> Self {
        let n = problem.requests.len();
        Prepared {
            energy: paths
                .iter()
                .map(|ps| ps.iter().map(|p| problem.path_energy(p)).collect())
                .collect(),
            paths,
            dists: (0..n).map(|f| problem.parallel_distribution(f)).collect(),
            p_bar: (0..n).map(|f| problem.expected_parallel(f)).collect(),
            problem,
            options,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn items(&self, link: LinkId, resource: Resource, members: &[usize]) -> Vec<NewsvendorItem> {
        members
            .iter()
            .map(|&f| build_item(self.problem, link, resource, self.p_bar[f], &self.dists[f]))
            .collect()
    }

    fn group(&self, link: LinkId, resource: Resource, members: &[usize]) -> Result<Arc<GroupResult>> {
        let key = (link, resource, members.to_vec());
        if let Some(hit) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(hit.clone());
        }
        let items = self.items(link, resource, members);
        let budget = if self.options.exhaustive {
            None
        } else {
            Some(self.options.group_budget)
        };
        let result = Arc::new(optimize_group(
            &items,
            self.problem.pools.capacity(link, resource),
            budget,
            self.options.scenario_cap,
        )?);
        self.memo.lock().expect("memo lock").insert(key, result.clone());
        Ok(result)
    }

    fn groups(&self, choice: &[Option<usize>]) -> BTreeMap<(LinkId, Resource), Vec<usize>> {
        let mut groups: BTreeMap<(LinkId, Resource), Vec<usize>> = BTreeMap::new();
        for (f, c) in choice.iter().enumerate() {
            if let Some(j) = *c {
                for &l in &self.paths[f][j].links {
                    for r in Resource::ALL {
                        groups.entry((l, r)).or_default().push(f);
                    }
                }
            }
        }
        groups
    }

    /// Optimal cost of the requests routed by `choice` (unrouted ones are
    /// ignored), and whether every group was solved exactly.
    pub fn assignment_cost(&self, choice: &[Option<usize>]) -> Result<(f64, bool)> {
        let mut total = 0.0;
        for (f, c) in choice.iter().enumerate() {
            if let Some(j) = *c {
                total += self.energy[f][j];
            }
        }
        let mut exact = true;
        for ((l, r), members) in self.groups(choice) {
            let g = self.group(l, r, &members)?;
            total += g.cost;
            exact &= g.exact;
        }
        Ok((total, exact))
    }

    pub fn plan_for(&self, choice: &[usize]) -> Result<(Plan, bool)> {
        let wrapped: Vec<Option<usize>> = choice.iter().map(|&j| Some(j)).collect();
        let mut plan = Plan {
            routes: choice.iter().enumerate().map(|(f, &j)| self.paths[f][j].clone()).collect(),
            ..Default::default()
        };
        let mut exact = true;
        for ((l, r), members) in self.groups(&wrapped) {
            let g = self.group(l, r, &members)?;
            exact &= g.exact;
            for (&f, &y) in members.iter().zip(&g.y) {
                plan.set_reserved(r, l, f, y);
            }
        }
        Ok((plan, exact))
    }

    fn decode(&self, mut index: u128) -> Vec<Option<usize>> {
        let mut out = vec![None; self.paths.len()];
        for f in (0..self.paths.len()).rev() {
            let m = self.paths[f].len() as u128;
            out[f] = Some((index % m) as usize);
            index /= m;
        }
        out
    }

    /// Best route choice and whether the search was exhaustive.
    pub fn search(&self) -> Result<(Vec<usize>, bool)> {
        let product: u128 = self.paths.iter().map(|p| p.len() as u128).product();
        if self.options.exhaustive || product <= self.options.route_budget as u128 {
            let costs: Vec<Result<f64>> = (0..product as u64)
                .into_par_iter()
                .map(|i| self.assignment_cost(&self.decode(i as u128)).map(|c| c.0))
                .collect();
            let mut best: Option<(f64, u128)> = None;
            for (i, c) in costs.into_iter().enumerate() {
                let c = c?;
                if best.is_none_or(|(b, _)| c < b) {
                    best = Some((c, i as u128));
                }
            }
            let idx = best.map_or(0, |b| b.1);
            return Ok((self.decode(idx).into_iter().map(|c| c.unwrap()).collect(), true));
        }

        let n = self.paths.len();
        let mut order: Vec<usize> = (0..n).collect();
        let means: Vec<f64> = self.problem.requests.iter().map(|r| expected_demand(&r.demand)).collect();
        order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
        let mut choice: Vec<Option<usize>> = vec![None; n];
        for &f in &order {
            let costs: Vec<Result<f64>> = (0..self.paths[f].len())
                .into_par_iter()
                .map(|j| {
                    let mut c = choice.clone();
                    c[f] = Some(j);
                    self.assignment_cost(&c).map(|x| x.0)
                })
                .collect();
            choice[f] = Some(argmin(costs)?);
        }
        let mut best = self.assignment_cost(&choice)?.0;
        for _ in 0..20 {
            let mut improved = false;
            for f in 0..n {
                let current = choice[f];
                let costs: Vec<Result<f64>> = (0..self.paths[f].len())
                    .into_par_iter()
                    .map(|j| {
                        let mut c = choice.clone();
                        c[f] = Some(j);
                        self.assignment_cost(&c).map(|x| x.0)
                    })
                    .collect();
                let j = argmin(costs.clone())?;
                let c = costs[j].clone()?;
                if Some(j) != current && c < best - 1e-12 * best.abs() {
                    choice[f] = Some(j);
                    best = c;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        Ok((choice.into_iter().map(|c| c.unwrap()).collect(), false))
    }
}

fn argmin(costs: Vec<Result<f64>>) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (j, c) in costs.into_iter().enumerate() {
        let c = c?;
        if best.is_none_or(|(b, _)| c < b) {
            best = Some((c, j));
        }
    }
    Ok(best.expect("at least one candidate path").1)
}

/// Expected cost of a fixed plan under the problem's demand distributions.
pub fn evaluate_plan(problem: &Problem, plan: &Plan, scenario_cap: u64) -> Result<PlanEvaluation> {
    let n = problem.requests.len();
    let dists: Vec<_> = (0..n).map(|f| problem.parallel_distribution(f)).collect();
    let p_bar: Vec<u32> = (0..n).map(|f| problem.expected_parallel(f)).collect();
    let mut first: f64 = plan.routes.iter().map(|p| problem.path_energy(p)).sum();
    let mut second = 0.0;
    for (link, users) in plan.link_users() {
        for r in Resource::ALL {
            let items: Vec<NewsvendorItem> = users
                .iter()
                .map(|&f| build_item(problem, link, r, p_bar[f], &dists[f]))
                .collect();
            let y: Vec<u32> = users.iter().map(|&f| plan.reserved(r, link, f)).collect();
            let reserve: f64 = items.iter().zip(&y).map(|(i, &v)| i.c_r * v as f64).sum();
            let total = group_cost(&items, problem.pools.capacity(link, r), &y, scenario_cap)?;
            first += reserve;
            second += total - reserve;
        }
    }
    Ok(PlanEvaluation::from_parts(first, second))
}

/// Per-scenario costs and recourse of `plan` over the raw joint space.
pub(crate) fn scenario_breakdown(problem: &Problem, plan: &Plan, first: f64) -> Option<(Vec<ScenarioCost>, Vec<Recourse>)> {
    let space = problem.scenario_space();
    if space.cardinality() > BREAKDOWN_CAP {
        return None;
    }
    let order = problem.scenario_order();
    let mut costs = Vec::new();
    let mut recourse = Vec::new();
    let mut rates = vec![0.0; problem.requests.len()];
    for (index, (values, prob)) in space.enumerate(u64::MAX).expect("within cap").enumerate() {
        for (&f, v) in order.iter().zip(values) {
            rates[f] = v;
        }
        let (rec, cost) = optimal_recourse(problem, plan, &rates);
        costs.push(ScenarioCost {
            index,
            probability: prob,
            first_stage: first,
            second_stage: cost,
        });
        recourse.push(rec);
    }
    Some((costs, recourse))
}

pub(crate) fn finish(problem: &Problem, plan: Plan, mut evaluation: PlanEvaluation, exact: bool) -> Solution {
    let breakdown = scenario_breakdown(problem, &plan, evaluation.first_stage_cost);
    let recourse = breakdown.map(|(costs, rec)| {
        evaluation.per_scenario = Some(costs);
        rec
    });
    Solution {
        plan,
        evaluation,
        recourse,
        exact,
    }
}

/// Route search plus reservations, without fallbacks.
pub(crate) fn solve_core(problem: &Problem, options: &SolverOptions) -> Result<(Plan, PlanEvaluation, bool)> {
    let prep = Prepared::new(problem, options)?;
    let (choice, exhaustive) = prep.search()?;
    let (plan, groups_exact) = prep.plan_for(&choice)?;
    let eval = evaluate_plan(problem, &plan, options.scenario_cap)?;
    Ok((plan, eval, exhaustive && groups_exact))
}

/// Minimum expected cost plan.
///
/// When the search is not provably exact, the zero-reservation shortest-path
/// plan and the expected-value plan are evaluated as well and the cheapest of
/// the three is returned.
pub fn solve(problem: &Problem, options: &SolverOptions) -> Result<Solution> {
    let (mut plan, mut eval, exact) = solve_core(problem, options)?;
    if !exact {
        let (base_plan, base_eval) = super::bounds::greedy_on_demand_baseline(problem, options)?;
        if base_eval.total < eval.total {
            plan = base_plan;
            eval = base_eval;
        }
        let (eev_plan, _, _) = solve_core(&problem.expected_value_problem()?, options)?;
        let eev_eval = evaluate_plan(problem, &eev_plan, options.scenario_cap)?;
        if eev_eval.total < eval.total {
            plan = eev_plan;
            eval = eev_eval;
        }
    }
    Ok(finish(problem, plan, eval, exact))
}
