//! plan, sweep, bounds and oracle-check.

use rayon::prelude::*;
use serde::Serialize;

use qkd_coop::demand::DemandDistribution;
use qkd_coop::planner::{
    audit, bounds, brute_force_oracle, evaluate_plan, greedy_on_demand_baseline, solve, PlanEvaluation, Problem, Resource, Solution, SolverOptions,
};

use crate::config::{Loaded, SweepAxis};
use crate::error::{CliError, CliResult};
use crate::output::{num, OutDir};

#[derive(Debug, Clone, Serialize)]
pub struct HopReport {
    pub link: String,
    pub km: f64,
    pub qkd_reserved: u32,
    pub km_reserved: u32,
    /// `reserved`, `on-demand`, or `reserved+on-demand` at peak demand.
    pub phase: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RouteReport {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub route: Vec<String>,
    pub length_km: f64,
    pub hops: Vec<HopReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub total: f64,
    pub first_stage_cost: f64,
    pub expected_second_stage_cost: f64,
    pub exact: bool,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_total: Option<f64>,
    pub requests: Vec<RouteReport>,
}

fn phase_label(reserved: [u32; 2], peak: [u32; 2]) -> &'static str {
    if reserved.iter().zip(&peak).all(|(r, p)| r >= p) {
        "reserved"
    } else if reserved == [0, 0] {
        "on-demand"
    } else {
        "reserved+on-demand"
    }
}

pub fn plan_report(problem: &Problem, solution: &Solution) -> PlanReport {
    let topo = &problem.topology;
    let plan = &solution.plan;
    let requests = problem
        .requests
        .iter()
        .zip(&plan.routes)
        .enumerate()
        .map(|(f, (req, path))| {
            let peak = problem.parallel(req.demand.max_rate());
            let hops = path
                .links
                .iter()
                .map(|&l| {
                    let reserved = [plan.reserved(Resource::Qkd, l, f), plan.reserved(Resource::Km, l, f)];
                    HopReport {
                        link: topo.link_label(l),
                        km: topo.link(l).km,
                        qkd_reserved: reserved[0],
                        km_reserved: reserved[1],
                        phase: phase_label(reserved, [Resource::Qkd.demand(peak), Resource::Km.demand(peak)]).into(),
                    }
                })
                .collect();
            RouteReport {
                id: req.id.clone(),
                src: req.source.clone(),
                dst: req.destination.clone(),
                route: path.nodes.iter().map(|&n| topo.node_name(n).to_string()).collect(),
                length_km: path.length_km,
                hops,
            }
        })
        .collect();
    PlanReport {
        total: solution.evaluation.total,
        first_stage_cost: solution.evaluation.first_stage_cost,
        expected_second_stage_cost: solution.evaluation.expected_second_stage_cost,
        exact: solution.exact,
        feasible: audit(problem, solution).is_ok(),
        baseline_total: None,
        requests,
    }
}

pub fn run_plan(loaded: &Loaded, out: &OutDir, exhaustive: bool, baseline: bool) -> CliResult<PlanReport> {
    let problem = loaded.problem()?;
    let opts = loaded.options(exhaustive);
    let solution = solve(&problem, &opts)?;
    let mut report = plan_report(&problem, &solution);
    if baseline {
        report.baseline_total = Some(greedy_on_demand_baseline(&problem, &opts)?.1.total);
    }
    out.json("plan.json", &report)?;

    let routes: Vec<Vec<String>> = report
        .requests
        .iter()
        .map(|r| {
            vec![
                r.id.clone(),
                r.src.clone(),
                r.dst.clone(),
                r.route.join("-"),
                r.hops.len().to_string(),
                num(r.length_km),
            ]
        })
        .collect();
    out.csv("routes.csv", &["request", "src", "dst", "route", "hops", "length_km"], &routes)?;

    let mut hops = Vec::new();
    for r in &report.requests {
        for (i, h) in r.hops.iter().enumerate() {
            hops.push(vec![
                r.id.clone(),
                i.to_string(),
                h.link.clone(),
                num(h.km),
                h.qkd_reserved.to_string(),
                h.km_reserved.to_string(),
                h.phase.clone(),
            ]);
        }
    }
    out.csv(
        "hops.csv",
        &["request", "hop", "link", "km", "qkd_reserved", "km_reserved", "phase"],
        &hops,
    )?;

    let scenarios: Vec<Vec<String>> = solution
        .evaluation
        .per_scenario
        .iter()
        .flatten()
        .map(|s| {
            vec![
                s.index.to_string(),
                num(s.probability),
                num(s.first_stage),
                num(s.second_stage),
                num(s.first_stage + s.second_stage),
            ]
        })
        .collect();
    out.csv(
        "scenarios.csv",
        &["scenario", "probability", "first_stage", "second_stage", "total"],
        &scenarios,
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub first_stage: f64,
    pub second_stage: f64,
    pub total: f64,
}

impl From<(f64, PlanEvaluation)> for SweepRow {
    fn from((value, e): (f64, PlanEvaluation)) -> Self {
        SweepRow {
            value,
            first_stage: e.first_stage_cost,
            second_stage: e.expected_second_stage_cost,
            total: e.total,
        }
    }
}

fn scaled_demands(problem: &Problem, factor: f64) -> CliResult<Problem> {
    let demands = problem
        .requests
        .iter()
        .map(|r| r.demand.scaled(factor))
        .collect::<qkd_coop::Result<Vec<DemandDistribution>>>()?;
    Ok(problem.with_demands(demands))
}

pub fn run_sweep(loaded: &Loaded, out: &OutDir, exhaustive: bool) -> CliResult<Vec<SweepRow>> {
    let sweep = loaded.config.sweep.as_ref().ok_or_else(|| loaded.missing("sweep"))?;
    let problem = loaded.problem()?;
    let opts = loaded.options(exhaustive);
    let reservation_axis = matches!(sweep.axis, SweepAxis::ReservedQkd | SweepAxis::ReservedKm);
    if reservation_axis {
        if let Some(v) = sweep.values.iter().find(|v| !(v.is_finite() && **v >= 0.0 && v.fract() == 0.0)) {
            return Err(CliError::config(
                &loaded.path,
                format!("sweep value {v} is not a reservation count"),
            ));
        }
    }
    let base = if reservation_axis || sweep.fixed_plan {
        Some(solve(&problem, &opts)?.plan)
    } else {
        None
    };
    let point = |v: f64| -> CliResult<SweepRow> {
        let eval = match sweep.axis {
            SweepAxis::KeyRateScale => {
                let p = scaled_demands(&problem, v)?;
                match &base {
                    Some(plan) => evaluate_plan(&p, plan, opts.scenario_cap)?,
                    None => solve(&p, &opts)?.evaluation,
                }
            }
            SweepAxis::ChannelMultiplier => {
                let mut p = problem.clone();
                p.prices = p.prices.with_channel_multiplier(v);
                match &base {
                    Some(plan) => evaluate_plan(&p, plan, opts.scenario_cap)?,
                    None => solve(&p, &opts)?.evaluation,
                }
            }
            SweepAxis::ReservedQkd | SweepAxis::ReservedKm => {
                let resource = if sweep.axis == SweepAxis::ReservedQkd {
                    Resource::Qkd
                } else {
                    Resource::Km
                };
                let mut plan = base.clone().expect("base plan for reservation sweeps");
                for (l, users) in plan.link_users() {
                    for f in users {
                        plan.set_reserved(resource, l, f, v as u32);
                    }
                }
                evaluate_plan(&problem, &plan, opts.scenario_cap)?
            }
        };
        Ok((v, eval).into())
    };
    let rows = sweep
        .values
        .par_iter()
        .map(|&v| point(v))
        .collect::<CliResult<Vec<SweepRow>>>()?;
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                sweep.axis.name().to_string(),
                num(r.value),
                num(r.first_stage),
                num(r.second_stage),
                num(r.total),
            ]
        })
        .collect();
    out.csv("sweep.csv", &["axis", "value", "first_stage", "second_stage", "total"], &records)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsRow {
    pub requests: usize,
    pub ws: f64,
    pub ws_exact: bool,
    pub sp: f64,
    pub sp_exact: bool,
    pub eev: f64,
    pub eev_gap_percent: f64,
    pub ws_gap_percent: f64,
    pub baseline: Option<f64>,
}

pub fn run_bounds(loaded: &Loaded, out: &OutDir, exhaustive: bool, baseline: bool) -> CliResult<Vec<BoundsRow>> {
    let problem = loaded.problem()?;
    let opts = loaded.options(exhaustive);
    let n = problem.requests.len();
    let counts = match &loaded.config.bounds {
        Some(b) if !b.request_counts.is_empty() => b.request_counts.clone(),
        _ => vec![n],
    };
    if let Some(c) = counts.iter().find(|&&c| c > n) {
        return Err(CliError::config(
            &loaded.path,
            format!("bounds.request_counts entry {c} exceeds the {n} requests"),
        ));
    }
    let mut rows = Vec::new();
    for c in counts {
        let mut p = problem.clone();
        p.requests.truncate(c);
        let b = bounds(&p, &opts, baseline)?;
        rows.push(BoundsRow {
            requests: c,
            ws: b.ws,
            ws_exact: b.ws_exact,
            sp: b.sp,
            sp_exact: b.sp_exact,
            eev: b.eev,
            eev_gap_percent: b.eev_gap_percent(),
            ws_gap_percent: b.ws_gap_percent(),
            baseline: b.baseline,
        });
    }
    let mut header = vec![
        "requests",
        "ws",
        "ws_exact",
        "sp",
        "sp_exact",
        "eev",
        "eev_gap_percent",
        "ws_gap_percent",
    ];
    if baseline {
        header.push("baseline");
    }
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.requests.to_string(),
                num(r.ws),
                r.ws_exact.to_string(),
                num(r.sp),
                r.sp_exact.to_string(),
                num(r.eev),
                num(r.eev_gap_percent),
                num(r.ws_gap_percent),
            ];
            if let Some(b) = r.baseline {
                v.push(num(b));
            }
            v
        })
        .collect();
    out.csv("bounds.csv", &header, &records)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub solver_total: f64,
    pub oracle_total: f64,
    pub matches: bool,
}

/// Exhaustive solve against the brute-force oracle; a mismatch is an error
/// after the report is written.
pub fn oracle_check(loaded: &Loaded, out: &OutDir) -> CliResult<OracleReport> {
    let problem = loaded.problem()?;
    let opts = SolverOptions {
        exhaustive: true,
        ..loaded.options(true)
    };
    let sol = solve(&problem, &opts)?;
    let oracle = brute_force_oracle(&problem, opts.k)?;
    let (a, b) = (sol.evaluation.total, oracle.total);
    let report = OracleReport {
        solver_total: a,
        oracle_total: b,
        matches: (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0),
    };
    out.json("oracle.json", &report)?;
    if !report.matches {
        return Err(CliError::OracleMismatch { solver: a, oracle: b });
    }
    Ok(report)
}
