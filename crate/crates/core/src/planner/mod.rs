//! Two-stage stochastic wavelength planning.
//!
//! Stage one picks a route per request and integer QKD/KM reservations on
//! every hop; stage two, per demand scenario, uses reserved wavelengths
//! (subject to the per-link pool) and buys the remainder on demand. Given the
//! routes the objective separates into independent (link, resource) groups,
//! each a small multi-item newsvendor coupled only through the pool.

mod audit;
mod bounds;
mod oracle;
mod recourse;
mod reservation;
mod search;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cost::{objective_coefficients, Phase, PhysicalParams, PriceTable};
use crate::demand::{expected_demand, DemandDistribution, JointScenarioSpace, DEFAULT_SCENARIO_CAP};
use crate::error::{Error, Result};
use crate::network::{k_candidate_paths, ChainRequest, LinkId, Path, Topology};

pub use audit::{audit, AuditReport};
pub use bounds::{bounds, greedy_on_demand_baseline, solve_eev, solve_ws, BoundsReport, WsBound};
pub use oracle::{brute_force_oracle, OracleResult, ORACLE_MAX_PATHS, ORACLE_MAX_REQUESTS, ORACLE_MAX_SCENARIOS};
pub use recourse::{optimal_recourse, single_link_recourse, LinkRecourse};
pub use reservation::{newsvendor, optimal_reservation_for_route, NewsvendorItem, Outcome};
pub use search::{evaluate_plan, solve};

/// Wavelength pool maxima used in the experiments.
pub const QKD_POOL_MAX: u32 = 1000;
pub const KM_POOL_MAX: u32 = 300;

/// Joint scenario count up to which per-scenario breakdowns and recourse
/// families are materialized.
pub const BREAKDOWN_CAP: u128 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resource {
    Qkd,
    Km,
}

impl Resource {
    pub const ALL: [Resource; 2] = [Resource::Qkd, Resource::Km];

    /// Wavelengths needed for `parallel` QKD links.
    pub fn demand(self, parallel: u32) -> u32 {
        match self {
            Resource::Qkd => 3 * parallel,
            Resource::Km => parallel,
        }
    }
}

/// Per-link wavelength pools of a coalition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolCapacities {
    pub qkd_per_link: Vec<u32>,
    pub km_per_link: Vec<u32>,
    pub qkd_cap: u32,
    pub km_cap: u32,
}

impl PoolCapacities {
    pub fn new(qkd_per_link: Vec<u32>, km_per_link: Vec<u32>, qkd_cap: u32, km_cap: u32) -> Result<Self> {
        if qkd_per_link.len() != km_per_link.len() {
            return Err(Error::Parameter("QKD and KM pool vectors differ in length".into()));
        }
        if let Some(v) = qkd_per_link.iter().find(|&&v| v > qkd_cap) {
            return Err(Error::Parameter(format!("QKD pool {v} exceeds the maximum {qkd_cap}")));
        }
        if let Some(v) = km_per_link.iter().find(|&&v| v > km_cap) {
            return Err(Error::Parameter(format!("KM pool {v} exceeds the maximum {km_cap}")));
        }
        Ok(PoolCapacities {
            qkd_per_link,
            km_per_link,
            qkd_cap,
            km_cap,
        })
    }

    /// Same pool on every link, with the default maxima.
    pub fn uniform(topology: &Topology, qkd: u32, km: u32) -> Result<Self> {
        let n = topology.links().len();
        PoolCapacities::new(vec![qkd; n], vec![km; n], QKD_POOL_MAX, KM_POOL_MAX)
    }

    pub fn capacity(&self, link: LinkId, resource: Resource) -> u32 {
        match resource {
            Resource::Qkd => self.qkd_per_link[link],
            Resource::Km => self.km_per_link[link],
        }
    }

    pub fn scaled_up(&self, extra: u32) -> Self {
        PoolCapacities {
            qkd_per_link: self.qkd_per_link.iter().map(|v| (v + extra).min(self.qkd_cap)).collect(),
            km_per_link: self.km_per_link.iter().map(|v| (v + extra).min(self.km_cap)).collect(),
            ..*self
        }
    }
}

/// A fully specified planning instance.
#[derive(Debug, Clone)]
pub struct Problem {
    pub topology: Topology,
    pub requests: Vec<ChainRequest>,
    pub pools: PoolCapacities,
    pub prices: PriceTable,
    pub params: PhysicalParams,
}

impl Problem {
    pub fn new(
        topology: Topology,
        requests: Vec<ChainRequest>,
        pools: PoolCapacities,
        prices: PriceTable,
        params: PhysicalParams,
    ) -> Result<Self> {
        prices.validate()?;
        params.validate()?;
        if pools.qkd_per_link.len() != topology.links().len() {
            return Err(Error::Parameter(format!(
                "pool vector covers {} links but the topology has {}",
                pools.qkd_per_link.len(),
                topology.links().len()
            )));
        }
        let mut ids = std::collections::HashSet::new();
        for r in &requests {
            r.validate(&topology)?;
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Request {
                    id: r.id.clone(),
                    message: "duplicate request id".into(),
                });
            }
        }
        Ok(Problem {
            topology,
            requests,
            pools,
            prices,
            params,
        })
    }

    /// Same instance with different demand distributions.
    pub fn with_demands(&self, demands: Vec<DemandDistribution>) -> Self {
        let mut out = self.clone();
        for (r, d) in out.requests.iter_mut().zip(demands) {
            r.demand = d;
        }
        out
    }

    pub fn with_pools(&self, pools: PoolCapacities) -> Self {
        Problem { pools, ..self.clone() }
    }

    /// Every request's demand collapsed onto its expectation.
    pub fn expected_value_problem(&self) -> Result<Self> {
        let demands = self
            .requests
            .iter()
            .map(|r| DemandDistribution::degenerate(expected_demand(&r.demand)))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.with_demands(demands))
    }

    /// Joint space over raw secret-key rates, keyed by request id.
    pub fn scenario_space(&self) -> JointScenarioSpace {
        JointScenarioSpace::new(
            self.requests
                .iter()
                .map(|r| (r.id.clone(), r.demand.clone()))
                .collect(),
        )
    }

    /// Request indices in the iteration order of [`Problem::scenario_space`].
    pub fn scenario_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.requests.len()).collect();
        idx.sort_by(|&a, &b| self.requests[a].id.cmp(&self.requests[b].id));
        idx
    }

    pub fn parallel(&self, rate: f64) -> u32 {
        self.params.parallel_links(rate)
    }

    /// Parallel-link count at the expected demand; fixes the first-stage
    /// coefficients.
    pub fn expected_parallel(&self, request: usize) -> u32 {
        self.parallel(expected_demand(&self.requests[request].demand))
    }

    /// Distribution of the parallel-link count; rates that need the same
    /// number of links are merged.
    pub fn parallel_distribution(&self, request: usize) -> Vec<(u32, f64)> {
        let mut merged: BTreeMap<u32, f64> = BTreeMap::new();
        for (v, p) in self.requests[request].demand.iter() {
            *merged.entry(self.parallel(v)).or_insert(0.0) += p;
        }
        merged.into_iter().filter(|&(_, p)| p > 0.0).collect()
    }

    pub fn coefficient(&self, link: LinkId, resource: Resource, parallel: u32, phase: Phase) -> f64 {
        let c = objective_coefficients(self.topology.link(link).km, parallel, &self.prices, &self.params, phase)
            .expect("validated parameters");
        match resource {
            Resource::Qkd => c.per_qkd_wavelength,
            Resource::Km => c.per_km_wavelength,
        }
    }

    /// Energy charged for the nodes a path enters.
    pub fn path_energy(&self, path: &Path) -> f64 {
        path.nodes[1..]
            .iter()
            .map(|&n| self.params.energy_cost(self.topology.node_name(n)))
            .sum()
    }

    pub fn candidate_paths(&self, k: usize) -> Result<Vec<Vec<Path>>> {
        self.requests
            .iter()
            .map(|r| k_candidate_paths(&self.topology, r, k))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Candidate paths per request.
    pub k: usize,
    /// Largest route-assignment product searched exhaustively.
    pub route_budget: u64,
    /// Largest (reservation vectors × scenarios) product optimized exactly
    /// per capacity-bound group.
    pub group_budget: u64,
    /// Cap on joint scenarios enumerated for one coupled group.
    pub scenario_cap: u64,
    /// Lift both budgets.
    pub exhaustive: bool,
    /// Largest joint space for which the wait-and-see bound is solved per
    /// scenario; larger spaces use a per-request relaxation.
    pub ws_cap: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            k: 8,
            route_budget: 4096,
            group_budget: 200_000,
            scenario_cap: DEFAULT_SCENARIO_CAP,
            exhaustive: false,
            ws_cap: 4096,
        }
    }
}

impl SolverOptions {
    pub fn exhaustive() -> Self {
        SolverOptions {
            exhaustive: true,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// First-stage decisions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Plan {
    pub routes: Vec<Path>,
    /// (link, request index) → reserved QKD wavelengths; zero entries omitted.
    pub qkd_reserved: BTreeMap<(LinkId, usize), u32>,
    pub km_reserved: BTreeMap<(LinkId, usize), u32>,
}

impl Plan {
    pub fn reserved(&self, resource: Resource, link: LinkId, request: usize) -> u32 {
        let map = match resource {
            Resource::Qkd => &self.qkd_reserved,
            Resource::Km => &self.km_reserved,
        };
        map.get(&(link, request)).copied().unwrap_or(0)
    }

    pub fn set_reserved(&mut self, resource: Resource, link: LinkId, request: usize, value: u32) {
        let map = match resource {
            Resource::Qkd => &mut self.qkd_reserved,
            Resource::Km => &mut self.km_reserved,
        };
        if value == 0 {
            map.remove(&(link, request));
        } else {
            map.insert((link, request), value);
        }
    }

    /// Requests routed over each link, in request order.
    pub fn link_users(&self) -> BTreeMap<LinkId, Vec<usize>> {
        let mut out: BTreeMap<LinkId, Vec<usize>> = BTreeMap::new();
        for (f, p) in self.routes.iter().enumerate() {
            for &l in &p.links {
                out.entry(l).or_default().push(f);
            }
        }
        out
    }
}

/// Second-stage decisions for one scenario: (link, request) → usage.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Recourse {
    pub hops: BTreeMap<(LinkId, usize), LinkRecourse>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCost {
    pub index: usize,
    pub probability: f64,
    pub first_stage: f64,
    pub second_stage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvaluation {
    pub first_stage_cost: f64,
    pub expected_second_stage_cost: f64,
    pub total: f64,
    /// Present when the joint scenario space is small enough to list.
    pub per_scenario: Option<Vec<ScenarioCost>>,
}

impl PlanEvaluation {
    pub(crate) fn from_parts(first: f64, second: f64) -> Self {
        PlanEvaluation {
            first_stage_cost: first,
            expected_second_stage_cost: second,
            total: first + second,
            per_scenario: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub plan: Plan,
    pub evaluation: PlanEvaluation,
    /// One recourse per joint scenario, in scenario order, when listable.
    pub recourse: Option<Vec<Recourse>>,
    /// False when route search or any reservation group fell back to a
    /// heuristic.
    pub exact: bool,
}

/// `a ≤ b` up to a relative tolerance.
pub fn approx_le(a: f64, b: f64, rel: f64) -> bool {
    a <= b + rel * a.abs().max(b.abs()).max(1.0)
}
