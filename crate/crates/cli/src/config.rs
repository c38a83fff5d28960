//! Experiment configuration. Paths inside a config are relative to the
//! config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use qkd_coop::cost::{PhysicalParams, PriceTable};
use qkd_coop::dynamics::{DynamicsConfig, SimulationMode, StructureRule, DEFAULT_STATE_CAP};
use qkd_coop::economics::pool_capacities;
use qkd_coop::economics::Coalition;
use qkd_coop::network::{load_requests, load_topology, ChainRequest, Provider, Topology};
use qkd_coop::planner::{PoolCapacities, Problem, SolverOptions, KM_POOL_MAX, QKD_POOL_MAX};

use crate::error::{CliError, CliResult};

/// Largest provider count accepted by `coalition`.
pub const MAX_COALITION_PROVIDERS: usize = 5;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub topology: Option<PathBuf>,
    #[serde(default)]
    pub requests: Option<PathBuf>,
    #[serde(default)]
    pub providers: Option<PathBuf>,
    /// Price table file; the published table when absent.
    #[serde(default)]
    pub prices: Option<PathBuf>,
    #[serde(default)]
    pub physical: Option<PhysicalParams>,
    /// Same pool on every link; otherwise the providers' summed contributions.
    #[serde(default)]
    pub pools: Option<UniformPools>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
    #[serde(default)]
    pub coalition: Option<CoalitionConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformPools {
    pub qkd: u32,
    pub km: u32,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub k: Option<usize>,
    pub route_budget: Option<u64>,
    pub group_budget: Option<u64>,
    pub scenario_cap: Option<u64>,
    pub ws_cap: Option<u64>,
    #[serde(default)]
    pub exhaustive: bool,
}

impl SolverConfig {
    pub fn options(&self, force_exhaustive: bool) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            k: self.k.unwrap_or(d.k),
            route_budget: self.route_budget.unwrap_or(d.route_budget),
            group_budget: self.group_budget.unwrap_or(d.group_budget),
            scenario_cap: self.scenario_cap.unwrap_or(d.scenario_cap),
            ws_cap: self.ws_cap.unwrap_or(d.ws_cap),
            exhaustive: self.exhaustive || force_exhaustive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Multiplies every demand support point.
    KeyRateScale,
    /// Fixed QKD reservation on every routed hop.
    ReservedQkd,
    /// Fixed KM reservation on every routed hop.
    ReservedKm,
    /// Multiplies the fibre channel price in every phase.
    ChannelMultiplier,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::KeyRateScale => "key_rate_scale",
            SweepAxis::ReservedQkd => "reserved_qkd",
            SweepAxis::ReservedKm => "reserved_km",
            SweepAxis::ChannelMultiplier => "channel_multiplier",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Evaluate the base plan at every point instead of re-solving.
    /// Reservation axes always do.
    #[serde(default)]
    pub fixed_plan: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// Prefix lengths of the request list; the full list when empty.
    #[serde(default)]
    pub request_counts: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub name: String,
    /// Injected characteristic costs indexed by coalition bitmask (entry 0
    /// is the empty coalition and must be 0). Solved from the instance
    /// when absent.
    #[serde(default)]
    pub characteristic: Option<Vec<f64>>,
    #[serde(default)]
    pub qkd_share_price: Option<f64>,
    #[serde(default)]
    pub km_share_price: Option<f64>,
    #[serde(default)]
    pub cooperation_fee: Option<f64>,
}

impl GameConfig {
    /// The providers with this game's fee overrides applied.
    pub fn priced(&self, providers: &[Provider]) -> Vec<Provider> {
        providers
            .iter()
            .map(|p| {
                let mut p = p.clone();
                if let Some(v) = self.qkd_share_price {
                    p.qkd_share_price = v;
                }
                if let Some(v) = self.km_share_price {
                    p.km_share_price = v;
                }
                if let Some(v) = self.cooperation_fee {
                    p.cooperation_fee = v;
                }
                p
            })
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeeSweep {
    pub qkd_share_prices: Vec<f64>,
    pub km_share_prices: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub iterations: usize,
    #[serde(default)]
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Chain,
    BestResponse,
}

impl From<Mode> for SimulationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Chain => SimulationMode::Chain,
            Mode::BestResponse => SimulationMode::BestResponse,
        }
    }
}

fn default_lambda() -> f64 {
    0.5
}

fn default_aleph() -> f64 {
    0.01
}

fn default_state_cap() -> u64 {
    DEFAULT_STATE_CAP
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoalitionConfig {
    /// One game solved from the instance with the providers' own fees when
    /// empty.
    #[serde(default)]
    pub games: Vec<GameConfig>,
    #[serde(default = "default_lambda")]
    pub update_probability: f64,
    #[serde(default = "default_aleph")]
    pub irrationality: f64,
    #[serde(default = "default_state_cap")]
    pub state_cap: u64,
    #[serde(default)]
    pub rule: StructureRule,
    #[serde(default)]
    pub fee_sweep: Option<FeeSweep>,
    #[serde(default)]
    pub simulation: Option<SimulationSettings>,
}

impl CoalitionConfig {
    pub fn dynamics(&self) -> DynamicsConfig {
        DynamicsConfig {
            update_probability: self.update_probability,
            irrationality: self.irrationality,
            state_cap: self.state_cap,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvidersDoc {
    providers: Vec<Provider>,
}

/// A parsed config together with the files it points at.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub path: PathBuf,
    pub config: ExperimentConfig,
    pub topology: Option<Topology>,
    pub requests: Option<Vec<ChainRequest>>,
    pub providers: Option<Vec<Provider>>,
    pub prices: PriceTable,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::config(path, format!("cannot read: {e}")))
}

pub fn load(path: &Path) -> CliResult<Loaded> {
    let text = read(path)?;
    let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| CliError::config(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &PathBuf| base.join(p);

    let topology = match &config.topology {
        Some(p) => {
            let p = resolve(p);
            Some(load_topology(&read(&p)?).map_err(|e| CliError::config(&p, e.to_string()))?)
        }
        None => None,
    };
    let requests = match (&config.requests, &topology) {
        (Some(p), Some(t)) => {
            let p = resolve(p);
            Some(load_requests(&read(&p)?, t).map_err(|e| CliError::config(&p, e.to_string()))?)
        }
        (Some(_), None) => return Err(CliError::config(path, "`requests` given without `topology`")),
        (None, _) => None,
    };
    let providers = match &config.providers {
        Some(p) => {
            let p = resolve(p);
            let doc: ProvidersDoc =
                serde_json::from_str(&read(&p)?).map_err(|e| CliError::config(&p, e.to_string()))?;
            for pr in &doc.providers {
                pr.validate().map_err(|e| CliError::config(&p, e.to_string()))?;
            }
            Some(doc.providers)
        }
        None => None,
    };
    let prices = match &config.prices {
        Some(p) => {
            let p = resolve(p);
            let t: PriceTable = serde_json::from_str(&read(&p)?).map_err(|e| CliError::config(&p, e.to_string()))?;
            t.validate().map_err(|e| CliError::config(&p, e.to_string()))?;
            t
        }
        None => PriceTable::table_one(),
    };
    if let Some(s) = &config.sweep {
        if s.values.is_empty() {
            return Err(CliError::config(path, "sweep.values must not be empty"));
        }
    }
    if let Some(c) = &config.coalition {
        c.dynamics().validate().map_err(|e| CliError::config(path, format!("coalition: {e}")))?;
        if let Some(f) = &c.fee_sweep {
            if f.qkd_share_prices.is_empty() || f.km_share_prices.is_empty() {
                return Err(CliError::config(path, "coalition.fee_sweep axes must not be empty"));
            }
        }
    }
    Ok(Loaded {
        path: path.to_path_buf(),
        config,
        topology,
        requests,
        providers,
        prices,
    })
}

impl Loaded {
    pub fn missing(&self, field: &str) -> CliError {
        CliError::config(&self.path, format!("`{field}` is required for this command"))
    }

    pub fn topology(&self) -> CliResult<&Topology> {
        self.topology.as_ref().ok_or_else(|| self.missing("topology"))
    }

    pub fn requests(&self) -> CliResult<&[ChainRequest]> {
        self.requests.as_deref().ok_or_else(|| self.missing("requests"))
    }

    pub fn providers(&self) -> CliResult<&[Provider]> {
        self.providers.as_deref().ok_or_else(|| self.missing("providers"))
    }

    pub fn physical(&self) -> CliResult<PhysicalParams> {
        self.config.physical.clone().ok_or_else(|| self.missing("physical"))
    }

    /// Grand-coalition pools, or the uniform override.
    pub fn pools(&self) -> CliResult<PoolCapacities> {
        let topo = self.topology()?;
        if let Some(u) = self.config.pools {
            return PoolCapacities::uniform(topo, u.qkd, u.km).map_err(|e| CliError::config(&self.path, e.to_string()));
        }
        let providers = self
            .providers
            .as_deref()
            .ok_or_else(|| CliError::config(&self.path, "either `pools` or `providers` is required"))?;
        Ok(pool_capacities(
            Coalition::grand(providers.len()),
            providers,
            topo,
            QKD_POOL_MAX,
            KM_POOL_MAX,
        )?)
    }

    pub fn problem(&self) -> CliResult<Problem> {
        Ok(Problem::new(
            self.topology()?.clone(),
            self.requests()?.to_vec(),
            self.pools()?,
            self.prices,
            self.physical()?,
        )?)
    }

    pub fn options(&self, force_exhaustive: bool) -> SolverOptions {
        self.config.solver.options(force_exhaustive)
    }
}
