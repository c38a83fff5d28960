//! Stability report, stationary distribution and fee sweep.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use qkd_coop::dynamics::{
    simulate_dynamics, stationary_distribution, total_variation, transition_matrix, DynamicsConfig, FormationGame,
    SimulationConfig, StrategyProfile, StructureRule,
};
use qkd_coop::economics::{
    provider_total_cost, CharacteristicFunction, Coalition, PlannerGame, TabulatedGame,
};
use qkd_coop::network::Provider;

use crate::config::{CoalitionConfig, GameConfig, Loaded, MAX_COALITION_PROVIDERS};
use crate::error::{CliError, CliResult};
use crate::output::{num, OutDir};

#[derive(Debug, Clone, Serialize)]
pub struct StructureRow {
    pub id: usize,
    pub blocks: String,
    pub costs: Vec<f64>,
    pub equilibrium: bool,
    /// Stationary probability of the profile that forms exactly this
    /// structure.
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeeCell {
    pub qkd_share_price: f64,
    pub km_share_price: f64,
    pub stable: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GameReport {
    pub name: String,
    pub characteristic: BTreeMap<String, f64>,
    pub structures: Vec<StructureRow>,
    /// Equilibrium structure with the most stationary mass (lowest id on
    /// ties).
    pub stable: Option<usize>,
    pub reducible: bool,
    pub fee_sweep: Vec<FeeCell>,
    pub simulation_tv: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoalitionReport {
    pub providers: Vec<String>,
    pub games: Vec<GameReport>,
}

/// Stationary vector; a reducible chain gets the even mixture of its
/// closed classes.
fn stationary(fg: &FormationGame, dynamics: &DynamicsConfig) -> CliResult<(Vec<f64>, bool)> {
    let t = transition_matrix(fg, dynamics)?;
    let st = stationary_distribution(&t)?;
    if let Some(pi) = st.distribution {
        return Ok((pi, st.reducible));
    }
    let mut pi = vec![0.0; t.size()];
    let w = 1.0 / st.classes.len() as f64;
    for c in &st.classes {
        for (&s, &p) in c.states.iter().zip(&c.distribution) {
            pi[s] += w * p;
        }
    }
    Ok((pi, true))
}

fn structure_rows(fg: &FormationGame, pi: &[f64]) -> Vec<StructureRow> {
    fg.structures()
        .iter()
        .enumerate()
        .map(|(i, s)| StructureRow {
            id: i + 1,
            blocks: s.to_string(),
            costs: fg.structure_costs(i).to_vec(),
            equilibrium: fg.structure_is_equilibrium(i),
            probability: pi[StrategyProfile::from_structure(s).state() as usize],
        })
        .collect()
}

fn stable(rows: &[StructureRow]) -> Option<usize> {
    let mut best: Option<&StructureRow> = None;
    for r in rows.iter().filter(|r| r.equilibrium) {
        if best.is_none_or(|b| r.probability > b.probability) {
            best = Some(r);
        }
    }
    best.map(|r| r.id)
}

fn with_fees(providers: &[Provider], qkd: f64, km: f64) -> Vec<Provider> {
    providers
        .iter()
        .map(|p| Provider {
            qkd_share_price: qkd,
            km_share_price: km,
            ..p.clone()
        })
        .collect()
}

fn substream(seed: u64, name: &str) -> u64 {
    // FNV-1a over the stream name, mixed with the seed.
    let h = name
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    h ^ seed
}

fn tabulate(game: &dyn CharacteristicFunction) -> CliResult<TabulatedGame> {
    let n = game.providers();
    let values = (1..1u32 << n)
        .map(|m| Ok((Coalition(m), game.value(Coalition(m))?)))
        .collect::<CliResult<BTreeMap<Coalition, f64>>>()?;
    Ok(TabulatedGame::new(n, values)?)
}

struct Context<'a> {
    loaded: &'a Loaded,
    cfg: &'a CoalitionConfig,
    providers: &'a [Provider],
    exhaustive: bool,
}

impl Context<'_> {
    fn planner_game(&self) -> CliResult<TabulatedGame> {
        let l = self.loaded;
        let game = PlannerGame::new(
            l.topology()?.clone(),
            l.requests()?.to_vec(),
            self.providers.to_vec(),
            l.prices,
            l.physical()?,
            l.options(self.exhaustive),
        )?;
        game.precompute()?;
        tabulate(&game)
    }

    fn injected(&self, g: &GameConfig, values: &[f64]) -> CliResult<TabulatedGame> {
        let n = self.providers.len();
        if values.len() != 1 << n {
            return Err(CliError::config(
                &self.loaded.path,
                format!(
                    "game `{}`: characteristic needs {} entries for {n} providers, got {}",
                    g.name,
                    1 << n,
                    values.len()
                ),
            ));
        }
        TabulatedGame::from_masks(n, values)
            .map_err(|e| CliError::config(&self.loaded.path, format!("game `{}`: {e}", g.name)))
    }

    fn formation(&self, game: &TabulatedGame, providers: &[Provider], rule: StructureRule) -> CliResult<FormationGame> {
        Ok(FormationGame::new(game, providers, rule, self.cfg.state_cap)?)
    }

    fn report(&self, g: &GameConfig, game: &TabulatedGame, seed: u64, out: &mut Outputs) -> CliResult<GameReport> {
        let providers = g.priced(self.providers);
        let dynamics = self.cfg.dynamics();
        let fg = self.formation(game, &providers, self.cfg.rule)?;
        let (pi, reducible) = stationary(&fg, &dynamics)?;
        let structures = structure_rows(&fg, &pi);

        for (i, s) in fg.structures().iter().enumerate() {
            for c in provider_total_cost(s, game, &providers)? {
                out.shares.push(vec![
                    g.name.clone(),
                    (i + 1).to_string(),
                    providers[c.provider].id.clone(),
                    c.block.to_string(),
                    num(c.shapley),
                    num(c.sharing_qkd),
                    num(c.sharing_km),
                    num(c.cooperation),
                    num(c.total),
                ]);
            }
        }
        for (state, &p) in pi.iter().enumerate() {
            let profile = StrategyProfile::new(providers.len(), state as u64);
            let (idx, consistent) = fg.induced(&profile);
            out.stationary.push(vec![
                g.name.clone(),
                state.to_string(),
                flags(&profile),
                (idx + 1).to_string(),
                consistent.to_string(),
                fg.is_equilibrium(&profile).0.to_string(),
                num(p),
            ]);
        }
        let characteristic: BTreeMap<String, f64> = (1..1u32 << providers.len())
            .map(|m| Ok((Coalition(m).to_string(), game.value(Coalition(m))?)))
            .collect::<CliResult<_>>()?;
        for (c, v) in &characteristic {
            out.characteristic.push(vec![g.name.clone(), c.clone(), num(*v)]);
        }

        let fee_sweep = match &self.cfg.fee_sweep {
            Some(sweep) => {
                let grid: Vec<(f64, f64)> = sweep
                    .qkd_share_prices
                    .iter()
                    .flat_map(|&q| sweep.km_share_prices.iter().map(move |&k| (q, k)))
                    .collect();
                grid.par_iter()
                    .map(|&(q, k)| {
                        let fg = self.formation(game, &with_fees(&providers, q, k), self.cfg.rule)?;
                        let (pi, _) = stationary(&fg, &dynamics)?;
                        Ok(FeeCell {
                            qkd_share_price: q,
                            km_share_price: k,
                            stable: stable(&structure_rows(&fg, &pi)),
                        })
                    })
                    .collect::<CliResult<Vec<_>>>()?
            }
            None => Vec::new(),
        };
        for c in &fee_sweep {
            out.fees.push(vec![
                g.name.clone(),
                num(c.qkd_share_price),
                num(c.km_share_price),
                c.stable.map_or("none".into(), |s| s.to_string()),
                c.stable.map_or(String::new(), |s| fg.structures()[s - 1].to_string()),
            ]);
        }

        let simulation_tv = match &self.cfg.simulation {
            Some(s) => {
                let sim = simulate_dynamics(
                    &fg,
                    &SimulationConfig {
                        dynamics,
                        iterations: s.iterations,
                        seed,
                        mode: s.mode.into(),
                        initial: 0,
                    },
                )?;
                for (state, (f, p)) in sim.frequencies.iter().zip(&pi).enumerate() {
                    out.simulation.push(vec![g.name.clone(), state.to_string(), num(*f), num(*p)]);
                }
                Some(total_variation(&sim.frequencies, &pi))
            }
            None => None,
        };

        for r in &structures {
            let mut row = vec![g.name.clone(), r.id.to_string(), r.blocks.clone()];
            row.extend(r.costs.iter().map(|&c| num(c)));
            row.push(r.equilibrium.to_string());
            row.push(num(r.probability));
            out.payoff.push(row);
        }

        Ok(GameReport {
            name: g.name.clone(),
            characteristic,
            stable: stable(&structures),
            structures,
            reducible,
            fee_sweep,
            simulation_tv,
        })
    }
}

/// Pair flags that are set, e.g. `12;23`.
fn flags(p: &StrategyProfile) -> String {
    let n = p.providers();
    let mut v = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if p.flag(a, b) {
                v.push(format!("{}{}", a + 1, b + 1));
            }
        }
    }
    v.join(";")
}

#[derive(Default)]
struct Outputs {
    payoff: Vec<Vec<String>>,
    shares: Vec<Vec<String>>,
    stationary: Vec<Vec<String>>,
    characteristic: Vec<Vec<String>>,
    fees: Vec<Vec<String>>,
    simulation: Vec<Vec<String>>,
}

pub fn run_coalition(loaded: &Loaded, out: &OutDir, seed: u64, exhaustive: bool) -> CliResult<CoalitionReport> {
    let cfg = loaded.config.coalition.clone().unwrap_or(CoalitionConfig {
        games: Vec::new(),
        update_probability: 0.5,
        irrationality: 0.01,
        state_cap: qkd_coop::dynamics::DEFAULT_STATE_CAP,
        rule: StructureRule::default(),
        fee_sweep: None,
        simulation: None,
    });
    let providers = loaded.providers()?;
    let n = providers.len();
    if n == 0 || n > MAX_COALITION_PROVIDERS {
        return Err(CliError::config(
            &loaded.path,
            format!("coalition runs take 1 to {MAX_COALITION_PROVIDERS} providers, got {n}"),
        ));
    }
    let games = if cfg.games.is_empty() {
        vec![GameConfig {
            name: "instance".into(),
            characteristic: None,
            qkd_share_price: None,
            km_share_price: None,
            cooperation_fee: None,
        }]
    } else {
        cfg.games.clone()
    };
    let ctx = Context {
        loaded,
        cfg: &cfg,
        providers,
        exhaustive,
    };
    let mut solved: Option<TabulatedGame> = None;
    let mut outputs = Outputs::default();
    let mut reports = Vec::new();
    for g in &games {
        let game = match &g.characteristic {
            Some(v) => ctx.injected(g, v)?,
            None => {
                if solved.is_none() {
                    solved = Some(ctx.planner_game()?);
                }
                solved.clone().expect("just solved")
            }
        };
        reports.push(ctx.report(g, &game, substream(seed, &format!("dynamics/{}", g.name)), &mut outputs)?);
    }

    let mut payoff_header = vec!["game".to_string(), "structure".into(), "blocks".into()];
    payoff_header.extend(providers.iter().map(|p| format!("cost_{}", p.id)));
    payoff_header.push("equilibrium".into());
    payoff_header.push("probability".into());
    let header: Vec<&str> = payoff_header.iter().map(String::as_str).collect();
    out.csv("payoff.csv", &header, &outputs.payoff)?;
    out.csv(
        "cost_shares.csv",
        &[
            "game",
            "structure",
            "provider",
            "block",
            "shapley",
            "sharing_qkd",
            "sharing_km",
            "cooperation",
            "total",
        ],
        &outputs.shares,
    )?;
    out.csv(
        "stationary.csv",
        &["game", "state", "flags", "structure", "consistent", "equilibrium", "probability"],
        &outputs.stationary,
    )?;
    out.csv("characteristic.csv", &["game", "coalition", "value"], &outputs.characteristic)?;
    if cfg.fee_sweep.is_some() {
        out.csv(
            "fee_sweep.csv",
            &["game", "qkd_share_price", "km_share_price", "stable_structure", "blocks"],
            &outputs.fees,
        )?;
    }
    if cfg.simulation.is_some() {
        out.csv(
            "simulation.csv",
            &["game", "state", "frequency", "stationary"],
            &outputs.simulation,
        )?;
    }
    let report = CoalitionReport {
        providers: providers.iter().map(|p| p.id.clone()).collect(),
        games: reports,
    };
    out.json("coalition.json", &report)?;
    Ok(report)
}
