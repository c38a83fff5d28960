//! Coalition formation: pairwise cooperation profiles, best responses,
//! the strategy-adaptation Markov chain and its stationary distribution.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::economics::{
    all_structures, provider_total_cost, CharacteristicFunction, Coalition, CoalitionStructure,
};
use crate::error::{Error, Result};
use crate::network::Provider;

/// Default cap on the number of profiles; a dense matrix over 2^10 states
/// already takes 8 MiB.
pub const DEFAULT_STATE_CAP: u64 = 1 << 10;

const STATIONARY_TOL: f64 = 1e-12;
const MAX_POWER_ITERATIONS: usize = 1_000_000;

/// `a` is lower than `b` by more than float noise.
pub fn strictly_less(a: f64, b: f64) -> bool {
    a < b - 1e-9 * b.abs().max(1.0)
}

/// Pairwise cooperation flags; state index is the bit pattern over pairs
/// (0,1), (0,2), …, (1,2), … in that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StrategyProfile {
    n: usize,
    bits: u64,
}

fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

fn pair_index(n: usize, a: usize, b: usize) -> usize {
    let (a, b) = (a.min(b), a.max(b));
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

impl StrategyProfile {
    pub fn new(n: usize, bits: u64) -> Self {
        debug_assert!(pair_count(n) >= 64 || bits >> pair_count(n) == 0);
        StrategyProfile { n, bits }
    }

    pub fn empty(n: usize) -> Self {
        StrategyProfile { n, bits: 0 }
    }

    pub fn providers(&self) -> usize {
        self.n
    }

    pub fn state(&self) -> u64 {
        self.bits
    }

    pub fn flag(&self, a: usize, b: usize) -> bool {
        a != b && self.bits >> pair_index(self.n, a, b) & 1 == 1
    }

    pub fn set(&mut self, a: usize, b: usize, on: bool) {
        let i = pair_index(self.n, a, b);
        if on {
            self.bits |= 1 << i;
        } else {
            self.bits &= !(1 << i);
        }
    }

    /// Partners of `s` in ascending order.
    fn partners(&self, s: usize) -> impl Iterator<Item = usize> {
        (0..self.n).filter(move |&l| l != s)
    }

    /// Provider `s`'s flag vector; bit i is the flag with its i-th partner.
    pub fn strategy(&self, s: usize) -> u32 {
        self.partners(s)
            .enumerate()
            .fold(0, |acc, (i, l)| acc | (self.flag(s, l) as u32) << i)
    }

    pub fn with_strategy(&self, s: usize, strategy: u32) -> Self {
        let mut out = *self;
        for (i, l) in self.partners(s).enumerate() {
            out.set(s, l, strategy >> i & 1 == 1);
        }
        out
    }

    /// Flags on exactly the pairs that share a block.
    pub fn from_structure(structure: &CoalitionStructure) -> Self {
        let n = structure.providers();
        let mut p = StrategyProfile::empty(n);
        for b in structure.blocks() {
            let m = b.members();
            for (i, &a) in m.iter().enumerate() {
                for &c in &m[i + 1..] {
                    p.set(a, c, true);
                }
            }
        }
        p
    }
}

/// How flag graphs that are not unions of cliques map to structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureRule {
    /// Connected components that are cliques form blocks; members of any
    /// other component stand alone.
    #[default]
    CliqueOnly,
    /// Every connected component forms a block.
    TransitiveClosure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InducedStructure {
    pub structure: CoalitionStructure,
    /// False when some connected component is not a clique.
    pub consistent: bool,
}

pub fn structure_from_profile(profile: &StrategyProfile, rule: StructureRule) -> InducedStructure {
    let n = profile.n;
    let mut comp = vec![usize::MAX; n];
    let mut blocks = Vec::new();
    let mut consistent = true;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = blocks.len();
        let mut stack = vec![start];
        comp[start] = id;
        let mut members = Coalition::EMPTY;
        while let Some(u) = stack.pop() {
            members = members.with(u);
            for v in 0..n {
                if comp[v] == usize::MAX && profile.flag(u, v) {
                    comp[v] = id;
                    stack.push(v);
                }
            }
        }
        let m = members.members();
        let clique = m
            .iter()
            .enumerate()
            .all(|(i, &a)| m[i + 1..].iter().all(|&b| profile.flag(a, b)));
        consistent &= clique;
        if clique || rule == StructureRule::TransitiveClosure {
            blocks.push(members);
        } else {
            blocks.extend(m.into_iter().map(Coalition::singleton));
        }
    }
    InducedStructure {
        structure: CoalitionStructure::new(n, blocks).expect("components partition the providers"),
        consistent,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    /// Per-iteration update probability λ.
    pub update_probability: f64,
    /// Probability ℵ of a non-improving move.
    pub irrationality: f64,
    pub state_cap: u64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            update_probability: 0.5,
            irrationality: 0.01,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        let l = self.update_probability;
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::Parameter(format!("update probability must be in [0, 1], got {l}")));
        }
        let a = self.irrationality;
        if !(0.0..1.0).contains(&a) {
            return Err(Error::Parameter(format!("irrationality must be in [0, 1), got {a}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub provider: usize,
    pub strategy: u32,
    pub from_cost: f64,
    pub to_cost: f64,
}

/// Provider costs for every profile of a cost game.
pub struct FormationGame {
    n: usize,
    rule: StructureRule,
    /// Per state: induced structure index into `structures`, consistency.
    induced: Vec<(usize, bool)>,
    structures: Vec<CoalitionStructure>,
    /// Per structure: δ per provider.
    costs: Vec<Vec<f64>>,
}

impl FormationGame {
    pub fn new<G: CharacteristicFunction + ?Sized>(
        game: &G,
        providers: &[Provider],
        rule: StructureRule,
        state_cap: u64,
    ) -> Result<Self> {
        let n = providers.len();
        if n == 0 {
            return Err(Error::Parameter("no providers".into()));
        }
        if game.providers() != n {
            return Err(Error::Parameter(format!(
                "game over {} providers, {n} given",
                game.providers()
            )));
        }
        let pairs = pair_count(n);
        if pairs >= 63 || (1u64 << pairs) > state_cap {
            return Err(Error::StateSpaceCap {
                size: if pairs >= 63 { u64::MAX } else { 1 << pairs },
                cap: state_cap,
            });
        }
        let structures = all_structures(n);
        let costs = structures
            .iter()
            .map(|s| Ok(provider_total_cost(s, game, providers)?.into_iter().map(|c| c.total).collect()))
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let induced = (0..1u64 << pairs)
            .map(|bits| {
                let ind = structure_from_profile(&StrategyProfile::new(n, bits), rule);
                let idx = structures
                    .iter()
                    .position(|s| *s == ind.structure)
                    .expect("every structure enumerated");
                (idx, ind.consistent)
            })
            .collect();
        Ok(FormationGame {
            n,
            rule,
            induced,
            structures,
            costs,
        })
    }

    pub fn providers(&self) -> usize {
        self.n
    }

    pub fn rule(&self) -> StructureRule {
        self.rule
    }

    pub fn state_count(&self) -> usize {
        self.induced.len()
    }

    /// Structures in id order (id = index + 1).
    pub fn structures(&self) -> &[CoalitionStructure] {
        &self.structures
    }

    pub fn structure_costs(&self, structure_index: usize) -> &[f64] {
        &self.costs[structure_index]
    }

    /// Index into [`FormationGame::structures`] and consistency flag.
    pub fn induced(&self, profile: &StrategyProfile) -> (usize, bool) {
        self.induced[profile.bits as usize]
    }

    pub fn cost(&self, profile: &StrategyProfile, s: usize) -> f64 {
        self.costs[self.induced(profile).0][s]
    }

    pub fn costs(&self, profile: &StrategyProfile) -> &[f64] {
        &self.costs[self.induced(profile).0]
    }

    /// Strategies of one provider: fewer flags first, then those flagging
    /// lower-indexed partners.
    fn strategy_order(&self) -> Vec<u32> {
        let k = self.n - 1;
        let mut all: Vec<u32> = (0..1u32 << k).collect();
        let lex = |s: u32| (0..k).map(|i| 1 - (s >> i & 1)).collect::<Vec<_>>();
        all.sort_by_key(|&s| (s.count_ones(), lex(s)));
        all
    }

    /// Cheapest strategy for `s` with the others frozen.
    pub fn best_response(&self, s: usize, profile: &StrategyProfile) -> u32 {
        let mut best: Option<(u32, f64)> = None;
        for st in self.strategy_order() {
            let c = self.cost(&profile.with_strategy(s, st), s);
            if best.is_none_or(|(_, b)| strictly_less(c, b)) {
                best = Some((st, c));
            }
        }
        best.expect("at least one strategy").0
    }

    /// True iff no provider's best response strictly lowers its cost; the
    /// improving best responses are returned.
    pub fn is_equilibrium(&self, profile: &StrategyProfile) -> (bool, Vec<Deviation>) {
        let mut dev = Vec::new();
        for s in 0..self.n {
            let now = self.cost(profile, s);
            let br = self.best_response(s, profile);
            let then = self.cost(&profile.with_strategy(s, br), s);
            if strictly_less(then, now) {
                dev.push(Deviation {
                    provider: s,
                    strategy: br,
                    from_cost: now,
                    to_cost: then,
                });
            }
        }
        (dev.is_empty(), dev)
    }

    /// Whether the clique profile of structure `index` is an equilibrium.
    pub fn structure_is_equilibrium(&self, index: usize) -> bool {
        self.is_equilibrium(&StrategyProfile::from_structure(&self.structures[index])).0
    }
}

/// Dense row-major transition matrix over profile states.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    size: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::Parameter("transition matrix must be square".into()));
        }
        let m = TransitionMatrix {
            size,
            data: rows.into_iter().flatten().collect(),
        };
        if m.data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Parameter("transition probabilities must be finite and >= 0".into()));
        }
        if m.max_row_error() > 1e-10 {
            return Err(Error::Parameter("transition matrix rows must sum to 1".into()));
        }
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.size + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.data[from * self.size..(from + 1) * self.size]
    }

    /// Largest |row sum − 1|.
    pub fn max_row_error(&self) -> f64 {
        (0..self.size)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// x·T.
    pub fn left_multiply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, t) in out.iter_mut().zip(self.row(i)) {
                *o += xi * t;
            }
        }
        out
    }

    /// ‖xT − x‖∞.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.left_multiply(x)
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn restricted(&self, states: &[usize]) -> TransitionMatrix {
        let size = states.len();
        let mut data = Vec::with_capacity(size * size);
        for &i in states {
            for &j in states {
                data.push(self.get(i, j));
            }
        }
        TransitionMatrix { size, data }
    }
}

/// Strategy-adaptation chain over every profile.
///
/// Off-diagonal entries are λ^|Z|(1−λ)^(n−|Z|)·∏_{s∈Z} Ξ_s, where Z is the set
/// of providers whose flag vector differs and Ξ_s is 1−ℵ when s's cost
/// strictly drops, else ℵ. The remaining mass stays on the diagonal.
pub fn transition_matrix(game: &FormationGame, config: &DynamicsConfig) -> Result<TransitionMatrix> {
    config.validate()?;
    let size = game.state_count() as u64;
    if size > config.state_cap {
        return Err(Error::StateSpaceCap {
            size,
            cap: config.state_cap,
        });
    }
    let n = game.n;
    let lam = config.update_probability;
    let aleph = config.irrationality;
    let size = size as usize;
    let rows: Vec<Vec<f64>> = (0..size)
        .into_par_iter()
        .map(|from| {
            let tau = StrategyProfile::new(n, from as u64);
            let here = game.costs(&tau);
            let strategies: Vec<u32> = (0..n).map(|s| tau.strategy(s)).collect();
            let mut row = vec![0.0; size];
            let mut off = 0.0;
            for (to, slot) in row.iter_mut().enumerate() {
                if to == from {
                    continue;
                }
                let next = StrategyProfile::new(n, to as u64);
                let there = game.costs(&next);
                let mut z = 0usize;
                let mut xi = 1.0;
                for s in 0..n {
                    if next.strategy(s) != strategies[s] {
                        z += 1;
                        xi *= if strictly_less(there[s], here[s]) { 1.0 - aleph } else { aleph };
                    }
                }
                let p = lam.powi(z as i32) * (1.0 - lam).powi((n - z) as i32) * xi;
                *slot = p;
                off += p;
            }
            let residual = 1.0 - off;
            if residual < -1e-12 {
                log::warn!("transition row {from} exceeds 1 before the self-transition; normalizing");
                row[from] = (1.0 - lam).powi(n as i32);
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= total);
            } else {
                row[from] = residual.max(0.0);
            }
            row
        })
        .collect();
    Ok(TransitionMatrix {
        size,
        data: rows.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentClass {
    pub states: Vec<usize>,
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationary {
    /// The unique stationary distribution, when the chain is irreducible.
    pub distribution: Option<Vec<f64>>,
    pub reducible: bool,
    /// One entry per closed communicating class.
    pub classes: Vec<RecurrentClass>,
    pub residual: f64,
}

/// Solves πT = π, Σπ = 1 by Gaussian elimination.
fn direct_solve(t: &TransitionMatrix) -> Option<Vec<f64>> {
    let n = t.size;
    // Rows of (Tᵀ − I) with the last equation replaced by Σπ = 1.
    let mut a = vec![vec![0.0; n + 1]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().take(n).enumerate() {
            *v = t.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for v in a[n - 1].iter_mut() {
        *v = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        let p = a[col].clone();
        for (i, r) in a.iter_mut().enumerate() {
            if i == col {
                continue;
            }
            let f = r[col] / p[col];
            if f != 0.0 {
                for k in col..=n {
                    r[k] -= f * p[k];
                }
            }
        }
    }
    let x: Vec<f64> = (0..n).map(|i| (a[i][n] / a[i][i]).max(0.0)).collect();
    let s: f64 = x.iter().sum();
    (s > 0.0 && s.is_finite()).then(|| x.into_iter().map(|v| v / s).collect())
}

/// Power iteration on ½(I + T), optionally warm-started.
fn irreducible_stationary(t: &TransitionMatrix) -> Result<(Vec<f64>, f64)> {
    let n = t.size;
    let mut pi = if n <= 2048 {
        direct_solve(t).unwrap_or_else(|| vec![1.0 / n as f64; n])
    } else {
        vec![1.0 / n as f64; n]
    };
    let mut residual = t.residual(&pi);
    let mut iterations = 0;
    while residual > STATIONARY_TOL {
        if iterations == MAX_POWER_ITERATIONS {
            return Err(Error::NotConverged(MAX_POWER_ITERATIONS));
        }
        let next = t.left_multiply(&pi);
        let mut lazy: Vec<f64> = pi.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
        let s: f64 = lazy.iter().sum();
        lazy.iter_mut().for_each(|v| *v /= s);
        pi = lazy;
        residual = t.residual(&pi);
        iterations += 1;
    }
    Ok((pi, residual))
}

pub fn stationary_distribution(t: &TransitionMatrix) -> Result<Stationary> {
    let n = t.size;
    if n == 0 {
        return Err(Error::Parameter("empty transition matrix".into()));
    }
    if t.max_row_error() > 1e-10 {
        return Err(Error::Parameter("transition matrix is not row-stochastic".into()));
    }
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && t.get(i, j) > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    if sccs.len() == 1 {
        let (pi, residual) = irreducible_stationary(t)?;
        return Ok(Stationary {
            classes: vec![RecurrentClass {
                states: (0..n).collect(),
                distribution: pi.clone(),
            }],
            distribution: Some(pi),
            reducible: false,
            residual,
        });
    }
    let mut comp = vec![0; n];
    for (c, members) in sccs.iter().enumerate() {
        for m in members {
            comp[m.index()] = c;
        }
    }
    let mut classes = Vec::new();
    let mut residual: f64 = 0.0;
    for (c, members) in sccs.iter().enumerate() {
        let mut states: Vec<usize> = members.iter().map(|m| m.index()).collect();
        states.sort_unstable();
        let closed = states
            .iter()
            .all(|&i| (0..n).all(|j| t.get(i, j) == 0.0 || comp[j] == c));
        if !closed {
            continue;
        }
        let sub = t.restricted(&states);
        let (pi, r) = irreducible_stationary(&sub)?;
        residual = residual.max(r);
        classes.push(RecurrentClass {
            states,
            distribution: pi,
        });
    }
    classes.sort_by(|a, b| a.states.cmp(&b.states));
    Ok(Stationary {
        distribution: None,
        reducible: true,
        classes,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    /// Draw each next profile from the transition matrix row.
    #[default]
    Chain,
    /// Providers update independently: with probability λ each takes its
    /// best response (if it strictly improves) with probability 1−ℵ, or a
    /// uniformly random other strategy with probability ℵ.
    BestResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub dynamics: DynamicsConfig,
    pub iterations: usize,
    pub seed: u64,
    pub mode: SimulationMode,
    pub initial: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    /// Visited states, starting with the initial profile.
    pub trajectory: Vec<u64>,
    /// Share of post-initial steps spent in each state (the initial state
    /// alone when no step is taken).
    pub frequencies: Vec<f64>,
}

pub fn simulate_dynamics(game: &FormationGame, config: &SimulationConfig) -> Result<Simulation> {
    config.dynamics.validate()?;
    let size = game.state_count();
    if config.initial as usize >= size {
        return Err(Error::Parameter(format!("initial state {} out of range", config.initial)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trajectory = Vec::with_capacity(config.iterations + 1);
    trajectory.push(config.initial);
    let n = game.n;
    match config.mode {
        SimulationMode::Chain => {
            let t = transition_matrix(game, &config.dynamics)?;
            let mut cur = config.initial as usize;
            for _ in 0..config.iterations {
                let u: f64 = rng.gen();
                let row = t.row(cur);
                let mut acc = 0.0;
                let mut next = size - 1;
                for (j, p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        next = j;
                        break;
                    }
                }
                cur = next;
                trajectory.push(cur as u64);
            }
        }
        SimulationMode::BestResponse => {
            let lam = config.dynamics.update_probability;
            let aleph = config.dynamics.irrationality;
            let options = 1u32 << (n - 1);
            let mut cur = StrategyProfile::new(n, config.initial);
            for _ in 0..config.iterations {
                let mut next = cur;
                for s in 0..n {
                    if rng.gen::<f64>() >= lam {
                        continue;
                    }
                    let mine = cur.strategy(s);
                    let chosen = if rng.gen::<f64>() < 1.0 - aleph {
                        let br = game.best_response(s, &cur);
                        if strictly_less(game.cost(&cur.with_strategy(s, br), s), game.cost(&cur, s)) {
                            br
                        } else {
                            mine
                        }
                    } else if options > 1 {
                        let k = rng.gen_range(0..options - 1);
                        if k >= mine {
                            k + 1
                        } else {
                            k
                        }
                    } else {
                        mine
                    };
                    next = next.with_strategy(s, chosen);
                }
                cur = next;
                trajectory.push(cur.bits);
            }
        }
    }
    let mut counts = vec![0usize; size];
    let visited = if trajectory.len() > 1 { &trajectory[1..] } else { &trajectory[..] };
    for &s in visited {
        counts[s as usize] += 1;
    }
    let total = visited.len() as f64;
    Ok(Simulation {
        frequencies: counts.into_iter().map(|c| c as f64 / total).collect(),
        trajectory,
    })
}

/// Total-variation distance between two distributions.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
