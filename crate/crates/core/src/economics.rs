//! Coalition pools, characteristic costs, Shapley cost shares and provider
//! totals including sharing and cooperation fees.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;

use num::{BigInt, BigRational, One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{PhysicalParams, PriceTable};
use crate::error::{Error, Result};
use crate::network::{ChainRequest, Provider, Topology};
use crate::planner::{solve, PoolCapacities, Problem, SolverOptions, KM_POOL_MAX, QKD_POOL_MAX};

/// Largest block for which Shapley values are computed.
pub const SHAPLEY_LIMIT: usize = 12;

/// Set of providers as a bitmask over provider indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Coalition(pub u32);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn singleton(i: usize) -> Self {
        Coalition(1 << i)
    }

    pub fn grand(n: usize) -> Self {
        Coalition(((1u64 << n) - 1) as u32)
    }

    pub fn from_members(members: &[usize]) -> Self {
        Coalition(members.iter().fold(0, |m, &i| m | (1 << i)))
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn with(self, i: usize) -> Self {
        Coalition(self.0 | 1 << i)
    }

    pub fn without(self, i: usize) -> Self {
        Coalition(self.0 & !(1 << i))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn members(self) -> Vec<usize> {
        (0..32).filter(|&i| self.contains(i)).collect()
    }

    /// Every subset, the empty set included.
    pub fn subsets(self) -> impl Iterator<Item = Coalition> {
        let full = self.0;
        let mut next = Some(0u32);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full { None } else { Some((cur.wrapping_sub(full)) & full) };
            Some(Coalition(cur))
        })
    }
}

impl fmt::Display for Coalition {
    /// One-based member list, e.g. `{1,2}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m: Vec<String> = self.members().iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "{{{}}}", m.join(","))
    }
}

/// Partition of the providers into coalitions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoalitionStructure {
    n: usize,
    /// Canonical order: larger blocks first, then by member list.
    blocks: Vec<Coalition>,
}

fn block_key(c: &Coalition) -> (std::cmp::Reverse<usize>, Vec<usize>) {
    (std::cmp::Reverse(c.len()), c.members())
}

impl CoalitionStructure {
    pub fn new(n: usize, mut blocks: Vec<Coalition>) -> Result<Self> {
        let mut seen = Coalition::EMPTY;
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::Parameter("empty block in coalition structure".into()));
            }
            if b.0 & seen.0 != 0 {
                return Err(Error::Parameter("overlapping blocks in coalition structure".into()));
            }
            seen = Coalition(seen.0 | b.0);
        }
        if seen != Coalition::grand(n) {
            return Err(Error::Parameter(format!("blocks do not cover exactly providers 1..={n}")));
        }
        blocks.sort_by_key(block_key);
        Ok(CoalitionStructure { n, blocks })
    }

    pub fn singletons(n: usize) -> Self {
        CoalitionStructure::new(n, (0..n).map(Coalition::singleton).collect()).expect("valid")
    }

    pub fn grand(n: usize) -> Self {
        CoalitionStructure::new(n, vec![Coalition::grand(n)]).expect("valid")
    }

    pub fn providers(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Coalition] {
        &self.blocks
    }

    pub fn block_of(&self, i: usize) -> Coalition {
        *self.blocks.iter().find(|b| b.contains(i)).expect("structure covers every provider")
    }

    fn sort_key(&self) -> (std::cmp::Reverse<usize>, Vec<(std::cmp::Reverse<usize>, Vec<usize>)>) {
        (std::cmp::Reverse(self.blocks.len()), self.blocks.iter().map(block_key).collect())
    }
}

impl fmt::Display for CoalitionStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b: Vec<String> = self.blocks.iter().map(|c| c.to_string()).collect();
        write!(f, "{{{}}}", b.join(","))
    }
}

/// Every partition of `n` providers, in structure-id order: more blocks
/// first, then by the canonical block list. Ids are 1-based positions.
pub fn all_structures(n: usize) -> Vec<CoalitionStructure> {
    fn go(i: usize, n: usize, blocks: &mut Vec<Coalition>, out: &mut Vec<CoalitionStructure>) {
        if i == n {
            out.push(CoalitionStructure::new(n, blocks.clone()).expect("valid partition"));
            return;
        }
        for b in 0..blocks.len() {
            blocks[b] = blocks[b].with(i);
            go(i + 1, n, blocks, out);
            blocks[b] = blocks[b].without(i);
        }
        blocks.push(Coalition::singleton(i));
        go(i + 1, n, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    go(0, n, &mut Vec::new(), &mut out);
    out.sort_by_key(|s| s.sort_key());
    out
}

/// 1-based id of `structure` in [`all_structures`] order.
pub fn structure_id(structure: &CoalitionStructure) -> usize {
    all_structures(structure.n)
        .iter()
        .position(|s| s == structure)
        .expect("every structure is enumerated")
        + 1
}

pub fn coalition_from_ids(ids: &[&str], providers: &[Provider]) -> Result<Coalition> {
    let mut c = Coalition::EMPTY;
    for id in ids {
        let i = providers
            .iter()
            .position(|p| p.id == *id)
            .ok_or_else(|| Error::UnknownProvider(id.to_string()))?;
        c = c.with(i);
    }
    Ok(c)
}

/// Per-link pools of a coalition: the members' contributions summed,
/// clamped at the pool maxima.
pub fn pool_capacities(
    coalition: Coalition,
    providers: &[Provider],
    topology: &Topology,
    qkd_cap: u32,
    km_cap: u32,
) -> Result<PoolCapacities> {
    if let Some(i) = coalition.members().into_iter().find(|&i| i >= providers.len()) {
        return Err(Error::UnknownProvider(format!("#{}", i + 1)));
    }
    let links = topology.links().len();
    let mut qkd = vec![0u64; links];
    let mut km = vec![0u64; links];
    for i in coalition.members() {
        let p = &providers[i];
        let mut per_link = vec![(p.qkd_wavelengths, p.km_wavelengths); links];
        for o in &p.link_overrides {
            let (a, b) = (topology.node_id(&o.a), topology.node_id(&o.b));
            let l = a
                .zip(b)
                .and_then(|(a, b)| topology.link_between(a, b))
                .ok_or_else(|| {
                    Error::Parameter(format!("provider `{}` overrides unknown link ({},{})", p.id, o.a, o.b))
                })?;
            per_link[l] = (o.qkd, o.km);
        }
        for (l, (q, k)) in per_link.into_iter().enumerate() {
            qkd[l] += q as u64;
            km[l] += k as u64;
        }
    }
    PoolCapacities::new(
        qkd.into_iter().map(|v| v.min(qkd_cap as u64) as u32).collect(),
        km.into_iter().map(|v| v.min(km_cap as u64) as u32).collect(),
        qkd_cap,
        km_cap,
    )
}

/// Insert-once map from coalition to characteristic cost.
#[derive(Debug, Default)]
pub struct CharacteristicCache {
    values: Mutex<BTreeMap<Coalition, f64>>,
}

impl CharacteristicCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, c: Coalition) -> Option<f64> {
        if c.is_empty() {
            return Some(0.0);
        }
        self.values.lock().expect("cache lock").get(&c).copied()
    }

    /// Keeps the first value stored for `c` and returns it.
    pub fn insert(&self, c: Coalition, v: f64) -> f64 {
        *self.values.lock().expect("cache lock").entry(c).or_insert(v)
    }

    pub fn get_or_try_insert(&self, c: Coalition, compute: impl FnOnce() -> Result<f64>) -> Result<f64> {
        if let Some(v) = self.get(c) {
            return Ok(v);
        }
        let v = compute()?;
        Ok(self.insert(c, v))
    }

    pub fn snapshot(&self) -> BTreeMap<Coalition, f64> {
        self.values.lock().expect("cache lock").clone()
    }
}

/// A cooperative cost game over `providers()` players.
pub trait CharacteristicFunction: Sync {
    fn providers(&self) -> usize;
    fn value(&self, c: Coalition) -> Result<f64>;
}

/// Game given by an explicit table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedGame {
    n: usize,
    values: BTreeMap<Coalition, f64>,
}

impl TabulatedGame {
    pub fn new(n: usize, values: BTreeMap<Coalition, f64>) -> Result<Self> {
        if n > 31 {
            return Err(Error::CombinatorialLimit { size: n, limit: 31 });
        }
        for (c, v) in &values {
            if c.0 & !Coalition::grand(n).0 != 0 {
                return Err(Error::UnknownProvider(format!("{c}")));
            }
            if !v.is_finite() {
                return Err(Error::Parameter(format!("v({c}) is not finite")));
            }
        }
        Ok(TabulatedGame { n, values })
    }

    /// `values[mask]` is v of the coalition with that bitmask; index 0 is ignored.
    pub fn from_masks(n: usize, values: &[f64]) -> Result<Self> {
        TabulatedGame::new(
            n,
            values
                .iter()
                .enumerate()
                .skip(1)
                .map(|(m, &v)| (Coalition(m as u32), v))
                .collect(),
        )
    }
}

impl CharacteristicFunction for TabulatedGame {
    fn providers(&self) -> usize {
        self.n
    }

    fn value(&self, c: Coalition) -> Result<f64> {
        if c.is_empty() {
            return Ok(0.0);
        }
        self.values
            .get(&c)
            .copied()
            .ok_or_else(|| Error::Parameter(format!("no characteristic value for coalition {c}")))
    }
}

/// v(C) = optimal expected cost of serving C's requests from C's pools.
pub struct PlannerGame {
    topology: Topology,
    requests: Vec<ChainRequest>,
    owners: Vec<usize>,
    providers: Vec<Provider>,
    prices: PriceTable,
    params: PhysicalParams,
    options: SolverOptions,
    qkd_cap: u32,
    km_cap: u32,
    cache: CharacteristicCache,
}

impl PlannerGame {
    pub fn new(
        topology: Topology,
        requests: Vec<ChainRequest>,
        providers: Vec<Provider>,
        prices: PriceTable,
        params: PhysicalParams,
        options: SolverOptions,
    ) -> Result<Self> {
        if providers.len() > SHAPLEY_LIMIT {
            return Err(Error::CombinatorialLimit {
                size: providers.len(),
                limit: SHAPLEY_LIMIT,
            });
        }
        let mut owners = Vec::with_capacity(requests.len());
        for r in &requests {
            let owner = r.owner.as_deref().ok_or_else(|| Error::Request {
                id: r.id.clone(),
                message: "coalition runs need a `provider` on every request".into(),
            })?;
            owners.push(
                providers
                    .iter()
                    .position(|p| p.id == owner)
                    .ok_or_else(|| Error::UnknownProvider(owner.to_string()))?,
            );
        }
        for p in &providers {
            p.validate()?;
        }
        Ok(PlannerGame {
            topology,
            requests,
            owners,
            providers,
            prices,
            params,
            options,
            qkd_cap: QKD_POOL_MAX,
            km_cap: KM_POOL_MAX,
            cache: CharacteristicCache::new(),
        })
    }

    pub fn with_pool_maxima(mut self, qkd_cap: u32, km_cap: u32) -> Self {
        self.qkd_cap = qkd_cap;
        self.km_cap = km_cap;
        self
    }

    pub fn provider_list(&self) -> &[Provider] {
        &self.providers
    }

    pub fn cache(&self) -> &CharacteristicCache {
        &self.cache
    }

    /// The planning problem of coalition `c`.
    pub fn problem(&self, c: Coalition) -> Result<Problem> {
        let pools = pool_capacities(c, &self.providers, &self.topology, self.qkd_cap, self.km_cap)?;
        let requests = self
            .requests
            .iter()
            .zip(&self.owners)
            .filter(|(_, &o)| c.contains(o))
            .map(|(r, _)| r.clone())
            .collect();
        Problem::new(self.topology.clone(), requests, pools, self.prices, self.params.clone())
    }

    /// Solves every nonempty coalition, in parallel.
    pub fn precompute(&self) -> Result<()> {
        let n = self.providers.len();
        let all: Vec<Coalition> = (1..1u32 << n).map(Coalition).collect();
        all.par_iter()
            .map(|&c| self.value(c).map(|_| ()))
            .collect::<Result<Vec<()>>>()?;
        Ok(())
    }
}

impl CharacteristicFunction for PlannerGame {
    fn providers(&self) -> usize {
        self.providers.len()
    }

    fn value(&self, c: Coalition) -> Result<f64> {
        self.cache.get_or_try_insert(c, || {
            let problem = self.problem(c)?;
            Ok(solve(&problem, &self.options)?.evaluation.total)
        })
    }
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn rational(v: f64) -> Result<BigRational> {
    BigRational::from_float(v).ok_or_else(|| Error::Parameter(format!("characteristic value {v} is not finite")))
}

/// Shapley values within `block`, in exact rational arithmetic (each f64
/// characteristic value is taken at its exact binary value).
pub fn shapley_shares_exact<G: CharacteristicFunction + ?Sized>(
    game: &G,
    block: Coalition,
) -> Result<BTreeMap<usize, BigRational>> {
    let n = block.len();
    if n > SHAPLEY_LIMIT {
        return Err(Error::CombinatorialLimit {
            size: n,
            limit: SHAPLEY_LIMIT,
        });
    }
    let mut v: BTreeMap<Coalition, BigRational> = BTreeMap::new();
    for s in block.subsets() {
        v.insert(s, rational(game.value(s)?)?);
    }
    let denom = factorial(n);
    let weight: Vec<BigRational> = (0..n)
        .map(|d| BigRational::new(factorial(d) * factorial(n - d - 1), denom.clone()))
        .collect();
    let mut out = BTreeMap::new();
    for s in block.members() {
        let rest = block.without(s);
        let mut phi = BigRational::zero();
        for d in rest.subsets() {
            phi += &weight[d.len()] * (&v[&d.with(s)] - &v[&d]);
        }
        out.insert(s, phi);
    }
    Ok(out)
}

/// Shapley values within `block` as floats.
pub fn shapley_shares<G: CharacteristicFunction + ?Sized>(game: &G, block: Coalition) -> Result<BTreeMap<usize, f64>> {
    Ok(shapley_shares_exact(game, block)?
        .into_iter()
        .map(|(s, r)| (s, r.to_f64().expect("finite rational")))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostShare {
    pub provider: usize,
    pub block: Coalition,
    pub shapley: f64,
    pub sharing_qkd: f64,
    pub sharing_km: f64,
    pub cooperation: f64,
    pub total: f64,
}

/// Each provider's cost under `structure`: its Shapley share of its block
/// plus, when the block is shared, the sharing and cooperation fees.
pub fn provider_total_cost<G: CharacteristicFunction + ?Sized>(
    structure: &CoalitionStructure,
    game: &G,
    providers: &[Provider],
) -> Result<Vec<CostShare>> {
    if providers.len() != structure.providers() {
        return Err(Error::Parameter(format!(
            "structure over {} providers, {} given",
            structure.providers(),
            providers.len()
        )));
    }
    let mut out: Vec<Option<CostShare>> = vec![None; providers.len()];
    for &block in structure.blocks() {
        if block.len() == 1 {
            let s = block.members()[0];
            let v = game.value(block)?;
            out[s] = Some(CostShare {
                provider: s,
                block,
                shapley: v,
                sharing_qkd: 0.0,
                sharing_km: 0.0,
                cooperation: 0.0,
                total: v,
            });
            continue;
        }
        for (s, phi) in shapley_shares(game, block)? {
            let p = &providers[s];
            let sharing_qkd = p.qkd_wavelengths as f64 * p.qkd_share_price;
            let sharing_km = p.km_wavelengths as f64 * p.km_share_price;
            out[s] = Some(CostShare {
                provider: s,
                block,
                shapley: phi,
                sharing_qkd,
                sharing_km,
                cooperation: p.cooperation_fee,
                total: phi + sharing_qkd + sharing_km + p.cooperation_fee,
            });
        }
    }
    Ok(out.into_iter().map(|c| c.expect("every provider in a block")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game2(a: f64, b: f64, ab: f64) -> TabulatedGame {
        TabulatedGame::from_masks(2, &[0.0, a, b, ab]).unwrap()
    }

    #[test]
    fn two_player_examples() {
        let s = shapley_shares(&game2(10.0, 20.0, 24.0), Coalition::grand(2)).unwrap();
        assert_eq!((s[&0], s[&1]), (7.0, 17.0));
        let s = shapley_shares(&game2(6.0, 6.0, 9.0), Coalition::grand(2)).unwrap();
        assert_eq!((s[&0], s[&1]), (4.5, 4.5));
        let s = shapley_shares(&game2(5.0, 0.0, 5.0), Coalition::grand(2)).unwrap();
        assert_eq!((s[&0], s[&1]), (5.0, 0.0));
    }

    #[test]
    fn structures_of_three_follow_table_order() {
        let all = all_structures(3);
        let shown: Vec<String> = all.iter().map(|s| s.to_string()).collect();
        assert_eq!(shown, ["{{1},{2},{3}}", "{{1,2},{3}}", "{{1,3},{2}}", "{{2,3},{1}}", "{{1,2,3}}"]);
        assert_eq!(all_structures(4).len(), 15);
        assert_eq!(all_structures(5).len(), 52);
        assert_eq!(structure_id(&CoalitionStructure::grand(3)), 5);
    }

    #[test]
    fn structure_validation() {
        assert!(CoalitionStructure::new(3, vec![Coalition(0b011), Coalition(0b110)]).is_err());
        assert!(CoalitionStructure::new(3, vec![Coalition(0b011)]).is_err());
        assert!(CoalitionStructure::new(3, vec![Coalition(0b011), Coalition(0), Coalition(0b100)]).is_err());
    }

    #[test]
    fn subsets_enumerate_power_set() {
        let c = Coalition(0b1011);
        let subs: Vec<u32> = c.subsets().map(|s| s.0).collect();
        assert_eq!(subs.len(), 8);
        assert!(subs.iter().all(|s| s & !c.0 == 0));
        assert_eq!(Coalition::EMPTY.subsets().count(), 1);
    }

    fn providers() -> Vec<Provider> {
        vec![
            Provider::new("P1", 10, 40),
            Provider::new("P2", 15, 55),
            Provider::new("P3", 20, 65),
        ]
    }

    #[test]
    fn additive_pools() {
        let t = Topology::new(
            vec!["a".into(), "b".into()],
            &[("a".into(), "b".into(), 10.0)],
        )
        .unwrap();
        let ps = providers();
        let p = pool_capacities(Coalition::from_members(&[0, 1]), &ps, &t, 1000, 300).unwrap();
        assert_eq!(p.qkd_per_link, vec![25]);
        let p = pool_capacities(Coalition::singleton(2), &ps, &t, 1000, 300).unwrap();
        assert_eq!((p.qkd_per_link[0], p.km_per_link[0]), (20, 65));
        let p = pool_capacities(Coalition::grand(3), &ps, &t, 1000, 300).unwrap();
        assert_eq!(p.km_per_link, vec![160]);
        let p = pool_capacities(Coalition::grand(3), &ps, &t, 30, 100).unwrap();
        assert_eq!((p.qkd_per_link[0], p.km_per_link[0]), (30, 100));
        assert!(matches!(
            pool_capacities(Coalition::singleton(3), &ps, &t, 1000, 300),
            Err(Error::UnknownProvider(_))
        ));
        assert!(matches!(coalition_from_ids(&["P9"], &ps), Err(Error::UnknownProvider(_))));
    }

    #[test]
    fn fee_overheads_apply_only_in_shared_blocks() {
        let mut ps = vec![Provider::new("A", 10, 40), Provider::new("B", 1, 1)];
        ps[0].qkd_share_price = 5.0;
        ps[0].km_share_price = 2.0;
        ps[0].cooperation_fee = 100.0;
        let g = game2(10.0, 20.0, 24.0);
        let shared = provider_total_cost(&CoalitionStructure::grand(2), &g, &ps).unwrap();
        assert_eq!(shared[0].total, 7.0 + 230.0);
        assert_eq!(shared[1].total, 17.0);
        let alone = provider_total_cost(&CoalitionStructure::singletons(2), &g, &ps).unwrap();
        assert_eq!((alone[0].total, alone[1].total), (10.0, 20.0));
    }

    #[test]
    fn cache_is_insert_once() {
        let c = CharacteristicCache::new();
        assert_eq!(c.get(Coalition::EMPTY), Some(0.0));
        assert_eq!(c.insert(Coalition(1), 3.0), 3.0);
        assert_eq!(c.insert(Coalition(1), 4.0), 3.0);
        assert_eq!(c.get_or_try_insert(Coalition(1), || Ok(9.0)).unwrap(), 3.0);
    }

    #[test]
    fn shapley_guard() {
        let g = TabulatedGame::new(13, BTreeMap::new()).unwrap();
        assert!(matches!(
            shapley_shares(&g, Coalition::grand(13)),
            Err(Error::CombinatorialLimit { size: 13, limit: 12 })
        ));
    }
}
