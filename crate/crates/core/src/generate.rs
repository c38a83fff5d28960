//! Seeded random instances for property tests and acceptance runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::{PhysicalParams, PriceTable};
use crate::demand::DemandDistribution;
use crate::network::{ChainRequest, Topology};
use crate::planner::{PoolCapacities, Problem, KM_POOL_MAX, QKD_POOL_MAX};

/// Random instance small enough for the brute-force oracle with k = 2:
/// 3 to 5 nodes, 1 to 3 requests with rates in 0..=4 (two per QKD link),
/// small pools, Table-I or channel-only prices, and at most 6 candidate
/// paths in total.
pub fn tiny_instance(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.gen_range(3..=5);
        let names: Vec<String> = (1..=n).map(|i| format!("n{i}")).collect();
        let mut links = Vec::new();
        for i in 1..n {
            let j = rng.gen_range(0..i);
            links.push((names[j].clone(), names[i].clone(), rng.gen_range(20..400) as f64));
        }
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(0.3) && !links.iter().any(|(x, y, _)| (x == &names[a] && y == &names[b]) || (x == &names[b] && y == &names[a])) {
                    links.push((names[a].clone(), names[b].clone(), rng.gen_range(20..400) as f64));
                }
            }
        }
        let t = Topology::new(names.clone(), &links).expect("connected tree plus chords");
        let count = rng.gen_range(1..=3);
        let mut requests = Vec::new();
        for f in 0..count {
            let s = rng.gen_range(0..n);
            let mut d = rng.gen_range(0..n);
            while d == s {
                d = rng.gen_range(0..n);
            }
            let support_len = rng.gen_range(1..=3);
            let mut support: Vec<f64> = Vec::new();
            while support.len() < support_len {
                let v = rng.gen_range(0..=4) as f64;
                if !support.contains(&v) {
                    support.push(v);
                }
            }
            support.sort_by(f64::total_cmp);
            let weights: Vec<u32> = (0..support_len).map(|_| rng.gen_range(1..=4)).collect();
            let total: u32 = weights.iter().sum();
            let probs = weights.iter().map(|&w| w as f64 / total as f64).collect();
            requests.push(ChainRequest {
                id: format!("f{f}"),
                source: names[s].clone(),
                destination: names[d].clone(),
                demand: DemandDistribution::new(support, probs).expect("valid support"),
                owner: None,
            });
        }
        let links_n = t.links().len();
        let qkd: Vec<u32> = (0..links_n).map(|_| rng.gen_range(0..=12)).collect();
        let km: Vec<u32> = (0..links_n).map(|_| rng.gen_range(0..=4)).collect();
        let pools = PoolCapacities::new(qkd, km, QKD_POOL_MAX, KM_POOL_MAX).expect("within maxima");
        let prices = if rng.gen_bool(0.5) {
            PriceTable::table_one()
        } else {
            PriceTable::channel_only(
                rng.gen_range(1..=4) as f64 * 0.25,
                rng.gen_range(0..=4) as f64 * 0.25,
                rng.gen_range(2..=8) as f64 * 0.5,
            )
        };
        let mut params = PhysicalParams::new(160.0, 2.0);
        for name in &names {
            if rng.gen_bool(0.3) {
                params.energy_cost_per_node.insert(name.clone(), rng.gen_range(1..50) as f64);
            }
        }
        let problem = Problem::new(t, requests, pools, prices, params).expect("valid instance");
        let paths: usize = problem.candidate_paths(2).expect("reachable endpoints").iter().map(Vec::len).sum();
        if paths <= 6 {
            return problem;
        }
    }
}

