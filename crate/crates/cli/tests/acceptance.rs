//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use num::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qkd_coop::cost::PriceTable;
use qkd_coop::dynamics::{
    simulate_dynamics, stationary_distribution, total_variation, transition_matrix, DynamicsConfig, FormationGame,
    SimulationConfig, SimulationMode, StructureRule, DEFAULT_STATE_CAP,
};
use qkd_coop::economics::{
    all_structures, shapley_shares, shapley_shares_exact, CharacteristicFunction, Coalition, PlannerGame,
    TabulatedGame,
};
use qkd_coop::generate::tiny_instance;
use qkd_coop::network::Provider;
use qkd_coop::planner::{
    bounds, brute_force_oracle, greedy_on_demand_baseline, single_link_recourse, solve, Problem, SolverOptions,
};
use qkd_coop_cli::{load, run_bounds, run_coalition, run_plan, OutDir};

const TINY_INSTANCES: u64 = 60;

type Outcome = Result<String, String>;

fn instance(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../instances").join(name).join("config.json")
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn check(ok: bool, message: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message.into())
    }
}

fn scratch() -> tempfile::TempDir {
    tempfile::TempDir::new().expect("temp dir")
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let opts = SolverOptions {
        k: 2,
        ..SolverOptions::exhaustive()
    };
    for seed in 0..TINY_INSTANCES {
        let p = tiny_instance(seed);
        let sol = solve(&p, &opts).map_err(|e| format!("seed {seed}: {e}"))?;
        let oracle = brute_force_oracle(&p, 2).map_err(|e| format!("seed {seed}: {e}"))?;
        check(
            close(sol.evaluation.total, oracle.total, 1e-9),
            format!("seed {seed}: solver {} oracle {}", sol.evaluation.total, oracle.total),
        )?;
    }
    let took = start.elapsed();
    check(took <= Duration::from_secs(300), format!("took {took:?}"))?;
    Ok(format!("{TINY_INSTANCES} random instances match the oracle in {:.2}s", took.as_secs_f64()))
}

/// Cheapest usage by enumerating every feasible usage vector.
fn enumerate_recourse(d: &[u32], y: &[u32], w: u32, c_e: &[f64], c_o: &[f64]) -> f64 {
    fn go(i: usize, left: u32, d: &[u32], y: &[u32], c_e: &[f64], c_o: &[f64]) -> f64 {
        if i == d.len() {
            return 0.0;
        }
        (0..=d[i].min(y[i]).min(left))
            .map(|u| c_e[i] * u as f64 + c_o[i] * (d[i] - u) as f64 + go(i + 1, left - u, d, y, c_e, c_o))
            .fold(f64::INFINITY, f64::min)
    }
    go(0, w, d, y, c_e, c_o)
}

fn recourse_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..200 {
        let m = rng.gen_range(1..=4);
        let d: Vec<u32> = (0..m).map(|_| rng.gen_range(0..=9)).collect();
        let y: Vec<u32> = (0..m).map(|_| rng.gen_range(0..=9)).collect();
        let w = rng.gen_range(0..=20);
        let c_e: Vec<f64> = (0..m).map(|_| rng.gen_range(0..=8) as f64 * 0.5).collect();
        let c_o: Vec<f64> = (0..m).map(|_| rng.gen_range(0..=12) as f64 * 0.5).collect();
        let (used, od, cost) = single_link_recourse(&d, &y, w, &c_e, &c_o);
        let best = enumerate_recourse(&d, &y, w, &c_e, &c_o);
        check(cost == best, format!("case {case}: {cost} vs {best}"))?;
        let feasible = used.iter().zip(&y).all(|(u, y)| u <= y)
            && used.iter().sum::<u32>() <= w
            && used.iter().zip(&od).zip(&d).all(|((u, o), d)| u + o == *d);
        check(feasible, format!("case {case}: infeasible usage {used:?}"))?;
    }
    Ok("200 single-link cases equal exhaustive enumeration".into())
}

fn bound_sandwich() -> Outcome {
    let opts = SolverOptions::default();
    let mut n = 0;
    for seed in 0..TINY_INSTANCES {
        let p = tiny_instance(seed);
        let b = bounds(&p, &opts, false).map_err(|e| e.to_string())?;
        check(
            b.ws <= b.sp * (1.0 + 1e-9) + 1e-9 && b.sp <= b.eev * (1.0 + 1e-9) + 1e-9,
            format!("seed {seed}: WS {} SP {} EEV {}", b.ws, b.sp, b.eev),
        )?;
        n += 1;
    }
    for name in ["micro", "triangle", "usnet", "coop3", "nsfnet"] {
        let tmp = scratch();
        let rows = run_bounds(&load(&instance(name)).map_err(|e| e.to_string())?, &OutDir::new(tmp.path()).unwrap(), false, false)
            .map_err(|e| e.to_string())?;
        for r in rows {
            check(
                r.ws <= r.sp * (1.0 + 1e-9) && r.sp <= r.eev * (1.0 + 1e-9),
                format!("{name} ({} requests): WS {} SP {} EEV {}", r.requests, r.ws, r.sp, r.eev),
            )?;
            n += 1;
        }
    }
    let tmp = scratch();
    let micro = run_bounds(&load(&instance("micro")).unwrap(), &OutDir::new(tmp.path()).unwrap(), false, false)
        .map_err(|e| e.to_string())?;
    let r = &micro[0];
    check(
        (r.ws, r.sp, r.eev) == (12.0, 15.0, 16.5),
        format!("micro gives ({}, {}, {})", r.ws, r.sp, r.eev),
    )?;
    Ok(format!("WS <= SP <= EEV on {n} instances; micro-instance (12, 15, 16.5)"))
}

fn random_game(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v = vec![0.0];
    v.extend((1..1 << n).map(|_| rng.gen_range(0..1_000_000u32) as f64));
    v
}

fn tabulated(n: usize, v: &[f64]) -> TabulatedGame {
    TabulatedGame::from_masks(n, v).unwrap()
}

fn exact_shares(n: usize, v: &[f64]) -> BTreeMap<usize, BigRational> {
    shapley_shares_exact(&tabulated(n, v), Coalition::grand(n)).unwrap()
}

fn shapley_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [3, 4] {
        for g in 0..100 {
            let mut v = random_game(&mut rng, n);
            // Fractional values exercise exact rational weights.
            v.iter_mut().skip(1).for_each(|x| *x += rng.gen_range(0.0..1.0));
            let total: BigRational = exact_shares(n, &v).into_values().sum();
            check(
                total == BigRational::from_float(v[(1 << n) - 1]).unwrap(),
                format!("efficiency fails on {n}-player game {g}"),
            )?;
        }
    }
    for g in 0..100 {
        let n = rng.gen_range(3..=4);
        let v = random_game(&mut rng, n);
        let (a, b) = (0, rng.gen_range(1..n));
        // Make a and b interchangeable by symmetrizing over the swap.
        let swap = |m: usize| {
            let (ha, hb) = (m >> a & 1, m >> b & 1);
            (m & !(1 << a) & !(1 << b)) | ha << b | hb << a
        };
        let sym: Vec<f64> = (0..1 << n).map(|m| v[m].min(v[swap(m)])).collect();
        let s = exact_shares(n, &sym);
        check(s[&a] == s[&b], format!("symmetry fails on game {g}"))?;
    }
    for g in 0..100 {
        let n = rng.gen_range(3..=4);
        let v = random_game(&mut rng, n);
        let d = rng.gen_range(0..n);
        let dummy: Vec<f64> = (0..1usize << n).map(|m| v[m & !(1 << d)]).collect();
        let s = exact_shares(n, &dummy);
        check(s[&d] == BigRational::from_float(0.0).unwrap(), format!("dummy fails on game {g}"))?;
    }
    for g in 0..100 {
        let n = rng.gen_range(3..=4);
        let (x, y) = (random_game(&mut rng, n), random_game(&mut rng, n));
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let (sx, sy, ss) = (exact_shares(n, &x), exact_shares(n, &y), exact_shares(n, &sum));
        check((0..n).all(|i| ss[&i] == &sx[&i] + &sy[&i]), format!("additivity fails on game {g}"))?;
    }
    let s = shapley_shares(&tabulated(2, &[0.0, 10.0, 20.0, 24.0]), Coalition::grand(2)).unwrap();
    check((s[&0], s[&1]) == (7.0, 17.0), format!("(10, 20, 24) gives {s:?}"))?;
    Ok("efficiency exact on 200 games; symmetry, dummy, additivity on 100 each; (10, 20, 24) -> (7, 17)".into())
}

const TABLE_QKD: [[f64; 3]; 5] = [
    [3_271_643.12, 2_998_812.40, 2_725_981.68],
    [2_562_990.84, 2_890_160.12, 2_725_981.68],
    [2_562_990.84, 2_998_812.40, 3_217_329.40],
    [3_271_643.12, 3_026_575.48, 3_353_744.76],
    [2_108_660.56, 2_572_245.20, 2_899_414.48],
];

const TABLE_KM: [[f64; 3]; 5] = [
    [35_647_210.00, 35_260_720.00, 35_131_890.00],
    [32_199_190.00, 37_227_700.00, 35_131_890.00],
    [32_263_605.00, 35_260_720.00, 40_773_285.00],
    [35_647_210.00, 37_485_360.00, 40_966_530.00],
    [26_300_931.67, 31_522_686.67, 35_068_271.67],
];

fn table_replication() -> Outcome {
    let tmp = scratch();
    let report = run_coalition(&load(&instance("table2")).unwrap(), &OutDir::new(tmp.path()).unwrap(), 1, false)
        .map_err(|e| e.to_string())?;
    for (game, table, starred) in [("qkd", &TABLE_QKD, 2), ("km", &TABLE_KM, 5)] {
        let g = report.games.iter().find(|g| g.name == game).ok_or(format!("no {game} game"))?;
        for (row, expected) in g.structures.iter().zip(table.iter()) {
            check(
                row.costs.iter().zip(expected).all(|(a, b)| (a - b).abs() < 0.005),
                format!("{game} C{}: {:?}", row.id, row.costs),
            )?;
        }
        let eq: Vec<usize> = g.structures.iter().filter(|r| r.equilibrium).map(|r| r.id).collect();
        check(eq == vec![starred], format!("{game}: equilibria {eq:?}"))?;
        check(g.stable == Some(starred), format!("{game}: stable {:?}", g.stable))?;
    }
    Ok("QKD pool stable at C2 {{1,2},{3}}, KM pool at C5 {{1,2,3}}; all 30 payoffs within 0.005".into())
}

fn markov_checks() -> Outcome {
    let tmp = scratch();
    let loaded = load(&instance("table2")).unwrap();
    let table = loaded.config.coalition.clone().unwrap();
    let providers = loaded.providers().unwrap();
    let mut worst_row: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    let mut chains = 0;
    for g in &table.games {
        let game = TabulatedGame::from_masks(3, g.characteristic.as_ref().unwrap()).unwrap();
        let fg = FormationGame::new(&game, &g.priced(providers), StructureRule::CliqueOnly, DEFAULT_STATE_CAP).unwrap();
        for lam in [0.1, 0.5, 1.0] {
            for aleph in [0.001, 0.01, 0.1, 0.5] {
                let t = transition_matrix(&fg, &DynamicsConfig { update_probability: lam, irrationality: aleph, ..Default::default() })
                    .map_err(|e| e.to_string())?;
                worst_row = worst_row.max(t.max_row_error());
                let st = stationary_distribution(&t).map_err(|e| e.to_string())?;
                if let Some(pi) = st.distribution {
                    worst_residual = worst_residual.max(t.residual(&pi));
                }
                chains += 1;
            }
        }
    }
    check(worst_row <= 1e-10, format!("row error {worst_row}"))?;
    check(worst_residual <= 1e-10, format!("stationary residual {worst_residual}"))?;

    let two = TabulatedGame::from_masks(2, &[0.0, 12.0, 14.0, 20.0]).unwrap();
    let ps = vec![Provider::new("A", 1, 1), Provider::new("B", 1, 1)];
    let fg = FormationGame::new(&two, &ps, StructureRule::CliqueOnly, DEFAULT_STATE_CAP).unwrap();
    let dynamics = DynamicsConfig {
        update_probability: 0.5,
        irrationality: 0.1,
        ..Default::default()
    };
    let pi = stationary_distribution(&transition_matrix(&fg, &dynamics).unwrap()).unwrap().distribution.unwrap();
    let sim = simulate_dynamics(
        &fg,
        &SimulationConfig {
            dynamics,
            iterations: 100_000,
            seed: 20_240_601,
            mode: SimulationMode::Chain,
            initial: 0,
        },
    )
    .unwrap();
    let tv = total_variation(&sim.frequencies, &pi);
    check(tv < 0.05, format!("total variation {tv}"))?;
    drop(tmp);
    Ok(format!(
        "{chains} chains: row error {worst_row:.1e}, residual {worst_residual:.1e}; simulation TV {tv:.4}"
    ))
}

fn cooperation_trends() -> Outcome {
    let loaded = load(&instance("coop3")).unwrap();
    let providers = loaded.providers().unwrap().to_vec();
    let opts = loaded.options(false);
    let game = PlannerGame::new(
        loaded.topology().unwrap().clone(),
        loaded.requests().unwrap().to_vec(),
        providers.clone(),
        loaded.prices,
        loaded.physical().unwrap(),
        opts.clone(),
    )
    .map_err(|e| e.to_string())?;
    let n = providers.len();
    let grand = game.value(Coalition::grand(n)).map_err(|e| e.to_string())?;
    for s in all_structures(n) {
        let split: f64 = s.blocks().iter().map(|&b| game.value(b).unwrap()).sum();
        check(grand <= split * (1.0 + 1e-9), format!("v(grand) {grand} above {split} for {s}"))?;
    }
    for small in 1..1u32 << n {
        let own = game.value(Coalition(small)).unwrap();
        for big in (1..1u32 << n).filter(|b| b & small == small && *b != small) {
            let mut p = game.problem(Coalition(small)).unwrap();
            p.pools = game.problem(Coalition(big)).unwrap().pools;
            let pooled = solve(&p, &opts).map_err(|e| e.to_string())?.evaluation.total;
            check(
                pooled <= own * (1.0 + 1e-9),
                format!("{} with {}'s pools costs {pooled} > {own}", Coalition(small), Coalition(big)),
            )?;
        }
    }

    let tmp = scratch();
    let report = run_coalition(&loaded, &OutDir::new(tmp.path()).unwrap(), 11, false).map_err(|e| e.to_string())?;
    let cells = &report.games[0].fee_sweep;
    let corner = cells
        .iter()
        .max_by(|a, b| (a.qkd_share_price, a.km_share_price).partial_cmp(&(b.qkd_share_price, b.km_share_price)).unwrap())
        .ok_or("empty fee sweep")?;
    check(corner.stable == Some(1), format!("high-fee corner gives {:?}", corner.stable))?;

    let mut problems: Vec<(String, Problem)> = (0..TINY_INSTANCES).map(|s| (format!("tiny {s}"), tiny_instance(s))).collect();
    for name in ["triangle", "usnet", "coop3", "nsfnet"] {
        problems.push((name.into(), load(&instance(name)).unwrap().problem().map_err(|e| e.to_string())?));
    }
    let (mut strict, mut reductions) = (0, Vec::new());
    for (name, p) in &problems {
        let opts = SolverOptions::default();
        let sp = solve(p, &opts).map_err(|e| e.to_string())?.evaluation.total;
        let base = greedy_on_demand_baseline(p, &opts).map_err(|e| e.to_string())?.1.total;
        check(base >= sp * (1.0 - 1e-12), format!("{name}: baseline {base} below SP {sp}"))?;
        // Positive demand in every scenario, Table-I prices and room in every pool.
        let eligible = p.prices == PriceTable::table_one()
            && !p.requests.is_empty()
            && p.requests.iter().all(|r| r.demand.support()[0] > 0.0)
            && p.pools.qkd_per_link.iter().chain(&p.pools.km_per_link).all(|&c| c > 0);
        if eligible {
            check(base > sp, format!("{name}: baseline {base} not above SP {sp}"))?;
            strict += 1;
            reductions.push(100.0 * (base - sp) / base);
        }
    }
    let mean = reductions.iter().sum::<f64>() / reductions.len().max(1) as f64;
    Ok(format!(
        "coop3 v subadditive and capacity-monotone; high-fee corner all-singleton; baseline >= SP on {} instances, strictly on {strict} (mean reduction {mean:.1}%)",
        problems.len()
    ))
}

fn performance() -> Outcome {
    let start = Instant::now();
    let tmp = scratch();
    let out = OutDir::new(tmp.path()).unwrap();
    let loaded = load(&instance("nsfnet")).map_err(|e| e.to_string())?;
    check(
        loaded.topology().unwrap().node_count() == 14 && loaded.requests().unwrap().len() == 10,
        "nsfnet instance shape",
    )?;
    run_plan(&loaded, &out, false, true).map_err(|e| e.to_string())?;
    run_bounds(&loaded, &out, false, true).map_err(|e| e.to_string())?;
    run_coalition(&loaded, &out, loaded.config.seed, false).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    check(took <= Duration::from_secs(60), format!("took {took:?}"))?;
    Ok(format!("NSFNET plan + bounds + coalition in {:.2}s", took.as_secs_f64()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("recourse optimality", recourse_optimality),
        ("bound sandwich", bound_sandwich),
        ("Shapley axioms", shapley_axioms),
        ("payoff table replication", table_replication),
        ("Markov chain checks", markov_checks),
        ("cooperation trends", cooperation_trends),
        ("desk-scale performance", performance),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
