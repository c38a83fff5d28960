#![allow(dead_code)]

use qkd_coop::cost::{PhysicalParams, PriceTable};
use qkd_coop::demand::DemandDistribution;
use qkd_coop::network::{ChainRequest, Topology};
use qkd_coop::planner::{PoolCapacities, Problem};

pub fn topology(nodes: &[&str], links: &[(&str, &str, f64)]) -> Topology {
    Topology::new(
        nodes.iter().map(|s| s.to_string()).collect(),
        &links
            .iter()
            .map(|(a, b, km)| (a.to_string(), b.to_string(), *km))
            .collect::<Vec<_>>(),
    )
    .unwrap()
}

pub fn request(id: &str, src: &str, dst: &str, demand: DemandDistribution) -> ChainRequest {
    ChainRequest {
        id: id.into(),
        source: src.into(),
        destination: dst.into(),
        demand,
        owner: None,
    }
}

pub fn channel_only_prices(r: f64, e: f64, o: f64) -> PriceTable {
    PriceTable::channel_only(r, e, o)
}

/// One 1 km link, key rate 1 per QKD link, rate 1 or 3 with equal odds,
/// only channel prices. Per request the QKD plus KM wavelengths behave like
/// a single item costing 1 to reserve, 1 to use and 4 on demand, with
/// demand 3 or 9.
pub fn micro_problem() -> Problem {
    let t = topology(&["a", "b"], &[("a", "b", 1.0)]);
    let d = DemandDistribution::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
    let pools = PoolCapacities::uniform(&t, 1000, 300).unwrap();
    Problem::new(
        t,
        vec![request("f1", "a", "b", d)],
        pools,
        channel_only_prices(0.75, 0.75, 3.0),
        PhysicalParams::new(160.0, 1.0),
    )
    .unwrap()
}

pub fn random_tiny(seed: u64) -> Problem {
    qkd_coop::generate::tiny_instance(seed)
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

use qkd_coop::economics::TabulatedGame;
use qkd_coop::network::Provider;

/// Three providers with 10/15/20 QKD and 40/55/65 KM wavelengths per link.
pub fn three_providers(qkd_price: f64, km_price: f64) -> Vec<Provider> {
    [("P1", 10, 40), ("P2", 15, 55), ("P3", 20, 65)]
        .into_iter()
        .map(|(id, q, k)| {
            let mut p = Provider::new(id, q, k);
            p.qkd_share_price = qkd_price;
            p.km_share_price = km_price;
            p
        })
        .collect()
}

/// Characteristic costs that, with a 120,000 sharing price per QKD
/// wavelength, reproduce the QKD-pool half of the payoff table.
pub fn table_qkd_game() -> TabulatedGame {
    let (v1, v2, v3, v12, rest) = (3_271_643.12, 2_998_812.40, 2_725_981.68, 2_453_150.96, 2_180_320.24);
    TabulatedGame::from_masks(3, &[0.0, v1, v2, v12, v3, rest, rest, rest]).unwrap()
}

/// Same for the KM pool with a 361,000 sharing price per KM wavelength.
pub fn table_km_game() -> TabulatedGame {
    let (v1, v2, v3) = (35_647_210.0, 35_260_720.0, 35_131_890.0);
    TabulatedGame::from_masks(3, &[0.0, v1, v2, v3, v3, v3, v3, v3]).unwrap()
}

pub const TABLE_QKD: [[f64; 3]; 5] = [
    [3_271_643.12, 2_998_812.40, 2_725_981.68],
    [2_562_990.84, 2_890_160.12, 2_725_981.68],
    [2_562_990.84, 2_998_812.40, 3_217_329.40],
    [3_271_643.12, 3_026_575.48, 3_353_744.76],
    [2_108_660.56, 2_572_245.20, 2_899_414.48],
];

pub const TABLE_KM: [[f64; 3]; 5] = [
    [35_647_210.00, 35_260_720.00, 35_131_890.00],
    [32_199_190.00, 37_227_700.00, 35_131_890.00],
    [32_263_605.00, 35_260_720.00, 40_773_285.00],
    [35_647_210.00, 37_485_360.00, 40_966_530.00],
    [26_300_931.67, 31_522_686.67, 35_068_271.67],
];
