use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use qkd_coop_cli::{load, run_bounds, run_coalition, run_plan, run_sweep, OutDir};
use tempfile::TempDir;

fn instance(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../instances").join(name).join("config.json")
}

fn bin(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qkd-coop")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const TWO_NODES: &str = r#"{"nodes": ["a", "b", "c"], "links": [{"a": "a", "b": "b", "km": 50.0}]}"#;

fn config_with(dir: &Path, requests: &str) -> PathBuf {
    write(dir, "topology.json", TWO_NODES);
    write(dir, "requests.json", requests);
    write(
        dir,
        "config.json",
        r#"{"topology": "topology.json", "requests": "requests.json",
            "physical": {"key_rate_per_link": 1.0}, "pools": {"qkd": 10, "km": 3},
            "sweep": {"axis": "key_rate_scale", "values": [1.0]}}"#,
    )
}

#[test]
fn triangle_plan_has_one_route_row() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let (code, stdout, _) = bin(&["plan", "--config", instance("triangle").to_str().unwrap(), "--out", out]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with("total "));
    let routes = fs::read_to_string(tmp.path().join("routes.csv")).unwrap();
    let lines: Vec<&str> = routes.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("f1,A,C,A-"), "{}", lines[1]);
    let plan: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan["feasible"], true);
}

#[test]
fn usnet_route_lists_hop_phases() {
    let tmp = TempDir::new().unwrap();
    let loaded = load(&instance("usnet")).unwrap();
    let report = run_plan(&loaded, &OutDir::new(tmp.path()).unwrap(), false, false).unwrap();
    let f1 = &report.requests[0];
    assert_eq!(f1.route, ["1", "6", "9", "12", "16", "22", "23"]);
    assert_eq!(f1.hops.len(), 6);
    assert!(f1.hops.iter().all(|h| ["reserved", "on-demand", "reserved+on-demand"].contains(&h.phase.as_str())));
    let hops = fs::read_to_string(tmp.path().join("hops.csv")).unwrap();
    assert_eq!(hops.lines().filter(|l| l.starts_with("f1,")).count(), 6);
}

#[test]
fn zero_requests_give_header_only_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_with(tmp.path(), r#"{"requests": []}"#);
    let out = tmp.path().join("out");
    let (code, _, err) = bin(&["plan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(
        fs::read_to_string(out.join("routes.csv")).unwrap(),
        "request,src,dst,route,hops,length_km\n"
    );
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();

    let bad = write(tmp.path(), "bad.json", "{ not json");
    assert_eq!(bin(&["plan", "--config", bad.to_str().unwrap(), "--out", out]).0, 2);
    assert_eq!(bin(&["plan", "--config", "/nonexistent/config.json", "--out", out]).0, 2);

    let unknown = write(tmp.path(), "unknown.json", r#"{"topology": "topology.json", "bogus": 1}"#);
    write(tmp.path(), "topology.json", TWO_NODES);
    let (code, _, err) = bin(&["plan", "--config", unknown.to_str().unwrap(), "--out", out]);
    assert_eq!(code, 2);
    assert!(err.contains("bogus"), "{err}");

    let unreachable = config_with(
        tmp.path(),
        r#"{"requests": [{"id": "f", "src": "a", "dst": "c", "demand": {"kind": "table", "support": [1.0], "probs": [1.0]}}]}"#,
    );
    assert_eq!(bin(&["plan", "--config", unreachable.to_str().unwrap(), "--out", out]).0, 3);

    let bad_demand = config_with(
        tmp.path(),
        r#"{"requests": [{"id": "f", "src": "a", "dst": "b", "demand": {"kind": "table", "support": [1.0], "probs": [0.5]}}]}"#,
    );
    let (code, _, err) = bin(&["plan", "--config", bad_demand.to_str().unwrap(), "--out", out]);
    assert_eq!(code, 2);
    assert!(err.contains("requests.json"), "{err}");
}

#[test]
fn identical_runs_write_identical_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = instance("coop3");
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        for cmd in ["plan", "bounds", "coalition"] {
            let (code, _, err) = bin(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--baseline"]);
            assert_eq!(code, 0, "{cmd}: {err}");
        }
    }
    let mut names: Vec<_> = fs::read_dir(tmp.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 10);
    for n in names {
        let a = fs::read(tmp.path().join("a").join(&n)).unwrap();
        let b = fs::read(tmp.path().join("b").join(&n)).unwrap();
        assert_eq!(a, b, "{n:?} differs");
    }
}

#[test]
fn reserved_qkd_sweep_is_unimodal() {
    let tmp = TempDir::new().unwrap();
    let rows = run_sweep(&load(&instance("triangle")).unwrap(), &OutDir::new(tmp.path()).unwrap(), false).unwrap();
    let totals: Vec<f64> = rows.iter().map(|r| r.total).collect();
    let min = totals.iter().cloned().fold(f64::INFINITY, f64::min);
    let argmin = totals.iter().position(|&t| t == min).unwrap();
    assert!(totals[..=argmin].windows(2).all(|w| w[1] <= w[0] + 1e-9), "{totals:?}");
    assert!(totals[argmin..].windows(2).all(|w| w[1] >= w[0] - 1e-9), "{totals:?}");
    // The solver's own plan is at least as good as every uniform reservation.
    let plan = run_plan(&load(&instance("triangle")).unwrap(), &OutDir::new(tmp.path()).unwrap(), false, false).unwrap();
    assert!(plan.total <= min + 1e-9);
}

#[test]
fn fixed_plan_demand_sweep_has_nondecreasing_second_stage() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "config.json",
        &fs::read_to_string(instance("usnet"))
            .unwrap()
            .replace("\"physical\"", "\"sweep\": {\"axis\": \"key_rate_scale\", \"values\": [0.5, 1.0, 1.5, 2.0, 3.0], \"fixed_plan\": true}, \"physical\""),
    );
    for f in ["topology.json", "requests.json"] {
        fs::copy(instance("usnet").parent().unwrap().join(f), tmp.path().join(f)).unwrap();
    }
    let rows = run_sweep(&load(&cfg).unwrap(), &OutDir::new(tmp.path().join("out")).unwrap(), false).unwrap();
    assert!(rows.windows(2).all(|w| w[1].second_stage >= w[0].second_stage), "{rows:?}");
}

#[test]
fn single_point_sweep_equals_plan() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_with(
        tmp.path(),
        r#"{"requests": [{"id": "f", "src": "a", "dst": "b", "demand": {"kind": "table", "support": [1.0, 2.0], "probs": [0.5, 0.5]}}]}"#,
    );
    let loaded = load(&cfg).unwrap();
    let out = OutDir::new(tmp.path().join("out")).unwrap();
    let rows = run_sweep(&loaded, &out, false).unwrap();
    let plan = run_plan(&loaded, &out, false, false).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].total, plan.total);
}

#[test]
fn degenerate_demands_close_both_gaps() {
    let tmp = TempDir::new().unwrap();
    let cfg = config_with(
        tmp.path(),
        r#"{"requests": [{"id": "f", "src": "a", "dst": "b", "demand": {"kind": "table", "support": [3.0], "probs": [1.0]}}]}"#,
    );
    let rows = run_bounds(&load(&cfg).unwrap(), &OutDir::new(tmp.path().join("out")).unwrap(), false, false).unwrap();
    assert_eq!((rows[0].eev_gap_percent, rows[0].ws_gap_percent), (0.0, 0.0));
}

#[test]
fn micro_bounds_row() {
    let tmp = TempDir::new().unwrap();
    let rows = run_bounds(&load(&instance("micro")).unwrap(), &OutDir::new(tmp.path()).unwrap(), false, true).unwrap();
    let r = &rows[0];
    assert_eq!((r.ws, r.sp, r.eev), (12.0, 15.0, 16.5));
    assert_eq!((r.eev_gap_percent, r.ws_gap_percent), (10.0, 20.0));
    let csv = fs::read_to_string(tmp.path().join("bounds.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("1,12,true,15,true,16.5,10,20,"));
}

#[test]
fn single_provider_has_trivial_structure() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "providers.json", r#"{"providers": [{"id": "solo", "qkd_wavelengths": 3, "km_wavelengths": 1}]}"#);
    let cfg = write(
        tmp.path(),
        "config.json",
        r#"{"providers": "providers.json", "coalition": {"games": [{"name": "g", "characteristic": [0.0, 42.0]}]}}"#,
    );
    let report = run_coalition(&load(&cfg).unwrap(), &OutDir::new(tmp.path().join("out")).unwrap(), 0, false).unwrap();
    let g = &report.games[0];
    assert_eq!(g.structures.len(), 1);
    assert_eq!(g.structures[0].probability, 1.0);
    assert_eq!(g.stable, Some(1));
}

#[test]
fn too_many_providers_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let ps: Vec<String> = (1..=6)
        .map(|i| format!(r#"{{"id": "P{i}", "qkd_wavelengths": 1, "km_wavelengths": 1}}"#))
        .collect();
    write(tmp.path(), "providers.json", &format!(r#"{{"providers": [{}]}}"#, ps.join(",")));
    let cfg = write(tmp.path(), "config.json", r#"{"providers": "providers.json"}"#);
    let out = tmp.path().join("out");
    assert_eq!(bin(&["coalition", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 2);
}

#[test]
fn oracle_check_passes_on_coop3() {
    let tmp = TempDir::new().unwrap();
    // The oracle takes at most three requests and six paths.
    let dir = instance("coop3").parent().unwrap().to_path_buf();
    for f in ["topology.json", "providers.json"] {
        fs::copy(dir.join(f), tmp.path().join(f)).unwrap();
    }
    let mut cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    cfg["solver"] = serde_json::json!({"k": 2});
    fs::write(tmp.path().join("config.json"), cfg.to_string()).unwrap();
    let reqs: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("requests.json")).unwrap()).unwrap();
    let mut reqs = reqs.clone();
    reqs["requests"].as_array_mut().unwrap().truncate(2);
    fs::write(tmp.path().join("requests.json"), reqs.to_string()).unwrap();
    let cfg = tmp.path().join("config.json");
    let out = tmp.path().join("out");
    let (code, stdout, err) = bin(&["oracle-check", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}{err}");
}
