use std::fs;
use std::path::Path;
use std::process::Command;

use curvature_lab::config::read_pairs;
use curvature_lab::{run, write_outputs, ExperimentConfig, EXPERIMENTS};
use proptest::prelude::*;

const BIN: &str = env!("CARGO_BIN_EXE_curvature-lab");

fn config(experiment: &str, pairs: &[(&str, &str)]) -> ExperimentConfig {
    let pairs = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    ExperimentConfig::from_pairs(Some(experiment), pairs).unwrap()
}

/// Small settings per experiment so the whole table runs in seconds.
fn quick(name: &str) -> ExperimentConfig {
    let s = "seed=3";
    let pairs: Vec<&str> = match name {
        "rauch-sphere" => vec![],
        "weak-rauch" => vec![s, "t_max=1.0"],
        "ellipsoid-focal-scan" => vec!["dims=6,8"],
        "epifocal-trend" => vec!["dims=8,16", "limit_tol=0.1"],
        "focal-index-lemma" => vec![s, "trials=10"],
        "wronskian-drift" => vec![s, "length=1.0", "pairs=3"],
        "flow-estimates" => vec![s, "length=1.0"],
        "toponogov-sweep" => vec![s, "hinges=4", "manifold=sphere:dim=2,K=1", "H=1", "l_max=1.5"],
        "triangle-sweep" => vec![s, "triangles=10"],
        "meridian-length" => vec![s, "nodes=16"],
        "maximal-diameter-probe" => vec![s, "w_samples=4"],
        "pinch-constants" => vec![],
        "distance-ratio" => vec![s],
        "rotation-isometry" => vec![s, "n=8", "pairs=200", "samples=50"],
        "lift-curve-demo" => vec![s],
        other => panic!("no quick settings for {other}"),
    };
    let pairs = pairs
        .iter()
        .map(|p| {
            let (k, v) = p.split_once('=').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect();
    ExperimentConfig::from_pairs(Some(name), pairs).unwrap()
}

#[test]
fn every_experiment_runs_and_passes() {
    assert_eq!(EXPERIMENTS.len(), 15);
    for def in EXPERIMENTS {
        let report = run(&quick(def.name)).unwrap_or_else(|e| panic!("{}: {e:#}", def.name));
        assert!(!report.checks.is_empty(), "{} produced no checks", def.name);
        let failed: Vec<_> = report.failed_checks().map(|c| c.check.clone()).collect();
        assert!(report.pass, "{}: failed {failed:?}", def.name);
        assert_eq!(report.artifacts.last().map(String::as_str), Some("report.json"));
    }
}

fn run_bin(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sweep.cfg");
    fs::write(&cfg, "# short sweep\nexperiment = toponogov-sweep\nmanifold = sphere:dim=2,K=1\nH = 1\nhinges = 6\nseed = 11\n").unwrap();
    for args in [
        vec!["toponogov-sweep", "--config", cfg.to_str().unwrap()],
        vec!["wronskian-drift", "--set", "seed=5", "--set", "length=1.0"],
        vec!["lift-curve-demo", "--set", "seed=2"],
    ] {
        let a = tmp.path().join(format!("{}-a", args[0]));
        let b = tmp.path().join(format!("{}-b", args[0]));
        for dir in [&a, &b] {
            let mut full = args.clone();
            full.extend(["--out", dir.to_str().unwrap()]);
            let out = run_bin(&full);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
        let (fa, fb) = (files(&a), files(&b));
        assert!(fa.len() >= 2);
        assert_eq!(fa, fb, "{} outputs differ between runs", args[0]);
        // the report lists exactly the files that were written
        let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
        let listed: Vec<String> = report["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
        let mut names: Vec<String> = fa.iter().map(|(n, _)| n.clone()).collect();
        let mut sorted = listed.clone();
        sorted.sort();
        names.sort();
        assert_eq!(sorted, names);
        assert!(report.get("wall_time").is_none());
    }
}

#[test]
fn a_different_seed_changes_the_output() {
    let a = run(&config("distance-ratio", &[("seed", "1")])).unwrap();
    let b = run(&config("distance-ratio", &[("seed", "2")])).unwrap();
    assert_ne!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(run_bin(&["pinch-constants", "--out", out]).status.code(), Some(0));
    // an impossible tolerance makes a plain check fail
    assert_eq!(run_bin(&["rauch-sphere", "--set", "tol=1e-300", "--out", out]).status.code(), Some(1));
    // a wrong bound on the quadric fails, but only with uncertified distances
    let o = run_bin(&["toponogov-sweep", "--set", "seed=1", "--set", "hinges=6", "--set", "H=1", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("o/report.json")).unwrap()).unwrap();
    let c = &report["checks"][0];
    assert_eq!(c["pass"], false);
    assert!(!c["conditional_flags"].as_array().unwrap().is_empty());
    for bad in [
        vec!["no-such-experiment", "--out", out],
        vec!["rauch-sphere", "--set", "bogus=1", "--out", out],
        vec!["weak-rauch", "--out", out],
        vec!["weak-rauch", "--set", "seed=1", "--set", "manifold=torus:r=1", "--out", out],
    ] {
        assert_eq!(run_bin(&bad).status.code(), Some(2), "{bad:?}");
    }
}

fn read_plot(path: &Path) -> Vec<(String, f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("series,x,y"));
    lines
        .map(|l| {
            let mut it = l.split(',');
            let s = it.next().unwrap().to_string();
            let x = it.next().unwrap().parse().unwrap();
            let y = it.next().unwrap().parse().unwrap();
            (s, x, y)
        })
        .collect()
}

#[test]
fn plot_data_contracts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let scan = run(&config("ellipsoid-focal-scan", &[("dims", "8,16")])).unwrap();
    write_outputs(&scan, dir).unwrap();
    let rows = read_plot(&dir.join("sigma_min_trace.csv"));
    for series in ["N=8", "N=16"] {
        let s: Vec<f64> = rows.iter().filter(|r| r.0 == series).map(|r| r.1).collect();
        assert!(s.len() > 100 && s.windows(2).all(|w| w[1] > w[0]), "{series} not monotone");
    }
    let table = fs::read_to_string(dir.join("focal_scan.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "N,events,sigma_min_half_pi,b_N");
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1].split(',').nth(1).unwrap().split(';').count(), 6);

    let wr = run(&config("weak-rauch", &[("seed", "4"), ("t_max", "1.0")])).unwrap();
    write_outputs(&wr, dir).unwrap();
    let rows = read_plot(&dir.join("weak_rauch.csv"));
    let mut series: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    series.sort();
    series.dedup();
    assert_eq!(series, ["lower_bound", "measured", "upper_bound"]);
    for t in rows.iter().filter(|r| r.0 == "measured") {
        let lo = rows.iter().find(|r| r.0 == "lower_bound" && r.1 == t.1).unwrap().2;
        let hi = rows.iter().find(|r| r.0 == "upper_bound" && r.1 == t.1).unwrap().2;
        assert!(lo - 1e-6 <= t.2 && t.2 <= hi + 1e-6);
    }

    let ep = run(&config("epifocal-trend", &[("dims", "8,16,32")])).unwrap();
    write_outputs(&ep, dir).unwrap();
    let rows = read_plot(&dir.join("epifocal_trend.csv"));
    let b: Vec<f64> = rows.iter().filter(|r| r.0 == "b_N").map(|r| r.2).collect();
    let gaps: Vec<f64> = b.iter().map(|x| (x - 2.0 / std::f64::consts::PI).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "b_N does not approach 2/pi: {b:?}");
}

#[test]
fn report_echoes_resolved_config() {
    let r = run(&config("toponogov-sweep", &[("seed", "7"), ("hinges", "3"), ("manifold", "sphere:dim=2,K=1"), ("H", "1")])).unwrap();
    assert_eq!(r.config["seed"], "7");
    assert_eq!(r.config["hinges"], "3");
    assert_eq!(r.config["l_min"], "0.05");
    assert_eq!(r.config["manifold"], "sphere:dim=2,K=1.0");
    let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(json["experiment"], "toponogov-sweep");
    assert!(json["checks"][0]["slack_min"].is_number());
}

fn config_strategy() -> impl Strategy<Value = ExperimentConfig> {
    let manifolds = prop_oneof![
        (2usize..6, 0.1f64..5.0).prop_map(|(n, k)| format!("sphere:dim={n},K={k:?}")),
        (2usize..6, 0.1f64..5.0).prop_map(|(n, k)| format!("hyperbolic:dim={n},K={:?}", -k)),
        prop::collection::vec(0.1f64..3.0, 3..6)
            .prop_map(|c| format!("quadric:c={}", c.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(","))),
        (2usize..5).prop_map(|n| format!("euclidean:dim={n}")),
    ];
    (0..EXPERIMENTS.len(), prop::collection::vec((0usize..16, -1e6f64..1e6), 0..6), manifolds, any::<u64>()).prop_map(
        |(i, picks, manifold, seed)| {
            let def = &EXPERIMENTS[i];
            let mut pairs = Vec::new();
            if def.manifold.is_some() {
                pairs.push(("manifold".to_string(), manifold));
            }
            if def.randomized {
                pairs.push(("seed".to_string(), seed.to_string()));
            }
            for (k, v) in picks {
                if let Some((key, _)) = def.keys.get(k % def.keys.len().max(1)) {
                    if *key != "seed" {
                        pairs.push((key.to_string(), format!("{v:?}")));
                    }
                }
            }
            ExperimentConfig::from_pairs(Some(def.name), pairs).unwrap()
        },
    )
}

proptest! {
    #[test]
    fn config_round_trip(cfg in config_strategy()) {
        let text = cfg.to_string();
        let back = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_string(), text.clone());
        // reading the printed pairs back gives the same pairs in order
        let pairs = read_pairs(&text).unwrap();
        prop_assert_eq!(pairs[0].0.as_str(), "experiment");
    }
}
