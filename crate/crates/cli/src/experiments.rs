//! The experiment table and one runner per experiment.

use std::f64::consts::PI;

use anyhow::{bail, Result};
use curvature_core::comparison::{
    exp_differential_ratio, maximal_diameter_probe, meridian_length, pinch_constants, random_triangle, rauch_compare,
    toponogov_sweep, triangle_comparison_check, weak_rauch_check, JacobiData, WeakRauchReport,
};
use curvature_core::geodesic::{
    distance_ratio, exp_map_with_step, integrate_geodesic, lift_curve_with_step, rotation_isometry_displacement,
    GeodesicPath, ShootingOptions,
};
use curvature_core::jacobi::{
    detect_singularities, ellipsoid_equator_flow, epifocal_trend, flow_estimate_suite, focal_index_lemma_check,
    integrate_flow, FlowBoundaryKind, FrameMode, FundamentalSystem, JacobiBoundary, DETECTION_TOL,
};
use curvature_core::report::{CheckResult, SlackTracker};
use curvature_core::rng::{gaussian_vector, random_point, random_unit_tangent, seeded_rng};
use curvature_core::{GeometryError, ManifoldSpec, Point, TangentVector, Vector};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::output::{PlotData, Table};

/// What an experiment produces before it is wrapped into a report.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<CheckResult>,
    pub data: serde_json::Value,
    pub plots: Vec<PlotData>,
    pub tables: Vec<Table>,
}

pub struct ExperimentDef {
    pub name: &'static str,
    pub about: &'static str,
    /// Randomized experiments require an explicit `seed`.
    pub randomized: bool,
    /// Default manifold; `None` when the experiment fixes its own spaces.
    pub manifold: Option<fn() -> ManifoldSpec>,
    /// Accepted keys with defaults; an empty default means required.
    pub keys: &'static [(&'static str, &'static str)],
    pub run: fn(&ExperimentConfig) -> Result<Outcome>,
}

fn unit_sphere() -> ManifoldSpec {
    ManifoldSpec::sphere(2, 1.0).expect("valid sphere")
}

fn quadric_3d() -> ManifoldSpec {
    ManifoldSpec::quadric(vec![1.0, 0.6, 0.8, 0.5]).expect("valid quadric")
}

/// Sectional curvature between 4/9 and 1.
fn pinched_quadric() -> ManifoldSpec {
    ManifoldSpec::quadric(vec![2.0 / 3.0, 2.0 / 3.0, 4.0 / 9.0]).expect("valid quadric")
}

pub static EXPERIMENTS: &[ExperimentDef] = &[
    ExperimentDef {
        name: "rauch-sphere",
        about: "exp differential and Jacobi norms on a round sphere against sin",
        randomized: false,
        manifold: None,
        keys: &[("K", "1"), ("dim", "2"), ("t_max", "3.0"), ("t_values", "0.5,1,2,3"), ("step", "1e-3"), ("tol", "1e-6")],
        run: rauch_sphere,
    },
    ExperimentDef {
        name: "weak-rauch",
        about: "sandwich of |d exp(tv) w|/|w| between comparison functions",
        randomized: true,
        manifold: Some(pinched_quadric),
        keys: &[("t_max", "2.0"), ("step", "1e-3"), ("seed", "")],
        run: weak_rauch,
    },
    ExperimentDef {
        name: "ellipsoid-focal-scan",
        about: "focal points of the equator of truncated ellipsoids",
        randomized: false,
        manifold: None,
        keys: &[("dims", "8,16,32,64"), ("s_max", "2.5"), ("step", "1e-3"), ("tol", "1e-4")],
        run: ellipsoid_focal_scan,
    },
    ExperimentDef {
        name: "epifocal-trend",
        about: "sigma_min(T(pi/2)) and the preimage coefficient as the truncation grows",
        randomized: false,
        manifold: None,
        keys: &[("dims", "8,16,32,64"), ("step", "1e-3"), ("limit_tol", "1e-4")],
        run: epifocal,
    },
    ExperimentDef {
        name: "focal-index-lemma",
        about: "index form of random fields against the Jacobi field with the same endpoint",
        randomized: true,
        manifold: Some(unit_sphere),
        keys: &[
            ("b", "1.5707963267948966"),
            ("boundary", "conjugate"),
            ("trials", "100"),
            ("step", "1e-3"),
            ("seed", ""),
        ],
        run: focal_index,
    },
    ExperimentDef {
        name: "wronskian-drift",
        about: "drift of the Wronskian of random Jacobi field pairs",
        randomized: true,
        manifold: Some(quadric_3d),
        keys: &[("length", "3.141592653589793"), ("pairs", "8"), ("step", "1e-3"), ("tol", "1e-8"), ("seed", "")],
        run: wronskian_drift,
    },
    ExperimentDef {
        name: "flow-estimates",
        about: "norm and log-derivative estimates of the sine-type flow under curvature bounds",
        randomized: true,
        manifold: Some(quadric_3d),
        keys: &[("length", "1.5"), ("step", "2e-3"), ("delta", "auto"), ("Delta", "auto"), ("seed", "")],
        run: flow_estimates,
    },
    ExperimentDef {
        name: "toponogov-sweep",
        about: "random hinges against the model space of curvature H",
        randomized: true,
        manifold: Some(pinched_quadric),
        keys: &[
            ("H", "4/9"),
            ("hinges", "200"),
            ("l_min", "0.05"),
            ("l_max", "1.0"),
            ("starts", "4"),
            ("step", "1e-3"),
            ("bins", "20"),
            ("seed", ""),
        ],
        run: toponogov,
    },
    ExperimentDef {
        name: "triangle-sweep",
        about: "angles and perimeter of random triangles against the model space",
        randomized: true,
        manifold: Some(unit_sphere),
        keys: &[("H", "1"), ("triangles", "100"), ("radius", "1.5"), ("starts", "32"), ("step", "1e-3"), ("seed", "")],
        run: triangle_sweep,
    },
    ExperimentDef {
        name: "meridian-length",
        about: "length of the exp image of a half great circle against its bound",
        randomized: true,
        manifold: Some(unit_sphere),
        keys: &[("L", "1"), ("s", "0.3,0.8,1.2"), ("nodes", "64"), ("step", "1e-3"), ("tol", "1e-6"), ("seed", "")],
        run: meridian,
    },
    ExperimentDef {
        name: "maximal-diameter-probe",
        about: "variation through geodesics of length pi/sqrt(delta) on the round sphere",
        randomized: true,
        manifold: None,
        keys: &[("n", "2"), ("delta", "1"), ("w_samples", "16"), ("step", "1e-3"), ("seed", "")],
        run: diameter_probe,
    },
    ExperimentDef {
        name: "pinch-constants",
        about: "pinching constants of the two sphere-type routes",
        randomized: false,
        manifold: None,
        keys: &[],
        run: pinch,
    },
    ExperimentDef {
        name: "distance-ratio",
        about: "d(exp sX, exp sY) / (s |X - Y|) as s -> 0",
        randomized: true,
        manifold: Some(unit_sphere),
        keys: &[("j_min", "2"), ("j_max", "8"), ("seed", "")],
        run: ratio,
    },
    ExperimentDef {
        name: "rotation-isometry",
        about: "block rotation of a truncated sphere: isometry with small displacements",
        randomized: true,
        manifold: None,
        keys: &[("n", "64"), ("pairs", "10000"), ("samples", "1000"), ("tol", "1e-9"), ("seed", "")],
        run: rotation,
    },
    ExperimentDef {
        name: "lift-curve-demo",
        about: "lift of a spiral through exp_p by continuation",
        randomized: true,
        manifold: Some(unit_sphere),
        keys: &[("h_bound", "1"), ("radius", "0.8"), ("turn", "1.5"), ("samples", "64"), ("step", "1e-3"), ("seed", "")],
        run: lift_demo,
    },
];

pub fn lookup(name: &str) -> Result<&'static ExperimentDef> {
    match EXPERIMENTS.iter().find(|d| d.name == name) {
        Some(d) => Ok(d),
        None => {
            let names: Vec<&str> = EXPERIMENTS.iter().map(|d| d.name).collect();
            bail!("unknown experiment {name:?}; available: {}", names.join(", "))
        }
    }
}

/// A one-point check `slack ≥ threshold`.
fn check(name: &str, label: &str, at: f64, slack: f64, threshold: f64) -> CheckResult {
    let mut tr = SlackTracker::default();
    tr.push(at, slack);
    CheckResult::new(name, label).finish(&tr, threshold)
}

/// `err ≤ tol`, recorded with slack `tol − err`.
fn within(name: &str, label: &str, at: f64, err: f64, tol: f64) -> CheckResult {
    check(name, label, at, tol - err, 0.0).param("tol", tol)
}

fn manifold(cfg: &ExperimentConfig) -> ManifoldSpec {
    cfg.manifold_or_default().expect("experiment takes a manifold")
}

fn seeded_geodesic(spec: &ManifoldSpec, len: f64, step: f64, seed: u64) -> Result<GeodesicPath> {
    let mut rng = seeded_rng(seed);
    let x = random_point(spec, &mut rng);
    let u = random_unit_tangent(spec, &x, &[], &mut rng);
    let p = Point::new_unchecked(x);
    Ok(integrate_geodesic(spec, &p, &TangentVector::new_unchecked(p.clone(), u), len, step)?)
}

fn axis(len: usize, i: usize) -> Vector {
    let mut v = Vector::zeros(len);
    v[i] = 1.0;
    v
}

fn finite_max(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn weak_rauch_plot(rep: &WeakRauchReport) -> PlotData {
    let mut plot = PlotData::new("weak_rauch.csv");
    for s in &rep.samples {
        plot.push("lower_bound", s.t, s.f_upper_curv);
        plot.push("measured", s.t, s.ratio_min);
        if (s.ratio_max - s.ratio_min).abs() > 1e-12 {
            plot.push("measured", s.t, s.ratio_max);
        }
        plot.push("upper_bound", s.t, s.f_lower_curv);
    }
    plot
}

fn rauch_sphere(cfg: &ExperimentConfig) -> Result<Outcome> {
    let k = cfg.f64("K")?;
    let dim = cfg.usize("dim")?;
    let t_max = cfg.f64("t_max")?;
    let step = cfg.f64("step")?;
    let tol = cfg.f64("tol")?;
    if k <= 0.0 {
        bail!("K must be positive");
    }
    let a = k.sqrt();
    let spec = ManifoldSpec::sphere(dim, k)?;
    let label = spec.to_string();
    let p = spec.point(axis(dim + 1, dim) / a)?;
    let v = spec.tangent(&p, axis(dim + 1, 0))?;
    let w = axis(dim + 1, 1);

    let mut tr = SlackTracker::default();
    let mut gap: f64 = 0.0;
    for t in cfg.f64_list("t_values")? {
        if !(t > 0.0 && t < PI / a) {
            bail!("t_values must lie in (0, pi/sqrt(K)), got {t}");
        }
        let ratio = exp_differential_ratio(&spec, &p, &v, &w, t, step)?;
        let err = (ratio - (a * t).sin() / (a * t)).abs();
        gap = gap.max(err);
        tr.push(t, tol - err);
    }
    let equality = CheckResult::new("exp-differential-equality", &label).param("tol", tol).finish(&tr, 0.0);

    let wr = weak_rauch_check(&spec, &p, &v, t_max, step)?;
    let wr_equality = within("weak-rauch-equality", &label, t_max, wr.equality_gap, tol);

    // flat M against the sphere N with J(0) = 0, |J'(0)| = 1
    let flat = ManifoldSpec::euclidean(dim)?;
    let o = flat.point(Vector::zeros(dim))?;
    let m_path = integrate_geodesic(&flat, &o, &flat.tangent(&o, axis(dim, 0))?, t_max, step)?;
    let n_path = integrate_geodesic(&spec, &p, &v, t_max, step)?;
    let m_data = JacobiData {
        value: Vector::zeros(dim),
        derivative: axis(dim, 1),
    };
    let n_data = JacobiData {
        value: Vector::zeros(dim + 1),
        derivative: w.clone(),
    };
    let rauch = rauch_compare(&m_path, &n_path, &m_data, &n_data)?;
    let mut norms = PlotData::new("jacobi_norms.csv");
    for (t, jm, jn) in rauch.series.iter().step_by(10) {
        norms.push("flat", *t, *jm);
        norms.push("sphere", *t, *jn);
        norms.push("sin", *t, (a * t).sin() / a);
    }
    Ok(Outcome {
        data: json!({
            "max_ratio_gap": gap,
            "weak_rauch_equality_gap": wr.equality_gap,
            "rauch_domain_end": rauch.domain_end,
        }),
        checks: vec![equality, wr.sandwich.clone(), wr_equality, rauch.result],
        plots: vec![weak_rauch_plot(&wr), norms],
        tables: vec![],
    })
}

fn weak_rauch(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = manifold(cfg);
    let t_max = cfg.f64("t_max")?;
    let step = cfg.f64("step")?;
    let mut rng = seeded_rng(cfg.u64("seed")?);
    let x = random_point(&spec, &mut rng);
    let u = random_unit_tangent(&spec, &x, &[], &mut rng);
    let p = Point::new_unchecked(x);
    let v = spec.tangent(&p, u)?;
    let rep = weak_rauch_check(&spec, &p, &v, t_max, step)?;
    Ok(Outcome {
        data: json!({
            "L": rep.lower_curvature,
            "H": rep.upper_curvature,
            "swapped_ordering_slack": rep.swapped.slack_min,
            "equality_gap": rep.equality_gap,
        }),
        checks: vec![rep.sandwich.clone()],
        plots: vec![weak_rauch_plot(&rep)],
        tables: vec![],
    })
}

fn ellipsoid_focal_scan(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dims = cfg.usize_list("dims")?;
    let s_max = cfg.f64("s_max")?;
    let step = cfg.f64("step")?;
    let tol = cfg.f64("tol")?;
    if s_max <= PI / 2.0 {
        bail!("s_max must exceed pi/2");
    }
    let rows = epifocal_trend(&dims, PI / 2.0, step)?;
    let mut checks = Vec::new();
    let mut trace = PlotData::new("sigma_min_trace.csv");
    let mut csv = String::from("N,events,sigma_min_half_pi,b_N\n");
    let mut data = Vec::new();
    for (n, row) in dims.iter().zip(&rows) {
        let (path, state) = ellipsoid_equator_flow(*n, s_max, step, FlowBoundaryKind::Focal)?;
        let rep = detect_singularities(&state, (0.0, s_max), DETECTION_TOL)?;
        let mut expected: Vec<f64> = (3..=*n)
            .map(|k| k as f64 * PI / (2.0 * (k as f64 - 1.0)))
            .filter(|s| *s < s_max)
            .collect();
        expected.sort_by(f64::total_cmp);
        let found: Vec<f64> = rep.events.iter().map(|e| e.s).collect();
        let nearest = |s: f64, among: &[f64]| among.iter().map(|t| (s - t).abs()).fold(f64::INFINITY, f64::min);
        // every reported event sits on the ladder
        let err = finite_max(found.iter().map(|s| nearest(*s, &expected)));
        // events closer than two grid steps to a neighbour can merge on the scan grid
        let resolvable: Vec<f64> = expected
            .iter()
            .enumerate()
            .filter(|(i, s)| {
                let others: Vec<f64> = expected.iter().enumerate().filter(|(j, _)| j != i).map(|(_, t)| *t).collect();
                nearest(**s, &others) >= 2.0 * step
            })
            .map(|(_, s)| *s)
            .collect();
        let missed = resolvable.iter().filter(|s| nearest(**s, &found) > tol).count();
        let label = path.spec().to_string();
        checks.push(within("focal-ladder-accuracy", &label, *n as f64, err, tol).param("N", n));
        checks.push(
            check("focal-ladder-resolved", &label, *n as f64, 0.0 - missed as f64, 0.0)
                .param("N", n)
                .param("resolvable", resolvable.len())
                .param("expected", expected.len()),
        );
        for (s, sigma, _) in &rep.trace {
            trace.push(format!("N={n}"), *s, *sigma);
        }
        let events: Vec<String> = found.iter().map(|s| format!("{s:?}")).collect();
        csv += &format!("{n},{},{:?},{:?}\n", events.join(";"), row.sigma_min, row.preimage_coefficient);
        data.push(json!({
            "N": n,
            "events": found,
            "multiplicities": rep.events.iter().map(|e| e.multiplicity).collect::<Vec<_>>(),
            "expected": expected.len(),
            "unresolved_at_step": expected.len() - resolvable.len(),
            "max_error": err,
            "sigma_min_half_pi": row.sigma_min,
            "b_N": row.preimage_coefficient,
        }));
    }
    Ok(Outcome {
        checks,
        data: json!({ "truncations": data }),
        plots: vec![trace],
        tables: vec![Table {
            file: "focal_scan.csv".into(),
            content: csv,
        }],
    })
}

fn epifocal(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dims = cfg.usize_list("dims")?;
    let step = cfg.f64("step")?;
    let limit_tol = cfg.f64("limit_tol")?;
    let rows = epifocal_trend(&dims, PI / 2.0, step)?;
    let label = "ellipsoid truncations";
    let sigma_err = finite_max(rows.iter().map(|r| (r.sigma_min - r.expected_sigma_min).abs()));
    let b_err = finite_max(rows.iter().map(|r| (r.preimage_coefficient - r.expected_preimage_coefficient).abs()));
    let mut dec = SlackTracker::default();
    for w in rows.windows(2) {
        dec.push(w[1].n as f64, w[0].sigma_min - w[1].sigma_min);
    }
    let last = rows.last().expect("at least one truncation");
    let mut plot = PlotData::new("epifocal_trend.csv");
    for r in &rows {
        plot.push("sigma_min", r.n as f64, r.sigma_min);
        plot.push("b_N", r.n as f64, r.preimage_coefficient);
        plot.push("limit_2_over_pi", r.n as f64, 2.0 / PI);
    }
    Ok(Outcome {
        checks: vec![
            within("sigma-min-closed-form", label, PI / 2.0, sigma_err, 1e-9),
            within("preimage-closed-form", label, PI / 2.0, b_err, 1e-8),
            CheckResult::new("sigma-min-decreasing", label).finish(&dec, 0.0),
            within("preimage-limit", label, last.n as f64, (last.preimage_coefficient - 2.0 / PI).abs(), limit_tol),
        ],
        data: serde_json::to_value(&rows)?,
        plots: vec![plot],
        tables: vec![],
    })
}

fn focal_index(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = manifold(cfg);
    let b = cfg.f64("b")?;
    let step = cfg.f64("step")?;
    let seed = cfg.u64("seed")?;
    let d = spec.dim() - 1;
    let boundary = match cfg.string("boundary")?.as_str() {
        "conjugate" => JacobiBoundary::conjugate(d),
        "focal" => JacobiBoundary::focal_geodesic(d),
        other => bail!("boundary must be conjugate or focal, got {other:?}"),
    };
    let path = seeded_geodesic(&spec, b, step, seed)?;
    let rep = focal_index_lemma_check(&path, &boundary, FrameMode::Normal, cfg.usize("trials")?, b, seed)?;
    let label = spec.to_string();
    Ok(Outcome {
        checks: vec![
            check("focal-index-inequality", &label, b, rep.min_slack, -1e-9).param("boundary", boundary.label()),
            within("focal-index-equality", &label, b, rep.equality_slack, 1e-8),
        ],
        data: serde_json::to_value(&rep)?,
        ..Outcome::default()
    })
}

fn wronskian_drift(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = manifold(cfg);
    let length = cfg.f64("length")?;
    let step = cfg.f64("step")?;
    let seed = cfg.u64("seed")?;
    let path = seeded_geodesic(&spec, length, step, seed)?;
    let fs = FundamentalSystem::new(&path, FrameMode::Normal, step)?;
    let d = spec.dim() - 1;
    let mut rng = seeded_rng(seed.wrapping_add(1));
    let mut worst: (f64, f64) = (0.0, 0.0);
    let mut plot = PlotData::new("wronskian_drift.csv");
    for k in 0..cfg.usize("pairs")? {
        let a = (gaussian_vector(d, &mut rng), gaussian_vector(d, &mut rng));
        let b = (gaussian_vector(d, &mut rng), gaussian_vector(d, &mut rng));
        let drift = fs.drift((&a.0, &a.1), (&b.0, &b.1));
        if drift.0 > worst.0 {
            worst = drift;
        }
        if k < 4 {
            let c0 = fs.wronskian_at_index(0, (&a.0, &a.1), (&b.0, &b.1));
            for i in (0..fs.sine.len()).step_by(10) {
                plot.push(format!("pair{k}"), fs.sine.s(i), fs.wronskian_at_index(i, (&a.0, &a.1), (&b.0, &b.1)) - c0);
            }
        }
    }
    Ok(Outcome {
        checks: vec![within("wronskian-drift", &spec.to_string(), worst.1, worst.0, cfg.f64("tol")?)],
        data: json!({ "max_drift": worst.0, "at": worst.1 }),
        plots: vec![plot],
        tables: vec![],
    })
}

fn bound_param(cfg: &ExperimentConfig, key: &str, auto: f64) -> Result<f64> {
    if cfg.string(key)? == "auto" {
        Ok(auto)
    } else {
        cfg.f64(key)
    }
}

fn flow_estimates(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = manifold(cfg);
    let step = cfg.f64("step")?;
    let seed = cfg.u64("seed")?;
    let path = seeded_geodesic(&spec, cfg.f64("length")?, step, seed)?;
    let (lo, hi) = spec.curvature_range(&path, path.samples().len());
    let delta = bound_param(cfg, "delta", lo)?;
    let big_delta = bound_param(cfg, "Delta", hi)?;
    let state = integrate_flow(&path, &JacobiBoundary::conjugate(spec.dim() - 1), FrameMode::Normal, step)?;
    let rep = flow_estimate_suite(&state, delta, big_delta, seed)?;
    let label = spec.to_string();
    let checks = rep
        .checks
        .iter()
        .map(|c| {
            let mut tr = SlackTracker::default();
            tr.push(c.at_s, c.min_slack);
            CheckResult::new(format!("flow-estimate {}", c.name), &label)
                .param("delta", delta)
                .param("Delta", big_delta)
                .finish(&tr, -1e-6)
        })
        .collect();
    Ok(Outcome {
        checks,
        data: serde_json::to_value(&rep)?,
        ..Outcome::default()
    })
}

fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64)> {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![(lo, v.len() as f64)];
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for x in v {
        counts[(((x - lo) / w) as usize).min(bins - 1)] += 1;
    }
    counts.iter().enumerate().map(|(i, c)| (lo + (i as f64 + 0.5) * w, *c as f64)).collect()
}

fn shooting(cfg: &ExperimentConfig) -> Result<ShootingOptions> {
    Ok(ShootingOptions {
        starts: cfg.usize("starts")?,
        step: cfg.f64("step")?,
        ..ShootingOptions::default()
    })
}

fn toponogov(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = manifold(cfg);
    let h = cfg.f64("H")?;
    let rep = toponogov_sweep(
        &spec,
        h,
        cfg.usize("hinges")?,
        (cfg.f64("l_min")?, cfg.f64("l_max")?),
        cfg.u64("seed")?,
        &shooting(cfg)?,
    )?;
    let bins = cfg.usize("bins")?;
    let mut hist = PlotData::new("slack_histogram.csv");
    for (x, c) in histogram(&rep.slacks, bins) {
        hist.push("slack", x, c);
    }
    for (x, c) in histogram(&rep.literal_slacks, bins) {
        hist.push("literal_slack", x, c);
    }
    let mut per = PlotData::new("hinge_slacks.csv");
    for (k, (s, l)) in rep.slacks.iter().zip(&rep.literal_slacks).enumerate() {
        per.push("slack", k as f64, *s);
        if l.is_finite() {
            per.push("literal_slack", k as f64, *l);
        }
    }
    Ok(Outcome {
        data: json!({
            "conditional": rep.conditional,
            "certified_min_slack": rep.certified_min_slack,
            "min_literal_slack": rep.literal_slacks.iter().copied().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min),
        }),
        checks: vec![rep.result],
        plots: vec![hist, per],
        tables: vec![],
    })
}

fn triangle_sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = manifold(cfg);
    let h = cfg.f64("H")?;
    let count = cfg.usize("triangles")?;
    let radius = cfg.f64("radius")?;
    let opts = shooting(cfg)?;
    let mut rng = seeded_rng(cfg.u64("seed")?);
    let label = spec.to_string();
    let mut angles = CheckResult::new("triangle-angles", &label).param("H", h).param("triangles", count);
    let mut perimeter = CheckResult::new("triangle-perimeter", &label).param("H", h).param("triangles", count);
    let (mut at, mut pt) = (SlackTracker::default(), SlackTracker::default());
    let mut plot = PlotData::new("triangle_slacks.csv");
    let mut skipped = 0;
    let mut k = 0;
    while k < count {
        if skipped > 4 * count {
            bail!("too many degenerate triangles ({skipped})");
        }
        let tri = match random_triangle(&spec, radius, &opts, &mut rng) {
            Ok(t) => t,
            Err(GeometryError::Domain(_) | GeometryError::NoCertifiedMinimizer { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let rep = triangle_comparison_check(&tri, h)?;
        at.push(k as f64, rep.angles.slack_min);
        plot.push("angle_slack", k as f64, rep.angles.slack_min);
        for f in &rep.angles.conditional_flags {
            angles.flag(f.clone());
        }
        if let Some(p) = rep.perimeter {
            pt.push(k as f64, p.slack_min);
            plot.push("perimeter_slack", k as f64, p.slack_min);
        }
        k += 1;
    }
    let mut checks = vec![angles.finish(&at, -1e-6)];
    if h > 0.0 {
        if checks[0].is_conditional() {
            perimeter.flag("uncertified-minimality");
        }
        checks.push(perimeter.finish(&pt, -1e-9));
    }
    Ok(Outcome {
        checks,
        data: json!({ "skipped": skipped }),
        plots: vec![plot],
        tables: vec![],
    })
}

fn meridian(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = manifold(cfg);
    let l = cfg.f64("L")?;
    let nodes = cfg.usize("nodes")?;
    let step = cfg.f64("step")?;
    let tol = cfg.f64("tol")?;
    let mut rng = seeded_rng(cfg.u64("seed")?);
    let x = random_point(&spec, &mut rng);
    let a = random_unit_tangent(&spec, &x, &[], &mut rng);
    let b = random_unit_tangent(&spec, &x, &[&a], &mut rng);
    let p = Point::new_unchecked(x);
    let saturated = spec.constant_curvature() == Some(l);
    let mut checks = Vec::new();
    let mut plot = PlotData::new("meridian.csv");
    let mut rows = Vec::new();
    for s in cfg.f64_list("s")? {
        let rep = meridian_length(&spec, &p, &a, &b, s, l, nodes, step)?;
        plot.push("length", s, rep.length);
        plot.push("bound", s, rep.bound);
        if saturated {
            checks.push(within("meridian-equality", &spec.to_string(), s, (rep.length - rep.bound).abs(), tol));
        }
        rows.push(json!({ "s": s, "length": rep.length, "bound": rep.bound }));
        checks.push(rep.result);
    }
    Ok(Outcome {
        checks,
        data: json!(rows),
        plots: vec![plot],
        tables: vec![],
    })
}

fn diameter_probe(cfg: &ExperimentConfig) -> Result<Outcome> {
    let n = cfg.usize("n")?;
    let delta = cfg.f64("delta")?;
    let rep = maximal_diameter_probe(n, delta, cfg.usize("w_samples")?, cfg.u64("seed")?, cfg.f64("step")?)?;
    let label = ManifoldSpec::sphere(n, delta)?.to_string();
    let d = rep.diameter;
    let mut plot = PlotData::new("omega_excess.csv");
    for (s, e) in &rep.omega_excess {
        plot.push("omega_excess", *s, *e);
    }
    Ok(Outcome {
        checks: vec![
            within("diameter-curve-length", &label, d, rep.length_error, 1e-6),
            within("diameter-endpoint", &label, d, rep.endpoint_error, 1e-6),
            within("variation-curvature", &label, d, rep.curvature_error, 1e-7),
            within("index-form-zero", &label, d, rep.index_form_error, 1e-7),
        ],
        data: serde_json::to_value(&rep)?,
        plots: vec![plot],
        tables: vec![],
    })
}

fn pinch(_cfg: &ExperimentConfig) -> Result<Outcome> {
    let c = pinch_constants();
    let label = "pinching";
    Ok(Outcome {
        checks: vec![
            check("toponogov-constant", label, c.h_toponogov, 0.0 - (c.h_toponogov - 4.0 / 9.0).abs(), 0.0),
            within("rauch-root-residual", label, c.h_rauch, c.h_rauch_residual, 1e-12),
            check("rauch-root-range", label, c.h_rauch, (c.h_rauch - 0.70).min(0.78 - c.h_rauch), 0.0),
        ],
        data: serde_json::to_value(&c)?,
        ..Outcome::default()
    })
}

fn ratio(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = manifold(cfg);
    let mut rng = seeded_rng(cfg.u64("seed")?);
    let x = random_point(&spec, &mut rng);
    let u = random_unit_tangent(&spec, &x, &[], &mut rng);
    let w = random_unit_tangent(&spec, &x, &[], &mut rng);
    let p = Point::new_unchecked(x);
    let xt = TangentVector::new_unchecked(p.clone(), u);
    let yt = TangentVector::new_unchecked(p.clone(), w);
    let mut tr = SlackTracker::default();
    let mut plot = PlotData::new("distance_ratio.csv");
    let mut rows = Vec::new();
    for j in cfg.usize("j_min")?..=cfg.usize("j_max")? {
        let s = 2f64.powi(-(j as i32));
        let r = distance_ratio(&spec, &p, &xt, &yt, s)?;
        let bound = 4f64.powi(1 - j as i32);
        tr.push(s, bound - (r - 1.0).abs());
        plot.push("ratio", s, r);
        plot.push("upper", s, 1.0 + bound);
        plot.push("lower", s, 1.0 - bound);
        rows.push(json!({ "j": j, "s": s, "ratio": r }));
    }
    Ok(Outcome {
        checks: vec![CheckResult::new("distance-ratio-limit", spec.to_string()).finish(&tr, 0.0)],
        data: json!(rows),
        plots: vec![plot],
        tables: vec![],
    })
}

fn rotation(cfg: &ExperimentConfig) -> Result<Outcome> {
    let n = cfg.usize("n")?;
    let tol = cfg.f64("tol")?;
    let rep = rotation_isometry_displacement(n, cfg.usize("pairs")?, cfg.usize("samples")?, cfg.u64("seed")?)?;
    let label = ManifoldSpec::sphere(n - 1, 1.0)?.to_string();
    let expected = 2.0 / n as f64;
    let mut plot = PlotData::new("displacements.csv");
    for (i, d) in &rep.basis_displacements {
        plot.push("basis", *i as f64, *d);
        plot.push("one_over_i", *i as f64, 1.0 / *i as f64);
    }
    Ok(Outcome {
        checks: vec![
            within("min-displacement", &label, expected, (rep.min_basis_displacement - expected).abs(), tol),
            within("distance-preservation", &label, 0.0, rep.distance_residual, tol),
        ],
        data: serde_json::to_value(&rep)?,
        plots: vec![plot],
        tables: vec![],
    })
}

fn lift_demo(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = manifold(cfg);
    let h_bound = cfg.f64("h_bound")?;
    let radius = cfg.f64("radius")?;
    let turn = cfg.f64("turn")?;
    let samples = cfg.usize("samples")?.max(2);
    let step = cfg.f64("step")?;
    let mut rng = seeded_rng(cfg.u64("seed")?);
    let x = random_point(&spec, &mut rng);
    let u = random_unit_tangent(&spec, &x, &[], &mut rng);
    let w = random_unit_tangent(&spec, &x, &[&u], &mut rng);
    let p = Point::new_unchecked(x);
    let xi = |t: f64| (&u * (turn * t).cos() + &w * (turn * t).sin()) * (radius * t);
    let curve = (0..=samples)
        .map(|k| {
            let t = k as f64 / samples as f64;
            Ok((t, exp_map_with_step(&spec, &p, &xi(t), step)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let lifted = lift_curve_with_step(&spec, &p, &curve, h_bound, step)?;
    let label = spec.to_string();
    let err = finite_max(lifted.samples.iter().map(|(t, l)| (l - xi(*t)).amax()));
    let mut buf = Vec::new();
    lifted.write_csv(&mut buf)?;
    let mut plot = PlotData::new("lift_norm.csv");
    for (t, l) in &lifted.samples {
        plot.push("lifted", *t, spec.norm(l));
        plot.push("prescribed", *t, radius * t);
    }
    Ok(Outcome {
        checks: vec![
            within("lift-residual", &label, 1.0, lifted.max_residual, 1e-8),
            within("lift-matches-preimage", &label, 1.0, err, 1e-6),
            check("lift-margin", &label, 1.0, lifted.margin, 0.0).param("h_bound", h_bound),
        ],
        data: json!({
            "continuity_constant": lifted.continuity_constant,
            "max_residual": lifted.max_residual,
            "margin": lifted.margin,
        }),
        plots: vec![plot],
        tables: vec![Table {
            file: "lift.csv".into(),
            content: String::from_utf8(buf)?,
        }],
    })
}
