//! Model-space trigonometry and the comparison checkers.
//!
//! Every checker measures a slack that is nonnegative when the comparison
//! inequality holds. Violations are reported as data; only broken hypotheses
//! are errors.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::error::{GeometryError, Result};
use crate::geodesic::{
    distance_with, exp_map_with_step, integrate_geodesic_with_frame, GeodesicPath, ShootingOptions,
};
use crate::jacobi::{
    detect_singularities, index_form, integrate_flow, ClosureField, FrameMode, FundamentalSystem, JacobiBoundary,
    DETECTION_TOL,
};
use crate::linalg::{bisect, simpson, singular_extremes};
use crate::manifold::{ManifoldSpec, Point, TangentVector, Vector};
use crate::report::{CheckResult, SlackTracker};
use crate::rng::{random_point, random_unit_tangent, seeded_rng};

/// Normalisation of a solution of `f'' + Δ f = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ComparisonMode {
    /// `f(0) = 0, f'(0) = 1`.
    ZeroAtOrigin,
    /// `f(0) = 1, f'(0) = 0`.
    OneAtOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonFunction {
    pub delta: f64,
    pub mode: ComparisonMode,
}

impl ComparisonFunction {
    pub fn sine(delta: f64) -> Self {
        ComparisonFunction {
            delta,
            mode: ComparisonMode::ZeroAtOrigin,
        }
    }

    pub fn cosine(delta: f64) -> Self {
        ComparisonFunction {
            delta,
            mode: ComparisonMode::OneAtOrigin,
        }
    }

    /// `(f(s), f'(s))`.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        let d = self.delta;
        match self.mode {
            ComparisonMode::ZeroAtOrigin => {
                if d > 0.0 {
                    let a = d.sqrt();
                    ((a * s).sin() / a, (a * s).cos())
                } else if d < 0.0 {
                    let a = (-d).sqrt();
                    ((a * s).sinh() / a, (a * s).cosh())
                } else {
                    (s, 1.0)
                }
            }
            ComparisonMode::OneAtOrigin => {
                if d > 0.0 {
                    let a = d.sqrt();
                    ((a * s).cos(), -a * (a * s).sin())
                } else if d < 0.0 {
                    let a = (-d).sqrt();
                    ((a * s).cosh(), a * (a * s).sinh())
                } else {
                    (1.0, 0.0)
                }
            }
        }
    }

    /// `|f'' + Δ f|` with `f''` from a central second difference of step `h`.
    pub fn ode_residual(&self, s: f64, h: f64) -> f64 {
        let f = |t: f64| comparison_value(self, t);
        let second = (f(s + h) - 2.0 * f(s) + f(s - h)) / (h * h);
        (second + self.delta * f(s)).abs()
    }
}

pub fn comparison_value(f: &ComparisonFunction, s: f64) -> f64 {
    f.eval(s).0
}

fn hav(x: f64) -> f64 {
    let s = (0.5 * x).sin();
    s * s
}

/// Third side of the hinge `(l1, l2, α)` in the model plane of curvature `h`.
pub fn model_hinge_distance(h: f64, l1: f64, l2: f64, alpha: f64) -> Result<f64> {
    if !(l1 >= 0.0 && l2 >= 0.0) || !(0.0..=PI).contains(&alpha) {
        return Err(GeometryError::Domain(format!("inadmissible hinge ({l1}, {l2}, {alpha})")));
    }
    let sa = (0.5 * alpha).sin().powi(2);
    if h > 0.0 {
        let a = h.sqrt();
        let cap = PI / a;
        if l1 > cap * (1.0 + 1e-12) || l2 > cap * (1.0 + 1e-12) {
            return Err(GeometryError::Domain(format!("side longer than pi/sqrt(H) = {cap}")));
        }
        let x = hav(a * (l1 - l2)) + (a * l1).sin() * (a * l2).sin() * sa;
        Ok(2.0 * x.clamp(0.0, 1.0).sqrt().asin() / a)
    } else if h < 0.0 {
        let a = (-h).sqrt();
        let x = (0.5 * a * (l1 - l2)).sinh().powi(2) + (a * l1).sinh() * (a * l2).sinh() * sa;
        Ok(2.0 * x.max(0.0).sqrt().asinh() / a)
    } else {
        Ok(((l1 - l2).powi(2) + 4.0 * l1 * l2 * sa).max(0.0).sqrt())
    }
}

/// Model triangle with prescribed sides; `angles[i]` is opposite `sides[i]`.
#[derive(Debug, Clone, Serialize)]
pub struct ModelTriangle {
    pub sides: [f64; 3],
    pub angles: [f64; 3],
    /// `false` when a side equals `π/√H` and the triangle is not determined.
    pub unique: bool,
}

/// Angle opposite `c` in the model triangle with sides `a, b, c`.
fn model_angle(h: f64, a: f64, b: f64, c: f64) -> f64 {
    let x = if h > 0.0 {
        let r = h.sqrt();
        (hav(r * c) - hav(r * (a - b))) / ((r * a).sin() * (r * b).sin())
    } else if h < 0.0 {
        let r = (-h).sqrt();
        ((0.5 * r * c).sinh().powi(2) - (0.5 * r * (a - b)).sinh().powi(2)) / ((r * a).sinh() * (r * b).sinh())
    } else {
        (c * c - (a - b) * (a - b)) / (4.0 * a * b)
    };
    2.0 * x.clamp(0.0, 1.0).sqrt().asin()
}

pub fn model_triangle_angles(h: f64, l1: f64, l2: f64, l3: f64) -> Result<ModelTriangle> {
    let l = [l1, l2, l3];
    if l.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(GeometryError::Domain(format!("sides must be positive, got {l:?}")));
    }
    let tol = 1e-12 * (l1 + l2 + l3);
    for i in 0..3 {
        if l[i] > l[(i + 1) % 3] + l[(i + 2) % 3] + tol {
            return Err(GeometryError::Domain(format!("sides {l:?} violate the triangle inequality")));
        }
    }
    let mut unique = true;
    if h > 0.0 {
        let cap = PI / h.sqrt();
        if l.iter().any(|x| *x > cap * (1.0 + 1e-12)) {
            return Err(GeometryError::Domain(format!("side longer than pi/sqrt(H) = {cap}")));
        }
        if l1 + l2 + l3 > 2.0 * cap * (1.0 + 1e-12) {
            return Err(GeometryError::Domain("perimeter exceeds 2 pi/sqrt(H)".into()));
        }
        unique = l.iter().all(|x| (x - cap).abs() > 1e-12 * cap);
    }
    let angles = [
        model_angle(h, l2, l3, l1),
        model_angle(h, l3, l1, l2),
        model_angle(h, l1, l2, l3),
    ];
    Ok(ModelTriangle { sides: l, angles, unique })
}

/// `d exp_x(ξ)(η)` for each `η`, from the sine-type Jacobi flow along `r ↦ exp_x(r ξ/‖ξ‖)`.
pub fn flow_exp_differential(spec: &ManifoldSpec, x: &Vector, xi: &Vector, etas: &[Vector], step: f64) -> Result<Vec<Vector>> {
    let r = spec.norm(xi);
    if r < 1e-14 {
        return Ok(etas.to_vec());
    }
    let u = xi / r;
    let frame = spec.tangent_basis(x, Some(&u));
    let path = integrate_geodesic_with_frame(spec, x, frame, r, step)?;
    let n = spec.dim();
    let state = integrate_flow(&path, &JacobiBoundary::conjugate(n), FrameMode::Full, step)?;
    let last = state.len() - 1;
    let t = state.t_at_index(last);
    let end = state.path().end();
    Ok(etas
        .iter()
        .map(|eta| {
            let tc = t * state.coefficients(eta);
            let mut out = Vector::zeros(x.len());
            for (i, f) in end.frame.iter().enumerate() {
                out += f * (tc[i] / r);
            }
            out
        })
        .collect())
}

/// `‖d exp_p(t v)(w)‖ / ‖w‖` through the Jacobi flow.
pub fn exp_differential_ratio(spec: &ManifoldSpec, p: &Point, v: &TangentVector, w: &Vector, t: f64, step: f64) -> Result<f64> {
    let img = flow_exp_differential(spec, p.coords(), &(v.components() * t), std::slice::from_ref(w), step)?;
    Ok(spec.norm(&img[0]) / spec.norm(w))
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakRauchSample {
    pub t: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// `f_H(t)/t`.
    pub f_upper_curv: f64,
    /// `f_L(t)/t`.
    pub f_lower_curv: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakRauchReport {
    pub lower_curvature: f64,
    pub upper_curvature: f64,
    pub samples: Vec<WeakRauchSample>,
    /// `f_H(t)/t ≤ ratio ≤ f_L(t)/t`.
    pub sandwich: CheckResult,
    /// The opposite ordering `f_L(t)/t ≤ ratio ≤ f_H(t)/t`.
    pub swapped: CheckResult,
    /// `max |ratio − f_K(t)/t|` over both extremes, meaningful on constant curvature.
    pub equality_gap: f64,
}

/// Ratios `‖d exp_p(tv)(w)‖/‖w‖` over normal `w`, bracketed by the extreme
/// singular values of the sine-type flow, against the comparison functions
/// of the empirical curvature bounds along the geodesic.
pub fn weak_rauch_check(spec: &ManifoldSpec, p: &Point, v: &TangentVector, t_max: f64, step: f64) -> Result<WeakRauchReport> {
    let frame = spec.tangent_basis(p.coords(), Some(v.components()));
    let path = integrate_geodesic_with_frame(spec, p.coords(), frame, t_max, step)?;
    let (lo, hi) = spec.curvature_range(&path, path.samples().len());
    if hi > 0.0 && t_max >= PI / hi.sqrt() {
        return Err(GeometryError::Precondition(format!(
            "t_max = {t_max} reaches pi/sqrt(H) = {}",
            PI / hi.sqrt()
        )));
    }
    let n = spec.dim();
    let state = integrate_flow(&path, &JacobiBoundary::conjugate(n - 1), FrameMode::Normal, step)?;
    let fh = ComparisonFunction::sine(hi);
    let fl = ComparisonFunction::sine(lo);
    let mut sandwich = SlackTracker::default();
    let mut swapped = SlackTracker::default();
    let mut gap: f64 = 0.0;
    let mut samples = Vec::with_capacity(state.len());
    for i in 1..state.len() {
        let t = state.s(i);
        let (smin, smax) = singular_extremes(state.t_at_index(i));
        let (rmin, rmax) = (smin / t, smax / t);
        let a = comparison_value(&fh, t) / t;
        let b = comparison_value(&fl, t) / t;
        sandwich.push(t, (rmin - a).min(b - rmax));
        swapped.push(t, (rmin - b).min(a - rmax));
        if lo == hi {
            gap = gap.max((rmin - a).abs()).max((rmax - a).abs());
        }
        samples.push(WeakRauchSample {
            t,
            ratio_min: rmin,
            ratio_max: rmax,
            f_upper_curv: a,
            f_lower_curv: b,
        });
    }
    let label = spec.to_string();
    let params = |c: CheckResult| c.param("t_max", t_max).param("L", lo).param("H", hi).param("step", step);
    Ok(WeakRauchReport {
        lower_curvature: lo,
        upper_curvature: hi,
        samples,
        sandwich: params(CheckResult::new("weak-rauch", &label)).finish(&sandwich, -1e-6),
        swapped: params(CheckResult::new("weak-rauch-swapped", &label)).finish(&swapped, -1e-6),
        equality_gap: gap,
    })
}

/// Initial data `(J(0), ∇J(0))` in ambient components at the path start.
#[derive(Debug, Clone)]
pub struct JacobiData {
    pub value: Vector,
    pub derivative: Vector,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub result: CheckResult,
    /// End of the compared interval.
    pub domain_end: f64,
    pub max_abs_gap: f64,
    /// `(t, ‖J(t)‖, ‖J*(t)‖)`.
    #[serde(skip)]
    pub series: Vec<(f64, f64, f64)>,
}

#[derive(Clone, Copy, PartialEq)]
enum FieldComparison {
    Rauch,
    Berger,
}

/// Rauch comparison: `M` is the lower-curvature space, `N` the higher one;
/// `‖J(t)‖ ≥ ‖J*(t)‖` up to the first conjugate point on `N`.
pub fn rauch_compare(m_path: &GeodesicPath, n_path: &GeodesicPath, m_data: &JacobiData, n_data: &JacobiData) -> Result<ComparisonReport> {
    compare_fields(m_path, n_path, m_data, n_data, FieldComparison::Rauch)
}

/// Berger comparison with cosine-type data, up to the first focal point on `N`.
pub fn berger_compare(m_path: &GeodesicPath, n_path: &GeodesicPath, m_data: &JacobiData, n_data: &JacobiData) -> Result<ComparisonReport> {
    compare_fields(m_path, n_path, m_data, n_data, FieldComparison::Berger)
}

fn frame_coefficients(spec: &ManifoldSpec, frame: &[Vector], w: &Vector) -> DVector<f64> {
    DVector::from_iterator(frame.len(), frame.iter().map(|f| spec.inner(w, f)))
}

fn compare_fields(
    m_path: &GeodesicPath,
    n_path: &GeodesicPath,
    m_data: &JacobiData,
    n_data: &JacobiData,
    kind: FieldComparison,
) -> Result<ComparisonReport> {
    let b = m_path.length();
    if (b - n_path.length()).abs() > 1e-12 || (m_path.step() - n_path.step()).abs() > 1e-15 {
        return Err(GeometryError::Precondition("geodesics must share length and step".into()));
    }
    let (m_spec, n_spec) = (m_path.spec(), n_path.spec());
    let (_, hm) = m_spec.curvature_range(m_path, m_path.samples().len());
    let (ln, _) = n_spec.curvature_range(n_path, n_path.samples().len());
    if hm > ln + 1e-9 {
        return Err(GeometryError::Precondition(format!(
            "curvature hypothesis fails: sup K^M = {hm} > inf K^N = {ln}"
        )));
    }
    let m_start = m_path.start();
    let n_start = n_path.start();
    let a = frame_coefficients(m_spec, &m_start.frame, &m_data.value);
    let da = frame_coefficients(m_spec, &m_start.frame, &m_data.derivative);
    let c = frame_coefficients(n_spec, &n_start.frame, &n_data.value);
    let dc = frame_coefficients(n_spec, &n_start.frame, &n_data.derivative);
    let checks = [
        ("|J(0)|", a.norm() - c.norm()),
        ("tangential J'(0)", da[0] - dc[0]),
        ("|J'(0)|", da.norm() - dc.norm()),
    ];
    for (name, diff) in checks {
        if diff.abs() > 1e-9 {
            return Err(GeometryError::Precondition(format!("initial data mismatch in {name}: {diff:e}")));
        }
    }
    if kind == FieldComparison::Berger && (a[0].abs() > 1e-9 || c[0].abs() > 1e-9) {
        return Err(GeometryError::Precondition("cosine-type data must start normal to the geodesic".into()));
    }
    let step = m_path.step();
    let fm = FundamentalSystem::new(m_path, FrameMode::Full, step)?;
    let fn_ = FundamentalSystem::new(n_path, FrameMode::Full, step)?;
    let watched = match kind {
        FieldComparison::Rauch => &fn_.sine,
        FieldComparison::Berger => &fn_.cosine,
    };
    let events = detect_singularities(watched, (0.0, b), DETECTION_TOL)?;
    let domain_end = events.events.first().map_or(b, |e| e.s);
    let mut tracker = SlackTracker::default();
    let mut gap: f64 = 0.0;
    let mut series = Vec::new();
    for i in 0..fm.sine.len() {
        let t = fm.sine.s(i);
        if t > domain_end + 1e-12 {
            break;
        }
        let jm = (fm.cosine.t_at_index(i) * &a + fm.sine.t_at_index(i) * &da).norm();
        let jn = (fn_.cosine.t_at_index(i) * &c + fn_.sine.t_at_index(i) * &dc).norm();
        tracker.push(t, jm - jn);
        gap = gap.max((jm - jn).abs());
        series.push((t, jm, jn));
    }
    let name = match kind {
        FieldComparison::Rauch => "rauch",
        FieldComparison::Berger => "berger",
    };
    let result = CheckResult::new(name, format!("{m_spec} vs {n_spec}"))
        .param("length", b)
        .param("domain_end", domain_end)
        .param("step", step)
        .finish(&tracker, -1e-7);
    Ok(ComparisonReport {
        result,
        domain_end,
        max_abs_gap: gap,
        series,
    })
}

/// Length of `t ↦ exp_{γ(t)}(f(t) V(t))` with `V` the parallel field whose
/// normal-frame coefficients are `coeffs`.
///
/// The velocity is `Y_t(f(t)) + f'(t) σ_t'` where `Y_t` is the cosine-type
/// Jacobi field along `σ_t(r) = exp_{γ(t)}(r V(t))` starting at `γ'(t)`.
/// With `require_focal_free`, a focal point of `σ_t` before `f(t)` is an error.
pub fn variation_curve_length(
    path: &GeodesicPath,
    profile: &dyn Fn(f64) -> (f64, f64),
    coeffs: &DVector<f64>,
    nodes: usize,
    step: f64,
    require_focal_free: bool,
) -> Result<f64> {
    let spec = path.spec();
    let n = spec.dim();
    if coeffs.len() != n - 1 || (coeffs.norm() - 1.0).abs() > 1e-9 {
        return Err(GeometryError::Precondition("V must be a unit normal field".into()));
    }
    let nodes = nodes.max(2) + nodes % 2;
    let h = path.length() / nodes as f64;
    let mut speeds = Vec::with_capacity(nodes + 1);
    for k in 0..=nodes {
        let t = k as f64 * h;
        let smp = path.sample_at(t.min(path.length()))?;
        let (f, df) = profile(t);
        if f < 0.0 {
            return Err(GeometryError::Precondition(format!("profile negative at t = {t}")));
        }
        let mut v = Vector::zeros(smp.x.len());
        for (i, c) in coeffs.iter().enumerate() {
            v += &smp.frame[1 + i] * *c;
        }
        let y = if f < 1e-14 {
            1.0
        } else {
            let frame = spec.tangent_basis_with(&smp.x, &[&v, &smp.v]);
            let sigma = integrate_geodesic_with_frame(spec, &smp.x, frame, f, step.min(f / 4.0))?;
            let state = integrate_flow(&sigma, &JacobiBoundary::focal_geodesic(n - 1), FrameMode::Normal, sigma.step())?;
            if require_focal_free {
                let rep = detect_singularities(&state, (0.0, f), DETECTION_TOL)?;
                if let Some(e) = rep.events.first() {
                    return Err(GeometryError::Precondition(format!("focal point at r = {} along sigma_{t}", e.s)));
                }
            }
            let last = state.len() - 1;
            state.t_at_index(last).column(0).norm()
        };
        speeds.push((y * y + df * df).sqrt());
    }
    Ok(simpson(&speeds, h))
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveLengthReport {
    pub length_m: f64,
    pub length_n: f64,
    pub result: CheckResult,
}

/// `L(b) ≥ L(b*)` for the curves `exp_{γ(t)}(f(t)V(t))` on `M` and `N`.
pub fn curve_length_comparison(
    m_path: &GeodesicPath,
    n_path: &GeodesicPath,
    profile: &dyn Fn(f64) -> (f64, f64),
    m_coeffs: &DVector<f64>,
    n_coeffs: &DVector<f64>,
    nodes: usize,
) -> Result<CurveLengthReport> {
    if (m_path.length() - n_path.length()).abs() > 1e-12 {
        return Err(GeometryError::Precondition("base geodesics must have equal length".into()));
    }
    let step = m_path.step();
    let length_m = variation_curve_length(m_path, profile, m_coeffs, nodes, step, false)?;
    let length_n = variation_curve_length(n_path, profile, n_coeffs, nodes, step, true)?;
    let mut tr = SlackTracker::default();
    tr.push(n_path.length(), length_m - length_n);
    let result = CheckResult::new("curve-length", format!("{} vs {}", m_path.spec(), n_path.spec()))
        .param("length_m", length_m)
        .param("length_n", length_n)
        .param("nodes", nodes)
        .finish(&tr, -1e-7);
    Ok(CurveLengthReport {
        length_m,
        length_n,
        result,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugateBoundsReport {
    pub first_conjugate: Option<f64>,
    pub first_focal: Option<f64>,
    pub conjugate: CheckResult,
    pub focal: CheckResult,
}

/// First conjugate point in `[π/√H, π/√L]` and first focal point (geodesic
/// boundary) in `[π/(2√H), π/(2√L)]`.
pub fn conjugate_distance_bounds_check(path: &GeodesicPath, h: f64, l: f64) -> Result<ConjugateBoundsReport> {
    if !(l > 0.0 && l <= h) {
        return Err(GeometryError::Precondition(format!("need 0 < L <= H, got L = {l}, H = {h}")));
    }
    let spec = path.spec();
    let (lo, hi) = spec.curvature_range(path, path.samples().len());
    if lo < l - 1e-9 || hi > h + 1e-9 {
        return Err(GeometryError::Precondition(format!(
            "curvature range [{lo}, {hi}] not inside [{l}, {h}]"
        )));
    }
    let upper = PI / l.sqrt();
    if path.length() < upper {
        return Err(GeometryError::Precondition(format!("geodesic shorter than pi/sqrt(L) = {upper}")));
    }
    let d = spec.dim() - 1;
    let step = path.step();
    let label = spec.to_string();
    let run = |boundary: JacobiBoundary, lo_b: f64, hi_b: f64, name: &str| -> Result<(Option<f64>, CheckResult)> {
        let state = integrate_flow(path, &boundary, FrameMode::Normal, step)?;
        let rep = detect_singularities(&state, (0.0, path.length()), DETECTION_TOL)?;
        let first = rep.events.first().map(|e| e.s);
        let mut tr = SlackTracker::default();
        match first {
            Some(s) => tr.push(s, (s - lo_b).min(hi_b - s)),
            None => tr.push(f64::NAN, f64::NAN),
        }
        let res = CheckResult::new(name, &label)
            .param("L", l)
            .param("H", h)
            .param("lower", lo_b)
            .param("upper", hi_b)
            .finish(&tr, -1e-6);
        Ok((first, res))
    };
    let (first_conjugate, conjugate) = run(JacobiBoundary::conjugate(d), PI / h.sqrt(), upper, "conjugate-distance")?;
    let (first_focal, focal) = run(JacobiBoundary::focal_geodesic(d), PI / (2.0 * h.sqrt()), upper / 2.0, "focal-distance")?;
    Ok(ConjugateBoundsReport {
        first_conjugate,
        first_focal,
        conjugate,
        focal,
    })
}

/// Length of `t ↦ exp_p(c(t))` on `[t0, t1]`, where `curve(t) = (c(t), c'(t))`
/// lies in `T_pM`, by Simpson on `nodes` intervals of `‖d exp_p(c)(c')‖`.
pub fn exp_image_curve_length(
    spec: &ManifoldSpec,
    p: &Point,
    curve: &dyn Fn(f64) -> (Vector, Vector),
    range: (f64, f64),
    nodes: usize,
    step: f64,
) -> Result<f64> {
    let nodes = nodes.max(2) + nodes % 2;
    let h = (range.1 - range.0) / nodes as f64;
    let mut speeds = Vec::with_capacity(nodes + 1);
    for k in 0..=nodes {
        let t = range.0 + k as f64 * h;
        let (c, dc) = curve(t);
        if let Some(kc) = spec.constant_curvature().filter(|k| *k > 0.0) {
            if spec.norm(&c) >= PI / kc.sqrt() {
                return Err(GeometryError::Precondition("curve leaves the injectivity ball".into()));
            }
        }
        let img = flow_exp_differential(spec, p.coords(), &c, std::slice::from_ref(&dc), step)?;
        speeds.push(spec.norm(&img[0]));
    }
    Ok(simpson(&speeds, h))
}

#[derive(Debug, Clone, Serialize)]
pub struct MeridianReport {
    pub s: f64,
    pub length: f64,
    /// `(π/√L) sin(s√L)`.
    pub bound: f64,
    pub result: CheckResult,
}

/// Image of the half great circle `θ ↦ s(cos θ v + sin θ w)`, `θ ∈ [0, π]`,
/// against the bound for curvature `≥ L`.
pub fn meridian_length(
    spec: &ManifoldSpec,
    p: &Point,
    v: &Vector,
    w: &Vector,
    s: f64,
    l: f64,
    nodes: usize,
    step: f64,
) -> Result<MeridianReport> {
    if !(l > 0.0) {
        return Err(GeometryError::Precondition("lower curvature bound must be positive".into()));
    }
    let curve = |th: f64| -> (Vector, Vector) {
        let (sn, cs) = th.sin_cos();
        ((v * cs + w * sn) * s, (w * cs - v * sn) * s)
    };
    let length = exp_image_curve_length(spec, p, &curve, (0.0, PI), nodes, step)?;
    let a = l.sqrt();
    let bound = PI / a * (s * a).sin();
    let mut tr = SlackTracker::default();
    tr.push(s, bound - length);
    let result = CheckResult::new("meridian-length", spec.to_string())
        .param("s", s)
        .param("L", l)
        .param("length", length)
        .param("bound", bound)
        .finish(&tr, -1e-9);
    Ok(MeridianReport { s, length, bound, result })
}

/// Hinge at `vertex` with unit directions `u1, u2`: the far ends are
/// `exp(l1 u1)` (the start of the first side) and `exp(l2 u2)`.
#[derive(Debug, Clone)]
pub struct Hinge {
    pub spec: ManifoldSpec,
    pub vertex: Point,
    pub u1: Vector,
    pub u2: Vector,
    pub l1: f64,
    pub l2: f64,
    pub alpha: f64,
    pub far1: Point,
    pub far2: Point,
    /// `Some(true)` when `d(vertex, far1) = l1` is certified, `Some(false)`
    /// when the first side is found not to be minimal, `None` if uncertified.
    pub side1_minimal: Option<bool>,
    /// `d(vertex, far1)` when a shot converged.
    pub side1_distance: Option<f64>,
}

fn angle_between(spec: &ManifoldSpec, a: &Vector, b: &Vector) -> f64 {
    let a = a / spec.norm(a);
    let b = b / spec.norm(b);
    2.0 * spec.norm(&(&a - &b)).atan2(spec.norm(&(&a + &b)))
}

impl Hinge {
    pub fn new(spec: &ManifoldSpec, vertex: &Point, u1: &Vector, u2: &Vector, l1: f64, l2: f64, opts: &ShootingOptions) -> Result<Self> {
        if !(l1 > 0.0 && l2 > 0.0) {
            return Err(GeometryError::Precondition("hinge sides must be positive".into()));
        }
        for u in [u1, u2] {
            let t = spec.tangent(vertex, u.clone())?;
            let nu = spec.norm(t.components());
            if (nu - 1.0).abs() > 1e-9 {
                return Err(GeometryError::NonUnitVelocity(nu));
            }
        }
        let alpha = angle_between(spec, u1, u2);
        if alpha <= 0.0 {
            return Err(GeometryError::Precondition("hinge angle must be positive".into()));
        }
        let far1 = exp_map_with_step(spec, vertex, &(u1 * l1), opts.step)?;
        let far2 = exp_map_with_step(spec, vertex, &(u2 * l2), opts.step)?;
        let d1 = distance_with(spec, vertex, &far1, opts).ok();
        let side1_minimal = match &d1 {
            Some(d) if d.value < l1 - 1e-6 => Some(false),
            Some(d) if d.certified && (d.value - l1).abs() <= 1e-6 => Some(true),
            _ => None,
        };
        Ok(Hinge {
            spec: spec.clone(),
            vertex: vertex.clone(),
            u1: u1.clone(),
            u2: u2.clone(),
            l1,
            l2,
            alpha,
            far1,
            far2,
            side1_minimal,
            side1_distance: d1.map(|d| d.value),
        })
    }

    /// Seeded random hinge with sides uniform in `lengths`.
    pub fn random<R: Rng>(spec: &ManifoldSpec, lengths: (f64, f64), opts: &ShootingOptions, rng: &mut R) -> Result<Self> {
        let x = random_point(spec, rng);
        let u1 = random_unit_tangent(spec, &x, &[], rng);
        let u2 = random_unit_tangent(spec, &x, &[], rng);
        let l1 = rng.gen_range(lengths.0..lengths.1);
        let l2 = rng.gen_range(lengths.0..lengths.1);
        Hinge::new(spec, &Point::new_unchecked(x), &u1, &u2, l1, l2, opts)
    }
}

/// Smallness conditions under which the hinge comparison is derived, for
/// curvature in `[H, Δ]` and margin `ε`.
#[derive(Debug, Clone, Serialize)]
pub struct SmallnessReport {
    pub perimeter: f64,
    pub perimeter_ok: bool,
    pub l2_bound: f64,
    pub l2_ok: bool,
}

impl SmallnessReport {
    pub fn ok(&self) -> bool {
        self.perimeter_ok && self.l2_ok
    }
}

/// Default `ε = 0.05·π/√H`.
pub fn default_epsilon(h: f64) -> f64 {
    if h > 0.0 {
        0.05 * PI / h.sqrt()
    } else {
        0.0
    }
}

pub fn hinge_smallness(h: f64, big_delta: f64, eps: f64, l1: f64, l2: f64, far_distance: f64) -> SmallnessReport {
    let perimeter = l1 + l2 + far_distance;
    let perimeter_ok = h <= 0.0 || perimeter <= 2.0 * PI / h.sqrt() - 4.0 * eps;
    let quarter = if big_delta > 0.0 { PI / (2.0 * big_delta.sqrt()) } else { f64::INFINITY };
    let l2_bound = if h <= 0.0 {
        quarter
    } else {
        let a = h.sqrt();
        let middle = if big_delta > 0.0 {
            (a * eps).sin() / a * (PI * a / (2.0 * big_delta.sqrt())).sin()
        } else {
            f64::INFINITY
        };
        eps.min(middle).min(quarter)
    };
    SmallnessReport {
        perimeter,
        perimeter_ok,
        l2_bound,
        l2_ok: l2 <= l2_bound,
    }
}

/// Sub-hinges of the subdivision of the second side into `parts` pieces:
/// for each `k`, the hinge at `γ₂(k l₂/N)` formed by the segment to
/// `γ₂((k+1) l₂/N)` and the geodesic back to the first far end.
#[derive(Debug, Clone, Serialize)]
pub struct SubdivisionReport {
    pub parts: usize,
    pub pieces: Vec<SmallnessReport>,
    pub all_small: bool,
}

pub fn subdivision_check(hinge: &Hinge, h: f64, big_delta: f64, eps: f64, parts: usize, opts: &ShootingOptions) -> Result<SubdivisionReport> {
    if parts == 0 {
        return Err(GeometryError::Precondition("need at least one part".into()));
    }
    let spec = &hinge.spec;
    let piece = hinge.l2 / parts as f64;
    let mut pieces = Vec::with_capacity(parts);
    let point_at = |k: usize| exp_map_with_step(spec, &hinge.vertex, &(&hinge.u2 * (k as f64 * piece)), opts.step);
    let mut prev = distance_with(spec, &hinge.far1, &point_at(0)?, opts)?.value;
    for k in 0..parts {
        let next = distance_with(spec, &hinge.far1, &point_at(k + 1)?, opts)?.value;
        pieces.push(hinge_smallness(h, big_delta, eps, prev, piece, next));
        prev = next;
    }
    let all_small = pieces.iter().all(|p| p.ok());
    Ok(SubdivisionReport { parts, pieces, all_small })
}

/// Far-endpoint comparison `d(γ₁(0), γ₂(l₂)) ≤ d̄` against the model hinge of
/// curvature `h`. The literal reading with both sides evaluated at 0 is
/// recorded as the parameter `literal_slack`.
pub fn toponogov_hinge_check(hinge: &Hinge, h: f64, opts: &ShootingOptions) -> Result<CheckResult> {
    if h > 0.0 && hinge.l2 > PI / h.sqrt() {
        return Err(GeometryError::Domain(format!("l2 = {} exceeds pi/sqrt(H)", hinge.l2)));
    }
    let model = model_hinge_distance(h, hinge.l1, hinge.l2.min(PI / h.max(1e-300).sqrt()), hinge.alpha)?;
    let spec = &hinge.spec;
    let mut res = CheckResult::new("toponogov-hinge", spec.to_string())
        .param("l1", hinge.l1)
        .param("l2", hinge.l2)
        .param("alpha", hinge.alpha)
        .param("H", h)
        .param("model", model);
    let measured = match distance_with(spec, &hinge.far1, &hinge.far2, opts) {
        Ok(d) => {
            if !d.certified {
                res.flag("uncertified-distance");
            }
            d.value
        }
        Err(GeometryError::NoCertifiedMinimizer { best_upper_bound }) => {
            res.flag("no-converged-shot");
            best_upper_bound
        }
        Err(e) => return Err(e),
    };
    match hinge.side1_minimal {
        Some(true) => {}
        Some(false) => res.flag("side-not-minimal"),
        None => res.flag("uncertified-minimality"),
    }
    let literal = hinge.side1_distance.map_or(f64::NAN, |d| hinge.l1 - d);
    res = res.param("measured", measured).param("literal_slack", literal);
    let mut tr = SlackTracker::default();
    tr.push(hinge.alpha, model - measured);
    Ok(res.finish(&tr, -1e-6))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub result: CheckResult,
    pub conditional: usize,
    /// Smallest slack over hinges without conditional flags.
    pub certified_min_slack: f64,
    /// Per-hinge slack in sampling order.
    pub slacks: Vec<f64>,
    /// Per-hinge literal-reading slack.
    pub literal_slacks: Vec<f64>,
}

/// Seeded random hinges with sides in `lengths`, compared with curvature `h`.
pub fn toponogov_sweep(spec: &ManifoldSpec, h: f64, count: usize, lengths: (f64, f64), seed: u64, opts: &ShootingOptions) -> Result<SweepReport> {
    let mut rng = seeded_rng(seed);
    let mut all = SlackTracker::default();
    let mut certified = SlackTracker::default();
    let mut slacks = Vec::with_capacity(count);
    let mut literal_slacks = Vec::with_capacity(count);
    let mut conditional = 0;
    let mut out = CheckResult::new("toponogov-sweep", spec.to_string())
        .param("H", h)
        .param("hinges", count)
        .param("seed", seed);
    for k in 0..count {
        let hinge = Hinge::random(spec, lengths, opts, &mut rng)?;
        let r = toponogov_hinge_check(&hinge, h, opts)?;
        all.push(k as f64, r.slack_min);
        slacks.push(r.slack_min);
        literal_slacks.push(r.params.get("literal_slack").and_then(|s| s.parse().ok()).unwrap_or(f64::NAN));
        if r.is_conditional() {
            conditional += 1;
            for f in &r.conditional_flags {
                out.flag(f.clone());
            }
        } else {
            certified.push(k as f64, r.slack_min);
        }
    }
    Ok(SweepReport {
        result: out.finish(&all, -1e-6),
        conditional,
        certified_min_slack: certified.min,
        slacks,
        literal_slacks,
    })
}

/// Triangle on three vertices; side `i` is opposite vertex `i` and
/// `angles[i]` is the angle at vertex `i`.
#[derive(Debug, Clone)]
pub struct GeodesicTriangle {
    pub spec: ManifoldSpec,
    pub vertices: [Point; 3],
    pub lengths: [f64; 3],
    pub angles: [f64; 3],
    pub minimal: [bool; 3],
    /// Largest `|exp(log) − target|` over the six shot sides.
    pub closure: f64,
}

impl GeodesicTriangle {
    pub fn from_vertices(spec: &ManifoldSpec, vertices: [Point; 3], opts: &ShootingOptions) -> Result<Self> {
        let mut logs: Vec<Vec<Vector>> = vec![Vec::new(); 3];
        let mut lengths = [0.0; 3];
        let mut minimal = [true; 3];
        let mut closure: f64 = 0.0;
        for i in 0..3 {
            for j in [(i + 1) % 3, (i + 2) % 3] {
                let d = distance_with(spec, &vertices[i], &vertices[j], opts)?;
                if d.value == 0.0 {
                    return Err(GeometryError::Domain("coincident vertices".into()));
                }
                let end = exp_map_with_step(spec, &vertices[i], &d.log, opts.step)?;
                closure = closure.max((end.coords() - vertices[j].coords()).norm());
                let opposite = 3 - i - j;
                lengths[opposite] = d.value;
                minimal[opposite] &= d.certified;
                logs[i].push(d.log);
            }
        }
        if closure > 1e-9 {
            return Err(GeometryError::Domain(format!("sides do not close up: {closure:e}")));
        }
        let angles = [0, 1, 2].map(|i| angle_between(spec, &logs[i][0], &logs[i][1]));
        Ok(GeodesicTriangle {
            spec: spec.clone(),
            vertices,
            lengths,
            angles,
            minimal,
            closure,
        })
    }

    pub fn perimeter(&self) -> f64 {
        self.lengths.iter().sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TriangleReport {
    pub model: ModelTriangle,
    /// `min (α_i − ᾱ_i)`.
    pub angles: CheckResult,
    /// `2π/√H − P` when `H > 0`.
    pub perimeter: Option<CheckResult>,
}

pub fn triangle_comparison_check(tri: &GeodesicTriangle, h: f64) -> Result<TriangleReport> {
    let [l1, l2, l3] = tri.lengths;
    let model = model_triangle_angles(h, l1, l2, l3)?;
    let label = tri.spec.to_string();
    let mut tr = SlackTracker::default();
    for i in 0..3 {
        tr.push(i as f64, tri.angles[i] - model.angles[i]);
    }
    let mut angles = CheckResult::new("triangle-angles", &label).param("H", h);
    if !tri.minimal.iter().all(|m| *m) {
        angles.flag("uncertified-minimality");
    }
    if !model.unique {
        angles.flag("model-not-unique");
    }
    let angles = angles.finish(&tr, -1e-6);
    let perimeter = (h > 0.0).then(|| {
        let mut t = SlackTracker::default();
        t.push(tri.perimeter(), 2.0 * PI / h.sqrt() - tri.perimeter());
        CheckResult::new("triangle-perimeter", &label).param("H", h).finish(&t, -1e-9)
    });
    Ok(TriangleReport { model, angles, perimeter })
}

/// Random triangle with vertices `exp_x(r_i u_i)` around a random point.
pub fn random_triangle<R: Rng>(spec: &ManifoldSpec, radius: f64, opts: &ShootingOptions, rng: &mut R) -> Result<GeodesicTriangle> {
    let x = random_point(spec, rng);
    let p = Point::new_unchecked(x.clone());
    let verts: Vec<Point> = (0..3)
        .map(|_| {
            let u = random_unit_tangent(spec, &x, &[], rng);
            let r = rng.gen_range(0.2 * radius..radius);
            exp_map_with_step(spec, &p, &(u * r), opts.step)
        })
        .collect::<Result<_>>()?;
    let [a, b, c]: [Point; 3] = verts.try_into().expect("three vertices");
    GeodesicTriangle::from_vertices(spec, [a, b, c], opts)
}

#[derive(Debug, Clone, Serialize)]
pub struct PinchConstants {
    /// Root of `sin(π√h) = √h/2` in `(0.5, 1)`.
    pub h_rauch: f64,
    pub h_rauch_residual: f64,
    /// Root of `sin(√(πh)) = √h/2` in `(1, 3)`.
    pub h_alternative: f64,
    pub h_alternative_residual: f64,
    pub h_toponogov: f64,
}

pub fn pinch_constants() -> PinchConstants {
    let g = |h: f64| (PI * h.sqrt()).sin() - 0.5 * h.sqrt();
    let g_alt = |h: f64| (PI * h).sqrt().sin() - 0.5 * h.sqrt();
    let h_rauch = bisect(g, 0.5, 1.0, 1e-15).expect("sign change on (0.5, 1)");
    let h_alternative = bisect(g_alt, 1.0, 3.0, 1e-15).expect("sign change on (1, 3)");
    PinchConstants {
        h_rauch,
        h_rauch_residual: g(h_rauch).abs(),
        h_alternative,
        h_alternative_residual: g_alt(h_alternative).abs(),
        h_toponogov: 4.0 / 9.0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiameterProbeReport {
    pub delta: f64,
    pub diameter: f64,
    /// `max |L(c) − π/√δ|` over the variation curves `exp_p(t(cos s v + sin s W))`.
    pub length_error: f64,
    /// `max d(c(π/√δ), q)` with `q` the antipode.
    pub endpoint_error: f64,
    /// `max |K − δ|` on planes tangent to the variation surface.
    pub curvature_error: f64,
    /// `max |I(sin(√δ t) W, sin(√δ t) W)|` on `[0, π/√δ]`.
    pub index_form_error: f64,
    /// `(s, L(Ω(s,·)) − π/√δ)` for `Ω(s,t) = exp_{γ(t)}(s sin(√δ t)/√δ W(t))`.
    pub omega_excess: Vec<(f64, f64)>,
    pub pass: bool,
}

/// Rigidity witnesses at maximal diameter on `Sphere(n, δ)`.
pub fn maximal_diameter_probe(n: usize, delta: f64, w_samples: usize, seed: u64, step: f64) -> Result<DiameterProbeReport> {
    let spec = ManifoldSpec::sphere(n, delta)?;
    let a = delta.sqrt();
    let diam = PI / a;
    let mut rng = seeded_rng(seed);
    let x = random_point(&spec, &mut rng);
    let v = random_unit_tangent(&spec, &x, &[], &mut rng);
    let q = -&x;
    let base_frame = spec.tangent_basis(&x, Some(&v));
    let base = integrate_geodesic_with_frame(&spec, &x, base_frame.clone(), diam, step)?;
    let conj = JacobiBoundary::conjugate(n - 1);
    let mut length_error: f64 = 0.0;
    let mut endpoint_error: f64 = 0.0;
    let mut curvature_error: f64 = 0.0;
    let mut index_form_error: f64 = 0.0;
    let mut omega_excess = Vec::new();
    for k in 0..w_samples {
        let w = random_unit_tangent(&spec, &x, &[&v], &mut rng);
        for s in [0.3, 0.9, 1.4] {
            let (sn, cs) = f64::sin_cos(s);
            let u = &v * cs + &w * sn;
            let du = &w * cs - &v * sn;
            let frame = spec.tangent_basis_with(&x, &[&u, &du]);
            let c = integrate_geodesic_with_frame(&spec, &x, frame, diam, step)?;
            let speeds: Vec<f64> = c.samples().iter().map(|smp| smp.v.norm()).collect();
            length_error = length_error.max((simpson(&speeds, c.step()) - diam).abs());
            endpoint_error = endpoint_error.max((&c.end().x - &q).norm());
            for smp in c.samples().iter().step_by((c.samples().len() / 16).max(1)) {
                let m = spec.embedded_curvature_matrix(smp.x.as_slice(), smp.v.as_slice(), &[smp.frame[1].as_slice()]);
                curvature_error = curvature_error.max((m[(0, 0)] - delta).abs());
            }
        }
        let coeffs = DVector::from_iterator(n - 1, base_frame[1..].iter().map(|f| spec.inner(&w, f)));
        let cw = coeffs.clone();
        let field = ClosureField {
            value: move |t: f64| &cw * ((a * t).sin() / a),
            derivative: move |t: f64| &coeffs * (a * t).cos(),
        };
        let ival = index_form(&base, &field, &conj, FrameMode::Normal, diam)?;
        index_form_error = index_form_error.max(ival.abs());
        if k == 0 {
            let wc = DVector::from_iterator(n - 1, base_frame[1..].iter().map(|f| spec.inner(&w, f)));
            for s in [0.25, 0.5, 1.0] {
                let profile = move |t: f64| (s * (a * t).sin() / a, s * (a * t).cos());
                let len = variation_curve_length(&base, &profile, &wc, 256, step, false)?;
                omega_excess.push((s, len - diam));
            }
        }
    }
    let pass = length_error <= 1e-6 && endpoint_error <= 1e-6 && curvature_error <= 1e-7 && index_form_error <= 1e-7;
    Ok(DiameterProbeReport {
        delta,
        diameter: diam,
        length_error,
        endpoint_error,
        curvature_error,
        index_form_error,
        omega_excess,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::integrate_geodesic;
    use approx::assert_abs_diff_eq;

    fn v(c: &[f64]) -> Vector {
        Vector::from_column_slice(c)
    }

    fn path_on(spec: &ManifoldSpec, x: &[f64], u: &[f64], len: f64, step: f64) -> GeodesicPath {
        let p = spec.point(v(x)).unwrap();
        let t = spec.tangent(&p, v(u)).unwrap();
        integrate_geodesic(spec, &p, &t, len, step).unwrap()
    }

    #[test]
    fn comparison_function_examples() {
        assert_abs_diff_eq!(comparison_value(&ComparisonFunction::sine(1.0), PI / 2.0), 1.0, epsilon = 1e-15);
        assert_eq!(comparison_value(&ComparisonFunction::sine(0.0), 0.7), 0.7);
        // oracle: RK4 on f'' = f from (1, 0)
        let mut y = (1.0f64, 0.0f64);
        let h = 1e-3;
        for _ in 0..1000 {
            let f = |y: (f64, f64)| (y.1, y.0);
            let k1 = f(y);
            let k2 = f((y.0 + 0.5 * h * k1.0, y.1 + 0.5 * h * k1.1));
            let k3 = f((y.0 + 0.5 * h * k2.0, y.1 + 0.5 * h * k2.1));
            let k4 = f((y.0 + h * k3.0, y.1 + h * k3.1));
            y.0 += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            y.1 += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        let c = comparison_value(&ComparisonFunction::cosine(-1.0), 1.0);
        assert_abs_diff_eq!(c, y.0, epsilon = 1e-8);
        assert_abs_diff_eq!(c, 1.5430806, epsilon = 1e-7);
        for f in [ComparisonFunction::sine(2.0), ComparisonFunction::cosine(-0.5), ComparisonFunction::sine(0.0)] {
            assert!(f.ode_residual(0.8, 1e-4) < 1e-6);
        }
    }

    #[test]
    fn hinge_distance_examples() {
        assert_abs_diff_eq!(model_hinge_distance(0.0, 3.0, 4.0, PI / 2.0).unwrap(), 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(model_hinge_distance(1.0, PI / 2.0, PI / 2.0, PI / 2.0).unwrap(), PI / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(model_hinge_distance(-1.0, 0.3, 0.4, PI).unwrap(), 0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(model_hinge_distance(1.0, 1.0, 1.5, PI).unwrap(), 2.5, epsilon = 1e-14);
        // past the antipode a straight hinge folds back: 2π − (l1 + l2) ≤ π
        assert_abs_diff_eq!(model_hinge_distance(1.0, 2.0, 2.0, PI).unwrap(), 2.0 * PI - 4.0, epsilon = 1e-14);
        assert!(model_hinge_distance(1.0, 4.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn triangle_angle_examples() {
        let t = model_triangle_angles(0.0, 3.0, 4.0, 5.0).unwrap();
        assert_abs_diff_eq!(t.angles[2], PI / 2.0, epsilon = 1e-14);
        let t = model_triangle_angles(1.0, PI / 2.0, PI / 2.0, PI / 2.0).unwrap();
        for a in t.angles {
            assert_abs_diff_eq!(a, PI / 2.0, epsilon = 1e-14);
        }
        let t = model_triangle_angles(0.0, 1.0, 2.0, 3.0).unwrap();
        assert_abs_diff_eq!(t.angles[2], PI, epsilon = 1e-12);
        assert_abs_diff_eq!(t.angles[0], 0.0, epsilon = 1e-12);
        assert!(model_triangle_angles(0.0, 1.0, 1.0, 3.0).is_err());
        assert!(!model_triangle_angles(1.0, 0.5, PI, PI - 0.5).unwrap().unique);
    }

    #[test]
    fn weak_rauch_on_sphere_is_equality() {
        let spec = ManifoldSpec::sphere(2, 1.0).unwrap();
        let p = spec.point(v(&[0.0, 0.0, 1.0])).unwrap();
        let t = spec.tangent(&p, v(&[1.0, 0.0, 0.0])).unwrap();
        let rep = weak_rauch_check(&spec, &p, &t, 3.0, 1e-3).unwrap();
        assert!(rep.sandwich.pass && rep.swapped.pass);
        assert!(rep.equality_gap < 1e-8, "{}", rep.equality_gap);
        let r = exp_differential_ratio(&spec, &p, &t, &v(&[0.0, 2.0, 0.0]), 2.0, 1e-3).unwrap();
        assert_abs_diff_eq!(r, 2.0f64.sin() / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn rauch_closed_forms() {
        let flat = ManifoldSpec::euclidean(2).unwrap();
        let sph = ManifoldSpec::sphere(2, 1.0).unwrap();
        let m = path_on(&flat, &[0.0, 0.0], &[1.0, 0.0], 3.0, 1e-3);
        let n = path_on(&sph, &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], 3.0, 1e-3);
        let dm = JacobiData { value: v(&[0.0, 0.0]), derivative: v(&[0.0, 1.0]) };
        let dn = JacobiData { value: v(&[0.0, 0.0, 0.0]), derivative: v(&[0.0, 1.0, 0.0]) };
        let rep = rauch_compare(&m, &n, &dm, &dn).unwrap();
        assert!(rep.result.pass);
        for (t, a, b) in &rep.series {
            assert_abs_diff_eq!(*a, *t, epsilon = 1e-12);
            assert_abs_diff_eq!(*b, t.sin(), epsilon = 1e-10);
        }
        assert!(rauch_compare(&n, &m, &dn, &dm).is_err());
    }

    #[test]
    fn berger_sphere_pair() {
        let big = ManifoldSpec::sphere(2, 0.25).unwrap();
        let sph = ManifoldSpec::sphere(2, 1.0).unwrap();
        let m = path_on(&big, &[0.0, 0.0, 2.0], &[1.0, 0.0, 0.0], PI / 2.0, 1e-3);
        let n = path_on(&sph, &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], PI / 2.0, 1e-3);
        let dm = JacobiData { value: v(&[0.0, 1.0, 0.0]), derivative: v(&[0.0, 0.0, 0.0]) };
        let dn = dm.clone();
        let rep = berger_compare(&m, &n, &dm, &dn).unwrap();
        assert!(rep.result.pass, "{:?}", rep.result);
        let (t, a, b) = rep.series[700];
        assert_abs_diff_eq!(a, (t / 2.0).cos(), epsilon = 1e-10);
        assert_abs_diff_eq!(b, t.cos(), epsilon = 1e-10);
    }

    #[test]
    fn tube_length_on_sphere() {
        let flat = ManifoldSpec::euclidean(2).unwrap();
        let sph = ManifoldSpec::sphere(2, 1.0).unwrap();
        let m = path_on(&flat, &[0.0, 0.0], &[1.0, 0.0], 1.0, 1e-3);
        let n = path_on(&sph, &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], 1.0, 1e-3);
        let one = DVector::from_vec(vec![1.0]);
        let rep = curve_length_comparison(&m, &n, &|_| (0.3, 0.0), &one, &one, 20).unwrap();
        assert_abs_diff_eq!(rep.length_m, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.length_n, 0.3f64.cos(), epsilon = 1e-9);
        assert!(rep.result.pass);
    }

    #[test]
    fn conjugate_bounds_on_spheres() {
        let sph = ManifoldSpec::sphere(2, 1.0).unwrap();
        let path = path_on(&sph, &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], PI + 0.1, 1e-3);
        let rep = conjugate_distance_bounds_check(&path, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(rep.first_conjugate.unwrap(), PI, epsilon = 1e-6);
        assert_abs_diff_eq!(rep.first_focal.unwrap(), PI / 2.0, epsilon = 1e-6);
        assert!(rep.conjugate.pass && rep.focal.pass);
    }

    #[test]
    fn meridian_on_sphere() {
        let spec = ManifoldSpec::sphere(2, 1.0).unwrap();
        let p = spec.point(v(&[0.0, 0.0, 1.0])).unwrap();
        let rep = meridian_length(&spec, &p, &v(&[1.0, 0.0, 0.0]), &v(&[0.0, 1.0, 0.0]), 0.8, 1.0, 16, 1e-3).unwrap();
        assert_abs_diff_eq!(rep.length, PI * 0.8f64.sin(), epsilon = 1e-9);
    }

    #[test]
    fn hinge_on_sphere_saturates() {
        let spec = ManifoldSpec::sphere(2, 1.0).unwrap();
        let opts = ShootingOptions::default();
        let mut rng = seeded_rng(2);
        for _ in 0..20 {
            let h = Hinge::random(&spec, (0.05, PI / 2.0), &opts, &mut rng).unwrap();
            let r = toponogov_hinge_check(&h, 1.0, &opts).unwrap();
            assert!(r.slack_min.abs() < 1e-9, "{r:?}");
            assert!(!r.is_conditional());
            let r = toponogov_hinge_check(&h, 0.5, &opts).unwrap();
            assert!(r.slack_min > 0.0);
        }
    }

    #[test]
    fn octant_triangle() {
        let spec = ManifoldSpec::sphere(2, 1.0).unwrap();
        let verts = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].map(|c| spec.point(v(&c)).unwrap());
        let tri = GeodesicTriangle::from_vertices(&spec, verts, &ShootingOptions::default()).unwrap();
        let rep = triangle_comparison_check(&tri, 1.0).unwrap();
        assert!(rep.angles.slack_min.abs() < 1e-12);
        assert_abs_diff_eq!(rep.perimeter.unwrap().slack_min, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn collinear_triangle() {
        let spec = ManifoldSpec::sphere(2, 1.0).unwrap();
        let verts = [0.0f64, 0.4, 1.0].map(|a| spec.point(v(&[a.cos(), a.sin(), 0.0])).unwrap());
        let tri = GeodesicTriangle::from_vertices(&spec, verts, &ShootingOptions::default()).unwrap();
        let rep = triangle_comparison_check(&tri, 1.0).unwrap();
        assert_abs_diff_eq!(tri.angles[1], PI, epsilon = 1e-6);
        assert_abs_diff_eq!(rep.model.angles[1], PI, epsilon = 1e-6);
        assert_abs_diff_eq!(rep.model.angles[0], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn pinching_roots() {
        let c = pinch_constants();
        assert_eq!(c.h_toponogov, 4.0 / 9.0);
        assert!(c.h_rauch_residual <= 1e-12 && c.h_alternative_residual <= 1e-12);
        assert!(c.h_rauch > 0.70 && c.h_rauch < 0.78);
        assert_abs_diff_eq!(c.h_rauch, 0.7374280164014416, epsilon = 1e-12);
        assert_abs_diff_eq!(c.h_alternative, 1.8311200857430692, epsilon = 1e-12);
    }

    #[test]
    fn smallness_thresholds() {
        let s = hinge_smallness(1.0, 1.0, 0.1, 0.5, 0.05, 0.5);
        assert!(s.ok());
        assert_abs_diff_eq!(s.l2_bound, 0.1f64.sin(), epsilon = 1e-15);
        assert!(!hinge_smallness(1.0, 1.0, 0.1, 3.0, 0.05, 3.0).perimeter_ok);
        assert!(!hinge_smallness(-1.0, 4.0, 0.0, 1.0, 1.0, 1.0).l2_ok);
    }
}
