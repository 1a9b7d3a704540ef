//! Geodesics, parallel frames, the exponential map and distances.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{GeometryError, Result};
use crate::linalg::lstsq;
use crate::manifold::{Geometry, ManifoldSpec, Point, TangentVector, Vector};
use crate::ode::{step_grid, FlowLayout, JointSystem, Rk4Work};

/// Default integration step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// One sample of an integrated geodesic. `frame[0]` equals `v`.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub s: f64,
    pub x: Vector,
    pub v: Vector,
    pub frame: Vec<Vector>,
}

/// Unit-speed geodesic sampled on a uniform grid, with a parallel frame.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    spec: ManifoldSpec,
    samples: Vec<PathSample>,
    step: f64,
}

/// Initial data for the flow part of a joint integration.
pub(crate) struct FlowInit {
    pub layout: FlowLayout,
    pub t0: DMatrix<f64>,
    pub dt0: DMatrix<f64>,
}

pub(crate) struct JointRun {
    pub samples: Vec<PathSample>,
    pub flow: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    pub step: f64,
}

pub(crate) fn pack(sys: &JointSystem, x: &Vector, frame: &[Vector], flow: Option<(&DMatrix<f64>, &DMatrix<f64>)>) -> Vec<f64> {
    let mut y = vec![0.0; sys.len()];
    let m = sys.m;
    y[..m].copy_from_slice(x.as_slice());
    for (i, e) in frame.iter().enumerate() {
        y[m + i * m..m + (i + 1) * m].copy_from_slice(e.as_slice());
    }
    if let Some((t, dt)) = flow {
        y[sys.t_range()].copy_from_slice(t.as_slice());
        y[sys.dt_range()].copy_from_slice(dt.as_slice());
    }
    y
}

pub(crate) fn unpack_sample(sys: &JointSystem, y: &[f64], s: f64) -> PathSample {
    let m = sys.m;
    let frame: Vec<Vector> = (0..sys.nf)
        .map(|i| Vector::from_column_slice(&y[m + i * m..m + (i + 1) * m]))
        .collect();
    PathSample {
        s,
        x: Vector::from_column_slice(&y[..m]),
        v: frame[0].clone(),
        frame,
    }
}

pub(crate) fn unpack_flow(sys: &JointSystem, y: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = sys.flow.map_or(0, |f| f.d);
    (
        DMatrix::from_column_slice(d, d, &y[sys.t_range()]),
        DMatrix::from_column_slice(d, d, &y[sys.dt_range()]),
    )
}

pub(crate) fn integrate_joint(
    spec: &ManifoldSpec,
    x0: &Vector,
    frame0: &[Vector],
    length: f64,
    step: f64,
    flow: Option<FlowInit>,
) -> Result<JointRun> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(GeometryError::Domain(format!("step must be > 0, got {step}")));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(GeometryError::Domain(format!("length must be > 0, got {length}")));
    }
    let (nsteps, h) = step_grid(length, step);
    let sys = JointSystem::new(spec, flow.as_ref().map(|f| f.layout));
    let mut y = pack(&sys, x0, frame0, flow.as_ref().map(|f| (&f.t0, &f.dt0)));
    let mut work = Rk4Work::default();
    let mut samples = Vec::with_capacity(nsteps + 1);
    let mut flows = Vec::new();
    samples.push(unpack_sample(&sys, &y, 0.0));
    if flow.is_some() {
        flows.reserve(nsteps + 1);
        flows.push(unpack_flow(&sys, &y));
    }
    for i in 1..=nsteps {
        sys.rk4(&mut y, h, &mut work);
        sys.retract(&mut y);
        let s = if i == nsteps { length } else { i as f64 * h };
        samples.push(unpack_sample(&sys, &y, s));
        if flow.is_some() {
            flows.push(unpack_flow(&sys, &y));
        }
    }
    Ok(JointRun {
        samples,
        flow: flows,
        step: h,
    })
}

impl GeodesicPath {
    pub(crate) fn from_parts(spec: ManifoldSpec, samples: Vec<PathSample>, step: f64) -> Self {
        GeodesicPath { spec, samples, step }
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    /// Actual grid spacing (the requested step rounded to divide the length).
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn length(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.s)
    }

    pub fn start(&self) -> &PathSample {
        &self.samples[0]
    }

    pub fn end(&self) -> &PathSample {
        self.samples.last().expect("non-empty path")
    }

    /// Index `i` with `s_i ≤ s < s_{i+1}` and the offset `s − s_i`.
    pub fn locate(&self, s: f64) -> Result<(usize, f64)> {
        let len = self.length();
        let slack = 1e-12 * len.max(1.0);
        if !(s >= -slack && s <= len + slack) {
            return Err(GeometryError::OutOfRange {
                value: s,
                lo: 0.0,
                hi: len,
            });
        }
        let s = s.clamp(0.0, len);
        let last = self.samples.len() - 1;
        let mut i = ((s / self.step).floor() as usize).min(last);
        while i > 0 && self.samples[i].s > s {
            i -= 1;
        }
        while i < last && self.samples[i + 1].s <= s {
            i += 1;
        }
        Ok((i, s - self.samples[i].s))
    }

    /// Point, velocity and frame at an arbitrary parameter.
    pub fn sample_at(&self, s: f64) -> Result<PathSample> {
        let (i, ds) = self.locate(s)?;
        let base = &self.samples[i];
        if ds <= 0.0 {
            return Ok(base.clone());
        }
        let sys = JointSystem::new(&self.spec, None);
        let mut y = pack(&sys, &base.x, &base.frame, None);
        let mut work = Rk4Work::default();
        sys.rk4(&mut y, ds, &mut work);
        sys.retract(&mut y);
        Ok(unpack_sample(&sys, &y, base.s + ds))
    }

    /// The same geodesic run backwards from parameter `s0`, with frame
    /// `(−f_0, f_1, …)`, over the given length.
    pub fn reversed_from(&self, s0: f64, length: f64, step: f64) -> Result<GeodesicPath> {
        let smp = self.sample_at(s0)?;
        let mut frame = smp.frame.clone();
        frame[0] = -&frame[0];
        integrate_geodesic_with_frame(&self.spec, &smp.x, frame, length, step)
    }

    /// Largest deviation of `‖v‖` from one.
    pub fn speed_drift(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (self.spec.norm(&s.v) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of the frame Gram matrix from the identity.
    pub fn frame_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for smp in &self.samples {
            for (i, a) in smp.frame.iter().enumerate() {
                for (j, b) in smp.frame.iter().enumerate() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((self.spec.inner(a, b) - target).abs());
                }
            }
        }
        worst
    }

    /// CSV with columns `s, x_1..x_m, v_1..v_m`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let m = self.spec.ambient_dim();
        let mut header = vec!["s".to_string()];
        header.extend((1..=m).map(|k| format!("x_{k}")));
        header.extend((1..=m).map(|k| format!("v_{k}")));
        writeln!(w, "{}", header.join(","))?;
        for smp in &self.samples {
            let mut row = vec![format!("{:?}", smp.s)];
            row.extend(smp.x.iter().map(|c| format!("{c:?}")));
            row.extend(smp.v.iter().map(|c| format!("{c:?}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_unit(spec: &ManifoldSpec, v: &Vector) -> Result<()> {
    let nv = spec.norm(v);
    if (nv - 1.0).abs() > 1e-9 {
        return Err(GeometryError::NonUnitVelocity(nv));
    }
    Ok(())
}

/// Integrates the unit-speed geodesic with the given initial data.
pub fn integrate_geodesic(
    spec: &ManifoldSpec,
    x0: &Point,
    v0: &TangentVector,
    length: f64,
    step: f64,
) -> Result<GeodesicPath> {
    let v = spec.tangent(x0, v0.components().clone())?.into_components();
    check_unit(spec, &v)?;
    let frame = spec.tangent_basis(x0.coords(), Some(&v));
    integrate_geodesic_with_frame(spec, x0.coords(), frame, length, step)
}

/// Like [`integrate_geodesic`] with an explicit orthonormal frame whose first
/// vector is the initial velocity.
pub fn integrate_geodesic_with_frame(
    spec: &ManifoldSpec,
    x0: &Vector,
    frame: Vec<Vector>,
    length: f64,
    step: f64,
) -> Result<GeodesicPath> {
    if frame.len() != spec.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: spec.dim(),
            got: frame.len(),
        });
    }
    check_unit(spec, &frame[0])?;
    let run = integrate_joint(spec, x0, &frame, length, step, None)?;
    Ok(GeodesicPath::from_parts(spec.clone(), run.samples, run.step))
}

/// Parallel transport of a tangent vector at the path start to parameter `to_s`.
pub fn parallel_transport(path: &GeodesicPath, u: &TangentVector, to_s: f64) -> Result<TangentVector> {
    let spec = path.spec();
    let start = path.start();
    if (u.base().coords() - &start.x).amax() > 1e-9 {
        return Err(GeometryError::Precondition("vector is not based at the path start".into()));
    }
    let target = path.sample_at(to_s)?;
    let mut out = Vector::zeros(spec.ambient_dim());
    for (f0, f1) in start.frame.iter().zip(&target.frame) {
        out += f1 * spec.inner(u.components(), f0);
    }
    Ok(TangentVector::new_unchecked(Point::new_unchecked(target.x), out))
}

/// Closed-form data for constant nonzero curvature on a level set.
fn constant_curvature_level(spec: &ManifoldSpec) -> Option<f64> {
    match (spec.geometry(), spec.constant_curvature()) {
        (Geometry::LevelSet { .. }, Some(k)) if k != 0.0 => Some(k),
        _ => None,
    }
}

/// `(c, s, c', s')` with `σ(r) = c x + s u` the geodesic of curvature `k`.
fn trig(k: f64, r: f64) -> (f64, f64, f64, f64) {
    if k > 0.0 {
        let a = k.sqrt();
        ((a * r).cos(), (a * r).sin() / a, -a * (a * r).sin(), (a * r).cos())
    } else {
        let a = (-k).sqrt();
        ((a * r).cosh(), (a * r).sinh() / a, a * (a * r).sinh(), (a * r).cosh())
    }
}

/// `exp_x(v)` with the default integration step.
pub fn exp_map(spec: &ManifoldSpec, x: &Point, v: &TangentVector) -> Result<Point> {
    exp_map_with_step(spec, x, v.components(), DEFAULT_STEP)
}

pub fn exp_map_with_step(spec: &ManifoldSpec, x: &Point, v: &Vector, step: f64) -> Result<Point> {
    let r = spec.norm(v);
    if r == 0.0 {
        return Ok(x.clone());
    }
    match spec.geometry() {
        Geometry::Flat { .. } => Ok(Point::new_unchecked(x.coords() + v)),
        Geometry::LevelSet { .. } => {
            let u = v / r;
            if let Some(k) = constant_curvature_level(spec) {
                let (c, s, _, _) = trig(k, r);
                return Ok(Point::new_unchecked(x.coords() * c + u * s));
            }
            let frame = spec.tangent_basis(x.coords(), Some(&u));
            let run = integrate_joint(spec, x.coords(), &frame, r, step, None)?;
            Ok(Point::new_unchecked(run.samples.last().unwrap().x.clone()))
        }
    }
}

/// `exp_x(ξ)` together with its differential, represented on a fixed
/// orthonormal basis of `T_x M`.
#[derive(Debug, Clone)]
pub struct ExpDifferential {
    pub point: Vector,
    /// Orthonormal basis of the tangent space at the base point.
    pub basis: Vec<Vector>,
    /// `d exp_x(ξ)` applied to each basis vector.
    pub images: Vec<Vector>,
}

impl ExpDifferential {
    pub fn apply(&self, spec: &ManifoldSpec, eta: &Vector) -> Vector {
        let mut out = Vector::zeros(self.point.len());
        for (b, img) in self.basis.iter().zip(&self.images) {
            out += img * spec.inner(eta, b);
        }
        out
    }

    /// Ambient Jacobian with respect to coefficients in `basis`.
    pub fn jacobian(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.images)
    }
}

pub fn exp_with_differential(spec: &ManifoldSpec, x: &Point, xi: &Vector, step: f64) -> Result<ExpDifferential> {
    let basis = spec.tangent_basis(x.coords(), None);
    exp_with_differential_in(spec, x.coords(), xi, &basis, step)
}

pub(crate) fn exp_with_differential_in(
    spec: &ManifoldSpec,
    x: &Vector,
    xi: &Vector,
    basis: &[Vector],
    step: f64,
) -> Result<ExpDifferential> {
    let r = spec.norm(xi);
    if r < 1e-14 {
        return Ok(ExpDifferential {
            point: x.clone(),
            basis: basis.to_vec(),
            images: basis.to_vec(),
        });
    }
    let u = xi / r;
    match spec.geometry() {
        Geometry::Flat { .. } => Ok(ExpDifferential {
            point: x + xi,
            basis: basis.to_vec(),
            images: basis.to_vec(),
        }),
        Geometry::LevelSet { .. } => {
            if let Some(k) = constant_curvature_level(spec) {
                let (c, s, dc, ds) = trig(k, r);
                let point = x * c + &u * s;
                let vel = x * dc + &u * ds;
                let images = basis
                    .iter()
                    .map(|b| {
                        let a = spec.inner(b, &u);
                        let perp = b - &u * a;
                        &vel * a + perp * (s / r)
                    })
                    .collect();
                return Ok(ExpDifferential {
                    point,
                    basis: basis.to_vec(),
                    images,
                });
            }
            let n = spec.dim();
            let frame = spec.tangent_basis(x, Some(&u));
            let flow = FlowInit {
                layout: FlowLayout { offset: 0, d: n },
                t0: DMatrix::zeros(n, n),
                dt0: DMatrix::identity(n, n),
            };
            let run = integrate_joint(spec, x, &frame, r, step, Some(flow))?;
            let end = run.samples.last().unwrap();
            let (t, _) = run.flow.last().unwrap();
            let images = basis
                .iter()
                .map(|b| {
                    let coeff = DVector::from_iterator(n, frame.iter().map(|f| spec.inner(b, f)));
                    let tc = t * coeff;
                    let mut out = Vector::zeros(x.len());
                    for (i, f) in end.frame.iter().enumerate() {
                        out += f * (tc[i] / r);
                    }
                    out
                })
                .collect();
            Ok(ExpDifferential {
                point: end.x.clone(),
                basis: basis.to_vec(),
                images,
            })
        }
    }
}

/// Options for geodesic shooting on quadrics.
#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    pub starts: usize,
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions {
            starts: 32,
            step: DEFAULT_STEP,
            tol: 1e-10,
            max_iter: 40,
        }
    }
}

/// Result of a distance evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct Distance {
    pub value: f64,
    /// `true` when the value comes from a closed form; shooting results are
    /// best-found geodesic lengths and never certified as minimal.
    pub certified: bool,
    /// Initial tangent `ξ` with `exp_p(ξ) = q` and `‖ξ‖ = value`.
    #[serde(skip)]
    pub log: Vector,
}

/// Riemannian distance with default shooting options.
pub fn distance(spec: &ManifoldSpec, p: &Point, q: &Point) -> Result<Distance> {
    distance_with(spec, p, q, &ShootingOptions::default())
}

pub fn distance_with(spec: &ManifoldSpec, p: &Point, q: &Point, opts: &ShootingOptions) -> Result<Distance> {
    let pc = p.coords();
    let qc = q.coords();
    match spec.geometry() {
        Geometry::Flat { .. } => {
            let log = qc - pc;
            Ok(Distance {
                value: log.norm(),
                certified: true,
                log,
            })
        }
        Geometry::LevelSet { .. } => {
            if let Some(k) = constant_curvature_level(spec) {
                return Ok(closed_form_log(spec, k, pc, qc));
            }
            shoot(spec, pc, qc, opts)
        }
    }
}

fn closed_form_log(spec: &ManifoldSpec, k: f64, p: &Vector, q: &Vector) -> Distance {
    let a = k.abs().sqrt();
    let ph = p * a;
    let qh = q * a;
    let (theta, w) = if k > 0.0 {
        let diff = (&ph - &qh).norm();
        let sum = (&ph + &qh).norm();
        let theta = 2.0 * diff.atan2(sum);
        (theta, &qh - &ph * ph.dot(&qh))
    } else {
        let dq = &ph - &qh;
        let chord = spec.inner(&dq, &dq).max(0.0).sqrt();
        let theta = 2.0 * (chord / 2.0).asinh();
        let c = -spec.inner(&ph, &qh);
        (theta, &qh - &ph * c)
    };
    let wn = spec.norm(&w);
    let log = if wn > 1e-300 {
        w * (theta / a / wn)
    } else if theta > 0.0 {
        // antipodal: any direction is minimal
        let dir = &spec.tangent_basis(p, None)[0];
        dir * (theta / a)
    } else {
        Vector::zeros(p.len())
    };
    Distance {
        value: theta / a,
        certified: true,
        log,
    }
}

/// Gauss-Newton shooting for `exp_p(ξ) = q` from one initial guess.
fn shoot_once(spec: &ManifoldSpec, p: &Vector, q: &Vector, basis: &[Vector], xi0: Vector, opts: &ShootingOptions) -> Result<(Vector, f64)> {
    let mut xi = xi0;
    let mut d = exp_with_differential_in(spec, p, &xi, basis, opts.step)?;
    let mut res = &d.point - q;
    let mut rn = res.norm();
    for _ in 0..opts.max_iter {
        if rn <= opts.tol {
            break;
        }
        let delta = lstsq(&d.jacobian(), &res);
        let mut step_len = 1.0;
        let mut improved = false;
        for _ in 0..12 {
            let mut trial = xi.clone();
            for (b, c) in basis.iter().zip(delta.iter()) {
                trial -= b * (c * step_len);
            }
            let dt = exp_with_differential_in(spec, p, &trial, basis, opts.step)?;
            let rt = &dt.point - q;
            let rtn = rt.norm();
            if rtn < rn {
                xi = trial;
                d = dt;
                res = rt;
                rn = rtn;
                improved = true;
                break;
            }
            step_len *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((xi, rn))
}

fn shoot(spec: &ManifoldSpec, p: &Vector, q: &Vector, opts: &ShootingOptions) -> Result<Distance> {
    let basis = spec.tangent_basis(p, None);
    let chord = q - p;
    let chord_len = chord.norm();
    if chord_len == 0.0 {
        return Ok(Distance {
            value: 0.0,
            certified: true,
            log: Vector::zeros(p.len()),
        });
    }
    let t = spec.project_raw(p, &chord);
    let tn = spec.norm(&t);
    let dir0 = if tn > 1e-12 { t / tn } else { basis[0].clone() };
    let mut best: Option<(f64, Vector)> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for k in 0..opts.starts.max(1) {
        let guess = if k == 0 {
            &dir0 * chord_len
        } else {
            let mut g = dir0.clone();
            for b in &basis {
                let z: f64 = StandardNormal.sample(&mut rng);
                g += b * (0.6 * z);
            }
            let g = spec.project_raw(p, &g);
            let gn = spec.norm(&g);
            let scale: f64 = 1.0 + 0.5 * (k as f64 / opts.starts as f64);
            g * (chord_len * scale / gn)
        };
        let (xi, rn) = shoot_once(spec, p, q, &basis, guess, opts)?;
        if rn <= opts.tol * 10.0 {
            let len = spec.norm(&xi);
            if best.as_ref().map_or(true, |(b, _)| len < *b) {
                best = Some((len, xi));
            }
        }
    }
    match best {
        Some((value, log)) => Ok(Distance {
            value,
            certified: false,
            log,
        }),
        None => Err(GeometryError::NoCertifiedMinimizer {
            best_upper_bound: projected_chord_length(spec, p, q),
        }),
    }
}

/// Length of the radial projection of the segment `[p, q]` onto the level set.
fn projected_chord_length(spec: &ManifoldSpec, p: &Vector, q: &Vector) -> f64 {
    let n = 4096;
    let mut prev = p.clone();
    let mut total = 0.0;
    for i in 1..=n {
        let t = i as f64 / n as f64;
        let mut y = p * (1.0 - t) + q * t;
        spec.geometry().retract(y.as_mut_slice());
        if !y.iter().all(|c| c.is_finite()) {
            return f64::INFINITY;
        }
        total += (&y - &prev).norm();
        prev = y;
    }
    total
}

/// Unit-speed geodesic from `p` to `q` along the distance-realising direction.
pub fn geodesic_between(spec: &ManifoldSpec, p: &Point, q: &Point, opts: &ShootingOptions) -> Result<(GeodesicPath, Distance)> {
    let d = distance_with(spec, p, q, opts)?;
    if d.value == 0.0 {
        return Err(GeometryError::Domain("coincident endpoints".into()));
    }
    let u = &d.log / d.value;
    let frame = spec.tangent_basis(p.coords(), Some(&u));
    let path = integrate_geodesic_with_frame(spec, p.coords(), frame, d.value, opts.step)?;
    Ok((path, d))
}

/// A curve lifted through `exp_p`.
#[derive(Debug, Clone)]
pub struct LiftedCurve {
    pub base: Point,
    /// `(t, ξ(t))` with `ξ(t) ∈ T_p M` in ambient components.
    pub samples: Vec<(f64, Vector)>,
    /// `max ‖ξ_{k+1} − ξ_k‖ / (t_{k+1} − t_k)`.
    pub continuity_constant: f64,
    /// `max ‖exp_p(ξ(t)) − c(t)‖`.
    pub max_residual: f64,
    /// `π/√H − max ‖ξ‖` for `H > 0`, infinite otherwise.
    pub margin: f64,
}

impl LiftedCurve {
    /// CSV with columns `t, xi_1..xi_m`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let m = self.base.coords().len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|k| format!("xi_{k}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, xi) in &self.samples {
            let mut row = vec![format!("{t:?}")];
            row.extend(xi.iter().map(|c| format!("{c:?}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Lifts a sampled curve starting at `p` through `exp_p` by continuation.
pub fn lift_curve(spec: &ManifoldSpec, p: &Point, curve: &[(f64, Point)], h_bound: f64) -> Result<LiftedCurve> {
    lift_curve_with_step(spec, p, curve, h_bound, DEFAULT_STEP)
}

pub fn lift_curve_with_step(
    spec: &ManifoldSpec,
    p: &Point,
    curve: &[(f64, Point)],
    h_bound: f64,
    step: f64,
) -> Result<LiftedCurve> {
    if curve.is_empty() {
        return Err(GeometryError::Precondition("empty curve".into()));
    }
    if (curve[0].1.coords() - p.coords()).norm() > 1e-9 {
        return Err(GeometryError::Precondition("curve does not start at the base point".into()));
    }
    let length: f64 = curve
        .windows(2)
        .map(|w| (w[1].1.coords() - w[0].1.coords()).norm())
        .sum();
    let radius = if h_bound > 0.0 {
        std::f64::consts::PI / h_bound.sqrt()
    } else {
        f64::INFINITY
    };
    if length >= radius {
        return Err(GeometryError::Precondition(format!(
            "curve length {length} exceeds the budget {radius}"
        )));
    }
    let basis = spec.tangent_basis(p.coords(), None);
    let pc = p.coords();
    let solve = |guess: &Vector, target: &Vector| -> Result<(Vector, f64)> {
        let mut xi = guess.clone();
        let mut d = exp_with_differential_in(spec, pc, &xi, &basis, step)?;
        let mut res = &d.point - target;
        let mut rn = res.norm();
        for _ in 0..30 {
            if rn <= 1e-11 {
                break;
            }
            let delta = lstsq(&d.jacobian(), &res);
            let mut lam = 1.0;
            let mut improved = false;
            for _ in 0..10 {
                let mut trial = xi.clone();
                for (b, c) in basis.iter().zip(delta.iter()) {
                    trial -= b * (c * lam);
                }
                let dt = exp_with_differential_in(spec, pc, &trial, &basis, step)?;
                let rt = &dt.point - target;
                if rt.norm() < rn {
                    xi = trial;
                    d = dt;
                    rn = rt.norm();
                    res = rt;
                    improved = true;
                    break;
                }
                lam *= 0.5;
            }
            if !improved {
                break;
            }
        }
        Ok((xi, rn))
    };

    let mut samples = vec![(curve[0].0, Vector::zeros(pc.len()))];
    let mut prev_delta: Option<(f64, Vector)> = None;
    let mut max_res: f64 = 0.0;
    let mut cont: f64 = 0.0;
    for k in 1..curve.len() {
        let (t0, xi0) = samples.last().cloned().unwrap();
        let (t1, target) = (curve[k].0, curve[k].1.coords().clone());
        let start_pt = curve[k - 1].1.coords().clone();
        let mut accepted = None;
        'refine: for halvings in 0..=3u32 {
            let pieces = 1usize << halvings;
            let mut xi = xi0.clone();
            let mut tprev = t0;
            let mut slope = prev_delta.clone();
            for j in 1..=pieces {
                let frac = j as f64 / pieces as f64;
                let tj = t0 + (t1 - t0) * frac;
                let mut sub = &start_pt * (1.0 - frac) + &target * frac;
                if j < pieces {
                    spec.geometry().retract(sub.as_mut_slice());
                } else {
                    sub = target.clone();
                }
                let guess = match &slope {
                    Some((dt, dxi)) if *dt > 0.0 => &xi + dxi * ((tj - tprev) / dt),
                    _ => xi.clone(),
                };
                let (sol, rn) = solve(&guess, &sub)?;
                if rn > 1e-9 || spec.norm(&(&sol - &xi)) > 0.5 * radius.min(1e3) {
                    continue 'refine;
                }
                slope = Some((tj - tprev, &sol - &xi));
                xi = sol;
                tprev = tj;
                if j == pieces {
                    accepted = Some((xi.clone(), rn));
                }
            }
            if accepted.is_some() {
                break;
            }
        }
        let (xi1, rn) = accepted.ok_or(GeometryError::ContinuationFailed(t1))?;
        max_res = max_res.max(rn);
        if t1 > t0 {
            cont = cont.max(spec.norm(&(&xi1 - &xi0)) / (t1 - t0));
        }
        prev_delta = Some((t1 - t0, &xi1 - &xi0));
        samples.push((t1, xi1));
    }
    let max_xi = samples.iter().map(|(_, x)| spec.norm(x)).fold(0.0, f64::max);
    Ok(LiftedCurve {
        base: p.clone(),
        samples,
        continuity_constant: cont,
        max_residual: max_res,
        margin: radius - max_xi,
    })
}

/// `d(exp_p(sX), exp_p(sY)) / ‖sX − sY‖`.
pub fn distance_ratio(spec: &ManifoldSpec, p: &Point, x: &TangentVector, y: &TangentVector, s: f64) -> Result<f64> {
    let diff = x.components() - y.components();
    let denom = spec.norm(&diff) * s;
    if denom == 0.0 {
        return Err(GeometryError::Precondition("X and Y coincide".into()));
    }
    let a = exp_map(spec, p, &TangentVector::new_unchecked(p.clone(), x.components() * s))?;
    let b = exp_map(spec, p, &TangentVector::new_unchecked(p.clone(), y.components() * s))?;
    Ok(distance(spec, &a, &b)?.value / denom)
}

/// Displacements of the block rotation of `S^{N−1} ⊂ R^N` that turns the
/// `(2i−1, 2i)` plane by angle `1/i`.
#[derive(Debug, Clone, Serialize)]
pub struct RotationReport {
    pub n: usize,
    /// `(i, d(e_{2i−1}, f(e_{2i−1})))`.
    pub basis_displacements: Vec<(usize, f64)>,
    pub min_basis_displacement: f64,
    /// Largest `|d(f x, f y) − d(x, y)|` over random pairs.
    pub distance_residual: f64,
    /// Smallest `‖f(x) − x‖` over random samples.
    pub min_random_displacement: f64,
}

pub fn block_rotation(x: &Vector) -> Vector {
    let mut out = x.clone();
    for i in 1..=x.len() / 2 {
        let a = 1.0 / i as f64;
        let (s, c) = a.sin_cos();
        let (j, k) = (2 * i - 2, 2 * i - 1);
        out[j] = c * x[j] - s * x[k];
        out[k] = s * x[j] + c * x[k];
    }
    out
}

pub fn rotation_isometry_displacement(n: usize, pairs: usize, fixed_point_samples: usize, seed: u64) -> Result<RotationReport> {
    if n < 4 || n % 2 != 0 {
        return Err(GeometryError::Precondition(format!("truncation must be even and >= 4, got {n}")));
    }
    let spec = ManifoldSpec::sphere(n - 1, 1.0)?;
    let mut basis_displacements = Vec::with_capacity(n / 2);
    for i in 1..=n / 2 {
        let mut e = Vector::zeros(n);
        e[2 * i - 2] = 1.0;
        let p = Point::new_unchecked(e.clone());
        let fp = Point::new_unchecked(block_rotation(&e));
        basis_displacements.push((i, distance(&spec, &p, &fp)?.value));
    }
    let min_basis = basis_displacements.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut residual: f64 = 0.0;
    for _ in 0..pairs {
        let a = Point::new_unchecked(crate::rng::random_point(&spec, &mut rng));
        let b = Point::new_unchecked(crate::rng::random_point(&spec, &mut rng));
        let d0 = distance(&spec, &a, &b)?.value;
        let fa = Point::new_unchecked(block_rotation(a.coords()));
        let fb = Point::new_unchecked(block_rotation(b.coords()));
        let d1 = distance(&spec, &fa, &fb)?.value;
        residual = residual.max((d1 - d0).abs());
    }
    let mut min_disp = f64::INFINITY;
    for _ in 0..fixed_point_samples {
        let a = crate::rng::random_point(&spec, &mut rng);
        min_disp = min_disp.min((block_rotation(&a) - &a).norm());
    }
    Ok(RotationReport {
        n,
        basis_displacements,
        min_basis_displacement: min_basis,
        distance_residual: residual,
        min_random_displacement: min_disp,
    })
}
