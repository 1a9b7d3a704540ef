//! Operator-valued Jacobi flow `T'' + R_s T = 0` in a parallel frame.
//!
//! Columns of `T(s)` are Jacobi fields written in the parallel frame along
//! the geodesic. The flow is integrated jointly with the geodesic and its
//! frame so the curvature is evaluated at every RK stage.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{GeometryError, Result};
use crate::geodesic::{
    integrate_geodesic_with_frame, integrate_joint, pack, unpack_flow, unpack_sample, FlowInit, GeodesicPath,
    PathSample,
};
use crate::linalg::{det_sign, golden_min, simpson, singular_extremes, singular_values};
use crate::manifold::{ManifoldSpec, TangentVector, Vector};
use crate::ode::{FlowLayout, JointSystem, Rk4Work};
use crate::report::nullable;
use crate::rng::{gaussian_vector, seeded_rng};

/// Which part of the parallel frame carries the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FrameMode {
    /// All `n` frame vectors, including the velocity.
    Full,
    /// The `n − 1` vectors orthogonal to the velocity.
    Normal,
}

impl FrameMode {
    pub(crate) fn layout(self, n: usize) -> FlowLayout {
        match self {
            FrameMode::Full => FlowLayout { offset: 0, d: n },
            FrameMode::Normal => FlowLayout { offset: 1, d: n - 1 },
        }
    }

    pub fn dim(self, n: usize) -> usize {
        self.layout(n).d
    }

    pub fn offset(self) -> usize {
        match self {
            FrameMode::Full => 0,
            FrameMode::Normal => 1,
        }
    }
}

/// Boundary data: a subspace `H_o` (orthonormal columns of `basis`, in frame
/// coefficients) and a symmetric operator `A` on it.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiBoundary {
    basis: DMatrix<f64>,
    weingarten: DMatrix<f64>,
}

impl JacobiBoundary {
    pub fn new(basis: DMatrix<f64>, weingarten: DMatrix<f64>) -> Result<Self> {
        let k = basis.ncols();
        if weingarten.nrows() != k || weingarten.ncols() != k {
            return Err(GeometryError::DimensionMismatch {
                expected: k,
                got: weingarten.nrows(),
            });
        }
        let gram = basis.transpose() * &basis;
        if (gram - DMatrix::identity(k, k)).amax() > 1e-10 {
            return Err(GeometryError::Precondition("boundary basis is not orthonormal".into()));
        }
        if (&weingarten - weingarten.transpose()).amax() > 1e-12 {
            return Err(GeometryError::Precondition("Weingarten operator is not symmetric".into()));
        }
        Ok(JacobiBoundary { basis, weingarten })
    }

    /// `H_o = {0}`: fields vanish at the start.
    pub fn conjugate(d: usize) -> Self {
        JacobiBoundary {
            basis: DMatrix::zeros(d, 0),
            weingarten: DMatrix::zeros(0, 0),
        }
    }

    /// `H_o` everything, `A = 0`: the boundary of a totally geodesic submanifold.
    pub fn focal_geodesic(d: usize) -> Self {
        JacobiBoundary {
            basis: DMatrix::identity(d, d),
            weingarten: DMatrix::zeros(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn weingarten(&self) -> &DMatrix<f64> {
        &self.weingarten
    }

    pub fn is_conjugate(&self) -> bool {
        self.basis.ncols() == 0
    }

    pub fn is_focal_geodesic(&self) -> bool {
        self.basis.ncols() == self.basis.nrows() && self.weingarten.amax() == 0.0
    }

    pub fn label(&self) -> String {
        if self.is_conjugate() {
            "conjugate".into()
        } else if self.is_focal_geodesic() {
            "focal".into()
        } else {
            format!("general(dim H_o={})", self.subspace_dim())
        }
    }

    /// Orthogonal projector onto `H_o`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `A` extended by zero to the whole frame space.
    pub fn weingarten_full(&self) -> DMatrix<f64> {
        &self.basis * &self.weingarten * self.basis.transpose()
    }

    /// `(T(0), T'(0))`.
    pub fn initial(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.dim();
        let p = self.projector();
        let dt = DMatrix::identity(d, d) - &p - self.weingarten_full();
        (p, dt)
    }
}

/// The flow together with the geodesic it was integrated along.
#[derive(Debug, Clone)]
pub struct JacobiFlowState {
    path: GeodesicPath,
    boundary: JacobiBoundary,
    mode: FrameMode,
    t: Vec<DMatrix<f64>>,
    dt: Vec<DMatrix<f64>>,
}

/// Integrates the flow along `path` (re-integrating the geodesic jointly at
/// `step` from the path's initial data).
pub fn integrate_flow(path: &GeodesicPath, boundary: &JacobiBoundary, mode: FrameMode, step: f64) -> Result<JacobiFlowState> {
    let spec = path.spec();
    let layout = mode.layout(spec.dim());
    if boundary.dim() != layout.d {
        return Err(GeometryError::DimensionMismatch {
            expected: layout.d,
            got: boundary.dim(),
        });
    }
    let (t0, dt0) = boundary.initial();
    let start = path.start();
    let run = integrate_joint(
        spec,
        &start.x,
        &start.frame,
        path.length(),
        step,
        Some(FlowInit { layout, t0, dt0 }),
    )?;
    let (t, dt) = run.flow.into_iter().unzip();
    Ok(JacobiFlowState {
        path: GeodesicPath::from_parts(spec.clone(), run.samples, run.step),
        boundary: boundary.clone(),
        mode,
        t,
        dt,
    })
}

impl JacobiFlowState {
    pub fn path(&self) -> &GeodesicPath {
        &self.path
    }

    pub fn boundary(&self) -> &JacobiBoundary {
        &self.boundary
    }

    pub fn mode(&self) -> FrameMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.boundary.dim()
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn s(&self, i: usize) -> f64 {
        self.path.samples()[i].s
    }

    pub fn t_at_index(&self, i: usize) -> &DMatrix<f64> {
        &self.t[i]
    }

    pub fn dt_at_index(&self, i: usize) -> &DMatrix<f64> {
        &self.dt[i]
    }

    /// Path sample, `T(s)` and `T'(s)` at any parameter in range.
    pub fn at(&self, s: f64) -> Result<(PathSample, DMatrix<f64>, DMatrix<f64>)> {
        let (i, ds) = self.path.locate(s)?;
        let base = &self.path.samples()[i];
        if ds <= 0.0 {
            return Ok((base.clone(), self.t[i].clone(), self.dt[i].clone()));
        }
        let spec = self.path.spec();
        let sys = JointSystem::new(spec, Some(self.mode.layout(spec.dim())));
        let mut y = pack(&sys, &base.x, &base.frame, Some((&self.t[i], &self.dt[i])));
        let mut work = Rk4Work::default();
        sys.rk4(&mut y, ds, &mut work);
        sys.retract(&mut y);
        let (t, dt) = unpack_flow(&sys, &y);
        Ok((unpack_sample(&sys, &y, base.s + ds), t, dt))
    }

    pub fn t_at(&self, s: f64) -> Result<DMatrix<f64>> {
        Ok(self.at(s)?.1)
    }

    /// Frame vectors carrying the flow at sample `smp`.
    pub fn flow_frame<'a>(&self, smp: &'a PathSample) -> &'a [Vector] {
        &smp.frame[self.mode.offset()..]
    }

    /// Frame coefficients of a tangent vector at the path start.
    pub fn coefficients(&self, u: &Vector) -> DVector<f64> {
        let spec = self.path.spec();
        let frame = self.flow_frame(self.path.start());
        DVector::from_iterator(frame.len(), frame.iter().map(|f| spec.inner(u, f)))
    }

    /// Largest entry of `TᵀT' − T'ᵀT` over the grid, with its parameter.
    pub fn phi_defect(&self) -> (f64, f64) {
        let mut worst = (0.0, 0.0);
        for (i, (t, dt)) in self.t.iter().zip(&self.dt).enumerate() {
            let phi = t.transpose() * dt;
            let e = (&phi - phi.transpose()).amax();
            if e > worst.0 {
                worst = (e, self.s(i));
            }
        }
        worst
    }

    fn describe(&self) -> String {
        let start = self.path.start();
        format!(
            "{} from {:?} along {:?}, length {:?}",
            self.path.spec(),
            start.x.as_slice(),
            start.v.as_slice(),
            self.path.length()
        )
    }
}

/// `R_s`: the curvature operator `X ↦ R(X, γ')γ'` in the flow frame at `s`.
pub fn curvature_frame_operator(path: &GeodesicPath, s: f64, mode: FrameMode) -> Result<DMatrix<f64>> {
    let smp = path.sample_at(s)?;
    Ok(curvature_at_sample(path.spec(), &smp, mode))
}

pub(crate) fn curvature_at_sample(spec: &ManifoldSpec, smp: &PathSample, mode: FrameMode) -> DMatrix<f64> {
    let vecs: Vec<&[f64]> = smp.frame[mode.offset()..].iter().map(|e| e.as_slice()).collect();
    spec.curvature_matrix(smp.x.as_slice(), smp.v.as_slice(), &vecs)
}

/// Jacobi field `J(t) = T(t)(v + w)` in ambient components; `v ∈ H_o` and
/// `w ⊥ H_o` are frame coefficients at the start.
pub fn jacobi_field(state: &JacobiFlowState, v: &DVector<f64>, w: &DVector<f64>, t: f64) -> Result<TangentVector> {
    let (j, _) = jacobi_field_with_derivative(state, v, w, t)?;
    Ok(j)
}

/// `(J(t), ∇J(t))`.
pub fn jacobi_field_with_derivative(
    state: &JacobiFlowState,
    v: &DVector<f64>,
    w: &DVector<f64>,
    t: f64,
) -> Result<(TangentVector, Vector)> {
    let p = state.boundary.projector();
    if (&p * v - v).amax() > 1e-9 || (&p * w).amax() > 1e-9 {
        return Err(GeometryError::Precondition("data is not split along H_o and its complement".into()));
    }
    let (smp, tm, dtm) = state.at(t)?;
    let u = v + w;
    let c = &tm * &u;
    let dc = &dtm * &u;
    let frame = state.flow_frame(&smp);
    let m = smp.x.len();
    let mut j = Vector::zeros(m);
    let mut dj = Vector::zeros(m);
    for (i, f) in frame.iter().enumerate() {
        j += f * c[i];
        dj += f * dc[i];
    }
    Ok((TangentVector::new_unchecked(crate::Point::new_unchecked(smp.x), j), dj))
}

/// Ambrose constant `⟨∇J₁, J₂⟩ − ⟨∇J₂, J₁⟩` for two fields of the same flow.
pub fn wronskian(
    state: &JacobiFlowState,
    pair1: (&DVector<f64>, &DVector<f64>),
    pair2: (&DVector<f64>, &DVector<f64>),
    t: f64,
) -> Result<f64> {
    let (_, tm, dtm) = state.at(t)?;
    let u1 = pair1.0 + pair1.1;
    let u2 = pair2.0 + pair2.1;
    let j1 = &tm * &u1;
    let j2 = &tm * &u2;
    let dj1 = &dtm * &u1;
    let dj2 = &dtm * &u2;
    Ok(dj1.dot(&j2) - dj2.dot(&j1))
}

/// Cosine-type (`C(0)=I, C'(0)=0`) and sine-type (`S(0)=0, S'(0)=I`)
/// flows; every Jacobi field is `C a + S b` with `(a, b) = (J(0), J'(0))`.
#[derive(Debug, Clone)]
pub struct FundamentalSystem {
    pub cosine: JacobiFlowState,
    pub sine: JacobiFlowState,
}

impl FundamentalSystem {
    pub fn new(path: &GeodesicPath, mode: FrameMode, step: f64) -> Result<Self> {
        let d = mode.dim(path.spec().dim());
        Ok(FundamentalSystem {
            cosine: integrate_flow(path, &JacobiBoundary::focal_geodesic(d), mode, step)?,
            sine: integrate_flow(path, &JacobiBoundary::conjugate(d), mode, step)?,
        })
    }

    fn field_at_index(&self, i: usize, data: (&DVector<f64>, &DVector<f64>)) -> (DVector<f64>, DVector<f64>) {
        let j = self.cosine.t_at_index(i) * data.0 + self.sine.t_at_index(i) * data.1;
        let dj = self.cosine.dt_at_index(i) * data.0 + self.sine.dt_at_index(i) * data.1;
        (j, dj)
    }

    pub fn wronskian_at_index(&self, i: usize, a: (&DVector<f64>, &DVector<f64>), b: (&DVector<f64>, &DVector<f64>)) -> f64 {
        let (j1, dj1) = self.field_at_index(i, a);
        let (j2, dj2) = self.field_at_index(i, b);
        dj1.dot(&j2) - dj2.dot(&j1)
    }

    /// `max_t |C(t) − C(0)|` over the sample grid.
    pub fn drift(&self, a: (&DVector<f64>, &DVector<f64>), b: (&DVector<f64>, &DVector<f64>)) -> (f64, f64) {
        let c0 = self.wronskian_at_index(0, a, b);
        let mut worst = (0.0, 0.0);
        for i in 0..self.cosine.len() {
            let e = (self.wronskian_at_index(i, a, b) - c0).abs();
            if e > worst.0 {
                worst = (e, self.cosine.s(i));
            }
        }
        worst
    }
}

/// One detected singular parameter.
#[derive(Debug, Clone, Serialize)]
pub struct FocalEvent {
    pub s: f64,
    pub sigma_min: f64,
    pub multiplicity: usize,
    /// `det T` changes sign across the event.
    #[serde(skip)]
    pub det_sign_change: bool,
}

/// Minimal slack of a named check and where it occurred.
#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub name: String,
    #[serde(with = "nullable")]
    pub min_slack: f64,
    #[serde(with = "nullable")]
    pub at_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FocalReport {
    pub geodesic: String,
    pub boundary: String,
    pub events: Vec<FocalEvent>,
    pub checks: Vec<CheckSummary>,
    /// `(s, σ_min(T(s)), sign det T(s))` on the scanned grid.
    #[serde(skip)]
    pub trace: Vec<(f64, f64, i8)>,
}

impl FocalReport {
    /// CSV with columns `s, sigma_min, det_sign`.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "s,sigma_min,det_sign")?;
        for (s, sm, ds) in &self.trace {
            writeln!(w, "{s:?},{sm:?},{ds}")?;
        }
        Ok(())
    }
}

/// Default detection tolerance on `σ_min`.
pub const DETECTION_TOL: f64 = 1e-6;

/// Scans `σ_min(T(s))` on `(lo, hi]`, refines each grid local minimum by golden
/// section and reports those below `tol`.
pub fn detect_singularities(state: &JacobiFlowState, s_range: (f64, f64), tol: f64) -> Result<FocalReport> {
    if !(tol > 0.0) {
        return Err(GeometryError::Precondition("detection tolerance must be positive".into()));
    }
    let (lo, hi) = s_range;
    let h = state.path.step();
    let idx: Vec<usize> = (0..state.len())
        .filter(|&i| {
            let s = state.s(i);
            s > lo.max(0.0) + 1e-12 && s <= hi + 1e-12
        })
        .collect();
    let trace: Vec<(f64, f64, i8)> = idx
        .iter()
        .map(|&i| {
            let t = state.t_at_index(i);
            (state.s(i), singular_extremes(t).0, det_sign(t))
        })
        .collect();
    let sigma = |s: f64| -> f64 { state.t_at(s).map(|t| singular_extremes(&t).0).unwrap_or(f64::INFINITY) };
    let mut events: Vec<FocalEvent> = Vec::new();
    let n = trace.len();
    for k in 0..n {
        let here = trace[k].1;
        let left_ok = k == 0 || trace[k - 1].1 > here;
        let right_ok = k + 1 == n || trace[k + 1].1 >= here;
        if !(left_ok && right_ok) {
            continue;
        }
        // the trivial zero of a vanishing flow at s = 0 is not an event
        if k == 0 && lo <= 0.0 && here >= tol {
            continue;
        }
        let a = if k > 0 {
            trace[k - 1].0
        } else if lo > 0.0 {
            (trace[k].0 - h).max(lo)
        } else {
            trace[k].0
        };
        let b = if k + 1 == n { trace[k].0 } else { trace[k + 1].0 };
        let (s_star, sm) = golden_min(sigma, a, b, 1e-11);
        if sm >= tol {
            continue;
        }
        if events.last().is_some_and(|e| (e.s - s_star).abs() < 0.5 * h) {
            continue;
        }
        let t_star = state.t_at(s_star)?;
        let multiplicity = singular_values(&t_star).iter().filter(|&&x| x < 10.0 * tol).count();
        let before = state.t_at((s_star - h).max(0.0))?;
        let after = state.t_at((s_star + h).min(state.path.length()))?;
        events.push(FocalEvent {
            s: s_star,
            sigma_min: sm,
            multiplicity,
            det_sign_change: det_sign(&before) * det_sign(&after) < 0,
        });
    }
    let (phi, phi_at) = state.phi_defect();
    Ok(FocalReport {
        geodesic: state.describe(),
        boundary: state.boundary.label(),
        events,
        checks: vec![CheckSummary {
            name: "phi-symmetry".into(),
            min_slack: -phi,
            at_s: phi_at,
        }],
        trace,
    })
}

/// Reversed flow data used by the adjoint assembly.
struct ReversedFlow {
    flow: JacobiFlowState,
    /// Maps original frame coefficients to reversed-frame coefficients.
    q: DMatrix<f64>,
}

fn reversed_conjugate_flow(state: &JacobiFlowState, from_s: f64, length: f64, step: f64) -> Result<ReversedFlow> {
    let path = state.path.reversed_from(from_s, length, step)?;
    let d = state.dim();
    let flow = integrate_flow(&path, &JacobiBoundary::conjugate(d), state.mode, step)?;
    let mut q = DMatrix::identity(d, d);
    if state.mode == FrameMode::Full {
        q[(0, 0)] = -1.0;
    }
    Ok(ReversedFlow { flow, q })
}

/// `T*(b)` assembled from a reversed sine-type flow `T̃` evaluated at `b`,
/// with `q` the frame change from the original to the reversed frame.
fn adjoint_assembly(boundary: &JacobiBoundary, q: &DMatrix<f64>, tt: &DMatrix<f64>, dtt: &DMatrix<f64>) -> DMatrix<f64> {
    let d = boundary.dim();
    let p = boundary.projector();
    let td = q.transpose() * tt * q;
    let dtd = q.transpose() * dtt * q;
    &p * dtd - boundary.weingarten_full() * &td + (DMatrix::identity(d, d) - &p) * &td
}

#[derive(Debug, Clone, Serialize)]
pub struct ReversalCheck {
    pub s_star: f64,
    pub mirrored: f64,
    pub sigma_min: f64,
    pub deviation: f64,
    pub pass: bool,
}

/// Runs the geodesic backwards from `γ(s*)` and locates the singularity of
/// the adjoint assembly near the mirrored parameter.
pub fn reversal_symmetry_check(state: &JacobiFlowState, s_star: f64) -> Result<ReversalCheck> {
    let step = state.path.step();
    let window = (0.05f64).min(0.5 * s_star);
    let rev = reversed_conjugate_flow(state, s_star, s_star + window, step)?;
    let g = |b: f64| -> f64 {
        match rev.flow.at(b) {
            Ok((_, tt, dtt)) => singular_extremes(&adjoint_assembly(&state.boundary, &rev.q, &tt, &dtt)).0,
            Err(_) => f64::INFINITY,
        }
    };
    // scan then refine, so a wide window cannot trap golden section
    let k = 64;
    let (a0, b0) = (s_star - window, s_star + window);
    let mut best = (a0, f64::INFINITY);
    for i in 0..=k {
        let b = a0 + (b0 - a0) * i as f64 / k as f64;
        let v = g(b);
        if v < best.1 {
            best = (b, v);
        }
    }
    let cell = (b0 - a0) / k as f64;
    let (mirrored, sm) = golden_min(g, (best.0 - cell).max(a0), (best.0 + cell).min(b0), 1e-11);
    let deviation = (mirrored - s_star).abs();
    Ok(ReversalCheck {
        s_star,
        mirrored,
        sigma_min: sm,
        deviation,
        pass: deviation <= 1e-6 && sm < DETECTION_TOL,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AdjointReport {
    pub b: f64,
    pub max_residual: f64,
    /// `‖T*(b) − T(b)ᵀ‖_max`.
    pub transpose_defect: f64,
}

/// Compares `⟨T(b)x, u⟩` with `⟨x, T*(b)u⟩` for random `x, u`, with `T*`
/// built from the reversed flow from `γ(b)`.
pub fn adjoint_check(state: &JacobiFlowState, b: f64, trials: usize, seed: u64) -> Result<AdjointReport> {
    let step = state.path.step();
    let (smp_b, tb, _) = state.at(b)?;
    let spec = state.path.spec();
    let mut frame = smp_b.frame.clone();
    frame[0] = -&frame[0];
    let rpath = integrate_geodesic_with_frame(spec, &smp_b.x, frame, b, step)?;
    let d = state.dim();
    let flow = integrate_flow(&rpath, &JacobiBoundary::conjugate(d), state.mode, step)?;
    let end = flow.path.end();
    let start = state.path.start();
    let off = state.mode.offset();
    let q = DMatrix::from_fn(d, d, |i, j| spec.inner(&end.frame[off + i], &start.frame[off + j]));
    let last = flow.len() - 1;
    let tstar = adjoint_assembly(&state.boundary, &q, flow.t_at_index(last), flow.dt_at_index(last));
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x = gaussian_vector(d, &mut rng);
        let u = gaussian_vector(d, &mut rng);
        let lhs = (&tb * &x).dot(&u);
        let rhs = x.dot(&(&tstar * &u));
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(AdjointReport {
        b,
        max_residual: worst,
        transpose_defect: (&tstar - tb.transpose()).amax(),
    })
}

/// A vector field along the geodesic given by frame coefficients.
pub trait FrameField {
    fn value(&self, t: f64) -> DVector<f64>;

    /// Derivative on a smooth piece `[a, b]` containing `t`.
    fn derivative_on(&self, t: f64, piece: (f64, f64)) -> DVector<f64> {
        let h = 1e-6 * (piece.1 - piece.0).max(1e-3);
        if t - h < piece.0 {
            (self.value(t + h) - self.value(t)) / h
        } else if t + h > piece.1 {
            (self.value(t) - self.value(t - h)) / h
        } else {
            (self.value(t + h) - self.value(t - h)) / (2.0 * h)
        }
    }

    /// Interior parameters where the field may fail to be differentiable.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Field given by closures for value and derivative.
pub struct ClosureField<F, G> {
    pub value: F,
    pub derivative: G,
}

impl<F, G> FrameField for ClosureField<F, G>
where
    F: Fn(f64) -> DVector<f64>,
    G: Fn(f64) -> DVector<f64>,
{
    fn value(&self, t: f64) -> DVector<f64> {
        (self.value)(t)
    }

    fn derivative_on(&self, t: f64, _piece: (f64, f64)) -> DVector<f64> {
        (self.derivative)(t)
    }
}

/// Continuous field, linear in frame coefficients between knots.
#[derive(Debug, Clone)]
pub struct PiecewiseLinearField {
    pub knots: Vec<f64>,
    pub values: Vec<DVector<f64>>,
}

impl PiecewiseLinearField {
    fn segment(&self, t: f64) -> usize {
        let n = self.knots.len();
        let mut k = 0;
        while k + 2 < n && t >= self.knots[k + 1] {
            k += 1;
        }
        k
    }
}

impl FrameField for PiecewiseLinearField {
    fn value(&self, t: f64) -> DVector<f64> {
        let k = self.segment(t);
        let (a, b) = (self.knots[k], self.knots[k + 1]);
        let w = (t - a) / (b - a);
        &self.values[k] * (1.0 - w) + &self.values[k + 1] * w
    }

    fn derivative_on(&self, _t: f64, piece: (f64, f64)) -> DVector<f64> {
        let mid = 0.5 * (piece.0 + piece.1);
        let k = self.segment(mid);
        (&self.values[k + 1] - &self.values[k]) / (self.knots[k + 1] - self.knots[k])
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.knots[1..self.knots.len() - 1].to_vec()
    }
}

/// The Jacobi field `T(t)u` of a flow.
pub struct FlowField<'a> {
    pub state: &'a JacobiFlowState,
    pub u: DVector<f64>,
}

impl FrameField for FlowField<'_> {
    fn value(&self, t: f64) -> DVector<f64> {
        self.state.at(t).map(|(_, tm, _)| tm * &self.u).expect("parameter in range")
    }

    fn derivative_on(&self, t: f64, _piece: (f64, f64)) -> DVector<f64> {
        self.state.at(t).map(|(_, _, dtm)| dtm * &self.u).expect("parameter in range")
    }
}

/// Curvature operators on the grid of `[0, b]`, reusable across many fields.
pub struct IndexFormContext<'a> {
    path: &'a GeodesicPath,
    mode: FrameMode,
    end: usize,
    curvature: Vec<DMatrix<f64>>,
}

impl<'a> IndexFormContext<'a> {
    pub fn new(path: &'a GeodesicPath, mode: FrameMode, b: f64) -> Result<Self> {
        let end = grid_index(path, b)?;
        let curvature = path.samples()[..=end]
            .iter()
            .map(|smp| curvature_at_sample(path.spec(), smp, mode))
            .collect();
        Ok(IndexFormContext {
            path,
            mode,
            end,
            curvature,
        })
    }

    /// `∫₀ᵇ (‖Ẋ‖² − ⟨R X, X⟩) dt − ⟨A X(0), X(0)⟩` by composite Simpson on
    /// each smooth piece of the grid.
    pub fn evaluate(&self, field: &dyn FrameField, boundary: &JacobiBoundary) -> Result<f64> {
        let x0 = field.value(0.0);
        let d = boundary.dim();
        if x0.len() != d || self.curvature[0].nrows() != d {
            return Err(GeometryError::DimensionMismatch { expected: d, got: x0.len() });
        }
        let p = boundary.projector();
        let off = (&x0 - &p * &x0).amax();
        if off > 1e-9 {
            return Err(GeometryError::Precondition(format!("X(0) is not in H_o (off by {off:e})")));
        }
        let mut cuts = vec![0usize];
        for bp in field.breakpoints() {
            let k = grid_index(self.path, bp)?;
            if k > *cuts.last().unwrap() && k < self.end {
                cuts.push(k);
            }
        }
        cuts.push(self.end);
        let samples = self.path.samples();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (i0, i1) = (w[0], w[1]);
            let piece = (samples[i0].s, samples[i1].s);
            if i1 == i0 + 1 {
                let mid = 0.5 * (piece.0 + piece.1);
                let rmid = curvature_frame_operator(self.path, mid, self.mode)?;
                let f = |t: f64, r: &DMatrix<f64>| {
                    let x = field.value(t);
                    let dx = field.derivative_on(t, piece);
                    dx.dot(&dx) - x.dot(&(r * &x))
                };
                let h = piece.1 - piece.0;
                total += h / 6.0
                    * (f(piece.0, &self.curvature[i0]) + 4.0 * f(mid, &rmid) + f(piece.1, &self.curvature[i1]));
                continue;
            }
            let vals: Vec<f64> = (i0..=i1)
                .map(|i| {
                    let t = samples[i].s;
                    let x = field.value(t);
                    let dx = field.derivative_on(t, piece);
                    dx.dot(&dx) - x.dot(&(&self.curvature[i] * &x))
                })
                .collect();
            total += simpson(&vals, self.path.step());
        }
        let a = boundary.weingarten_full();
        Ok(total - x0.dot(&(a * &x0)))
    }
}

fn grid_index(path: &GeodesicPath, s: f64) -> Result<usize> {
    let (i, ds) = path.locate(s)?;
    let tol = 1e-9 * s.abs().max(1.0);
    if ds <= tol {
        return Ok(i);
    }
    if i + 1 < path.samples().len() && path.samples()[i + 1].s - s <= tol {
        return Ok(i + 1);
    }
    Err(GeometryError::Precondition(format!("parameter {s} is not on the sample grid")))
}

/// Focal index form of a field on `[0, b]`.
pub fn index_form(
    path: &GeodesicPath,
    field: &dyn FrameField,
    boundary: &JacobiBoundary,
    mode: FrameMode,
    b: f64,
) -> Result<f64> {
    IndexFormContext::new(path, mode, b)?.evaluate(field, boundary)
}

#[derive(Debug, Clone, Serialize)]
pub struct FocalIndexReport {
    pub trials: usize,
    pub b: f64,
    /// `min (I(X,X) − I(J,J))` over random fields.
    pub min_slack: f64,
    /// `max |I(J,J) by quadrature − ⟨J(b), ∇J(b)⟩|`.
    pub equality_slack: f64,
    pub pass: bool,
}

/// Random piecewise-linear fields with matched endpoint against the Jacobi
/// field through the same endpoint.
pub fn focal_index_lemma_check(
    path: &GeodesicPath,
    boundary: &JacobiBoundary,
    mode: FrameMode,
    trials: usize,
    b: f64,
    seed: u64,
) -> Result<FocalIndexReport> {
    let state = integrate_flow(path, boundary, mode, path.step())?;
    let report = detect_singularities(&state, (0.0, b - 2.0 * path.step()), DETECTION_TOL)?;
    if let Some(e) = report.events.first() {
        return Err(GeometryError::Precondition(format!("flow is singular at s* = {}", e.s)));
    }
    let ctx = IndexFormContext::new(state.path(), mode, b)?;
    let end = ctx.end;
    let d = boundary.dim();
    let proj = boundary.projector();
    let (tb, dtb) = (state.t_at_index(end).clone(), state.dt_at_index(end).clone());
    let mut rng = seeded_rng(seed);
    let mut min_slack = f64::INFINITY;
    let mut eq_slack: f64 = 0.0;
    for _ in 0..trials {
        let u = gaussian_vector(d, &mut rng);
        let jb = &tb * &u;
        let ijj = jb.dot(&(&dtb * &u));
        let interior = rng.gen_range(1..=6usize);
        let mut idx: Vec<usize> = (0..interior).map(|_| rng.gen_range(1..end)).collect();
        idx.sort_unstable();
        idx.dedup();
        let samples = state.path().samples();
        let mut knots = vec![0.0];
        let mut values = vec![&proj * gaussian_vector(d, &mut rng)];
        for &i in &idx {
            knots.push(samples[i].s);
            values.push(gaussian_vector(d, &mut rng));
        }
        knots.push(samples[end].s);
        values.push(jb);
        let field = PiecewiseLinearField { knots, values };
        let ixx = ctx.evaluate(&field, boundary)?;
        min_slack = min_slack.min(ixx - ijj);
        let jf = FlowField { state: &state, u };
        let quad = ctx.evaluate(&jf, boundary)?;
        eq_slack = eq_slack.max((quad - ijj).abs());
    }
    Ok(FocalIndexReport {
        trials,
        b,
        min_slack,
        equality_slack: eq_slack,
        pass: min_slack >= -1e-9 && eq_slack <= 1e-8,
    })
}

/// Row of the truncated-ellipsoid trend.
#[derive(Debug, Clone, Serialize)]
pub struct EpifocalRow {
    pub n: usize,
    pub sigma_min: f64,
    pub expected_sigma_min: f64,
    /// Last coordinate of `T(s)⁻¹ y` with `y_k = 1/k`.
    pub preimage_coefficient: f64,
    pub expected_preimage_coefficient: f64,
    /// Whether detection reports a singularity at the evaluation point.
    pub singular_at_eval: bool,
}

/// Focal flow of the equator of `x₁² + x₂² + Σ (1 − 1/k)² x_k² = 1`,
/// evaluated at `s_eval`, for each truncation `N`.
pub fn epifocal_trend(dims: &[usize], s_eval: f64, step: f64) -> Result<Vec<EpifocalRow>> {
    if dims.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GeometryError::Precondition("dims must be increasing".into()));
    }
    let mut rows = Vec::with_capacity(dims.len());
    for &n in dims {
        let (path, state) = ellipsoid_equator_flow(n, s_eval, step, FlowBoundaryKind::Focal)?;
        let _ = path;
        let last = state.len() - 1;
        let t = state.t_at_index(last);
        let d = t.nrows();
        let y = DVector::from_iterator(d, (0..d).map(|j| 1.0 / (j + 3) as f64));
        let b = t.clone().lu().solve(&y).ok_or_else(|| GeometryError::Domain("singular flow".into()))?;
        let nf = n as f64;
        let expected_sigma = (std::f64::consts::PI / (2.0 * nf)).sin();
        let sm = singular_extremes(t).0;
        rows.push(EpifocalRow {
            n,
            sigma_min: sm,
            expected_sigma_min: expected_sigma,
            preimage_coefficient: b[d - 1],
            expected_preimage_coefficient: (1.0 / nf) / expected_sigma,
            singular_at_eval: sm < DETECTION_TOL,
        });
    }
    Ok(rows)
}

/// Boundary families used by the canned ellipsoid runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowBoundaryKind {
    Conjugate,
    Focal,
}

/// Equator `γ(s) = (sin s, cos s, 0, …)` of the truncated ellipsoid with the
/// canonical frame `(e₁-direction, e₃, …, e_N)` and the normal flow.
pub fn ellipsoid_equator_flow(
    n: usize,
    length: f64,
    step: f64,
    kind: FlowBoundaryKind,
) -> Result<(GeodesicPath, JacobiFlowState)> {
    let spec = ManifoldSpec::ellipsoid_truncation(n)?;
    let mut x0 = Vector::zeros(n);
    x0[1] = 1.0;
    let mut frame = Vec::with_capacity(n - 1);
    let mut e1 = Vector::zeros(n);
    e1[0] = 1.0;
    frame.push(e1);
    for k in 2..n {
        let mut e = Vector::zeros(n);
        e[k] = 1.0;
        frame.push(e);
    }
    let path = integrate_geodesic_with_frame(&spec, &x0, frame, length, step)?;
    let d = n - 2;
    let boundary = match kind {
        FlowBoundaryKind::Conjugate => JacobiBoundary::conjugate(d),
        FlowBoundaryKind::Focal => JacobiBoundary::focal_geodesic(d),
    };
    let state = integrate_flow(&path, &boundary, FrameMode::Normal, step)?;
    Ok((path, state))
}

/// Comparison function `f_Δ` with `f(0)=0, f'(0)=1`, and its derivative.
pub(crate) fn sine_like(delta: f64, s: f64) -> (f64, f64) {
    if delta > 0.0 {
        let a = delta.sqrt();
        ((a * s).sin() / a, (a * s).cos())
    } else if delta < 0.0 {
        let a = (-delta).sqrt();
        ((a * s).sinh() / a, (a * s).cosh())
    } else {
        (s, 1.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub delta: f64,
    #[serde(rename = "Delta")]
    pub big_delta: f64,
    /// Right end of the evaluated interval.
    pub s_end: f64,
    pub checks: Vec<CheckSummary>,
    pub pass: bool,
}

/// Evaluates the flow estimates under curvature bounds `δ ≤ K ≤ Δ`
/// (constants) on the sine-type flow, before its first singularity and
/// where `f_Δ > 0`.
pub fn flow_estimate_suite(state: &JacobiFlowState, delta: f64, big_delta: f64, seed: u64) -> Result<EstimateReport> {
    if !state.boundary.is_conjugate() {
        return Err(GeometryError::Precondition("flow estimates need the H_o = {0} flow".into()));
    }
    if delta > big_delta {
        return Err(GeometryError::Precondition("lower bound exceeds upper bound".into()));
    }
    let h = state.path.step();
    let mut s_end = state.path.length();
    let report = detect_singularities(state, (0.0, s_end), DETECTION_TOL)?;
    if let Some(e) = report.events.first() {
        s_end = s_end.min(e.s);
    }
    if big_delta > 0.0 {
        s_end = s_end.min(std::f64::consts::PI / big_delta.sqrt());
    }
    let s_end = s_end - 2.0 * h;
    let idx: Vec<usize> = (1..state.len()).filter(|&i| state.s(i) <= s_end).collect();
    let d = state.dim();
    let mut rng = seeded_rng(seed);
    let mut dirs: Vec<DVector<f64>> = (0..d)
        .map(|k| {
            let mut e = DVector::zeros(d);
            e[k] = 1.0;
            e
        })
        .collect();
    for _ in 0..8 {
        let g = gaussian_vector(d, &mut rng);
        let n = g.norm();
        dirs.push(g / n);
    }
    let mut items: Vec<(String, crate::report::SlackTracker)> = [
        "(1) riccati",
        "(2) lower norm",
        "(3) log-derivative vs f_Delta",
        "(4) log-derivative vs f_delta",
        "(5) ratio monotonicity",
        "(6) upper norm",
    ]
    .iter()
    .map(|n| (n.to_string(), Default::default()))
    .collect();

    let norms: Vec<(f64, f64)> = idx.iter().map(|&i| singular_extremes(state.t_at_index(i))).collect();
    for (k, &i) in idx.iter().enumerate() {
        let s = state.s(i);
        let (fd, dfd) = sine_like(big_delta, s);
        let (fl, dfl) = sine_like(delta, s);
        let (smin, smax) = norms[k];
        items[1].1.push(s, smin - fd);
        items[5].1.push(s, fl - smax);
        let t = state.t_at_index(i);
        let dt = state.dt_at_index(i);
        for u in &dirs {
            let tu = t * u;
            let dtu = dt * u;
            let a = dtu.dot(&tu);
            let b = tu.dot(&tu);
            items[2].1.push(s, a * fd - b * dfd);
            items[3].1.push(s, b * dfl - a * fl);
        }
    }
    // (5) on a thinned grid: ‖T(s)‖ f_δ(t) ≥ ‖T(t)‖ f_δ(s) for s ≤ t
    let stride = (idx.len() / 120).max(1);
    let thin: Vec<usize> = (0..idx.len()).step_by(stride).collect();
    for (a, &ka) in thin.iter().enumerate() {
        for &kb in &thin[a..] {
            let (s, t) = (state.s(idx[ka]), state.s(idx[kb]));
            let slack = norms[ka].1 * sine_like(delta, t).0 - norms[kb].1 * sine_like(delta, s).0;
            items[4].1.push(s, slack);
        }
    }
    // (1) two-sided Riccati bound for U = T'T⁻¹ via five-point differences
    let u_at = |i: usize| -> Option<DMatrix<f64>> {
        let t = state.t_at_index(i);
        let inv = t.clone().try_inverse()?;
        Some(state.dt_at_index(i) * inv)
    };
    let us: Vec<Option<DMatrix<f64>>> = (0..state.len())
        .map(|i| if state.s(i) <= s_end && i > 0 { u_at(i) } else { None })
        .collect();
    for i in 3..state.len().saturating_sub(2) {
        let stencil: Option<Vec<&DMatrix<f64>>> = (i - 2..=i + 2).map(|j| us[j].as_ref()).collect();
        let Some(st) = stencil else { continue };
        if st.iter().any(|u| singular_extremes(u).1 > 2.0) {
            continue;
        }
        let du = (st[0] - st[1] * 8.0 + st[3] * 8.0 - st[4]) / (12.0 * h);
        let s = state.s(i);
        for u in &dirs {
            let uu = st[2] * u;
            let lhs = u.dot(&(&du * u));
            let sq = uu.dot(&uu);
            let slack = (lhs - (-big_delta - sq)).min((-delta - sq) - lhs);
            items[0].1.push(s, slack);
        }
    }
    let checks: Vec<CheckSummary> = items
        .into_iter()
        .map(|(name, t)| CheckSummary {
            name,
            min_slack: t.min,
            at_s: t.argmin,
        })
        .collect();
    let pass = checks.iter().all(|c| c.min_slack >= -1e-6 || !c.min_slack.is_finite() && c.min_slack > 0.0);
    Ok(EstimateReport {
        delta,
        big_delta,
        s_end,
        checks,
        pass,
    })
}
