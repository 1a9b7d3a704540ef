//! Built-in test manifolds.
//!
//! Every curved space is realised as a hypersurface `{ Σ q_k x_k² = level }`
//! of a flat ambient space with diagonal signature `η` (Euclidean, or
//! Minkowski for the hyperboloid). The Levi-Civita connection is the
//! tangential part of the ambient derivative, so the shape operator and the
//! Gauss equation give curvature in closed form.
//!
//! Sign conventions: the unit normal `ν` is the normalised `η`-gradient of the
//! defining function (outward on spheres and ellipsoids, future-pointing on
//! the hyperboloid) and `S(u) = tan(D_u ν)`. With `ε = ⟨ν, ν⟩` the Gauss
//! equation reads `R(u,v)w = ε (⟨Sv,w⟩ Su − ⟨Su,w⟩ Sv)`, so the round sphere
//! of curvature `K` has `S = √K·id`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::geodesic::GeodesicPath;

pub type Vector = DVector<f64>;

/// Tolerance on the defining equation for points.
pub const MEMBERSHIP_TOL: f64 = 1e-10;
/// Tolerance on the normal component of tangent vectors.
pub const TANGENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ManifoldKind {
    Euclidean { dim: usize },
    Sphere { dim: usize, curvature: f64 },
    Hyperbolic { dim: usize, curvature: f64 },
    Quadric { coefficients: Vec<f64> },
    /// Simply connected surface of constant curvature `H` (any sign).
    ModelSurface { curvature: f64 },
}

#[derive(Debug, Clone)]
pub(crate) enum Geometry {
    Flat { dim: usize },
    LevelSet { q: Vec<f64>, eta: Vec<f64>, level: f64 },
}

/// A validated manifold descriptor together with its ambient realisation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ManifoldSpec {
    kind: ManifoldKind,
    #[serde(skip)]
    geometry: Geometry,
}

impl PartialEq for ManifoldSpec {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

/// A point in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vector);

impl Point {
    /// Wraps coordinates without checking membership.
    pub fn new_unchecked(coords: Vector) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &Vector {
        &self.0
    }

    pub fn into_coords(self) -> Vector {
        self.0
    }
}

/// A tangent vector in ambient components, tied to its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: Point,
    components: Vector,
}

impl TangentVector {
    pub fn new_unchecked(base: Point, components: Vector) -> Self {
        TangentVector { base, components }
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn components(&self) -> &Vector {
        &self.components
    }

    pub fn into_components(self) -> Vector {
        self.components
    }
}

fn invalid(msg: impl Into<String>) -> GeometryError {
    GeometryError::InvalidSpec(msg.into())
}

impl ManifoldSpec {
    pub fn new(kind: ManifoldKind) -> Result<Self> {
        let geometry = match &kind {
            ManifoldKind::Euclidean { dim } => {
                if *dim < 2 {
                    return Err(invalid("euclidean dim must be >= 2"));
                }
                Geometry::Flat { dim: *dim }
            }
            ManifoldKind::Sphere { dim, curvature } => {
                if *dim < 2 {
                    return Err(invalid("sphere dim must be >= 2"));
                }
                if !(curvature.is_finite() && *curvature > 0.0) {
                    return Err(invalid("sphere curvature must be > 0"));
                }
                sphere_geometry(*dim, *curvature)
            }
            ManifoldKind::Hyperbolic { dim, curvature } => {
                if *dim < 2 {
                    return Err(invalid("hyperbolic dim must be >= 2"));
                }
                if !(curvature.is_finite() && *curvature < 0.0) {
                    return Err(invalid("hyperbolic curvature must be < 0"));
                }
                hyperbolic_geometry(*dim, *curvature)
            }
            ManifoldKind::Quadric { coefficients } => {
                if coefficients.len() < 3 {
                    return Err(invalid("quadric needs at least 3 coefficients"));
                }
                if coefficients.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
                    return Err(invalid("quadric coefficients must be > 0"));
                }
                Geometry::LevelSet {
                    q: coefficients.clone(),
                    eta: vec![1.0; coefficients.len()],
                    level: 1.0,
                }
            }
            ManifoldKind::ModelSurface { curvature } => {
                if !curvature.is_finite() {
                    return Err(invalid("model curvature must be finite"));
                }
                if *curvature > 0.0 {
                    sphere_geometry(2, *curvature)
                } else if *curvature < 0.0 {
                    hyperbolic_geometry(2, *curvature)
                } else {
                    Geometry::Flat { dim: 2 }
                }
            }
        };
        Ok(ManifoldSpec { kind, geometry })
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(ManifoldKind::Euclidean { dim })
    }

    pub fn sphere(dim: usize, curvature: f64) -> Result<Self> {
        Self::new(ManifoldKind::Sphere { dim, curvature })
    }

    pub fn hyperbolic(dim: usize, curvature: f64) -> Result<Self> {
        Self::new(ManifoldKind::Hyperbolic { dim, curvature })
    }

    pub fn quadric(coefficients: Vec<f64>) -> Result<Self> {
        Self::new(ManifoldKind::Quadric { coefficients })
    }

    pub fn model(curvature: f64) -> Result<Self> {
        Self::new(ManifoldKind::ModelSurface { curvature })
    }

    /// Truncated ellipsoid `x₁² + x₂² + Σ_{k=3}^{N} (1 − 1/k)² x_k² = 1`.
    pub fn ellipsoid_truncation(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(invalid("truncation needs N >= 3"));
        }
        let mut c = vec![1.0, 1.0];
        c.extend((3..=n).map(|k| (1.0 - 1.0 / k as f64).powi(2)));
        Self::quadric(c)
    }

    pub fn kind(&self) -> &ManifoldKind {
        &self.kind
    }

    pub(crate) fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match &self.kind {
            ManifoldKind::Euclidean { dim }
            | ManifoldKind::Sphere { dim, .. }
            | ManifoldKind::Hyperbolic { dim, .. } => *dim,
            ManifoldKind::Quadric { coefficients } => coefficients.len() - 1,
            ManifoldKind::ModelSurface { .. } => 2,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match &self.geometry {
            Geometry::Flat { dim } => *dim,
            Geometry::LevelSet { q, .. } => q.len(),
        }
    }

    /// Whether the public normal/shape-operator surface is available.
    pub fn is_embedded(&self) -> bool {
        !matches!(
            self.kind,
            ManifoldKind::Euclidean { .. } | ManifoldKind::ModelSurface { .. }
        )
    }

    pub fn constant_curvature(&self) -> Option<f64> {
        match &self.kind {
            ManifoldKind::Euclidean { .. } => Some(0.0),
            ManifoldKind::Sphere { curvature, .. }
            | ManifoldKind::Hyperbolic { curvature, .. }
            | ManifoldKind::ModelSurface { curvature } => Some(*curvature),
            ManifoldKind::Quadric { .. } => None,
        }
    }

    fn kind_name(&self) -> &'static str {
        match self.kind {
            ManifoldKind::Euclidean { .. } => "euclidean",
            ManifoldKind::Sphere { .. } => "sphere",
            ManifoldKind::Hyperbolic { .. } => "hyperbolic",
            ManifoldKind::Quadric { .. } => "quadric",
            ManifoldKind::ModelSurface { .. } => "model",
        }
    }

    /// Ambient inner product (Minkowski for hyperboloid realisations).
    pub fn inner(&self, a: &Vector, b: &Vector) -> f64 {
        self.geometry.inner(a.as_slice(), b.as_slice())
    }

    /// Norm of a spacelike (tangent) vector.
    pub fn norm(&self, a: &Vector) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    /// Relative residual of the defining equation; zero on flat kinds.
    pub fn defining_residual(&self, x: &Vector) -> f64 {
        match &self.geometry {
            Geometry::Flat { .. } => 0.0,
            Geometry::LevelSet { q, level, .. } => {
                let f: f64 = q.iter().zip(x.iter()).map(|(q, x)| q * x * x).sum();
                (f / level - 1.0).abs()
            }
        }
    }

    /// Validates ambient coordinates as a point on the manifold.
    pub fn point(&self, coords: Vector) -> Result<Point> {
        let m = self.ambient_dim();
        if coords.len() != m {
            return Err(GeometryError::DimensionMismatch {
                expected: m,
                got: coords.len(),
            });
        }
        let r = self.defining_residual(&coords);
        if !(r <= MEMBERSHIP_TOL) {
            return Err(GeometryError::OffManifold(r));
        }
        if self.is_hyperboloid() && coords[0] <= 0.0 {
            return Err(GeometryError::OffManifold(f64::INFINITY));
        }
        Ok(Point(coords))
    }

    pub fn point_from_slice(&self, coords: &[f64]) -> Result<Point> {
        self.point(Vector::from_column_slice(coords))
    }

    /// Validates ambient components as a tangent vector at `base`.
    pub fn tangent(&self, base: &Point, components: Vector) -> Result<TangentVector> {
        let m = self.ambient_dim();
        if components.len() != m {
            return Err(GeometryError::DimensionMismatch {
                expected: m,
                got: components.len(),
            });
        }
        if let Some(nu) = self.unit_normal_raw(base.coords()) {
            let c = self.inner(&components, &nu).abs();
            let scale = components.amax().max(1.0);
            if c > TANGENCY_TOL * scale {
                return Err(GeometryError::NotTangent(c));
            }
        }
        Ok(TangentVector {
            base: base.clone(),
            components,
        })
    }

    pub(crate) fn is_hyperboloid(&self) -> bool {
        matches!(&self.geometry, Geometry::LevelSet { eta, .. } if eta[0] < 0.0)
    }

    /// Unit normal at `x`, available for any level-set realisation.
    pub(crate) fn unit_normal_raw(&self, x: &Vector) -> Option<Vector> {
        match &self.geometry {
            Geometry::Flat { .. } => None,
            Geometry::LevelSet { .. } => {
                let (n, denom) = self.geometry.gradient(x.as_slice());
                Some(Vector::from_vec(n) / denom.abs().sqrt())
            }
        }
    }

    /// `⟨ν, ν⟩`: +1 for Riemannian ambients, −1 on the hyperboloid.
    pub(crate) fn normal_sign(&self) -> f64 {
        if self.is_hyperboloid() {
            -1.0
        } else {
            1.0
        }
    }

    /// Unit normal of an embedded kind.
    pub fn normal(&self, x: &Point) -> Result<Vector> {
        if !self.is_embedded() {
            return Err(GeometryError::NotEmbedded(self.kind_name().into()));
        }
        Ok(self.unit_normal_raw(x.coords()).expect("embedded kind"))
    }

    pub(crate) fn project_raw(&self, x: &Vector, w: &Vector) -> Vector {
        match self.unit_normal_raw(x) {
            None => w.clone(),
            Some(nu) => {
                let c = self.normal_sign() * self.inner(w, &nu);
                w - nu * c
            }
        }
    }

    /// Orthogonal projection of an ambient vector onto `T_x M`.
    pub fn tangent_project(&self, x: &Point, w: &Vector) -> TangentVector {
        TangentVector {
            base: x.clone(),
            components: self.project_raw(x.coords(), w),
        }
    }

    pub(crate) fn shape_raw(&self, x: &Vector, u: &Vector) -> Option<Vector> {
        match &self.geometry {
            Geometry::Flat { .. } => None,
            Geometry::LevelSet { q, eta, .. } => {
                let (_, denom) = self.geometry.gradient(x.as_slice());
                let scale = denom.abs().sqrt();
                let w = Vector::from_iterator(
                    u.len(),
                    u.iter().zip(q.iter().zip(eta)).map(|(u, (q, e))| e * q * u),
                );
                Some(self.project_raw(x, &w) / scale)
            }
        }
    }

    /// Weingarten map `S(u) = tan(D_u ν)`.
    pub fn shape_operator(&self, x: &Point, u: &TangentVector) -> Result<TangentVector> {
        if !self.is_embedded() {
            return Err(GeometryError::NotEmbedded(self.kind_name().into()));
        }
        Ok(TangentVector {
            base: x.clone(),
            components: self.shape_raw(x.coords(), u.components()).expect("embedded"),
        })
    }

    pub(crate) fn curvature_raw(&self, x: &Vector, u: &Vector, v: &Vector, w: &Vector) -> Vector {
        if let Some(k) = self.constant_curvature() {
            return (u * self.inner(v, w) - v * self.inner(u, w)) * k;
        }
        let su = self.shape_raw(x, u).expect("level set");
        let sv = self.shape_raw(x, v).expect("level set");
        let eps = self.normal_sign();
        (&su * self.inner(&sv, w) - &sv * self.inner(&su, w)) * eps
    }

    /// Riemann curvature `R(u,v)w`.
    pub fn curvature_operator(
        &self,
        x: &Point,
        u: &TangentVector,
        v: &TangentVector,
        w: &TangentVector,
    ) -> TangentVector {
        TangentVector {
            base: x.clone(),
            components: self.curvature_raw(x.coords(), u.components(), v.components(), w.components()),
        }
    }

    pub(crate) fn sectional_raw(&self, x: &Vector, u: &Vector, v: &Vector) -> Result<f64> {
        let uu = self.inner(u, u);
        let vv = self.inner(v, v);
        let uv = self.inner(u, v);
        let gram = uu * vv - uv * uv;
        if gram <= 1e-14 {
            return Err(GeometryError::DegeneratePlane(gram));
        }
        let r = self.curvature_raw(x, u, v, v);
        Ok(self.inner(&r, u) / gram)
    }

    /// Sectional curvature of the plane spanned by `u`, `v`.
    pub fn sectional_curvature(&self, x: &Point, u: &TangentVector, v: &TangentVector) -> Result<f64> {
        self.sectional_raw(x.coords(), u.components(), v.components())
    }

    /// `M_ij = ⟨R(e_j, v) v, e_i⟩` for the given orthonormal tangent vectors.
    pub(crate) fn curvature_matrix(&self, x: &[f64], v: &[f64], vecs: &[&[f64]]) -> DMatrix<f64> {
        let d = vecs.len();
        let g = &self.geometry;
        if let Some(k) = self.constant_curvature() {
            if k == 0.0 {
                return DMatrix::zeros(d, d);
            }
            let vv = g.inner(v, v);
            let ev: Vec<f64> = vecs.iter().map(|e| g.inner(e, v)).collect();
            return DMatrix::from_fn(d, d, |i, j| {
                k * (vv * g.inner(vecs[i], vecs[j]) - ev[i] * ev[j])
            });
        }
        self.embedded_curvature_matrix(x, v, vecs)
    }

    /// Same matrix from the second fundamental form, with no constant-curvature shortcut.
    pub(crate) fn embedded_curvature_matrix(&self, x: &[f64], v: &[f64], vecs: &[&[f64]]) -> DMatrix<f64> {
        let d = vecs.len();
        let g = &self.geometry;
        match &self.geometry {
            Geometry::Flat { .. } => DMatrix::zeros(d, d),
            Geometry::LevelSet { q, .. } => {
                let (_, denom) = g.gradient(x);
                let scale = denom.abs().sqrt();
                let eps = denom.signum();
                let qform = |a: &[f64], b: &[f64]| -> f64 {
                    q.iter().zip(a.iter().zip(b)).map(|(q, (a, b))| q * a * b).sum::<f64>() / scale
                };
                let svv = qform(v, v);
                let a: Vec<f64> = vecs.iter().map(|e| qform(v, e)).collect();
                let mut m = DMatrix::zeros(d, d);
                for i in 0..d {
                    for j in i..d {
                        let val = eps * (svv * qform(vecs[i], vecs[j]) - a[i] * a[j]);
                        m[(i, j)] = val;
                        m[(j, i)] = val;
                    }
                }
                m
            }
        }
    }

    /// Orthonormal tangent basis at `x`, optionally starting with `first`.
    pub(crate) fn tangent_basis(&self, x: &Vector, first: Option<&Vector>) -> Vec<Vector> {
        match first {
            Some(f) => self.tangent_basis_with(x, &[f]),
            None => self.tangent_basis_with(x, &[]),
        }
    }

    /// Orthonormal tangent basis whose leading vectors span the given ones in order.
    pub(crate) fn tangent_basis_with(&self, x: &Vector, leading: &[&Vector]) -> Vec<Vector> {
        let m = self.ambient_dim();
        let n = self.dim();
        let mut basis: Vec<Vector> = Vec::with_capacity(n);
        for f in leading {
            let mut w = self.project_raw(x, f);
            for _ in 0..2 {
                for b in &basis {
                    let c = self.inner(&w, b);
                    w -= b * c;
                }
            }
            let nw = self.norm(&w);
            if nw > 1e-12 {
                basis.push(w / nw);
            }
        }
        for k in 0..m {
            if basis.len() == n {
                break;
            }
            let mut e = Vector::zeros(m);
            e[k] = 1.0;
            let mut w = self.project_raw(x, &e);
            for _ in 0..2 {
                for b in &basis {
                    let c = self.inner(&w, b);
                    w -= b * c;
                }
            }
            let nw = self.norm(&w);
            if nw > 1e-6 {
                basis.push(w / nw);
            }
        }
        basis
    }

    /// Empirical `(L_min, H_max)` of sectional curvatures of planes containing
    /// the velocity, over `samples` evenly spaced samples of the path.
    pub fn curvature_range(&self, path: &GeodesicPath, samples: usize) -> (f64, f64) {
        if let Some(k) = self.constant_curvature() {
            return (k, k);
        }
        let all = path.samples();
        let count = samples.max(1).min(all.len());
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..count {
            let idx = if count == 1 {
                0
            } else {
                j * (all.len() - 1) / (count - 1)
            };
            let smp = &all[idx];
            let normals: Vec<&[f64]> = smp.frame[1..].iter().map(|e| e.as_slice()).collect();
            if normals.is_empty() {
                continue;
            }
            let m = self.curvature_matrix(smp.x.as_slice(), smp.v.as_slice(), &normals);
            let eig = SymmetricEigen::new(m);
            for ev in eig.eigenvalues.iter() {
                lo = lo.min(*ev);
                hi = hi.max(*ev);
            }
        }
        (lo, hi)
    }
}

fn sphere_geometry(dim: usize, k: f64) -> Geometry {
    Geometry::LevelSet {
        q: vec![1.0; dim + 1],
        eta: vec![1.0; dim + 1],
        level: 1.0 / k,
    }
}

fn hyperbolic_geometry(dim: usize, k: f64) -> Geometry {
    let mut q = vec![1.0; dim + 1];
    q[0] = -1.0;
    let eta = q.clone();
    Geometry::LevelSet {
        q,
        eta,
        level: 1.0 / k,
    }
}

impl Geometry {
    #[inline]
    pub(crate) fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Geometry::Flat { .. } => a.iter().zip(b).map(|(a, b)| a * b).sum(),
            Geometry::LevelSet { eta, .. } => {
                eta.iter().zip(a.iter().zip(b)).map(|(e, (a, b))| e * a * b).sum()
            }
        }
    }

    /// `η`-gradient of `½ Σ q x²` and its `η`-square norm.
    pub(crate) fn gradient(&self, x: &[f64]) -> (Vec<f64>, f64) {
        match self {
            Geometry::Flat { dim } => (vec![0.0; *dim], 0.0),
            Geometry::LevelSet { q, eta, .. } => {
                let n: Vec<f64> = x.iter().zip(q.iter().zip(eta)).map(|(x, (q, e))| e * q * x).collect();
                let denom = n.iter().zip(eta).map(|(n, e)| e * n * n).sum();
                (n, denom)
            }
        }
    }

    /// Radial rescaling onto the level set.
    pub(crate) fn retract(&self, x: &mut [f64]) {
        if let Geometry::LevelSet { q, level, .. } = self {
            let f: f64 = q.iter().zip(x.iter()).map(|(q, x)| q * x * x).sum();
            let t = (level / f).sqrt();
            if t.is_finite() {
                x.iter_mut().for_each(|xi| *xi *= t);
            }
        }
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

impl fmt::Display for ManifoldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ManifoldKind::Euclidean { dim } => write!(f, "euclidean:dim={dim}"),
            ManifoldKind::Sphere { dim, curvature } => {
                write!(f, "sphere:dim={dim},K={}", fmt_f64(*curvature))
            }
            ManifoldKind::Hyperbolic { dim, curvature } => {
                write!(f, "hyperbolic:dim={dim},K={}", fmt_f64(*curvature))
            }
            ManifoldKind::Quadric { coefficients } => {
                let c: Vec<String> = coefficients.iter().map(|c| fmt_f64(*c)).collect();
                write!(f, "quadric:c={}", c.join(","))
            }
            ManifoldKind::ModelSurface { curvature } => write!(f, "model:H={}", fmt_f64(*curvature)),
        }
    }
}

/// A float or a fraction `a/b`.
fn number(s: &str) -> std::result::Result<f64, std::num::ParseFloatError> {
    match s.split_once('/') {
        Some((a, b)) => Ok(a.trim().parse::<f64>()? / b.trim().parse::<f64>()?),
        None => s.parse(),
    }
}

impl FromStr for ManifoldSpec {
    type Err = GeometryError;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let (name, body) = text
            .split_once(':')
            .ok_or_else(|| invalid(format!("missing ':' in {text:?}")))?;
        // key=value pairs; bare tokens continue the previous key's list
        let mut params: Vec<(String, Vec<String>)> = Vec::new();
        for tok in body.split(',').map(str::trim) {
            if let Some((k, v)) = tok.split_once('=') {
                params.push((k.trim().to_string(), vec![v.trim().to_string()]));
            } else if let Some(last) = params.last_mut() {
                last.1.push(tok.to_string());
            } else {
                return Err(invalid(format!("unexpected token {tok:?}")));
            }
        }
        let take = |key: &str| -> Result<&Vec<String>> {
            params
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v)
                .ok_or_else(|| invalid(format!("{name}: missing key {key}")))
        };
        let scalar = |key: &str| -> Result<f64> {
            let v = take(key)?;
            if v.len() != 1 {
                return Err(invalid(format!("{key} expects a single value")));
            }
            number(&v[0]).map_err(|e| invalid(format!("{key}: {e}")))
        };
        let dim = || -> Result<usize> {
            let v = take("dim")?;
            v[0].parse::<usize>().map_err(|e| invalid(format!("dim: {e}")))
        };
        let allowed: &[&str] = match name.trim() {
            "euclidean" => &["dim"],
            "sphere" | "hyperbolic" => &["dim", "K"],
            "quadric" => &["c"],
            "model" => &["H"],
            other => return Err(invalid(format!("unknown manifold kind {other:?}"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(invalid(format!("{name}: unknown key {k:?}")));
        }
        let kind = match name.trim() {
            "euclidean" => ManifoldKind::Euclidean { dim: dim()? },
            "sphere" => ManifoldKind::Sphere {
                dim: dim()?,
                curvature: scalar("K")?,
            },
            "hyperbolic" => ManifoldKind::Hyperbolic {
                dim: dim()?,
                curvature: scalar("K")?,
            },
            "quadric" => {
                let coefficients = take("c")?
                    .iter()
                    .map(|s| number(s).map_err(|e| invalid(format!("c: {e}"))))
                    .collect::<Result<Vec<f64>>>()?;
                ManifoldKind::Quadric { coefficients }
            }
            _ => ManifoldKind::ModelSurface {
                curvature: scalar("H")?,
            },
        };
        ManifoldSpec::new(kind)
    }
}

impl TryFrom<String> for ManifoldSpec {
    type Error = GeometryError;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<ManifoldSpec> for String {
    fn from(spec: ManifoldSpec) -> String {
        spec.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(c: &[f64]) -> Vector {
        Vector::from_column_slice(c)
    }

    #[test]
    fn quadric_normals() {
        let spec = ManifoldSpec::quadric(vec![1.0, 1.0, 4.0 / 9.0]).unwrap();
        let x = spec.point(v(&[1.0, 0.0, 0.0])).unwrap();
        assert_abs_diff_eq!(spec.normal(&x).unwrap(), v(&[1.0, 0.0, 0.0]), epsilon = 1e-15);
        let x = spec.point(v(&[0.0, 0.0, 1.5])).unwrap();
        assert_abs_diff_eq!(spec.normal(&x).unwrap(), v(&[0.0, 0.0, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn sphere_normal_and_projection() {
        let spec = ManifoldSpec::sphere(2, 1.0).unwrap();
        let x = spec.point(v(&[0.0, 0.0, 1.0])).unwrap();
        assert_abs_diff_eq!(spec.normal(&x).unwrap(), v(&[0.0, 0.0, 1.0]), epsilon = 1e-15);
        let t = spec.tangent_project(&x, &v(&[1.0, 2.0, 3.0]));
        assert_abs_diff_eq!(t.components().clone(), v(&[1.0, 2.0, 0.0]), epsilon = 1e-15);
        let again = spec.tangent_project(&x, t.components());
        assert_eq!(again.components(), t.components());
    }

    #[test]
    fn projection_of_normal_vanishes() {
        let spec = ManifoldSpec::quadric(vec![1.0, 1.0, 4.0 / 9.0]).unwrap();
        let x = spec.point(v(&[0.0, 0.0, 1.5])).unwrap();
        let t = spec.tangent_project(&x, &v(&[0.0, 0.0, 1.0]));
        assert_abs_diff_eq!(t.components().norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn chartless_kinds_are_not_embedded() {
        let e = ManifoldSpec::euclidean(3).unwrap();
        let x = e.point(v(&[0.0, 0.0, 0.0])).unwrap();
        let u = e.tangent(&x, v(&[1.0, 0.0, 0.0])).unwrap();
        assert!(matches!(e.normal(&x), Err(GeometryError::NotEmbedded(_))));
        assert!(matches!(e.shape_operator(&x, &u), Err(GeometryError::NotEmbedded(_))));
        let m = ManifoldSpec::model(-1.0).unwrap();
        let x = m.point(v(&[1.0, 0.0, 0.0])).unwrap();
        assert!(matches!(m.normal(&x), Err(GeometryError::NotEmbedded(_))));
    }

    #[test]
    fn sphere_shape_operator_is_scaled_identity() {
        let spec = ManifoldSpec::sphere(3, 4.0).unwrap();
        let x = spec.point(v(&[0.5, 0.0, 0.0, 0.0])).unwrap();
        let u = spec.tangent(&x, v(&[0.0, 0.3, -0.2, 1.0])).unwrap();
        let su = spec.shape_operator(&x, &u).unwrap();
        assert_abs_diff_eq!(su.components().clone(), u.components() * 2.0, epsilon = 1e-14);
    }

    #[test]
    fn quadric_shape_operator_matches_normal_finite_difference() {
        let a = 0.3;
        let spec = ManifoldSpec::quadric(vec![1.0, 1.0, a]).unwrap();
        let x = spec.point(v(&[0.0, 1.0, 0.0])).unwrap();
        let u = spec.tangent(&x, v(&[1.0, 0.0, 0.0])).unwrap();
        let su = spec.shape_operator(&x, &u).unwrap();
        // central differences of ν along a curve through x with velocity u
        let h = 1e-5;
        let curve = |t: f64| spec.point(v(&[t.sin(), t.cos(), 0.0])).unwrap();
        let dn = (spec.normal(&curve(h)).unwrap() - spec.normal(&curve(-h)).unwrap()) / (2.0 * h);
        let fd = spec.tangent_project(&x, &dn);
        assert_abs_diff_eq!(su.components().clone(), fd.components().clone(), epsilon = 1e-9);
        assert_abs_diff_eq!(su.components().clone(), v(&[1.0, 0.0, 0.0]), epsilon = 1e-12);
        let w = spec.tangent(&x, v(&[0.0, 0.0, 1.0])).unwrap();
        let sw = spec.shape_operator(&x, &w).unwrap();
        assert_abs_diff_eq!(sw.components().clone(), v(&[0.0, 0.0, a]), epsilon = 1e-12);
    }

    #[test]
    fn constant_curvature_tensor_values() {
        let spec = ManifoldSpec::sphere(2, 1.0).unwrap();
        let x = spec.point(v(&[0.0, 0.0, 1.0])).unwrap();
        let u = spec.tangent(&x, v(&[1.0, 0.0, 0.0])).unwrap();
        let w = spec.tangent(&x, v(&[0.0, 1.0, 0.0])).unwrap();
        let r = spec.curvature_operator(&x, &u, &w, &w);
        assert_abs_diff_eq!(r.components().clone(), u.components().clone(), epsilon = 1e-15);

        let flat = ManifoldSpec::euclidean(3).unwrap();
        let o = flat.point(v(&[1.0, 2.0, 3.0])).unwrap();
        let a = flat.tangent(&o, v(&[1.0, 2.0, 0.5])).unwrap();
        let b = flat.tangent(&o, v(&[0.0, 1.0, -1.0])).unwrap();
        assert_eq!(flat.curvature_operator(&o, &a, &b, &a).components().norm(), 0.0);
    }

    #[test]
    fn quadric_circle_plane_curvature() {
        let a3 = 4.0 / 9.0;
        let spec = ManifoldSpec::quadric(vec![1.0, 1.0, a3]).unwrap();
        for s in [0.0, 0.4, 1.3, 2.9] {
            let x = spec.point(v(&[f64::sin(s), f64::cos(s), 0.0])).unwrap();
            let vel = spec.tangent(&x, v(&[f64::cos(s), -f64::sin(s), 0.0])).unwrap();
            let e3 = spec.tangent(&x, v(&[0.0, 0.0, 1.0])).unwrap();
            let k = spec.sectional_curvature(&x, &vel, &e3).unwrap();
            assert_abs_diff_eq!(k, a3, epsilon = 1e-14);
        }
    }

    #[test]
    fn hyperbolic_planes_have_negative_curvature() {
        let spec = ManifoldSpec::hyperbolic(3, -2.0).unwrap();
        let r = (0.5f64).sqrt();
        let x = spec.point(v(&[r, 0.0, 0.0, 0.0])).unwrap();
        let u = spec.tangent(&x, v(&[0.0, 1.0, 0.2, 0.0])).unwrap();
        let w = spec.tangent(&x, v(&[0.0, 0.0, 1.0, 3.0])).unwrap();
        assert_abs_diff_eq!(spec.sectional_curvature(&x, &u, &w).unwrap(), -2.0, epsilon = 1e-13);
    }

    #[test]
    fn degenerate_plane_is_rejected() {
        let spec = ManifoldSpec::sphere(2, 1.0).unwrap();
        let x = spec.point(v(&[0.0, 0.0, 1.0])).unwrap();
        let u = spec.tangent(&x, v(&[1.0, 0.0, 0.0])).unwrap();
        let u2 = spec.tangent(&x, v(&[2.0, 0.0, 0.0])).unwrap();
        assert!(matches!(
            spec.sectional_curvature(&x, &u, &u2),
            Err(GeometryError::DegeneratePlane(_))
        ));
    }

    #[test]
    fn membership_and_tangency_are_enforced() {
        let spec = ManifoldSpec::quadric(vec![1.0, 1.0, 0.5]).unwrap();
        assert!(matches!(
            spec.point(v(&[1.0, 0.1, 0.0])),
            Err(GeometryError::OffManifold(_))
        ));
        let x = spec.point(v(&[1.0, 0.0, 0.0])).unwrap();
        assert!(matches!(
            spec.tangent(&x, v(&[1.0, 0.0, 0.0])),
            Err(GeometryError::NotTangent(_))
        ));
        assert!(ManifoldSpec::quadric(vec![1.0, -1.0, 1.0]).is_err());
        assert!(ManifoldSpec::quadric(vec![1.0, 1.0]).is_err());
        assert!(ManifoldSpec::sphere(2, -1.0).is_err());
        assert!(ManifoldSpec::hyperbolic(2, 1.0).is_err());
    }

    #[test]
    fn text_form_parses_and_prints() {
        let s: ManifoldSpec = "sphere:dim=2,K=1.0".parse().unwrap();
        assert_eq!(s, ManifoldSpec::sphere(2, 1.0).unwrap());
        let q: ManifoldSpec = "quadric:c=1,1,0.444444".parse().unwrap();
        assert_eq!(
            q.kind(),
            &ManifoldKind::Quadric {
                coefficients: vec![1.0, 1.0, 0.444444]
            }
        );
        let m: ManifoldSpec = "model:H=-1.0".parse().unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.to_string(), "model:H=-1.0");
        for text in ["euclidean:dim=4", "hyperbolic:dim=3,K=-0.25", "quadric:c=1.0,1.0,0.1"] {
            let spec: ManifoldSpec = text.parse().unwrap();
            assert_eq!(spec.to_string().parse::<ManifoldSpec>().unwrap(), spec);
        }
        let f: ManifoldSpec = "quadric:c=2/3,2/3,4/9".parse().unwrap();
        assert_eq!(f, ManifoldSpec::quadric(vec![2.0 / 3.0, 2.0 / 3.0, 4.0 / 9.0]).unwrap());
        assert!("quadric:c=1/x,1,1".parse::<ManifoldSpec>().is_err());
        assert!("sphere:dim=2".parse::<ManifoldSpec>().is_err());
        assert!("torus:dim=2".parse::<ManifoldSpec>().is_err());
        assert!("sphere:dim=2,K=1,R=3".parse::<ManifoldSpec>().is_err());
    }

    #[test]
    fn ellipsoid_truncation_coefficients() {
        let spec = ManifoldSpec::ellipsoid_truncation(4).unwrap();
        match spec.kind() {
            ManifoldKind::Quadric { coefficients } => {
                assert_eq!(coefficients.len(), 4);
                assert_abs_diff_eq!(coefficients[2], 4.0 / 9.0, epsilon = 1e-15);
                assert_abs_diff_eq!(coefficients[3], 9.0 / 16.0, epsilon = 1e-16);
            }
            _ => unreachable!(),
        }
        assert_eq!(spec.dim(), 3);
    }
}
