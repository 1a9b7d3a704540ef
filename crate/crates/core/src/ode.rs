//! Fixed-step RK4 for the joint state `[x, frame, T, T']`.
//!
//! `frame[0]` is the velocity. The geodesic and frame equations are the
//! level-set forms `x'' = λ n`, `e' = μ n` with the multipliers chosen so the
//! constraint is preserved to second order; they remain well defined at RK
//! stage points slightly off the manifold. After each step the point is
//! rescaled onto the level set and the frame re-orthonormalised.

use nalgebra::{DMatrix, DMatrixView};

use crate::manifold::{Geometry, ManifoldSpec};

/// Which block of the frame carries the Jacobi flow.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FlowLayout {
    pub offset: usize,
    pub d: usize,
}

pub(crate) struct JointSystem<'a> {
    pub spec: &'a ManifoldSpec,
    pub m: usize,
    pub nf: usize,
    pub flow: Option<FlowLayout>,
}

impl<'a> JointSystem<'a> {
    pub fn new(spec: &'a ManifoldSpec, flow: Option<FlowLayout>) -> Self {
        JointSystem {
            spec,
            m: spec.ambient_dim(),
            nf: spec.dim(),
            flow,
        }
    }

    pub fn len(&self) -> usize {
        let d = self.flow.map_or(0, |f| f.d);
        self.m + self.nf * self.m + 2 * d * d
    }

    pub fn frame_range(&self) -> std::ops::Range<usize> {
        self.m..self.m + self.nf * self.m
    }

    pub fn t_range(&self) -> std::ops::Range<usize> {
        let d = self.flow.map_or(0, |f| f.d);
        let start = self.m + self.nf * self.m;
        start..start + d * d
    }

    pub fn dt_range(&self) -> std::ops::Range<usize> {
        let d = self.flow.map_or(0, |f| f.d);
        let start = self.m + self.nf * self.m + d * d;
        start..start + d * d
    }

    /// `M_ij = ⟨R(e_j, v) v, e_i⟩` on the flow block of the frame in `y`.
    pub fn curvature_block(&self, y: &[f64], layout: FlowLayout) -> DMatrix<f64> {
        let m = self.m;
        let x = &y[..m];
        let frame = &y[self.frame_range()];
        let v = &frame[..m];
        let d = layout.d;
        match self.spec.geometry() {
            Geometry::Flat { .. } => DMatrix::zeros(d, d),
            Geometry::LevelSet { q, .. } => {
                let (_, denom) = self.spec.geometry().gradient(x);
                let scale = denom.abs().sqrt();
                let eps = denom.signum();
                let e = DMatrixView::from_slice(&frame[layout.offset * m..(layout.offset + d) * m], m, d);
                let mut qe = e.clone_owned();
                for (k, qk) in q.iter().enumerate() {
                    qe.row_mut(k).scale_mut(*qk);
                }
                let g = e.transpose() * &qe;
                let qv = nalgebra::DVector::from_iterator(m, v.iter().zip(q).map(|(v, q)| v * q));
                let a = e.transpose() * &qv;
                let svv: f64 = v.iter().zip(qv.iter()).map(|(a, b)| a * b).sum();
                (g * svv - &a * a.transpose()) * (eps / (scale * scale))
            }
        }
    }

    pub fn deriv(&self, y: &[f64], dy: &mut [f64]) {
        let m = self.m;
        let x = &y[..m];
        let fr = self.frame_range();
        let frame = &y[fr.clone()];
        dy[..m].copy_from_slice(&frame[..m]);
        match self.spec.geometry() {
            Geometry::Flat { .. } => dy[fr.clone()].iter_mut().for_each(|z| *z = 0.0),
            Geometry::LevelSet { q, .. } => {
                let (n, denom) = self.spec.geometry().gradient(x);
                let v = &frame[..m];
                let dframe = &mut dy[fr.clone()];
                for i in 0..self.nf {
                    let e = &frame[i * m..(i + 1) * m];
                    let qve: f64 = (0..m).map(|k| q[k] * v[k] * e[k]).sum();
                    let lam = -qve / denom;
                    for k in 0..m {
                        dframe[i * m + k] = lam * n[k];
                    }
                }
            }
        }
        if let Some(layout) = self.flow {
            let d = layout.d;
            let tr = self.t_range();
            let dtr = self.dt_range();
            dy[tr.clone()].copy_from_slice(&y[dtr.clone()]);
            let curv = self.curvature_block(y, layout);
            let t = DMatrixView::from_slice(&y[tr], d, d);
            let acc = -(curv * t);
            dy[dtr].copy_from_slice(acc.as_slice());
        }
    }

    pub fn rk4(&self, y: &mut [f64], h: f64, work: &mut Rk4Work) {
        let len = y.len();
        work.ensure(len);
        let Rk4Work { k1, k2, k3, k4, tmp } = work;
        self.deriv(y, k1);
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        self.deriv(tmp, k2);
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        self.deriv(tmp, k3);
        for i in 0..len {
            tmp[i] = y[i] + h * k3[i];
        }
        self.deriv(tmp, k4);
        for i in 0..len {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// Rescale `x` onto the level set, project and re-orthonormalise the frame.
    pub fn retract(&self, y: &mut [f64]) {
        let m = self.m;
        let geom = self.spec.geometry();
        let (xs, rest) = y.split_at_mut(m);
        geom.retract(xs);
        let frame = &mut rest[..self.nf * m];
        let grad = match geom {
            Geometry::Flat { .. } => None,
            Geometry::LevelSet { .. } => Some(geom.gradient(xs)),
        };
        for i in 0..self.nf {
            let (done, cur) = frame.split_at_mut(i * m);
            let e = &mut cur[..m];
            if let Some((n, denom)) = &grad {
                let c = geom.inner(e, n) / denom;
                e.iter_mut().zip(n).for_each(|(e, n)| *e -= c * n);
            }
            for _ in 0..2 {
                for j in 0..i {
                    let b = &done[j * m..(j + 1) * m];
                    let c = geom.inner(e, b);
                    e.iter_mut().zip(b).for_each(|(e, b)| *e -= c * b);
                }
            }
            let nrm = geom.inner(e, e).max(0.0).sqrt();
            e.iter_mut().for_each(|z| *z /= nrm);
        }
    }
}

#[derive(Default)]
pub(crate) struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn ensure(&mut self, len: usize) {
        for b in [&mut self.k1, &mut self.k2, &mut self.k3, &mut self.k4, &mut self.tmp] {
            if b.len() != len {
                b.resize(len, 0.0);
            }
        }
    }
}

/// Number of steps and actual step for a path of the given length.
pub(crate) fn step_grid(length: f64, step: f64) -> (usize, f64) {
    let n = (length / step - 1e-9).ceil().max(1.0) as usize;
    (n, length / n as f64)
}
