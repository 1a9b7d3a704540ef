//! Seeded sampling of points and tangent vectors.
//!
//! All randomness goes through [`ChaCha8Rng`]; tangent vectors are standard
//! Gaussian ambient vectors projected onto the tangent space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::manifold::{Geometry, ManifoldSpec, Vector};

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector<R: Rng>(len: usize, rng: &mut R) -> Vector {
    Vector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Random point: uniform on spheres, radially projected Gaussian on quadrics,
/// within geodesic radius 1.5 of the vertex on hyperboloids, standard Gaussian
/// on flat kinds.
pub fn random_point<R: Rng>(spec: &ManifoldSpec, rng: &mut R) -> Vector {
    let m = spec.ambient_dim();
    match spec.geometry() {
        Geometry::Flat { .. } => gaussian_vector(m, rng),
        Geometry::LevelSet { eta, level, .. } => {
            if eta[0] < 0.0 {
                let a = (-1.0 / level).sqrt();
                let mut dir = gaussian_vector(m, rng);
                dir[0] = 0.0;
                let dir = dir.normalize();
                let r: f64 = rng.gen_range(0.0..1.5);
                let mut x = dir * ((a * r).sinh() / a);
                x[0] = (a * r).cosh() / a;
                x
            } else {
                loop {
                    let mut x = gaussian_vector(m, rng);
                    if x.norm() < 1e-6 {
                        continue;
                    }
                    spec.geometry().retract(x.as_mut_slice());
                    return x;
                }
            }
        }
    }
}

/// Random unit tangent vector at `x`, orthogonal to every vector in `avoid`
/// (assumed orthonormal).
pub fn random_unit_tangent<R: Rng>(spec: &ManifoldSpec, x: &Vector, avoid: &[&Vector], rng: &mut R) -> Vector {
    loop {
        let g = gaussian_vector(spec.ambient_dim(), rng);
        let mut t = spec.project_raw(x, &g);
        for a in avoid {
            let c = spec.inner(&t, a);
            t -= *a * c;
        }
        let n = spec.norm(&t);
        if n > 1e-8 {
            return t / n;
        }
    }
}
