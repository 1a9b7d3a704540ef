//! Small dense helpers shared by the flow and comparison code.

use nalgebra::DMatrix;

/// Extreme singular values `(σ_min, σ_max)`; `(0, 0)` for an empty matrix.
pub(crate) fn singular_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0.0, 0.0);
    }
    let sv = m.clone().svd(false, false).singular_values;
    let lo = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sv.iter().cloned().fold(0.0, f64::max);
    (lo, hi)
}

pub(crate) fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sv
}

pub(crate) fn det_sign(m: &DMatrix<f64>) -> i8 {
    let d = m.clone().lu().determinant();
    if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    }
}

/// Least-squares solution of `a x = b` through the SVD.
pub(crate) fn lstsq(a: &DMatrix<f64>, b: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.solve(b, smax * 1e-13)
        .unwrap_or_else(|_| nalgebra::DVector::zeros(a.ncols()))
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub(crate) fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(c, fc), (d, fd), (x, fx)]
        .into_iter()
        .min_by(|p, q| p.1.partial_cmp(&q.1).unwrap())
        .unwrap()
}

/// Bisection for a sign change of `f` on `[a, b]`.
pub(crate) fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a) <= tol || m == a || m == b {
            return Some(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Composite Simpson rule on equally spaced values; a trailing odd panel
/// uses the three-eighths rule.
pub(crate) fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        3 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        4 => 3.0 * h / 8.0 * (values[0] + 3.0 * values[1] + 3.0 * values[2] + values[3]),
        _ => {
            let intervals = n - 1;
            let (simpson_end, tail) = if intervals % 2 == 0 {
                (n - 1, false)
            } else {
                (n - 4, true)
            };
            let mut acc = values[0] + values[simpson_end];
            for (i, v) in values.iter().enumerate().take(simpson_end).skip(1) {
                acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = acc * h / 3.0;
            if tail {
                let k = simpson_end;
                total += 3.0 * h / 8.0
                    * (values[k] + 3.0 * values[k + 1] + 3.0 * values[k + 2] + values[k + 3]);
            }
            total
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_is_exact_on_cubics() {
        for n in [3usize, 4, 5, 6, 7, 10, 11] {
            let h = 1.0 / (n - 1) as f64;
            let vals: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
            assert_abs_diff_eq!(simpson(&vals, h), 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn golden_finds_kink() {
        let (x, fx) = golden_min(|s: f64| s.sin().abs(), 3.0, 3.3, 1e-12);
        assert_abs_diff_eq!(x, std::f64::consts::PI, epsilon = 1e-10);
        assert!(fx < 1e-10);
    }

    #[test]
    fn bisect_finds_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert_abs_diff_eq!(r, 2f64.sqrt(), epsilon = 1e-13);
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-9).is_none());
    }

    #[test]
    fn singular_extremes_of_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -0.5, 2.0]));
        assert_eq!(singular_extremes(&m), (0.5, 3.0));
        assert_eq!(det_sign(&m), -1);
    }
}
