//! Shared oracles for the integration and acceptance suites. Everything in
//! here is deliberately independent of the library's implementation paths:
//! the eigensolver is a hand-rolled Jacobi iteration, the statistics are
//! textbook formulas.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Cyclic-by-row complex Jacobi eigensolver for Hermitian matrices.
///
/// Each rotation absorbs the phase of the targeted off-diagonal entry and
/// applies a real Givens rotation, annihilating that entry exactly. Returns
/// the (unsorted) real eigenvalues and the unitary eigenvector matrix.
pub fn jacobi_hermitian_eigs(
    a: &DMatrix<Complex64>,
    tol: f64,
    max_sweeps: usize,
) -> (Vec<f64>, DMatrix<Complex64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut v = DMatrix::<Complex64>::identity(n, n);

    let off_norm = |m: &DMatrix<Complex64>| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    s += m[(p, q)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };
    let scale = a.camax().max(1.0);

    for _ in 0..max_sweeps {
        if off_norm(&m) < tol * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let b = m[(p, q)];
                if b.norm() <= tol * scale / (n as f64) {
                    continue;
                }
                let phi = b.arg();
                let abs_b = b.norm();
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                // real Jacobi angle for [[app, |b|], [|b|, aqq]]:
                // cot(2 theta) = (app - aqq) / (2 |b|) annihilates the
                // off-diagonal of the phase-absorbed block
                let tau = (app - aqq) / (2.0 * abs_b);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // block of J: [[c e^{i phi}, -s e^{i phi}], [s, c]]
                let jpp = Complex64::from_polar(c, phi);
                let jpq = Complex64::from_polar(-s, phi);
                let jqp = Complex64::new(s, 0.0);
                let jqq = Complex64::new(c, 0.0);
                // A <- J^dag A J, applied as row and column updates
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = akp * jpp + akq * jqp;
                    m[(k, q)] = akp * jpq + akq * jqq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
                    m[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * jpp + vkq * jqp;
                    v[(k, q)] = vkp * jpq + vkq * jqq;
                }
            }
        }
    }
    let eigs = (0..n).map(|i| m[(i, i)].re).collect();
    (eigs, v)
}

/// Minimum eigenvalue and its normalized eigenvector from the Jacobi solver.
pub fn jacobi_ground_state(a: &DMatrix<Complex64>) -> (f64, DVector<Complex64>) {
    let (eigs, v) = jacobi_hermitian_eigs(a, 1e-14, 60);
    let mut best = 0;
    for i in 1..eigs.len() {
        if eigs[i] < eigs[best] {
            best = i;
        }
    }
    let mut vec = v.column(best).into_owned();
    let norm = vec.norm();
    vec /= Complex64::new(norm, 0.0);
    (eigs[best], vec)
}

/// One-sample Kolmogorov-Smirnov statistic against a CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        p += sign * (-2.0 * (k as f64 * lambda).powi(2)).exp();
    }
    (2.0 * p).clamp(0.0, 1.0)
}

/// Closed-form density of the distance between two independent uniform
/// points in a square with side `a`.
pub fn square_distance_pdf(d: f64, a: f64) -> f64 {
    let s = d / a;
    let val = if (0.0..=1.0).contains(&s) {
        2.0 * s * (s * s - 4.0 * s + std::f64::consts::PI)
    } else if s > 1.0 && s * s <= 2.0 + 1e-12 {
        let r = (s * s - 1.0).sqrt();
        2.0 * s * (4.0 * r - (s * s + 2.0 - std::f64::consts::PI) - 4.0 * r.atan())
    } else {
        0.0
    };
    val / a
}

/// CDF of [`square_distance_pdf`] by fine trapezoid quadrature.
pub struct SquareDistanceCdf {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl SquareDistanceCdf {
    pub fn new(a: f64) -> Self {
        let n = 20_000;
        let hi = a * std::f64::consts::SQRT_2;
        let grid: Vec<f64> = (0..=n).map(|i| hi * i as f64 / n as f64).collect();
        let mut cdf = vec![0.0; grid.len()];
        for i in 1..grid.len() {
            let dx = grid[i] - grid[i - 1];
            cdf[i] = cdf[i - 1]
                + 0.5 * dx * (square_distance_pdf(grid[i], a) + square_distance_pdf(grid[i - 1], a));
        }
        // normalize away the residual quadrature error
        let total = *cdf.last().unwrap();
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Self { grid, cdf }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= *self.grid.last().unwrap() {
            return 1.0;
        }
        let idx = self.grid.partition_point(|&g| g < x);
        let (x0, x1) = (self.grid[idx - 1], self.grid[idx]);
        let (y0, y1) = (self.cdf[idx - 1], self.cdf[idx]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Median of a value list.
pub fn median(values: &[f64]) -> f64 {
    let mut xs = values.to_vec();
    assert!(!xs.is_empty());
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
