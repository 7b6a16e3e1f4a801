//! Symmetric tridiagonal eigensolver (implicit QL with Wilkinson shifts).
//!
//! The line operators produced by the scalar models are real symmetric
//! tridiagonal matrices of dimension up to ~2^14; the dense solver would be
//! O(n^3) there, while QL without eigenvectors is O(n^2). The same routine
//! accumulates eigenvectors on demand, which is what the Golub-Welsch
//! quadrature-node computation needs at small dimension.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (`off[i]` couples rows `i` and `i + 1`), ascending.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    let mut d = diag.to_vec();
    ql_implicit(&mut d, off, None)?;
    d.sort_by(|a, b| a.partial_cmp(b).expect("non-finite eigenvalue"));
    Ok(d)
}

/// Eigenvalues and orthonormal eigenvectors (columns, matching the ascending
/// eigenvalue order) of a symmetric tridiagonal matrix.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut z = DMatrix::<f64>::identity(n, n);
    ql_implicit(&mut d, off, Some(&mut z))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("non-finite eigenvalue"));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &z.column(src));
    }
    Ok((values, vectors))
}

fn ql_implicit(d: &mut [f64], off: &[f64], mut z: Option<&mut DMatrix<f64>>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    assert!(
        off.len() + 1 == n || (n == 1 && off.is_empty()),
        "off-diagonal length must be n - 1"
    );
    let mut e = vec![0.0f64; n];
    e[..n - 1].copy_from_slice(off);

    // Absolute deflation floor: off-diagonals below EPS * ||A|| are noise at
    // the matrix scale and must deflate even when the neighboring diagonal
    // entries are themselves tiny (the relative test alone stagnates there).
    let scale = d
        .iter()
        .chain(e.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    let floor = f64::EPSILON * scale;

    for l in 0..n {
        let mut iter = 0usize;
        loop {
            // Locate a negligible off-diagonal element.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd || e[m].abs() <= floor {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::Eigensolver {
                    dim: n,
                    condition: condition_estimate(d, &e),
                });
            }
            // Wilkinson shift.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    for k in 0..n {
                        f = z[(k, i + 1)];
                        z[(k, i + 1)] = s * z[(k, i)] + c * f;
                        z[(k, i)] = c * z[(k, i)] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn condition_estimate(d: &[f64], e: &[f64]) -> f64 {
    let hi = d
        .iter()
        .chain(e.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    let lo = d.iter().fold(f64::INFINITY, |acc, x| acc.min(x.abs()));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Full eigendecomposition of a dense complex hermitian matrix: Householder
/// reduction to real symmetric tridiagonal form (with the accumulated
/// unitary), then implicit QL. Returns ascending eigenvalues and the matching
/// unitary of eigenvectors.
pub fn hermitian_eigen(matrix: &DMatrix<Complex64>) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "matrix must be square");
    if n == 0 {
        return Ok((vec![], DMatrix::zeros(0, 0)));
    }
    if n == 1 {
        return Ok((vec![matrix[(0, 0)].re], DMatrix::identity(1, 1)));
    }

    let mut a = matrix.clone();
    let mut q = DMatrix::<Complex64>::identity(n, n);

    // Householder reduction: zero column k below the subdiagonal.
    for k in 0..n.saturating_sub(2) {
        let xnorm2: f64 = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum();
        let alpha = xnorm2.sqrt();
        if alpha == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() > 0.0 {
            x0 / x0.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let beta = -phase * alpha;
        // Householder vector v = x - beta e1 (supported on rows k+1..n).
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for i in k + 1..n {
            v[i] = a[(i, k)];
        }
        v[k + 1] -= beta;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let tau = 2.0 / vnorm2;

        // p = tau * A v (trailing block only).
        let mut p = vec![Complex64::new(0.0, 0.0); n];
        for i in k + 1..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in k + 1..n {
                acc += a[(i, j)] * v[j];
            }
            p[i] = acc * tau;
        }
        // w = p - (tau/2)(v* p) v.
        let vp: Complex64 = (k + 1..n).map(|i| v[i].conj() * p[i]).sum();
        let kappa = vp * (tau / 2.0);
        for i in k + 1..n {
            p[i] -= kappa * v[i];
        }
        // A <- A - v w* - w v* on the trailing block.
        for i in k + 1..n {
            for j in k + 1..n {
                let delta = v[i] * p[j].conj() + p[i] * v[j].conj();
                a[(i, j)] -= delta;
            }
        }
        a[(k + 1, k)] = beta;
        a[(k, k + 1)] = beta.conj();
        for i in k + 2..n {
            a[(i, k)] = Complex64::new(0.0, 0.0);
            a[(k, i)] = Complex64::new(0.0, 0.0);
        }
        // Q <- Q (I - tau v v*): row_i -= (row_i . v) tau v*.
        for row in 0..n {
            let mut dot = Complex64::new(0.0, 0.0);
            for j in k + 1..n {
                dot += q[(row, j)] * v[j];
            }
            let scale = dot * tau;
            for j in k + 1..n {
                q[(row, j)] -= scale * v[j].conj();
            }
        }
    }

    // Rotate the (possibly complex) subdiagonal onto the real axis with a
    // diagonal unitary, absorbed into Q.
    let mut diag = vec![0.0f64; n];
    let mut off = vec![0.0f64; n.saturating_sub(1)];
    let mut dp = vec![Complex64::new(1.0, 0.0); n];
    for k in 0..n {
        diag[k] = a[(k, k)].re;
    }
    for k in 0..n - 1 {
        let beta = a[(k + 1, k)];
        let mag = beta.norm();
        off[k] = mag;
        dp[k + 1] = if mag > 0.0 {
            beta * dp[k] / mag
        } else {
            dp[k]
        };
    }
    for j in 0..n {
        for i in 0..n {
            q[(i, j)] *= dp[j];
        }
    }

    let (values, z) = tridiagonal_eigen(&diag, &off)?;
    let zc = z.map(|x| Complex64::new(x, 0.0));
    let vectors = q * zc;
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_matrix_is_fixed_point() {
        let vals = tridiagonal_eigenvalues(&[3.0, 1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn matches_dirichlet_laplacian_spectrum() {
        // Second-difference matrix tridiag(-1, 2, -1) has eigenvalues
        // 2 - 2 cos(k pi / (n + 1)).
        let n = 64;
        let diag = vec![2.0; n];
        let off = vec![-1.0; n - 1];
        let vals = tridiagonal_eigenvalues(&diag, &off).unwrap();
        for (k, v) in vals.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert_relative_eq!(*v, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn eigenvectors_reconstruct_matrix() {
        let diag = [1.0, -2.0, 0.5, 3.0];
        let off = [0.7, -0.3, 1.1];
        let (vals, vecs) = tridiagonal_eigen(&diag, &off).unwrap();
        let mut t = DMatrix::<f64>::zeros(4, 4);
        for i in 0..4 {
            t[(i, i)] = diag[i];
        }
        for i in 0..3 {
            t[(i, i + 1)] = off[i];
            t[(i + 1, i)] = off[i];
        }
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals));
        let rec = &vecs * lambda * vecs.transpose();
        assert_relative_eq!((rec - t).norm(), 0.0, epsilon = 1e-12);
    }

    fn check_hermitian_eigen(m: &DMatrix<Complex64>, tol: f64) {
        let (vals, vecs) = hermitian_eigen(m).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]), "ascending order");
        let n = m.nrows();
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            vals.iter().map(|&x| Complex64::new(x, 0.0)),
        ));
        let rec_err = (&vecs * lambda * vecs.adjoint() - m).norm() / m.norm().max(1e-300);
        assert!(rec_err < tol, "reconstruction error {rec_err:.3e}");
        let ortho = (vecs.adjoint() * &vecs - DMatrix::<Complex64>::identity(n, n)).norm();
        assert!(ortho < tol, "orthonormality error {ortho:.3e}");
    }

    #[test]
    fn hermitian_eigen_random_matrices() {
        for (dim, seed) in [(2usize, 1u64), (3, 2), (5, 3), (17, 4), (40, 5)] {
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15);
            let mut rand = move || {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            };
            let g = DMatrix::<Complex64>::from_fn(dim, dim, |_, _| {
                Complex64::new(rand(), rand())
            });
            let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
            check_hermitian_eigen(&h, 1e-12);
        }
    }

    #[test]
    fn hermitian_eigen_clustered_spectrum() {
        // Nearly degenerate eigenvalues with a unitary conjugation.
        let n = 12;
        let mut state = 99u64;
        let mut rand = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let g = DMatrix::<Complex64>::from_fn(n, n, |_, _| Complex64::new(rand(), rand()));
        let q = g.qr().q();
        let mut d = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            let v = if i < 6 { 1.0 + 1e-13 * i as f64 } else { (i as f64) * 0.5 };
            d[(i, i)] = Complex64::new(v, 0.0);
        }
        let h = &q * d * q.adjoint();
        let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        check_hermitian_eigen(&h, 1e-11);
    }

    #[test]
    fn hermitian_eigen_wide_dynamic_range() {
        // Gram matrix with singular values over many orders of magnitude.
        let n = 48;
        let mut state = 7u64;
        let mut rand = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut g = DMatrix::<Complex64>::from_fn(n, n, |_, _| Complex64::new(rand(), rand()));
        for j in 0..n {
            let s = 10f64.powf(-10.0 * j as f64 / n as f64);
            for i in 0..n {
                g[(i, j)] *= Complex64::new(s, 0.0);
            }
        }
        let h = g.adjoint() * &g;
        check_hermitian_eigen(&h, 1e-12);
    }

    #[test]
    fn hermitian_eigen_small_and_diagonal() {
        check_hermitian_eigen(&DMatrix::<Complex64>::identity(1, 1), 1e-15);
        let d = DMatrix::<Complex64>::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(3.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 0.0),
        ]));
        check_hermitian_eigen(&d, 1e-15);
        // 2x2 with complex coupling.
        let m = DMatrix::<Complex64>::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.3, -0.7),
                Complex64::new(0.3, 0.7),
                Complex64::new(-2.0, 0.0),
            ],
        );
        check_hermitian_eigen(&m, 1e-14);
    }
}
