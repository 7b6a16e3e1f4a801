//! Dense hermitian linear algebra substrate.
//!
//! Everything downstream (model assembly, trace formulas, the resolvent
//! calculus) works with [`HermitianOperator`]: a dense complex hermitian
//! matrix with a lazily cached spectral decomposition. Operations are pure;
//! the decomposition cache is the only internal mutation and is write-once.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Dense complex matrix alias used throughout the crate.
pub type CMatrix = DMatrix<Complex64>;

/// Relative asymmetry below which symmetrization is silent.
pub const HERMITICITY_SILENT: f64 = 1e-12;
/// Relative asymmetry above which construction is rejected.
pub const HERMITICITY_REJECT: f64 = 1e-8;

/// Eigenvalues (ascending) and the matching unitary of eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

/// Shape tag for operators living on a tensor product, line factor outer:
/// index = t * dim2 + i.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KroneckerShape {
    pub dim1: usize,
    pub dim2: usize,
}

impl KroneckerShape {
    pub fn new(dim1: usize, dim2: usize) -> Self {
        KroneckerShape { dim1, dim2 }
    }

    pub fn total(&self) -> usize {
        self.dim1 * self.dim2
    }
}

/// Dense finite hermitian matrix with cached spectral decomposition; the
/// stand-in for every truncated selfadjoint operator in the model.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    entries: CMatrix,
    decomposition: OnceLock<SpectralDecomposition>,
}

impl HermitianOperator {
    /// Builds from a square complex matrix, symmetrizing `(H + H*)/2`.
    /// Asymmetry below `1e-12` (relative Frobenius) is corrected silently,
    /// above `1e-8` it is rejected, in between a warning is logged.
    pub fn new(entries: CMatrix) -> Result<Self> {
        assert_eq!(entries.nrows(), entries.ncols(), "matrix must be square");
        let scale = entries.norm().max(f64::MIN_POSITIVE);
        let asymmetry = (&entries - entries.adjoint()).norm() / scale;
        if asymmetry > HERMITICITY_REJECT {
            return Err(Error::NotHermitian {
                asymmetry,
                limit: HERMITICITY_REJECT,
            });
        }
        if asymmetry > HERMITICITY_SILENT {
            log::warn!(
                "symmetrizing matrix with relative asymmetry {asymmetry:.3e} (dim {})",
                entries.nrows()
            );
        }
        let symmetrized = (&entries + entries.adjoint()) * Complex64::new(0.5, 0.0);
        Ok(HermitianOperator {
            entries: symmetrized,
            decomposition: OnceLock::new(),
        })
    }

    /// Builds from a real symmetric matrix.
    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn identity(dim: usize) -> Self {
        HermitianOperator {
            entries: CMatrix::identity(dim, dim),
            decomposition: OnceLock::new(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianOperator {
            entries: CMatrix::zeros(dim, dim),
            decomposition: OnceLock::new(),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let entries = CMatrix::from_diagonal(&DVector::from_iterator(
            diag.len(),
            diag.iter().map(|&x| Complex64::new(x, 0.0)),
        ));
        HermitianOperator {
            entries,
            decomposition: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    /// Spectral decomposition, computed once and cached. Eigenvalues are
    /// ascending; the reconstruction `U diag(l) U*` is verified against the
    /// entries to `1e-10` relative Frobenius norm.
    pub fn spectral_decomposition(&self) -> Result<&SpectralDecomposition> {
        if let Some(d) = self.decomposition.get() {
            return Ok(d);
        }
        let computed = self.compute_decomposition()?;
        Ok(self.decomposition.get_or_init(|| computed))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<&[f64]> {
        Ok(&self.spectral_decomposition()?.eigenvalues)
    }

    fn compute_decomposition(&self) -> Result<SpectralDecomposition> {
        let dim = self.dim();
        if dim == 0 {
            return Ok(SpectralDecomposition {
                eigenvalues: vec![],
                eigenvectors: CMatrix::zeros(0, 0),
            });
        }
        let (eigenvalues, eigenvectors) =
            crate::eigen::hermitian_eigen(&self.entries).map_err(|_| Error::Eigensolver {
                dim,
                condition: condition_estimate(&self.entries),
            })?;
        let decomposition = SpectralDecomposition {
            eigenvalues,
            eigenvectors,
        };
        self.verify_decomposition(&decomposition)?;
        Ok(decomposition)
    }

    fn verify_decomposition(&self, d: &SpectralDecomposition) -> Result<()> {
        let dim = self.dim();
        let lambda = CMatrix::from_diagonal(&DVector::from_iterator(
            dim,
            d.eigenvalues.iter().map(|&x| Complex64::new(x, 0.0)),
        ));
        let reconstruction = &d.eigenvectors * lambda * d.eigenvectors.adjoint();
        let scale = self.entries.norm().max(1.0);
        let rec_err = (reconstruction - &self.entries).norm() / scale;
        let ortho_err =
            (d.eigenvectors.adjoint() * &d.eigenvectors - CMatrix::identity(dim, dim)).norm();
        if rec_err > 1e-10 || ortho_err > 1e-10 {
            return Err(Error::Eigensolver {
                dim,
                condition: condition_estimate(&self.entries),
            });
        }
        Ok(())
    }

    /// Applies `f` to the spectrum: `U diag(f(l_i)) U*`.
    pub fn matrix_function(&self, f: impl Fn(f64) -> f64) -> Result<HermitianOperator> {
        let d = self.spectral_decomposition()?;
        let mut mapped = Vec::with_capacity(d.eigenvalues.len());
        for (index, &ev) in d.eigenvalues.iter().enumerate() {
            let value = f(ev);
            if !value.is_finite() {
                return Err(Error::Domain {
                    eigenvalue: ev,
                    index,
                    message: format!("f({ev}) = {value}"),
                });
            }
            mapped.push(value);
        }
        let lambda = CMatrix::from_diagonal(&DVector::from_iterator(
            mapped.len(),
            mapped.iter().map(|&x| Complex64::new(x, 0.0)),
        ));
        let m = &d.eigenvectors * lambda * d.eigenvectors.adjoint();
        HermitianOperator::new(m)
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(*self
            .eigenvalues()?
            .first()
            .expect("empty operator has no eigenvalues"))
    }

    /// Checks positive semidefiniteness up to `-tol` slack on the bottom
    /// eigenvalue.
    pub fn is_psd(&self, tol: f64) -> Result<bool> {
        Ok(self.min_eigenvalue()? >= -tol)
    }

    /// Square root of a positive semidefinite operator; eigenvalues slightly
    /// negative from rounding (above `-1e-10 * scale`) are clipped to zero.
    pub fn psd_sqrt(&self) -> Result<HermitianOperator> {
        let scale = self
            .eigenvalues()?
            .iter()
            .fold(1.0f64, |acc, x| acc.max(x.abs()));
        let clip = -1e-10 * scale;
        let min = self.min_eigenvalue()?;
        if min < clip {
            return Err(Error::parameter(
                "operator",
                format!("not positive semidefinite: min eigenvalue {min:.3e}"),
            ));
        }
        self.matrix_function(|x| x.max(0.0).sqrt())
    }
}

fn condition_estimate(m: &CMatrix) -> f64 {
    let hi = m.norm();
    if hi == 0.0 {
        1.0
    } else {
        hi / f64::EPSILON
    }
}

/// Evaluation route for `(lambda + H)^{-s}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FractionalPowerMethod {
    /// Spectral calculus on the cached decomposition (default).
    Spectral,
    /// Independent cross-check: contour quadrature over resolvents, built on
    /// LU inversions only, composed with integer powers for s > 1.
    ContourQuadrature,
}

/// Computes `(lambda + H)^{-s}` for positive semidefinite `H`.
///
/// The quadrature route uses the representation
/// `(lambda + H)^{-q} = sin(q pi)/pi * integral_0^inf mu^{-q} (lambda + H + mu)^{-1} dmu`
/// for the fractional part `q in (0, 1)`, evaluated with a 200-point
/// double-exponential rule on `mu = lambda * exp((pi/2) sinh t)`.
pub fn fractional_resolvent_power(
    h: &HermitianOperator,
    lambda: f64,
    s: f64,
    method: FractionalPowerMethod,
) -> Result<HermitianOperator> {
    if lambda <= 0.0 {
        return Err(Error::parameter("lambda", format!("must be > 0, got {lambda}")));
    }
    if s <= 0.0 {
        return Err(Error::parameter("s", format!("must be > 0, got {s}")));
    }
    match method {
        FractionalPowerMethod::Spectral => h.matrix_function(|x| (lambda + x).powf(-s)),
        FractionalPowerMethod::ContourQuadrature => {
            let dim = h.dim();
            let k = s.floor() as usize;
            let q = s - k as f64;
            let identity = CMatrix::identity(dim, dim);
            let invert = |shift: f64| -> Result<CMatrix> {
                let m = h.entries() + &identity * Complex64::new(shift, 0.0);
                m.lu().try_inverse().ok_or(Error::Eigensolver {
                    dim,
                    condition: f64::INFINITY,
                })
            };
            let integer_part = if k > 0 {
                let r = invert(lambda)?;
                let mut acc = r.clone();
                for _ in 1..k {
                    acc = &acc * &r;
                }
                Some(acc)
            } else {
                None
            };
            let total = if q == 0.0 {
                integer_part.expect("s >= 1 when q == 0")
            } else {
                let t_max = (28.0 / (q.min(1.0 - q) * std::f64::consts::FRAC_PI_2))
                    .asinh()
                    .max(3.0);
                let rule = crate::quadrature::exp_sinh_rule(lambda, 200, t_max);
                let mut acc = CMatrix::zeros(dim, dim);
                for (mu, w) in rule {
                    let r = invert(lambda + mu)?;
                    acc += r * Complex64::new(w * mu.powf(-q), 0.0);
                }
                acc *= Complex64::new((q * std::f64::consts::PI).sin() / std::f64::consts::PI, 0.0);
                match integer_part {
                    Some(p) => p * acc,
                    None => acc,
                }
            };
            HermitianOperator::new(total)
        }
    }
}

/// Singular values of an arbitrary complex matrix, descending.
pub fn singular_values(t: &CMatrix) -> Result<Vec<f64>> {
    let gram = HermitianOperator::new(t.adjoint() * t)?;
    let mut sv: Vec<f64> = gram
        .eigenvalues()?
        .iter()
        .map(|&x| x.max(0.0).sqrt())
        .collect();
    sv.reverse();
    Ok(sv)
}

/// Schatten q-norm `(sum_i sigma_i^q)^{1/q}`; `q = 1` is the trace norm.
pub fn schatten_norm(t: &CMatrix, q: f64) -> Result<f64> {
    if q < 1.0 {
        return Err(Error::parameter("q", format!("must be >= 1, got {q}")));
    }
    let sv = singular_values(t)?;
    Ok(sv.iter().map(|s| s.powf(q)).sum::<f64>().powf(1.0 / q))
}

/// Operator (spectral) norm: the largest singular value.
pub fn operator_norm(t: &CMatrix) -> Result<f64> {
    Ok(singular_values(t)?.first().copied().unwrap_or(0.0))
}

/// Trace norm shortcut.
pub fn trace_norm(t: &CMatrix) -> Result<f64> {
    schatten_norm(t, 1.0)
}

/// Kronecker product with the line factor outer: | (t, i) > = | t > (x) | i >,
/// index = t * dim2 + i.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i1 in 0..ar {
        for j1 in 0..ac {
            let v = a[(i1, j1)];
            if v == Complex64::new(0.0, 0.0) {
                continue;
            }
            for i2 in 0..br {
                for j2 in 0..bc {
                    out[(i1 * br + i2, j1 * bc + j2)] = v * b[(i2, j2)];
                }
            }
        }
    }
    out
}

/// Partial trace over the first (line) factor:
/// `(Tr (x) 1)(R)[i, j] = sum_t R[t * dim2 + i, t * dim2 + j]`.
pub fn partial_trace_first(r: &CMatrix, shape: KroneckerShape) -> Result<CMatrix> {
    if r.nrows() != shape.total() || r.ncols() != shape.total() {
        return Err(Error::Dimension {
            context: "partial_trace_first",
            expected: shape.total(),
            actual: r.nrows(),
        });
    }
    let d2 = shape.dim2;
    let mut out = CMatrix::zeros(d2, d2);
    for t in 0..shape.dim1 {
        let base = t * d2;
        for i in 0..d2 {
            for j in 0..d2 {
                out[(i, j)] += r[(base + i, base + j)];
            }
        }
    }
    Ok(out)
}

/// Iterated commutator `delta^k(T)` with `delta(T) = [H^{1/2}, T]`; `k = 0`
/// returns `T` unchanged.
pub fn iterated_commutator(h: &HermitianOperator, t: &CMatrix, k: usize) -> Result<CMatrix> {
    if k == 0 {
        return Ok(t.clone());
    }
    let root = h.psd_sqrt()?;
    let s = root.entries();
    let mut acc = t.clone();
    for _ in 0..k {
        acc = s * &acc - &acc * s;
    }
    Ok(acc)
}

/// k-th power of the automorphism `sigma(T) = (Delta + 1) T (Delta + 1)^{-1}`.
pub fn sigma_conjugate(delta: &HermitianOperator, t: &CMatrix, k: usize) -> Result<CMatrix> {
    if k == 0 {
        return Ok(t.clone());
    }
    let kf = k as i32;
    let left = delta.matrix_function(|x| (x + 1.0).powi(kf))?;
    let right = delta.matrix_function(|x| (x + 1.0).powi(-kf))?;
    Ok(left.entries() * t * right.entries())
}

/// Seeded GUE-style hermitian matrix with operator norm of order `2 * scale`.
pub fn random_hermitian(dim: usize, seed: u64, scale: f64) -> HermitianOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let g = CMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = normal.sample(&mut rng);
        let im: f64 = normal.sample(&mut rng);
        Complex64::new(re, im) / (2.0 * dim as f64).sqrt()
    });
    let entries = (&g + g.adjoint()) * Complex64::new(scale, 0.0);
    HermitianOperator::new(entries).expect("symmetrized by construction")
}

/// Seeded random banded hermitian matrix (entries zero for |i - j| > bandwidth).
pub fn random_banded_hermitian(
    dim: usize,
    seed: u64,
    bandwidth: usize,
    scale: f64,
) -> HermitianOperator {
    let full = random_hermitian(dim, seed, scale);
    let entries = CMatrix::from_fn(dim, dim, |i, j| {
        if i.abs_diff(j) <= bandwidth {
            full.entries()[(i, j)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    HermitianOperator::new(entries).expect("band cut preserves hermiticity")
}

/// Seeded Haar-like random unitary from the QR factorization of a complex
/// Gaussian matrix.
pub fn random_unitary(dim: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let g = CMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = normal.sample(&mut rng);
        let im: f64 = normal.sample(&mut rng);
        Complex64::new(re, im)
    });
    let qr = g.qr();
    qr.q()
}

/// Complex general (non-hermitian) seeded matrix, for tests.
pub fn random_complex_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = normal.sample(&mut rng);
        let im: f64 = normal.sample(&mut rng);
        Complex64::new(re, im)
    })
}
