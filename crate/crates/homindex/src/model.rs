//! Model ingredients: inner operators, line discretization, and assembly of
//! the Schroedinger pair.
//!
//! The two operators `H_minus` and `H_plus` are assembled directly from
//!
//! `H_-+ = Delta_1 (x) I + I (x) Delta_2 + h.(D2 A + A D2) + h^2.A^2 -+ h'.A`
//!
//! and never as products of a truncated first-order operator: products of a
//! single square matrix `D` give isospectral `D* D` and `D D*` and every
//! trace difference collapses to zero regardless of the model. The pair and
//! `F = H_plus - H_minus` share one assembly path so the identity holds
//! bit-for-bit.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::eigen::tridiagonal_eigenvalues;
use crate::operator::{kron, schatten_norm, CMatrix, HermitianOperator};
use crate::profile::Profile;
use crate::{Error, Result};

/// Default cap on the total dense dimension `n * inner_dim` of assembled
/// tensor-space matrices.
pub const DEFAULT_DENSE_CAP: usize = 2048;

/// Generator for the inner operator `D2`.
#[derive(Debug, Clone)]
pub enum D2Generator {
    /// 1x1 matrix `[value]`.
    Scalar(f64),
    /// `diag(-k_max, ..., -1, 0, 1, ..., k_max)`, dimension `2 k_max + 1`.
    DiagonalLinear { k_max: u32 },
    /// `diag(1/2, 3/2, ..., dim - 1/2)`.
    Harmonic { dim: usize },
    /// Explicit hermitian matrix.
    Explicit(HermitianOperator),
}

/// Generator for the bounded perturbation direction `A`.
#[derive(Debug, Clone)]
pub enum AGenerator {
    /// 1x1 matrix `[value]`.
    Scalar(f64),
    /// Explicit hermitian matrix.
    Explicit(HermitianOperator),
    /// Seeded dense GUE-style hermitian matrix.
    Random { seed: u64, scale: f64 },
    /// Seeded hermitian matrix with entries zero beyond the given bandwidth.
    Banded {
        seed: u64,
        bandwidth: usize,
        scale: f64,
    },
}

/// Declarative description of one experiment's operator content.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub inner_dim: usize,
    pub d2: D2Generator,
    pub a: AGenerator,
    pub profile: Profile,
    pub epsilon: f64,
}

impl ModelSpec {
    /// Scalar half-kink preset: `D2 = 0`, `A = 1`, `h: 0 -> 1`.
    pub fn scalar_half_kink() -> Self {
        ModelSpec {
            inner_dim: 1,
            d2: D2Generator::Scalar(0.0),
            a: AGenerator::Scalar(1.0),
            profile: Profile::half_kink(8.0).expect("positive cutoff"),
            epsilon: 1.0,
        }
    }

    /// Scalar full-kink preset: `D2 = 0`, `A = 1`, `h: -1 -> 1`.
    pub fn scalar_full_kink() -> Self {
        ModelSpec {
            inner_dim: 1,
            d2: D2Generator::Scalar(0.0),
            a: AGenerator::Scalar(1.0),
            profile: Profile::tanh_clamped(8.0).expect("positive cutoff"),
            epsilon: 1.0,
        }
    }

    /// Replaces the rescaling parameter.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Ok(ModelSpec {
            epsilon,
            profile: self.profile.clone(),
            ..self.clone()
        })
    }

    /// Profile at this model's scaling.
    pub fn scaled_profile(&self) -> Result<Profile> {
        self.profile.with_epsilon(self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.inner_dim == 0 {
            return Err(Error::Config("inner_dim must be positive".into()));
        }
        let d2_dim = generator_dim_d2(&self.d2);
        if d2_dim != self.inner_dim {
            return Err(Error::Config(format!(
                "d2 generator produces dimension {d2_dim}, spec says {}",
                self.inner_dim
            )));
        }
        let a_dim = generator_dim_a(&self.a, self.inner_dim);
        if a_dim != self.inner_dim {
            return Err(Error::Config(format!(
                "a generator produces dimension {a_dim}, spec says {}",
                self.inner_dim
            )));
        }
        if matches!(self.d2, D2Generator::Scalar(_))
            && matches!(self.a, AGenerator::Scalar(_))
            && self.inner_dim != 1
        {
            return Err(Error::Config("scalar models must have inner_dim = 1".into()));
        }
        Ok(())
    }
}

fn generator_dim_d2(g: &D2Generator) -> usize {
    match g {
        D2Generator::Scalar(_) => 1,
        D2Generator::DiagonalLinear { k_max } => 2 * *k_max as usize + 1,
        D2Generator::Harmonic { dim } => *dim,
        D2Generator::Explicit(m) => m.dim(),
    }
}

fn generator_dim_a(g: &AGenerator, inner_dim: usize) -> usize {
    match g {
        AGenerator::Scalar(_) => 1,
        AGenerator::Explicit(m) => m.dim(),
        AGenerator::Random { .. } | AGenerator::Banded { .. } => inner_dim,
    }
}

/// Builds `(D2, A)` from the generators; deterministic given the seeds.
pub fn build_inner_pair(spec: &ModelSpec) -> Result<(HermitianOperator, HermitianOperator)> {
    spec.validate()?;
    let d2 = match &spec.d2 {
        D2Generator::Scalar(v) => HermitianOperator::from_diagonal(&[*v]),
        D2Generator::DiagonalLinear { k_max } => {
            let k = *k_max as i64;
            let diag: Vec<f64> = (-k..=k).map(|x| x as f64).collect();
            HermitianOperator::from_diagonal(&diag)
        }
        D2Generator::Harmonic { dim } => {
            let diag: Vec<f64> = (0..*dim).map(|n| n as f64 + 0.5).collect();
            HermitianOperator::from_diagonal(&diag)
        }
        D2Generator::Explicit(m) => m.clone(),
    };
    let a = match &spec.a {
        AGenerator::Scalar(v) => HermitianOperator::from_diagonal(&[*v]),
        AGenerator::Explicit(m) => m.clone(),
        AGenerator::Random { seed, scale } => {
            crate::operator::random_hermitian(spec.inner_dim, *seed, *scale)
        }
        AGenerator::Banded {
            seed,
            bandwidth,
            scale,
        } => crate::operator::random_banded_hermitian(spec.inner_dim, *seed, *bandwidth, *scale),
    };
    Ok((d2, a))
}

/// Boundary condition of the line discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    Dirichlet,
}

/// Uniform grid on `[-T, T]` with Dirichlet ends; the `n` interior points
/// carry the discretized operators.
#[derive(Debug, Clone, PartialEq)]
pub struct LineDiscretization {
    pub t_half: f64,
    pub n: usize,
    pub bc: BoundaryCondition,
    /// Required ratio between `T` and the rescaled profile support `K / eps`.
    pub safety_factor: f64,
}

impl LineDiscretization {
    pub fn new(t_half: f64, n: usize) -> Self {
        LineDiscretization {
            t_half,
            n,
            bc: BoundaryCondition::Dirichlet,
            safety_factor: 4.0,
        }
    }

    pub fn with_safety_factor(mut self, safety_factor: f64) -> Self {
        self.safety_factor = safety_factor;
        self
    }

    /// Half of the grid spacing, `T / (n + 1)`; kept separate so the grid can
    /// be generated exactly antisymmetric.
    fn half_spacing(&self) -> f64 {
        self.t_half / (self.n as f64 + 1.0)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_spacing()
    }

    /// Interior grid points; antisymmetric under `k -> n - 1 - k` exactly.
    pub fn grid(&self) -> Vec<f64> {
        let half = self.half_spacing();
        let n = self.n as i64;
        (0..self.n)
            .map(|k| (2 * (k as i64 + 1) - (n + 1)) as f64 * half)
            .collect()
    }

    /// Same domain, `factor` times as many interior points.
    pub fn refined(&self, factor: usize) -> Self {
        LineDiscretization {
            n: self.n * factor,
            ..self.clone()
        }
    }

    /// Validates the grid against a model's rescaled profile support.
    pub fn validate_for(&self, spec: &ModelSpec) -> Result<()> {
        if self.n < 16 {
            return Err(Error::Config(format!("n must be >= 16, got {}", self.n)));
        }
        if !(self.t_half > 0.0) {
            return Err(Error::Config(format!(
                "domain half-length must be positive, got {}",
                self.t_half
            )));
        }
        let support = spec.scaled_profile()?.cutoff();
        if self.t_half < self.safety_factor * support {
            return Err(Error::Config(format!(
                "domain half-length {} is below safety_factor {} x profile support {support}",
                self.t_half, self.safety_factor
            )));
        }
        Ok(())
    }
}

/// Dense line operators on the interior grid: the Dirichlet second-difference
/// Laplacian `Delta_1`, the centered first difference `d/dt` (exactly
/// antisymmetric), and the grid itself.
pub fn build_line_operators(
    disc: &LineDiscretization,
) -> Result<(HermitianOperator, DMatrix<f64>, Vec<f64>)> {
    if disc.n < 16 {
        return Err(Error::Config(format!("n must be >= 16, got {}", disc.n)));
    }
    let n = disc.n;
    let sp = disc.spacing();
    let c = 1.0 / (sp * sp);
    let mut laplacian = DMatrix::<f64>::zeros(n, n);
    let mut d_t = DMatrix::<f64>::zeros(n, n);
    let half_inv = 1.0 / (2.0 * sp);
    for k in 0..n {
        laplacian[(k, k)] = 2.0 * c;
        if k + 1 < n {
            laplacian[(k, k + 1)] = -c;
            laplacian[(k + 1, k)] = -c;
            d_t[(k, k + 1)] = half_inv;
            d_t[(k + 1, k)] = -half_inv;
        }
    }
    Ok((HermitianOperator::from_real(&laplacian)?, d_t, disc.grid()))
}

/// Pieces shared by every assembled tensor-space operator.
struct AssemblyParts {
    /// Sum of all sign-independent terms.
    shared: CMatrix,
    /// The sign term `h' . A` (without the factor 2).
    perturbation: CMatrix,
}

fn assemble_parts(spec: &ModelSpec, disc: &LineDiscretization, cap: usize) -> Result<AssemblyParts> {
    spec.validate()?;
    disc.validate_for(spec)?;
    let total = disc.n * spec.inner_dim;
    if total > cap {
        return Err(Error::Resource {
            context: "tensor-space assembly",
            requested: total,
            cap,
        });
    }
    let (d2, a) = build_inner_pair(spec)?;
    let (delta1, _, grid) = build_line_operators(disc)?;
    let profile = spec.scaled_profile()?;
    let d = spec.inner_dim;

    let delta2 = HermitianOperator::new(d2.entries() * d2.entries())?;
    let anti = d2.entries() * a.entries() + a.entries() * d2.entries();
    let w = HermitianOperator::new(anti)?;
    let a_sq = HermitianOperator::new(a.entries() * a.entries())?;

    let h: Vec<f64> = grid.iter().map(|&t| profile.h(t)).collect();
    let h_sq: Vec<f64> = h.iter().map(|&x| x * x).collect();
    let dh: Vec<f64> = grid.iter().map(|&t| profile.dh(t)).collect();

    let eye_inner = CMatrix::identity(d, d);
    let eye_line = CMatrix::identity(disc.n, disc.n);
    let diag =
        |v: &[f64]| CMatrix::from_fn(disc.n, disc.n, |i, j| {
            if i == j {
                Complex64::new(v[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });

    let mut shared = kron(delta1.entries(), &eye_inner);
    shared += kron(&eye_line, delta2.entries());
    shared += kron(&diag(&h), w.entries());
    shared += kron(&diag(&h_sq), a_sq.entries());
    let perturbation = kron(&diag(&dh), a.entries());
    Ok(AssemblyParts {
        shared,
        perturbation,
    })
}

/// Assembles the Schroedinger pair `(H_minus, H_plus)` on the tensor grid
/// with the default dense-dimension cap.
pub fn assemble_schroedinger_pair(
    spec: &ModelSpec,
    disc: &LineDiscretization,
) -> Result<(HermitianOperator, HermitianOperator)> {
    assemble_schroedinger_pair_with_cap(spec, disc, DEFAULT_DENSE_CAP)
}

pub fn assemble_schroedinger_pair_with_cap(
    spec: &ModelSpec,
    disc: &LineDiscretization,
    cap: usize,
) -> Result<(HermitianOperator, HermitianOperator)> {
    let parts = assemble_parts(spec, disc, cap)?;
    let h_minus = &parts.shared - &parts.perturbation;
    let h_plus = &parts.shared + &parts.perturbation;
    Ok((HermitianOperator::new(h_minus)?, HermitianOperator::new(h_plus)?))
}

/// Assembles `F = 2 h' . A = H_plus - H_minus` on the tensor grid. The value
/// is produced by the same additions as the pair assembly, so the identity
/// `H_plus - H_minus == F` holds bit-for-bit.
pub fn assemble_f(spec: &ModelSpec, disc: &LineDiscretization) -> Result<HermitianOperator> {
    assemble_f_with_cap(spec, disc, DEFAULT_DENSE_CAP)
}

pub fn assemble_f_with_cap(
    spec: &ModelSpec,
    disc: &LineDiscretization,
    cap: usize,
) -> Result<HermitianOperator> {
    let parts = assemble_parts(spec, disc, cap)?;
    let h_minus = &parts.shared - &parts.perturbation;
    let h_plus = &parts.shared + &parts.perturbation;
    HermitianOperator::new(h_plus - h_minus)
}

/// Real symmetric tridiagonal matrix; the shape of every scalar-model line
/// operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Ascending eigenvalues, O(n^2).
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        tridiagonal_eigenvalues(&self.diag, &self.off)
    }

    /// Dense embedding, for cross-checks at small dimension.
    pub fn to_hermitian(&self) -> Result<HermitianOperator> {
        let n = self.dim();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.off[i];
                m[(i + 1, i)] = self.off[i];
            }
        }
        HermitianOperator::from_real(&m)
    }
}

/// Tridiagonal assembly of the Schroedinger pair for scalar (inner_dim = 1)
/// models; entrywise identical to the dense assembly, O(n) storage.
pub fn assemble_tridiagonal_pair(
    spec: &ModelSpec,
    disc: &LineDiscretization,
) -> Result<(SymTridiagonal, SymTridiagonal)> {
    spec.validate()?;
    disc.validate_for(spec)?;
    if spec.inner_dim != 1 {
        return Err(Error::Config(
            "tridiagonal assembly requires inner_dim = 1".into(),
        ));
    }
    let (d2, a) = build_inner_pair(spec)?;
    let d2 = d2.entries()[(0, 0)].re;
    let a = a.entries()[(0, 0)].re;
    let profile = spec.scaled_profile()?;
    let grid = disc.grid();
    let sp = disc.spacing();
    let c = 1.0 / (sp * sp);

    // Same value construction as the dense path: Delta_1 + Delta_2 + h.W +
    // h^2.A^2 with W = D2 A + A D2, then -+ the h'.A term.
    let delta2 = d2 * d2;
    let w = d2 * a + a * d2;
    let a_sq = a * a;
    let n = disc.n;
    let mut diag_minus = Vec::with_capacity(n);
    let mut diag_plus = Vec::with_capacity(n);
    for &t in &grid {
        let h = profile.h(t);
        let h_sq = h * h;
        let dh = profile.dh(t);
        let shared = ((2.0 * c + delta2) + h * w) + h_sq * a_sq;
        let p = dh * a;
        diag_minus.push(shared - p);
        diag_plus.push(shared + p);
    }
    let off = vec![-c; n - 1];
    Ok((
        SymTridiagonal {
            diag: diag_minus,
            off: off.clone(),
        },
        SymTridiagonal {
            diag: diag_plus,
            off,
        },
    ))
}

/// Side selector for the endpoint operators `A_+- = h_+- . A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsymptoteSide {
    Plus,
    Minus,
}

/// The inner-space path operator `D2 + r . h_side . A`; no line factor.
pub fn inner_path_operator(
    spec: &ModelSpec,
    r: f64,
    side: AsymptoteSide,
) -> Result<HermitianOperator> {
    let (d2, a) = build_inner_pair(spec)?;
    let h = match side {
        AsymptoteSide::Plus => spec.profile.h_plus(),
        AsymptoteSide::Minus => spec.profile.h_minus(),
    };
    let m = d2.entries() + a.entries() * Complex64::new(r * h, 0.0);
    HermitianOperator::new(m)
}

/// Summability diagnostic: `q -> ||(1 + Delta_2)^{-r/2} A (1 + Delta_2)^{-s/2}||_q`.
/// Interpretation across truncation sizes is left to the caller.
pub fn summability_diagnostic(
    d2: &HermitianOperator,
    a: &HermitianOperator,
    r: f64,
    s: f64,
    q_values: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let delta2 = HermitianOperator::new(d2.entries() * d2.entries())?;
    let left = delta2.matrix_function(|x| (1.0 + x).powf(-r / 2.0))?;
    let right = delta2.matrix_function(|x| (1.0 + x).powf(-s / 2.0))?;
    let sandwich = left.entries() * a.entries() * right.entries();
    q_values
        .iter()
        .map(|&q| Ok((q, schatten_norm(&sandwich, q)?)))
        .collect()
}
