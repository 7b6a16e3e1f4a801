//! Both sides of the trace identity, the Witten sweep, the spectral-flow
//! oracle, and the quadrature identities on the inner space.
//!
//! The two sides share no numerics: the left side is built from eigenvalue
//! sums of the independently assembled pair on the line grid, the right side
//! from inner-space path operators and quadrature over the flow parameter.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::model::{
    assemble_schroedinger_pair_with_cap, assemble_tridiagonal_pair, build_inner_pair,
    inner_path_operator, AsymptoteSide, LineDiscretization, ModelSpec, DEFAULT_DENSE_CAP,
};
use crate::operator::{CMatrix, HermitianOperator};
use crate::quadrature::{
    adaptive_gauss_kronrod, gauss_legendre_fixed, pairwise_sum, QuadratureConfig,
};
use crate::{Error, Result};

/// Structured numeric result of one trace evaluation.
#[derive(Debug, Clone)]
pub struct TraceReport {
    pub value: f64,
    pub m: u32,
    pub lambda: f64,
    pub disc: Option<LineDiscretization>,
    /// Absolute difference between the two finest refinement levels used
    /// (or the quadrature error estimate for grid-free evaluations).
    pub error_estimate: f64,
    /// Wall-clock seconds spent producing the value.
    pub wall_time: f64,
}

/// Evaluation route for the constant in front of the flow integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CConstantMethod {
    /// `Gamma(m + 1/2) / (sqrt(pi) Gamma(m))`.
    Gamma,
    /// `(m / pi) integral (1 + eta^2)^{-m-1} d eta`, numerically.
    Quadrature,
}

/// The constant `C_{m + 1/2}` relating the two sides.
pub fn c_constant(m: u32, method: CConstantMethod) -> Result<f64> {
    if m < 1 {
        return Err(Error::parameter("m", "must be >= 1"));
    }
    match method {
        CConstantMethod::Gamma => {
            let mf = m as f64;
            let ln = statrs::function::gamma::ln_gamma(mf + 0.5)
                - statrs::function::gamma::ln_gamma(mf);
            Ok(ln.exp() / std::f64::consts::PI.sqrt())
        }
        CConstantMethod::Quadrature => {
            // eta = tan(theta) turns the integrand into cos^{2m}(theta).
            let integral = gauss_legendre_fixed(
                |theta| theta.cos().powi(2 * m as i32),
                -std::f64::consts::FRAC_PI_2,
                std::f64::consts::FRAC_PI_2,
                64,
            )?;
            Ok(m as f64 / std::f64::consts::PI * integral)
        }
    }
}

/// `integral (1 + eta^2)^{-m-1} d eta = pi C_{m+1/2} / m`, closed form.
fn eta_integral(m: u32) -> f64 {
    let mf = m as f64;
    let ln =
        statrs::function::gamma::ln_gamma(mf + 0.5) - statrs::function::gamma::ln_gamma(mf + 1.0);
    std::f64::consts::PI.sqrt() * ln.exp()
}

/// `sum_i (lambda + mu_i)^{-m}` with a positivity guard.
fn trace_resolvent_power(eigenvalues: &[f64], lambda: f64, m: u32) -> Result<f64> {
    let mut terms = Vec::with_capacity(eigenvalues.len());
    for &mu in eigenvalues {
        let shifted = lambda + mu;
        if shifted <= 0.0 {
            return Err(Error::Guard {
                message: format!("lambda + eigenvalue = {shifted:.3e} is not positive"),
                required: -mu,
            });
        }
        terms.push(shifted.powi(-(m as i32)));
    }
    // Sum smallest-magnitude terms first for accuracy: eigenvalues are
    // ascending so resolvent terms are descending.
    terms.reverse();
    Ok(pairwise_sum(&terms))
}

/// Eigenvalues of the assembled pair `(H_minus, H_plus)`; tridiagonal O(n^2)
/// route for scalar models, dense route (capped) otherwise.
fn schroedinger_eigenvalues(
    spec: &ModelSpec,
    disc: &LineDiscretization,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if spec.inner_dim == 1 {
        let (tm, tp) = assemble_tridiagonal_pair(spec, disc)?;
        Ok((tm.eigenvalues()?, tp.eigenvalues()?))
    } else {
        let (hm, hp) = assemble_schroedinger_pair_with_cap(spec, disc, DEFAULT_DENSE_CAP)?;
        Ok((hm.eigenvalues()?.to_vec(), hp.eigenvalues()?.to_vec()))
    }
}

/// Left-side evaluator: assembles and diagonalizes the pair once (at the
/// requested grid and one refinement, n -> 2n) and then evaluates any number
/// of scaling parameters from the cached spectra.
#[derive(Debug, Clone)]
pub struct LhsEvaluator {
    m: u32,
    disc: LineDiscretization,
    base: (Vec<f64>, Vec<f64>),
    refined: (Vec<f64>, Vec<f64>),
}

impl LhsEvaluator {
    pub fn new(spec: &ModelSpec, m: u32, disc: &LineDiscretization) -> Result<Self> {
        if m < 1 {
            return Err(Error::parameter("m", "must be >= 1"));
        }
        let base = schroedinger_eigenvalues(spec, disc)?;
        let refined = schroedinger_eigenvalues(spec, &disc.refined(2))?;
        Ok(LhsEvaluator {
            m,
            disc: disc.clone(),
            base,
            refined,
        })
    }

    /// The homological index at scaling `lambda`:
    /// `lambda^m (Tr(lambda + H_minus)^{-m} - Tr(lambda + H_plus)^{-m})`.
    pub fn evaluate(&self, lambda: f64) -> Result<TraceReport> {
        let started = Instant::now();
        if lambda <= 0.0 {
            return Err(Error::parameter("lambda", format!("must be > 0, got {lambda}")));
        }
        let scale = lambda.powi(self.m as i32);
        let value_at = |eigs: &(Vec<f64>, Vec<f64>)| -> Result<f64> {
            let minus = trace_resolvent_power(&eigs.0, lambda, self.m)?;
            let plus = trace_resolvent_power(&eigs.1, lambda, self.m)?;
            Ok(scale * (minus - plus))
        };
        let value = value_at(&self.base)?;
        let refined = value_at(&self.refined)?;
        Ok(TraceReport {
            value,
            m: self.m,
            lambda,
            disc: Some(self.disc.clone()),
            error_estimate: (value - refined).abs(),
            wall_time: started.elapsed().as_secs_f64(),
        })
    }
}

/// One-shot left side; sweeps should construct [`LhsEvaluator`] once instead.
pub fn homological_index_lhs(
    spec: &ModelSpec,
    m: u32,
    lambda: f64,
    disc: &LineDiscretization,
) -> Result<TraceReport> {
    let started = Instant::now();
    let evaluator = LhsEvaluator::new(spec, m, disc)?;
    let mut report = evaluator.evaluate(lambda)?;
    report.wall_time = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Right side of the identity:
/// `lambda^m C_{m+1/2} integral_0^1 Tr(A_+ (lambda + (D2 + r A_+)^2)^{-m-1/2}
///  - A_- (lambda + (D2 + r A_-)^2)^{-m-1/2}) dr`,
/// evaluated on the inner space only, adaptive Gauss-Kronrod in `r`.
pub fn rhs_integral(
    spec: &ModelSpec,
    m: u32,
    lambda: f64,
    quad: &QuadratureConfig,
) -> Result<TraceReport> {
    let started = Instant::now();
    if m < 1 {
        return Err(Error::parameter("m", "must be >= 1"));
    }
    if lambda <= 0.0 {
        return Err(Error::parameter("lambda", format!("must be > 0, got {lambda}")));
    }
    let (_, a) = build_inner_pair(spec)?;
    let exponent = m as f64 + 0.5;
    let mut eval_error: Option<Error> = None;
    let side_term = |r: f64, side: AsymptoteSide, err: &mut Option<Error>| -> f64 {
        let h_side = match side {
            AsymptoteSide::Plus => spec.profile.h_plus(),
            AsymptoteSide::Minus => spec.profile.h_minus(),
        };
        if h_side == 0.0 {
            // A_side = 0, the whole term vanishes identically.
            return 0.0;
        }
        let result = (|| -> Result<f64> {
            let path = inner_path_operator(spec, r, side)?;
            let square = HermitianOperator::new(path.entries() * path.entries())?;
            let power = square.matrix_function(|x| (lambda + x).powf(-exponent))?;
            Ok(h_side * (a.entries() * power.entries()).trace().re)
        })();
        match result {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        }
    };
    let integral = adaptive_gauss_kronrod(
        |r| {
            side_term(r, AsymptoteSide::Plus, &mut eval_error)
                - side_term(r, AsymptoteSide::Minus, &mut eval_error)
        },
        0.0,
        1.0,
        quad,
    )?;
    if let Some(e) = eval_error {
        return Err(e);
    }
    let prefactor = lambda.powi(m as i32) * c_constant(m, CConstantMethod::Gamma)?;
    Ok(TraceReport {
        value: prefactor * integral.value,
        m,
        lambda,
        disc: None,
        error_estimate: prefactor.abs() * integral.error_estimate,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Which side of the identity a sweep evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulaSide {
    Lhs,
    Rhs,
}

/// Values along a descending `lambda` grid plus the fitted `lambda -> 0`
/// limit (least squares in the basis `{1, sqrt(lambda), lambda}`).
#[derive(Debug, Clone)]
pub struct WittenEstimate {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub limit: f64,
}

/// Extrapolates the chosen side to `lambda -> 0` over a descending grid.
pub fn witten_index_estimate(
    spec: &ModelSpec,
    m: u32,
    lambda_grid: &[f64],
    side: FormulaSide,
    disc: &LineDiscretization,
    quad: &QuadratureConfig,
) -> Result<WittenEstimate> {
    if lambda_grid.len() < 3 {
        return Err(Error::parameter("lambda_grid", "needs at least 3 points"));
    }
    if lambda_grid.windows(2).any(|w| w[0] <= w[1]) || lambda_grid.iter().any(|&l| l <= 0.0) {
        return Err(Error::parameter(
            "lambda_grid",
            "must be strictly descending and positive",
        ));
    }
    let values = match side {
        FormulaSide::Lhs => {
            let evaluator = LhsEvaluator::new(spec, m, disc)?;
            lambda_grid
                .iter()
                .map(|&l| Ok(evaluator.evaluate(l)?.value))
                .collect::<Result<Vec<f64>>>()?
        }
        FormulaSide::Rhs => lambda_grid
            .iter()
            .map(|&l| Ok(rhs_integral(spec, m, l, quad)?.value))
            .collect::<Result<Vec<f64>>>()?,
    };
    let limit = sqrt_lambda_fit(lambda_grid, &values)?;
    Ok(WittenEstimate {
        lambdas: lambda_grid.to_vec(),
        values,
        limit,
    })
}

/// Least-squares fit of `v(lambda) = a + b sqrt(lambda) + c lambda`; returns
/// the intercept `a`. The basis is validated on closed-form curves in tests.
pub fn sqrt_lambda_fit(lambdas: &[f64], values: &[f64]) -> Result<f64> {
    assert_eq!(lambdas.len(), values.len());
    let rows = lambdas.len();
    let design = DMatrix::<f64>::from_fn(rows, 3, |i, j| match j {
        0 => 1.0,
        1 => lambdas[i].sqrt(),
        _ => lambdas[i],
    });
    let rhs = DVector::from_column_slice(values);
    let svd = design.svd(true, true);
    let solution = svd.solve(&rhs, 1e-12).map_err(|_| Error::Accuracy {
        context: "sqrt-lambda extrapolation fit",
        requested: 1e-12,
        achieved: f64::NAN,
    })?;
    Ok(solution[0])
}

const ENDPOINT_ZERO_MARGIN: f64 = 1e-8;
const CROSSING_WIDTH: f64 = 1e-10;
const MAX_BISECTION_DEPTH: usize = 80;

/// Net signed count of eigenvalue crossings through zero along the sampled
/// operator path; each crossing is localized by bisection to parameter width
/// `1e-10`. Endpoints with an eigenvalue within `1e-8` of zero are rejected.
pub fn spectral_flow_crossings(
    path: impl Fn(f64) -> Result<HermitianOperator>,
    steps: usize,
) -> Result<i64> {
    if steps == 0 {
        return Err(Error::parameter("steps", "must be >= 1"));
    }
    let neg_count = |r: f64| -> Result<(usize, f64)> {
        let op = path(r)?;
        let eigs = op.eigenvalues()?;
        let count = eigs.iter().filter(|&&x| x < 0.0).count();
        let min_abs = eigs.iter().fold(f64::INFINITY, |acc, x| acc.min(x.abs()));
        Ok((count, min_abs))
    };
    let (start_count, start_min) = neg_count(0.0)?;
    if start_min < ENDPOINT_ZERO_MARGIN {
        return Err(Error::DegenerateEndpoint {
            eigenvalue: start_min,
            margin: ENDPOINT_ZERO_MARGIN,
        });
    }
    let (end_count, end_min) = neg_count(1.0)?;
    if end_min < ENDPOINT_ZERO_MARGIN {
        return Err(Error::DegenerateEndpoint {
            eigenvalue: end_min,
            margin: ENDPOINT_ZERO_MARGIN,
        });
    }

    // Localize every sign change; the net count itself is fixed by the
    // endpoint Morse indices, the refinement verifies each crossing is a
    // resolved transversal event rather than a sampling artifact.
    let mut counts = vec![(0.0, start_count)];
    for i in 1..steps {
        let r = i as f64 / steps as f64;
        counts.push((r, neg_count(r)?.0));
    }
    counts.push((1.0, end_count));
    for w in counts.windows(2) {
        let (r0, c0) = w[0];
        let (r1, c1) = w[1];
        if c0 != c1 {
            localize_crossings(&neg_count, r0, c0, r1, c1, 0)?;
        }
    }
    Ok(start_count as i64 - end_count as i64)
}

fn localize_crossings(
    neg_count: &impl Fn(f64) -> Result<(usize, f64)>,
    r0: f64,
    c0: usize,
    r1: f64,
    c1: usize,
    depth: usize,
) -> Result<()> {
    if r1 - r0 <= CROSSING_WIDTH {
        return Ok(());
    }
    if depth > MAX_BISECTION_DEPTH {
        return Err(Error::Accuracy {
            context: "spectral flow crossing localization",
            requested: CROSSING_WIDTH,
            achieved: r1 - r0,
        });
    }
    let mid = 0.5 * (r0 + r1);
    let (cm, _) = neg_count(mid)?;
    if cm != c0 {
        localize_crossings(neg_count, r0, c0, mid, cm, depth + 1)?;
    }
    if cm != c1 {
        localize_crossings(neg_count, mid, cm, r1, c1, depth + 1)?;
    }
    Ok(())
}

/// Residual of the identity
/// `integral (lambda + X^2 + xi^2)^{-m-1} d xi
///  = integral (1 + eta^2)^{-m-1} d eta * (lambda + X^2)^{-m-1/2}`.
///
/// The left side is integrated adaptively (after `xi = tan theta`) using LU
/// inversions only; the right side uses the spectral closed form. Returns the
/// relative Frobenius gap.
pub fn check_xi_integral_identity(x: &HermitianOperator, lambda: f64, m: u32) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(Error::parameter("lambda", format!("must be > 0, got {lambda}")));
    }
    let dim = x.dim();
    let x_sq_matrix = x.entries() * x.entries();
    let identity = CMatrix::identity(dim, dim);

    let quad = QuadratureConfig {
        abs_tol: 1e-12 * dim as f64,
        max_panels: 4000,
    };
    let left = adaptive_gauss_kronrod(
        |theta: f64| {
            let xi = theta.tan();
            let sec2 = 1.0 + xi * xi;
            let shifted = &x_sq_matrix + &identity * Complex64::new(lambda + xi * xi, 0.0);
            let inv = shifted
                .lu()
                .try_inverse()
                .expect("shifted positive definite matrix is invertible");
            let mut power = inv.clone();
            for _ in 0..m {
                power = &power * &inv;
            }
            power * Complex64::new(sec2, 0.0)
        },
        -std::f64::consts::FRAC_PI_2,
        std::f64::consts::FRAC_PI_2,
        &quad,
    )?;

    let x_sq = HermitianOperator::new(x_sq_matrix)?;
    let right_power = x_sq.matrix_function(|v| (lambda + v).powf(-(m as f64) - 0.5))?;
    let right = right_power.entries() * Complex64::new(eta_integral(m), 0.0);

    Ok((left.value - &right).norm() / right.norm())
}

// Closed-form spectral decomposition of the Dirichlet second-difference
// matrix: eigenvalue s -> (2 - 2 cos(s pi / (n+1))) / spacing^2 with sine
// eigenvectors; verified against the assembled matrix in tests.
fn dirichlet_line_eigenvalue(s: usize, n: usize, spacing: f64) -> f64 {
    let angle = (s + 1) as f64 * std::f64::consts::PI / (n as f64 + 1.0);
    (2.0 - 2.0 * angle.cos()) / (spacing * spacing)
}

fn dirichlet_mode_weights(d: &[f64], n: usize) -> Vec<f64> {
    // W_s = (2 / (n+1)) sum_t d_t sin^2((s+1)(t+1) pi / (n+1)).
    let norm = 2.0 / (n as f64 + 1.0);
    let base = std::f64::consts::PI / (n as f64 + 1.0);
    let mut weights = vec![0.0; n];
    for (t, &dt) in d.iter().enumerate() {
        if dt == 0.0 {
            continue;
        }
        for (s, w) in weights.iter_mut().enumerate() {
            let sin = ((s + 1) as f64 * (t + 1) as f64 * base).sin();
            *w += dt * norm * sin * sin;
        }
    }
    weights
}

/// Residual of the partial-trace identity
/// `(Tr (x) 1)(F h^l (Delta_hat + beta(r) + lambda)^{-m-1})
///  = (h_+^{l+1} - h_-^{l+1}) / (pi (l+1)) * A integral (lambda + (D2 + r A)^2 + xi^2)^{-m-1} d xi`.
///
/// The left side is the line-grid partial trace (sine modes of the Dirichlet
/// Laplacian times the inner eigenbasis); the right side is an inner
/// eigendecomposition with xi-quadrature. Returns the relative trace-norm gap.
pub fn check_flow_trace_identity(
    spec: &ModelSpec,
    disc: &LineDiscretization,
    m: u32,
    lambda: f64,
    l: u32,
    r: f64,
) -> Result<f64> {
    if disc.n < 1024 {
        return Err(Error::Config(format!(
            "flow-trace identity needs n >= 1024 for the default tolerance, got {}",
            disc.n
        )));
    }
    let left = flow_trace_left(spec, disc, m, lambda, l, r)?;
    let right = flow_trace_right(spec, m, lambda, l, r)?;
    let right_norm = crate::operator::trace_norm(&right)?;
    let gap = crate::operator::trace_norm(&(&left - &right))?;
    if right_norm == 0.0 {
        return Ok(gap);
    }
    Ok(gap / right_norm)
}

pub(crate) fn flow_trace_left(
    spec: &ModelSpec,
    disc: &LineDiscretization,
    m: u32,
    lambda: f64,
    l: u32,
    r: f64,
) -> Result<CMatrix> {
    spec.validate()?;
    disc.validate_for(spec)?;
    let (d2, a) = build_inner_pair(spec)?;
    let profile = spec.scaled_profile()?;
    let grid = disc.grid();
    let n = disc.n;

    // Weights d_t = 2 h'(t) h(t)^l on the grid, supported inside the kink.
    let d: Vec<f64> = grid
        .iter()
        .map(|&t| 2.0 * profile.dh(t) * profile.h(t).powi(l as i32))
        .collect();
    let mode_weights = dirichlet_mode_weights(&d, n);

    // Inner factor (D2 + r A)^2.
    let path = d2.entries() + a.entries() * Complex64::new(r, 0.0);
    let inner = HermitianOperator::new(&path * &path)?;
    let inner_eigen = inner.spectral_decomposition()?;

    let dim = spec.inner_dim;
    let spacing = disc.spacing();
    let mut diag = vec![0.0f64; dim];
    for (i, &gamma) in inner_eigen.eigenvalues.iter().enumerate() {
        let mut acc = 0.0;
        for (s, &w) in mode_weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let lam_s = dirichlet_line_eigenvalue(s, n, spacing);
            acc += w * (lambda + lam_s + gamma).powi(-(m as i32) - 1);
        }
        diag[i] = acc;
    }
    let core = CMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            Complex64::new(diag[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let summed = &inner_eigen.eigenvectors * core * inner_eigen.eigenvectors.adjoint();
    Ok(a.entries() * summed)
}

pub(crate) fn flow_trace_right(
    spec: &ModelSpec,
    m: u32,
    lambda: f64,
    l: u32,
    r: f64,
) -> Result<CMatrix> {
    let (d2, a) = build_inner_pair(spec)?;
    let path = d2.entries() + a.entries() * Complex64::new(r, 0.0);
    let inner = HermitianOperator::new(&path * &path)?;
    let eigen = inner.spectral_decomposition()?;
    let quad = QuadratureConfig {
        abs_tol: 1e-13,
        max_panels: 2000,
    };
    // xi-quadrature per inner eigenvalue, xi = tan(theta).
    let mut xi_values = Vec::with_capacity(eigen.eigenvalues.len());
    for &gamma in &eigen.eigenvalues {
        let res = adaptive_gauss_kronrod(
            |theta: f64| {
                let xi = theta.tan();
                let sec2 = 1.0 + xi * xi;
                (lambda + gamma + xi * xi).powi(-(m as i32) - 1) * sec2
            },
            -std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
            &quad,
        )?;
        xi_values.push(res.value);
    }
    let dim = spec.inner_dim;
    let core = CMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            Complex64::new(xi_values[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let integral = &eigen.eigenvectors * core * eigen.eigenvectors.adjoint();
    let h_plus = spec.profile.h_plus();
    let h_minus = spec.profile.h_minus();
    let lp1 = l as i32 + 1;
    let coefficient =
        (h_plus.powi(lp1) - h_minus.powi(lp1)) / (std::f64::consts::PI * (l as f64 + 1.0));
    Ok(a.entries() * integral * Complex64::new(coefficient, 0.0))
}

/// Homological-index values across an epsilon ladder at fixed discretization,
/// with the maximum relative spread.
#[derive(Debug, Clone)]
pub struct EpsilonInvarianceReport {
    pub epsilons: Vec<f64>,
    pub reports: Vec<TraceReport>,
    pub max_relative_spread: f64,
}

/// Evaluates the left side per epsilon at fixed discretization; the continuum
/// statement is exact invariance, so the spread measures discretization drift.
pub fn epsilon_invariance_report(
    spec: &ModelSpec,
    m: u32,
    lambda: f64,
    epsilons: &[f64],
    disc: &LineDiscretization,
) -> Result<EpsilonInvarianceReport> {
    if epsilons.is_empty() {
        return Err(Error::parameter("epsilons", "must be nonempty"));
    }
    let mut reports = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let scaled = spec.with_epsilon(eps)?;
        let evaluator = LhsEvaluator::new(&scaled, m, disc)?;
        reports.push(evaluator.evaluate(lambda)?);
    }
    let values: Vec<f64> = reports.iter().map(|r| r.value).collect();
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max_relative_spread = if max == min {
        0.0
    } else {
        (max - min) / mean.abs().max(f64::MIN_POSITIVE)
    };
    Ok(EpsilonInvarianceReport {
        epsilons: epsilons.to_vec(),
        reports,
        max_relative_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AGenerator, D2Generator};
    use crate::profile::Profile;
    use approx::assert_relative_eq;

    #[test]
    fn c_constant_closed_forms() {
        assert_relative_eq!(
            c_constant(1, CConstantMethod::Gamma).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            c_constant(2, CConstantMethod::Gamma).unwrap(),
            0.75,
            epsilon = 1e-12
        );
    }

    #[test]
    fn c_constant_methods_agree() {
        for m in 1..=8 {
            let g = c_constant(m, CConstantMethod::Gamma).unwrap();
            let q = c_constant(m, CConstantMethod::Quadrature).unwrap();
            assert!(
                ((g - q) / g).abs() <= 1e-10,
                "m = {m}: gamma {g} vs quadrature {q}"
            );
        }
    }

    #[test]
    fn rhs_zero_perturbation_vanishes() {
        let spec = ModelSpec {
            inner_dim: 1,
            d2: D2Generator::Scalar(0.4),
            a: AGenerator::Scalar(0.0),
            profile: Profile::half_kink(8.0).unwrap(),
            epsilon: 1.0,
        };
        let quad = QuadratureConfig::default();
        let report = rhs_integral(&spec, 1, 1.0, &quad).unwrap();
        assert_eq!(report.value, 0.0);
    }

    #[test]
    fn rhs_half_kink_closed_form() {
        let spec = ModelSpec::scalar_half_kink();
        let quad = QuadratureConfig::default();
        for lambda in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let report = rhs_integral(&spec, 1, lambda, &quad).unwrap();
            let exact = 0.5 * (1.0 + lambda).powf(-0.5);
            assert!(
                (report.value - exact).abs() <= 1e-8,
                "lambda = {lambda}: {} vs {exact}",
                report.value
            );
        }
        // m = 1, lambda = 1 named value.
        let r = rhs_integral(&spec, 1, 1.0, &quad).unwrap();
        assert_relative_eq!(r.value, 0.3535533906, epsilon = 1e-8);
    }

    #[test]
    fn rhs_full_kink_closed_forms() {
        let spec = ModelSpec::scalar_full_kink();
        let quad = QuadratureConfig::default();
        for lambda in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let report = rhs_integral(&spec, 1, lambda, &quad).unwrap();
            let exact = (1.0 + lambda).powf(-0.5);
            assert!((report.value - exact).abs() <= 1e-8);
        }
        // m = 2: lambda^2 C_{5/2} * 2 int_0^1 (lambda + r^2)^{-5/2} dr
        //      = (3 lambda + 2) / (2 (1 + lambda)^{3/2}) by the antiderivative
        //        r (3 lambda + 2 r^2) / (3 lambda^2 (lambda + r^2)^{3/2}).
        let lambda = 1.0f64;
        let r = rhs_integral(&spec, 2, lambda, &quad).unwrap();
        let exact = (3.0 * lambda + 2.0) / (2.0 * (1.0 + lambda).powf(1.5));
        assert_relative_eq!(r.value, exact, epsilon = 1e-8);
        assert_relative_eq!(r.value, 5.0 / (4.0 * 2.0f64.sqrt()), epsilon = 1e-8);
    }

    #[test]
    fn sign_swap_negates_rhs_exactly() {
        let spec = ModelSpec::scalar_full_kink();
        let swapped = ModelSpec {
            profile: spec.profile.swapped(),
            ..spec.clone()
        };
        let quad = QuadratureConfig::default();
        for lambda in [0.5, 1.0, 2.0] {
            let a = rhs_integral(&spec, 1, lambda, &quad).unwrap();
            let b = rhs_integral(&swapped, 1, lambda, &quad).unwrap();
            assert_eq!(a.value, -b.value, "bitwise negation under h+ <-> h-");
        }
    }

    #[test]
    fn lhs_zero_perturbation_is_exactly_zero() {
        let spec = ModelSpec {
            inner_dim: 1,
            d2: D2Generator::Scalar(0.5),
            a: AGenerator::Scalar(0.0),
            profile: Profile::half_kink(4.0).unwrap(),
            epsilon: 1.0,
        };
        let disc = LineDiscretization::new(16.0, 64);
        let report = homological_index_lhs(&spec, 1, 1.0, &disc).unwrap();
        assert_eq!(report.value, 0.0);
        assert_eq!(report.error_estimate, 0.0);
    }

    #[test]
    fn lhs_matches_rhs_at_coarse_grid() {
        // Coarse-grid sanity: agreement to grid error at n = 512, T = 40.
        let spec = ModelSpec::scalar_half_kink();
        let disc = LineDiscretization::new(40.0, 512);
        let lhs = homological_index_lhs(&spec, 1, 1.0, &disc).unwrap();
        let exact = 0.5 / 2.0f64.sqrt();
        assert!(
            (lhs.value - exact).abs() < 5e-3,
            "coarse LHS {} vs {exact}",
            lhs.value
        );
        assert!(lhs.error_estimate < 5e-3);
    }

    #[test]
    fn witten_fit_recovers_closed_form_limits() {
        // Basis validation on the exact RHS curves before use on data.
        let lambdas = [1e-3f64, 7e-4, 5e-4, 3e-4, 2e-4, 1e-4];
        let half: Vec<f64> = lambdas.iter().map(|&l| 0.5 * (1.0 + l).powf(-0.5)).collect();
        let fit = sqrt_lambda_fit(&lambdas, &half).unwrap();
        assert!((fit - 0.5).abs() < 1e-6, "fit {fit}");
        let full: Vec<f64> = lambdas.iter().map(|&l| (1.0 + l).powf(-0.5)).collect();
        let fit = sqrt_lambda_fit(&lambdas, &full).unwrap();
        assert!((fit - 1.0).abs() < 1e-6, "fit {fit}");
    }

    #[test]
    fn witten_rhs_limits() {
        let quad = QuadratureConfig::default();
        let disc = LineDiscretization::new(40.0, 64).with_safety_factor(2.0);
        let grid = [1e-3, 7e-4, 5e-4, 3e-4, 2e-4, 1e-4];
        let half = witten_index_estimate(
            &ModelSpec::scalar_half_kink(),
            1,
            &grid,
            FormulaSide::Rhs,
            &disc,
            &quad,
        )
        .unwrap();
        assert!((half.limit - 0.5).abs() <= 1e-6, "half-kink limit {}", half.limit);
        let full = witten_index_estimate(
            &ModelSpec::scalar_full_kink(),
            1,
            &grid,
            FormulaSide::Rhs,
            &disc,
            &quad,
        )
        .unwrap();
        assert!((full.limit - 1.0).abs() <= 1e-6, "full-kink limit {}", full.limit);
    }

    #[test]
    fn spectral_flow_constant_path_is_zero() {
        let op = crate::operator::random_hermitian(5, 7, 1.0);
        let sf = spectral_flow_crossings(|_| Ok(op.clone()), 16).unwrap();
        assert_eq!(sf, 0);
    }

    #[test]
    fn spectral_flow_single_crossing() {
        let sf = spectral_flow_crossings(
            |r| Ok(HermitianOperator::from_diagonal(&[2.0 * r - 1.0])),
            64,
        )
        .unwrap();
        assert_eq!(sf, 1);
    }

    #[test]
    fn spectral_flow_rejects_degenerate_endpoint() {
        let err = spectral_flow_crossings(
            |r| Ok(HermitianOperator::from_diagonal(&[r])),
            16,
        );
        assert!(matches!(err, Err(Error::DegenerateEndpoint { .. })));
    }

    #[test]
    fn xi_identity_scalar_case() {
        // X = 0, lambda = 1, m = 1: both sides are pi/2.
        let x = HermitianOperator::zeros(1);
        let residual = check_xi_integral_identity(&x, 1.0, 1).unwrap();
        assert!(residual <= 1e-10, "residual {residual}");
    }

    #[test]
    fn xi_identity_diagonal_and_random() {
        let diag = HermitianOperator::from_diagonal(&[0.0, 0.7, -1.3]);
        let residual = check_xi_integral_identity(&diag, 1.0, 1).unwrap();
        assert!(residual <= 1e-9, "diagonal residual {residual}");
        let x = crate::operator::random_hermitian(6, 21, 1.0);
        let residual = check_xi_integral_identity(&x, 2.0, 2).unwrap();
        assert!(residual <= 1e-8, "random residual {residual}");
    }

    #[test]
    fn epsilon_report_zero_model() {
        let spec = ModelSpec {
            inner_dim: 1,
            d2: D2Generator::Scalar(0.3),
            a: AGenerator::Scalar(0.0),
            profile: Profile::tanh_clamped(4.0).unwrap(),
            epsilon: 1.0,
        };
        let disc = LineDiscretization::new(32.0, 64).with_safety_factor(2.0);
        let report = epsilon_invariance_report(&spec, 1, 1.0, &[1.0, 0.5], &disc).unwrap();
        assert_eq!(report.max_relative_spread, 0.0);
        assert!(report.reports.iter().all(|r| r.value == 0.0));
    }
}
