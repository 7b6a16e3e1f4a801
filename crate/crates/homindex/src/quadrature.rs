//! Quadrature rules: Gauss-Legendre, Gauss-Kronrod adaptive panels,
//! generalized Gauss-Laguerre, and a double-exponential rule for (0, inf).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::eigen::tridiagonal_eigen;
use crate::{Error, Result};

/// Tolerance and budget for adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    /// Absolute tolerance on the accumulated error estimate.
    pub abs_tol: f64,
    /// Maximum number of panels before giving up.
    pub max_panels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-10,
            max_panels: 4000,
        }
    }
}

/// Output of an adaptive integration.
#[derive(Debug, Clone)]
pub struct QuadratureResult<T> {
    pub value: T,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// Values an adaptive rule can accumulate: scalars and matrices.
pub trait Integrand: Clone {
    fn zeros_like(&self) -> Self;
    fn axpy(&mut self, c: f64, other: &Self);
    fn magnitude(&self) -> f64;
}

impl Integrand for f64 {
    fn zeros_like(&self) -> Self {
        0.0
    }
    fn axpy(&mut self, c: f64, other: &Self) {
        *self += c * other;
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Integrand for DMatrix<f64> {
    fn zeros_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn axpy(&mut self, c: f64, other: &Self) {
        *self += other * c;
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl Integrand for DMatrix<Complex64> {
    fn zeros_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn axpy(&mut self, c: f64, other: &Self) {
        *self += other * Complex64::new(c, 0.0);
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

// QUADPACK 7-15 Gauss-Kronrod pair on [-1, 1]; positive abscissae.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

fn kronrod_panel<T: Integrand>(f: &mut dyn FnMut(f64) -> T, a: f64, b: f64) -> Panel<T> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc.zeros_like();
    kron.axpy(WGK[7] * half, &fc);
    let mut gauss = fc.zeros_like();
    gauss.axpy(WG[3] * half, &fc);
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        kron.axpy(WGK[j] * half, &f1);
        kron.axpy(WGK[j] * half, &f2);
        // Odd-indexed Kronrod points are the embedded Gauss points.
        if j % 2 == 1 {
            let wg = WG[j / 2] * half;
            gauss.axpy(wg, &f1);
            gauss.axpy(wg, &f2);
        }
    }
    let mut diff = kron.clone();
    diff.axpy(-1.0, &gauss);
    Panel {
        a,
        b,
        value: kron,
        error: diff.magnitude(),
    }
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]` to the requested
/// absolute tolerance, worst-panel-first bisection.
pub fn adaptive_gauss_kronrod<T: Integrand>(
    mut f: impl FnMut(f64) -> T,
    a: f64,
    b: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult<T>> {
    let mut panels = vec![kronrod_panel(&mut f, a, b)];
    let mut evaluations = 15usize;
    loop {
        let total_error: f64 = panels.iter().map(|p| p.error).sum();
        if total_error <= cfg.abs_tol {
            break;
        }
        if panels.len() >= cfg.max_panels {
            return Err(Error::Accuracy {
                context: "adaptive Gauss-Kronrod",
                requested: cfg.abs_tol,
                achieved: total_error,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| x.error.partial_cmp(&y.error).expect("NaN panel error"))
            .map(|(i, _)| i)
            .expect("no panels");
        let Panel { a, b, .. } = panels.swap_remove(worst);
        let mid = 0.5 * (a + b);
        panels.push(kronrod_panel(&mut f, a, mid));
        panels.push(kronrod_panel(&mut f, mid, b));
        evaluations += 30;
    }
    let mut iter = panels.iter();
    let first = iter.next().expect("no panels");
    let mut value = first.value.clone();
    for p in iter {
        value.axpy(1.0, &p.value);
    }
    let error_estimate = panels.iter().map(|p| p.error).sum();
    Ok(QuadratureResult {
        value,
        error_estimate,
        evaluations,
    })
}

/// Gauss-Legendre nodes and weights on [-1, 1] via the Golub-Welsch
/// eigenvalue method on the Jacobi matrix.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let (nodes, vectors) = tridiagonal_eigen(&diag, &off)?;
    let weights: Vec<f64> = (0..n).map(|i| 2.0 * vectors[(0, i)].powi(2)).collect();
    Ok((nodes, weights))
}

/// Fixed-order Gauss-Legendre integral of `f` over `[a, b]`.
pub fn gauss_legendre_fixed(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    n: usize,
) -> Result<f64> {
    let (nodes, weights) = gauss_legendre(n)?;
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights.iter()) {
        acc += w * half * f(center + half * x);
    }
    Ok(acc)
}

/// Generalized Gauss-Laguerre rule: nodes and weights for
/// `integral_0^inf x^alpha e^{-x} f(x) dx = sum_i w_i f(x_i)`.
pub fn gauss_laguerre(n: usize, alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    assert!(n >= 1 && alpha > -1.0);
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            (k * (k + alpha)).sqrt()
        })
        .collect();
    let (nodes, vectors) = tridiagonal_eigen(&diag, &off)?;
    let mu0 = statrs::function::gamma::gamma(alpha + 1.0);
    let weights: Vec<f64> = (0..n).map(|i| mu0 * vectors[(0, i)].powi(2)).collect();
    Ok((nodes, weights))
}

/// Double-exponential (exp-sinh) rule for `integral_0^inf g(mu) dmu`:
/// substitutes `mu = scale * exp((pi/2) sinh t)` and applies the trapezoid
/// rule on `t in [-t_max, t_max]` with `n` points. Returns `(mu_j, w_j)`.
pub fn exp_sinh_rule(scale: f64, n: usize, t_max: f64) -> Vec<(f64, f64)> {
    assert!(n >= 2 && scale > 0.0);
    let h = 2.0 * t_max / (n - 1) as f64;
    let half_pi = std::f64::consts::FRAC_PI_2;
    (0..n)
        .map(|j| {
            let t = -t_max + h * j as f64;
            let mu = scale * (half_pi * t.sinh()).exp();
            let w = h * mu * half_pi * t.cosh();
            (mu, w)
        })
        .collect()
}

/// Sums a slice pairwise; keeps long reductions deterministic and accurate.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // 10-node rule is exact through degree 19.
        let v =
            gauss_legendre_fixed(|x| x.powi(12) - 3.0 * x.powi(5) + 1.0, -1.0, 1.0, 10).unwrap();
        assert_relative_eq!(v, 2.0 / 13.0 + 2.0, epsilon = 1e-13);
    }

    #[test]
    fn kronrod_panel_handles_peaked_integrands() {
        let cfg = QuadratureConfig::default();
        let r = adaptive_gauss_kronrod(|x: f64| (-(x * x) / 2.0).exp(), -8.0, 8.0, &cfg).unwrap();
        assert_relative_eq!(r.value, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn adaptive_reports_non_convergence() {
        let cfg = QuadratureConfig {
            abs_tol: 1e-14,
            max_panels: 4,
        };
        let err = adaptive_gauss_kronrod(|x: f64| (x.abs() + 1e-8).powf(-0.5), -1.0, 1.0, &cfg);
        assert!(matches!(err, Err(Error::Accuracy { .. })));
    }

    #[test]
    fn laguerre_matches_gamma_moments() {
        // integral_0^inf x^2 e^{-x} * x dx = Gamma(4) = 6 with alpha = 2.
        let (x, w) = gauss_laguerre(24, 2.0).unwrap();
        let v: f64 = x.iter().zip(w.iter()).map(|(x, w)| w * x).sum();
        assert_relative_eq!(v, 6.0, epsilon = 1e-10);
    }

    #[test]
    fn exp_sinh_integrates_resolvent_kernel() {
        // integral_0^inf mu^{-1/2} / (1 + mu) dmu = pi.
        let rule = exp_sinh_rule(1.0, 200, 4.6);
        let v: f64 = rule
            .iter()
            .map(|(mu, w)| w * mu.powf(-0.5) / (1.0 + mu))
            .sum();
        assert_relative_eq!(v, std::f64::consts::PI, epsilon = 1e-12);
    }
}
