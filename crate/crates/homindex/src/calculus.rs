//! Multi-index calculus for higher derivatives of resolvent powers, the
//! power-series expansion of the perturbed resolvent, the adiabatic
//! isolation diagnostics, and the Laplace-transform identity.
//!
//! The combinatorial layer is exact integer bookkeeping: a formal
//! combination of multi-indices `K = (k_1, ..., k_j)` evolves under the two
//! operations `s` (insert a 1 in each slot) and `e` (increment each entry),
//! and `(s + e)^l` applied to the empty index enumerates the l-th derivative
//! of `z -> (Delta + alpha(z) + lambda)^{-m-1}` as a signed sum over integer
//! compositions.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::model::{
    assemble_schroedinger_pair_with_cap, build_inner_pair, AGenerator, LineDiscretization,
    ModelSpec,
};
use crate::operator::{kron, operator_norm, trace_norm, CMatrix, HermitianOperator};
use crate::quadrature::gauss_laguerre;
use crate::{Error, Result};

/// Ordered multi-index `K in N^j` with entries >= 1; `j = 0` is the empty
/// index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Result<Self> {
        if entries.iter().any(|&k| k == 0) {
            return Err(Error::parameter("multi-index", "entries must be >= 1"));
        }
        Ok(MultiIndex(entries))
    }

    pub fn empty() -> Self {
        MultiIndex(Vec::new())
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Degree `|K| = sum k_i`.
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }
}

/// Formal integer combination of multi-indices; repeated basis vectors are
/// merged into coefficients, zero coefficients are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexCombination {
    terms: BTreeMap<MultiIndex, i64>,
}

impl IndexCombination {
    pub fn zero() -> Self {
        IndexCombination::default()
    }

    /// The single basis vector `delta_K`.
    pub fn delta(k: MultiIndex) -> Self {
        let mut combo = IndexCombination::default();
        combo.add(k, 1);
        combo
    }

    /// `delta` of the empty index.
    pub fn empty_index() -> Self {
        IndexCombination::delta(MultiIndex::empty())
    }

    pub fn add(&mut self, k: MultiIndex, coefficient: i64) {
        if coefficient == 0 {
            return;
        }
        let entry = self.terms.entry(k).or_insert(0);
        *entry += coefficient;
        if *entry == 0 {
            let k = self
                .terms
                .iter()
                .find(|(_, &c)| c == 0)
                .map(|(k, _)| k.clone())
                .expect("zero entry exists");
            self.terms.remove(&k);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, i64)> {
        self.terms.iter().map(|(k, &c)| (k, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, k: &MultiIndex) -> i64 {
        self.terms.get(k).copied().unwrap_or(0)
    }

    /// Total coefficient mass `sum |c_K|`.
    pub fn coefficient_mass(&self) -> i64 {
        self.terms.values().map(|c| c.abs()).sum()
    }
}

/// `s`: inserts a 1 at each of the `j + 1` slots of every index;
/// `s(delta_empty) = delta_(1)`.
pub fn apply_s(combo: &IndexCombination) -> IndexCombination {
    let mut out = IndexCombination::zero();
    for (k, c) in combo.terms() {
        let entries = k.entries();
        for slot in 0..=entries.len() {
            let mut new_entries = Vec::with_capacity(entries.len() + 1);
            new_entries.extend_from_slice(&entries[..slot]);
            new_entries.push(1);
            new_entries.extend_from_slice(&entries[slot..]);
            out.add(MultiIndex(new_entries), c);
        }
    }
    out
}

/// `e`: increments each entry in turn; `e(delta_empty) = 0`.
pub fn apply_e(combo: &IndexCombination) -> IndexCombination {
    let mut out = IndexCombination::zero();
    for (k, c) in combo.terms() {
        let entries = k.entries();
        for slot in 0..entries.len() {
            let mut new_entries = entries.to_vec();
            new_entries[slot] += 1;
            out.add(MultiIndex(new_entries), c);
        }
    }
    out
}

/// Default cap on the derivative level; term count grows factorially.
pub const DERIVATIVE_LEVEL_CAP: u32 = 12;

/// `(s + e)^l (delta_empty)`; the symbolic form of the l-th derivative.
pub fn derivative_combination(l: u32) -> Result<IndexCombination> {
    derivative_combination_with_cap(l, DERIVATIVE_LEVEL_CAP)
}

pub fn derivative_combination_with_cap(l: u32, cap: u32) -> Result<IndexCombination> {
    if l > cap {
        return Err(Error::Resource {
            context: "derivative level",
            requested: l as usize,
            cap: cap as usize,
        });
    }
    let mut combo = IndexCombination::empty_index();
    for _ in 0..l {
        let mut next = apply_s(&combo);
        for (k, c) in apply_e(&combo).terms() {
            next.add(k.clone(), c);
        }
        combo = next;
    }
    Ok(combo)
}

/// Number of compositions of `total` into `parts` positive integers:
/// `C(total - 1, parts - 1)`.
pub fn composition_count(total: u32, parts: u32) -> u64 {
    if parts == 0 {
        return u64::from(total == 0);
    }
    if total < parts {
        return 0;
    }
    binomial(u64::from(total - 1), u64::from(parts - 1))
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Streams the compositions of `total` into `parts` positive integers in
/// lexicographic order; no materialized list.
fn for_each_composition(
    total: u32,
    parts: u32,
    f: &mut impl FnMut(&[u32]) -> Result<()>,
) -> Result<()> {
    if parts == 0 {
        if total == 0 {
            return f(&[]);
        }
        return Ok(());
    }
    if total < parts {
        return Ok(());
    }
    let parts = parts as usize;
    let mut current = vec![1u32; parts];
    current[parts - 1] = total - (parts as u32 - 1);
    loop {
        f(&current)?;
        // Advance: find the rightmost position (before the last) that can be
        // incremented while the remainder stays feasible.
        let mut idx = parts.wrapping_sub(2);
        loop {
            if idx == usize::MAX {
                return Ok(());
            }
            // Sum of entries after idx, minus their minimum (1 each).
            let tail: u32 = current[idx + 1..].iter().sum();
            if tail > (parts - idx - 1) as u32 {
                current[idx] += 1;
                let remaining = total - current[..=idx].iter().sum::<u32>();
                let slots = parts - idx - 1;
                for slot in idx + 1..parts - 1 {
                    current[slot] = 1;
                }
                current[parts - 1] = remaining - (slots as u32 - 1);
                break;
            }
            idx = idx.wrapping_sub(1);
        }
    }
}

/// The holomorphic quadratic family `alpha(z) = z T1 + z^2 T0` attached to a
/// positive base operator and a resolvent shift.
#[derive(Debug, Clone)]
pub struct QuadraticFamily {
    delta_hat: HermitianOperator,
    t1: CMatrix,
    t0: CMatrix,
    lambda: f64,
}

impl QuadraticFamily {
    /// Validates dimensions, positivity of the base, and invertibility of
    /// `1 + alpha(z)(Delta + lambda)^{-1}` on sampled points of `|z| = 2`.
    pub fn new(
        delta_hat: HermitianOperator,
        t1: CMatrix,
        t0: CMatrix,
        lambda: f64,
    ) -> Result<Self> {
        let dim = delta_hat.dim();
        if t1.nrows() != dim || t0.nrows() != dim {
            return Err(Error::Dimension {
                context: "quadratic family",
                expected: dim,
                actual: t1.nrows().max(t0.nrows()),
            });
        }
        if lambda <= 0.0 {
            return Err(Error::parameter("lambda", format!("must be > 0, got {lambda}")));
        }
        if !delta_hat.is_psd(1e-8)? {
            return Err(Error::parameter(
                "delta_hat",
                "base operator must be positive semidefinite",
            ));
        }
        let fam = QuadraticFamily {
            delta_hat,
            t1,
            t0,
            lambda,
        };
        let contraction = fam.boundary_contraction_norm()?;
        if contraction >= 1.0 {
            let required = (fam.guard_half_norm()? + 1.0).powi(2);
            return Err(Error::Guard {
                message: format!(
                    "||alpha(z)(Delta + lambda)^{{-1}}|| reaches {contraction:.3e} on |z| = 2"
                ),
                required,
            });
        }
        Ok(fam)
    }

    pub fn delta_hat(&self) -> &HermitianOperator {
        &self.delta_hat
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.delta_hat.dim()
    }

    pub fn alpha(&self, z: Complex64) -> CMatrix {
        &self.t1 * z + &self.t0 * (z * z)
    }

    /// `d^k alpha / dz` at `z`; vanishes identically for `k >= 3`.
    pub fn alpha_derivative(&self, k: u32, z: Complex64) -> CMatrix {
        match k {
            0 => self.alpha(z),
            1 => &self.t1 + &self.t0 * (z * 2.0),
            2 => &self.t0 * Complex64::new(2.0, 0.0),
            _ => CMatrix::zeros(self.dim(), self.dim()),
        }
    }

    /// `(Delta + alpha(z) + lambda)^{-1}` by LU.
    pub fn resolvent(&self, z: Complex64) -> Result<CMatrix> {
        let dim = self.dim();
        let m = self.delta_hat.entries()
            + self.alpha(z)
            + CMatrix::identity(dim, dim) * Complex64::new(self.lambda, 0.0);
        m.lu().try_inverse().ok_or(Error::Guard {
            message: format!("resolvent singular at z = {z}"),
            required: self.lambda,
        })
    }

    /// Max of `||alpha(z)(Delta + lambda)^{-1}||` over sampled `|z| = 2`.
    fn boundary_contraction_norm(&self) -> Result<f64> {
        let dim = self.dim();
        let shifted = self.delta_hat.entries() + CMatrix::identity(dim, dim) * Complex64::new(self.lambda, 0.0);
        let inv = shifted.lu().try_inverse().ok_or(Error::Guard {
            message: "base resolvent singular".into(),
            required: self.lambda,
        })?;
        let mut sup: f64 = 0.0;
        for j in 0..16 {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / 16.0;
            let z = Complex64::new(2.0 * theta.cos(), 2.0 * theta.sin());
            sup = sup.max(operator_norm(&(self.alpha(z) * &inv))?);
        }
        Ok(sup)
    }

    /// Max of `||alpha(z)(Delta + 1)^{-1/2}||` over sampled `|z| = 2`; the
    /// quantity the guard shifts are computed from.
    pub fn guard_half_norm(&self) -> Result<f64> {
        let half = self.delta_hat.matrix_function(|x| (x + 1.0).powf(-0.5))?;
        let mut sup: f64 = 0.0;
        for j in 0..16 {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / 16.0;
            let z = Complex64::new(2.0 * theta.cos(), 2.0 * theta.sin());
            sup = sup.max(operator_norm(&(self.alpha(z) * half.entries()))?);
        }
        Ok(sup)
    }
}

/// Signed composition sum shared by the bracket evaluations:
/// `(-1)^j sum_{|M| = m + j + 1} R^{m_1} y_1 R^{m_2} ... y_j R^{m_{j+1}}`
/// with `j = args.len()` and all `m_i >= 1`. Compositions are streamed in
/// lexicographic order.
fn operator_bracket(resolvent: &CMatrix, m: u32, args: &[&CMatrix]) -> Result<CMatrix> {
    let dim = resolvent.nrows();
    let j = args.len() as u32;
    if j == 0 {
        let mut acc = resolvent.clone();
        for _ in 0..m {
            acc = &acc * resolvent;
        }
        return Ok(acc);
    }
    // Resolvent powers up to the largest possible part, m + 1.
    let mut powers: Vec<CMatrix> = Vec::with_capacity(m as usize + 2);
    powers.push(CMatrix::identity(dim, dim));
    for p in 1..=(m as usize + 1) {
        let next = &powers[p - 1] * resolvent;
        powers.push(next);
    }
    let mut acc = CMatrix::zeros(dim, dim);
    for_each_composition(m + 1 + j, j + 1, &mut |parts| {
        let mut term = powers[parts[0] as usize].clone();
        for (arg, &part) in args.iter().zip(&parts[1..]) {
            term = term * *arg;
            term = term * &powers[part as usize];
        }
        acc += term;
        Ok(())
    })?;
    if j % 2 == 1 {
        acc = -acc;
    }
    Ok(acc)
}

/// `< R_lambda^{m+1} ; delta_K >(z)`: the composition sum with the alpha
/// derivatives picked by `K`. Any entry `k_i >= 3` gives the zero matrix.
pub fn bracket_eval(
    fam: &QuadraticFamily,
    m: u32,
    k: &MultiIndex,
    z: Complex64,
) -> Result<CMatrix> {
    if k.entries().iter().any(|&ki| ki >= 3) {
        return Ok(CMatrix::zeros(fam.dim(), fam.dim()));
    }
    let resolvent = fam.resolvent(z)?;
    if k.is_empty() {
        return operator_bracket(&resolvent, m, &[]);
    }
    let d1 = fam.alpha_derivative(1, z);
    let d2 = fam.alpha_derivative(2, z);
    let args: Vec<&CMatrix> = k
        .entries()
        .iter()
        .map(|&ki| if ki == 1 { &d1 } else { &d2 })
        .collect();
    operator_bracket(&resolvent, m, &args)
}

/// Linear extension of the bracket to a combination.
pub fn bracket_eval_combination(
    fam: &QuadraticFamily,
    m: u32,
    combo: &IndexCombination,
    z: Complex64,
) -> Result<CMatrix> {
    let mut acc = CMatrix::zeros(fam.dim(), fam.dim());
    for (k, c) in combo.terms() {
        let term = bracket_eval(fam, m, k, z)?;
        acc += term * Complex64::new(c as f64, 0.0);
    }
    Ok(acc)
}

/// The l-th derivative of `z -> (Delta + alpha(z) + lambda)^{-m-1}`:
/// `< R^{m+1} ; (s + e)^l (delta_empty) >(z)`.
pub fn resolvent_derivative(
    fam: &QuadraticFamily,
    m: u32,
    l: u32,
    z: Complex64,
) -> Result<CMatrix> {
    let combo = derivative_combination(l)?;
    bracket_eval_combination(fam, m, &combo, z)
}

/// Tensor-space quadratic family of a model: base `Delta_1 (x) I + I (x) D2^2`,
/// `T1 = h.(D2 A + A D2)`, `T0 = h^2.A^2`, plus the localized `F = 2 h'.A`.
pub struct ModelFamily {
    pub delta_hat: HermitianOperator,
    pub t1: CMatrix,
    pub t0: CMatrix,
    pub f: CMatrix,
}

/// Builds the tensor-space ingredients of the model's quadratic family.
pub fn model_family(spec: &ModelSpec, disc: &LineDiscretization, cap: usize) -> Result<ModelFamily> {
    spec.validate()?;
    disc.validate_for(spec)?;
    let total = disc.n * spec.inner_dim;
    if total > cap {
        return Err(Error::Resource {
            context: "model family assembly",
            requested: total,
            cap,
        });
    }
    // Delta_hat is the A = 0 assembly (no perturbation terms).
    let free = ModelSpec {
        a: AGenerator::Scalar(0.0),
        d2: spec.d2.clone(),
        inner_dim: spec.inner_dim,
        profile: spec.profile.clone(),
        epsilon: spec.epsilon,
    };
    let free = if spec.inner_dim == 1 {
        free
    } else {
        // Keep the inner dimension: explicit zero matrix of matching size.
        ModelSpec {
            a: AGenerator::Explicit(HermitianOperator::zeros(spec.inner_dim)),
            ..free
        }
    };
    let (delta_hat, _) = assemble_schroedinger_pair_with_cap(&free, disc, cap)?;

    let (d2, a) = build_inner_pair(spec)?;
    let profile = spec.scaled_profile()?;
    let grid = disc.grid();
    let n = disc.n;
    let anti = d2.entries() * a.entries() + a.entries() * d2.entries();
    let w = HermitianOperator::new(anti)?;
    let a_sq = HermitianOperator::new(a.entries() * a.entries())?;
    let diag = |v: &[f64]| {
        CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(v[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    };
    let h: Vec<f64> = grid.iter().map(|&t| profile.h(t)).collect();
    let h_sq: Vec<f64> = h.iter().map(|&x| x * x).collect();
    let dh2: Vec<f64> = grid.iter().map(|&t| 2.0 * profile.dh(t)).collect();
    let t1 = kron(&diag(&h), w.entries());
    let t0 = kron(&diag(&h_sq), a_sq.entries());
    let f = kron(&diag(&dh2), a.entries());
    Ok(ModelFamily { delta_hat, t1, t0, f })
}

/// Guard shift for the isolation diagnostics:
/// `lambda_0 = (sup_{|z| <= 2} ||alpha(z)(Delta + 1)^{-1/2}|| + 1)^2`, taken
/// over all families being compared.
fn isolation_shift(
    delta_hat: &HermitianOperator,
    families: &[(&CMatrix, &CMatrix)],
) -> Result<f64> {
    let half = delta_hat.matrix_function(|x| (x + 1.0).powf(-0.5))?;
    let mut sup: f64 = 0.0;
    for j in 0..16 {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / 16.0;
        let z = Complex64::new(2.0 * theta.cos(), 2.0 * theta.sin());
        for (t1, t0) in families {
            let alpha = *t1 * z + *t0 * (z * z);
            sup = sup.max(operator_norm(&(alpha * half.entries()))?);
        }
    }
    Ok((sup + 1.0).powi(2))
}

/// The two families compared by the isolation diagnostics: the profiled one
/// and the bare inner one, over the same base, with a common guarded shift.
struct IsolationSetup {
    parts: ModelFamily,
    fam_alpha: QuadraticFamily,
    fam_beta: QuadraticFamily,
}

fn isolation_setup(spec: &ModelSpec, disc: &LineDiscretization) -> Result<IsolationSetup> {
    let parts = model_family(spec, disc, crate::model::DEFAULT_DENSE_CAP)?;
    let (d2, a) = build_inner_pair(spec)?;
    let anti = d2.entries() * a.entries() + a.entries() * d2.entries();
    let w = HermitianOperator::new(anti)?;
    let a_sq = HermitianOperator::new(a.entries() * a.entries())?;
    let eye_line = CMatrix::identity(disc.n, disc.n);
    let beta_t1 = kron(&eye_line, w.entries());
    let beta_t0 = kron(&eye_line, a_sq.entries());
    let lambda0 = isolation_shift(
        &parts.delta_hat,
        &[(&parts.t1, &parts.t0), (&beta_t1, &beta_t0)],
    )?;
    let fam_alpha = QuadraticFamily::new(
        parts.delta_hat.clone(),
        parts.t1.clone(),
        parts.t0.clone(),
        lambda0,
    )?;
    let fam_beta = QuadraticFamily::new(parts.delta_hat.clone(), beta_t1, beta_t0, lambda0)?;
    Ok(IsolationSetup {
        parts,
        fam_alpha,
        fam_beta,
    })
}

/// Errors `|| F R^{m+1}(1) - sum_{l <= L} (1/l!) F d^l R^{m+1}|_0 ||_1` of the
/// resolvent power series, for `L = 0..=terms`. The shift must satisfy
/// `sqrt(lambda) > sup_{|z| <= 2} ||alpha(z)(Delta + 1)^{-1/2}||`.
pub fn power_series_check(
    fam: &QuadraticFamily,
    f: &CMatrix,
    m: u32,
    terms: u32,
) -> Result<Vec<f64>> {
    let guard = fam.guard_half_norm()?;
    if fam.lambda().sqrt() <= guard {
        return Err(Error::Guard {
            message: format!(
                "power series needs sqrt(lambda) > {guard:.6e}; lambda = {:.6e}",
                fam.lambda()
            ),
            required: (guard * guard).max(1.0),
        });
    }
    let one = Complex64::new(1.0, 0.0);
    let r_at_one = fam.resolvent(one)?;
    let target = f * operator_bracket(&r_at_one, m, &[])?;
    let mut partial = CMatrix::zeros(fam.dim(), fam.dim());
    let mut factorial = 1.0f64;
    let mut errors = Vec::with_capacity(terms as usize + 1);
    for l in 0..=terms {
        if l > 0 {
            factorial *= l as f64;
        }
        let derivative = resolvent_derivative(fam, m, l, Complex64::new(0.0, 0.0))?;
        partial += f * derivative * Complex64::new(1.0 / factorial, 0.0);
        errors.push(trace_norm(&(&target - &partial))?);
    }
    Ok(errors)
}

/// Weighted operator-norm gap of the isolation statement at level `(m, l)`:
/// `|| (Delta + 1)^{m+1} ( d^l R^{m+1}(eps)|_0 - h_eps^l d^l S^{m+1}|_0 ) ||`.
/// The continuum limit of the gap is zero as eps decreases.
pub fn adiabatic_isolation_gap(
    spec: &ModelSpec,
    disc: &LineDiscretization,
    m: u32,
    l: u32,
    epsilon: f64,
) -> Result<f64> {
    let scaled = spec.with_epsilon(epsilon)?;
    let setup = isolation_setup(&scaled, disc)?;
    let dim = setup.parts.delta_hat.dim();
    let d = spec.inner_dim;

    let zero = Complex64::new(0.0, 0.0);
    let d_alpha = resolvent_derivative(&setup.fam_alpha, m, l, zero)?;
    let d_beta = resolvent_derivative(&setup.fam_beta, m, l, zero)?;

    // h_eps^l as a multiplication operator on the line factor.
    let profile = scaled.scaled_profile()?;
    let grid = disc.grid();
    let h_pow = CMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            Complex64::new(profile.h(grid[i / d]).powi(l as i32), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let weight = setup
        .parts
        .delta_hat
        .matrix_function(|x| (x + 1.0).powi(m as i32 + 1))?;
    let gap = weight.entries() * (d_alpha - h_pow * d_beta);
    operator_norm(&gap)
}

/// Both sides of the commutator-correction identity at `K`:
/// `<R(eps)^{m+1}; delta_K>(0) - h_eps^{|K|} <S^{m+1}; delta_K>(0)` against
/// the sum of brackets with one inserted commutator `[Delta, h_eps^{k_p + ... + k_j}]`.
/// The identity is algebraic, so the returned relative gap must sit at
/// rounding level at any truncation.
pub fn commutator_correction_check(
    spec: &ModelSpec,
    disc: &LineDiscretization,
    m: u32,
    k: &MultiIndex,
    epsilon: f64,
) -> Result<f64> {
    if k.is_empty() {
        return Ok(0.0);
    }
    let scaled = spec.with_epsilon(epsilon)?;
    let setup = isolation_setup(&scaled, disc)?;
    let IsolationSetup {
        parts,
        fam_alpha,
        fam_beta,
    } = setup;
    let dim = parts.delta_hat.dim();
    let d = spec.inner_dim;

    let zero = Complex64::new(0.0, 0.0);
    let profile = scaled.scaled_profile()?;
    let grid = disc.grid();
    let h_power = |p: u32| {
        CMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                Complex64::new(profile.h(grid[i / d]).powi(p as i32), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    };

    let left = bracket_eval(&fam_alpha, m, k, zero)?
        - h_power(k.degree()) * bracket_eval(&fam_beta, m, k, zero)?;

    // Right side: insert [Delta_hat, h^{k_p + ... + k_j}] at slot p.
    let resolvent = fam_alpha.resolvent(zero)?;
    let entries = k.entries();
    let j = entries.len();
    let d_alpha: Vec<CMatrix> = entries
        .iter()
        .map(|&ki| fam_alpha.alpha_derivative(ki, zero))
        .collect();
    let d_beta: Vec<CMatrix> = entries
        .iter()
        .map(|&ki| fam_beta.alpha_derivative(ki, zero))
        .collect();
    let mut right = CMatrix::zeros(dim, dim);
    for p in 0..j {
        let tail_degree: u32 = entries[p..].iter().sum();
        let h_tail = h_power(tail_degree);
        let commutator = parts.delta_hat.entries() * &h_tail - &h_tail * parts.delta_hat.entries();
        let mut args: Vec<&CMatrix> = Vec::with_capacity(j + 1);
        for item in d_alpha.iter().take(p) {
            args.push(item);
        }
        args.push(&commutator);
        for item in d_beta.iter().skip(p) {
            args.push(item);
        }
        right += operator_bracket(&resolvent, m, &args)?;
    }

    let scale = operator_norm(&left)?.max(operator_norm(&right)?);
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(operator_norm(&(left - right))? / scale)
}

/// `(lambda + H)^{-m-1}` through the Laplace representation
/// `(1/m!') integral_0^inf s^m e^{-s (lambda + H)} ds`, evaluated with
/// generalized Gauss-Laguerre quadrature after absorbing `e^{-s lambda}`
/// (substitution `u = lambda s`); the matrix exponentials use scaling and
/// squaring, fully independent of the spectral route.
pub fn laplace_resolvent_power(
    h: &HermitianOperator,
    lambda: f64,
    m: u32,
) -> Result<HermitianOperator> {
    if lambda <= 0.0 {
        return Err(Error::parameter("lambda", format!("must be > 0, got {lambda}")));
    }
    let dim = h.dim();
    let (nodes, weights) = gauss_laguerre(96, m as f64)?;
    let mut acc = CMatrix::zeros(dim, dim);
    for (u, w) in nodes.iter().zip(weights.iter()) {
        let term = expm(&(h.entries() * Complex64::new(-u / lambda, 0.0)));
        acc += term * Complex64::new(*w, 0.0);
    }
    let mut factorial = 1.0f64;
    for i in 1..=m {
        factorial *= i as f64;
    }
    acc *= Complex64::new(lambda.powi(-(m as i32) - 1) / factorial, 0.0);
    HermitianOperator::new(acc)
}

/// Matrix exponential by Pade-13 with scaling and squaring.
pub fn expm(a: &CMatrix) -> CMatrix {
    const THETA_13: f64 = 5.371_920_351_148_152;
    let dim = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let scaled = a * Complex64::new(0.5f64.powi(squarings as i32), 0.0);

    const B: [f64; 14] = [
        64_764_752_532_480_000.0,
        32_382_376_266_240_000.0,
        7_771_770_303_897_600.0,
        1_187_353_796_428_800.0,
        129_060_195_264_000.0,
        10_559_470_521_600.0,
        670_442_572_800.0,
        33_522_128_640.0,
        1_323_241_920.0,
        40_840_800.0,
        960_960.0,
        16_380.0,
        182.0,
        1.0,
    ];
    let eye = CMatrix::identity(dim, dim);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let u_inner = &a6 * Complex64::new(B[13], 0.0)
        + &a4 * Complex64::new(B[11], 0.0)
        + &a2 * Complex64::new(B[9], 0.0);
    let u = &scaled
        * (&a6 * u_inner
            + &a6 * Complex64::new(B[7], 0.0)
            + &a4 * Complex64::new(B[5], 0.0)
            + &a2 * Complex64::new(B[3], 0.0)
            + &eye * Complex64::new(B[1], 0.0));
    let v_inner = &a6 * Complex64::new(B[12], 0.0)
        + &a4 * Complex64::new(B[10], 0.0)
        + &a2 * Complex64::new(B[8], 0.0);
    let v = &a6 * v_inner
        + &a6 * Complex64::new(B[6], 0.0)
        + &a4 * Complex64::new(B[4], 0.0)
        + &a2 * Complex64::new(B[2], 0.0)
        + &eye * Complex64::new(B[0], 0.0);
    let mut result = (&v - &u)
        .lu()
        .try_inverse()
        .expect("Pade denominator is invertible after scaling")
        * (&v + &u);
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

fn one_norm(a: &CMatrix) -> f64 {
    let mut max = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|x| x.norm()).sum();
        max = max.max(s);
    }
    max
}

/// Per-k result of the resolvent bound sweep.
#[derive(Debug, Clone)]
pub struct ResolventBoundEntry {
    pub k: usize,
    pub lambdas: Vec<f64>,
    pub norms: Vec<f64>,
    pub fitted_slope: f64,
    pub slope_bound: f64,
    pub within_bound: bool,
}

/// Report of the weighted-commutator resolvent bound check.
#[derive(Debug, Clone)]
pub struct ResolventBoundReport {
    pub p: f64,
    pub entries: Vec<ResolventBoundEntry>,
}

/// Sweeps `||(Delta + 1)^p delta^k((Delta + alpha(z) + lambda)^{-1})||` over
/// the lambda grid for `k in {0, 1, 2}`, fits the lambda exponent by log-log
/// regression, and reports whether the slope is at most `-1 + p + 0.1`.
pub fn resolvent_bound_check(
    delta_hat: &HermitianOperator,
    t1: &CMatrix,
    t0: &CMatrix,
    p: f64,
    lambdas: &[f64],
) -> Result<ResolventBoundReport> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::parameter("p", format!("must lie in [0, 1], got {p}")));
    }
    if lambdas.len() < 3 {
        return Err(Error::parameter("lambdas", "need at least 3 sweep points"));
    }
    // Sampled sup of ||alpha(z)(Delta + 1)^{-1/2}|| over |z| <= 1.
    let half = delta_hat.matrix_function(|x| (x + 1.0).powf(-0.5))?;
    let samples: Vec<Complex64> = vec![
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    ];
    let alpha_at = |z: Complex64| t1 * z + t0 * (z * z);
    let mut guard: f64 = 0.0;
    for &z in &samples {
        guard = guard.max(operator_norm(&(alpha_at(z) * half.entries()))?);
    }
    for &lambda in lambdas {
        if lambda.sqrt() < guard + 0.05 {
            return Err(Error::parameter(
                "lambdas",
                format!("sqrt({lambda}) below guard {guard:.3e} + margin"),
            ));
        }
    }

    let dim = delta_hat.dim();
    let weight = delta_hat.matrix_function(|x| (x + 1.0).powf(p))?;
    let mut entries = Vec::new();
    for k in 0..=2usize {
        let mut norms = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            let mut sup: f64 = 0.0;
            for &z in &samples {
                let shifted = delta_hat.entries()
                    + alpha_at(z)
                    + CMatrix::identity(dim, dim) * Complex64::new(lambda, 0.0);
                let resolvent = shifted.lu().try_inverse().ok_or(Error::Guard {
                    message: format!("resolvent singular at lambda = {lambda}"),
                    required: lambda,
                })?;
                let commuted = crate::operator::iterated_commutator(delta_hat, &resolvent, k)?;
                sup = sup.max(operator_norm(&(weight.entries() * commuted))?);
            }
            norms.push(sup);
        }
        let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
        let ys: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
        let fitted_slope = linear_slope(&xs, &ys);
        let slope_bound = -1.0 + p + 0.1;
        entries.push(ResolventBoundEntry {
            k,
            lambdas: lambdas.to_vec(),
            norms,
            fitted_slope,
            slope_bound,
            within_bound: fitted_slope <= slope_bound,
        });
    }
    Ok(ResolventBoundReport { p, entries })
}

fn linear_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        cov += (x - mean_x) * (y - mean_y);
        var += (x - mean_x) * (x - mean_x);
    }
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::FractionalPowerMethod;
    use approx::assert_relative_eq;

    fn idx(entries: &[u32]) -> MultiIndex {
        MultiIndex::new(entries.to_vec()).unwrap()
    }

    #[test]
    fn s_on_empty_gives_single_one() {
        let out = apply_s(&IndexCombination::empty_index());
        assert_eq!(out.len(), 1);
        assert_eq!(out.coefficient(&idx(&[1])), 1);
    }

    #[test]
    fn e_on_empty_is_zero() {
        let out = apply_e(&IndexCombination::empty_index());
        assert!(out.is_empty());
    }

    #[test]
    fn s_merges_coinciding_insertions() {
        let out = apply_s(&IndexCombination::delta(idx(&[1])));
        assert_eq!(out.len(), 1);
        assert_eq!(out.coefficient(&idx(&[1, 1])), 2);
    }

    #[test]
    fn s_on_two_keeps_order() {
        let out = apply_s(&IndexCombination::delta(idx(&[2])));
        assert_eq!(out.coefficient(&idx(&[1, 2])), 1);
        assert_eq!(out.coefficient(&idx(&[2, 1])), 1);
    }

    #[test]
    fn s_plus_e_on_one() {
        let base = IndexCombination::delta(idx(&[1]));
        let mut out = apply_s(&base);
        for (k, c) in apply_e(&base).terms() {
            out.add(k.clone(), c);
        }
        assert_eq!(out.coefficient(&idx(&[1, 1])), 2);
        assert_eq!(out.coefficient(&idx(&[2])), 1);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn derivative_combination_levels() {
        assert_eq!(
            derivative_combination(0).unwrap(),
            IndexCombination::empty_index()
        );
        let l1 = derivative_combination(1).unwrap();
        assert_eq!(l1.coefficient(&idx(&[1])), 1);
        assert_eq!(l1.len(), 1);
        let l2 = derivative_combination(2).unwrap();
        assert_eq!(l2.coefficient(&idx(&[1, 1])), 2);
        assert_eq!(l2.coefficient(&idx(&[2])), 1);
        assert_eq!(l2.len(), 2);
    }

    #[test]
    fn coefficient_mass_bound() {
        let mut factorial = 1u64;
        for l in 1..=8u32 {
            factorial *= l as u64;
            let combo = derivative_combination(l).unwrap();
            let mass = combo.coefficient_mass() as u64;
            assert!(
                mass <= 2u64.pow(l) * factorial,
                "level {l}: mass {mass} exceeds 2^l l!"
            );
            // All indices at level l have degree l.
            assert!(combo.terms().all(|(k, _)| k.degree() == l));
        }
    }

    #[test]
    fn derivative_cap_is_enforced() {
        assert!(matches!(
            derivative_combination(13),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn composition_enumeration_matches_binomial() {
        for total in 1..9u32 {
            for parts in 1..=total {
                let mut count = 0u64;
                for_each_composition(total, parts, &mut |c| {
                    assert_eq!(c.iter().sum::<u32>(), total);
                    assert!(c.iter().all(|&x| x >= 1));
                    count += 1;
                    Ok(())
                })
                .unwrap();
                assert_eq!(count, composition_count(total, parts), "{total} into {parts}");
            }
        }
    }

    fn scalar_family(a: f64, b: f64, lambda: f64) -> QuadraticFamily {
        QuadraticFamily::new(
            HermitianOperator::zeros(1),
            CMatrix::from_element(1, 1, Complex64::new(a, 0.0)),
            CMatrix::from_element(1, 1, Complex64::new(b, 0.0)),
            lambda,
        )
        .unwrap()
    }

    #[test]
    fn bracket_empty_index_is_resolvent_power() {
        let fam = scalar_family(0.1, 0.05, 2.0);
        for m in 0..3u32 {
            let b = bracket_eval(&fam, m, &MultiIndex::empty(), Complex64::new(0.3, 0.0)).unwrap();
            let r: f64 = 1.0 / (0.3 * 0.1 + 0.09 * 0.05 + 2.0);
            assert_relative_eq!(b[(0, 0)].re, r.powi(m as i32 + 1), epsilon = 1e-12);
        }
    }

    #[test]
    fn bracket_vanishes_for_high_entries() {
        let fam = scalar_family(0.3, 0.2, 4.0);
        let b = bracket_eval(&fam, 1, &idx(&[3]), Complex64::new(0.0, 0.0)).unwrap();
        assert_eq!(b.norm(), 0.0);
        let b = bracket_eval(&fam, 2, &idx(&[1, 4, 1]), Complex64::new(0.5, 0.0)).unwrap();
        assert_eq!(b.norm(), 0.0);
    }

    #[test]
    fn bracket_single_index_scalar_hand_value() {
        // K = (1), m = 0: -R (a + 2zb) R; at z = 0 this is -a / lambda^2.
        let a = 0.7;
        let b = 0.2;
        let lambda = 3.0;
        let fam = scalar_family(a, b, lambda);
        let v = bracket_eval(&fam, 0, &idx(&[1]), Complex64::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(v[(0, 0)].re, -a / (lambda * lambda), epsilon = 1e-12);
    }

    #[test]
    fn resolvent_derivative_first_order_formula() {
        // l = 1, m = 0: -R (d alpha) R.
        let delta = crate::operator::random_hermitian(5, 3, 1.0);
        let psd = HermitianOperator::new(delta.entries() * delta.entries()).unwrap();
        let t1 = crate::operator::random_hermitian(5, 4, 0.3).into_entries();
        let t0 = crate::operator::random_hermitian(5, 5, 0.2).into_entries();
        let fam = QuadraticFamily::new(psd, t1.clone(), t0.clone(), 9.0).unwrap();
        let z = Complex64::new(0.2, 0.1);
        let direct = resolvent_derivative(&fam, 0, 1, z).unwrap();
        let r = fam.resolvent(z).unwrap();
        let expected = -(&r * (t1 + t0 * (z * 2.0)) * &r);
        assert!((direct - expected).norm() < 1e-12);
    }

    #[test]
    fn resolvent_derivative_matches_finite_differences() {
        // First-order check with the 4-point 4th-order stencil; higher levels
        // are exercised by the acceptance oracle.
        let delta = crate::operator::random_hermitian(6, 31, 1.0);
        let psd = HermitianOperator::new(delta.entries() * delta.entries()).unwrap();
        let t1 = crate::operator::random_hermitian(6, 32, 0.4).into_entries();
        let t0 = crate::operator::random_hermitian(6, 33, 0.1).into_entries();
        let fam = QuadraticFamily::new(psd, t1, t0, 4.0).unwrap();
        for m in 0..3u32 {
            let analytic = resolvent_derivative(&fam, m, 1, Complex64::new(0.0, 0.0)).unwrap();
            let h = 1e-3;
            let at = |x: f64| -> CMatrix {
                let r = fam.resolvent(Complex64::new(x, 0.0)).unwrap();
                operator_bracket(&r, m, &[]).unwrap()
            };
            let eight = Complex64::new(8.0, 0.0);
            let fd = (at(-2.0 * h) - at(-h) * eight + at(h) * eight - at(2.0 * h))
                * Complex64::new(1.0 / (12.0 * h), 0.0);
            let rel = (&analytic - &fd).norm() / analytic.norm();
            assert!(rel < 1e-8, "m = {m}: relative error {rel:.3e}");
        }
    }

    #[test]
    fn leibniz_rule_on_combinations() {
        // d/dz <R^{m+1}; Theta> = <R^{m+1}; (s+e)(Theta)> against first-order
        // finite differences.
        let delta = crate::operator::random_hermitian(5, 41, 1.0);
        let psd = HermitianOperator::new(delta.entries() * delta.entries()).unwrap();
        let t1 = crate::operator::random_hermitian(5, 42, 0.3).into_entries();
        let t0 = crate::operator::random_hermitian(5, 43, 0.15).into_entries();
        let fam = QuadraticFamily::new(psd, t1, t0, 6.0).unwrap();
        let m = 1u32;
        for theta in [
            IndexCombination::delta(idx(&[1])),
            IndexCombination::delta(idx(&[2])),
            IndexCombination::delta(idx(&[1, 1])),
            derivative_combination(3).unwrap(),
        ] {
            let mut shifted = apply_s(&theta);
            for (k, c) in apply_e(&theta).terms() {
                shifted.add(k.clone(), c);
            }
            let z0 = Complex64::new(0.1, 0.0);
            let analytic = bracket_eval_combination(&fam, m, &shifted, z0).unwrap();
            let h = 1e-3;
            let at = |x: f64| {
                bracket_eval_combination(&fam, m, &theta, Complex64::new(x, 0.0)).unwrap()
            };
            let eight = Complex64::new(8.0, 0.0);
            let fd = (at(0.1 - 2.0 * h) - at(0.1 - h) * eight + at(0.1 + h) * eight
                - at(0.1 + 2.0 * h))
                * Complex64::new(1.0 / (12.0 * h), 0.0);
            let rel = (&analytic - &fd).norm() / analytic.norm().max(1e-300);
            assert!(rel < 1e-5, "Leibniz residual {rel:.3e}");
        }
    }

    #[test]
    fn guard_rejects_small_lambda() {
        let err = QuadraticFamily::new(
            HermitianOperator::zeros(1),
            CMatrix::from_element(1, 1, Complex64::new(5.0, 0.0)),
            CMatrix::from_element(1, 1, Complex64::new(0.0, 0.0)),
            1.0,
        );
        assert!(matches!(err, Err(Error::Guard { .. })));
    }

    #[test]
    fn laplace_scalar_hand_value() {
        // H = 0, lambda = 2, m = 1: integral s e^{-2s} ds = 1/4.
        let h = HermitianOperator::zeros(1);
        let r = laplace_resolvent_power(&h, 2.0, 1).unwrap();
        assert_relative_eq!(r.entries()[(0, 0)].re, 0.25, epsilon = 1e-10);
    }

    #[test]
    fn laplace_diagonal_resolvent() {
        let h = HermitianOperator::from_diagonal(&[0.0, 1.0]);
        let r = laplace_resolvent_power(&h, 1.0, 0).unwrap();
        assert_relative_eq!(r.entries()[(0, 0)].re, 1.0, epsilon = 1e-9);
        assert_relative_eq!(r.entries()[(1, 1)].re, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn laplace_matches_spectral_on_random_psd() {
        let g = crate::operator::random_hermitian(5, 77, 0.8);
        let psd = HermitianOperator::new(g.entries() * g.entries()).unwrap();
        let lambda = 1.3;
        let quad = laplace_resolvent_power(&psd, lambda, 2).unwrap();
        let spectral = crate::operator::fractional_resolvent_power(
            &psd,
            lambda,
            3.0,
            FractionalPowerMethod::Spectral,
        )
        .unwrap();
        let rel = (quad.entries() - spectral.entries()).norm() / spectral.entries().norm();
        assert!(rel <= 1e-8, "laplace vs spectral gap {rel:.3e}");
    }

    #[test]
    fn expm_matches_spectral_exponential() {
        let h = crate::operator::random_hermitian(6, 91, 1.5);
        let direct = expm(&(h.entries() * Complex64::new(-0.7, 0.0)));
        let spectral = h.matrix_function(|x| (-0.7 * x).exp()).unwrap();
        let rel = (&direct - spectral.entries()).norm() / direct.norm();
        assert!(rel < 1e-12, "expm gap {rel:.3e}");
    }

    #[test]
    fn resolvent_bound_free_case_slopes() {
        let delta = HermitianOperator::from_diagonal(&[0.0, 1.0, 4.0, 9.0, 100.0]);
        let zero = CMatrix::zeros(5, 5);
        let lambdas = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
        // p = 0: || (Delta + lambda)^{-1} || = 1 / lambda exactly; slope -1.
        let report = resolvent_bound_check(&delta, &zero, &zero, 0.0, &lambdas).unwrap();
        let k0 = &report.entries[0];
        assert_relative_eq!(k0.fitted_slope, -1.0, epsilon = 1e-9);
        assert!(k0.within_bound);
        // Commutators with the free resolvent vanish.
        assert!(report.entries[1].norms.iter().all(|&v| v < 1e-14));
        // p = 1: bounded, slope near 0.
        let report = resolvent_bound_check(&delta, &zero, &zero, 1.0, &lambdas).unwrap();
        let k0 = &report.entries[0];
        assert!(k0.fitted_slope.abs() < 0.1, "slope {}", k0.fitted_slope);
        assert!(k0.within_bound);
    }

    use crate::model::{D2Generator, LineDiscretization, ModelSpec};
    use crate::profile::Profile;

    fn guarded_scalar_model() -> (ModelSpec, LineDiscretization) {
        let spec = ModelSpec {
            inner_dim: 1,
            d2: D2Generator::Scalar(0.5),
            a: AGenerator::Scalar(0.1),
            profile: Profile::half_kink(2.0).unwrap(),
            epsilon: 1.0,
        };
        let disc = LineDiscretization::new(16.0, 24).with_safety_factor(2.0);
        (spec, disc)
    }

    #[test]
    fn power_series_trivial_when_alpha_vanishes() {
        let (spec, disc) = guarded_scalar_model();
        let parts = model_family(&spec, &disc, 4096).unwrap();
        let dim = parts.delta_hat.dim();
        let fam = QuadraticFamily::new(
            parts.delta_hat.clone(),
            CMatrix::zeros(dim, dim),
            CMatrix::zeros(dim, dim),
            4.0,
        )
        .unwrap();
        let errors = power_series_check(&fam, &parts.f, 1, 3).unwrap();
        assert!(errors[0] <= 1e-13, "alpha = 0 must converge at L = 0");
    }

    #[test]
    fn power_series_decays_geometrically() {
        let (spec, disc) = guarded_scalar_model();
        let parts = model_family(&spec, &disc, 4096).unwrap();
        let fam =
            QuadraticFamily::new(parts.delta_hat.clone(), parts.t1.clone(), parts.t0.clone(), 4.0)
                .unwrap();
        let errors = power_series_check(&fam, &parts.f, 1, 10).unwrap();
        assert!(
            errors[10] <= 1e-8,
            "error at L = 10 is {:.3e}, errors {errors:?}",
            errors[10]
        );
        // Monotone nonincreasing beyond L = 2.
        for w in errors[2..].windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "errors not decaying: {errors:?}");
        }
    }

    #[test]
    fn power_series_guard_names_required_lambda() {
        let (spec, disc) = guarded_scalar_model();
        let parts = model_family(&spec, &disc, 4096).unwrap();
        // lambda = 0.005 is below the guard for this family.
        let fam = QuadraticFamily::new(
            parts.delta_hat.clone(),
            parts.t1.clone(),
            parts.t0.clone(),
            0.005,
        );
        // Either the family constructor or the series check must refuse.
        match fam {
            Err(Error::Guard { .. }) => {}
            Ok(fam) => {
                assert!(matches!(
                    power_series_check(&fam, &parts.f, 1, 2),
                    Err(Error::Guard { .. })
                ));
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn isolation_gap_vanishes_at_level_zero() {
        let (spec, disc) = guarded_scalar_model();
        let gap = adiabatic_isolation_gap(&spec, &disc, 1, 0, 1.0).unwrap();
        assert_eq!(gap, 0.0, "both level-0 resolvents coincide");
    }

    #[test]
    fn isolation_gap_vanishes_for_constant_profile() {
        let spec = ModelSpec {
            inner_dim: 1,
            d2: D2Generator::Scalar(0.5),
            a: AGenerator::Scalar(0.2),
            profile: Profile::constant(0.7),
            epsilon: 1.0,
        };
        let disc = LineDiscretization::new(16.0, 24).with_safety_factor(2.0);
        for l in 1..=3 {
            let gap = adiabatic_isolation_gap(&spec, &disc, 1, l, 1.0).unwrap();
            assert!(gap <= 1e-10, "constant profile, l = {l}: gap {gap:.3e}");
        }
    }

    #[test]
    fn isolation_gap_decays_along_epsilon_ladder() {
        let spec = ModelSpec {
            inner_dim: 1,
            d2: D2Generator::Scalar(1.0),
            a: AGenerator::Scalar(1.0),
            profile: Profile::tanh_clamped(2.0).unwrap(),
            epsilon: 1.0,
        };
        let disc = LineDiscretization::new(32.0, 96).with_safety_factor(2.0);
        let gap_coarse = adiabatic_isolation_gap(&spec, &disc, 1, 1, 1.0).unwrap();
        let gap_fine = adiabatic_isolation_gap(&spec, &disc, 1, 1, 0.125).unwrap();
        assert!(
            gap_fine < gap_coarse,
            "gap must shrink with epsilon: {gap_fine} vs {gap_coarse}"
        );
    }

    #[test]
    fn commutator_correction_is_algebraic() {
        let spec = ModelSpec {
            inner_dim: 1,
            d2: D2Generator::Scalar(0.5),
            a: AGenerator::Scalar(1.0),
            profile: Profile::tanh_clamped(2.0).unwrap(),
            epsilon: 1.0,
        };
        let disc = LineDiscretization::new(16.0, 64).with_safety_factor(2.0);
        for entries in [vec![1u32], vec![2], vec![1, 1], vec![1, 2]] {
            let k = MultiIndex::new(entries.clone()).unwrap();
            for m in [0u32, 1] {
                let residual = commutator_correction_check(&spec, &disc, m, &k, 1.0).unwrap();
                assert!(
                    residual <= 1e-9,
                    "K = {entries:?}, m = {m}: residual {residual:.3e}"
                );
            }
        }
    }

    #[test]
    fn commutator_correction_with_inner_structure() {
        // Non-scalar inner space exercises the tensor bookkeeping.
        let spec = ModelSpec {
            inner_dim: 2,
            d2: D2Generator::Explicit(crate::operator::random_hermitian(2, 12, 0.8)),
            a: AGenerator::Random { seed: 13, scale: 0.6 },
            profile: Profile::half_kink(2.0).unwrap(),
            epsilon: 0.5,
        };
        let disc = LineDiscretization::new(16.0, 32).with_safety_factor(2.0);
        let k = MultiIndex::new(vec![1, 2]).unwrap();
        let residual = commutator_correction_check(&spec, &disc, 1, &k, 0.5).unwrap();
        assert!(residual <= 1e-9, "residual {residual:.3e}");
    }
}
