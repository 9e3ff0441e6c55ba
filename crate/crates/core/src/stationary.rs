//! Invariant distributions, total-variation distances, and Doeblin
//! minorization certificates for finite row-stochastic kernels.
//!
//! The default solver is a dense linear solve of `(P^T - I) mu = 0` with
//! the last balance equation replaced by the normalization `sum mu = 1`;
//! power iteration is kept as an independent verification oracle. When the
//! direct solve cannot produce a clean solution, the fallback path runs a
//! lazy power iteration and probes uniqueness from two extreme starting
//! points — kernels with several invariant distributions (the identity
//! matrix being the textbook case) are reported as ergodicity errors
//! rather than silently resolved.

use nalgebra::{DMatrix, DVector};

use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;

/// Default residual tolerance `‖muP - mu‖_1` for the solver.
pub const DEFAULT_STATIONARY_TOL: f64 = 1e-12;
/// Tolerance of the power-iteration verification oracle.
pub const POWER_TOL: f64 = 1e-13;
/// Iteration cap for power iteration.
pub const POWER_MAX_ITERS: usize = 1_000_000;

/// L1 residual `‖muP - mu‖_1`.
pub fn residual_l1(p: &RowMatrix, mu: &[f64]) -> f64 {
    let next = p.left_mul(mu);
    next.iter().zip(mu).map(|(a, b)| (a - b).abs()).sum()
}

fn check_row_stochastic(p: &RowMatrix) -> Result<()> {
    let dev = p.max_row_sum_deviation();
    if dev > 1e-10 {
        return Err(Error::InvalidDistribution(format!(
            "matrix is not row-stochastic: worst row deviation {}",
            dev
        )));
    }
    if p.min_entry() < -1e-12 {
        return Err(Error::InvalidDistribution(format!(
            "matrix has negative entry {}",
            p.min_entry()
        )));
    }
    Ok(())
}

fn direct_solve(p: &RowMatrix) -> Option<Vec<f64>> {
    let n = p.n();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(j, i)] = p.get(i, j);
        }
    }
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let b = DVector::<f64>::from_fn(n, |i, _| if i == n - 1 { 1.0 } else { 0.0 });
    a.lu().solve(&b).map(|v| v.iter().copied().collect())
}

/// One sweep of the lazy chain `(I + P) / 2`, which shares P's invariant
/// distributions but cannot oscillate on periodic kernels.
fn lazy_step(p: &RowMatrix, mu: &[f64]) -> Vec<f64> {
    let next = p.left_mul(mu);
    next.iter().zip(mu).map(|(a, b)| 0.5 * (a + b)).collect()
}

fn lazy_converge(p: &RowMatrix, start: Vec<f64>, tol: f64, max_iters: usize) -> Option<Vec<f64>> {
    let mut mu = start;
    for _ in 0..max_iters {
        if residual_l1(p, &mu) <= tol {
            return Some(mu);
        }
        mu = lazy_step(p, &mu);
    }
    if residual_l1(p, &mu) <= tol {
        Some(mu)
    } else {
        None
    }
}

/// Starting from two extreme point masses, both lazy iterations must land
/// on the same invariant distribution. Disagreement means the kernel has
/// several invariant distributions.
fn unique_invariant_probe(p: &RowMatrix, tol: f64) -> Result<()> {
    let n = p.n();
    if n == 1 {
        return Ok(());
    }
    let mut e_first = vec![0.0; n];
    e_first[0] = 1.0;
    let mut e_last = vec![0.0; n];
    e_last[n - 1] = 1.0;
    let a = lazy_converge(p, e_first, tol.max(1e-13), POWER_MAX_ITERS)
        .ok_or_else(|| Error::NotErgodic("power iteration failed to contract".into()))?;
    let b = lazy_converge(p, e_last, tol.max(1e-13), POWER_MAX_ITERS)
        .ok_or_else(|| Error::NotErgodic("power iteration failed to contract".into()))?;
    let tv: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
    if tv > 1e-8 {
        return Err(Error::NotErgodic(format!(
            "multiple invariant distributions detected (TV {} between two starts)",
            tv
        )));
    }
    Ok(())
}

fn solve_invariant(p: &RowMatrix, tol: f64) -> Result<Vec<f64>> {
    check_row_stochastic(p)?;
    if let Some(mu) = direct_solve(p) {
        let min = mu.iter().copied().fold(f64::INFINITY, f64::min);
        if min >= crate::dist::NEG_TOL && residual_l1(p, &mu) <= tol {
            return Ok(mu);
        }
    }
    lazy_converge(p, uniform_vec(p.n()), tol, POWER_MAX_ITERS)
        .ok_or_else(|| Error::NotErgodic("power iteration failed to contract".into()))
}

/// Invariant distribution of a row-stochastic matrix.
///
/// Returns a distribution whose residual `‖muP - mu‖_1` is at most `tol`,
/// after verifying uniqueness with the two-start probe. Kernels with
/// several invariant distributions (or none reachable) yield
/// [`Error::NotErgodic`]. Callers that already hold an ergodicity
/// certificate for a family of kernels can skip the probe via
/// [`stationary_distribution_unverified`].
pub fn stationary_distribution(p: &RowMatrix, tol: f64) -> Result<Distribution> {
    let mu = solve_invariant(p, tol)?;
    unique_invariant_probe(p, tol)?;
    Distribution::new(mu)
}

/// [`stationary_distribution`] without the uniqueness probe: an invariant
/// distribution with residual at most `tol`, which is only *the*
/// stationary law when the kernel is known ergodic.
pub fn stationary_distribution_unverified(p: &RowMatrix, tol: f64) -> Result<Distribution> {
    Distribution::new(solve_invariant(p, tol)?)
}

fn uniform_vec(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Plain power iteration `mu <- mu P` from `start`, the verification oracle
/// for the direct solver. Fails with an ergodicity error when the residual
/// does not reach `tol` within `max_iters` sweeps.
pub fn power_iteration(
    p: &RowMatrix,
    start: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Distribution> {
    check_row_stochastic(p)?;
    if start.len() != p.n() {
        return Err(Error::DimensionMismatch(format!(
            "start vector has {} entries for a {} matrix",
            start.len(),
            p.n()
        )));
    }
    let mut mu = start.to_vec();
    for _ in 0..max_iters {
        if residual_l1(p, &mu) <= tol {
            return Distribution::new(mu);
        }
        mu = p.left_mul(&mu);
    }
    if residual_l1(p, &mu) <= tol {
        Distribution::new(mu)
    } else {
        Err(Error::NotErgodic(format!(
            "power iteration residual {} above {} after {} sweeps",
            residual_l1(p, &mu),
            tol,
            max_iters
        )))
    }
}

/// Total variation distance `½ Σ |mu_g - nu_g|`.
pub fn tv_distance(mu: &Distribution, nu: &Distribution) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::DimensionMismatch(format!(
            "distributions over {} vs {} points",
            mu.len(),
            nu.len()
        )));
    }
    Ok(tv_slices(mu.as_slice(), nu.as_slice()))
}

pub(crate) fn tv_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0
}

/// A verified minorization: `(P^k)(i, j) >= c * q(j)` for every `i, j`.
#[derive(Debug, Clone)]
pub struct DoeblinCertificate {
    pub k: usize,
    pub c: f64,
    pub q: Distribution,
}

impl DoeblinCertificate {
    /// Re-check the inequality against an explicitly computed matrix power.
    pub fn check(&self, p: &RowMatrix, slack: f64) -> bool {
        let mut pk = p.clone();
        for _ in 1..self.k {
            pk = pk.matmul(p);
        }
        for i in 0..p.n() {
            for j in 0..p.n() {
                if pk.get(i, j) < self.c * self.q.get(j) - slack {
                    return false;
                }
            }
        }
        true
    }

    /// Geometric mixing bound `(1 - c)^⌊n/k⌋` implied by the certificate.
    pub fn mixing_bound(&self, n: usize) -> f64 {
        (1.0 - self.c).powi((n / self.k) as i32)
    }
}

/// Best minorization at a fixed step count `k`: column minima of `P^k`
/// give the measure, their sum the constant. Returns `None` when every
/// candidate measure is degenerate (some column of `P^k` has a zero).
pub fn doeblin_minorization(p: &RowMatrix, k: usize) -> Result<Option<DoeblinCertificate>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    check_row_stochastic(p)?;
    let mut pk = p.clone();
    for _ in 1..k {
        pk = pk.matmul(p);
    }
    certificate_from_power(&pk, k)
}

fn certificate_from_power(pk: &RowMatrix, k: usize) -> Result<Option<DoeblinCertificate>> {
    let n = pk.n();
    let mut minima = vec![f64::INFINITY; n];
    for i in 0..n {
        for (j, m) in minima.iter_mut().enumerate() {
            *m = m.min(pk.get(i, j));
        }
    }
    let c: f64 = minima.iter().sum();
    if c <= 0.0 {
        return Ok(None);
    }
    let q = Distribution::new(minima.iter().map(|&m| m / c).collect())?;
    Ok(Some(DoeblinCertificate { k, c, q }))
}

/// Search `k = 1..=k_max` and return the first step count admitting a
/// positive minorization constant.
pub fn find_doeblin(p: &RowMatrix, k_max: usize) -> Result<Option<DoeblinCertificate>> {
    check_row_stochastic(p)?;
    let mut pk = p.clone();
    for k in 1..=k_max.max(1) {
        if k > 1 {
            pk = pk.matmul(p);
        }
        if let Some(cert) = certificate_from_power(&pk, k)? {
            return Ok(Some(cert));
        }
    }
    Ok(None)
}

/// Total variation of the marginal `mu0 P^n` to the invariant distribution
/// for `n = 0..=n_max`.
pub fn mixing_curve(p: &RowMatrix, mu0: &Distribution, n_max: usize) -> Result<Vec<f64>> {
    if mu0.len() != p.n() {
        return Err(Error::DimensionMismatch(format!(
            "initial distribution over {} points for a {} matrix",
            mu0.len(),
            p.n()
        )));
    }
    let mu = stationary_distribution(p, DEFAULT_STATIONARY_TOL)?;
    let mut curve = Vec::with_capacity(n_max + 1);
    let mut current = mu0.as_slice().to_vec();
    curve.push(tv_slices(&current, mu.as_slice()));
    for _ in 0..n_max {
        current = p.left_mul(&current);
        curve.push(tv_slices(&current, mu.as_slice()));
    }
    Ok(curve)
}

/// Geometric decay rate fitted on the tail of a mixing curve; `1 - rate`
/// estimates the spectral gap. `None` when the curve is too flat or short
/// to fit.
pub fn estimate_decay_rate(curve: &[f64]) -> Option<f64> {
    let usable: Vec<(usize, f64)> = curve
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 1e-13)
        .map(|(i, &v)| (i, v))
        .collect();
    if usable.len() < 3 {
        return None;
    }
    let tail = &usable[usable.len() / 2..];
    if tail.len() < 2 {
        return None;
    }
    let (n0, v0) = tail[0];
    let (n1, v1) = tail[tail.len() - 1];
    if n1 == n0 || v0 <= 0.0 || v1 <= 0.0 {
        return None;
    }
    Some(((v1 / v0).ln() / (n1 - n0) as f64).exp())
}
