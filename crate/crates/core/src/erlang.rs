//! Erlang loss/delay functions and the M/M/m/n blocking probability.
//!
//! All functions take the offered load `r = λ/μ` and are pure; only the
//! ratio of arrival to per-server service rate matters.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Switch to the `ρ = 1` forms when `|ρ - 1|` is below this.
pub const UNIT_LOAD_BRANCH_TOL: f64 = 1e-8;

/// Slack allowed outside `[0, 1]` before a probability is rejected.
const PROBABILITY_SLACK: f64 = 1e-12;

/// Blocking probability and its load derivative at one offered load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCurvePoint<T> {
    pub offered_load: T,
    pub blocking: T,
    pub blocking_derivative: T,
}

pub(crate) fn check_load<T: Scalar>(r: T) -> Result<()> {
    if !r.is_finite() || r <= T::zero() {
        return Err(Error::domain(format!(
            "offered load must be finite and positive, got {:?}",
            r
        )));
    }
    Ok(())
}

fn check_shape(m: usize, n: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::domain("server count must be at least 1"));
    }
    if m > n {
        return Err(Error::domain(format!(
            "server count {m} exceeds buffer capacity {n}"
        )));
    }
    Ok(())
}

/// Clamps `p` into `[0, 1]` when it is within rounding of the boundary,
/// and fails otherwise.
pub(crate) fn checked_probability<T: Scalar>(p: T, what: &str) -> Result<T> {
    let slack = T::lit(PROBABILITY_SLACK);
    if !p.is_finite() {
        return Err(Error::Consistency(format!("{what} is not finite: {p:?}")));
    }
    if p < T::zero() {
        if p >= -slack {
            return Ok(T::zero());
        }
        return Err(Error::Consistency(format!("{what} is negative: {p:?}")));
    }
    if p > T::one() {
        if p <= T::one() + slack {
            return Ok(T::one());
        }
        return Err(Error::Consistency(format!("{what} exceeds one: {p:?}")));
    }
    Ok(p)
}

#[inline]
fn near_unit_load<T: Scalar>(rho: T) -> bool {
    (rho - T::one()).abs() < T::lit(UNIT_LOAD_BRANCH_TOL)
}

/// Erlang-B blocking probability `B_m(r)` of the M/M/m/m loss system.
///
/// Uses the forward recursion `B_0 = 1`, `B_j = r B_{j-1} / (j + r B_{j-1})`,
/// which never overflows.
pub fn erlang_b<T: Scalar>(m: usize, r: T) -> Result<T> {
    check_load(r)?;
    let mut b = T::one();
    for j in 1..=m {
        let rb = r * b;
        b = rb / (T::from_count(j) + rb);
    }
    checked_probability(b, "Erlang-B blocking")
}

/// Derivative of [`erlang_b`] with respect to the offered load.
pub fn erlang_b_derivative<T: Scalar>(m: usize, r: T) -> Result<T> {
    if m == 0 {
        return Err(Error::domain("server count must be at least 1"));
    }
    let b = erlang_b(m, r)?;
    let mm = T::from_count(m);
    Ok((mm - r + r * b) / r * b)
}

/// Erlang-C value `C_m(r) = m B_m(r) / (m - r + r B_m(r))`.
///
/// For `r < m` this is the M/M/m delay probability. The identity is also
/// evaluated for `r >= m`, where it exceeds one and has no probabilistic
/// meaning; the denominator stays positive because `r (1 - B_m(r)) < m`.
pub fn erlang_c<T: Scalar>(m: usize, r: T) -> Result<T> {
    if m == 0 {
        return Err(Error::domain("server count must be at least 1"));
    }
    let b = erlang_b(m, r)?;
    let mm = T::from_count(m);
    let denom = mm - r + r * b;
    if denom <= T::zero() {
        return Err(Error::Numerical(format!(
            "Erlang-C denominator not positive at m={m}, r={r:?}"
        )));
    }
    Ok(mm * b / denom)
}

/// `C'_m(m) = (1 - B_m(m)) / (m B_m(m))`.
pub fn erlang_c_derivative_at_m<T: Scalar>(m: usize) -> Result<T> {
    if m == 0 {
        return Err(Error::domain("server count must be at least 1"));
    }
    let mm = T::from_count(m);
    let b = erlang_b(m, mm)?;
    Ok((T::one() - b) / (mm * b))
}

/// Blocking probability `B_{m,n}(r)` of the M/M/m/n queue.
///
/// Seeded at `B_{m,m} = B_m(r)` and advanced with
/// `B_{m,j} = r B_{m,j-1} / (m + r B_{m,j-1})`; O(n) work.
pub fn blocking_mmn<T: Scalar>(m: usize, n: usize, r: T) -> Result<T> {
    check_shape(m, n)?;
    let mut b = erlang_b(m, r)?;
    let mm = T::from_count(m);
    for _ in m..n {
        let rb = r * b;
        b = rb / (mm + rb);
    }
    checked_probability(b, "M/M/m/n blocking")
}

/// Closed form of `B_{m,n}(r)` in terms of `B_m(r)` and `ρ = r/m`.
///
/// Kept alongside the recursion as an independent evaluation route.
pub fn blocking_mmn_closed_form<T: Scalar>(m: usize, n: usize, r: T) -> Result<T> {
    check_shape(m, n)?;
    let bm = erlang_b(m, r)?;
    let mm = T::from_count(m);
    let rho = r / mm;
    let j = T::from_count(n - m);
    let b = if near_unit_load(rho) {
        bm / (T::one() + j * bm)
    } else {
        let rho_j = rho.powi((n - m) as i32);
        let one_m_rho = T::one() - rho;
        rho_j * one_m_rho * bm / (one_m_rho + rho * (T::one() - rho_j) * bm)
    };
    checked_probability(b, "M/M/m/n blocking (closed form)")
}

/// Derivative `B'_{m,n}(r)` of the M/M/m/n blocking probability.
///
/// Two-branch closed form; the `ρ = 1` branch is used when
/// `|ρ - 1| < UNIT_LOAD_BRANCH_TOL`. The `ρ ≠ 1` branch is rearranged so
/// that `ρ^{-(n-m)}` is never formed on its own.
pub fn blocking_mmn_derivative<T: Scalar>(m: usize, n: usize, r: T) -> Result<T> {
    check_shape(m, n)?;
    let b = blocking_mmn(m, n, r)?;
    let mm = T::from_count(m);
    let nn = T::from_count(n);
    let rho = r / mm;
    let two = T::lit(2.0);
    if near_unit_load(rho) {
        let d = T::from_count(n - m);
        let c = T::from_count(1 + m + n) - (d + T::one()).powi(2);
        return Ok((d + c * b / two) * b / mm);
    }
    let bm = erlang_b(m, r)?;
    let rho_j = rho.powi((n - m) as i32);
    let one_m_rho = T::one() - rho;
    // B * (1 - ρ^j) / ((1 - ρ) ρ^j), expanded through the closed form of B.
    let denom = one_m_rho + rho * (T::one() - rho_j) * bm;
    let b_times_tail = (T::one() - rho_j) * bm / denom;
    let bracket = (nn - r) / rho + ((nn - r) * b - b_times_tail) / one_m_rho;
    Ok(bracket * b / mm)
}

/// Stationary distribution of the M/M/m/n queue as a function of `r`.
///
/// Weights are accumulated with running renormalization so that large
/// `r^n` never overflows.
pub fn mmn_distribution<T: Scalar>(m: usize, n: usize, r: T) -> Result<Vec<T>> {
    check_shape(m, n)?;
    check_load(r)?;
    let ceiling = T::max_value().sqrt();
    let mut w = Vec::with_capacity(n + 1);
    w.push(T::one());
    for j in 1..=n {
        let next = w[j - 1] * r / T::from_count(j.min(m));
        w.push(next);
        if next > ceiling {
            let inv = next.recip();
            for v in w.iter_mut() {
                *v = *v * inv;
            }
        }
    }
    let total = crate::scalar::sum(w.iter().copied());
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Mean number in system `L_{m,n}(r)`.
pub fn mean_number_mmn<T: Scalar>(m: usize, n: usize, r: T) -> Result<T> {
    let pi = mmn_distribution(m, n, r)?;
    Ok(pi
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (x, &p)| acc + T::from_count(x) * p))
}

/// Blocking probability and derivative bundled at load `r`.
pub fn loss_curve_point<T: Scalar>(m: usize, n: usize, r: T) -> Result<LossCurvePoint<T>> {
    Ok(LossCurvePoint {
        offered_load: r,
        blocking: blocking_mmn(m, n, r)?,
        blocking_derivative: blocking_mmn_derivative(m, n, r)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Truncated-Poisson Erlang-B by direct summation.
    fn erlang_b_sum(m: usize, r: f64) -> f64 {
        let mut term = 1.0;
        let mut total = 1.0;
        for j in 1..=m {
            term *= r / j as f64;
            total += term;
        }
        term / total
    }

    /// Birth-death direct sum for the M/M/m/n queue: (blocking, mean).
    fn birth_death(m: usize, n: usize, r: f64) -> (f64, f64) {
        let mut logw = vec![0.0f64; n + 1];
        for j in 1..=n {
            logw[j] = logw[j - 1] + (r / j.min(m) as f64).ln();
        }
        let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = w.iter().sum();
        let mean: f64 = w.iter().enumerate().map(|(j, v)| j as f64 * v).sum::<f64>() / total;
        (w[n] / total, mean)
    }

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn erlang_b_examples() {
        assert_eq!(erlang_b(0, 2.0).unwrap(), 1.0);
        assert_relative_eq!(erlang_b(1, 2.0).unwrap(), 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(erlang_b(2, 1.0).unwrap(), 0.2, max_relative = 1e-15);
        for m in 0..60 {
            for &r in &[0.05, 0.7, 3.0, 25.0, 90.0] {
                assert_relative_eq!(erlang_b(m, r).unwrap(), erlang_b_sum(m, r), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn erlang_b_rejects_bad_load() {
        assert!(matches!(erlang_b(2, 0.0), Err(Error::Domain(_))));
        assert!(matches!(erlang_b(2, -1.0), Err(Error::Domain(_))));
        assert!(matches!(erlang_b(2, f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(erlang_b(2, f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn erlang_b_derivative_examples() {
        let b2 = erlang_b(2, 2.0).unwrap();
        assert_relative_eq!(erlang_b_derivative(2, 2.0).unwrap(), b2 * b2, max_relative = 1e-14);
        assert_relative_eq!(erlang_b_derivative(1, 1.0).unwrap(), 0.25, max_relative = 1e-15);
        let fd = central_diff(|r| erlang_b(2, r).unwrap(), 1.0, 1e-6);
        assert_relative_eq!(erlang_b_derivative(2, 1.0).unwrap(), fd, max_relative = 1e-6);
        assert!(erlang_b_derivative(0, 1.0).is_err());
    }

    #[test]
    fn erlang_c_examples() {
        assert_relative_eq!(erlang_c(1, 0.5).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(erlang_c(1, 2.0).unwrap(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(erlang_c(2, 2.0).unwrap(), 1.0, max_relative = 1e-15);
        // M/M/2 at r = 1: delay probability 1/3.
        assert_relative_eq!(erlang_c(2, 1.0).unwrap(), 1.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn erlang_c_derivative_at_m_examples() {
        assert_relative_eq!(erlang_c_derivative_at_m::<f64>(1).unwrap(), 1.0, max_relative = 1e-15);
        let b2 = erlang_b(2, 2.0).unwrap();
        assert_relative_eq!(
            erlang_c_derivative_at_m::<f64>(2).unwrap(),
            (1.0 - b2) / (2.0 * b2),
            max_relative = 1e-15
        );
        for m in 1..30 {
            let x = m as f64;
            let fd = central_diff(|r| erlang_c(m, r).unwrap(), x, 1e-5 * x);
            assert_relative_eq!(erlang_c_derivative_at_m::<f64>(m).unwrap(), fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn blocking_mmn_examples() {
        assert_relative_eq!(blocking_mmn(2, 2, 1.0).unwrap(), 0.2, max_relative = 1e-15);
        assert_relative_eq!(blocking_mmn(1, 2, 1.0).unwrap(), 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(blocking_mmn(1, 3, 2.0).unwrap(), 8.0 / 15.0, max_relative = 1e-15);
        assert!(matches!(blocking_mmn(3, 2, 1.0), Err(Error::Domain(_))));
        assert!(matches!(blocking_mmn(0, 2, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn blocking_mmn_derivative_examples() {
        assert_relative_eq!(blocking_mmn_derivative(1, 1, 1.0).unwrap(), 0.25, max_relative = 1e-14);
        // ρ = 1 branch with B_{1,2}(1) = 1/3: [1 + (4 - 4)/6] / 3.
        assert_relative_eq!(blocking_mmn_derivative(1, 2, 1.0).unwrap(), 1.0 / 3.0, max_relative = 1e-14);
        let fd = central_diff(|r| blocking_mmn(2, 5, r).unwrap(), 3.0, 1e-6);
        assert_relative_eq!(blocking_mmn_derivative(2, 5, 3.0).unwrap(), fd, max_relative = 1e-6);
    }

    #[test]
    fn mean_number_examples() {
        assert_relative_eq!(mean_number_mmn(1, 1, 1.0).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(mean_number_mmn(1, 2, 1.0).unwrap(), 1.0, max_relative = 1e-15);
        for x in 1..12 {
            for &r in &[0.3, 2.0, 9.0] {
                let b = erlang_b(x, r).unwrap();
                assert_relative_eq!(mean_number_mmn(x, x, r).unwrap(), r * (1.0 - b), max_relative = 1e-13);
            }
        }
    }

    fn load_grid(m: usize) -> Vec<f64> {
        let lo = 0.01f64.ln();
        let hi = (4.0 * m as f64).ln();
        (0..25).map(|i| (lo + (hi - lo) * i as f64 / 24.0).exp()).collect()
    }

    #[test]
    fn recursion_matches_closed_form_on_grid() {
        for m in 1..=40 {
            for n in m..=40 {
                for r in load_grid(m) {
                    let a = blocking_mmn(m, n, r).unwrap();
                    let b = blocking_mmn_closed_form(m, n, r).unwrap();
                    assert_relative_eq!(a, b, max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn recursion_matches_birth_death_sums() {
        for m in 1..=40 {
            for n in (m..=60).step_by(3) {
                for r in load_grid(m) {
                    let (b, l) = birth_death(m, n, r);
                    assert_relative_eq!(blocking_mmn(m, n, r).unwrap(), b, max_relative = 1e-10);
                    assert_relative_eq!(mean_number_mmn(m, n, r).unwrap(), l, max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for m in 1..=40 {
            for n in (m..=40).step_by(2) {
                for r in load_grid(m) {
                    let rho = r / m as f64;
                    if (rho - 1.0).abs() < 1e-3 {
                        continue;
                    }
                    let h = 1e-5 * r;
                    let fd = central_diff(|s| blocking_mmn(m, n, s).unwrap(), r, h);
                    let d = blocking_mmn_derivative(m, n, r).unwrap();
                    assert_relative_eq!(d, fd, max_relative = 1e-5);
                }
            }
        }
    }

    #[test]
    fn blocking_is_monotone() {
        for m in 1..=12 {
            for n in m..=20 {
                let grid = load_grid(m);
                for w in grid.windows(2) {
                    assert!(blocking_mmn(m, n, w[1]).unwrap() > blocking_mmn(m, n, w[0]).unwrap());
                }
                for &r in &grid {
                    if n < 20 {
                        assert!(blocking_mmn(m, n + 1, r).unwrap() < blocking_mmn(m, n, r).unwrap());
                    }
                    assert!(blocking_mmn_derivative(m, n, r).unwrap() >= 0.0);
                }
            }
        }
    }

    #[test]
    fn distribution_is_normalized_even_when_weights_overflow() {
        let pi = mmn_distribution(1, 600, 50.0).unwrap();
        let total: f64 = pi.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(pi.iter().all(|p| p.is_finite() && *p >= 0.0));
        for m in 1..=20 {
            for n in m..=40 {
                for r in load_grid(m) {
                    let s: f64 = mmn_distribution(m, n, r).unwrap().iter().sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn probability_guard() {
        assert_eq!(checked_probability(1.0 + 1e-13, "p").unwrap(), 1.0);
        assert_eq!(checked_probability(-1e-13, "p").unwrap(), 0.0);
        assert!(matches!(checked_probability(1.1, "p"), Err(Error::Consistency(_))));
        assert!(matches!(checked_probability(-0.1, "p"), Err(Error::Consistency(_))));
    }

    #[test]
    fn single_precision_agrees_with_double() {
        let a = blocking_mmn::<f32>(4, 12, 7.5).unwrap() as f64;
        let b = blocking_mmn::<f64>(4, 12, 7.5).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-5);
    }
}
