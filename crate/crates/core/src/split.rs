//! Optimal Bernoulli splitting of the arrival stream.
//!
//! Under a static split each queue sees its own Poisson stream of rate
//! `λ_k`, so the loss rate separates into `Σ_k φ_k(λ_k)` with
//! `φ_k(λ_k) = λ_k B_{m_k,n_k}(λ_k/μ_k)`. Each `φ_k` is increasing and
//! strictly convex. The split is found by bisection on the multiplier of
//! `Σ λ_k = λ`, with an inner bisection inverting `φ'_k` per queue.
//!
//! A split may send jobs to a full queue. It is evaluated in that wider
//! policy class, where the queues decouple; whether an optimal policy in
//! that class never routes to a full queue when another has room is assumed
//! but not established.

use log::warn;

use crate::erlang::{blocking_mmn, blocking_mmn_derivative};
use crate::error::{Error, Result};
use crate::instance::{QueueParams, SystemInstance};
use crate::scalar::{sum, Scalar};

/// Default absolute tolerance on the multiplier.
pub const DEFAULT_TOL_Y: f64 = 1e-12;
/// Default tolerance on `Σ λ_k - λ`, relative to `λ`.
pub const DEFAULT_REL_TOL_LAMBDA: f64 = 1e-10;

/// Loss rate `φ(λ_k) = λ_k B_{m,n}(λ_k/μ)`; zero at `λ_k = 0`.
pub fn queue_loss_rate<T: Scalar>(q: &QueueParams<T>, lam_k: T) -> Result<T> {
    check_split_rate(lam_k)?;
    if lam_k == T::zero() {
        return Ok(T::zero());
    }
    Ok(lam_k * blocking_mmn(q.servers(), q.buffer(), q.offered_load(lam_k))?)
}

/// Marginal loss `φ'(λ_k) = B + r B'` with `r = λ_k/μ`; zero at `λ_k = 0`.
pub fn queue_loss_derivative<T: Scalar>(q: &QueueParams<T>, lam_k: T) -> Result<T> {
    check_split_rate(lam_k)?;
    if lam_k == T::zero() {
        return Ok(T::zero());
    }
    let r = q.offered_load(lam_k);
    let b = blocking_mmn(q.servers(), q.buffer(), r)?;
    let db = blocking_mmn_derivative(q.servers(), q.buffer(), r)?;
    Ok(b + r * db)
}

fn check_split_rate<T: Scalar>(lam_k: T) -> Result<()> {
    if !lam_k.is_finite() || lam_k < T::zero() {
        return Err(Error::domain(format!("split rate must be finite and nonnegative, got {lam_k:?}")));
    }
    Ok(())
}

/// Minimizer of `φ(x) - x y` over `x ∈ [0, λ]`.
///
/// Zero for `y <= 0`, `λ` once `y >= φ'(λ)`, otherwise the root of
/// `φ'(x) = y`, bisected until the bracket is narrower than `tol` (pass
/// zero to bisect to full precision).
pub fn inner_allocation<T: Scalar>(q: &QueueParams<T>, y: T, lambda: T, tol: T) -> Result<T> {
    if !y.is_finite() {
        return Err(Error::domain(format!("multiplier must be finite, got {y:?}")));
    }
    if y <= T::zero() {
        return Ok(T::zero());
    }
    if y >= queue_loss_derivative(q, lambda)? {
        return Ok(lambda);
    }
    let half = T::lit(0.5);
    let (mut lo, mut hi) = (T::zero(), lambda);
    loop {
        let mid = (lo + hi) * half;
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if queue_loss_derivative(q, mid)? < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// The optimal split together with its multiplier and loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSolution<T> {
    lambdas: Vec<T>,
    multiplier: T,
    total_loss_rate: T,
    per_queue_loss: Vec<T>,
    kkt_residual: T,
}

impl<T: Scalar> SplitSolution<T> {
    /// Split arrival rates `λ_k*`.
    pub fn lambdas(&self) -> &[T] {
        &self.lambdas
    }

    /// Multiplier `y*`, the common marginal loss.
    pub fn multiplier(&self) -> T {
        self.multiplier
    }

    /// `J = Σ_k φ_k(λ_k*)`.
    pub fn total_loss_rate(&self) -> T {
        self.total_loss_rate
    }

    pub fn per_queue_loss(&self) -> &[T] {
        &self.per_queue_loss
    }

    /// `max_k |φ'_k(λ_k*) - y*|`.
    pub fn kkt_residual(&self) -> T {
        self.kkt_residual
    }

    /// Routing probabilities `λ_k*/λ`.
    pub fn probabilities(&self) -> Vec<T> {
        let total = sum(self.lambdas.iter().copied());
        self.lambdas.iter().map(|&l| l / total).collect()
    }
}

fn allocations<T: Scalar>(inst: &SystemInstance<T>, y: T) -> Result<Vec<T>> {
    inst.queues()
        .iter()
        .map(|q| inner_allocation(q, y, inst.lambda(), T::zero()))
        .collect()
}

/// Lagrangian dual function `L(y) = λ y + Σ_k [φ_k(λ_k(y)) - λ_k(y) y]`,
/// a lower bound on the optimal split loss rate for every `y`.
pub fn dual_value<T: Scalar>(inst: &SystemInstance<T>, y: T) -> Result<T> {
    let mut total = inst.lambda() * y;
    for (q, lam) in inst.queues().iter().zip(allocations(inst, y)?) {
        total = total + queue_loss_rate(q, lam)? - lam * y;
    }
    Ok(total)
}

/// Solves for the loss-minimizing Bernoulli split.
pub fn solve_obs<T: Scalar>(inst: &SystemInstance<T>, tol_y: T, tol_lambda: T) -> Result<SplitSolution<T>> {
    if !(tol_y > T::zero()) || !(tol_lambda > T::zero()) {
        return Err(Error::domain("split tolerances must be positive"));
    }
    let lambda = inst.lambda();
    let queues = inst.queues();
    if queues.len() == 1 {
        let phi = queue_loss_rate(&queues[0], lambda)?;
        return Ok(SplitSolution {
            lambdas: vec![lambda],
            multiplier: queue_loss_derivative(&queues[0], lambda)?,
            total_loss_rate: phi,
            per_queue_loss: vec![phi],
            kkt_residual: T::zero(),
        });
    }

    let marginal_at_full: Vec<T> = queues
        .iter()
        .map(|q| queue_loss_derivative(q, lambda))
        .collect::<Result<_>>()?;
    let excess = |y: T| -> Result<T> { Ok(sum(allocations(inst, y)?) - lambda) };

    let mut hi = marginal_at_full.iter().copied().fold(T::infinity(), T::min);
    if excess(hi)? < T::zero() {
        let wide = marginal_at_full.iter().copied().fold(T::zero(), T::max);
        warn!("split multiplier not bracketed by min_k φ'_k(λ) = {hi:?}; widening to {wide:?}");
        hi = wide;
        if excess(hi)? < T::zero() {
            return Err(Error::Solver("could not bracket the split multiplier".into()));
        }
    }
    let mut lo = T::zero();
    let half = T::lit(0.5);
    let mut best = (hi, excess(hi)?);
    loop {
        let mid = (lo + hi) * half;
        if mid <= lo || mid >= hi {
            break;
        }
        let e = excess(mid)?;
        if e.abs() < best.1.abs() {
            best = (mid, e);
        }
        if e < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol_y && best.1.abs() <= tol_lambda {
            break;
        }
    }
    let (y_star, e) = best;
    if e.abs() > tol_lambda {
        return Err(Error::Solver(format!(
            "split rates miss the arrival rate by {e:?} (tolerance {tol_lambda:?})"
        )));
    }

    let lambdas = allocations(inst, y_star)?;
    let per_queue_loss: Vec<T> = queues
        .iter()
        .zip(&lambdas)
        .map(|(q, &l)| queue_loss_rate(q, l))
        .collect::<Result<_>>()?;
    let mut kkt_residual = T::zero();
    for (q, &l) in queues.iter().zip(&lambdas) {
        kkt_residual = kkt_residual.max((queue_loss_derivative(q, l)? - y_star).abs());
    }
    Ok(SplitSolution {
        total_loss_rate: sum(per_queue_loss.iter().copied()),
        lambdas,
        multiplier: y_star,
        per_queue_loss,
        kkt_residual,
    })
}

/// [`solve_obs`] with the default tolerances.
pub fn solve_obs_default<T: Scalar>(inst: &SystemInstance<T>) -> Result<SplitSolution<T>> {
    solve_obs(
        inst,
        T::lit(DEFAULT_TOL_Y),
        T::lit(DEFAULT_REL_TOL_LAMBDA) * inst.lambda(),
    )
}

/// Loss probability of the split, `J / λ`. Exact, since the queues are
/// independent under a static split.
pub fn obs_loss_probability<T: Scalar>(inst: &SystemInstance<T>, split: &SplitSolution<T>) -> T {
    split.total_loss_rate() / inst.lambda()
}
