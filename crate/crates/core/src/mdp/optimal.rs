//! Minimum loss probability by relative value iteration.
//!
//! The uniformized chain (constant `Λ = λ + Σ m_k μ_k`) is iterated on the
//! continuous-time optimality equations
//!
//! ```text
//! z = c(x) + Σ_l μ̄_l(x_l) (h(x − e_l) − h(x)) + min_k λ (h(x + e_k) − h(x))
//! ```
//!
//! with `c = 1` in the all-full state and the min dropped there. The
//! solution `z` is then the loss probability rather than the loss rate.

use log::debug;

use crate::error::{Error, Result};
use crate::indices::Decision;
use crate::instance::SystemInstance;
use crate::scalar::Scalar;

use super::policy::StationaryPolicy;
use super::space::StateSpace;
use super::steady::SteadyStateMethod;
use super::{evaluate_policy_with, MAX_STATES};

/// Sweeps without a new smallest span after which refinement stops.
const STALL_SWEEPS: usize = 500;

#[derive(Debug, Clone, Copy)]
pub struct RviOptions<T> {
    /// Stop once `max u − min u` falls to this...
    pub tol: T,
    /// Once `tol` is met, keep going until the span is also below this
    /// fraction of `min u`, or until it stops shrinking (round-off floor).
    pub rel_tol: T,
    pub max_sweeps: usize,
    pub max_states: usize,
}

impl<T: Scalar> Default for RviOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-10),
            rel_tol: T::lit(1e-9),
            max_sweeps: 1_000_000,
            max_states: MAX_STATES,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimalSolution<T> {
    /// Exact loss probability of the extracted policy.
    pub z_op: T,
    pub policy: StationaryPolicy,
    /// Relative values, zero at the all-empty state.
    pub relative_values: Vec<T>,
    pub sweeps: usize,
    /// Span of the last Bellman update.
    pub residual_span: T,
    /// Bracket on the optimal value from the last sweep.
    pub z_lower: T,
    pub z_upper: T,
}

struct Model<'a, T> {
    inst: &'a SystemInstance<T>,
    space: StateSpace,
    /// Departure rates per queue and occupancy.
    departures: Vec<Vec<T>>,
}

impl<'a, T: Scalar> Model<'a, T> {
    fn new(inst: &'a SystemInstance<T>, max_states: usize) -> Result<Self> {
        let count = inst.joint_state_count();
        if count > max_states {
            return Err(Error::Capacity(format!(
                "{count} joint states exceed the limit of {max_states}"
            )));
        }
        let space = StateSpace::for_instance(inst)?;
        let departures = inst
            .queues()
            .iter()
            .map(|q| (0..=q.buffer()).map(|x| q.departure_rate(x)).collect())
            .collect();
        Ok(Self { inst, space, departures })
    }

    /// Bellman operator `u(x)` at `h` with its minimizing decision.
    fn bellman(&self, h: &[T], id: usize, x: &[usize]) -> (T, Decision) {
        let strides = self.space.strides();
        let hx = h[id];
        let mut value = T::zero();
        for (k, &xk) in x.iter().enumerate() {
            if xk > 0 {
                value = value + self.departures[k][xk] * (h[id - strides[k]] - hx);
            }
        }
        if id == self.space.full_state() {
            return (value + T::one(), Decision::Blocked);
        }
        let bufs = self.space.buffers();
        let mut best: Option<(T, usize)> = None;
        for (k, &xk) in x.iter().enumerate() {
            if xk < bufs[k] {
                let diff = h[id + strides[k]] - hx;
                if best.is_none_or(|(b, _)| diff < b) {
                    best = Some((diff, k));
                }
            }
        }
        let (diff, k) = best.expect("a nonfull queue exists below the full state");
        (value + self.inst.lambda() * diff, Decision::Queue(k))
    }
}

pub fn optimal_loss<T: Scalar>(inst: &SystemInstance<T>, opts: &RviOptions<T>) -> Result<OptimalSolution<T>> {
    if !(opts.tol > T::zero()) {
        return Err(Error::validation("tol", "must be positive"));
    }
    let model = Model::new(inst, opts.max_states)?;
    let n = model.space.len();
    let big_lambda = inst.lambda() + inst.total_capacity();
    let mut h = vec![T::zero(); n];
    let mut u = vec![T::zero(); n];
    let mut actions = vec![Decision::Blocked; n];
    let divergence = T::lit(1e12);
    let mut best_span = T::infinity();
    let mut since_best = 0usize;

    for sweep in 1..=opts.max_sweeps {
        let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
        model.space.for_each(|id, x| {
            let (val, a) = model.bellman(&h, id, x);
            u[id] = val;
            actions[id] = a;
            lo = lo.min(val);
            hi = hi.max(val);
        });
        let span = hi - lo;
        if !span.is_finite() || span > divergence {
            return Err(Error::Solver(format!("relative value iteration diverged at sweep {sweep} (span {span:?})")));
        }
        if span < best_span {
            best_span = span;
            since_best = 0;
        } else {
            since_best += 1;
        }
        let settled = span <= opts.rel_tol * lo.max(T::zero()) || since_best >= STALL_SWEEPS;
        if span <= opts.tol && settled {
            debug!("rvi converged after {sweep} sweeps, span {span:?}");
            let policy = StationaryPolicy::new(model.space.clone(), actions)?;
            let eval = evaluate_policy_with(inst, &policy, SteadyStateMethod::Auto)?;
            return Ok(OptimalSolution {
                z_op: eval.loss_probability,
                policy,
                relative_values: h,
                sweeps: sweep,
                residual_span: span,
                z_lower: lo,
                z_upper: hi,
            });
        }
        let anchor = h[0] + u[0] / big_lambda;
        for (hv, uv) in h.iter_mut().zip(&u) {
            *hv = *hv + *uv / big_lambda - anchor;
        }
    }
    Err(Error::Solver(format!(
        "relative value iteration hit {} sweeps without reaching span {:?}",
        opts.max_sweeps, opts.tol
    )))
}

pub fn optimal_loss_default<T: Scalar>(inst: &SystemInstance<T>) -> Result<T> {
    optimal_loss(inst, &RviOptions::default()).map(|s| s.z_op)
}

/// `max_x |u(x) − z|` for the given `(z, h)`.
pub fn bellman_residual<T: Scalar>(inst: &SystemInstance<T>, z: T, h: &[T]) -> Result<T> {
    let model = Model::new(inst, usize::MAX)?;
    if h.len() != model.space.len() {
        return Err(Error::validation(
            "relative_values",
            format!("{} values for {} states", h.len(), model.space.len()),
        ));
    }
    let mut worst = T::zero();
    model.space.for_each(|id, x| {
        let (val, _) = model.bellman(h, id, x);
        worst = worst.max((val - z).abs());
    });
    Ok(worst)
}
