//! Exact analysis on the joint occupancy chain.

mod bounds;
mod optimal;
mod policy;
mod space;
mod steady;

pub use bounds::{bound_lbp, bound_lbr};
pub use optimal::{bellman_residual, optimal_loss, optimal_loss_default, OptimalSolution, RviOptions};
pub use policy::StationaryPolicy;
pub use space::StateSpace;
pub use steady::{SteadyStateMethod, Transitions};

use crate::error::{Error, Result};
use crate::indices::{build_tables, Family, IndexPolicy};
use crate::instance::SystemInstance;
use crate::scalar::Scalar;
use crate::split::SplitSolution;

/// Largest joint state space the exact solvers accept.
pub const MAX_STATES: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct PolicyEvaluation<T> {
    /// Stationary probability of the all-full state.
    pub loss_probability: T,
    pub loss_rate: T,
    pub throughput: T,
    pub steady_state: Vec<T>,
    /// `‖π Q‖_∞` of the returned distribution.
    pub generator_residual: T,
}

pub fn evaluate_policy<T: Scalar>(inst: &SystemInstance<T>, policy: &StationaryPolicy) -> Result<PolicyEvaluation<T>> {
    evaluate_policy_with(inst, policy, SteadyStateMethod::Auto)
}

pub fn evaluate_policy_with<T: Scalar>(
    inst: &SystemInstance<T>,
    policy: &StationaryPolicy,
    method: SteadyStateMethod,
) -> Result<PolicyEvaluation<T>> {
    let space = policy.space();
    if space.buffers().len() != inst.len()
        || space.buffers().iter().zip(inst.queues()).any(|(&b, q)| b != q.buffer())
    {
        return Err(Error::validation("policy", "state space does not match the instance"));
    }
    if space.len() > MAX_STATES {
        return Err(Error::Capacity(format!(
            "{} joint states exceed the limit of {MAX_STATES}",
            space.len()
        )));
    }
    let tr = Transitions::build(inst, policy);
    let pi = steady::solve(&tr, method)?;
    let mut throughput = T::zero();
    space.for_each(|id, x| {
        let out = inst
            .queues()
            .iter()
            .zip(x)
            .fold(T::zero(), |acc, (q, &xk)| acc + q.departure_rate(xk));
        throughput = throughput + pi[id] * out;
    });
    let loss_probability = pi[space.full_state()];
    Ok(PolicyEvaluation {
        loss_probability,
        loss_rate: inst.lambda() * loss_probability,
        throughput,
        generator_residual: tr.balance_residual(&pi),
        steady_state: pi,
    })
}

/// Materializes an index family over the joint space and evaluates it.
pub fn evaluate_index_policy<T: Scalar>(
    inst: &SystemInstance<T>,
    family: Family,
    split: Option<&SplitSolution<T>>,
) -> Result<PolicyEvaluation<T>> {
    let policy = index_policy(inst, family, split)?;
    evaluate_policy(inst, &policy)
}

pub fn index_policy<T: Scalar>(
    inst: &SystemInstance<T>,
    family: Family,
    split: Option<&SplitSolution<T>>,
) -> Result<StationaryPolicy> {
    if inst.joint_state_count() > MAX_STATES {
        return Err(Error::Capacity(format!(
            "{} joint states exceed the limit of {MAX_STATES}",
            inst.joint_state_count()
        )));
    }
    let tables = build_tables(inst, family, split)?;
    let rule = IndexPolicy::new(inst.queues(), tables)?;
    StationaryPolicy::from_index_policy(inst, &rule)
}
