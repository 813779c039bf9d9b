//! Load balancing across parallel multi-server loss queues.
//!
//! Jobs arrive in one Poisson stream and are routed to K stations, each an
//! M/M/m_k/n_k queue; a job that finds its station full is lost. The crate
//! provides the Erlang machinery, routing index families (including the
//! restless-bandit index), the optimal static Bernoulli split, and exact
//! evaluation and optimization on the joint occupancy chain.
//!
//! The numerics are generic over [`Scalar`]. The aliases at the crate root
//! fix the scalar to `f64`; [`single`] holds the `f32` versions.

pub mod erlang;
pub mod error;
pub mod indices;
pub mod instance;
pub mod mdp;
pub mod scalar;
pub mod split;

pub use erlang::{
    blocking_mmn, blocking_mmn_closed_form, blocking_mmn_derivative, erlang_b, erlang_b_derivative, erlang_c,
    erlang_c_derivative_at_m, mean_number_mmn, mmn_distribution,
};
pub use error::{Error, Result};
pub use indices::{build_tables, route, Decision, Family};
pub use instance::{parse_instance, serialize_instance};
pub use mdp::{
    bound_lbp, bound_lbr, evaluate_index_policy, evaluate_policy, optimal_loss, RviOptions, StateSpace,
    StationaryPolicy, SteadyStateMethod,
};
pub use scalar::Scalar;
pub use split::{solve_obs, solve_obs_default};

pub type QueueParams = instance::QueueParams<f64>;
pub type SystemInstance = instance::SystemInstance<f64>;
pub type IndexTable = indices::IndexTable<f64>;
pub type IndexPolicy = indices::IndexPolicy<f64>;
pub type SplitSolution = split::SplitSolution<f64>;
pub type PolicyEvaluation = mdp::PolicyEvaluation<f64>;
pub type OptimalSolution = mdp::OptimalSolution<f64>;

/// `f32` instantiations.
pub mod single {
    pub type QueueParams = crate::instance::QueueParams<f32>;
    pub type SystemInstance = crate::instance::SystemInstance<f32>;
    pub type IndexTable = crate::indices::IndexTable<f32>;
    pub type IndexPolicy = crate::indices::IndexPolicy<f32>;
    pub type SplitSolution = crate::split::SplitSolution<f32>;
    pub type PolicyEvaluation = crate::mdp::PolicyEvaluation<f32>;
}
