//! Lower bounds on the minimum loss probability.

use crate::erlang::blocking_mmn;
use crate::error::Result;
use crate::instance::SystemInstance;
use crate::scalar::Scalar;

/// Relaxation bound `max(0, Σ_k B_{m_k,n_k}(λ/μ_k) − (K − 1))`.
pub fn bound_lbr<T: Scalar>(inst: &SystemInstance<T>) -> Result<T> {
    let mut total = T::zero();
    for q in inst.queues() {
        total = total + blocking_mmn(q.servers(), q.buffer(), q.offered_load(inst.lambda()))?;
    }
    let k = T::from_count(inst.len() - 1);
    Ok((total - k).max(T::zero()))
}

/// Pooled bound: one server of rate `Σ m_k μ_k` with room for `Σ n_k` jobs.
pub fn bound_lbp<T: Scalar>(inst: &SystemInstance<T>) -> Result<T> {
    let cap: usize = inst.queues().iter().map(|q| q.buffer()).sum();
    blocking_mmn(1, cap, inst.lambda() / inst.total_capacity())
}
