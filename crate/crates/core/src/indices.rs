//! Per-queue routing index tables and the lowest-index routing rule.
//!
//! Every family attaches a value `θ_k(x)` to each nonfull state `x < n_k` of
//! queue `k`; an arrival joins a nonfull queue with the lowest current value.
//! Values are only compared within one family.

use std::fmt;
use std::str::FromStr;

use crate::erlang::{
    blocking_mmn, erlang_b, erlang_c, erlang_c_derivative_at_m, mean_number_mmn, UNIT_LOAD_BRANCH_TOL,
};
use crate::error::{Error, Result};
use crate::instance::{QueueParams, SystemInstance};
use crate::scalar::{rel_close, Scalar};
use crate::split::SplitSolution;

/// Index values closer than this (relative) are treated as tied.
pub const TIE_TOL: f64 = 1e-12;

/// Index families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    /// Shortest nonfull queue.
    Sq,
    /// Shortest expected delay.
    Sed,
    /// Never queue.
    Nq,
    /// Fastest available server.
    Fas,
    /// Second-order restless-bandit index.
    Rb,
    /// One-step policy improvement over the optimal Bernoulli split.
    Pi,
}

impl Family {
    pub const ALL: [Family; 6] = [Family::Sq, Family::Sed, Family::Nq, Family::Fas, Family::Rb, Family::Pi];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Sq => "sq",
            Family::Sed => "sed",
            Family::Nq => "nq",
            Family::Fas => "fas",
            Family::Rb => "rb",
            Family::Pi => "pi",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sq" => Ok(Family::Sq),
            "sed" => Ok(Family::Sed),
            "nq" => Ok(Family::Nq),
            "fas" => Ok(Family::Fas),
            "rb" => Ok(Family::Rb),
            "pi" => Ok(Family::Pi),
            other => Err(Error::validation("family", format!("unknown index family `{other}`"))),
        }
    }
}

/// Index values `θ(0), …, θ(n-1)` of one queue.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexTable<T> {
    queue_id: usize,
    values: Vec<T>,
}

impl<T: Scalar> IndexTable<T> {
    pub fn new(queue_id: usize, values: Vec<T>) -> Result<Self> {
        if let Some((x, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "index value for queue {queue_id} at state {x} is not finite: {v:?}"
            )));
        }
        Ok(Self { queue_id, values })
    }

    #[inline]
    pub fn queue_id(&self) -> usize {
        self.queue_id
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Intermediate state of the coupled RB recursion at one queue state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbRecursionState<T> {
    pub theta: T,
    pub y: T,
    pub w: T,
}

fn check_rate<T: Scalar>(rate: T, what: &str) -> Result<()> {
    if !rate.is_finite() || rate <= T::zero() {
        return Err(Error::domain(format!("{what} must be finite and positive, got {rate:?}")));
    }
    Ok(())
}

/// `θ(x) = x`.
pub fn sq_index<T: Scalar>(queue_id: usize, q: &QueueParams<T>) -> IndexTable<T> {
    IndexTable {
        queue_id,
        values: (0..q.buffer()).map(T::from_count).collect(),
    }
}

/// Expected delay including service: `1/μ` with an idle server, else
/// `(x + 1)/(m μ)`.
pub fn sed_index<T: Scalar>(queue_id: usize, q: &QueueParams<T>) -> IndexTable<T> {
    let inv_mu = q.rate().recip();
    let cap = q.capacity();
    let values = (0..q.buffer())
        .map(|x| {
            if x < q.servers() {
                inv_mu
            } else {
                T::from_count(x + 1) / cap
            }
        })
        .collect();
    IndexTable { queue_id, values }
}

/// Never-queue index: `1/μ` with an idle server, else
/// `c + (x + 1 - m)/(m μ)` where `c` is the instance-wide `max_k 1/μ_k`.
pub fn nq_index<T: Scalar>(queue_id: usize, q: &QueueParams<T>, c: T) -> Result<IndexTable<T>> {
    let inv_mu = q.rate().recip();
    if !(c >= inv_mu) || !c.is_finite() {
        return Err(Error::domain(format!(
            "never-queue offset {c:?} is below this queue's service time {inv_mu:?}"
        )));
    }
    let cap = q.capacity();
    let values = (0..q.buffer())
        .map(|x| {
            if x < q.servers() {
                inv_mu
            } else {
                c + T::from_count(x + 1 - q.servers()) / cap
            }
        })
        .collect();
    Ok(IndexTable { queue_id, values })
}

/// Fastest available server: constant `1/μ`.
pub fn fas_index<T: Scalar>(queue_id: usize, q: &QueueParams<T>) -> IndexTable<T> {
    IndexTable {
        queue_id,
        values: vec![q.rate().recip(); q.buffer()],
    }
}

/// Runs the coupled first-order RB recursion, returning `(θ, y, w)` for
/// `x = 0..n-1`.
pub fn rb_recursion<T: Scalar>(q: &QueueParams<T>, lambda: T) -> Result<Vec<RbRecursionState<T>>> {
    check_rate(lambda, "arrival rate")?;
    let mu = q.rate();
    let rate = |x: usize| q.departure_rate(x);
    let mut out = Vec::with_capacity(q.buffer());
    let mut cur = RbRecursionState {
        theta: mu.recip(),
        y: T::one(),
        w: lambda * mu / (lambda + mu),
    };
    out.push(cur);
    for x in 1..q.buffer() {
        let step = rate(x + 1) - rate(x);
        // w(x-1) / ρ(x-1) with ρ(x-1) = λ / μ̄(x)
        let carried = cur.w * rate(x) / lambda;
        let theta = cur.theta + (T::one() - cur.theta * step) / (step + carried);
        let y = T::one() - lambda * rate(x) / cur.y / ((lambda + rate(x)) * (lambda + rate(x + 1)));
        let w = lambda * (step + carried) / (y * (lambda + rate(x + 1)));
        cur = RbRecursionState { theta, y, w };
        out.push(cur);
    }
    Ok(out)
}

/// RB index via the O(n) recursion.
pub fn rb_index_recursive<T: Scalar>(queue_id: usize, q: &QueueParams<T>, lambda: T) -> Result<IndexTable<T>> {
    let values = rb_recursion(q, lambda)?.into_iter().map(|s| s.theta).collect();
    IndexTable::new(queue_id, values)
}

/// RB index via its closed form in terms of the Erlang-C function.
pub fn rb_index_closed<T: Scalar>(queue_id: usize, q: &QueueParams<T>, lambda: T) -> Result<IndexTable<T>> {
    check_rate(lambda, "arrival rate")?;
    let m = q.servers();
    let mu = q.rate();
    let r = q.offered_load(lambda);
    let mm = T::from_count(m);
    let rho = r / mm;
    let cap = q.capacity();
    let mut values = vec![mu.recip(); q.buffer()];
    if q.buffer() > m {
        if (rho - T::one()).abs() < T::lit(UNIT_LOAD_BRANCH_TOL) {
            let dc = erlang_c_derivative_at_m::<T>(m)?;
            let half = T::lit(0.5);
            let two = T::lit(2.0);
            for (x, v) in values.iter_mut().enumerate().skip(m) {
                let j = T::from_count(x - m + 1);
                *v = (half * (j + T::one() + two * mm * dc) * j + mm) / cap;
            }
        } else {
            let c = erlang_c(m, r)?;
            let ln_rho = (rho - T::one()).ln_1p();
            let d = rho - T::one();
            for (x, v) in values.iter_mut().enumerate().skip(m) {
                let j = T::from_count(x - m + 1);
                let growth = (j * ln_rho).exp_m1();
                *v = rho * c * growth / (cap * d * d) - (T::from_count(x + 1) - r) / (cap * d);
            }
        }
    }
    IndexTable::new(queue_id, values)
}

/// `(L, B)` of the M/M/m/cap queue; for `cap < m` the station behaves as
/// M/M/cap/cap, and an empty station blocks everything.
fn truncated_queue<T: Scalar>(m: usize, cap: usize, r: T) -> Result<(T, T)> {
    if cap == 0 {
        return Ok((T::zero(), T::one()));
    }
    let servers = m.min(cap);
    Ok((mean_number_mmn(servers, cap, r)?, blocking_mmn(servers, cap, r)?))
}

/// RB index as a ratio of mean-number and blocking increments between
/// buffer sizes `x` and `x + 1`.
///
/// Independent of the recursion and the closed form. The differences
/// cancel badly at high load, so callers wanting tight agreement should
/// evaluate this in extended precision.
pub fn rb_index_ratio_oracle<T: Scalar>(queue_id: usize, q: &QueueParams<T>, lambda: T) -> Result<IndexTable<T>> {
    check_rate(lambda, "arrival rate")?;
    let r = q.offered_load(lambda);
    let mut values = Vec::with_capacity(q.buffer());
    let mut prev = truncated_queue(q.servers(), 0, r)?;
    for x in 0..q.buffer() {
        let next = truncated_queue(q.servers(), x + 1, r)?;
        let db = prev.1 - next.1;
        if db <= T::zero() {
            return Err(Error::Numerical(format!(
                "blocking increment vanishes at queue {queue_id}, state {x}"
            )));
        }
        values.push((next.0 - prev.0) / db / lambda);
        prev = next;
    }
    IndexTable::new(queue_id, values)
}

fn check_pi_inputs<T: Scalar>(lambda_star: T, phi_star: T) -> Result<()> {
    check_rate(lambda_star, "split arrival rate")?;
    if !phi_star.is_finite() || phi_star < T::zero() {
        return Err(Error::domain(format!("split loss rate must be finite and nonnegative, got {phi_star:?}")));
    }
    Ok(())
}

/// PI index from the split arrival rate `λ*` and loss rate `φ* = λ* B(λ*/μ)`
/// via the first-order linear recursion.
pub fn pi_index<T: Scalar>(queue_id: usize, q: &QueueParams<T>, lambda_star: T, phi_star: T) -> Result<IndexTable<T>> {
    check_pi_inputs(lambda_star, phi_star)?;
    let mut values = Vec::with_capacity(q.buffer());
    let mut prev = phi_star / lambda_star;
    values.push(prev);
    for x in 1..q.buffer() {
        prev = (phi_star + q.departure_rate(x) * prev) / lambda_star;
        values.push(prev);
    }
    IndexTable::new(queue_id, values)
}

/// PI index from its closed form; cross-check for [`pi_index`].
pub fn pi_index_closed<T: Scalar>(queue_id: usize, q: &QueueParams<T>, lambda_star: T) -> Result<IndexTable<T>> {
    check_rate(lambda_star, "split arrival rate")?;
    let m = q.servers();
    let r = q.offered_load(lambda_star);
    let rho = r / T::from_count(m);
    let full = blocking_mmn(m, q.buffer(), r)?;
    let bm = erlang_b(m, r)?;
    let unit = (rho - T::one()).abs() < T::lit(UNIT_LOAD_BRANCH_TOL);
    let mut values = Vec::with_capacity(q.buffer());
    for x in 0..q.buffer() {
        let v = if x <= m {
            full / erlang_b(x, r)?
        } else if unit {
            full * (T::from_count(x - m) + bm.recip())
        } else {
            let rho_j = rho.powi((x - m) as i32);
            let one_m_rho = T::one() - rho;
            full * (one_m_rho + rho * (T::one() - rho_j) * bm) / (rho_j * one_m_rho * bm)
        };
        values.push(v);
    }
    IndexTable::new(queue_id, values)
}

/// Builds the tables of one family for every queue of an instance. The PI
/// family needs the optimal Bernoulli split.
pub fn build_tables<T: Scalar>(
    inst: &SystemInstance<T>,
    family: Family,
    split: Option<&SplitSolution<T>>,
) -> Result<Vec<IndexTable<T>>> {
    let lambda = inst.lambda();
    let c = inst.slowest_service_time();
    inst.queues()
        .iter()
        .enumerate()
        .map(|(k, q)| match family {
            Family::Sq => Ok(sq_index(k, q)),
            Family::Sed => Ok(sed_index(k, q)),
            Family::Nq => nq_index(k, q, c),
            Family::Fas => Ok(fas_index(k, q)),
            Family::Rb => rb_index_recursive(k, q, lambda),
            Family::Pi => {
                let split = split.ok_or_else(|| Error::domain("the PI index needs an optimal Bernoulli split"))?;
                if split.lambdas().len() != inst.len() {
                    return Err(Error::domain("split does not match the instance"));
                }
                pi_index(k, q, split.lambdas()[k], split.per_queue_loss()[k])
            }
        })
        .collect()
}

/// Routing decision for one arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Queue(usize),
    Blocked,
}

/// Lowest-index routing with ties broken by larger capacity `m_k μ_k`,
/// then by smaller queue id.
#[derive(Debug, Clone)]
pub struct IndexPolicy<T> {
    tables: Vec<IndexTable<T>>,
    capacities: Vec<T>,
    buffers: Vec<usize>,
}

impl<T: Scalar> IndexPolicy<T> {
    pub fn new(queues: &[QueueParams<T>], tables: Vec<IndexTable<T>>) -> Result<Self> {
        if tables.len() != queues.len() {
            return Err(Error::domain(format!(
                "{} index tables for {} queues",
                tables.len(),
                queues.len()
            )));
        }
        for (k, (t, q)) in tables.iter().zip(queues).enumerate() {
            if t.len() != q.buffer() || t.queue_id() != k {
                return Err(Error::domain(format!(
                    "table {k} has id {} and {} values; queue expects id {k} and {}",
                    t.queue_id(),
                    t.len(),
                    q.buffer()
                )));
            }
        }
        Ok(Self {
            tables,
            capacities: queues.iter().map(|q| q.capacity()).collect(),
            buffers: queues.iter().map(|q| q.buffer()).collect(),
        })
    }

    pub fn tables(&self) -> &[IndexTable<T>] {
        &self.tables
    }

    pub fn route(&self, state: &[usize]) -> Decision {
        let tol = T::lit(TIE_TOL);
        let mut best: Option<(usize, T)> = None;
        for (k, &x) in state.iter().enumerate() {
            if x >= self.buffers[k] {
                continue;
            }
            let v = self.tables[k].values[x];
            best = match best {
                None => Some((k, v)),
                Some((b, vb)) => {
                    if rel_close(v, vb, tol) {
                        if self.capacities[k] > self.capacities[b] {
                            Some((k, v))
                        } else {
                            Some((b, vb))
                        }
                    } else if v < vb {
                        Some((k, v))
                    } else {
                        Some((b, vb))
                    }
                }
            };
        }
        best.map_or(Decision::Blocked, |(k, _)| Decision::Queue(k))
    }
}

/// One-shot form of [`IndexPolicy::route`].
pub fn route<T: Scalar>(tables: &[IndexTable<T>], queues: &[QueueParams<T>], state: &[usize]) -> Result<Decision> {
    if state.len() != queues.len() || state.iter().zip(queues).any(|(&x, q)| x > q.buffer()) {
        return Err(Error::domain("joint state out of bounds"));
    }
    Ok(IndexPolicy::new(queues, tables.to_vec())?.route(state))
}
