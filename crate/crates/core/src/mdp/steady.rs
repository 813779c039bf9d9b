//! Stationary distributions of policy-induced generators.

use crate::error::{Error, Result};
use crate::indices::Decision;
use crate::instance::SystemInstance;
use crate::scalar::Scalar;

use super::policy::StationaryPolicy;

/// Band storage above this many entries switches `Auto` to power iteration.
const MAX_BAND_ENTRIES: usize = 60_000_000;

/// Linear-algebra route for `π Q = 0, Σ π = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SteadyStateMethod {
    /// Banded GTH when the band fits in memory, else power iteration.
    #[default]
    Auto,
    /// Grassmann–Taksar–Heyman state reduction restricted to the band of
    /// the mixed-radix ordering. Subtraction-free.
    BandedGth,
    /// Dense LU with partial pivoting, one balance equation replaced by
    /// the normalization. O(N³); for small chains and cross-checks.
    Dense,
    /// Power iteration on the uniformized transition matrix.
    Power,
}

/// Off-diagonal transition rates of a policy-induced generator in CSR form.
#[derive(Debug, Clone)]
pub struct Transitions<T> {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    rates: Vec<T>,
    bandwidth: usize,
    uniformization: T,
}

impl<T: Scalar> Transitions<T> {
    pub fn build(inst: &SystemInstance<T>, policy: &StationaryPolicy) -> Self {
        let space = policy.space();
        let strides = space.strides();
        let lambda = inst.lambda();
        let mut offsets = Vec::with_capacity(space.len() + 1);
        let mut targets = Vec::with_capacity(space.len() * (space.dims() + 1));
        let mut rates = Vec::with_capacity(space.len() * (space.dims() + 1));
        offsets.push(0);
        space.for_each(|id, x| {
            for (k, q) in inst.queues().iter().enumerate() {
                if x[k] > 0 {
                    targets.push(id - strides[k]);
                    rates.push(q.departure_rate(x[k]));
                }
            }
            if let Decision::Queue(k) = policy.action(id) {
                targets.push(id + strides[k]);
                rates.push(lambda);
            }
            offsets.push(targets.len());
        });
        Self {
            offsets,
            targets,
            rates,
            bandwidth: space.bandwidth(),
            uniformization: lambda + inst.total_capacity(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `λ + Σ_k m_k μ_k`, an upper bound on every exit rate.
    #[inline]
    pub fn uniformization(&self) -> T {
        self.uniformization
    }

    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.offsets[i]..self.offsets[i + 1];
        self.targets[span.clone()].iter().copied().zip(self.rates[span].iter().copied())
    }

    /// `‖π Q‖_∞`.
    pub fn balance_residual(&self, pi: &[T]) -> T {
        let mut flow = vec![T::zero(); self.len()];
        for i in 0..self.len() {
            for (j, rate) in self.row(i) {
                let f = pi[i] * rate;
                flow[j] = flow[j] + f;
                flow[i] = flow[i] - f;
            }
        }
        flow.into_iter().fold(T::zero(), |a, f| a.max(f.abs()))
    }
}

pub fn solve<T: Scalar>(tr: &Transitions<T>, method: SteadyStateMethod) -> Result<Vec<T>> {
    match method {
        SteadyStateMethod::Auto => {
            let entries = tr.len().saturating_mul(2 * tr.bandwidth + 1);
            if entries <= MAX_BAND_ENTRIES {
                banded_gth(tr)
            } else {
                power_iteration(tr)
            }
        }
        SteadyStateMethod::BandedGth => banded_gth(tr),
        SteadyStateMethod::Dense => dense_lu(tr),
        SteadyStateMethod::Power => power_iteration(tr),
    }
}

fn normalize<T: Scalar>(mut pi: Vec<T>) -> Result<Vec<T>> {
    let total = crate::scalar::sum(pi.iter().copied());
    if !total.is_finite() || total <= T::zero() {
        return Err(Error::Numerical(format!("stationary weights sum to {total:?}")));
    }
    for p in pi.iter_mut() {
        *p = *p / total;
    }
    Ok(pi)
}

fn banded_gth<T: Scalar>(tr: &Transitions<T>) -> Result<Vec<T>> {
    let n = tr.len();
    let b = tr.bandwidth;
    let width = 2 * b + 1;
    let at = |i: usize, j: usize| i * width + b + j - i;
    let mut a = vec![T::zero(); n * width];
    for i in 0..n {
        for (j, rate) in tr.row(i) {
            a[at(i, j)] = a[at(i, j)] + rate;
        }
    }
    // Fold states n-1, …, 1 into their lower neighbours. Fill-in stays
    // within the band; diagonal entries are never read.
    let mut exit = vec![T::zero(); n];
    for s in (1..n).rev() {
        let lo = s.saturating_sub(b);
        let row_s = at(s, lo)..at(s, s);
        let total = crate::scalar::sum(a[row_s.clone()].iter().copied());
        if !(total > T::zero()) {
            return Err(Error::Numerical(format!(
                "state {s} cannot reach lower states; chain is reducible"
            )));
        }
        exit[s] = total;
        let pivot: Vec<T> = a[row_s].to_vec();
        for i in lo..s {
            let ais = a[at(i, s)];
            if ais == T::zero() {
                continue;
            }
            let f = ais / total;
            let row_i = &mut a[at(i, lo)..at(i, s)];
            for (dst, &src) in row_i.iter_mut().zip(&pivot) {
                *dst = *dst + f * src;
            }
        }
    }
    let mut pi = vec![T::zero(); n];
    pi[0] = T::one();
    for j in 1..n {
        let lo = j.saturating_sub(b);
        let mut acc = T::zero();
        for (i, p) in pi.iter().enumerate().take(j).skip(lo) {
            acc = acc + *p * a[at(i, j)];
        }
        pi[j] = acc / exit[j];
    }
    normalize(pi)
}

fn dense_lu<T: Scalar>(tr: &Transitions<T>) -> Result<Vec<T>> {
    let n = tr.len();
    // Rows of Q^T, last one replaced by the normalization.
    let mut m = vec![T::zero(); n * n];
    for i in 0..n {
        for (j, rate) in tr.row(i) {
            m[j * n + i] = m[j * n + i] + rate;
            m[i * n + i] = m[i * n + i] - rate;
        }
    }
    for c in 0..n {
        m[(n - 1) * n + c] = T::one();
    }
    let mut rhs = vec![T::zero(); n];
    rhs[n - 1] = T::one();
    for col in 0..n {
        let (piv, best) = (col..n)
            .map(|r| (r, m[r * n + col].abs()))
            .fold((col, T::zero()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best == T::zero() {
            return Err(Error::Numerical("singular balance system".into()));
        }
        if piv != col {
            for c in 0..n {
                m.swap(piv * n + c, col * n + c);
            }
            rhs.swap(piv, col);
        }
        let d = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / d;
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                m[r * n + c] = m[r * n + c] - f * m[col * n + c];
            }
            rhs[r] = rhs[r] - f * rhs[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for c in r + 1..n {
            acc = acc - m[r * n + c] * x[c];
        }
        x[r] = acc / m[r * n + r];
    }
    // Round-off can leave tiny negative entries.
    normalize(x.into_iter().map(|p| p.max(T::zero())).collect())
}

fn power_iteration<T: Scalar>(tr: &Transitions<T>) -> Result<Vec<T>> {
    const MAX_STEPS: usize = 20_000_000;
    let n = tr.len();
    let lam = tr.uniformization();
    let tol = T::epsilon() * T::lit(1024.0);
    let mut pi = vec![T::one() / T::from_count(n); n];
    let mut next = vec![T::zero(); n];
    for _ in 0..MAX_STEPS {
        next.copy_from_slice(&pi);
        for i in 0..n {
            for (j, rate) in tr.row(i) {
                let f = pi[i] * rate / lam;
                next[j] = next[j] + f;
                next[i] = next[i] - f;
            }
        }
        let change = pi
            .iter()
            .zip(&next)
            .fold(T::zero(), |acc, (a, b)| acc + (*a - *b).abs());
        std::mem::swap(&mut pi, &mut next);
        if change <= tol {
            return normalize(pi);
        }
    }
    Err(Error::Solver(format!("power iteration did not settle in {MAX_STEPS} steps")))
}
