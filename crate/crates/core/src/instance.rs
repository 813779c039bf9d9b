//! Problem instances: K parallel M/M/m_k/n_k stations fed by one Poisson
//! stream, plus the instance file format.
//!
//! The file is TOML with exactly one of `lambda` / `rho` at top level and an
//! ordered `[[queues]]` array:
//!
//! ```toml
//! rho = 0.9
//!
//! [[queues]]
//! m = 1
//! n = 16
//! mu = 80.0
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One station: `m` servers of rate `mu` each, room for `n` jobs in total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueParams<T> {
    m: usize,
    n: usize,
    mu: T,
}

impl<T: Scalar> QueueParams<T> {
    pub fn new(m: usize, n: usize, mu: T) -> Result<Self> {
        Self::validated(m, n, mu, "queue")
    }

    fn validated(m: usize, n: usize, mu: T, path: &str) -> Result<Self> {
        if m == 0 {
            return Err(Error::validation(format!("{path}.m"), "server count must be at least 1"));
        }
        if n < m {
            return Err(Error::validation(
                format!("{path}.n"),
                format!("buffer capacity {n} is smaller than server count {m}"),
            ));
        }
        if !mu.is_finite() || mu <= T::zero() {
            return Err(Error::validation(
                format!("{path}.mu"),
                format!("service rate must be finite and positive, got {mu:?}"),
            ));
        }
        Ok(Self { m, n, mu })
    }

    #[inline]
    pub fn servers(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn buffer(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn rate(&self) -> T {
        self.mu
    }

    /// Total service capacity `m μ`.
    #[inline]
    pub fn capacity(&self) -> T {
        T::from_count(self.m) * self.mu
    }

    /// Departure rate `min(x, m) μ` with `x` jobs present.
    #[inline]
    pub fn departure_rate(&self, x: usize) -> T {
        T::from_count(x.min(self.m)) * self.mu
    }

    /// Offered load `λ_k / μ` for a given arrival rate.
    #[inline]
    pub fn offered_load(&self, arrival_rate: T) -> T {
        arrival_rate / self.mu
    }
}

/// Arrival rate plus an ordered list of stations.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemInstance<T> {
    lambda: T,
    queues: Vec<QueueParams<T>>,
}

impl<T: Scalar> SystemInstance<T> {
    pub fn new(lambda: T, queues: Vec<QueueParams<T>>) -> Result<Self> {
        if queues.is_empty() {
            return Err(Error::validation("queues", "at least one queue is required"));
        }
        check_lambda(lambda)?;
        Ok(Self { lambda, queues })
    }

    /// Builds an instance at a given nominal load instead of an arrival rate.
    pub fn at_nominal_load(rho: T, queues: Vec<QueueParams<T>>) -> Result<Self> {
        if !rho.is_finite() || rho <= T::zero() {
            return Err(Error::validation("rho", format!("must be finite and positive, got {rho:?}")));
        }
        let total: T = crate::scalar::sum(queues.iter().map(|q| q.capacity()));
        Self::new(rho * total, queues)
    }

    #[inline]
    pub fn lambda(&self) -> T {
        self.lambda
    }

    #[inline]
    pub fn queues(&self) -> &[QueueParams<T>] {
        &self.queues
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.queues.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.queues.is_empty()
    }

    /// `Σ_k m_k μ_k`.
    pub fn total_capacity(&self) -> T {
        crate::scalar::sum(self.queues.iter().map(|q| q.capacity()))
    }

    /// Nominal load `λ / Σ_k m_k μ_k`.
    pub fn nominal_load(&self) -> T {
        self.lambda / self.total_capacity()
    }

    /// Copy of the instance with `λ` rescaled so that the nominal load is
    /// `target_rho`.
    pub fn scale_to_nominal_load(&self, target_rho: T) -> Result<Self> {
        Self::at_nominal_load(target_rho, self.queues.clone())
    }

    /// Copy with a different arrival rate.
    pub fn with_lambda(&self, lambda: T) -> Result<Self> {
        Self::new(lambda, self.queues.clone())
    }

    /// Number of joint states `Π_k (n_k + 1)`, saturating at `usize::MAX`.
    pub fn joint_state_count(&self) -> usize {
        self.queues
            .iter()
            .try_fold(1usize, |acc, q| acc.checked_mul(q.n + 1))
            .unwrap_or(usize::MAX)
    }

    /// `max_k 1/μ_k`, the offset used by the never-queue index.
    pub fn slowest_service_time(&self) -> T {
        self.queues
            .iter()
            .map(|q| q.mu.recip())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// True when all stations share the same `m` and `n`.
    pub fn has_symmetric_sizes(&self) -> bool {
        let first = &self.queues[0];
        self.queues.iter().all(|q| q.m == first.m && q.n == first.n)
    }
}

fn check_lambda<T: Scalar>(lambda: T) -> Result<()> {
    if !lambda.is_finite() || lambda <= T::zero() {
        return Err(Error::validation(
            "lambda",
            format!("arrival rate must be finite and positive, got {lambda:?}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    queues: Vec<QueueDoc>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct QueueDoc {
    m: i64,
    n: i64,
    mu: f64,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn count_field(value: i64, path: String) -> Result<usize> {
    usize::try_from(value).map_err(|_| Error::validation(path, format!("must be a nonnegative integer, got {value}")))
}

/// Parses and validates an instance document.
pub fn parse_instance<T: Scalar>(text: &str) -> Result<SystemInstance<T>> {
    let doc: InstanceDoc = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    let mut queues = Vec::with_capacity(doc.queues.len());
    for (i, q) in doc.queues.iter().enumerate() {
        let path = format!("queues[{i}]");
        let m = count_field(q.m, format!("{path}.m"))?;
        let n = count_field(q.n, format!("{path}.n"))?;
        queues.push(QueueParams::validated(m, n, T::lit(q.mu), &path)?);
    }
    if queues.is_empty() {
        return Err(Error::validation("queues", "at least one queue is required"));
    }
    match (doc.lambda, doc.rho) {
        (Some(lambda), None) => SystemInstance::new(T::lit(lambda), queues),
        (None, Some(rho)) => SystemInstance::at_nominal_load(T::lit(rho), queues),
        (Some(_), Some(_)) => Err(Error::validation("lambda", "give exactly one of `lambda` and `rho`, not both")),
        (None, None) => Err(Error::validation("lambda", "one of `lambda` or `rho` is required")),
    }
}

/// Serializes an instance with an explicit `lambda`.
pub fn serialize_instance<T: Scalar>(inst: &SystemInstance<T>) -> String {
    let doc = InstanceDoc {
        lambda: Some(inst.lambda.to_f64_lossy()),
        rho: None,
        queues: inst
            .queues
            .iter()
            .map(|q| QueueDoc {
                m: q.m as i64,
                n: q.n as i64,
                mu: q.mu.to_f64_lossy(),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("instance document serializes")
}
