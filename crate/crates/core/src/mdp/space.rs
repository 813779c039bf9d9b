use crate::error::{Error, Result};
use crate::instance::SystemInstance;

/// Mixed-radix enumeration of joint occupancy vectors.
///
/// Queue 0 is the least significant digit, so id 0 is the empty system and
/// the last id is the all-full state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    buffers: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl StateSpace {
    pub fn new(buffers: &[usize]) -> Result<Self> {
        if buffers.is_empty() {
            return Err(Error::validation("queues", "state space needs at least one queue"));
        }
        let mut strides = Vec::with_capacity(buffers.len());
        let mut len = 1usize;
        for &n in buffers {
            strides.push(len);
            len = len
                .checked_mul(n + 1)
                .ok_or_else(|| Error::Capacity("joint state count overflows".into()))?;
        }
        Ok(Self {
            buffers: buffers.to_vec(),
            strides,
            len,
        })
    }

    pub fn for_instance<T: crate::Scalar>(inst: &SystemInstance<T>) -> Result<Self> {
        let buffers: Vec<usize> = inst.queues().iter().map(|q| q.buffer()).collect();
        Self::new(&buffers)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.buffers.len()
    }

    #[inline]
    pub fn buffers(&self) -> &[usize] {
        &self.buffers
    }

    #[inline]
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Largest id distance between neighbouring states.
    #[inline]
    pub fn bandwidth(&self) -> usize {
        *self.strides.last().expect("nonempty")
    }

    #[inline]
    pub fn full_state(&self) -> usize {
        self.len - 1
    }

    pub fn encode(&self, state: &[usize]) -> Option<usize> {
        if state.len() != self.dims() {
            return None;
        }
        let mut id = 0;
        for ((&x, &n), &s) in state.iter().zip(&self.buffers).zip(&self.strides) {
            if x > n {
                return None;
            }
            id += x * s;
        }
        Some(id)
    }

    pub fn decode(&self, id: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims()];
        self.decode_into(id, &mut out);
        out
    }

    pub fn decode_into(&self, mut id: usize, out: &mut [usize]) {
        for (slot, &n) in out.iter_mut().zip(&self.buffers) {
            *slot = id % (n + 1);
            id /= n + 1;
        }
    }

    /// Visits every state in id order with its occupancy vector.
    pub fn for_each(&self, mut f: impl FnMut(usize, &[usize])) {
        let mut x = vec![0usize; self.dims()];
        for id in 0..self.len {
            f(id, &x);
            for (slot, &n) in x.iter_mut().zip(&self.buffers) {
                if *slot < n {
                    *slot += 1;
                    break;
                }
                *slot = 0;
            }
        }
    }
}
