use crate::error::{Error, Result};
use crate::indices::{Decision, IndexPolicy};
use crate::instance::SystemInstance;
use crate::scalar::Scalar;

use super::space::StateSpace;

/// Deterministic stationary routing: one decision per joint state.
///
/// Admissible policies never route to a full queue and block only in the
/// all-full state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationaryPolicy {
    space: StateSpace,
    actions: Vec<Decision>,
}

impl StationaryPolicy {
    pub fn new(space: StateSpace, actions: Vec<Decision>) -> Result<Self> {
        if actions.len() != space.len() {
            return Err(Error::validation(
                "policy",
                format!("{} actions for {} states", actions.len(), space.len()),
            ));
        }
        let mut bad = None;
        space.for_each(|id, x| {
            if bad.is_some() {
                return;
            }
            let full = id == space.full_state();
            let ok = match actions[id] {
                Decision::Blocked => full,
                Decision::Queue(k) => k < x.len() && x[k] < space.buffers()[k],
            };
            if !ok {
                bad = Some((id, x.to_vec(), actions[id]));
            }
        });
        if let Some((id, x, a)) = bad {
            return Err(Error::validation(
                format!("policy[{id}]"),
                format!("decision {a:?} is inadmissible in state {x:?}"),
            ));
        }
        Ok(Self { space, actions })
    }

    /// Materializes an index rule over every joint state.
    pub fn from_index_policy<T: Scalar>(inst: &SystemInstance<T>, rule: &IndexPolicy<T>) -> Result<Self> {
        let space = StateSpace::for_instance(inst)?;
        let mut actions = Vec::with_capacity(space.len());
        space.for_each(|_, x| actions.push(rule.route(x)));
        Self::new(space, actions)
    }

    #[inline]
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    #[inline]
    pub fn actions(&self) -> &[Decision] {
        &self.actions
    }

    #[inline]
    pub fn action(&self, id: usize) -> Decision {
        self.actions[id]
    }
}
