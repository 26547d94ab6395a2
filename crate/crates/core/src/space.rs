//! Dense row-major indexing of product spaces and agent subsets.
//!
//! Joint states and joint actions are kept as per-agent index tuples. A
//! [`JointSpace`] maps those tuples to a dense index with agent 0 as the most
//! significant digit, so iteration order over dense indices is lexicographic
//! over tuples.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mixed-radix index space over a product of finite sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointSpace {
    radices: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl JointSpace {
    pub fn new(radices: Vec<usize>) -> Result<Self> {
        let mut strides = vec![0; radices.len()];
        let mut size: usize = 1;
        for (i, &r) in radices.iter().enumerate().rev() {
            strides[i] = size;
            size = size
                .checked_mul(r)
                .ok_or_else(|| Error::domain("joint space size overflows usize"))?;
        }
        Ok(JointSpace {
            radices,
            strides,
            size,
        })
    }

    /// Number of joint elements.
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Number of components per tuple.
    pub fn dims(&self) -> usize {
        self.radices.len()
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn stride(&self, dim: usize) -> usize {
        self.strides[dim]
    }

    /// Encodes a tuple, checking arity and component ranges.
    pub fn encode(&self, parts: &[usize]) -> Result<usize> {
        if parts.len() != self.radices.len() {
            return Err(Error::domain(format!(
                "tuple has {} components, expected {}",
                parts.len(),
                self.radices.len()
            )));
        }
        for (i, (&p, &r)) in parts.iter().zip(&self.radices).enumerate() {
            if p >= r {
                return Err(Error::domain(format!(
                    "component {i} is {p} but only {r} values exist"
                )));
            }
        }
        Ok(self.encode_unchecked(parts))
    }

    pub fn encode_unchecked(&self, parts: &[usize]) -> usize {
        parts.iter().zip(&self.strides).map(|(p, s)| p * s).sum()
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.radices.len()];
        self.decode_into(index, &mut out);
        out
    }

    pub fn decode_into(&self, index: usize, out: &mut [usize]) {
        for i in 0..self.radices.len() {
            out[i] = (index / self.strides[i]) % self.radices[i];
        }
    }

    /// Component `dim` of the tuple at `index`.
    pub fn component(&self, index: usize, dim: usize) -> usize {
        (index / self.strides[dim]) % self.radices[dim]
    }

    pub fn contains(&self, index: usize) -> bool {
        index < self.size
    }
}

/// A set of agents stored as a bitmask; agent indices must be below 64.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentSet(u64);

impl AgentSet {
    pub const MAX_AGENTS: usize = 64;

    pub const fn empty() -> Self {
        AgentSet(0)
    }

    pub const fn from_bits(bits: u64) -> Self {
        AgentSet(bits)
    }

    /// All agents `0..n`.
    pub fn full(n: usize) -> Self {
        assert!(n <= Self::MAX_AGENTS, "at most 64 agents are supported");
        if n == 64 {
            AgentSet(u64::MAX)
        } else {
            AgentSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(agent: usize) -> Self {
        assert!(agent < Self::MAX_AGENTS, "agent index out of range");
        AgentSet(1u64 << agent)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, agent: usize) -> bool {
        agent < Self::MAX_AGENTS && self.0 & (1u64 << agent) != 0
    }

    pub fn with(self, agent: usize) -> Self {
        AgentSet(self.0 | Self::singleton(agent).0)
    }

    pub fn without(self, agent: usize) -> Self {
        AgentSet(self.0 & !Self::singleton(agent).0)
    }

    pub fn union(self, other: AgentSet) -> Self {
        AgentSet(self.0 | other.0)
    }

    pub fn intersection(self, other: AgentSet) -> Self {
        AgentSet(self.0 & other.0)
    }

    pub fn is_subset(self, other: AgentSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Members in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }

    /// Every subset of `self`, in increasing bitmask order.
    pub fn subsets(self) -> impl Iterator<Item = AgentSet> {
        let members = self.to_vec();
        let count = 1u64 << members.len();
        (0..count).map(move |local| {
            let mut bits = 0u64;
            for (pos, &agent) in members.iter().enumerate() {
                if local & (1 << pos) != 0 {
                    bits |= 1 << agent;
                }
            }
            AgentSet(bits)
        })
    }
}

impl FromIterator<usize> for AgentSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        iter.into_iter().fold(AgentSet::empty(), AgentSet::with)
    }
}

impl fmt::Debug for AgentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn agent_zero_is_most_significant() {
        let space = JointSpace::new(vec![2, 3]).unwrap();
        assert_eq!(space.len(), 6);
        assert_eq!(space.encode(&[1, 0]).unwrap(), 3);
        assert_eq!(space.encode(&[0, 2]).unwrap(), 2);
        assert_eq!(space.decode(5), vec![1, 2]);
    }

    #[test]
    fn encode_rejects_bad_tuples() {
        let space = JointSpace::new(vec![2, 3]).unwrap();
        assert!(space.encode(&[2, 0]).is_err());
        assert!(space.encode(&[0]).is_err());
    }

    #[test]
    fn empty_product_has_one_element() {
        let space = JointSpace::new(vec![]).unwrap();
        assert_eq!(space.len(), 1);
        assert_eq!(space.encode(&[]).unwrap(), 0);
    }

    #[test]
    fn subsets_enumerate_the_lattice() {
        let set: AgentSet = [0, 2].into_iter().collect();
        let subs: Vec<_> = set.subsets().map(|s| s.to_vec()).collect();
        assert_eq!(subs, vec![vec![], vec![0], vec![2], vec![0, 2]]);
        assert_eq!(AgentSet::full(3).subsets().count(), 8);
    }

    proptest! {
        #[test]
        fn index_round_trip(radices in prop::collection::vec(1usize..5, 1..5), seed in any::<u64>()) {
            let space = JointSpace::new(radices).unwrap();
            let idx = (seed as usize) % space.len();
            let parts = space.decode(idx);
            prop_assert_eq!(space.encode(&parts).unwrap(), idx);
            for (d, &p) in parts.iter().enumerate() {
                prop_assert_eq!(space.component(idx, d), p);
            }
        }
    }
}
