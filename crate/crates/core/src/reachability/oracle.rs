//! Exhaustive enumeration of action sequences and sample paths, used to
//! cross-check the Q recursion on tiny models.

use crate::error::{Error, Result};
use crate::model::{Mmdp, Trajectory};
use crate::space::AgentSet;

/// Maximum number of enumerated path leaves.
pub const LEAF_LIMIT: u64 = 1_000_000;

struct Walker<'a> {
    m: &'a Mmdp,
    leaves: u64,
}

impl Walker<'_> {
    fn leaf(&mut self) -> Result<()> {
        self.leaves += 1;
        if self.leaves > LEAF_LIMIT {
            return Err(Error::ResourceGuard {
                what: "enumerated path leaves",
                required: self.leaves as u128,
                budget: LEAF_LIMIT as u128,
            });
        }
        Ok(())
    }

    /// Best achievable probability of hitting the unsafe set within `steps`
    /// transitions from `s`.
    fn reach(&mut self, s: usize, steps: usize) -> Result<f64> {
        if self.m.is_unsafe(s)? {
            self.leaf()?;
            return Ok(1.0);
        }
        if steps == 0 {
            self.leaf()?;
            return Ok(0.0);
        }
        let mut best = f64::INFINITY;
        for a in self.m.admissible_actions(s) {
            best = best.min(self.expected(s, a, steps)?);
        }
        if best.is_infinite() {
            return Err(Error::domain(format!("safe state {s} has no admissible action")));
        }
        Ok(best)
    }

    /// Probability of hitting the unsafe set within `steps` transitions after
    /// playing `a` in `s` and then optimally.
    fn expected(&mut self, s: usize, a: usize, steps: usize) -> Result<f64> {
        let mut total = 0.0;
        for s2 in 0..self.m.state_space().len() {
            let p = self.m.transition_prob(s, a, s2)?;
            if p > 0.0 {
                total += p * self.reach(s2, steps - 1)?;
            }
        }
        Ok(total)
    }
}

/// Coalition utility evaluated without any Q table: at every decision stage
/// the coalition's actions and all later joint actions are chosen by direct
/// minimization over enumerated futures.
pub fn brute_force_utility(m: &Mmdp, tr: &Trajectory, coalition: AgentSet) -> Result<f64> {
    let big_t = tr.horizon();
    if big_t == 0 || tr.actions().len() + 1 != big_t {
        return Err(Error::domain("trajectory needs T states and T-1 actions"));
    }
    let mut w = Walker { m, leaves: 0 };
    let states = m.state_space();
    let acts = m.action_space();
    let mut total = 0.0;
    for t in tr.decision_stages() {
        let s = states.encode(tr.state(t))?;
        let observed = tr.action(t);
        if m.is_unsafe(s)? {
            total += 1.0;
            continue;
        }
        let mut best = f64::INFINITY;
        for a in m.admissible_actions(s) {
            let parts = acts.decode(a);
            let keeps = (0..parts.len()).all(|j| coalition.contains(j) || parts[j] == observed[j]);
            if keeps {
                best = best.min(w.expected(s, a, big_t - t)?);
            }
        }
        if best.is_infinite() {
            return Err(Error::domain(format!("no admissible completion at stage {t}")));
        }
        total += best;
    }
    if m.is_unsafe(states.encode(tr.state(big_t - 1))?)? {
        total += 1.0;
    }
    Ok(total)
}
