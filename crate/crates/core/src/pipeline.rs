//! End-to-end responsibility computation for a model and an observed path.

use std::time::{Duration, Instant};

use crate::attribution::{CoalitionGame, DorReport};
use crate::error::Result;
use crate::identification::{identify_with_q, DEFAULT_EPSILON};
use crate::model::{Mmdp, Trajectory};
use crate::reachability::{coalition_utility, compute_q_with_budget, DEFAULT_CELL_BUDGET};
use crate::space::AgentSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DorOptions {
    /// Screen agents first and restrict Shapley to the screened set.
    pub restrict: bool,
    pub epsilon: f64,
    pub cell_budget: u128,
}

impl Default for DorOptions {
    fn default() -> Self {
        DorOptions {
            restrict: false,
            epsilon: DEFAULT_EPSILON,
            cell_budget: DEFAULT_CELL_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DorStats {
    pub q_cells: usize,
    pub q_bytes: usize,
    pub coalitions_evaluated: usize,
    pub elapsed: Duration,
}

pub fn compute_dor(m: &Mmdp, tr: &Trajectory, name: &str, opts: &DorOptions) -> Result<(DorReport, DorStats)> {
    let start = Instant::now();
    let q = compute_q_with_budget(m, tr.horizon(), opts.cell_budget)?;
    let n = m.n_agents();
    let players = if opts.restrict {
        Some(identify_with_q(&q, tr, opts.epsilon)?.responsible)
    } else {
        None
    };
    let game = CoalitionGame::new(n, |y: AgentSet| coalition_utility(&q, tr, y));
    let phi = game.restricted_shapley(players.unwrap_or(AgentSet::full(n)))?;
    let utilities = game.cached_utilities();
    let report = DorReport::build(name, m.agents(), &phi, &utilities, players)?;
    let stats = DorStats {
        q_cells: q.cells(),
        q_bytes: q.bytes(),
        coalitions_evaluated: utilities.len(),
        elapsed: start.elapsed(),
    };
    Ok((report, stats))
}
