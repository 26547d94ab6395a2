use rayon::prelude::*;

use super::{local_q, DecayCertificate, FactoredMmdp, LocalQTable, WeightScheme};
use crate::attribution::{ApproximationBound, CoalitionGame, CoalitionUtility, DecayFit, DorReport};
use crate::error::{Error, Result};
use crate::model::Trajectory;
use crate::space::AgentSet;

#[derive(Debug, Clone, Default)]
pub struct LocalDorOptions {
    pub weights: WeightScheme,
    /// Decay envelope backing the reported bound; `None` leaves the bound
    /// uncertified.
    pub certificate: Option<DecayCertificate>,
}

/// Local analogue of the coalition utility for the agent owning `lq`: the
/// coalition's ball members re-optimize `Q^L(ρ^t_B, ·, T−t)` while the other
/// ball members keep their observed actions.
pub fn local_utility(lq: &LocalQTable, tr: &Trajectory, coalition: AgentSet, terminal_unsafe: bool) -> Result<f64> {
    let blk = lq.block();
    let big_t = tr.horizon();
    if big_t == 0 || tr.actions().len() + 1 != big_t {
        return Err(Error::domain("trajectory needs T states and T-1 actions"));
    }
    if big_t > 1 && big_t > lq.horizon() {
        return Err(Error::domain("local Q horizon too short for the trajectory"));
    }
    let free: Vec<bool> = blk.members().iter().map(|&j| coalition.contains(j)).collect();
    let space = blk.action_space();
    let mut total = 0.0;
    for t in tr.decision_stages() {
        let b = blk.project_state(tr.state(t));
        let observed = blk.project_action(tr.action(t));
        let to_go = big_t - t;
        let mut best = f64::INFINITY;
        for &a in lq.actions(b) {
            let keeps = (0..free.len()).all(|p| free[p] || space.component(a, p) == space.component(observed, p));
            if keeps {
                best = best.min(lq.value(b, a, to_go)?);
            }
        }
        if best.is_infinite() {
            return Err(Error::domain(format!("no admissible local completion at stage {t}")));
        }
        total += best;
    }
    if terminal_unsafe {
        total += 1.0;
    }
    Ok(total)
}

/// Responsibility from local Q-functions: agent `i`'s value is its Shapley
/// value in the game `Y ↦ u_i^L(Y ∩ B_i^k)`, which only involves its ball.
pub fn local_dor(f: &FactoredMmdp, tr: &Trajectory, k: usize, opts: &LocalDorOptions) -> Result<DorReport> {
    let m = f.model();
    let n = m.n_agents();
    let big_t = tr.horizon();
    if big_t == 0 {
        return Err(Error::domain("empty trajectory"));
    }
    let last = m.state_space().encode(tr.state(big_t - 1))?;
    let terminal = m.is_unsafe(last)?;

    let per_agent: Vec<Result<(f64, Vec<(AgentSet, f64)>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let lq = local_q(f, i, k, &opts.weights, big_t)?;
            let ball = lq.block().ball();
            let game = CoalitionGame::new(n, |y: AgentSet| local_utility(&lq, tr, y.intersection(ball), terminal));
            let phi = game.restricted_shapley(ball)?;
            Ok((phi[i], game.cached_utilities()))
        })
        .collect();

    let mut phi = Vec::with_capacity(n);
    let mut utilities = Vec::new();
    for (i, r) in per_agent.into_iter().enumerate() {
        let (p, cache) = r?;
        phi.push(p);
        for (y, value) in cache {
            utilities.push((i, y, value));
        }
    }

    let mut report = DorReport::build("", m.agents(), &phi, &[], None)?;
    report.utilities = utilities
        .into_iter()
        .map(|(i, y, value)| CoalitionUtility {
            coalition: y.iter().map(|j| m.agents()[j].clone()).collect(),
            value,
            agent: Some(m.agents()[i].clone()),
        })
        .collect();
    report.bound = Some(match &opts.certificate {
        Some(cert) => {
            // Shapley weights over the coalitions excluding i sum to one
            let c_local = 2.0 * cert.c;
            ApproximationBound {
                k,
                decay: Some(DecayFit {
                    c: cert.c,
                    gamma: cert.gamma,
                }),
                c_local: Some(c_local),
                value: Some(c_local * cert.gamma.powi(k as i32 + 1)),
                uncertified_bound: !cert.certified,
            }
        }
        None => ApproximationBound {
            k,
            decay: None,
            c_local: None,
            value: None,
            uncertified_bound: true,
        },
    });
    Ok(report)
}
