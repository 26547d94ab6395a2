//! Shapley values over coalition utilities and their normalization into
//! degrees of responsibility.

use dashmap::DashMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::AgentSet;

/// Largest agent count for exhaustive Shapley evaluation.
pub const MAX_SHAPLEY_AGENTS: usize = 20;

/// Tolerance for non-positivity of φ and for the zero-sum test.
pub const PHI_TOLERANCE: f64 = 1e-9;

/// `|Y|! (n − |Y| − 1)! / n!` for a coalition of size `k` among `n` players.
pub fn shapley_weight(n: usize, k: usize) -> f64 {
    assert!(k < n, "coalition must exclude the player");
    // product form avoids factorial overflow
    let mut w = 1.0 / n as f64;
    for j in 1..=k {
        w *= j as f64 / (n - j) as f64;
    }
    w
}

/// Memoized coalition utility `u(Y)` keyed by bitmask.
pub struct CoalitionGame<F> {
    n: usize,
    eval: F,
    memo: DashMap<u64, f64>,
}

impl<F> CoalitionGame<F>
where
    F: Fn(AgentSet) -> Result<f64> + Sync,
{
    pub fn new(n: usize, eval: F) -> Self {
        CoalitionGame {
            n,
            eval,
            memo: DashMap::new(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn utility(&self, y: AgentSet) -> Result<f64> {
        if let Some(v) = self.memo.get(&y.bits()) {
            return Ok(*v);
        }
        let v = (self.eval)(y)?;
        self.memo.insert(y.bits(), v);
        Ok(v)
    }

    fn prefetch(&self, players: AgentSet) -> Result<()> {
        let subsets: Vec<AgentSet> = players.subsets().collect();
        subsets
            .par_iter()
            .try_for_each(|&y| self.utility(y).map(|_| ()))
    }

    /// Shapley values over all agents.
    pub fn shapley(&self) -> Result<Vec<f64>> {
        self.restricted_shapley(AgentSet::full(self.n))
    }

    /// Shapley values of the game restricted to `players`; everyone else gets
    /// zero. With `players` equal to all agents this is the full value.
    pub fn restricted_shapley(&self, players: AgentSet) -> Result<Vec<f64>> {
        if !players.is_subset(AgentSet::full(self.n)) {
            return Err(Error::domain("restricted players must be agents of the game"));
        }
        let r = players.len();
        if r > MAX_SHAPLEY_AGENTS {
            return Err(Error::ResourceGuard {
                what: "Shapley players",
                required: r as u128,
                budget: MAX_SHAPLEY_AGENTS as u128,
            });
        }
        self.prefetch(players)?;
        let mut phi = vec![0.0; self.n];
        for i in players.iter() {
            let others = players.without(i);
            let mut acc = 0.0;
            for y in others.subsets() {
                let marginal = self.utility(y.with(i))? - self.utility(y)?;
                acc += shapley_weight(r, y.len()) * marginal;
            }
            phi[i] = acc;
        }
        Ok(phi)
    }

    /// Evaluated utilities sorted by bitmask.
    pub fn cached_utilities(&self) -> Vec<(AgentSet, f64)> {
        let mut out: Vec<(AgentSet, f64)> = self
            .memo
            .iter()
            .map(|e| (AgentSet::from_bits(*e.key()), *e.value()))
            .collect();
        out.sort_by_key(|(y, _)| y.bits());
        out
    }
}

pub fn shapley<F>(n: usize, u: F) -> Result<Vec<f64>>
where
    F: Fn(AgentSet) -> Result<f64> + Sync,
{
    CoalitionGame::new(n, u).shapley()
}

pub fn restricted_shapley<F>(n: usize, players: AgentSet, u: F) -> Result<Vec<f64>>
where
    F: Fn(AgentSet) -> Result<f64> + Sync,
{
    CoalitionGame::new(n, u).restricted_shapley(players)
}

/// Normalized responsibility.
#[derive(Debug, Clone, PartialEq)]
pub struct Dor {
    pub psi: Vec<f64>,
    pub no_responsibility: bool,
}

/// `ψ_i = φ_i / Σ φ`; all zeros with the flag set when Σ φ vanishes.
pub fn dor(phi: &[f64]) -> Result<Dor> {
    if let Some((i, &p)) = phi.iter().enumerate().find(|(_, &p)| p > PHI_TOLERANCE || p.is_nan()) {
        return Err(Error::invariant(format!(
            "Shapley value of agent index {i} is {p}, expected non-positive"
        )));
    }
    let sum: f64 = phi.iter().sum();
    if sum.abs() <= PHI_TOLERANCE {
        return Ok(Dor {
            psi: vec![0.0; phi.len()],
            no_responsibility: true,
        });
    }
    // adding zero turns -0.0 into 0.0
    let psi = phi.iter().map(|&p| (p.min(0.0) / sum).clamp(0.0, 1.0) + 0.0).collect();
    Ok(Dor {
        psi,
        no_responsibility: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDor {
    pub id: String,
    pub phi: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionUtility {
    pub coalition: Vec<String>,
    pub value: f64,
    /// Owner of the local game, for per-agent utilities.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub agent: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c: f64,
    pub gamma: f64,
}

/// Error bound attached to approximate (local) responsibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationBound {
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decay: Option<DecayFit>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c_local: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value: Option<f64>,
    pub uncertified_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DorReport {
    pub scenario: String,
    pub agents: Vec<AgentDor>,
    /// Agents with positive responsibility.
    pub responsible_set: Vec<String>,
    /// Screened candidate set when Shapley was restricted.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub screened_set: Option<Vec<String>>,
    pub no_responsibility: bool,
    pub utilities: Vec<CoalitionUtility>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bound: Option<ApproximationBound>,
}

impl DorReport {
    /// Assembles a report; fails if any φ is positive beyond tolerance.
    pub fn build(
        scenario: impl Into<String>,
        agent_ids: &[String],
        phi: &[f64],
        utilities: &[(AgentSet, f64)],
        screened: Option<AgentSet>,
    ) -> Result<Self> {
        let d = dor(phi)?;
        let names = |y: AgentSet| y.iter().map(|i| agent_ids[i].clone()).collect::<Vec<_>>();
        let agents = agent_ids
            .iter()
            .zip(phi.iter().zip(&d.psi))
            .map(|(id, (&phi, &psi))| AgentDor {
                id: id.clone(),
                phi,
                psi,
            })
            .collect();
        let responsible: AgentSet = d
            .psi
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, _)| i)
            .collect();
        Ok(DorReport {
            scenario: scenario.into(),
            agents,
            responsible_set: names(responsible),
            screened_set: screened.map(names),
            no_responsibility: d.no_responsibility,
            utilities: utilities
                .iter()
                .map(|&(y, value)| CoalitionUtility {
                    coalition: names(y),
                    value,
                    agent: None,
                })
                .collect(),
            bound: None,
        })
    }

    pub fn psi(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.psi).collect()
    }

    pub fn phi(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.phi).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(values: &[f64]) -> impl Fn(AgentSet) -> Result<f64> + Sync + '_ {
        move |y: AgentSet| Ok(values[y.bits() as usize])
    }

    #[test]
    fn weights_sum_to_one_per_player() {
        for n in 1..8usize {
            let total: f64 = (0..n)
                .map(|k| {
                    let binom = (0..k).fold(1.0, |b, j| b * (n - 1 - j) as f64 / (j + 1) as f64);
                    binom * shapley_weight(n, k)
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_two_agent_game() {
        // u(∅)=2, u({1})=u({2})=1, u({1,2})=0
        let phi = shapley(2, table(&[2.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(phi, vec![-1.0, -1.0]);
    }

    #[test]
    fn constant_game_is_null() {
        let phi = shapley(3, |_| Ok(4.0)).unwrap();
        assert!(phi.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn restriction_to_everyone_matches_full() {
        let values = [3.0, 2.5, 2.0, 1.0, 2.9, 1.5, 1.25, 0.5];
        let full = shapley(3, table(&values)).unwrap();
        let restricted = restricted_shapley(3, AgentSet::full(3), table(&values)).unwrap();
        for (a, b) in full.iter().zip(&restricted) {
            assert!((a - b).abs() < 1e-12);
        }
        let none = restricted_shapley(3, AgentSet::empty(), table(&values)).unwrap();
        assert!(none.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn dor_examples() {
        assert_eq!(dor(&[-2.0, 0.0]).unwrap().psi, vec![1.0, 0.0]);
        assert_eq!(dor(&[-1.0, 0.0, -1.0]).unwrap().psi, vec![0.5, 0.0, 0.5]);
        let zero = dor(&[0.0, 0.0]).unwrap();
        assert!(zero.no_responsibility);
        assert_eq!(zero.psi, vec![0.0, 0.0]);
        assert!(matches!(dor(&[0.5, -1.0]), Err(Error::Invariant(_))));
    }

    #[test]
    fn guard_on_player_count() {
        let err = shapley(21, |_| Ok(0.0)).unwrap_err();
        assert!(matches!(err, Error::ResourceGuard { .. }));
    }
}
