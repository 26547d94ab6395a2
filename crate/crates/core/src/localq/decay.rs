use serde::{Deserialize, Serialize};

use super::FactoredMmdp;
use crate::error::{Error, Result};

/// Candidate decay rates for the envelope fit.
pub const GAMMA_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

const C_FLOOR: f64 = 1e-12;
const ENVELOPE_SLACK: f64 = 1e-12;

/// Exponential envelope `c γ^{k+1}` over the worst stage-0 deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCertificate {
    pub c: f64,
    pub gamma: f64,
    pub k_max: usize,
    /// Worst deviation over agents for each `k` in `0..=k_max`.
    pub deviations: Vec<f64>,
    /// `per_agent[i][k]`.
    pub per_agent: Vec<Vec<f64>>,
    pub certified: bool,
}

impl DecayCertificate {
    pub fn envelope(&self, k: usize) -> f64 {
        self.c * self.gamma.powi(k as i32 + 1)
    }

    /// Same deviations checked against a caller-supplied envelope.
    pub fn with_envelope(&self, c: f64, gamma: f64) -> Self {
        let mut out = self.clone();
        out.c = c;
        out.gamma = gamma;
        out.certified = c > 0.0 && gamma > 0.0 && gamma < 1.0 && fits(&self.deviations, c, gamma);
        out
    }
}

fn fits(deviations: &[f64], c: f64, gamma: f64) -> bool {
    deviations
        .iter()
        .enumerate()
        .all(|(k, &d)| d <= c * gamma.powi(k as i32 + 1) * (1.0 + ENVELOPE_SLACK) + ENVELOPE_SLACK)
}

/// For each agent and radius, the largest spread of the stage-0 value
/// `1{s ∈ Ŝ}` over outside configurations with the block configuration held
/// fixed. Block and outside actions do not enter the stage-0 value, so only
/// states are enumerated.
pub fn certify_decay(f: &FactoredMmdp, k_max: usize) -> Result<DecayCertificate> {
    let m = f.model();
    let n = m.n_agents();
    let states = m.state_space();
    let work = states.len() as u128 * n as u128 * (k_max as u128 + 1);
    if work > super::DEFAULT_WORK_BUDGET {
        return Err(Error::ResourceGuard {
            what: "decay certification configurations",
            required: work,
            budget: super::DEFAULT_WORK_BUDGET,
        });
    }
    let mask = m.unsafe_mask();
    let tuples: Vec<Vec<usize>> = (0..states.len()).map(|s| states.decode(s)).collect();

    let mut per_agent = vec![vec![0.0; k_max + 1]; n];
    for (i, row) in per_agent.iter_mut().enumerate() {
        for (k, slot) in row.iter_mut().enumerate() {
            let block = f.block(i, k)?;
            let nb = block.state_space().len();
            let mut lo = vec![1.0f64; nb];
            let mut hi = vec![0.0f64; nb];
            for (s, tup) in tuples.iter().enumerate() {
                let b = block.project_state(tup);
                let v = if mask[s] { 1.0 } else { 0.0 };
                lo[b] = lo[b].min(v);
                hi[b] = hi[b].max(v);
            }
            *slot = (0..nb).map(|b| hi[b] - lo[b]).fold(0.0, f64::max);
        }
    }
    let deviations: Vec<f64> = (0..=k_max)
        .map(|k| per_agent.iter().map(|r| r[k]).fold(0.0, f64::max))
        .collect();

    let mut best: Option<(f64, f64, f64)> = None;
    for &gamma in &GAMMA_GRID {
        let c = deviations
            .iter()
            .enumerate()
            .map(|(k, &d)| d / gamma.powi(k as i32 + 1))
            .fold(deviations[0].max(C_FLOOR), f64::max);
        let score = c * gamma.powi(k_max as i32 + 1);
        if best.is_none_or(|(_, _, s)| score < s) {
            best = Some((c, gamma, score));
        }
    }
    let (c, gamma, _) = best.unwrap();
    Ok(DecayCertificate {
        c,
        gamma,
        k_max,
        certified: fits(&deviations, c, gamma),
        deviations,
        per_agent,
    })
}
