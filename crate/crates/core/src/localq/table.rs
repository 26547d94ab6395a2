use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{Block, FactoredMmdp, WeightScheme, DEFAULT_WORK_BUDGET};
use crate::error::{Error, Result};
use crate::model::{product_indices, Dynamics};
use crate::reachability::QTable;

/// Weighted block transition kernel together with the weighted stage-0
/// unsafe indicator, per admissible block pair.
#[derive(Debug, Clone)]
pub struct LocalTransitions {
    block: Block,
    offsets: Vec<usize>,
    actions: Vec<usize>,
    rows: Vec<Vec<(usize, f64)>>,
    unsafe_weight: Vec<f64>,
}

impl LocalTransitions {
    pub fn block(&self) -> &Block {
        &self.block
    }

    pub fn actions(&self, b: usize) -> &[usize] {
        &self.actions[self.offsets[b]..self.offsets[b + 1]]
    }

    fn slot(&self, b: usize, a: usize) -> Option<usize> {
        self.actions(b).binary_search(&a).ok().map(|p| self.offsets[b] + p)
    }

    /// `Pr^L(· | b, a)`, sorted by next block state.
    pub fn row(&self, b: usize, a: usize) -> Option<&[(usize, f64)]> {
        self.slot(b, a).map(|s| self.rows[s].as_slice())
    }

    /// Weighted indicator that the full state is unsafe.
    pub fn unsafe_weight(&self, b: usize, a: usize) -> Option<f64> {
        self.slot(b, a).map(|s| self.unsafe_weight[s])
    }
}

/// Builds the ω-weighted average of exact block marginals for the `k`-ball of
/// `agent`.
pub fn marginalize_transitions(f: &FactoredMmdp, agent: usize, k: usize, w: &WeightScheme) -> Result<LocalTransitions> {
    let m = f.model();
    let block = f.block(agent, k)?;
    let Dynamics::Factored { factors, freeze_unsafe } = m.dynamics() else {
        unreachable!("checked by FactoredMmdp::new")
    };

    let n_b = block.states.len();
    let mut offsets = Vec::with_capacity(n_b + 1);
    let mut actions = Vec::new();
    offsets.push(0);
    for b in 0..n_b {
        let bs = block.states.decode(b);
        let lists: Vec<Vec<usize>> = block
            .members
            .iter()
            .zip(&bs)
            .map(|(&j, &sj)| m.local_actions(j, sj).unwrap())
            .collect();
        let refs: Vec<&[usize]> = lists.iter().map(Vec::as_slice).collect();
        let acts = product_indices(&block.actions, &refs);
        if acts.is_empty() {
            return Err(Error::domain(format!("block state {bs:?} has no admissible action")));
        }
        actions.extend(acts);
        offsets.push(actions.len());
    }
    let work = actions.len() as u128 * w.work_per_block(&block);
    if work > DEFAULT_WORK_BUDGET {
        return Err(Error::ResourceGuard {
            what: "block marginalization configurations",
            required: work,
            budget: DEFAULT_WORK_BUDGET,
        });
    }

    let per_state: Vec<Result<Vec<(Vec<(usize, f64)>, f64)>>> = (0..n_b)
        .into_par_iter()
        .map(|b| {
            let bs = block.states.decode(b);
            let mut os = vec![0; block.outside.len()];
            let mut out = Vec::new();
            for &a in &actions[offsets[b]..offsets[b + 1]] {
                let ba = block.actions.decode(a);
                let weights = w.outside_state_weights(&block, &bs, &ba)?;
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                let mut unsafe_w = 0.0;
                let mut cur: Vec<(usize, f64)> = Vec::new();
                let mut next = Vec::new();
                for (o, wo) in weights {
                    block.outside_states.decode_into(o, &mut os);
                    let full = block.merge(&bs, &os);
                    let bad = m.is_unsafe_tuple(&full);
                    if bad {
                        unsafe_w += wo;
                    }
                    if bad && *freeze_unsafe {
                        *acc.entry(b).or_insert(0.0) += wo;
                        continue;
                    }
                    cur.clear();
                    cur.push((0, wo));
                    for (pos, &j) in block.members.iter().enumerate() {
                        let row = factors[j].row(&full, ba[pos]);
                        let stride = block.states.stride(pos);
                        next.clear();
                        for &(idx, p) in &cur {
                            for &(ns, q) in row {
                                next.push((idx + ns * stride, p * q));
                            }
                        }
                        std::mem::swap(&mut cur, &mut next);
                    }
                    for &(idx, p) in &cur {
                        *acc.entry(idx).or_insert(0.0) += p;
                    }
                }
                out.push((acc.into_iter().filter(|&(_, p)| p > 0.0).collect(), unsafe_w));
            }
            Ok(out)
        })
        .collect();

    let mut rows = Vec::with_capacity(actions.len());
    let mut unsafe_weight = Vec::with_capacity(actions.len());
    for r in per_state {
        for (row, uw) in r? {
            rows.push(row);
            unsafe_weight.push(uw);
        }
    }
    Ok(LocalTransitions {
        block,
        offsets,
        actions,
        rows,
        unsafe_weight,
    })
}

/// Local Q-function on the block of one agent.
#[derive(Debug, Clone)]
pub struct LocalQTable {
    transitions: LocalTransitions,
    horizon: usize,
    values: Vec<Vec<f64>>,
    best: Vec<Vec<f64>>,
}

impl LocalQTable {
    pub fn block(&self) -> &Block {
        &self.transitions.block
    }

    pub fn transitions(&self) -> &LocalTransitions {
        &self.transitions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn actions(&self, b: usize) -> &[usize] {
        self.transitions.actions(b)
    }

    pub fn get(&self, b: usize, a: usize, t: usize) -> Option<f64> {
        if t > self.horizon || b >= self.transitions.block.states.len() {
            return None;
        }
        self.transitions.slot(b, a).map(|s| self.values[t][s])
    }

    pub fn value(&self, b: usize, a: usize, t: usize) -> Result<f64> {
        self.get(b, a, t)
            .ok_or_else(|| Error::domain(format!("no local Q entry for block ({b}, {a}) at stage {t}")))
    }

    /// Value at the ball components of full joint tuples.
    pub fn value_at(&self, state: &[usize], action: &[usize], t: usize) -> Result<f64> {
        let blk = &self.transitions.block;
        self.value(blk.project_state(state), blk.project_action(action), t)
    }

    pub fn min_value(&self, b: usize, t: usize) -> f64 {
        self.best[t][b]
    }
}

/// Stage 0 is the weighted unsafe indicator; later stages follow the
/// recursion with the weighted block kernel.
pub fn local_q(f: &FactoredMmdp, agent: usize, k: usize, w: &WeightScheme, horizon: usize) -> Result<LocalQTable> {
    let tr = marginalize_transitions(f, agent, k, w)?;
    let n_b = tr.block.states.len();
    let minima = |stage: &[f64]| -> Vec<f64> {
        (0..n_b)
            .map(|b| {
                stage[tr.offsets[b]..tr.offsets[b + 1]]
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    let stage0: Vec<f64> = tr.unsafe_weight.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
    let mut best = vec![minima(&stage0)];
    let mut values = vec![stage0];
    for _ in 1..=horizon {
        let prev = best.last().unwrap();
        let stage: Vec<f64> = tr
            .rows
            .par_iter()
            .map(|row| row.iter().map(|&(b2, p)| p * prev[b2]).sum::<f64>().clamp(0.0, 1.0))
            .collect();
        best.push(minima(&stage));
        values.push(stage);
    }
    Ok(LocalQTable {
        transitions: tr,
        horizon,
        values,
        best,
    })
}

/// `max |Q^L(s_B, a_B, t) − Q(s, a, t)|` over all joint states and admissible
/// joint actions.
pub fn max_block_error(q: &QTable, lq: &LocalQTable, t: usize) -> Result<f64> {
    if t > q.horizon() || t > lq.horizon {
        return Err(Error::domain(format!("stage {t} beyond a table horizon")));
    }
    let blk = &lq.transitions.block;
    let ss = q.state_space();
    let asp = q.action_space();
    let errs: Vec<Result<f64>> = (0..ss.len())
        .into_par_iter()
        .map(|s| {
            let sp = ss.decode(s);
            let b = blk.project_state(&sp);
            let mut ap = vec![0; asp.dims()];
            let mut worst: f64 = 0.0;
            for &a in q.actions(s) {
                asp.decode_into(a, &mut ap);
                let local = lq.value(b, blk.project_action(&ap), t)?;
                worst = worst.max((local - q.value(s, a, t)?).abs());
            }
            Ok(worst)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for e in errs {
        worst = worst.max(e?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localq::InteractionGraph;
    use crate::model::{Admissibility, Factor, Mmdp, UnsafeSpec};
    use crate::reachability::compute_q;

    /// Three-agent chain with binary states; agents flip with a probability
    /// depending on their neighbours. Unsafe iff agent 1 is in its absorbing
    /// state 1.
    fn chain() -> FactoredMmdp {
        let counts = [2, 2, 2];
        let mut factors = Vec::new();
        for i in 0..3 {
            let scope: Vec<usize> = (0..3usize).filter(|&j| j.abs_diff(i) <= 1).collect();
            let mut f = Factor::new(i, scope.clone(), &counts, 2).unwrap();
            for c in 0..f.context_space().len() {
                let ctx = f.context_space().decode(c);
                let own = ctx[f.own_position()];
                let others: usize = ctx.iter().sum::<usize>() - own;
                for a in 0..2 {
                    let p = 0.1 + 0.2 * a as f64 + 0.1 * others as f64;
                    if i == 1 && own == 1 {
                        f.set_row(&ctx, a, vec![(1, 1.0)]).unwrap();
                    } else {
                        f.set_row(&ctx, a, vec![(1 - own, p), (own, 1.0 - p)]).unwrap();
                    }
                }
            }
            factors.push(f);
        }
        let m = Mmdp::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec!["0".into(), "1".into()]; 3],
            vec![vec!["hold".into(), "push".into()]; 3],
            Admissibility::All,
            Dynamics::Factored {
                factors,
                freeze_unsafe: false,
            },
            UnsafeSpec::Forbidden(vec![crate::model::ForbiddenRule {
                agent: 1,
                states: [1].into(),
            }]),
        )
        .unwrap();
        FactoredMmdp::new(m, InteractionGraph::path(3)).unwrap()
    }

    #[test]
    fn rows_are_distributions() {
        let f = chain();
        for k in 0..3 {
            let lt = marginalize_transitions(&f, 0, k, &WeightScheme::Uniform).unwrap();
            for b in 0..lt.block.states.len() {
                for &a in lt.actions(b) {
                    let total: f64 = lt.row(b, a).unwrap().iter().map(|&(_, p)| p).sum();
                    assert!((total - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn hand_computed_marginal() {
        // agent 0 ball at k=0 is {0}; its factor depends on agent 1's state,
        // uniform over agent 1 ∈ {0,1} (agent 2 is irrelevant).
        let f = chain();
        let lt = marginalize_transitions(&f, 0, 0, &WeightScheme::Uniform).unwrap();
        let row = lt.row(0, 1).unwrap();
        // p(flip) = 0.3 + 0.1 * s1, averaged: 0.35
        assert_eq!(row.len(), 2);
        assert!((row[1].1 - 0.35).abs() < 1e-12);
        assert!((row[0].1 - 0.65).abs() < 1e-12);
        // unsafe iff s1 = 1: weight one half
        assert!((lt.unsafe_weight(0, 1).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn full_ball_is_exact() {
        let f = chain();
        let q = compute_q(f.model(), 3).unwrap();
        let lq = local_q(&f, 0, 2, &WeightScheme::Uniform, 3).unwrap();
        for t in 0..=3 {
            assert!(max_block_error(&q, &lq, t).unwrap() < 1e-12);
        }
    }

    #[test]
    fn negative_custom_weights_rejected() {
        let f = chain();
        let w = WeightScheme::Custom(std::sync::Arc::new(|_, _, _| -1.0));
        assert!(matches!(
            marginalize_transitions(&f, 0, 0, &w),
            Err(Error::Invariant(_))
        ));
        let unnormalized = WeightScheme::Custom(std::sync::Arc::new(|_, _, _| 1.0));
        assert!(matches!(
            marginalize_transitions(&f, 0, 0, &unnormalized),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn point_mass_matches_true_configuration() {
        let f = chain();
        let q = compute_q(f.model(), 1).unwrap();
        let state = vec![0, 1, 0];
        let action = vec![1, 0, 1];
        let w = WeightScheme::PointMass {
            state: state.clone(),
            action: action.clone(),
        };
        let lq = local_q(&f, 0, 0, &w, 1).unwrap();
        let s = q.state_space().encode(&state).unwrap();
        let a = q.action_space().encode(&action).unwrap();
        for t in 0..=1 {
            let exact = q.value(s, a, t).unwrap();
            assert!((lq.value_at(&state, &action, t).unwrap() - exact).abs() < 1e-12);
        }
    }
}
