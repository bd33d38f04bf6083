use rand::seq::index::{sample, sample_weighted};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ForestConfig, SplitRuleParams};
use crate::data::{CovariateKind, SurvivalDataset};
use crate::rng::StreamRng;
use crate::survival::{linear_predictor, newton, standard_errors, z_scores, CoxOptions, Evaluation};

/// A binary rule; rows for which [`SplitRule::goes_left`] holds form the
/// left child (`V = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SplitRule {
    /// `x <= value` goes left.
    Threshold { value: f64 },
    /// Categorical codes whose bit is set in `left` go left.
    Levels { left: u64 },
}

impl SplitRule {
    pub fn goes_left(&self, x: f64) -> bool {
        match *self {
            SplitRule::Threshold { value } => x <= value,
            SplitRule::Levels { left } => {
                let code = x as i64;
                (0..64).contains(&code) && left & (1u64 << code) != 0
            }
        }
    }

    pub fn describe(&self, name: &str, kind: &CovariateKind, left: bool) -> String {
        match (self, kind) {
            (SplitRule::Threshold { value }, _) => {
                format!("{} {} {}", name, if left { "<=" } else { ">" }, fmt_num(*value))
            }
            (SplitRule::Levels { left: mask }, CovariateKind::Categorical { levels }) => {
                let chosen: Vec<&str> = levels
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| (mask >> c) & 1 == u64::from(left))
                    .map(|(_, l)| l.as_str())
                    .collect();
                format!("{} in {{{}}}", name, chosen.join(", "))
            }
            (SplitRule::Levels { left: mask }, _) => {
                let op = if left { "in" } else { "not in" };
                let codes: Vec<String> = (0..64).filter(|c| (mask >> c) & 1 == 1).map(|c| c.to_string()).collect();
                format!("{} {} {{{}}}", name, op, codes.join(", "))
            }
        }
    }
}

fn fmt_num(v: f64) -> String {
    let s = format!("{:.4}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

/// The two ingredients of the splitting score for one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitStatistics {
    /// C-index of the `V + W + V x W` Cox model.
    pub concordance: f64,
    /// z-score of the `V x W` coefficient.
    pub interaction_z: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub variable: usize,
    pub rule: SplitRule,
    pub statistics: SplitStatistics,
}

/// Rows of one node in descending time order, grouped into blocks of equal
/// time. Duplicated (bootstrap) rows appear once per copy.
pub(crate) struct NodeRows<'a> {
    data: &'a SurvivalDataset,
    rows: &'a [usize],
    block_of: Vec<u32>,
    n_blocks: usize,
}

impl<'a> NodeRows<'a> {
    /// `rows` must already be sorted by descending time.
    pub(crate) fn new(data: &'a SurvivalDataset, rows: &'a [usize]) -> Self {
        let t = data.times();
        let mut block_of = Vec::with_capacity(rows.len());
        let mut b = 0u32;
        for (k, &i) in rows.iter().enumerate() {
            if k > 0 && t[i] != t[rows[k - 1]] {
                b += 1;
            }
            block_of.push(b);
        }
        let n_blocks = if rows.is_empty() { 0 } else { b as usize + 1 };
        NodeRows {
            data,
            rows,
            block_of,
            n_blocks,
        }
    }
}

/// Sorts row indices by descending time (ties by event, then index).
pub(crate) fn sort_by_time_desc(data: &SurvivalDataset, rows: &mut [usize]) {
    let t = data.times();
    let e = data.events();
    rows.sort_by(|&a, &b| t[b].total_cmp(&t[a]).then(e[a].cmp(&e[b])).then(a.cmp(&b)));
}

// Design of cell g = 2V + W in columns (V, W, VW).
const CELL_X: [[f64; 3]; 4] = [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 1.0]];

/// Evaluates one split of a node. `None` when the split is infeasible:
/// a child below `nodesize` rows, a child without events or without both
/// arms, or a Cox fit that fails or does not converge.
pub(crate) fn node_split_statistics(
    node: &NodeRows<'_>,
    variable: usize,
    rule: &SplitRule,
    params: &SplitRuleParams,
    nodesize: usize,
) -> Option<SplitStatistics> {
    let data = node.data;
    let x = data.covariates();
    let w = data.treatments();
    let ev = data.events();
    let nb = node.n_blocks;
    let mut add = vec![0u32; nb * 4];
    let mut dead = vec![0u32; nb * 4];
    let mut size = [0usize; 2];
    let mut events = [0usize; 2];
    let mut arm = [[false; 2]; 2];
    for (k, &i) in node.rows.iter().enumerate() {
        let v = usize::from(!rule.goes_left(x[[i, variable]]));
        let g = 2 * v + usize::from(w[i]);
        let b = node.block_of[k] as usize;
        add[b * 4 + g] += 1;
        size[v] += 1;
        arm[v][usize::from(w[i])] = true;
        if ev[i] {
            dead[b * 4 + g] += 1;
            events[v] += 1;
        }
    }
    for v in 0..2 {
        if size[v] < nodesize || events[v] == 0 || !arm[v][0] || !arm[v][1] {
            return None;
        }
    }
    cell_statistics(&add, &dead, nb, params)
}

fn cell_statistics(add: &[u32], dead: &[u32], nb: usize, params: &SplitRuleParams) -> Option<SplitStatistics> {
    let eval = |beta: &[f64]| -> Evaluation {
        let eta: [f64; 4] = std::array::from_fn(|g| linear_predictor(CELL_X[g].iter().copied(), beta));
        let offset = eta.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let wt: [f64; 4] = std::array::from_fn(|g| (eta[g] - offset).exp());
        let mut r = [0.0f64; 4];
        let mut loglik = 0.0;
        let mut score = vec![0.0; 3];
        let mut info = vec![0.0; 9];
        for b in 0..nb {
            let mut deaths = 0.0;
            for g in 0..4 {
                r[g] += f64::from(add[b * 4 + g]);
                deaths += f64::from(dead[b * 4 + g]);
            }
            if deaths == 0.0 {
                continue;
            }
            let mut s0 = 0.0;
            let mut s1 = [0.0; 3];
            let mut s2 = [0.0; 9];
            for g in 0..4 {
                let rw = r[g] * wt[g];
                s0 += rw;
                for a in 0..3 {
                    s1[a] += rw * CELL_X[g][a];
                    for c in 0..=a {
                        s2[a * 3 + c] += rw * CELL_X[g][a] * CELL_X[g][c];
                    }
                }
                let dg = f64::from(dead[b * 4 + g]);
                if dg > 0.0 {
                    loglik += dg * eta[g];
                    for a in 0..3 {
                        score[a] += dg * CELL_X[g][a];
                    }
                }
            }
            loglik -= deaths * (s0.ln() + offset);
            for a in 0..3 {
                score[a] -= deaths * s1[a] / s0;
                for c in 0..=a {
                    info[a * 3 + c] += deaths * (s2[a * 3 + c] / s0 - s1[a] * s1[c] / (s0 * s0));
                }
            }
        }
        for a in 0..3 {
            for c in 0..a {
                info[c * 3 + a] = info[a * 3 + c];
            }
        }
        Evaluation {
            loglik,
            score,
            information: info,
        }
    };
    let out = newton(3, &CoxOptions::split_search(), eval).ok()?;
    if !out.converged {
        return None;
    }
    let se = standard_errors(&out.information, 3);
    let z = z_scores(&out.beta, &se)[2];
    if !z.is_finite() {
        return None;
    }
    let eta: [f64; 4] = std::array::from_fn(|g| linear_predictor(CELL_X[g].iter().copied(), &out.beta));
    let concordance = cell_concordance(add, dead, nb, &eta);
    Some(SplitStatistics {
        concordance,
        interaction_z: z,
        score: params.score(concordance, z),
    })
}

// Harrell's C over cells: blocks are visited latest first, so `later`
// holds the rows with strictly larger time.
fn cell_concordance(add: &[u32], dead: &[u32], nb: usize, eta: &[f64; 4]) -> f64 {
    let mut later = [0.0f64; 4];
    let mut comparable = 0.0;
    let mut concordant = 0.0;
    let mut tied = 0.0;
    for b in 0..nb {
        let mut pool = [0.0f64; 4];
        for h in 0..4 {
            pool[h] = later[h] + f64::from(add[b * 4 + h] - dead[b * 4 + h]);
        }
        for g in 0..4 {
            let dg = f64::from(dead[b * 4 + g]);
            if dg == 0.0 {
                continue;
            }
            for h in 0..4 {
                comparable += dg * pool[h];
                if eta[h] < eta[g] {
                    concordant += dg * pool[h];
                } else if eta[h] == eta[g] {
                    tied += dg * pool[h];
                }
            }
        }
        for h in 0..4 {
            later[h] += f64::from(add[b * 4 + h]);
        }
    }
    if comparable == 0.0 {
        0.5
    } else {
        (concordant + 0.5 * tied) / comparable
    }
}

/// Split statistics for an arbitrary node (rows in any order, repeats
/// allowed).
pub fn split_statistics(
    data: &SurvivalDataset,
    rows: &[usize],
    variable: usize,
    rule: &SplitRule,
    params: &SplitRuleParams,
    nodesize: usize,
) -> Option<SplitStatistics> {
    let mut sorted = rows.to_vec();
    sort_by_time_desc(data, &mut sorted);
    let node = NodeRows::new(data, &sorted);
    node_split_statistics(&node, variable, rule, params, nodesize)
}

/// Splitting score of one candidate, `None` when infeasible.
pub fn evaluate_split(
    data: &SurvivalDataset,
    rows: &[usize],
    variable: usize,
    rule: &SplitRule,
    params: &SplitRuleParams,
    nodesize: usize,
) -> Option<f64> {
    split_statistics(data, rows, variable, rule, params, nodesize).map(|s| s.score)
}

/// Draws the `mtry` variables of a node, in ascending index order.
pub(crate) fn sample_variables(p: usize, config: &ForestConfig, rng: &mut StreamRng) -> Vec<usize> {
    let mut vars: Vec<usize> = match &config.xvar_weights {
        Some(w) => {
            let positive = w.iter().filter(|v| **v > 0.0).count();
            let amount = config.mtry.min(positive);
            sample_weighted(rng, p, |j| w[j], amount)
                .map(|s| s.into_vec())
                .unwrap_or_default()
        }
        None => sample(rng, p, config.mtry.min(p)).into_vec(),
    };
    vars.sort_unstable();
    vars
}

/// Candidate rules of one variable within a node.
pub(crate) fn variable_candidates(
    data: &SurvivalDataset,
    rows: &[usize],
    variable: usize,
    nsplit: usize,
    rng: &mut StreamRng,
) -> Vec<SplitRule> {
    let x = data.covariates();
    match data.schema().kind(variable) {
        CovariateKind::Numeric => {
            // draws index the sorted values so row order cannot matter
            let mut values: Vec<f64> = rows.iter().map(|&i| x[[i, variable]]).collect();
            values.sort_by(f64::total_cmp);
            let mut distinct = values.clone();
            distinct.dedup();
            if distinct.len() < 2 {
                return Vec::new();
            }
            let max = distinct[distinct.len() - 1];
            if nsplit == 0 {
                distinct
                    .windows(2)
                    .map(|w| SplitRule::Threshold {
                        value: 0.5 * (w[0] + w[1]),
                    })
                    .collect()
            } else {
                let mut cuts: Vec<f64> = (0..nsplit)
                    .map(|_| values[rng.random_range(0..values.len())])
                    .filter(|&v| v < max)
                    .collect();
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                cuts.into_iter().map(|value| SplitRule::Threshold { value }).collect()
            }
        }
        CovariateKind::Categorical { .. } => {
            let mut present: Vec<u32> = rows.iter().map(|&i| x[[i, variable]] as u32).collect();
            present.sort_unstable();
            present.dedup();
            if present.len() < 2 || present.len() > 20 {
                return Vec::new();
            }
            // the first present level always stays left
            let rest = &present[1..];
            let mut rules = Vec::new();
            for subset in 0u64..(1u64 << rest.len()) - 1 {
                let mut mask = 1u64 << present[0];
                for (k, &lvl) in rest.iter().enumerate() {
                    if subset & (1 << k) != 0 {
                        mask |= 1u64 << lvl;
                    }
                }
                rules.push(SplitRule::Levels { left: mask });
            }
            rules
        }
    }
}

/// Every (variable, rule) pair the search examines at a node, in the order
/// it examines them. For a node with at least `2 * nodesize` rows this
/// consumes randomness exactly as [`best_split`] does.
pub fn candidate_splits(
    data: &SurvivalDataset,
    rows: &[usize],
    config: &ForestConfig,
    rng: &mut StreamRng,
) -> Vec<(usize, SplitRule)> {
    let vars = sample_variables(data.p(), config, rng);
    let mut out = Vec::new();
    for v in vars {
        for rule in variable_candidates(data, rows, v, config.nsplit, rng) {
            out.push((v, rule));
        }
    }
    out
}

/// Highest-scoring feasible split of a node; ties keep the first candidate
/// examined. `None` when no candidate is feasible.
pub fn best_split(
    data: &SurvivalDataset,
    rows: &[usize],
    config: &ForestConfig,
    rng: &mut StreamRng,
) -> Option<SplitCandidate> {
    let mut sorted = rows.to_vec();
    sort_by_time_desc(data, &mut sorted);
    let node = NodeRows::new(data, &sorted);
    best_node_split(&node, config, rng)
}

pub(crate) fn best_node_split(
    node: &NodeRows<'_>,
    config: &ForestConfig,
    rng: &mut StreamRng,
) -> Option<SplitCandidate> {
    if node.rows.len() < 2 * config.nodesize {
        return None;
    }
    let candidates = candidate_splits(node.data, node.rows, config, rng);
    let mut best: Option<SplitCandidate> = None;
    for (variable, rule) in candidates {
        if let Some(stats) = node_split_statistics(node, variable, &rule, &config.split_params, config.nodesize) {
            if best.as_ref().is_none_or(|b| stats.score > b.statistics.score) {
                best = Some(SplitCandidate {
                    variable,
                    rule,
                    statistics: stats,
                });
            }
        }
    }
    best
}
