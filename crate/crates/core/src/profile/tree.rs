use std::collections::BTreeSet;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterLabels;
use crate::data::{CovariateKind, Schema};
use crate::error::{Error, Result};
use crate::forest::SplitRule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum ProfileNode {
    Internal {
        variable: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
        n: usize,
    },
    Leaf {
        id: usize,
        n: usize,
        class_counts: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileTreeOptions {
    pub min_leaf_size: usize,
    /// Limits the number of splits on any path; `None` grows until no
    /// impurity-reducing split remains.
    #[serde(default)]
    pub max_depth: Option<usize>,
}

impl Default for ProfileTreeOptions {
    fn default() -> Self {
        ProfileTreeOptions {
            min_leaf_size: 120,
            max_depth: None,
        }
    }
}

/// Classification tree whose leaves are the candidate subgroups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTree {
    pub schema: Schema,
    pub nodes: Vec<ProfileNode>,
    pub leaf_count: usize,
    pub min_leaf_size: usize,
}

impl ProfileTree {
    pub fn single_leaf(schema: Schema, n: usize, min_leaf_size: usize) -> Self {
        ProfileTree {
            schema,
            nodes: vec![ProfileNode::Leaf {
                id: 0,
                n,
                class_counts: vec![n],
            }],
            leaf_count: 1,
            min_leaf_size,
        }
    }

    pub fn route(&self, x: &[f64]) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                ProfileNode::Internal {
                    variable,
                    rule,
                    left,
                    right,
                    ..
                } => k = if rule.goes_left(x[*variable]) { *left } else { *right },
                ProfileNode::Leaf { id, .. } => return *id,
            }
        }
    }

    /// Covariates used by any internal node.
    pub fn variables_used(&self) -> BTreeSet<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                ProfileNode::Internal { variable, .. } => Some(*variable),
                ProfileNode::Leaf { .. } => None,
            })
            .collect()
    }

    pub fn variable_names_used(&self) -> Vec<String> {
        self.variables_used().into_iter().map(|j| self.schema.name(j).to_string()).collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[ProfileNode], k: usize) -> usize {
            match &nodes[k] {
                ProfileNode::Internal { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                ProfileNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    /// Majority training class of each leaf (lowest class on ties).
    pub fn leaf_classes(&self) -> Vec<usize> {
        let mut out = vec![0; self.leaf_count];
        for node in &self.nodes {
            if let ProfileNode::Leaf { id, class_counts, .. } = node {
                out[*id] = argmax_first(class_counts);
            }
        }
        out
    }

    /// Path conditions of every leaf, indexed by leaf id.
    pub fn leaf_paths(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.leaf_count];
        let mut stack = vec![(0usize, Vec::<String>::new())];
        while let Some((k, path)) = stack.pop() {
            match &self.nodes[k] {
                ProfileNode::Internal {
                    variable,
                    rule,
                    left,
                    right,
                    ..
                } => {
                    let name = self.schema.name(*variable);
                    let kind = self.schema.kind(*variable);
                    let mut l = path.clone();
                    l.push(rule.describe(name, kind, true));
                    let mut r = path;
                    r.push(rule.describe(name, kind, false));
                    stack.push((*right, r));
                    stack.push((*left, l));
                }
                ProfileNode::Leaf { id, .. } => out[*id] = path,
            }
        }
        out
    }
}

fn argmax_first(v: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in v.iter().enumerate() {
        if c > v[best] {
            best = i;
        }
    }
    best
}

/// Leaf id of every covariate row.
pub fn assign_leaves(tree: &ProfileTree, covariates: ArrayView2<f64>) -> Result<Vec<usize>> {
    if covariates.ncols() != tree.schema.len() {
        return Err(Error::DimensionMismatch(format!(
            "profile tree has {} covariates, rows have {}",
            tree.schema.len(),
            covariates.ncols()
        )));
    }
    let mut out = Vec::with_capacity(covariates.nrows());
    for row in covariates.rows() {
        tree.schema.validate_row(row)?;
        let x: Vec<f64> = row.to_vec();
        out.push(tree.route(&x));
    }
    Ok(out)
}

fn gini_total(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    nf - sq / nf
}

/// Greedy Gini CART. A split is taken only if both children keep
/// `min_leaf_size` rows and the total impurity strictly drops.
pub fn fit_profile_tree(
    covariates: ArrayView2<f64>,
    schema: &Schema,
    labels: &ClusterLabels,
    options: &ProfileTreeOptions,
) -> Result<ProfileTree> {
    let n = covariates.nrows();
    if labels.labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{} rows, {} labels", n, labels.labels.len())));
    }
    if covariates.ncols() != schema.len() {
        return Err(Error::DimensionMismatch("covariates do not match schema".into()));
    }
    if labels.labels.iter().any(|&l| l >= labels.k) {
        return Err(Error::invalid("cluster label out of range"));
    }
    if options.min_leaf_size == 0 {
        return Err(Error::Config("minimum leaf size must be positive".into()));
    }
    let mut b = CartBuilder {
        x: covariates,
        schema,
        y: &labels.labels,
        k: labels.k,
        options,
        nodes: Vec::new(),
        leaves: 0,
    };
    b.build((0..n).collect(), 0);
    Ok(ProfileTree {
        schema: schema.clone(),
        nodes: b.nodes,
        leaf_count: b.leaves,
        min_leaf_size: options.min_leaf_size,
    })
}

struct CartBuilder<'a> {
    x: ArrayView2<'a, f64>,
    schema: &'a Schema,
    y: &'a [usize],
    k: usize,
    options: &'a ProfileTreeOptions,
    nodes: Vec<ProfileNode>,
    leaves: usize,
}

impl CartBuilder<'_> {
    fn counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &i in rows {
            c[self.y[i]] += 1;
        }
        c
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let k = self.nodes.len();
        let counts = self.counts(&rows);
        let depth_ok = self.options.max_depth.is_none_or(|d| depth < d);
        let split = if depth_ok { self.best(&rows, &counts) } else { None };
        let Some((variable, rule)) = split else {
            self.nodes.push(ProfileNode::Leaf {
                id: self.leaves,
                n: rows.len(),
                class_counts: counts,
            });
            self.leaves += 1;
            return k;
        };
        let n = rows.len();
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| rule.goes_left(self.x[[i, variable]]));
        self.nodes.push(ProfileNode::Internal {
            variable,
            rule,
            left: 0,
            right: 0,
            n,
        });
        let li = self.build(l, depth + 1);
        let ri = self.build(r, depth + 1);
        if let ProfileNode::Internal { left, right, .. } = &mut self.nodes[k] {
            *left = li;
            *right = ri;
        }
        k
    }

    fn best(&self, rows: &[usize], counts: &[usize]) -> Option<(usize, SplitRule)> {
        let m = self.options.min_leaf_size;
        let n = rows.len();
        if n < 2 * m {
            return None;
        }
        let parent = gini_total(counts, n);
        let mut best: Option<(f64, usize, SplitRule)> = None;
        let mut consider = |imp: f64, var: usize, rule: SplitRule| {
            if imp < parent - 1e-12 && best.as_ref().is_none_or(|b| imp < b.0) {
                best = Some((imp, var, rule));
            }
        };
        for var in 0..self.schema.len() {
            match self.schema.kind(var) {
                CovariateKind::Numeric => {
                    let mut order: Vec<usize> = rows.to_vec();
                    order.sort_by(|&a, &b| self.x[[a, var]].total_cmp(&self.x[[b, var]]).then(a.cmp(&b)));
                    let mut left = vec![0usize; self.k];
                    for pos in 0..n - 1 {
                        left[self.y[order[pos]]] += 1;
                        let nl = pos + 1;
                        let (a, b) = (self.x[[order[pos], var]], self.x[[order[pos + 1], var]]);
                        if a == b || nl < m || n - nl < m {
                            continue;
                        }
                        let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                        let imp = gini_total(&left, nl) + gini_total(&right, n - nl);
                        consider(imp, var, SplitRule::Threshold { value: 0.5 * (a + b) });
                    }
                }
                CovariateKind::Categorical { .. } => {
                    let mut per_level: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
                    for &i in rows {
                        per_level.entry(self.x[[i, var]] as u32).or_insert_with(|| vec![0; self.k])[self.y[i]] += 1;
                    }
                    let levels: Vec<(u32, Vec<usize>)> = per_level.into_iter().collect();
                    if levels.len() < 2 || levels.len() > 20 {
                        continue;
                    }
                    for subset in 0u64..(1u64 << (levels.len() - 1)) - 1 {
                        let mut mask = 1u64 << levels[0].0;
                        let mut left = levels[0].1.clone();
                        for (idx, (lvl, c)) in levels[1..].iter().enumerate() {
                            if subset & (1 << idx) != 0 {
                                mask |= 1u64 << lvl;
                                left.iter_mut().zip(c).for_each(|(a, b)| *a += b);
                            }
                        }
                        let nl: usize = left.iter().sum();
                        if nl < m || n - nl < m {
                            continue;
                        }
                        let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                        let imp = gini_total(&left, nl) + gini_total(&right, n - nl);
                        consider(imp, var, SplitRule::Levels { left: mask });
                    }
                }
            }
        }
        best.map(|(_, v, r)| (v, r))
    }
}
