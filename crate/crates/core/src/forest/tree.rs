use ndarray::ArrayView1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ForestConfig;
use super::split::{best_node_split, sort_by_time_desc, NodeRows, SplitRule};
use crate::data::SurvivalDataset;
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        variable: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
    /// Terminal ids run 0.. in depth-first, left-first order.
    Terminal { id: usize, size: usize },
}

/// A grown tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTree {
    nodes: Vec<TreeNode>,
    terminal_count: usize,
}

impl SurvivalTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn terminal_count(&self) -> usize {
        self.terminal_count
    }

    /// Terminal id reached by a covariate row.
    pub fn route(&self, x: ArrayView1<f64>) -> usize {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                TreeNode::Internal {
                    variable,
                    rule,
                    left,
                    right,
                } => k = if rule.goes_left(x[*variable]) { *left } else { *right },
                TreeNode::Terminal { id, .. } => return *id,
            }
        }
    }

    /// Terminal id of every row of `data`.
    pub fn route_all(&self, data: &SurvivalDataset) -> Vec<u32> {
        let x = data.covariates();
        (0..data.n()).map(|i| self.route(x.row(i)) as u32).collect()
    }

    /// Largest number of internal nodes on a root-to-terminal path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], k: usize) -> usize {
            match &nodes[k] {
                TreeNode::Internal { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Terminal { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    /// In-bag sizes of the terminal nodes, indexed by terminal id.
    pub fn terminal_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.terminal_count];
        for node in &self.nodes {
            if let TreeNode::Terminal { id, size } = node {
                sizes[*id] = *size;
            }
        }
        sizes
    }
}

/// A tree together with its bootstrap multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct GrownTree {
    pub tree: SurvivalTree,
    /// Times each observation was drawn into the bootstrap sample.
    pub inbag: Vec<u32>,
}

/// Grows tree `tree_index` of a forest. The tree depends only on the data,
/// the config (including its seed) and `tree_index`.
pub fn grow_tree(data: &SurvivalDataset, config: &ForestConfig, tree_index: usize) -> GrownTree {
    let n = data.n();
    let mut rng = stream_rng(config.seed, tree_index as u64);
    let mut inbag = vec![0u32; n];
    for _ in 0..n {
        inbag[rng.random_range(0..n)] += 1;
    }
    let mut rows: Vec<usize> = Vec::with_capacity(n);
    for (i, &c) in inbag.iter().enumerate() {
        for _ in 0..c {
            rows.push(i);
        }
    }
    sort_by_time_desc(data, &mut rows);
    let mut builder = Builder {
        data,
        config,
        rng,
        nodes: Vec::new(),
        terminals: 0,
    };
    builder.build(rows, 0);
    GrownTree {
        tree: SurvivalTree {
            nodes: builder.nodes,
            terminal_count: builder.terminals,
        },
        inbag,
    }
}

struct Builder<'a> {
    data: &'a SurvivalDataset,
    config: &'a ForestConfig,
    rng: crate::rng::StreamRng,
    nodes: Vec<TreeNode>,
    terminals: usize,
}

impl Builder<'_> {
    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let k = self.nodes.len();
        let split = if depth < self.config.nodedepth {
            let node = NodeRows::new(self.data, &rows);
            best_node_split(&node, self.config, &mut self.rng)
        } else {
            None
        };
        let Some(split) = split else {
            self.nodes.push(TreeNode::Terminal {
                id: self.terminals,
                size: rows.len(),
            });
            self.terminals += 1;
            return k;
        };
        let x = self.data.covariates();
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| split.rule.goes_left(x[[i, split.variable]]));
        drop(rows);
        self.nodes.push(TreeNode::Internal {
            variable: split.variable,
            rule: split.rule,
            left: 0,
            right: 0,
        });
        let l = self.build(left_rows, depth + 1);
        let r = self.build(right_rows, depth + 1);
        if let TreeNode::Internal { left, right, .. } = &mut self.nodes[k] {
            *left = l;
            *right = r;
        }
        k
    }
}
