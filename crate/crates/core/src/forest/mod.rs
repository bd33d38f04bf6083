//! Treatment-interaction survival forest.

mod config;
mod proximity;
mod split;
mod tree;

pub use config::{ForestConfig, InteractionScore, SplitRuleParams};
pub use proximity::ProximityMatrix;
pub use split::{
    best_split, candidate_splits, evaluate_split, split_statistics, SplitCandidate, SplitRule, SplitStatistics,
};
pub use tree::{grow_tree, GrownTree, SurvivalTree, TreeNode};

use ndarray::Array2;
use rayon::prelude::*;

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};

/// Terminal-node membership of every observation in every tree.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    /// `n x ntree` terminal ids.
    pub terminal: Array2<u32>,
    /// `n x ntree` bootstrap multiplicities.
    pub inbag: Array2<u32>,
}

impl MembershipMatrix {
    pub fn n(&self) -> usize {
        self.terminal.nrows()
    }

    pub fn ntree(&self) -> usize {
        self.terminal.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub config: ForestConfig,
    pub trees: Vec<SurvivalTree>,
    pub membership: MembershipMatrix,
}

impl Forest {
    pub fn proximity(&self) -> ProximityMatrix {
        proximity_from_membership(&self.membership)
    }
}

pub(crate) fn check_trainable(data: &SurvivalDataset, config: &ForestConfig) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if data.event_count() == 0 {
        return Err(Error::NoEvents);
    }
    let (control, treated) = data.arms();
    if control.is_empty() || treated.is_empty() {
        return Err(Error::invalid("both treatment arms must be present"));
    }
    config.validate(data.p())
}

/// Grows `config.ntree` trees. Output depends only on the data and config,
/// not on the number of threads.
pub fn train_forest(data: &SurvivalDataset, config: &ForestConfig) -> Result<Forest> {
    check_trainable(data, config)?;
    let grown: Vec<(GrownTree, Vec<u32>)> = (0..config.ntree)
        .into_par_iter()
        .map(|t| {
            let g = grow_tree(data, config, t);
            let ids = g.tree.route_all(data);
            (g, ids)
        })
        .collect();
    let n = data.n();
    let mut terminal = Array2::zeros((n, config.ntree));
    let mut inbag = Array2::zeros((n, config.ntree));
    let mut trees = Vec::with_capacity(config.ntree);
    for (t, (g, ids)) in grown.into_iter().enumerate() {
        for i in 0..n {
            terminal[[i, t]] = ids[i];
            inbag[[i, t]] = g.inbag[i];
        }
        trees.push(g.tree);
    }
    Ok(Forest {
        config: config.clone(),
        trees,
        membership: MembershipMatrix { terminal, inbag },
    })
}

pub fn proximity_from_membership(m: &MembershipMatrix) -> ProximityMatrix {
    let mut p = ProximityMatrix::empty(m.n());
    for t in 0..m.ntree() {
        let col: Vec<u32> = m.terminal.column(t).to_vec();
        p.add_tree(&col);
    }
    p
}
