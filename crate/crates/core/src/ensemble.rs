//! Forests over a hyperparameter grid, fused into one proximity.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::forest::{check_trainable, grow_tree, ForestConfig, InteractionScore, ProximityMatrix, SplitRuleParams};

/// Value lists whose Cartesian product defines the dense forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub mtry: Vec<usize>,
    pub nodedepth: Vec<usize>,
    pub nsplit: Vec<usize>,
    pub nodesize: Vec<usize>,
    /// ω1 values.
    pub weight: Vec<f64>,
    /// Trees per configuration.
    pub ntree: usize,
    /// ω2.
    pub den: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub interaction: InteractionScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xvar_weights: Option<Vec<f64>>,
}

fn default_seed() -> u64 {
    1
}

const WEIGHTS: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

impl ParamGrid {
    /// Grid used for the colorectal case studies (216 configurations).
    pub fn case_study() -> Self {
        ParamGrid {
            mtry: vec![2, 3],
            nodedepth: vec![2, 3],
            nsplit: vec![0, 20, 50],
            nodesize: vec![50, 70, 100],
            weight: WEIGHTS.to_vec(),
            ntree: 500,
            den: 3.5,
            seed: 1,
            interaction: InteractionScore::Absolute,
            xvar_weights: None,
        }
    }

    /// Grid used for the simulation studies (324 configurations).
    pub fn simulation() -> Self {
        ParamGrid {
            mtry: vec![6, 7],
            nodedepth: vec![2, 3, 4],
            nsplit: vec![0, 20, 50],
            nodesize: vec![50, 70, 120],
            weight: WEIGHTS.to_vec(),
            ntree: 1500,
            den: 3.5,
            seed: 1,
            interaction: InteractionScore::Absolute,
            xvar_weights: None,
        }
    }

    /// Reduced grid sized for a single workstation core.
    pub fn desk() -> Self {
        ParamGrid {
            mtry: vec![6, 7],
            nodedepth: vec![3],
            nsplit: vec![20],
            nodesize: vec![70, 120],
            weight: vec![0.2, 0.5],
            ntree: 25,
            den: 3.5,
            seed: 1,
            interaction: InteractionScore::Absolute,
            xvar_weights: None,
        }
    }

    pub fn config_count(&self) -> usize {
        self.mtry.len() * self.nodedepth.len() * self.nsplit.len() * self.nodesize.len() * self.weight.len()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Cartesian product in the order mtry, nodedepth, nsplit, nodesize,
/// weight (last varies fastest). Configuration `i` gets seed `seed + i`.
pub fn expand_grid(grid: &ParamGrid) -> Result<Vec<ForestConfig>> {
    for (name, len) in [
        ("mtry", grid.mtry.len()),
        ("nodedepth", grid.nodedepth.len()),
        ("nsplit", grid.nsplit.len()),
        ("nodesize", grid.nodesize.len()),
        ("weight", grid.weight.len()),
    ] {
        if len == 0 {
            return Err(Error::Config(format!("grid parameter {} has no values", name)));
        }
    }
    let mut out = Vec::with_capacity(grid.config_count());
    for &mtry in &grid.mtry {
        for &nodedepth in &grid.nodedepth {
            for &nsplit in &grid.nsplit {
                for &nodesize in &grid.nodesize {
                    for &omega1 in &grid.weight {
                        let split_params = SplitRuleParams {
                            omega1,
                            omega2: grid.den,
                            interaction: grid.interaction,
                        };
                        split_params.validate()?;
                        out.push(ForestConfig {
                            ntree: grid.ntree,
                            mtry,
                            nodesize,
                            nodedepth,
                            nsplit,
                            split_params,
                            xvar_weights: grid.xvar_weights.clone(),
                            seed: grid.seed.wrapping_add(out.len() as u64),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// The pooled proximity of every tree of every configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedProximity {
    pub proximity: ProximityMatrix,
    pub config_count: usize,
}

impl FusedProximity {
    pub fn values(&self) -> Array2<f64> {
        self.proximity.to_dense()
    }

    pub fn total_trees(&self) -> u64 {
        self.proximity.tree_count()
    }

    pub fn n(&self) -> usize {
        self.proximity.n()
    }
}

/// Pools per-configuration proximities: each entry becomes the tree-count
/// weighted mean of the parts.
pub fn fuse_proximity(parts: &[ProximityMatrix]) -> Result<FusedProximity> {
    let first = parts.first().ok_or_else(|| Error::invalid("no proximities to fuse"))?;
    let mut pooled = ProximityMatrix::empty(first.n());
    for p in parts {
        pooled.merge(p)?;
    }
    Ok(FusedProximity {
        proximity: pooled,
        config_count: parts.len(),
    })
}

/// Trains every configuration of the grid and fuses the proximities
/// without keeping any membership matrix.
pub fn dense_train(data: &SurvivalDataset, grid: &ParamGrid) -> Result<FusedProximity> {
    let configs = expand_grid(grid)?;
    for c in &configs {
        check_trainable(data, c)?;
    }
    dense_train_configs(data, &configs)
}

pub fn dense_train_configs(data: &SurvivalDataset, configs: &[ForestConfig]) -> Result<FusedProximity> {
    if configs.is_empty() {
        return Err(Error::invalid("no forest configurations"));
    }
    let n = data.n();
    let jobs: Vec<(usize, usize)> = configs
        .iter()
        .enumerate()
        .flat_map(|(c, cfg)| (0..cfg.ntree).map(move |t| (c, t)))
        .collect();
    // co-occurrence counts add, so the reduction order does not matter
    let pooled = jobs
        .par_iter()
        .fold(
            || ProximityMatrix::empty(n),
            |mut acc, &(c, t)| {
                let grown = grow_tree(data, &configs[c], t);
                acc.add_tree(&grown.tree.route_all(data));
                acc
            },
        )
        .reduce(
            || ProximityMatrix::empty(n),
            |mut a, b| {
                a.merge(&b).expect("equal sizes");
                a
            },
        );
    Ok(FusedProximity {
        proximity: pooled,
        config_count: configs.len(),
    })
}
