//! Decision-tree profiles of clusters and the heterogeneity test.

mod effects;
mod select;
mod tree;

pub use effects::{
    group_effect, heterogeneity_test, leaf_effects, leaf_interaction_design, selection_metric, DfRule,
    HeterogeneityTest, LeafEffect,
};
pub use select::{
    scan_profiles, scan_with, select_best_profile, select_from_scan, KDiagnostics, ProfileResult, ProfileScan,
    SelectionOptions,
};
pub use tree::{assign_leaves, fit_profile_tree, ProfileNode, ProfileTree, ProfileTreeOptions};
