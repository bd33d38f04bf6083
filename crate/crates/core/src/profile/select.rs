use std::fmt::Write as _;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::effects::{heterogeneity_test, leaf_effects, selection_metric, DfRule, LeafEffect};
use super::tree::{assign_leaves, fit_profile_tree, ProfileNode, ProfileTree, ProfileTreeOptions};
use crate::cluster::{ClusterLabels, SpectralDecomposition};
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::linalg::EigenMethod;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    pub k_min: usize,
    pub k_max: usize,
    pub min_leaf_size: usize,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default)]
    pub df_rule: DfRule,
    #[serde(default)]
    pub eigen: EigenMethod,
    pub seed: u64,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            k_min: 2,
            k_max: 7,
            min_leaf_size: 120,
            max_depth: None,
            df_rule: DfRule::default(),
            eigen: EigenMethod::default(),
            seed: 1,
        }
    }
}

impl SelectionOptions {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k_min < 2 || self.k_min > self.k_max || self.k_max >= n {
            return Err(Error::Config(format!(
                "k range [{}, {}] must satisfy 2 <= k_min <= k_max < n = {}",
                self.k_min, self.k_max, n
            )));
        }
        if self.min_leaf_size == 0 {
            return Err(Error::Config("minimum leaf size must be positive".into()));
        }
        Ok(())
    }

    fn tree_options(&self) -> ProfileTreeOptions {
        ProfileTreeOptions {
            min_leaf_size: self.min_leaf_size,
            max_depth: self.max_depth,
        }
    }
}

/// Outcome of one cluster count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KDiagnostics {
    pub k: usize,
    pub cluster_sizes: Vec<usize>,
    pub leaves: usize,
    pub p_leaf: f64,
    pub statistic: f64,
    pub df: u32,
    pub variables: Vec<String>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
struct KCandidate {
    tree: ProfileTree,
    leaf_ids: Vec<usize>,
}

/// Every cluster count's profile and `p_leaf`. Both the decision rule and
/// calibration read their statistic from here.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileScan {
    pub per_k: Vec<KDiagnostics>,
    candidates: Vec<Option<KCandidate>>,
}

impl ProfileScan {
    /// Smallest `p_leaf` over the k range; 1 when nothing could be tested.
    pub fn min_p_leaf(&self) -> f64 {
        self.per_k.iter().map(|d| d.p_leaf).fold(1.0, f64::min)
    }
}

/// Builds profiles for every k in the range from a similarity matrix.
pub fn scan_profiles(data: &SurvivalDataset, similarity: ArrayView2<f64>, options: &SelectionOptions) -> Result<ProfileScan> {
    let n = data.n();
    if similarity.nrows() != n || similarity.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "similarity is {}x{}, dataset has {} rows",
            similarity.nrows(),
            similarity.ncols(),
            n
        )));
    }
    options.validate(n)?;
    let spectral = SpectralDecomposition::new(similarity, options.eigen)?;
    scan_with(data, options, |k| spectral.cluster(k, derive_seed(options.seed, k as u64)))
}

/// Like [`scan_profiles`] with cluster labels supplied per k.
pub fn scan_with<F>(data: &SurvivalDataset, options: &SelectionOptions, mut labels_for: F) -> Result<ProfileScan>
where
    F: FnMut(usize) -> Result<ClusterLabels>,
{
    options.validate(data.n())?;
    let mut per_k = Vec::new();
    let mut candidates = Vec::new();
    for k in options.k_min..=options.k_max {
        let labels = match labels_for(k) {
            Ok(l) => l,
            Err(Error::TooManyClusters { .. }) => {
                per_k.push(KDiagnostics {
                    k,
                    cluster_sizes: Vec::new(),
                    leaves: 0,
                    p_leaf: 1.0,
                    statistic: 0.0,
                    df: 0,
                    variables: Vec::new(),
                    diagnostic: Some("fewer distinct embedded points than clusters".into()),
                });
                candidates.push(None);
                continue;
            }
            Err(e) => return Err(e),
        };
        let tree = fit_profile_tree(data.covariates(), data.schema(), &labels, &options.tree_options())?;
        let leaf_ids = assign_leaves(&tree, data.covariates())?;
        let test = heterogeneity_test(data, &leaf_ids, options.df_rule)?;
        per_k.push(KDiagnostics {
            k,
            cluster_sizes: labels.sizes(),
            leaves: tree.leaf_count,
            p_leaf: test.p_leaf,
            statistic: test.statistic,
            df: test.df,
            variables: tree.variable_names_used(),
            diagnostic: test.diagnostic,
        });
        candidates.push(Some(KCandidate { tree, leaf_ids }));
    }
    Ok(ProfileScan { per_k, candidates })
}

/// The selected profile together with its evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileResult {
    /// Cluster count behind the profile; `None` for the homogeneous result.
    pub k: Option<usize>,
    pub tree: ProfileTree,
    pub num_leaves: usize,
    pub p_leaf: f64,
    pub p_star: f64,
    pub metric: f64,
    pub heterogeneous: bool,
    pub leaf_effects: Vec<LeafEffect>,
    pub leaf_ids: Vec<usize>,
    pub per_k: Vec<KDiagnostics>,
}

/// Picks the k with the smallest nonzero metric (smaller k on ties), or a
/// single-leaf profile when every metric is zero.
pub fn select_from_scan(data: &SurvivalDataset, scan: &ProfileScan, p_star: f64) -> Result<ProfileResult> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, d) in scan.per_k.iter().enumerate() {
        let m = selection_metric(d.p_leaf, p_star);
        if m > 0.0 && best.is_none_or(|(_, b)| m < b) {
            best = Some((idx, m));
        }
    }
    match best {
        Some((idx, metric)) => {
            let cand = scan.candidates[idx].as_ref().expect("tested k has a profile");
            let effects = leaf_effects(data, &cand.leaf_ids, cand.tree.leaf_count)?;
            Ok(ProfileResult {
                k: Some(scan.per_k[idx].k),
                tree: cand.tree.clone(),
                num_leaves: cand.tree.leaf_count,
                p_leaf: scan.per_k[idx].p_leaf,
                p_star,
                metric,
                heterogeneous: true,
                leaf_effects: effects,
                leaf_ids: cand.leaf_ids.clone(),
                per_k: scan.per_k.clone(),
            })
        }
        None => {
            let min_leaf = scan.candidates.iter().flatten().map(|c| c.tree.min_leaf_size).next().unwrap_or(1);
            let tree = ProfileTree::single_leaf(data.schema().clone(), data.n(), min_leaf);
            let leaf_ids = vec![0; data.n()];
            let effects = leaf_effects(data, &leaf_ids, 1)?;
            Ok(ProfileResult {
                k: None,
                tree,
                num_leaves: 1,
                p_leaf: 1.0,
                p_star,
                metric: 0.0,
                heterogeneous: false,
                leaf_effects: effects,
                leaf_ids,
                per_k: scan.per_k.clone(),
            })
        }
    }
}

/// Spectral clustering, profiling and selection over the k range.
pub fn select_best_profile(
    data: &SurvivalDataset,
    similarity: &ndarray::Array2<f64>,
    options: &SelectionOptions,
    p_star: f64,
) -> Result<ProfileResult> {
    if !(0.0..=1.0).contains(&p_star) {
        return Err(Error::Config(format!("p* must lie in [0, 1], got {}", p_star)));
    }
    let scan = scan_profiles(data, similarity.view(), options)?;
    select_from_scan(data, &scan, p_star)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) => format!("{:.*}", digits, x),
        None => "NA".to_string(),
    }
}

fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        format!("{:.2e}", p)
    } else {
        format!("{:.4}", p)
    }
}

impl ProfileResult {
    /// Indented tree, one node per line.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let verdict = if self.heterogeneous { "heterogeneous" } else { "homogeneous" };
        let _ = writeln!(
            out,
            "verdict: {} (k = {}, leaves = {}, p_leaf = {}, p* = {})",
            verdict,
            self.k.map_or("-".to_string(), |k| k.to_string()),
            self.num_leaves,
            fmt_p(self.p_leaf),
            fmt_p(self.p_star)
        );
        self.render_node(0, 0, "all patients", &mut out);
        out
    }

    fn render_node(&self, k: usize, indent: usize, label: &str, out: &mut String) {
        let pad = "  ".repeat(indent);
        match &self.tree.nodes[k] {
            ProfileNode::Internal {
                variable,
                rule,
                left,
                right,
                n,
            } => {
                let _ = writeln!(out, "{}{} (n = {})", pad, label, n);
                let name = self.tree.schema.name(*variable);
                let kind = self.tree.schema.kind(*variable);
                self.render_node(*left, indent + 1, &rule.describe(name, kind, true), out);
                self.render_node(*right, indent + 1, &rule.describe(name, kind, false), out);
            }
            ProfileNode::Leaf { id, n, .. } => {
                let e = &self.leaf_effects[*id];
                let _ = writeln!(
                    out,
                    "{}{} (n = {}) leaf {}: HR = {}, log-rank p = {}, control = {}, treated = {}",
                    pad,
                    label,
                    n,
                    id,
                    fmt_opt(e.hazard_ratio, 3),
                    e.logrank_p.map_or("NA".to_string(), fmt_p),
                    e.n_control,
                    e.n_treated
                );
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn variables_used(&self) -> Vec<String> {
        self.tree.variable_names_used()
    }
}
