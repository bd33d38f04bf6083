//! Gradient maps, covariate recovery and the K-means baseline.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans, silhouette_score, ClusterLabels};
use crate::data::{CovariateKind, SurvivalDataset};
use crate::error::{Error, Result};
use crate::profile::{
    assign_leaves, fit_profile_tree, heterogeneity_test, leaf_effects, selection_metric, DfRule, KDiagnostics,
    ProfileResult, ProfileTree, ProfileTreeOptions,
};
use crate::rng::derive_seed;
use crate::simgen::{Region, ScenarioSpec};

/// Pixel lattice of a gradient map: `count` points from `start` in steps
/// of `step`, the same on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn coordinate(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }
}

impl Default for GridAxis {
    fn default() -> Self {
        GridAxis {
            start: -1.5,
            step: 0.01,
            count: 301,
        }
    }
}

/// Signed evidence map over a covariate pair. Row `i` is the second
/// covariate at `axis.coordinate(i)`, column `j` the first.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientGrid {
    pub values: Array2<f64>,
    pub axis: GridAxis,
    pub pair: (usize, usize),
}

impl GradientGrid {
    /// Row-major CSV, six decimals, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 10);
        for row in self.values.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{:.6}", v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Plain PGM, `-1` black to `+1` white, top row is the largest second
    /// coordinate.
    pub fn to_pgm(&self) -> String {
        let (h, w) = self.values.dim();
        let mut out = format!("P2\n{} {}\n255\n", w, h);
        for i in (0..h).rev() {
            let cells: Vec<String> = (0..w)
                .map(|j| {
                    let v = self.values[[i, j]].clamp(-1.0, 1.0);
                    (((v + 1.0) / 2.0 * 255.0).round() as u8).to_string()
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        out
    }
}

/// Index of the patient nearest to `(a, b)` in the pair, first on ties.
fn nearest(points: &[(f64, f64)], a: f64, b: f64) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, &(x, y)) in points.iter().enumerate() {
        let d = (x - a) * (x - a) + (y - b) * (y - b);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Pixel value `±(1 - p)` of the leaf each pixel routes to, with HR and
/// log-rank p measured on `eval`. Covariates outside the pair come from the
/// eval patient nearest in the pair.
pub fn gradient_for_tree(
    tree: &ProfileTree,
    eval: &SurvivalDataset,
    pair: (usize, usize),
    axis: GridAxis,
) -> Result<GradientGrid> {
    let p = eval.p();
    if pair.0 >= p || pair.1 >= p || pair.0 == pair.1 {
        return Err(Error::invalid(format!("bad covariate pair {:?}", pair)));
    }
    if eval.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let x = eval.covariates();
    let leaf_ids = assign_leaves(tree, x)?;
    let effects = leaf_effects(eval, &leaf_ids, tree.leaf_count)?;
    let leaf_value: Vec<f64> = effects
        .iter()
        .map(|e| match (e.hazard_ratio, e.logrank_p) {
            (Some(hr), Some(pv)) if hr <= 1.0 => 1.0 - pv,
            (Some(_), Some(pv)) => -(1.0 - pv),
            _ => 0.0,
        })
        .collect();
    let points: Vec<(f64, f64)> = (0..eval.n()).map(|i| (x[[i, pair.0]], x[[i, pair.1]])).collect();
    let mut values = Array2::zeros((axis.count, axis.count));
    let mut row = vec![0.0; p];
    for i in 0..axis.count {
        let b = axis.coordinate(i);
        for j in 0..axis.count {
            let a = axis.coordinate(j);
            let k = nearest(&points, a, b);
            row.iter_mut().zip(x.row(k).iter()).for_each(|(r, v)| *r = *v);
            row[pair.0] = a;
            row[pair.1] = b;
            values[[i, j]] = leaf_value[tree.route(&row)];
        }
    }
    Ok(GradientGrid { values, axis, pair })
}

pub fn gradient_for_profile(profile: &ProfileResult, eval: &SurvivalDataset, pair: (usize, usize)) -> Result<GradientGrid> {
    gradient_for_tree(&profile.tree, eval, pair, GridAxis::default())
}

/// The generating model's regions: +1 positive, -1 negative, 0 neutral.
/// Covariates outside the pair are held at 0.
pub fn true_gradient(spec: &ScenarioSpec, pair: (usize, usize), axis: GridAxis) -> GradientGrid {
    let mut values = Array2::zeros((axis.count, axis.count));
    let mut x = vec![0.0; spec.p()];
    for i in 0..axis.count {
        for j in 0..axis.count {
            x[pair.0] = axis.coordinate(j);
            x[pair.1] = axis.coordinate(i);
            values[[i, j]] = match spec.true_region(&x) {
                Region::Positive => 1.0,
                Region::Negative => -1.0,
                Region::Neutral => 0.0,
            };
        }
    }
    GradientGrid { values, axis, pair }
}

/// Pixel-wise mean.
pub fn averaged_gradient(grids: &[GradientGrid]) -> Result<GradientGrid> {
    let first = grids.first().ok_or_else(|| Error::invalid("no gradient grids to average"))?;
    let mut sum = Array2::<f64>::zeros(first.values.dim());
    for g in grids {
        if g.values.dim() != first.values.dim() {
            return Err(Error::DimensionMismatch(format!(
                "grid shapes {:?} and {:?}",
                first.values.dim(),
                g.values.dim()
            )));
        }
        sum += &g.values;
    }
    sum.mapv_inplace(|v| v / grids.len() as f64);
    Ok(GradientGrid {
        values: sum,
        axis: first.axis,
        pair: first.pair,
    })
}

/// How often the target covariates appear in selected profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub method: String,
    pub replicates: usize,
    /// `(name, rate)` per target covariate.
    pub target_rates: Vec<(String, f64)>,
    /// Rate at which every target appears together.
    pub all_targets_rate: f64,
    /// Entry `c` is the share of profiles using exactly `c` covariates.
    pub covariate_count_distribution: Vec<f64>,
}

impl RecoveryReport {
    pub fn rate(&self, name: &str) -> Option<f64> {
        self.target_rates.iter().find(|(n, _)| n == name).map(|(_, r)| *r)
    }

    pub fn csv_header(targets: &[String], max_count: usize) -> String {
        let mut cols = vec!["method".to_string(), "replicates".to_string()];
        cols.extend(targets.iter().map(|t| format!("rate_{}", t)));
        cols.push("rate_all".into());
        cols.extend((0..=max_count).map(|c| format!("share_{}_covariates", c)));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.method.clone(), self.replicates.to_string()];
        cols.extend(self.target_rates.iter().map(|(_, r)| format!("{:.4}", r)));
        cols.push(format!("{:.4}", self.all_targets_rate));
        cols.extend(self.covariate_count_distribution.iter().map(|r| format!("{:.4}", r)));
        cols.join(",")
    }
}

/// Recovery rates from the covariate names each profile splits on.
pub fn recovery_from_sets(method: &str, used: &[Vec<String>], targets: &[&str], p: usize) -> Result<RecoveryReport> {
    if used.is_empty() {
        return Err(Error::invalid("no profiles to summarize"));
    }
    let m = used.len() as f64;
    let has = |set: &Vec<String>, t: &str| set.iter().any(|s| s == t);
    let target_rates = targets
        .iter()
        .map(|t| (t.to_string(), used.iter().filter(|s| has(s, t)).count() as f64 / m))
        .collect();
    let all_targets_rate = used.iter().filter(|s| targets.iter().all(|t| has(s, t))).count() as f64 / m;
    let mut dist = vec![0.0; p + 1];
    for s in used {
        let mut names = s.clone();
        names.sort();
        names.dedup();
        dist[names.len().min(p)] += 1.0 / m;
    }
    Ok(RecoveryReport {
        method: method.to_string(),
        replicates: used.len(),
        target_rates,
        all_targets_rate,
        covariate_count_distribution: dist,
    })
}

/// Recovery over selected profiles; a covariate appears when any internal
/// node splits on it.
pub fn covariate_recovery(method: &str, profiles: &[ProfileResult], targets: &[&str]) -> Result<RecoveryReport> {
    let p = profiles.first().map_or(0, |r| r.tree.schema.len());
    let used: Vec<Vec<String>> = profiles.iter().map(|r| r.variables_used()).collect();
    recovery_from_sets(method, &used, targets, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOptions {
    pub k_min: usize,
    pub k_max: usize,
    pub min_leaf_size: usize,
    #[serde(default)]
    pub df_rule: DfRule,
    pub seed: u64,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions {
            k_min: 2,
            k_max: 7,
            min_leaf_size: 120,
            df_rule: DfRule::default(),
            seed: 1,
        }
    }
}

/// Numeric design for Euclidean clustering: categoricals one-hot, then
/// every column z-scored (constant columns become 0).
pub fn standardized_design(data: &SurvivalDataset) -> Array2<f64> {
    let x = data.covariates();
    let n = data.n();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..data.p() {
        match data.schema().kind(j) {
            CovariateKind::Numeric => cols.push(x.column(j).to_vec()),
            CovariateKind::Categorical { levels } => {
                for lvl in 0..levels.len() {
                    cols.push(x.column(j).iter().map(|&v| f64::from(u8::from(v as usize == lvl))).collect());
                }
            }
        }
    }
    let mut out = Array2::zeros((n, cols.len()));
    for (c, col) in cols.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        for i in 0..n {
            out[[i, c]] = if sd > 0.0 { (col[i] - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Cluster count with the largest silhouette (smaller k on ties) and its
/// labels.
pub fn silhouette_kmeans(points: ArrayView2<f64>, k_min: usize, k_max: usize, seed: u64) -> Result<(ClusterLabels, Vec<(usize, f64)>)> {
    let mut best: Option<(f64, ClusterLabels)> = None;
    let mut scores = Vec::new();
    for k in k_min.max(2)..=k_max {
        let res = match kmeans(points, k, derive_seed(seed, k as u64)) {
            Ok(r) => r,
            Err(Error::TooManyClusters { .. }) => continue,
            Err(e) => return Err(e),
        };
        let s = silhouette_score(points, &res.labels)?;
        scores.push((k, s));
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, res.labels));
        }
    }
    let (_, labels) = best.ok_or_else(|| Error::invalid("no cluster count could be evaluated"))?;
    Ok((labels, scores))
}

/// K-means on standardized covariates, k by silhouette, then a profile
/// tree on the original covariates. Outcomes and treatment enter only the
/// leaf statistics.
pub fn kmeans_baseline(data: &SurvivalDataset, options: &BaselineOptions, p_star: f64) -> Result<ProfileResult> {
    if options.k_min > options.k_max || options.k_max >= data.n() {
        return Err(Error::Config("baseline k range must satisfy k_min <= k_max < n".into()));
    }
    let z = standardized_design(data);
    let (labels, _) = silhouette_kmeans(z.view(), options.k_min, options.k_max, options.seed)?;
    let tree = fit_profile_tree(
        data.covariates(),
        data.schema(),
        &labels,
        &ProfileTreeOptions {
            min_leaf_size: options.min_leaf_size,
            max_depth: None,
        },
    )?;
    let leaf_ids = assign_leaves(&tree, data.covariates())?;
    let test = heterogeneity_test(data, &leaf_ids, options.df_rule)?;
    let effects = leaf_effects(data, &leaf_ids, tree.leaf_count)?;
    let metric = selection_metric(test.p_leaf, p_star);
    Ok(ProfileResult {
        k: Some(labels.k),
        num_leaves: tree.leaf_count,
        p_leaf: test.p_leaf,
        p_star,
        metric,
        heterogeneous: metric > 0.0,
        leaf_effects: effects,
        leaf_ids,
        per_k: vec![KDiagnostics {
            k: labels.k,
            cluster_sizes: labels.sizes(),
            leaves: tree.leaf_count,
            p_leaf: test.p_leaf,
            statistic: test.statistic,
            df: test.df,
            variables: tree.variable_names_used(),
            diagnostic: test.diagnostic,
        }],
        tree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averaging() {
        let g = GradientGrid {
            values: Array2::from_elem((3, 3), 0.5),
            axis: GridAxis::default(),
            pair: (5, 6),
        };
        let mut h = g.clone();
        h.values.mapv_inplace(|v| -v);
        assert!(averaged_gradient(&[g.clone(), h]).unwrap().values.iter().all(|v| *v == 0.0));
        assert_eq!(averaged_gradient(&[g.clone(), g.clone()]).unwrap(), g);
        let mut bad = g.clone();
        bad.values = Array2::zeros((2, 3));
        assert!(averaged_gradient(&[g, bad]).is_err());
    }

    #[test]
    fn recovery_rates() {
        let used = vec![vec!["X6".to_string()], vec!["X6".to_string()]];
        let r = recovery_from_sets("m", &used, &["X6", "X7"], 10).unwrap();
        assert_eq!(r.rate("X6"), Some(1.0));
        assert_eq!(r.rate("X7"), Some(0.0));
        assert_eq!(r.all_targets_rate, 0.0);
        assert_eq!(r.covariate_count_distribution[1], 1.0);
    }

    #[test]
    fn axis_is_the_pixel_lattice() {
        let a = GridAxis::default();
        assert!((a.coordinate(300) - 1.5).abs() < 1e-12);
        assert!((a.coordinate(150)).abs() < 1e-12);
    }
}
