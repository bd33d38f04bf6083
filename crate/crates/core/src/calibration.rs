//! Thresholds for declaring heterogeneity.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationSource {
    SimulationPooled,
    Permutation,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub p_star: f64,
    pub alpha: f64,
    pub sample_count: usize,
    pub source: CalibrationSource,
    /// Statistic values by group, for ECDF export.
    pub groups: Vec<(String, Vec<f64>)>,
}

impl CalibrationResult {
    pub fn fixed(p_star: f64) -> Self {
        CalibrationResult {
            p_star,
            alpha: 0.0,
            sample_count: 0,
            source: CalibrationSource::Fixed,
            groups: Vec::new(),
        }
    }

    pub fn ecdf_csv(&self) -> String {
        ecdf_csv(&self.groups)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// The `ceil(alpha * m)`-th smallest value.
pub fn empirical_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("empirical quantile of an empty list"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", alpha)));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN in calibration values"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    // tolerance keeps e.g. 0.07 * 100 at rank 7
    let rank = ((alpha * m as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(v[rank.min(m) - 1])
}

/// Pools statistics from the two homogeneous scenarios.
pub fn calibrate_by_simulation(null_values: &[f64], global_values: &[f64], alpha: f64) -> Result<CalibrationResult> {
    if null_values.is_empty() || global_values.is_empty() {
        return Err(Error::invalid("both homogeneous scenarios need at least one value"));
    }
    let pooled: Vec<f64> = null_values.iter().chain(global_values).copied().collect();
    Ok(CalibrationResult {
        p_star: empirical_quantile(&pooled, alpha)?,
        alpha,
        sample_count: pooled.len(),
        source: CalibrationSource::SimulationPooled,
        groups: vec![
            ("null".to_string(), null_values.to_vec()),
            ("global".to_string(), global_values.to_vec()),
        ],
    })
}

/// What a null permutation shuffles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationTarget {
    /// Covariate rows move as a block against fixed (time, event, treatment).
    #[default]
    Covariates,
    /// Treatment labels are shuffled within the sample.
    Treatment,
}

pub fn permute_for_null(data: &SurvivalDataset, rng: &mut StreamRng) -> Result<SurvivalDataset> {
    permute_with(data, PermutationTarget::Covariates, rng)
}

pub fn permute_with(data: &SurvivalDataset, target: PermutationTarget, rng: &mut StreamRng) -> Result<SurvivalDataset> {
    let n = data.n();
    if n < 2 {
        return Err(Error::invalid("permutation needs at least two rows"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    apply_permutation(data, &perm, target)
}

/// Applies `perm` (row `i` takes the covariates or treatment of `perm[i]`).
pub fn apply_permutation(data: &SurvivalDataset, perm: &[usize], target: PermutationTarget) -> Result<SurvivalDataset> {
    let n = data.n();
    let mut check = perm.to_vec();
    check.sort_unstable();
    if perm.len() != n || check.iter().enumerate().any(|(i, &v)| i != v) {
        return Err(Error::invalid("not a permutation of the rows"));
    }
    match target {
        PermutationTarget::Covariates => {
            let x = data.covariates().select(ndarray::Axis(0), perm);
            data.with_covariates(x)
        }
        PermutationTarget::Treatment => {
            let w: Vec<u8> = perm.iter().map(|&j| data.treatments()[j]).collect();
            data.with_outcomes(data.times().to_vec(), data.events().to_vec(), w)
        }
    }
}

/// Permutation calibration: `statistic` is evaluated on `n_perm` permuted
/// copies (permutation `i` uses stream `i`) and `p*` is their
/// `alpha`-quantile.
pub fn calibrate_by_permutation<F>(
    data: &SurvivalDataset,
    statistic: F,
    n_perm: usize,
    alpha: f64,
    seed: u64,
    target: PermutationTarget,
) -> Result<CalibrationResult>
where
    F: Fn(&SurvivalDataset) -> Result<f64> + Sync,
{
    if n_perm < 20 {
        return Err(Error::Config(format!("at least 20 permutations are required, got {}", n_perm)));
    }
    let perm_seed = derive_seed(seed, 0x5045524d);
    let values = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(perm_seed, i as u64);
            let permuted = permute_with(data, target, &mut rng)?;
            statistic(&permuted)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CalibrationResult {
        p_star: empirical_quantile(&values, alpha)?,
        alpha,
        sample_count: values.len(),
        source: CalibrationSource::Permutation,
        groups: vec![("permutation".to_string(), values)],
    })
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("KS distance needs two non-empty samples"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < x.len() && j < y.len() {
        let v = if x[i] <= y[j] { x[i] } else { y[j] };
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / x.len() as f64 - j as f64 / y.len() as f64).abs());
    }
    Ok(d)
}

/// Distance between a sample's ECDF and the Uniform(0, 1) CDF.
pub fn ks_uniform(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("KS distance of an empty sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = x.clamp(0.0, 1.0);
        d = d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m);
    }
    Ok(d)
}

/// Long-format CSV `group,value,ecdf` with values sorted per group.
pub fn ecdf_csv(groups: &[(String, Vec<f64>)]) -> String {
    let mut out = String::from("group,value,ecdf\n");
    for (name, values) in groups {
        let mut v = values.clone();
        v.sort_by(f64::total_cmp);
        let m = v.len() as f64;
        for (i, x) in v.iter().enumerate() {
            out.push_str(&format!("{},{:e},{:.6}\n", name, x, (i + 1) as f64 / m));
        }
    }
    out
}

/// Runs `statistic` on `replicates` datasets drawn by `generate(seed_r)`,
/// where replicate `r` uses `derive_seed(seed, r)`.
pub fn simulate_statistics<G, F>(replicates: usize, seed: u64, generate: G, statistic: F) -> Result<Vec<f64>>
where
    G: Fn(u64) -> Result<SurvivalDataset> + Sync,
    F: Fn(&SurvivalDataset) -> Result<f64> + Sync,
{
    (0..replicates)
        .into_par_iter()
        .map(|r| statistic(&generate(derive_seed(seed, r as u64))?))
        .collect()
}
