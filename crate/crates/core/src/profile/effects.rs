use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::survival::{cox_fit, likelihood_ratio_test, logrank_test};

/// Treatment effect within one leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafEffect {
    pub leaf: usize,
    pub n_control: usize,
    pub n_treated: usize,
    pub events_control: usize,
    pub events_treated: usize,
    /// Treated vs control; `None` when a univariate Cox fit is not possible.
    pub hazard_ratio: Option<f64>,
    pub logrank_p: Option<f64>,
}

impl LeafEffect {
    pub fn n(&self) -> usize {
        self.n_control + self.n_treated
    }
}

fn check_ids(data: &SurvivalDataset, leaf_ids: &[usize]) -> Result<()> {
    if leaf_ids.len() != data.n() {
        return Err(Error::DimensionMismatch(format!("{} rows, {} leaf ids", data.n(), leaf_ids.len())));
    }
    Ok(())
}

/// Effect of treatment among `rows`.
pub fn group_effect(data: &SurvivalDataset, rows: &[usize], leaf: usize) -> LeafEffect {
    let t = data.times();
    let e = data.events();
    let w = data.treatments();
    let (mut tc, mut ec, mut tt, mut et) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &i in rows {
        if w[i] == 1 {
            tt.push(t[i]);
            et.push(e[i]);
        } else {
            tc.push(t[i]);
            ec.push(e[i]);
        }
    }
    let both = !tc.is_empty() && !tt.is_empty();
    let hazard_ratio = if both {
        let times: Vec<f64> = rows.iter().map(|&i| t[i]).collect();
        let events: Vec<bool> = rows.iter().map(|&i| e[i]).collect();
        let design = Array2::from_shape_fn((rows.len(), 1), |(r, _)| f64::from(w[rows[r]]));
        match cox_fit(&times, &events, design.view()) {
            Ok(f) if f.converged => Some(f.hazard_ratio(0)),
            _ => None,
        }
    } else {
        None
    };
    let logrank_p = if both {
        logrank_test(&tt, &et, &tc, &ec).ok().map(|l| l.p_value)
    } else {
        None
    };
    LeafEffect {
        leaf,
        n_control: tc.len(),
        n_treated: tt.len(),
        events_control: ec.iter().filter(|&&v| v).count(),
        events_treated: et.iter().filter(|&&v| v).count(),
        hazard_ratio,
        logrank_p,
    }
}

/// Per-leaf univariate Cox hazard ratio and log-rank p, for leaves
/// `0..leaf_count`.
pub fn leaf_effects(data: &SurvivalDataset, leaf_ids: &[usize], leaf_count: usize) -> Result<Vec<LeafEffect>> {
    check_ids(data, leaf_ids)?;
    let mut rows = vec![Vec::new(); leaf_count];
    for (i, &l) in leaf_ids.iter().enumerate() {
        if l >= leaf_count {
            return Err(Error::invalid(format!("leaf id {} out of range", l)));
        }
        rows[l].push(i);
    }
    Ok(rows.iter().enumerate().map(|(l, r)| group_effect(data, r, l)).collect())
}

/// Degrees of freedom of the leaf-by-treatment likelihood-ratio test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DfRule {
    /// `L - 1`.
    #[default]
    LeavesMinusOne,
    /// `2 (L - 1)`, the parameter-count difference of the nested models.
    ParameterDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityTest {
    pub p_leaf: f64,
    pub statistic: f64,
    pub df: u32,
    pub leaves: usize,
    pub loglik_treatment_only: Option<f64>,
    pub loglik_with_leaves: Option<f64>,
    /// Why the test fell back to `p_leaf = 1`, if it did.
    pub diagnostic: Option<String>,
}

impl HeterogeneityTest {
    fn trivial(leaves: usize, diagnostic: Option<String>) -> Self {
        HeterogeneityTest {
            p_leaf: 1.0,
            statistic: 0.0,
            df: 0,
            leaves,
            loglik_treatment_only: None,
            loglik_with_leaves: None,
            diagnostic,
        }
    }
}

/// Design `[W, D_2..D_L, D_2 W..D_L W]` with leaves recoded densely and the
/// first occupied leaf as reference.
pub fn leaf_interaction_design(data: &SurvivalDataset, leaf_ids: &[usize]) -> (Array2<f64>, usize) {
    let mut present: Vec<usize> = leaf_ids.to_vec();
    present.sort_unstable();
    present.dedup();
    let l = present.len();
    let n = data.n();
    let w = data.treatments();
    let mut x = Array2::zeros((n, 1 + 2 * (l.saturating_sub(1))));
    for i in 0..n {
        let wi = f64::from(w[i]);
        x[[i, 0]] = wi;
        let code = present.binary_search(&leaf_ids[i]).expect("present leaf");
        if code > 0 {
            x[[i, code]] = 1.0;
            x[[i, l - 1 + code]] = wi;
        }
    }
    (x, l)
}

/// Likelihood-ratio test of leaf-by-treatment interaction. Falls back to
/// `p_leaf = 1` with a diagnostic when either Cox fit fails.
pub fn heterogeneity_test(data: &SurvivalDataset, leaf_ids: &[usize], df_rule: DfRule) -> Result<HeterogeneityTest> {
    check_ids(data, leaf_ids)?;
    let (design, l) = leaf_interaction_design(data, leaf_ids);
    if l <= 1 {
        return Ok(HeterogeneityTest::trivial(l, None));
    }
    let t = data.times();
    let e = data.events();
    let null = match cox_fit(t, e, design.slice(ndarray::s![.., 0..1])) {
        Ok(f) if f.converged => f,
        Ok(f) => return Ok(HeterogeneityTest::trivial(l, f.diagnostic.or(Some("treatment-only fit did not converge".into())))),
        Err(err) => return Ok(HeterogeneityTest::trivial(l, Some(format!("treatment-only fit: {}", err)))),
    };
    let full = match cox_fit(t, e, design.view()) {
        Ok(f) if f.converged => f,
        Ok(f) => return Ok(HeterogeneityTest::trivial(l, f.diagnostic.or(Some("leaf model did not converge".into())))),
        Err(err) => return Ok(HeterogeneityTest::trivial(l, Some(format!("leaf model: {}", err)))),
    };
    let df = match df_rule {
        DfRule::LeavesMinusOne => (l - 1) as u32,
        DfRule::ParameterDifference => 2 * (l - 1) as u32,
    };
    let statistic = 2.0 * (full.loglik_at_estimate - null.loglik_at_estimate).max(0.0);
    let p_leaf = match likelihood_ratio_test(null.loglik_at_estimate, full.loglik_at_estimate, df) {
        // keep p_leaf positive so a declared result always has a nonzero metric
        Ok(p) => p.max(f64::MIN_POSITIVE),
        Err(err) => return Ok(HeterogeneityTest::trivial(l, Some(err.to_string()))),
    };
    Ok(HeterogeneityTest {
        p_leaf,
        statistic,
        df,
        leaves: l,
        loglik_treatment_only: Some(null.loglik_at_estimate),
        loglik_with_leaves: Some(full.loglik_at_estimate),
        diagnostic: None,
    })
}

/// `p_leaf` when strictly below `p_star`, else 0.
pub fn selection_metric(p_leaf: f64, p_star: f64) -> f64 {
    if p_leaf < p_star {
        p_leaf
    } else {
        0.0
    }
}
