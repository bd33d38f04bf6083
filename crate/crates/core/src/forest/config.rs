use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the interaction z-score enters the splitting score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionScore {
    /// `|z|`: a split and its mirror image score the same.
    #[default]
    Absolute,
    /// Signed z of the `V x W` coefficient (right child = `V = 1`).
    Signed,
}

/// Weights of the splitting score
/// `G = ω1 (c - 0.5) / 2 + (1 - ω1) z / ω2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRuleParams {
    /// ω1, the weight on the concordance term ("weight").
    pub omega1: f64,
    /// ω2, the divisor of the interaction z-score ("den").
    pub omega2: f64,
    #[serde(default)]
    pub interaction: InteractionScore,
}

impl SplitRuleParams {
    pub fn new(omega1: f64, omega2: f64) -> Result<Self> {
        let p = SplitRuleParams {
            omega1,
            omega2,
            interaction: InteractionScore::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.omega1) {
            return Err(Error::Config(format!("weight (omega1) must lie in [0, 1], got {}", self.omega1)));
        }
        if !(self.omega2 > 0.0) || !self.omega2.is_finite() {
            return Err(Error::Config(format!("den (omega2) must be positive, got {}", self.omega2)));
        }
        Ok(())
    }

    pub fn score(&self, concordance: f64, interaction_z: f64) -> f64 {
        let z = match self.interaction {
            InteractionScore::Absolute => interaction_z.abs(),
            InteractionScore::Signed => interaction_z,
        };
        self.omega1 * (concordance - 0.5) / 2.0 + (1.0 - self.omega1) * (z / self.omega2)
    }
}

impl Default for SplitRuleParams {
    fn default() -> Self {
        SplitRuleParams {
            omega1: 0.0,
            omega2: 3.5,
            interaction: InteractionScore::Absolute,
        }
    }
}

/// Hyperparameters of one forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub ntree: usize,
    pub mtry: usize,
    /// Minimum in-bag rows per terminal node.
    pub nodesize: usize,
    /// Maximum number of splits on any root-to-terminal path.
    pub nodedepth: usize,
    /// Random cutpoints per variable; 0 means every midpoint.
    pub nsplit: usize,
    pub split_params: SplitRuleParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xvar_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl ForestConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.ntree == 0 {
            return Err(Error::Config("ntree must be positive".into()));
        }
        if self.mtry == 0 || self.mtry > p {
            return Err(Error::Config(format!("mtry must lie in [1, {}], got {}", p, self.mtry)));
        }
        if self.nodesize == 0 {
            return Err(Error::Config("nodesize must be positive".into()));
        }
        if self.nodedepth == 0 {
            return Err(Error::Config("nodedepth must be positive".into()));
        }
        if let Some(w) = &self.xvar_weights {
            if w.len() != p {
                return Err(Error::Config(format!("xvar.wt has {} entries, expected {}", w.len(), p)));
            }
            if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || !(w.iter().sum::<f64>() > 0.0) {
                return Err(Error::Config("xvar.wt must be non-negative with a positive sum".into()));
            }
        }
        self.split_params.validate()
    }
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            ntree: 100,
            mtry: 3,
            nodesize: 50,
            nodedepth: 3,
            nsplit: 20,
            split_params: SplitRuleParams::default(),
            xvar_weights: None,
            seed: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_limits() {
        let p = SplitRuleParams::new(1.0, 3.5).unwrap();
        assert_eq!(p.score(0.7, 123.0), (0.7 - 0.5) / 2.0);
        let p = SplitRuleParams::new(0.0, 3.5).unwrap();
        assert_eq!(p.score(0.9, -2.1), 2.1 / 3.5);
        let signed = SplitRuleParams {
            interaction: InteractionScore::Signed,
            ..p
        };
        assert_eq!(signed.score(0.9, -2.1), -2.1 / 3.5);
    }

    #[test]
    fn validation() {
        assert!(SplitRuleParams::new(1.5, 1.0).is_err());
        assert!(SplitRuleParams::new(0.5, 0.0).is_err());
        let mut c = ForestConfig::default();
        assert!(c.validate(10).is_ok());
        assert!(c.validate(2).is_err());
        c.xvar_weights = Some(vec![0.0; 10]);
        assert!(c.validate(10).is_err());
    }
}
