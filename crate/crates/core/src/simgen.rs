//! Weibull proportional-hazards trial simulator.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Schema, SurvivalDataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};

/// Months are 30 time units.
pub const MONTH: f64 = 30.0;

/// Calibrated so that about 10% of otherwise observed events are lost to
/// random censoring in the null scenario.
pub const DEFAULT_RANDOM_CENSOR_RATE: f64 = 1.0 / 2300.0;

const ARM_STREAM: u64 = 0x41524d;
const PATIENT_STREAM: u64 = 0x504154;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Greater,
    Less,
}

/// `x[variable] > threshold` or `x[variable] < threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub variable: usize,
    pub comparison: Comparison,
    pub threshold: f64,
}

impl Condition {
    pub fn holds(&self, x: &[f64]) -> bool {
        match self.comparison {
            Comparison::Greater => x[self.variable] > self.threshold,
            Comparison::Less => x[self.variable] < self.threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplier {
    #[default]
    Constant,
    /// Multiply by the sum of all covariates.
    SumOfCovariates,
}

/// One interaction term: `coefficient * I(region) * I(W = arm) * m(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaTerm {
    pub region: Vec<Condition>,
    pub arm: u8,
    pub coefficient: f64,
    #[serde(default)]
    pub multiplier: Multiplier,
}

impl KappaTerm {
    pub fn in_region(&self, x: &[f64]) -> bool {
        self.region.iter().all(|c| c.holds(x))
    }

    pub fn value(&self, x: &[f64], w: u8) -> f64 {
        if w != self.arm || !self.in_region(x) {
            return 0.0;
        }
        let m = match self.multiplier {
            Multiplier::Constant => 1.0,
            Multiplier::SumOfCovariates => x.iter().sum(),
        };
        self.coefficient * m
    }

    /// Whether the term favors treatment over control inside its region.
    pub fn favors_treatment(&self) -> bool {
        (self.arm == 1) == (self.coefficient < 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Positive,
    Negative,
    Neutral,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Positive => "positive",
            Region::Negative => "negative",
            Region::Neutral => "neutral",
        }
    }
}

/// Full generative model: covariates, Weibull hazard, accrual and censoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub shape: f64,
    pub scale: f64,
    pub gamma_w: f64,
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub kappa: Vec<KappaTerm>,
    pub followup: f64,
    pub accrual: f64,
    pub random_censor_rate: f64,
    /// Leading Bernoulli(0.5) covariates; the rest are standard normal.
    pub binary_covariates: usize,
    pub normal_covariates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[serde(alias = "scenario1", alias = "1")]
    One,
    #[serde(alias = "scenario2", alias = "2")]
    Two,
    #[serde(alias = "scenario3", alias = "3")]
    Three,
    #[serde(alias = "scenario4", alias = "4")]
    Four,
    Global,
    Null,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::One,
        Scenario::Two,
        Scenario::Three,
        Scenario::Four,
        Scenario::Global,
        Scenario::Null,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::One => "one",
            Scenario::Two => "two",
            Scenario::Three => "three",
            Scenario::Four => "four",
            Scenario::Global => "global",
            Scenario::Null => "null",
        }
    }

    pub fn parse(s: &str) -> Result<Scenario> {
        match s.to_ascii_lowercase().as_str() {
            "one" | "1" | "scenario1" => Ok(Scenario::One),
            "two" | "2" | "scenario2" => Ok(Scenario::Two),
            "three" | "3" | "scenario3" => Ok(Scenario::Three),
            "four" | "4" | "scenario4" => Ok(Scenario::Four),
            "global" => Ok(Scenario::Global),
            "null" => Ok(Scenario::Null),
            _ => Err(Error::Config(format!("unknown scenario {:?}", s))),
        }
    }

    pub fn spec(&self, n: usize) -> ScenarioSpec {
        let mut s = ScenarioSpec::null(n);
        let quadrant = |cmp: Comparison, t: f64| {
            vec![
                Condition {
                    variable: 5,
                    comparison: cmp,
                    threshold: t,
                },
                Condition {
                    variable: 6,
                    comparison: cmp,
                    threshold: t,
                },
            ]
        };
        let benefit = |region: Vec<Condition>, coefficient: f64| KappaTerm {
            region,
            arm: 1,
            coefficient,
            multiplier: Multiplier::Constant,
        };
        match self {
            Scenario::Null => {}
            Scenario::Global => s.gamma_w = -0.7,
            Scenario::One | Scenario::Four => {
                s.gamma[5] = -0.61;
                s.gamma[6] = -0.61;
                s.kappa = vec![benefit(quadrant(Comparison::Greater, 0.0), -0.57)];
                if *self == Scenario::Four {
                    s.followup = 60.0 * MONTH;
                    s.accrual = 60.0 * MONTH;
                }
            }
            Scenario::Two => {
                s.gamma[5] = -0.61;
                s.gamma[6] = -0.61;
                s.kappa = vec![benefit(quadrant(Comparison::Greater, -1.0), -0.57)];
            }
            Scenario::Three => {
                // control does better in the lower quadrant
                s.kappa = vec![
                    benefit(quadrant(Comparison::Greater, 0.0), -0.44),
                    KappaTerm {
                        region: quadrant(Comparison::Less, 0.0),
                        arm: 0,
                        coefficient: -0.44,
                        multiplier: Multiplier::Constant,
                    },
                ];
            }
        }
        s
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A simulated dataset with its latent quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub dataset: SurvivalDataset,
    pub event_time: Vec<f64>,
    pub censor_time: Vec<f64>,
    pub region: Vec<Region>,
}

impl ScenarioSpec {
    /// Ten covariates, no effects, 40-month follow-up.
    pub fn null(n: usize) -> Self {
        ScenarioSpec {
            n,
            shape: 2.0,
            scale: 300.0,
            gamma_w: 0.0,
            gamma: vec![0.0; 10],
            kappa: Vec::new(),
            followup: 40.0 * MONTH,
            accrual: 40.0 * MONTH,
            random_censor_rate: DEFAULT_RANDOM_CENSOR_RATE,
            binary_covariates: 5,
            normal_covariates: 5,
        }
    }

    pub fn p(&self) -> usize {
        self.binary_covariates + self.normal_covariates
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if self.n < 2 {
            return Err(Error::Config("simulated n must be at least 2".into()));
        }
        if p == 0 {
            return Err(Error::Config("at least one covariate is required".into()));
        }
        if !(self.shape > 0.0 && self.scale > 0.0 && self.followup > 0.0) {
            return Err(Error::Config("shape, scale and followup must be positive".into()));
        }
        if !(self.accrual >= 0.0) || !(self.random_censor_rate >= 0.0) {
            return Err(Error::Config("accrual and random censor rate must be non-negative".into()));
        }
        if self.gamma.len() != p {
            return Err(Error::Config(format!("gamma has {} entries, expected {}", self.gamma.len(), p)));
        }
        for t in &self.kappa {
            if t.arm > 1 {
                return Err(Error::Config("kappa arm must be 0 or 1".into()));
            }
            if t.region.iter().any(|c| c.variable >= p) {
                return Err(Error::Config("kappa region references an unknown covariate".into()));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        let names: Vec<String> = (1..=self.p()).map(|j| format!("X{}", j)).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Schema::numeric(&refs)
    }

    pub fn linear_predictor(&self, x: &[f64], w: u8) -> f64 {
        let mut lp = self.gamma_w * f64::from(w);
        for (g, v) in self.gamma.iter().zip(x) {
            lp += g * v;
        }
        lp + self.kappa.iter().map(|t| t.value(x, w)).sum::<f64>()
    }

    pub fn true_region(&self, x: &[f64]) -> Region {
        for t in &self.kappa {
            if t.in_region(x) {
                return if t.favors_treatment() { Region::Positive } else { Region::Negative };
            }
        }
        Region::Neutral
    }

    /// Simulates one dataset. Every patient has its own random stream, so
    /// patient `i` is the same across sample sizes and follow-up lengths.
    pub fn generate(&self, seed: u64) -> GeneratedDataset {
        self.try_generate(seed).expect("valid scenario spec")
    }

    pub fn try_generate(&self, seed: u64) -> Result<GeneratedDataset> {
        self.validate()?;
        let n = self.n;
        let p = self.p();
        let arm_seed = derive_seed(seed, ARM_STREAM);
        let patient_seed = derive_seed(seed, PATIENT_STREAM);
        let mut covariates = Array2::zeros((n, p));
        let mut time = Vec::with_capacity(n);
        let mut event = Vec::with_capacity(n);
        let mut treatment = Vec::with_capacity(n);
        let mut event_time = Vec::with_capacity(n);
        let mut censor_time = Vec::with_capacity(n);
        let mut region = Vec::with_capacity(n);
        let mut pair_first = 0u8;
        for i in 0..n {
            // one random arm per consecutive pair, the partner gets the other
            let w = if i % 2 == 0 {
                pair_first = stream_rng(arm_seed, (i / 2) as u64).random_range(0..2u8);
                pair_first
            } else {
                1 - pair_first
            };
            let mut rng = stream_rng(patient_seed, i as u64);
            let mut x = vec![0.0; p];
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = if j < self.binary_covariates {
                    f64::from(u8::from(rng.random_bool(0.5)))
                } else {
                    StandardNormal.sample(&mut rng)
                };
            }
            let u: f64 = Open01.sample(&mut rng);
            let lp = self.linear_predictor(&x, w);
            let t_event = weibull_inverse(u, lp, self.shape, self.scale);
            let enrol: f64 = rng.random::<f64>() * self.accrual;
            let v: f64 = Open01.sample(&mut rng);
            let random_censor = if self.random_censor_rate > 0.0 {
                -v.ln() / self.random_censor_rate
            } else {
                f64::INFINITY
            };
            let c = (self.followup - enrol).max(0.0).min(random_censor);
            let observed = t_event.min(c);
            time.push(observed);
            event.push(t_event <= c);
            treatment.push(w);
            event_time.push(t_event);
            censor_time.push(c);
            region.push(self.true_region(&x));
            for j in 0..p {
                covariates[[i, j]] = x[j];
            }
        }
        let ids = (1..=n).map(|i| i.to_string()).collect();
        let dataset = SurvivalDataset::with_ids(ids, time, event, treatment, covariates, self.schema())?;
        Ok(GeneratedDataset {
            dataset,
            event_time,
            censor_time,
            region,
        })
    }
}

fn weibull_inverse(u: f64, lp: f64, shape: f64, scale: f64) -> f64 {
    scale * (-u.ln() / lp.exp()).powf(1.0 / shape)
}

/// Inverse-CDF Weibull draw, `scale * (-ln u / exp(lp))^(1/shape)`.
pub fn sample_survival_time(linear_predictor: f64, shape: f64, scale: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = Open01.sample(rng);
    weibull_inverse(u, linear_predictor, shape, scale)
}

/// The deterministic part of [`sample_survival_time`] for a given `u`.
pub fn survival_time_at(u: f64, linear_predictor: f64, shape: f64, scale: f64) -> f64 {
    weibull_inverse(u, linear_predictor, shape, scale)
}
