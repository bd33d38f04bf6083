use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmStep {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    pub survival: f64,
}

/// Product-limit survival curve. Steps are recorded at event times only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KaplanMeier {
    pub steps: Vec<KmStep>,
    pub n: usize,
}

impl KaplanMeier {
    /// Right-continuous evaluation `S(t)`.
    pub fn survival_at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .take_while(|s| s.time <= t)
            .last()
            .map_or(1.0, |s| s.survival)
    }

    /// `(time, survival)` pairs starting at `(0, 1)`.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        std::iter::once((0.0, 1.0))
            .chain(self.steps.iter().map(|s| (s.time, s.survival)))
            .collect()
    }

    /// First time the curve drops to 0.5 or below.
    pub fn median(&self) -> Option<f64> {
        self.steps.iter().find(|s| s.survival <= 0.5).map(|s| s.time)
    }
}

pub fn km_estimate(times: &[f64], events: &[bool]) -> Result<KaplanMeier> {
    if times.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if times.len() != events.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} times vs {} event flags",
            times.len(),
            events.len()
        )));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut steps = Vec::new();
    let mut at_risk = times.len();
    let mut survival = 1.0;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut j = i;
        let mut d = 0;
        while j < order.len() && times[order[j]] == t {
            if events[order[j]] {
                d += 1;
            }
            j += 1;
        }
        if d > 0 {
            survival *= 1.0 - d as f64 / at_risk as f64;
            steps.push(KmStep {
                time: t,
                at_risk,
                events: d,
                survival,
            });
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(KaplanMeier {
        steps,
        n: times.len(),
    })
}
