//! Survival datasets: observed `(time, event, treatment)` triplets plus a
//! covariate matrix described by a schema.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateKind {
    Numeric,
    /// Values are level indices `0..levels.len()`.
    Categorical { levels: Vec<String> },
}

impl CovariateKind {
    pub fn level_count(&self) -> Option<usize> {
        match self {
            CovariateKind::Numeric => None,
            CovariateKind::Categorical { levels } => Some(levels.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
}

impl CovariateSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        CovariateSpec {
            name: name.into(),
            kind: CovariateKind::Numeric,
        }
    }

    pub fn categorical(name: impl Into<String>, levels: &[&str]) -> Self {
        CovariateSpec {
            name: name.into(),
            kind: CovariateKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub covariates: Vec<CovariateSpec>,
}

impl Schema {
    pub fn numeric(names: &[&str]) -> Self {
        Schema {
            covariates: names.iter().map(|n| CovariateSpec::numeric(*n)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    pub fn name(&self, j: usize) -> &str {
        &self.covariates[j].name
    }

    pub fn kind(&self, j: usize) -> &CovariateKind {
        &self.covariates[j].kind
    }

    /// Checks a covariate row against the schema.
    pub fn validate_row(&self, row: ArrayView1<f64>) -> Result<()> {
        if row.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "row has {} covariates, schema declares {}",
                row.len(),
                self.len()
            )));
        }
        for (j, (&v, spec)) in row.iter().zip(&self.covariates).enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!("covariate {} ({}) is not finite", j, spec.name)));
            }
            if let Some(levels) = spec.kind.level_count() {
                if v < 0.0 || v.fract() != 0.0 || v as usize >= levels {
                    return Err(Error::invalid(format!(
                        "covariate {} has level {} outside 0..{}",
                        spec.name, v, levels
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One patient. `covariates[j]` is numeric or a categorical level index.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    pub time: f64,
    pub event: bool,
    pub treatment: u8,
    pub covariates: Vec<f64>,
}

/// Column-oriented survival data. Rows are patients.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    ids: Vec<String>,
    time: Vec<f64>,
    event: Vec<bool>,
    treatment: Vec<u8>,
    covariates: Array2<f64>,
    schema: Schema,
}

impl SurvivalDataset {
    pub fn new(
        time: Vec<f64>,
        event: Vec<bool>,
        treatment: Vec<u8>,
        covariates: Array2<f64>,
        schema: Schema,
    ) -> Result<Self> {
        let ids = (1..=time.len()).map(|i| i.to_string()).collect();
        Self::with_ids(ids, time, event, treatment, covariates, schema)
    }

    pub fn with_ids(
        ids: Vec<String>,
        time: Vec<f64>,
        event: Vec<bool>,
        treatment: Vec<u8>,
        covariates: Array2<f64>,
        schema: Schema,
    ) -> Result<Self> {
        let n = time.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if event.len() != n || treatment.len() != n || covariates.nrows() != n || ids.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "time {}, event {}, treatment {}, covariates {}, ids {}",
                n,
                event.len(),
                treatment.len(),
                covariates.nrows(),
                ids.len()
            )));
        }
        if covariates.ncols() != schema.len() {
            return Err(Error::DimensionMismatch(format!(
                "covariate matrix has {} columns, schema declares {}",
                covariates.ncols(),
                schema.len()
            )));
        }
        for (i, &t) in time.iter().enumerate() {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::invalid(format!("time at row {} must be a finite non-negative number, got {}", i, t)));
            }
        }
        if let Some(i) = treatment.iter().position(|&w| w > 1) {
            return Err(Error::invalid(format!("treatment at row {} must be 0 or 1", i)));
        }
        for row in covariates.rows() {
            schema.validate_row(row)?;
        }
        Ok(SurvivalDataset {
            ids,
            time,
            event,
            treatment,
            covariates,
            schema,
        })
    }

    pub fn from_records(records: &[SurvivalRecord], schema: Schema) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let p = schema.len();
        let mut x = Array2::zeros((records.len(), p));
        for (i, r) in records.iter().enumerate() {
            if r.covariates.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "record {} has {} covariates, schema declares {}",
                    i,
                    r.covariates.len(),
                    p
                )));
            }
            for (j, &v) in r.covariates.iter().enumerate() {
                x[[i, j]] = v;
            }
        }
        Self::new(
            records.iter().map(|r| r.time).collect(),
            records.iter().map(|r| r.event).collect(),
            records.iter().map(|r| r.treatment).collect(),
            x,
            schema,
        )
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn p(&self) -> usize {
        self.schema.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn times(&self) -> &[f64] {
        &self.time
    }

    pub fn events(&self) -> &[bool] {
        &self.event
    }

    pub fn treatments(&self) -> &[u8] {
        &self.treatment
    }

    pub fn covariates(&self) -> ArrayView2<'_, f64> {
        self.covariates.view()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn event_count(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub fn record(&self, i: usize) -> SurvivalRecord {
        SurvivalRecord {
            time: self.time[i],
            event: self.event[i],
            treatment: self.treatment[i],
            covariates: self.covariates.row(i).to_vec(),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = SurvivalRecord> + '_ {
        (0..self.n()).map(|i| self.record(i))
    }

    /// Rows `rows` (repeats allowed) as a new dataset.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(SurvivalDataset {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            time: rows.iter().map(|&i| self.time[i]).collect(),
            event: rows.iter().map(|&i| self.event[i]).collect(),
            treatment: rows.iter().map(|&i| self.treatment[i]).collect(),
            covariates: self.covariates.select(Axis(0), rows),
            schema: self.schema.clone(),
        })
    }

    /// Same outcomes, replaced covariate matrix (used by permutation nulls).
    pub fn with_covariates(&self, covariates: Array2<f64>) -> Result<Self> {
        Self::with_ids(
            self.ids.clone(),
            self.time.clone(),
            self.event.clone(),
            self.treatment.clone(),
            covariates,
            self.schema.clone(),
        )
    }

    /// Same covariates, replaced outcome triplets.
    pub fn with_outcomes(&self, time: Vec<f64>, event: Vec<bool>, treatment: Vec<u8>) -> Result<Self> {
        Self::with_ids(
            self.ids.clone(),
            time,
            event,
            treatment,
            self.covariates.clone(),
            self.schema.clone(),
        )
    }

    /// Row indices grouped by treatment arm `(control, treated)`.
    pub fn arms(&self) -> (Vec<usize>, Vec<usize>) {
        (0..self.n()).partition(|&i| self.treatment[i] == 0)
    }
}
