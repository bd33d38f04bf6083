//! Dense random survival forests for discovering patient subgroups with
//! heterogeneous treatment benefit.
//!
//! The pipeline trains many random survival forests under a
//! treatment-interaction splitting rule across a hyperparameter grid, pools
//! their terminal-node co-occurrence into one proximity matrix, clusters
//! patients spectrally, and distills the clusters into a decision-tree
//! profile whose leaves are tested for treatment-effect heterogeneity.
//!
//! ```no_run
//! use dense_rsf::ensemble::{dense_train, ParamGrid};
//! use dense_rsf::profile::{select_best_profile, SelectionOptions};
//! use dense_rsf::simgen::Scenario;
//!
//! let data = Scenario::One.spec(600).generate(7).dataset;
//! let fused = dense_train(&data, &ParamGrid::desk()).unwrap();
//! let result = select_best_profile(&data, &fused.values(), &SelectionOptions::default(), 0.01).unwrap();
//! println!("{}", result.render_text());
//! ```

pub mod calibration;
pub mod cluster;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod profile;
pub mod rng;
pub mod simgen;
pub mod survival;

pub use data::{CovariateKind, CovariateSpec, Schema, SurvivalDataset, SurvivalRecord};
pub use error::{Error, Result};
