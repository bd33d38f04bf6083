//! Survival-analysis primitives.

mod chi2;
mod concordance;
mod cox;
mod km;
mod logrank;

pub use chi2::{chi2_sf, gamma_q, ln_gamma};
pub use concordance::{concordance, concordance_index, Concordance};
pub use cox::{cox_fit, cox_fit_with, linear_predictor, CoxFit, CoxOptions};
pub(crate) use cox::{newton, standard_errors, z_scores, Evaluation};
pub use km::{km_estimate, KaplanMeier, KmStep};
pub use logrank::{logrank_test, LogRank};

use crate::error::{Error, Result};

/// p-value of the likelihood-ratio statistic `2 (full - null)`.
pub fn likelihood_ratio_test(loglik_null: f64, loglik_full: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(Error::invalid("likelihood-ratio df must be positive"));
    }
    let diff = loglik_full - loglik_null;
    if diff < -1e-8 {
        return Err(Error::invalid(format!(
            "full-model log-likelihood {} is below the null {}",
            loglik_full, loglik_null
        )));
    }
    chi2_sf(2.0 * diff.max(0.0), df)
}
