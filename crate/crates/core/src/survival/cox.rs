//! Cox proportional hazards by Newton-Raphson on the Breslow partial likelihood.

use ndarray::ArrayView2;
use serde::Serialize;

use super::concordance::concordance_index;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_inverse, cholesky_solve};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxOptions {
    pub max_iter: usize,
    pub score_tol: f64,
    pub step_tol: f64,
    /// `|β_j|` above this flags a monotone likelihood.
    pub divergence_bound: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            max_iter: 25,
            score_tol: 1e-7,
            step_tol: 1e-8,
            divergence_bound: 15.0,
        }
    }
}

impl CoxOptions {
    /// Budget used inside split search.
    pub fn split_search() -> Self {
        CoxOptions {
            max_iter: 15,
            score_tol: 1e-6,
            step_tol: 1e-6,
            divergence_bound: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoxFit {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub loglik_at_estimate: f64,
    pub loglik_at_zero: f64,
    pub concordance: f64,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostic: Option<String>,
}

impl CoxFit {
    pub fn hazard_ratio(&self, j: usize) -> f64 {
        self.coefficients[j].exp()
    }
}

/// `Σ_j x_j β_j`, evaluated left to right.
pub fn linear_predictor(x: impl IntoIterator<Item = f64>, beta: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (xj, bj) in x.into_iter().zip(beta) {
        acc += xj * bj;
    }
    acc
}

/// Newton state for one coefficient vector.
pub(crate) struct Evaluation {
    pub loglik: f64,
    pub score: Vec<f64>,
    /// Observed information, row-major `q x q`.
    pub information: Vec<f64>,
}

/// Generic Newton driver shared by the row-level and cell-aggregated fitters.
/// `eval` maps β to log-likelihood, score and information.
pub(crate) struct NewtonOutcome {
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub loglik_at_zero: f64,
    pub information: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostic: Option<String>,
}

pub(crate) fn newton<F>(q: usize, options: &CoxOptions, mut eval: F) -> Result<NewtonOutcome>
where
    F: FnMut(&[f64]) -> Evaluation,
{
    let mut beta = vec![0.0; q];
    let mut cur = eval(&beta);
    let loglik_at_zero = cur.loglik;
    if let Some(j) = first_singular_pivot(&cur.information, q) {
        return Err(Error::NonIdentifiable(j));
    }
    let mut iterations = 0;
    let mut converged = false;
    let mut diagnostic = None;
    loop {
        let Some(l) = cholesky(&cur.information, q) else {
            diagnostic = Some("information matrix became singular".to_string());
            break;
        };
        let mut step = cur.score.clone();
        cholesky_solve(&l, q, &mut step);
        let max_score = cur.score.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
        if max_score < options.score_tol && step_norm < options.step_tol {
            converged = true;
            break;
        }
        if iterations == options.max_iter {
            diagnostic = Some(format!("no convergence after {} iterations", iterations));
            break;
        }
        iterations += 1;
        let mut candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
        let mut next = eval(&candidate);
        let mut halvings = 0;
        while !(next.loglik >= cur.loglik - 1e-12 * (1.0 + cur.loglik.abs())) && halvings < 30 {
            step.iter_mut().for_each(|s| *s *= 0.5);
            candidate = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
            next = eval(&candidate);
            halvings += 1;
        }
        beta = candidate;
        cur = next;
        if beta.iter().any(|b| b.abs() > options.divergence_bound || !b.is_finite()) {
            diagnostic = Some("monotone likelihood: coefficient diverging".to_string());
            break;
        }
    }
    Ok(NewtonOutcome {
        beta,
        loglik: cur.loglik,
        loglik_at_zero,
        information: cur.information,
        converged,
        iterations,
        diagnostic,
    })
}

fn first_singular_pivot(info: &[f64], q: usize) -> Option<usize> {
    if cholesky(info, q).is_some() {
        return None;
    }
    // grow the leading block until it stops being positive definite
    (1..=q)
        .find(|&k| {
            let sub: Vec<f64> = (0..k).flat_map(|i| (0..k).map(move |j| info[i * q + j])).collect();
            cholesky(&sub, k).is_none()
        })
        .map(|k| k - 1)
}

pub(crate) fn standard_errors(information: &[f64], q: usize) -> Vec<f64> {
    match cholesky(information, q) {
        Some(l) => {
            let inv = cholesky_inverse(&l, q);
            (0..q).map(|j| inv[j * q + j].max(0.0).sqrt()).collect()
        }
        None => vec![f64::NAN; q],
    }
}

pub(crate) fn z_scores(beta: &[f64], se: &[f64]) -> Vec<f64> {
    beta.iter()
        .zip(se)
        .map(|(b, s)| if *s > 0.0 { b / s } else { f64::NAN })
        .collect()
}

pub fn cox_fit(times: &[f64], events: &[bool], design: ArrayView2<f64>) -> Result<CoxFit> {
    cox_fit_with(times, events, design, &CoxOptions::default())
}

pub fn cox_fit_with(times: &[f64], events: &[bool], design: ArrayView2<f64>, options: &CoxOptions) -> Result<CoxFit> {
    let n = times.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if events.len() != n || design.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} times, {} events, {} design rows",
            n,
            events.len(),
            design.nrows()
        )));
    }
    let q = design.ncols();
    if q == 0 {
        return Err(Error::invalid("design has no columns"));
    }
    if design.iter().any(|v| !v.is_finite()) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("non-finite time or design value"));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::NoEvents);
    }
    for j in 0..q {
        let col = design.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(Error::NonIdentifiable(j));
        }
    }

    // canonical row order (time desc, then event, then design) so that the
    // fit does not depend on the input row order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        times[b]
            .total_cmp(&times[a])
            .then(events[a].cmp(&events[b]))
            .then_with(|| {
                for j in 0..q {
                    let c = design[[a, j]].total_cmp(&design[[b, j]]);
                    if c != std::cmp::Ordering::Equal {
                        return c;
                    }
                }
                std::cmp::Ordering::Equal
            })
    });
    let mut means = vec![0.0; q];
    for &i in &order {
        for j in 0..q {
            means[j] += design[[i, j]];
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let x: Vec<f64> = order
        .iter()
        .flat_map(|&i| (0..q).map(move |j| (i, j)))
        .map(|(i, j)| design[[i, j]] - means[j])
        .collect();
    let t: Vec<f64> = order.iter().map(|&i| times[i]).collect();
    let d: Vec<bool> = order.iter().map(|&i| events[i]).collect();

    let eval = |beta: &[f64]| -> Evaluation {
        let eta: Vec<f64> = (0..n).map(|i| linear_predictor(x[i * q..(i + 1) * q].iter().copied(), beta)).collect();
        let offset = eta.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; q];
        let mut s2 = vec![0.0; q * q];
        let mut loglik = 0.0;
        let mut score = vec![0.0; q];
        let mut info = vec![0.0; q * q];
        let mut i = 0;
        while i < n {
            let mut j = i;
            let mut deaths = 0.0;
            let mut eta_sum = 0.0;
            let mut x_sum = vec![0.0; q];
            while j < n && t[j] == t[i] {
                let w = (eta[j] - offset).exp();
                let xr = &x[j * q..(j + 1) * q];
                s0 += w;
                for a in 0..q {
                    s1[a] += w * xr[a];
                    for b in 0..=a {
                        s2[a * q + b] += w * xr[a] * xr[b];
                    }
                }
                if d[j] {
                    deaths += 1.0;
                    eta_sum += eta[j];
                    for a in 0..q {
                        x_sum[a] += xr[a];
                    }
                }
                j += 1;
            }
            if deaths > 0.0 {
                loglik += eta_sum - deaths * (s0.ln() + offset);
                for a in 0..q {
                    score[a] += x_sum[a] - deaths * s1[a] / s0;
                    for b in 0..=a {
                        info[a * q + b] += deaths * (s2[a * q + b] / s0 - s1[a] * s1[b] / (s0 * s0));
                    }
                }
            }
            i = j;
        }
        for a in 0..q {
            for b in 0..a {
                info[b * q + a] = info[a * q + b];
            }
        }
        Evaluation {
            loglik,
            score,
            information: info,
        }
    };

    let out = newton(q, options, eval)?;
    let se = standard_errors(&out.information, q);
    let z = z_scores(&out.beta, &se);
    let risk: Vec<f64> = (0..n).map(|i| linear_predictor(design.row(i).iter().copied(), &out.beta)).collect();
    let concordance = match concordance_index(&risk, times, events) {
        Ok(c) => c,
        Err(Error::NoComparablePairs) => 0.5,
        Err(e) => return Err(e),
    };
    Ok(CoxFit {
        coefficients: out.beta,
        standard_errors: se,
        z_scores: z,
        loglik_at_estimate: out.loglik,
        loglik_at_zero: out.loglik_at_zero,
        concordance,
        converged: out.converged,
        iterations: out.iterations,
        diagnostic: out.diagnostic,
    })
}
