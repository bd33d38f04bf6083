//! Independent reference implementations shared by the integration tests.
//! Everything here is written for clarity over speed.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Breslow partial log-likelihood evaluated directly from risk sets.
pub fn breslow_loglik(times: &[f64], events: &[bool], x: &Array2<f64>, beta: &[f64]) -> f64 {
    let n = times.len();
    let eta: Vec<f64> = (0..n)
        .map(|i| (0..beta.len()).map(|j| x[[i, j]] * beta[j]).sum())
        .collect();
    let mut ll = 0.0;
    for i in 0..n {
        if !events[i] {
            continue;
        }
        let denom: f64 = (0..n).filter(|&k| times[k] >= times[i]).map(|k| eta[k].exp()).sum();
        ll += eta[i] - denom.ln();
    }
    ll
}

/// Grid maximizer of the one-covariate partial likelihood over `[-5, 5]`.
pub fn grid_argmax(times: &[f64], events: &[bool], x: &Array2<f64>, step: f64) -> f64 {
    let steps = (10.0 / step).round() as i64;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for s in 0..=steps {
        let b = -5.0 + s as f64 * step;
        let ll = breslow_loglik(times, events, x, &[b]);
        if ll > best.0 {
            best = (ll, b);
        }
    }
    best.1
}

/// Harrell's C by enumerating every ordered pair. Returns (concordant credit, comparable).
pub fn brute_concordance(risk: &[f64], times: &[f64], events: &[bool]) -> (f64, f64) {
    let n = risk.len();
    let mut credit = 0.0;
    let mut comparable = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j || !events[i] {
                continue;
            }
            // i fails first; a censored j at the same time was still at risk
            let ok = times[i] < times[j] || (times[i] == times[j] && !events[j]);
            if !ok {
                continue;
            }
            comparable += 1.0;
            if risk[i] > risk[j] {
                credit += 1.0;
            } else if risk[i] == risk[j] {
                credit += 0.5;
            }
        }
    }
    (credit, comparable)
}

/// Random censored sample with deliberate ties in time.
pub fn censored_sample(rng: &mut impl Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    let times = (0..n).map(|_| rng.random_range(1..=(n as u32 / 2 + 2)) as f64).collect();
    let events = (0..n).map(|_| rng.random_bool(0.7)).collect();
    (times, events)
}

/// Textbook two-sample log-rank `(O - E)^2 / V` from explicit hypergeometric terms.
pub fn brute_logrank(ta: &[f64], ea: &[bool], tb: &[f64], eb: &[bool]) -> f64 {
    let mut event_times: Vec<f64> = ta
        .iter()
        .zip(ea)
        .chain(tb.iter().zip(eb))
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let (mut o, mut e, mut v) = (0.0, 0.0, 0.0);
    for &t in &event_times {
        let na = ta.iter().filter(|&&x| x >= t).count() as f64;
        let nb = tb.iter().filter(|&&x| x >= t).count() as f64;
        let da = ta.iter().zip(ea).filter(|(&x, &d)| d && x == t).count() as f64;
        let db = tb.iter().zip(eb).filter(|(&x, &d)| d && x == t).count() as f64;
        let nt = na + nb;
        let d = da + db;
        o += da;
        e += d * na / nt;
        if nt > 1.0 {
            v += d * (na / nt) * (nb / nt) * (nt - d) / (nt - 1.0);
        }
    }
    (o - e).powi(2) / v
}

/// Standard normal upper tail via erfc from the reference math crate.
pub fn normal_two_sided(z: f64) -> f64 {
    statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// True when `a` and `b` describe the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut map = std::collections::HashMap::new();
    let mut back = std::collections::HashMap::new();
    a.iter().zip(b).all(|(x, y)| *map.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

pub fn block_matrix(sizes: &[usize], noise: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let truth: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect();
    let n = truth.len();
    let mut rng = rng(seed);
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = if i == j {
                1.0
            } else if truth[i] == truth[j] {
                1.0 - noise * rng.random::<f64>()
            } else {
                noise * rng.random::<f64>()
            };
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
    (s, truth)
}
