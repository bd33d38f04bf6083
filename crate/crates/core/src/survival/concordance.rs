use crate::error::{Error, Result};

/// Harrell concordance with its pair counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concordance {
    pub index: f64,
    pub comparable: f64,
    pub concordant: f64,
    pub tied_risk: f64,
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }
    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }
    /// Count of inserted ranks `< i`.
    fn below(&self, i: usize) -> u64 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Harrell's C-index. A pair is comparable when the earlier time is an event;
/// at equal times an event precedes a censoring, while two tied events are not
/// comparable. Higher risk should go with the earlier event; tied risks count 0.5.
pub fn concordance(risk: &[f64], times: &[f64], events: &[bool]) -> Result<Concordance> {
    let n = risk.len();
    if times.len() != n || events.len() != n {
        return Err(Error::DimensionMismatch("risk, time and event lengths differ".into()));
    }
    if n < 2 {
        return Err(Error::invalid("concordance needs at least two observations"));
    }
    if risk.iter().any(|r| r.is_nan()) {
        return Err(Error::invalid("risk scores contain NaN"));
    }
    // dense ranks of risk
    let mut by_risk: Vec<usize> = (0..n).collect();
    by_risk.sort_by(|&a, &b| risk[a].total_cmp(&risk[b]));
    let mut rank = vec![0usize; n];
    let mut r = 0;
    for k in 0..n {
        if k > 0 && risk[by_risk[k]] != risk[by_risk[k - 1]] {
            r += 1;
        }
        rank[by_risk[k]] = r;
    }
    let levels = r + 1;

    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by(|&a, &b| times[b].total_cmp(&times[a]));

    let mut later = Fenwick::new(levels);
    let (mut comparable, mut concordant, mut tied) = (0u64, 0u64, 0u64);
    let mut i = 0;
    while i < n {
        let t = times[by_time[i]];
        let mut j = i;
        while j < n && times[by_time[j]] == t {
            j += 1;
        }
        let group = &by_time[i..j];
        let mut censored_ranks: Vec<usize> = group.iter().filter(|&&g| !events[g]).map(|&g| rank[g]).collect();
        censored_ranks.sort_unstable();
        let total_later = later.below(levels);
        for &g in group.iter().filter(|&&g| events[g]) {
            let rg = rank[g];
            let below = later.below(rg);
            let equal = later.below(rg + 1) - below;
            let c_below = censored_ranks.partition_point(|&x| x < rg) as u64;
            let c_equal = censored_ranks.partition_point(|&x| x <= rg) as u64 - c_below;
            comparable += total_later + censored_ranks.len() as u64;
            concordant += below + c_below;
            tied += equal + c_equal;
        }
        for &g in group {
            later.add(rank[g]);
        }
        i = j;
    }
    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    let comparable = comparable as f64;
    let concordant = concordant as f64;
    let tied = tied as f64;
    Ok(Concordance {
        index: (concordant + 0.5 * tied) / comparable,
        comparable,
        concordant,
        tied_risk: tied,
    })
}

pub fn concordance_index(risk: &[f64], times: &[f64], events: &[bool]) -> Result<f64> {
    concordance(risk, times, events).map(|c| c.index)
}
