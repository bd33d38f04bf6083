use serde::Serialize;

use super::chi2::chi2_sf;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRank {
    pub statistic: f64,
    pub p_value: f64,
    pub observed_a: f64,
    pub expected_a: f64,
    pub variance: f64,
}

/// Two-sample log-rank test (1 degree of freedom).
pub fn logrank_test(times_a: &[f64], events_a: &[bool], times_b: &[f64], events_b: &[bool]) -> Result<LogRank> {
    if times_a.is_empty() || times_b.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if times_a.len() != events_a.len() || times_b.len() != events_b.len() {
        return Err(Error::DimensionMismatch("times and event flags differ in length".into()));
    }
    // (time, event, in_a)
    let mut rows: Vec<(f64, bool, bool)> = times_a
        .iter()
        .zip(events_a)
        .map(|(&t, &e)| (t, e, true))
        .chain(times_b.iter().zip(events_b).map(|(&t, &e)| (t, e, false)))
        .collect();
    if !rows.iter().any(|r| r.1) {
        return Err(Error::NoEvents);
    }
    rows.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut n_a = times_a.len() as f64;
    let mut n = rows.len() as f64;
    let (mut observed, mut expected, mut variance) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].0;
        let (mut d, mut d_a, mut leave, mut leave_a) = (0.0, 0.0, 0.0, 0.0);
        while i < rows.len() && rows[i].0 == t {
            let (_, e, in_a) = rows[i];
            leave += 1.0;
            if in_a {
                leave_a += 1.0;
            }
            if e {
                d += 1.0;
                if in_a {
                    d_a += 1.0;
                }
            }
            i += 1;
        }
        if d > 0.0 {
            observed += d_a;
            expected += d * n_a / n;
            if n > 1.0 {
                variance += d * (n_a / n) * (1.0 - n_a / n) * (n - d) / (n - 1.0);
            }
        }
        n -= leave;
        n_a -= leave_a;
    }
    let diff = observed - expected;
    let statistic = if variance > 0.0 { diff * diff / variance } else { 0.0 };
    Ok(LogRank {
        statistic,
        p_value: chi2_sf(statistic, 1)?,
        observed_a: observed,
        expected_a: expected,
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups_give_zero() {
        let t = [1.0, 3.0, 4.0, 7.0];
        let e = [true, false, true, true];
        let r = logrank_test(&t, &e, &t, &e).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn six_patient_hand_computation() {
        // A: 1(e) 3(e) 5(c); B: 2(e) 4(e) 6(e)
        // t=1: n=6 nA=3 d=1 dA=1 E=0.5 V=1*(.5)(.5)(5/5)=0.25
        // t=2: n=5 nA=2 d=1 dA=0 E=0.4 V=0.4*0.6=0.24
        // t=3: n=4 nA=2 d=1 dA=1 E=0.5 V=0.25
        // t=4: n=3 nA=1 d=1 dA=0 E=1/3 V=(1/3)(2/3)=2/9
        // t=6: n=1 nA=0 d=1 E=0 V=0
        let o = 2.0;
        let e = 0.5 + 0.4 + 0.5 + 1.0 / 3.0;
        let v = 0.25 + 0.24 + 0.25 + 2.0 / 9.0;
        let expected = (o - e) * (o - e) / v;
        let r = logrank_test(&[1.0, 3.0, 5.0], &[true, true, false], &[2.0, 4.0, 6.0], &[true, true, true]).unwrap();
        assert!((r.statistic - expected).abs() < 1e-9);
    }

    #[test]
    fn symmetric_in_groups() {
        let ta = [2.0, 5.0, 6.0, 9.0, 11.0];
        let ea = [true, true, false, true, false];
        let tb = [1.0, 3.0, 3.0, 4.0];
        let eb = [true, true, false, true];
        let ab = logrank_test(&ta, &ea, &tb, &eb).unwrap();
        let ba = logrank_test(&tb, &eb, &ta, &ea).unwrap();
        assert!((ab.statistic - ba.statistic).abs() < 1e-12);
    }

    #[test]
    fn no_events_is_an_error() {
        assert!(matches!(
            logrank_test(&[1.0], &[false], &[2.0], &[false]),
            Err(Error::NoEvents)
        ));
    }
}
