use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::student_t_two_sided_p;

/// Pairwise verdict: `Better` when the first model is significantly more
/// accurate than the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TTestOutcome {
    Worse = -1,
    Tie = 0,
    Better = 1,
}

impl TTestOutcome {
    pub fn value(self) -> i64 {
        self as i64
    }

    fn from_sign(x: f64) -> Self {
        if x > 0.0 {
            TTestOutcome::Better
        } else if x < 0.0 {
            TTestOutcome::Worse
        } else {
            TTestOutcome::Tie
        }
    }
}

/// Statistics of a paired comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedT {
    pub mean_difference: f64,
    pub sd_difference: f64,
    /// Infinite when every difference is the same nonzero value, NaN when
    /// all differences are zero.
    pub t: f64,
    pub p_value: f64,
}

pub fn paired_t(a: &[f64], b: &[f64]) -> Result<PairedT> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::Empty("paired t-test needs at least two pairs"));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    if d.iter().all(|&v| v == 0.0) {
        return Ok(PairedT { mean_difference: 0.0, sd_difference: 0.0, t: f64::NAN, p_value: 1.0 });
    }
    if sd == 0.0 {
        let t = if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        return Ok(PairedT { mean_difference: mean, sd_difference: 0.0, t, p_value: 0.0 });
    }
    let t = mean / (sd / n.sqrt());
    Ok(PairedT { mean_difference: mean, sd_difference: sd, t, p_value: student_t_two_sided_p(t, n - 1.0) })
}

/// Two-sided paired t-test; on rejection the sign of the mean difference
/// decides the direction.
pub fn paired_t_test(a: &[f64], b: &[f64], level: f64) -> Result<TTestOutcome> {
    let stats = paired_t(a, b)?;
    if stats.p_value < level {
        Ok(TTestOutcome::from_sign(stats.mean_difference))
    } else {
        Ok(TTestOutcome::Tie)
    }
}

/// `S(c_i) = Σ_j t(c_i, c_j)` over all other models. With fewer than two
/// evaluations per model no test is possible and every score is zero.
pub fn significance_indices(accuracies: &[Vec<f64>], level: f64) -> Result<Vec<i64>> {
    let m = accuracies.len();
    let mut scores = vec![0i64; m];
    if accuracies.first().is_none_or(|a| a.len() < 2) {
        return Ok(scores);
    }
    for i in 0..m {
        for j in i + 1..m {
            let t = paired_t_test(&accuracies[i], &accuracies[j], level)?.value();
            scores[i] += t;
            scores[j] -= t;
        }
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_vectors_tie() {
        assert_eq!(paired_t_test(&[0.5, 0.7, 0.9], &[0.5, 0.7, 0.9], 0.05).unwrap(), TTestOutcome::Tie);
    }

    #[test]
    fn constant_nonzero_difference_is_certain() {
        let a = [0.9, 0.8, 0.7];
        let b = [0.5, 0.4, 0.3];
        // 0.9-0.5 and 0.8-0.4 differ in the last bit; either way the verdict is decisive.
        assert_eq!(paired_t_test(&a, &b, 0.05).unwrap(), TTestOutcome::Better);
        assert_eq!(paired_t_test(&[0.5, 0.5], &[0.25, 0.25], 0.05).unwrap(), TTestOutcome::Better);
        assert_eq!(paired_t(&[0.5, 0.5], &[0.25, 0.25]).unwrap().p_value, 0.0);
    }

    #[test]
    fn hand_computed_statistic() {
        // d = [0.10, 0.12, 0.11, 0.09, 0.08]: mean 0.10, sd sqrt(0.001/4) ≈ 0.0158, t ≈ 14.14
        let b = [0.5; 5];
        let a: Vec<f64> = [0.10, 0.12, 0.11, 0.09, 0.08].iter().map(|d| 0.5 + d).collect();
        let s = paired_t(&a, &b).unwrap();
        assert!((s.mean_difference - 0.10).abs() < 1e-12);
        assert!((s.sd_difference - 0.0158113883).abs() < 1e-9);
        assert!((s.t - 14.142135).abs() < 1e-5);
        assert!(s.p_value < 1e-3);
        assert_eq!(paired_t_test(&a, &b, 0.05).unwrap(), TTestOutcome::Better);
    }

    #[test]
    fn single_outlier_is_not_significant() {
        // d = [0.3, 0, 0, 0, 0]: mean 0.06, sd 0.134, t = 1 < t_crit(4) ≈ 2.78.
        let a = [0.8, 0.5, 0.5, 0.5, 0.5];
        let b = [0.5; 5];
        let s = paired_t(&a, &b).unwrap();
        assert!((s.t - 1.0).abs() < 1e-12);
        assert_eq!(paired_t_test(&a, &b, 0.05).unwrap(), TTestOutcome::Tie);
    }

    #[test]
    fn input_errors() {
        assert!(paired_t_test(&[0.1, 0.2], &[0.1], 0.05).is_err());
        assert!(paired_t_test(&[0.1], &[0.1], 0.05).is_err());
    }

    proptest! {
        #[test]
        fn antisymmetric(pairs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..20)) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assert_eq!(
                paired_t_test(&a, &b, 0.05).unwrap().value(),
                -paired_t_test(&b, &a, 0.05).unwrap().value()
            );
        }

        #[test]
        fn significance_sums_to_zero(rows in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 5), 1..7)) {
            let s = significance_indices(&rows, 0.05).unwrap();
            prop_assert_eq!(s.iter().sum::<i64>(), 0);
        }
    }
}
