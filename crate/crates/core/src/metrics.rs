//! Reward and per-cycle inference error.

use crate::config::{ErrorMetric, ErrorScope, RewardParams};
use crate::error::{Error, Result};

/// Reward of one selection: `q * R - c`.
pub fn compute_reward(quality_satisfied: bool, params: &RewardParams) -> f64 {
    let q = if quality_satisfied { 1.0 } else { 0.0 };
    q * params.bonus - params.cost
}

/// Category index of `value`: the index of the first threshold `>= value`,
/// or `thresholds.len()` above the last one. Upper edges are inclusive.
pub fn categorize(value: f64, thresholds: &[f64]) -> Result<usize> {
    if value.is_nan() {
        return Err(Error::InvalidValue("cannot categorize NaN".into()));
    }
    if thresholds.is_empty() {
        return Err(Error::InvalidValue("no category thresholds".into()));
    }
    Ok(thresholds.partition_point(|&t| t < value))
}

/// Error of one inferred column against the truth.
///
/// Cells whose truth is NaN never count. With [`ErrorScope::Unsensed`] sensed
/// cells are skipped too.
pub fn column_error(
    truth: &[f64],
    inferred: &[f64],
    sensed: &[bool],
    metric: ErrorMetric,
    thresholds: &[f64],
    scope: ErrorScope,
) -> Result<f64> {
    if truth.len() != inferred.len() || truth.len() != sensed.len() {
        return Err(Error::Dimension(format!(
            "truth {}, inferred {}, mask {}",
            truth.len(),
            inferred.len(),
            sensed.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..truth.len() {
        if truth[i].is_nan() || (scope == ErrorScope::Unsensed && sensed[i]) {
            continue;
        }
        total += cell_error(truth[i], inferred[i], metric, thresholds)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoUnsensedCells);
    }
    Ok(total / count as f64)
}

/// Error contribution of a single cell.
pub fn cell_error(truth: f64, inferred: f64, metric: ErrorMetric, thresholds: &[f64]) -> Result<f64> {
    match metric {
        ErrorMetric::MeanAbsolute => Ok((truth - inferred).abs()),
        ErrorMetric::Classification => {
            let a = categorize(truth, thresholds)?;
            let b = categorize(inferred, thresholds)?;
            Ok(if a == b { 0.0 } else { 1.0 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AQI_THRESHOLDS;
    use proptest::prelude::*;

    const MAE: ErrorMetric = ErrorMetric::MeanAbsolute;

    #[test]
    fn reward_examples() {
        let r5 = RewardParams::new(5.0, 1.0).unwrap();
        assert_eq!(compute_reward(true, &r5), 4.0);
        assert_eq!(compute_reward(false, &r5), -1.0);
        assert_eq!(compute_reward(true, &RewardParams::for_cells(36)), 35.0);
    }

    #[test]
    fn aqi_categories() {
        assert_eq!(categorize(45.0, &AQI_THRESHOLDS).unwrap(), 0);
        assert_eq!(categorize(50.0, &AQI_THRESHOLDS).unwrap(), 0);
        assert_eq!(categorize(50.5, &AQI_THRESHOLDS).unwrap(), 1);
        assert_eq!(categorize(120.0, &AQI_THRESHOLDS).unwrap(), 2);
        assert_eq!(categorize(350.0, &AQI_THRESHOLDS).unwrap(), 5);
        assert!(matches!(
            categorize(f64::NAN, &AQI_THRESHOLDS),
            Err(Error::InvalidValue(_))
        ));
    }

    #[test]
    fn mae_over_unsensed_cells() {
        let e = column_error(
            &[1.0, 2.0, 3.0],
            &[1.0, 2.0, 5.0],
            &[true, false, false],
            MAE,
            &[],
            ErrorScope::Unsensed,
        )
        .unwrap();
        assert_eq!(e, 1.0);
        let all = column_error(
            &[1.0, 2.0, 3.0],
            &[1.0, 2.0, 5.0],
            &[true, false, false],
            MAE,
            &[],
            ErrorScope::All,
        )
        .unwrap();
        assert!((all - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn classification_error() {
        // 45 -> Good vs 48 -> Good; 120 -> USG vs 95 -> Moderate
        let e = column_error(
            &[45.0, 120.0],
            &[48.0, 95.0],
            &[false, false],
            ErrorMetric::Classification,
            &AQI_THRESHOLDS,
            ErrorScope::Unsensed,
        )
        .unwrap();
        assert_eq!(e, 0.5);
    }

    #[test]
    fn missing_truth_is_skipped() {
        let e = column_error(
            &[f64::NAN, 2.0],
            &[100.0, 2.5],
            &[false, false],
            MAE,
            &[],
            ErrorScope::Unsensed,
        )
        .unwrap();
        assert_eq!(e, 0.5);
        let none = column_error(
            &[f64::NAN, 2.0],
            &[0.0, 2.0],
            &[false, true],
            MAE,
            &[],
            ErrorScope::Unsensed,
        );
        assert!(matches!(none, Err(Error::NoUnsensedCells)));
    }

    proptest! {
        #[test]
        fn reward_gap_is_bonus(bonus in 0.01f64..1e3, cost in 0.01f64..1e3) {
            let p = RewardParams::new(bonus, cost).unwrap();
            let gap = compute_reward(true, &p) - compute_reward(false, &p);
            prop_assert!((gap - bonus).abs() <= 1e-12 * (bonus + cost));
        }

        #[test]
        fn categorize_is_monotone(a in -1e3f64..1e3, b in -1e3f64..1e3) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(categorize(lo, &AQI_THRESHOLDS).unwrap() <= categorize(hi, &AQI_THRESHOLDS).unwrap());
        }

        #[test]
        fn zero_error_iff_equal(
            truth in prop::collection::vec(-100i32..100, 3..12),
            delta in prop::collection::vec(-3i32..3, 3..12),
        ) {
            let n = truth.len().min(delta.len());
            let t: Vec<f64> = truth[..n].iter().map(|&v| v as f64).collect();
            let inf: Vec<f64> = t.iter().zip(&delta[..n]).map(|(v, &d)| v + d as f64).collect();
            let mask = vec![false; n];
            let e = column_error(&t, &inf, &mask, MAE, &[], ErrorScope::Unsensed).unwrap();
            prop_assert_eq!(e == 0.0, delta[..n].iter().all(|&d| d == 0));
        }
    }
}
