//! Error quantiles per parameter point and split.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{DmnError, Result};
use crate::parametric::{MicroParams, ParamNet};
use crate::training::objective::Objective;

/// Empirical quantile with linear interpolation between order statistics
/// (position `(n-1)·prob` in the sorted sample).
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(DmnError::EmptySampling("no errors to summarize".into()));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Quantiles {
            q10: quantile(&v, 0.1),
            q50: quantile(&v, 0.5),
            q90: quantile(&v, 0.9),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub p: MicroParams,
    pub split: Split,
    pub n: usize,
    pub quantiles: Quantiles,
}

/// Groups `errors[i]` (aligned with `dataset.samples`) by parameter point
/// and split; rows follow first appearance of the point, then split order.
pub fn quantile_report(dataset: &Dataset, errors: &[f64]) -> Result<Vec<ReportRow>> {
    if errors.len() != dataset.len() {
        return Err(DmnError::DimensionMismatch(format!(
            "{} errors for {} samples",
            errors.len(),
            dataset.len()
        )));
    }
    let mut rows = Vec::new();
    for p in dataset.parameter_points() {
        for split in [Split::Train, Split::Validation, Split::Test] {
            let e: Vec<f64> = dataset
                .samples
                .iter()
                .zip(errors)
                .filter(|(s, _)| s.p == p && s.split == split)
                .map(|(_, e)| *e)
                .collect();
            if e.is_empty() {
                continue;
            }
            rows.push(ReportRow {
                p: p.clone(),
                split,
                n: e.len(),
                quantiles: Quantiles::of(&e)?,
            });
        }
    }
    Ok(rows)
}

/// Evaluates `net` on every sample and summarizes its relative errors.
pub fn evaluate(net: &ParamNet, dataset: &Dataset) -> Result<Vec<ReportRow>> {
    let e = Objective::sample_errors(net, dataset)?;
    quantile_report(dataset, &e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percent_sequence_median() {
        let v: Vec<f64> = (1..=100).map(|k| k as f64 / 100.0).collect();
        let q = Quantiles::of(&v).unwrap();
        assert!((q.q50 - 0.505).abs() < 1e-15);
        assert!((q.q10 - 0.109).abs() < 1e-15);
        assert!((q.q90 - 0.901).abs() < 1e-15);
    }

    #[test]
    fn constant_sample() {
        let q = Quantiles::of(&[0.3; 7]).unwrap();
        assert_eq!((q.q10, q.q50, q.q90), (0.3, 0.3, 0.3));
    }

    proptest! {
        #[test]
        fn matches_order_statistics(mut v in prop::collection::vec(0.0f64..1.0, 1..40), prob in 0.0f64..1.0) {
            let q = {
                let mut s = v.clone();
                s.sort_by(f64::total_cmp);
                quantile(&s, prob)
            };
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let pos = prob * (v.len() - 1) as f64;
            let (i, t) = (pos as usize, pos.fract());
            let expect = if i + 1 < v.len() { v[i] * (1.0 - t) + v[i + 1] * t } else { v[i] };
            prop_assert!((q - expect).abs() < 1e-12);
            prop_assert!(q >= v[0] && q <= v[v.len() - 1]);
        }
    }
}
