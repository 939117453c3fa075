//! Window-level error metrics and their aggregation.
//!
//! All metrics take a boolean mask selecting the scored voxels and operate on
//! de-normalized temperatures in Celsius.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this, a window's total variance (or error) counts as zero.
pub const DEGENERATE_SST: f64 = 1e-12;

fn check(pred: &[f64], truth: &[f64], mask: &[bool]) -> Result<usize> {
    if pred.len() != truth.len() || pred.len() != mask.len() {
        return Err(Error::Shape(format!(
            "metric inputs differ in length: pred {}, truth {}, mask {}",
            pred.len(),
            truth.len(),
            mask.len()
        )));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::Metric("mask selects no voxels".into()));
    }
    Ok(n)
}

fn scored<'a>(pred: &'a [f64], truth: &'a [f64], mask: &'a [bool]) -> impl Iterator<Item = (f64, f64)> + 'a {
    pred.iter()
        .zip(truth)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&p, &t), _)| (p, t))
}

fn nonzero_truth(pred: &[f64], truth: &[f64], mask: &[bool]) -> Result<()> {
    if scored(pred, truth, mask).any(|(_, t)| t == 0.0) {
        return Err(Error::Metric("ground truth is zero at a scored voxel".into()));
    }
    Ok(())
}

/// Sum over scored voxels of `|pred - truth| / |truth|`.
pub fn nl2(pred: &[f64], truth: &[f64], mask: &[bool]) -> Result<f64> {
    check(pred, truth, mask)?;
    nonzero_truth(pred, truth, mask)?;
    Ok(scored(pred, truth, mask).map(|(p, t)| ((p - t) * (p - t)).sqrt() / t.abs()).sum())
}

pub fn mse(pred: &[f64], truth: &[f64], mask: &[bool]) -> Result<f64> {
    let n = check(pred, truth, mask)?;
    Ok(scored(pred, truth, mask).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n as f64)
}

pub fn nrmse(pred: &[f64], truth: &[f64], mask: &[bool]) -> Result<f64> {
    let n = check(pred, truth, mask)?;
    nonzero_truth(pred, truth, mask)?;
    let s: f64 = scored(pred, truth, mask).map(|(p, t)| ((p - t) / t).powi(2)).sum();
    Ok((s / n as f64).sqrt())
}

/// Coefficient of determination against the window's own mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum R2 {
    Value(f64),
    /// The truth has no variance and the prediction is not exact.
    Degenerate { sse: f64 },
}

impl R2 {
    pub fn value(self) -> Option<f64> {
        match self {
            R2::Value(v) => Some(v),
            R2::Degenerate { .. } => None,
        }
    }
}

pub fn r2(pred: &[f64], truth: &[f64], mask: &[bool]) -> Result<R2> {
    let n = check(pred, truth, mask)?;
    if n < 2 {
        return Err(Error::Metric("R^2 needs at least two scored voxels".into()));
    }
    let mean = scored(pred, truth, mask).map(|(_, t)| t).sum::<f64>() / n as f64;
    let (sse, sst) = scored(pred, truth, mask).fold((0.0, 0.0), |(e, s), (p, t)| {
        (e + (p - t) * (p - t), s + (mean - t) * (mean - t))
    });
    if sst < DEGENERATE_SST {
        return Ok(if sse < DEGENERATE_SST {
            R2::Value(1.0)
        } else {
            R2::Degenerate { sse }
        });
    }
    Ok(R2::Value((1.0 - sse / sst).min(1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub mse: f64,
    pub nrmse: f64,
    pub nl2: f64,
    /// `None` for zero-variance windows.
    pub r2: Option<f64>,
    pub n_scored: usize,
}

/// All four metrics for one window.
pub fn score_window(pred: &[f64], truth: &[f64], mask: &[bool]) -> Result<WindowScore> {
    let n_scored = check(pred, truth, mask)?;
    let r2 = if n_scored >= 2 { r2(pred, truth, mask)?.value() } else { None };
    Ok(WindowScore {
        mse: mse(pred, truth, mask)?,
        nrmse: nrmse(pred, truth, mask)?,
        nl2: nl2(pred, truth, mask)?,
        r2,
        n_scored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstWindow {
    pub window_id: usize,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub windows: usize,
    pub mse: f64,
    pub nrmse: f64,
    pub nl2: f64,
    /// Mean over windows with a defined R^2.
    pub r2: f64,
    /// Windows left out of the R^2 mean.
    pub degenerate: usize,
    pub worst: Vec<WorstWindow>,
}

/// Arithmetic means over windows plus the `k` lowest-R^2 windows, ascending.
/// Window ids are positions in `scores`.
pub fn aggregate(scores: &[WindowScore], k: usize) -> Result<AggregateReport> {
    if scores.is_empty() {
        return Err(Error::Metric("no window scores to aggregate".into()));
    }
    let n = scores.len() as f64;
    let mean = |f: fn(&WindowScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
    let defined: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.r2.map(|r| (i, r)))
        .collect();
    let r2 = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().map(|p| p.1).sum::<f64>() / defined.len() as f64
    };
    let mut worst = defined.clone();
    worst.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    worst.truncate(k);
    Ok(AggregateReport {
        windows: scores.len(),
        mse: mean(|s| s.mse),
        nrmse: mean(|s| s.nrmse),
        nl2: mean(|s| s.nl2),
        r2,
        degenerate: scores.len() - defined.len(),
        worst: worst
            .into_iter()
            .map(|(window_id, r2)| WorstWindow { window_id, r2 })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    #[test]
    fn nl2_values() {
        assert!((nl2(&[110.0], &[100.0], &all(1)).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(nl2(&[5.0, 7.0], &[5.0, 7.0], &all(2)).unwrap(), 0.0);
        assert!((nl2(&[110.0, 220.0], &[100.0, 200.0], &all(2)).unwrap() - 0.2).abs() < 1e-15);
        assert!(nl2(&[1.0], &[0.0], &all(1)).is_err());
        // a masked-out zero is fine
        assert!(nl2(&[1.0, 2.0], &[0.0, 2.0], &[false, true]).is_ok());
    }

    #[test]
    fn mse_values() {
        assert_eq!(mse(&[3.0, 4.0], &[3.0, 4.0], &all(2)).unwrap(), 0.0);
        assert_eq!(mse(&[2.0, 2.0], &[0.0, 2.0], &all(2)).unwrap(), 2.0);
        assert!(mse(&[1.0], &[1.0], &[false]).is_err());
        // a uniform 10 C error gives MSE 100
        let truth: Vec<f64> = (0..50).map(|i| 300.0 + i as f64).collect();
        let pred: Vec<f64> = truth.iter().enumerate().map(|(i, t)| if i % 2 == 0 { t + 10.0 } else { t - 10.0 }).collect();
        assert_eq!(mse(&pred, &truth, &all(50)).unwrap(), 100.0);
    }

    #[test]
    fn nrmse_values() {
        assert_eq!(nrmse(&[4.0], &[4.0], &all(1)).unwrap(), 0.0);
        assert!((nrmse(&[110.0], &[100.0], &all(1)).unwrap() - 0.1).abs() < 1e-15);
        assert!((nrmse(&[90.0, 110.0], &[100.0, 100.0], &all(2)).unwrap() - 0.1).abs() < 1e-15);
        assert!(nrmse(&[1.0], &[0.0], &all(1)).is_err());
    }

    #[test]
    fn r2_values() {
        let truth = [1.0, 2.0, 4.0, 9.0];
        assert_eq!(r2(&truth, &truth, &all(4)).unwrap(), R2::Value(1.0));
        let m = truth.iter().sum::<f64>() / 4.0;
        assert_eq!(r2(&[m; 4], &truth, &all(4)).unwrap(), R2::Value(0.0));
        let bad = r2(&[9.0, 4.0, 2.0, 1.0], &truth, &all(4)).unwrap().value().unwrap();
        assert!(bad < 0.0);
        assert!(r2(&[1.0], &[1.0], &all(1)).is_err());
        assert_eq!(r2(&[5.0, 5.0], &[5.0, 5.0], &all(2)).unwrap(), R2::Value(1.0));
        assert!(matches!(r2(&[5.0, 6.0], &[5.0, 5.0], &all(2)).unwrap(), R2::Degenerate { .. }));
    }

    #[test]
    fn aggregation() {
        let s = |r2: Option<f64>, mse: f64| WindowScore {
            mse,
            nrmse: 0.1,
            nl2: 0.2,
            r2,
            n_scored: 10,
        };
        let one = aggregate(&[s(Some(0.5), 3.0)], 7).unwrap();
        assert_eq!((one.mse, one.r2, one.windows), (3.0, 0.5, 1));
        assert_eq!(one.worst, vec![WorstWindow { window_id: 0, r2: 0.5 }]);

        let scores = [s(Some(0.9), 1.0), s(None, 2.0), s(Some(-3.0), 3.0), s(Some(0.99), 4.0)];
        let rep = aggregate(&scores, 10).unwrap();
        assert_eq!(rep.degenerate, 1);
        assert_eq!(rep.worst.iter().map(|w| w.window_id).collect::<Vec<_>>(), vec![2, 0, 3]);
        assert!((rep.r2 - (0.9 - 3.0 + 0.99) / 3.0).abs() < 1e-15);
        let mut rev = scores;
        rev.reverse();
        let rep2 = aggregate(&rev, 2).unwrap();
        assert_eq!(rep2.mse, rep.mse);
        assert_eq!(rep2.worst.len(), 2);
        assert!(aggregate(&[], 3).is_err());
    }

    fn field() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (3usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(20.0f64..1800.0, n),
                prop::collection::vec(20.0f64..1800.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn r2_never_exceeds_one((p, t) in field()) {
            if let R2::Value(v) = r2(&p, &t, &all(p.len())).unwrap() {
                prop_assert!(v <= 1.0);
            }
        }

        #[test]
        fn mse_scales_quadratically((p, t) in field(), s in 0.1f64..10.0) {
            let m = all(p.len());
            let base = mse(&p, &t, &m).unwrap();
            let ps: Vec<f64> = p.iter().map(|x| x * s).collect();
            let ts: Vec<f64> = t.iter().map(|x| x * s).collect();
            let scaled = mse(&ps, &ts, &m).unwrap();
            prop_assert!((scaled - s * s * base).abs() <= 1e-9 * scaled.max(1.0));
        }
        #[test]
        fn r2_is_shift_and_scale_invariant((p, t) in field(), c in -500.0f64..500.0, s in 0.1f64..10.0) {
            let m = all(p.len());
            let base = r2(&p, &t, &m).unwrap().value().unwrap();
            let shift = |v: &[f64]| v.iter().map(|x| x + c).collect::<Vec<_>>();
            let scale = |v: &[f64]| v.iter().map(|x| x * s).collect::<Vec<_>>();
            let shifted = r2(&shift(&p), &shift(&t), &m).unwrap().value().unwrap();
            let scaled = r2(&scale(&p), &scale(&t), &m).unwrap().value().unwrap();
            prop_assert!((shifted - base).abs() <= 1e-12 * base.abs().max(1.0));
            prop_assert!((scaled - base).abs() <= 1e-12 * base.abs().max(1.0));
        }

        #[test]
        fn relative_metrics_are_scale_invariant((p, t) in field(), s in 0.1f64..10.0) {
            let m = all(p.len());
            let ps: Vec<f64> = p.iter().map(|x| x * s).collect();
            let ts: Vec<f64> = t.iter().map(|x| x * s).collect();
            let (a, b) = (nl2(&p, &t, &m).unwrap(), nl2(&ps, &ts, &m).unwrap());
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
            let (a, b) = (nrmse(&p, &t, &m).unwrap(), nrmse(&ps, &ts, &m).unwrap());
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }
    }
}
