//! Pearson and Spearman correlation.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Pearson,
    Spearman,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Pearson => "pearson",
            Metric::Spearman => "spearman",
        }
    }

    pub fn compute(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            Metric::Pearson => pearson(x, y),
            Metric::Spearman => spearman(x, y),
        }
    }

    pub fn evaluate(self, predicted: &[f64], gold: &[f64]) -> Result<EvaluationResult> {
        Ok(EvaluationResult {
            metric: self,
            coefficient: self.compute(predicted, gold)?,
            n: predicted.len(),
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(Metric::Pearson),
            "spearman" => Ok(Metric::Spearman),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationResult {
    pub metric: Metric,
    pub coefficient: f64,
    pub n: usize,
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!(
            "correlation inputs differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Contract("correlation needs at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    Ok(())
}

/// Two-pass sample correlation; `None` when either input has zero variance.
fn correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    if x.iter().all(|v| *v == x[0]) || y.iter().all(|v| *v == y[0]) {
        return Err(Error::ConstantInput);
    }
    correlation(x, y).ok_or(Error::ConstantInput)
}

/// 1-based ranks with ties sharing the average of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    correlation(&rx, &ry).ok_or(Error::ConstantRanks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 5.0], &[0.1, 7.0, 9.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        let tie = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((tie - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ConstantInput)));
        assert!(matches!(
            spearman(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]),
            Err(Error::ConstantRanks)
        ));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(Error::Contract(_))));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 10.0, 5.0, 20.0]), vec![2.5, 2.5, 1.0, 4.0]);
    }

    proptest! {
        #[test]
        fn pearson_affine(
            x in prop::collection::vec(-100.0f64..100.0, 3..50),
            a in 0.01f64..10.0,
            b in -10.0f64..10.0,
        ) {
            prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-3));
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
            let z: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
            prop_assert!((pearson(&x, &z).unwrap() + 1.0).abs() < 1e-12);
        }

        #[test]
        fn symmetric_and_bounded(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40),
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            if let (Ok(r1), Ok(r2)) = (pearson(&x, &y), pearson(&y, &x)) {
                prop_assert!((r1 - r2).abs() < 1e-12);
                prop_assert!(r1.abs() <= 1.0 + 1e-12);
            }
            if let Ok(rho) = spearman(&x, &y) {
                prop_assert!(rho.abs() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn spearman_monotone_invariance(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40),
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let tx: Vec<f64> = x.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            if let Ok(rho) = spearman(&x, &y) {
                prop_assert!((spearman(&tx, &y).unwrap() - rho).abs() < 1e-12);
            }
        }
    }
}
