use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sets::PredictionSet;
use crate::stats::{binomial_se, mean_se};

/// Fraction of sets containing their truth, with its binomial SE.
pub fn coverage(sets: &[PredictionSet], truths: &[f64]) -> Result<(f64, f64)> {
    if sets.len() != truths.len() {
        return Err(Error::Shape(format!("{} sets but {} truths", sets.len(), truths.len())));
    }
    if sets.is_empty() {
        return Err(Error::Size("no prediction sets".into()));
    }
    let hits = sets.iter().zip(truths).filter(|(s, &y)| s.contains(y)).count();
    let p = hits as f64 / sets.len() as f64;
    Ok((p, binomial_se(p, sets.len())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    /// Mean grid measure, interval width or label count.
    pub mean: f64,
    pub se: f64,
    /// Mean convex-hull length.
    pub hull_mean: f64,
}

pub fn mean_length(sets: &[PredictionSet]) -> Result<LengthSummary> {
    if sets.is_empty() {
        return Err(Error::Size("no prediction sets".into()));
    }
    let sizes: Vec<f64> = sets.iter().map(PredictionSet::size).collect();
    let (mean, se) = mean_se(&sizes);
    let hull_mean = sets.iter().map(PredictionSet::hull_length).sum::<f64>() / sets.len() as f64;
    Ok(LengthSummary { mean, se, hull_mean })
}

/// Coverage among test points whose truth is label `y`, for each label;
/// `(coverage, count)` with coverage `NaN` for absent labels.
pub fn per_label_coverage(sets: &[PredictionSet], truths: &[f64], num_labels: usize) -> Result<Vec<(f64, usize)>> {
    if sets.len() != truths.len() {
        return Err(Error::Shape(format!("{} sets but {} truths", sets.len(), truths.len())));
    }
    let mut hits = vec![0usize; num_labels];
    let mut counts = vec![0usize; num_labels];
    for (s, &y) in sets.iter().zip(truths) {
        let l = y as usize;
        if l < num_labels {
            counts[l] += 1;
            hits[l] += s.contains(y) as usize;
        }
    }
    Ok(hits
        .iter()
        .zip(&counts)
        .map(|(&h, &c)| (if c == 0 { f64::NAN } else { h as f64 / c as f64 }, c))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinCoverage {
    pub x_lo: f64,
    pub x_hi: f64,
    pub count: usize,
    pub coverage: f64,
    pub se: f64,
}

/// Coverage within equal-frequency bins of the first covariate.
pub fn conditional_coverage_diagnostic(
    sets: &[PredictionSet],
    truths: &[f64],
    xs: &[Vec<f64>],
    bins: usize,
) -> Result<Vec<BinCoverage>> {
    if sets.len() != truths.len() || sets.len() != xs.len() {
        return Err(Error::Shape("sets, truths and covariates must align".into()));
    }
    if bins == 0 || bins > sets.len() {
        return Err(Error::Domain(format!("cannot form {bins} bins from {} points", sets.len())));
    }
    let mut order: Vec<usize> = (0..sets.len()).collect();
    order.sort_by(|&i, &j| xs[i][0].total_cmp(&xs[j][0]).then(i.cmp(&j)));
    let n = order.len();
    Ok((0..bins)
        .map(|b| {
            let idx = &order[b * n / bins..(b + 1) * n / bins];
            let hits = idx.iter().filter(|&&i| sets[i].contains(truths[i])).count();
            let p = hits as f64 / idx.len() as f64;
            BinCoverage {
                x_lo: xs[idx[0]][0],
                x_hi: xs[idx[idx.len() - 1]][0],
                count: idx.len(),
                coverage: p,
                se: binomial_se(p, idx.len()),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_of_ten() {
        let sets: Vec<PredictionSet> = (0..10).map(|_| PredictionSet::interval(0.0, 1.0)).collect();
        let mut truths = vec![0.5; 10];
        truths[3] = 2.0;
        let (c, se) = coverage(&sets, &truths).unwrap();
        assert!((c - 0.9).abs() < 1e-15);
        assert!((se - (0.09f64 / 10.0).sqrt()).abs() < 1e-15);
        assert!(coverage(&sets, &truths[..3]).is_err());
    }

    #[test]
    fn empty_and_full() {
        let empty = vec![PredictionSet::grid(vec![], 0.5, 10, false); 3];
        assert_eq!(coverage(&empty, &[0.0, 1.0, 2.0]).unwrap().0, 0.0);
        assert_eq!(mean_length(&empty).unwrap().mean, 0.0);
        let pts: Vec<f64> = (0..100).map(|i| i as f64 * 0.2).collect();
        let full = vec![PredictionSet::grid(pts, 0.2, 100, true); 2];
        assert_eq!(coverage(&full, &[1e6, -3.0]).unwrap().0, 1.0);
        assert!((mean_length(&full).unwrap().mean - 20.0).abs() < 1e-12);
    }

    #[test]
    fn one_bin_is_marginal() {
        let sets: Vec<PredictionSet> = (0..7).map(|i| PredictionSet::interval(0.0, i as f64)).collect();
        let truths = vec![2.5; 7];
        let xs: Vec<Vec<f64>> = (0..7).map(|i| vec![(7 - i) as f64]).collect();
        let bins = conditional_coverage_diagnostic(&sets, &truths, &xs, 1).unwrap();
        assert_eq!(bins[0].coverage, coverage(&sets, &truths).unwrap().0);
        let two = conditional_coverage_diagnostic(&sets, &truths, &xs, 2).unwrap();
        assert_eq!(two.iter().map(|b| b.count).sum::<usize>(), 7);
        assert!(two[0].x_hi <= two[1].x_lo);
    }
}
