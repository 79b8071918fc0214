//! ANOVA, Tukey HSD, rank correlation and the distribution functions they
//! rest on.

mod anova;
mod ptukey;
pub mod special;
mod tukey;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anova::{anova_one_way, anova_two_way, AnovaTable, EffectRow, ResidualRow};
pub use ptukey::{studentized_range_cdf, studentized_range_sf};
pub use special::{beta_inc, f_cdf, f_sf, t_two_sided_p};
pub use tukey::{tukey_hsd, TukeyPair, TukeyResult};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("unbalanced design: {0}")]
    Unbalanced(String),
    #[error("numerical integration did not converge: {0}")]
    NoConvergence(String),
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub p: f64,
    pub n: usize,
}

/// Pearson correlation with a two-sided t-test p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::Domain(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::Domain(format!("need at least 3 pairs, got {n}")));
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Degenerate("undefined correlation: constant input".into()));
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if rho.abs() == 1.0 {
        0.0
    } else {
        t_two_sided_p(rho * (df / (1.0 - rho * rho)).sqrt(), df)?
    };
    Ok(Correlation { rho, p, n })
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::Domain(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spearman_tie_case() {
        let r = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r.rho - 4.5 / 22.5f64.sqrt()).abs() < 1e-12);
        assert!((r.rho - 0.948_683_3).abs() < 1e-6);
    }

    #[test]
    fn spearman_monotone_and_errors() {
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 35.0, 90.0]).unwrap();
        assert_eq!(r.rho, 1.0);
        assert_eq!(r.p, 0.0);
        let err = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(err.to_string().contains("undefined correlation"));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    proptest! {
        #[test]
        fn spearman_properties(
            x in prop::collection::vec(-50i32..50, 5..30),
            seed in prop::collection::vec(-50i32..50, 30),
        ) {
            let n = x.len();
            let x: Vec<f64> = x.into_iter().map(f64::from).collect();
            let y: Vec<f64> = seed[..n].iter().map(|&v| f64::from(v)).collect();
            prop_assume!(x.iter().any(|&v| v != x[0]) && y.iter().any(|&v| v != y[0]));
            let r = spearman(&x, &y).unwrap();
            prop_assert!((-1.0..=1.0).contains(&r.rho));
            prop_assert!((0.0..=1.0).contains(&r.p));
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            prop_assert!((spearman(&x, &neg).unwrap().rho + r.rho).abs() < 1e-12);
            let cubed: Vec<f64> = x.iter().map(|v| v.powi(3) + 7.0).collect();
            prop_assert!((spearman(&cubed, &y).unwrap().rho - r.rho).abs() < 1e-12);
        }
    }
}
