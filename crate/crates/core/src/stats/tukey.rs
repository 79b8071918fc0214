use serde::{Deserialize, Serialize};

use super::anova::anova_one_way;
use super::ptukey::studentized_range_sf;
use super::{mean, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyPair {
    pub i: usize,
    pub j: usize,
    /// `mean_i - mean_j`.
    pub mean_diff: f64,
    pub q: f64,
    pub p: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyResult {
    pub alpha: f64,
    pub ms_within: f64,
    pub df: usize,
    pub pairs: Vec<TukeyPair>,
}

/// Tukey's honestly significant difference test for groups of equal size.
pub fn tukey_hsd(groups: &[Vec<f64>], alpha: f64) -> Result<TukeyResult, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::Domain(format!("alpha = {alpha} outside (0, 1)")));
    }
    let table = anova_one_way(groups)?;
    let n = groups[0].len();
    if let Some((i, g)) = groups.iter().enumerate().find(|(_, g)| g.len() != n) {
        return Err(StatsError::Unbalanced(format!(
            "group {i} has {} values, expected {n}",
            g.len()
        )));
    }
    let k = groups.len();
    let ms_w = table.residual.ms;
    let df = table.residual.df;
    let se = (ms_w / n as f64).sqrt();
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let diff = means[i] - means[j];
            let q = diff.abs() / se;
            let p = studentized_range_sf(q, k, df as f64)?;
            pairs.push(TukeyPair {
                i,
                j,
                mean_diff: diff,
                q,
                p,
                reject: p < alpha,
            });
        }
    }
    Ok(TukeyResult {
        alpha,
        ms_within: ms_w,
        df,
        pairs,
    })
}
