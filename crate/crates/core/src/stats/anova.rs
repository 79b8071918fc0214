use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::special::f_sf;
use super::{mean, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub name: String,
    pub ss: f64,
    pub df: usize,
    pub ms: f64,
    pub f: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub ss: f64,
    pub df: usize,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub effects: Vec<EffectRow>,
    pub residual: ResidualRow,
    pub total_ss: f64,
}

impl AnovaTable {
    pub fn effect(&self, name: &str) -> Option<&EffectRow> {
        self.effects.iter().find(|e| e.name == name)
    }
}

fn sq(x: f64) -> f64 {
    x * x
}

fn build(effects: Vec<(String, f64, usize)>, ss_e: f64, df_e: usize, total_ss: f64) -> Result<AnovaTable, StatsError> {
    // residual below rounding noise of the data counts as zero
    if ss_e <= 1e-12 * total_ss.max(f64::MIN_POSITIVE) || ss_e == 0.0 {
        return Err(StatsError::Degenerate("zero residual variance".into()));
    }
    let ms_e = ss_e / df_e as f64;
    let effects = effects
        .into_iter()
        .map(|(name, ss, df)| {
            let ms = ss / df as f64;
            let f = ms / ms_e;
            Ok(EffectRow {
                name,
                ss,
                df,
                ms,
                f,
                p: f_sf(f, df as f64, df_e as f64)?,
            })
        })
        .collect::<Result<Vec<_>, StatsError>>()?;
    Ok(AnovaTable {
        effects,
        residual: ResidualRow {
            ss: ss_e,
            df: df_e,
            ms: ms_e,
        },
        total_ss,
    })
}

/// One-way ANOVA with a single `between` effect.
pub fn anova_one_way(groups: &[Vec<f64>]) -> Result<AnovaTable, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::Degenerate(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some((i, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < 2) {
        return Err(StatsError::Degenerate(format!(
            "group {i} has {} values, need at least 2",
            g.len()
        )));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let ss_b: f64 = groups.iter().map(|g| g.len() as f64 * sq(mean(g) - grand)).sum();
    let ss_w: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| sq(x - m)).sum::<f64>()
        })
        .sum();
    let total: f64 = all.iter().map(|x| sq(x - grand)).sum();
    build(
        vec![("between".into(), ss_b, groups.len() - 1)],
        ss_w,
        all.len() - groups.len(),
        total,
    )
}

/// Two-way ANOVA with interaction for a balanced design. Effects are named
/// `a`, `b` and `a:b`; levels are ordered by label.
pub fn anova_two_way<A: AsRef<str>, B: AsRef<str>>(
    values: &[f64],
    factor_a: &[A],
    factor_b: &[B],
) -> Result<AnovaTable, StatsError> {
    if values.len() != factor_a.len() || values.len() != factor_b.len() {
        return Err(StatsError::Degenerate(format!(
            "length mismatch: {} values, {} a-labels, {} b-labels",
            values.len(),
            factor_a.len(),
            factor_b.len()
        )));
    }
    let mut cells: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    let mut a_levels: BTreeMap<&str, ()> = BTreeMap::new();
    let mut b_levels: BTreeMap<&str, ()> = BTreeMap::new();
    for ((v, a), b) in values.iter().zip(factor_a).zip(factor_b) {
        let (a, b) = (a.as_ref(), b.as_ref());
        a_levels.insert(a, ());
        b_levels.insert(b, ());
        cells.entry((a, b)).or_default().push(*v);
    }
    if a_levels.len() < 2 || b_levels.len() < 2 {
        return Err(StatsError::Degenerate("each factor needs at least 2 levels".into()));
    }
    let n = cells.values().map(Vec::len).max().unwrap_or(0);
    for a in a_levels.keys() {
        for b in b_levels.keys() {
            let count = cells.get(&(*a, *b)).map_or(0, Vec::len);
            if count != n || count < 2 {
                return Err(StatsError::Unbalanced(format!(
                    "cell ({a}, {b}) has {count} observations, expected {}",
                    n.max(2)
                )));
            }
        }
    }
    let (na, nb) = (a_levels.len(), b_levels.len());
    let nf = n as f64;
    let grand = mean(values);
    let cell_mean = |a: &str, b: &str| mean(&cells[&(a, b)]);
    let a_mean: BTreeMap<&str, f64> = a_levels
        .keys()
        .map(|&a| (a, b_levels.keys().map(|&b| cell_mean(a, b)).sum::<f64>() / nb as f64))
        .collect();
    let b_mean: BTreeMap<&str, f64> = b_levels
        .keys()
        .map(|&b| (b, a_levels.keys().map(|&a| cell_mean(a, b)).sum::<f64>() / na as f64))
        .collect();
    let ss_a = nb as f64 * nf * a_mean.values().map(|m| sq(m - grand)).sum::<f64>();
    let ss_b = na as f64 * nf * b_mean.values().map(|m| sq(m - grand)).sum::<f64>();
    let mut ss_ab = 0.0;
    let mut ss_e = 0.0;
    for (&(a, b), xs) in &cells {
        let m = mean(xs);
        ss_ab += nf * sq(m - a_mean[a] - b_mean[b] + grand);
        ss_e += xs.iter().map(|x| sq(x - m)).sum::<f64>();
    }
    let total: f64 = values.iter().map(|x| sq(x - grand)).sum();
    build(
        vec![
            ("a".into(), ss_a, na - 1),
            ("b".into(), ss_b, nb - 1),
            ("a:b".into(), ss_ab, (na - 1) * (nb - 1)),
        ],
        ss_e,
        na * nb * (n - 1),
        total,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hand_case() -> (Vec<f64>, Vec<&'static str>, Vec<&'static str>) {
        let values = vec![1.0, 3.0, 1.0, 3.0, 2.0, 4.0, 2.0, 4.0];
        let a = vec!["a1", "a1", "a1", "a1", "a2", "a2", "a2", "a2"];
        let b = vec!["b1", "b1", "b2", "b2", "b1", "b1", "b2", "b2"];
        (values, a, b)
    }

    #[test]
    fn two_way_hand_case() {
        let (v, a, b) = hand_case();
        let t = anova_two_way(&v, &a, &b).unwrap();
        let ea = t.effect("a").unwrap();
        assert!((ea.ss - 2.0).abs() < 1e-9);
        assert!(t.effect("b").unwrap().ss.abs() < 1e-9);
        assert!(t.effect("a:b").unwrap().ss.abs() < 1e-9);
        assert!((t.residual.ss - 8.0).abs() < 1e-9);
        assert_eq!((ea.df, t.residual.df), (1, 4));
        assert!((ea.f - 1.0).abs() < 1e-9);
        // F(1,4) upper tail at 1: 1 - (2/π) atan(1/√... ) via the t relation
        assert!((ea.p - 0.373_900_966_300_059_6).abs() < 1e-6, "{}", ea.p);
        assert_eq!(t.effect("b").unwrap().p, 1.0);
    }

    #[test]
    fn one_way_hand_case() {
        let t = anova_one_way(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let e = &t.effects[0];
        assert!((e.ss - 13.5).abs() < 1e-9);
        assert!((t.residual.ss - 4.0).abs() < 1e-9);
        assert!((e.f - 13.5).abs() < 1e-9);
        assert!((e.p - 0.021).abs() < 1e-3, "{}", e.p);
    }

    #[test]
    fn equal_means_give_zero_f() {
        let t = anova_one_way(&[vec![1.0, 3.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(t.effects[0].f, 0.0);
        assert_eq!(t.effects[0].p, 1.0);
    }

    #[test]
    fn degenerate_and_unbalanced() {
        let err = anova_one_way(&[vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap_err();
        assert!(err.to_string().contains("zero residual variance"));
        let v = [1.0; 8];
        let (_, a, b) = hand_case();
        assert!(anova_two_way(&v, &a, &b)
            .unwrap_err()
            .to_string()
            .contains("zero residual variance"));
        let (v, a, mut b) = hand_case();
        b[3] = "b1";
        let err = anova_two_way(&v, &a, &b).unwrap_err();
        assert!(err.to_string().contains("cell (a1, b"), "{err}");
    }

    proptest! {
        #[test]
        fn two_way_decomposition_and_invariance(
            raw in prop::collection::vec(-10.0f64..10.0, 18),
            shift in -100.0f64..100.0,
            scale in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
        ) {
            let a: Vec<String> = (0..18).map(|i| format!("a{}", i / 6)).collect();
            let b: Vec<String> = (0..18).map(|i| format!("b{}", (i / 3) % 2)).collect();
            let t = anova_two_way(&raw, &a, &b).unwrap();
            let sum: f64 = t.effects.iter().map(|e| e.ss).sum::<f64>() + t.residual.ss;
            prop_assert!((sum - t.total_ss).abs() <= 1e-9 * t.total_ss.max(1.0));
            prop_assert!(t.effects.iter().all(|e| e.ss >= -1e-12 && (0.0..=1.0).contains(&e.p)));

            let moved: Vec<f64> = raw.iter().map(|x| x * scale + shift).collect();
            let u = anova_two_way(&moved, &a, &b).unwrap();
            for (e, f) in t.effects.iter().zip(&u.effects) {
                prop_assert!((e.f - f.f).abs() <= 1e-6 * e.f.max(1.0));
            }

            // reorder observations within cells
            let mut perm: Vec<usize> = (0..18).collect();
            for c in perm.chunks_mut(3) { c.reverse(); }
            let pv: Vec<f64> = perm.iter().map(|&i| raw[i]).collect();
            let w = anova_two_way(&pv, &a, &b).unwrap();
            for (e, f) in t.effects.iter().zip(&w.effects) {
                prop_assert!((e.ss - f.ss).abs() <= 1e-9 * t.total_ss.max(1.0));
            }
        }
    }
}
