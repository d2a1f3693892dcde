use serde::{Deserialize, Serialize};

use super::special::f_distribution_sf;
use crate::{Error, Result};

/// Outcome of a one-way analysis of variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    /// Infinite when the groups differ but have no within-group spread.
    #[serde(with = "crate::harness::serde_f64")]
    pub f_stat: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
    /// Set when the within-group sum of squares is exactly zero.
    pub degenerate: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::Input(format!(
            "ANOVA needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some(g) = groups.iter().position(|g| g.len() < 2) {
        return Err(Error::Input(format!(
            "ANOVA group {g} has {} observations, need at least 2",
            groups[g].len()
        )));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Input("ANOVA observations must be finite".into()));
    }

    let n_total: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n_total as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = n_total - groups.len();

    if ss_within == 0.0 {
        let (f_stat, p_value) = if ss_between > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (0.0, 1.0)
        };
        return Ok(AnovaResult {
            f_stat,
            p_value,
            df_between,
            df_within,
            degenerate: true,
        });
    }

    let f_stat = (ss_between / df_between as f64) / (ss_within / df_within as f64);
    let p_value = f_distribution_sf(f_stat, df_between as f64, df_within as f64)?;
    Ok(AnovaResult {
        f_stat,
        p_value,
        df_between,
        df_within,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_groups() {
        let r = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.f_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn zero_within_variance_is_degenerate() {
        let r = one_way_anova(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 0.0);
        assert!(r.f_stat.is_infinite());
        let flat = one_way_anova(&[vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.p_value, 1.0);
    }

    #[test]
    fn shifted_groups_match_textbook_formula() {
        // means 2,3,4; grand 3; SSB = 3·(1+0+1) = 6; SSW = 3·2 = 6
        // F = (6/2)/(6/6) = 3; P(F_{2,6} > 3) = (1 + 2·3/6)^{-3} = 1/8
        let r = one_way_anova(&[
            vec![1.0, 2.0, 3.0],
            vec![2.0, 3.0, 4.0],
            vec![3.0, 4.0, 5.0],
        ])
        .unwrap();
        assert_eq!((r.df_between, r.df_within), (2, 6));
        assert!((r.f_stat - 3.0).abs() < 1e-9);
        assert!((r.p_value - 0.125).abs() < 1e-9);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(one_way_anova(&[vec![1.0, 2.0]]), Err(Error::Input(_))));
        assert!(matches!(
            one_way_anova(&[vec![1.0, 2.0], vec![3.0]]),
            Err(Error::Input(_))
        ));
    }

    proptest! {
        #[test]
        fn invariant_to_common_shift(
            a in proptest::collection::vec(-10.0f64..10.0, 2..8),
            b in proptest::collection::vec(-10.0f64..10.0, 2..8),
            shift in -100.0f64..100.0,
        ) {
            let base = one_way_anova(&[a.clone(), b.clone()]).unwrap();
            prop_assume!(!base.degenerate);
            let moved = one_way_anova(&[
                a.iter().map(|v| v + shift).collect(),
                b.iter().map(|v| v + shift).collect(),
            ]).unwrap();
            prop_assert!((base.f_stat - moved.f_stat).abs() <= 1e-9 * base.f_stat.max(1.0));
            prop_assert!((0.0..=1.0).contains(&base.p_value));
        }
    }
}
