//! Effect size, rank-sum test and least-squares line fitting for experiment tables.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    Empty,
    #[error("rank-sum test needs at least {min} values per sample, got {got}")]
    TooSmall { min: usize, got: usize },
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("line fit needs at least two points with distinct x")]
    Degenerate,
}

fn check(sample: &[f64]) -> Result<(), StatsError> {
    if sample.is_empty() {
        return Err(StatsError::Empty);
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Probability that a value drawn from `a` exceeds one drawn from `b`, ties counting half.
pub fn a12_effect_size(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check(a)?;
    check(b)?;
    let mut sorted_b = b.to_vec();
    sorted_b.sort_by(f64::total_cmp);
    let mut score = 0.0;
    for &x in a {
        let below = sorted_b.partition_point(|&y| y < x);
        let not_above = sorted_b.partition_point(|&y| y <= x);
        score += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Ok(score / (a.len() * b.len()) as f64)
}

/// Mid-ranks (1-based) of the pooled sample.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Largest pooled size handled by exhaustive enumeration.
pub const EXACT_MAX_N: usize = 12;

fn pooled(a: &[f64], b: &[f64]) -> Result<Vec<f64>, StatsError> {
    for s in [a, b] {
        check(s)?;
        if s.len() < 3 {
            return Err(StatsError::TooSmall { min: 3, got: s.len() });
        }
    }
    Ok(a.iter().chain(b).copied().collect())
}

fn all_equal(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Two-sided p-value by enumerating every assignment of the pooled ranks to the first sample.
pub fn wilcoxon_exact(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let all = pooled(a, b)?;
    if all_equal(&all) {
        return Ok(1.0);
    }
    let ranks = midranks(&all);
    let (na, n) = (a.len(), all.len());
    let expected = na as f64 * (n + 1) as f64 / 2.0;
    let observed = (ranks[..na].iter().sum::<f64>() - expected).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    let mut choose = |sum: f64| {
        total += 1;
        if (sum - expected).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    };
    // walk all na-subsets of 0..n
    let mut pick: Vec<usize> = (0..na).collect();
    loop {
        choose(pick.iter().map(|&i| ranks[i]).sum());
        let mut i = na;
        while i > 0 && pick[i - 1] == n - na + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        pick[i - 1] += 1;
        for j in i..na {
            pick[j] = pick[j - 1] + 1;
        }
    }
    Ok(extreme as f64 / total as f64)
}

/// Two-sided p-value from the normal approximation of the rank-sum statistic, with tie and
/// continuity corrections.
pub fn wilcoxon_normal_approx(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let all = pooled(a, b)?;
    if all_equal(&all) {
        return Ok(1.0);
    }
    let ranks = midranks(&all);
    let (na, nb, n) = (a.len() as f64, b.len() as f64, all.len() as f64);
    let w: f64 = ranks[..a.len()].iter().sum();
    let mean = na * (n + 1.0) / 2.0;
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let z = (((w - mean).abs() - 0.5).max(0.0)) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok((2.0 * (1.0 - normal.cdf(z))).min(1.0))
}

/// Two-sided rank-sum p-value: exact for pooled size up to [`EXACT_MAX_N`], otherwise the
/// normal approximation.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() + b.len() <= EXACT_MAX_N {
        wilcoxon_exact(a, b)
    } else {
        wilcoxon_normal_approx(a, b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares line through `(xs[i], ys[i])`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit, StatsError> {
    assert_eq!(xs.len(), ys.len(), "paired samples");
    if xs.len() < 2 {
        return Err(StatsError::Degenerate);
    }
    check(xs)?;
    check(ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(StatsError::Degenerate);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_a12(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for x in a {
            for y in b {
                s += if x > y {
                    1.0
                } else if x == y {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (a.len() * b.len()) as f64
    }

    #[test]
    fn a12_examples() {
        assert_eq!(a12_effect_size(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.5);
        assert_eq!(a12_effect_size(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(a12_effect_size(&[3.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(a12_effect_size(&[], &[1.0]), Err(StatsError::Empty));
    }

    /// Exact p by listing every labelling of the pooled values, independent of the rank walk.
    fn brute_exact(a: &[f64], b: &[f64]) -> f64 {
        let all: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = all.len();
        let ranks = midranks(&all);
        let e = a.len() as f64 * (n + 1) as f64 / 2.0;
        let obs = (ranks[..a.len()].iter().sum::<f64>() - e).abs();
        let (mut hit, mut tot) = (0, 0);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != a.len() {
                continue;
            }
            let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            tot += 1;
            if (w - e).abs() >= obs - 1e-9 {
                hit += 1;
            }
        }
        hit as f64 / tot as f64
    }

    #[test]
    fn exact_examples() {
        assert_eq!(wilcoxon_rank_sum(&[2.0; 4], &[2.0; 5]).unwrap(), 1.0);
        assert_eq!(wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        // the most extreme of C(6,3) = 20 splits, in either direction
        assert!((wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(
            wilcoxon_rank_sum(&[1.0, 2.0], &[3.0, 4.0, 5.0]),
            Err(StatsError::TooSmall { min: 3, got: 2 })
        );
    }

    #[test]
    fn large_samples_use_approximation() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        let b: Vec<f64> = (5..15).map(f64::from).collect();
        assert_eq!(
            wilcoxon_rank_sum(&a, &b).unwrap(),
            wilcoxon_normal_approx(&a, &b).unwrap()
        );
        let p = wilcoxon_rank_sum(&a, &b).unwrap();
        assert!(p > 0.0 && p < 0.05);
    }

    #[test]
    fn approximation_is_coarse_for_tiny_samples() {
        // with three values per side the normal curve is off by several hundredths
        let a = [3.0, 4.0, 5.0];
        let b = [1.0, 2.0, 6.0];
        let gap = (wilcoxon_exact(&a, &b).unwrap() - wilcoxon_normal_approx(&a, &b).unwrap()).abs();
        assert!(gap > 0.02 && gap < 0.05, "{gap}");
    }

    #[test]
    fn line_fit() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let f = linear_fit(&xs, &[3.0, 5.0, 7.0, 9.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        // hand-computed: sxy = 2.5, sxx = 5, syy = 2.75
        let f = linear_fit(&xs, &[1.0, 3.0, 2.0, 3.0]).unwrap();
        assert!((f.r_squared - 2.5 * 2.5 / (5.0 * 2.75)).abs() < 1e-12);
        assert_eq!(linear_fit(&[1.0, 1.0], &[1.0, 2.0]), Err(StatsError::Degenerate));
    }

    proptest! {
        #[test]
        fn a12_matches_pair_count(
            a in proptest::collection::vec(0u8..6, 1..=20),
            b in proptest::collection::vec(0u8..6, 1..=20),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let x = a12_effect_size(&a, &b).unwrap();
            prop_assert!((x - brute_a12(&a, &b)).abs() < 1e-12);
            prop_assert!((x + a12_effect_size(&b, &a).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn exact_matches_mask_enumeration(
            a in proptest::collection::vec(0u8..8, 3..=6),
            b in proptest::collection::vec(0u8..8, 3..=6),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let all_same = a.iter().chain(&b).all(|&v| v == a[0]);
            let want = if all_same { 1.0 } else { brute_exact(&a, &b) };
            prop_assert!((wilcoxon_exact(&a, &b).unwrap() - want).abs() < 1e-12);
        }
    }
}
