//! Two-sample tests used for group comparisons.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::StatsError;

/// Largest combined sample size for which the exact U distribution is used.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatisticKind {
    U,
    #[serde(rename = "t")]
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    RankBiserialR,
    CohensD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub statistic_kind: StatisticKind,
    pub p_value: f64,
    pub effect_size: f64,
    pub effect_kind: EffectKind,
    pub method: TestMethod,
    /// Degrees of freedom for t tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
}

/// Midranks of `values` (1-based) and the tie-group sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Number of rank arrangements yielding each U value for sample sizes
/// `(m, n)`; index is U.
pub fn u_distribution(m: usize, n: usize) -> Vec<f64> {
    // counts[i][j] = distribution for sizes (i, j); built up over j.
    let mut prev: Vec<Vec<f64>> = (0..=m).map(|_| vec![1.0]).collect();
    for j in 1..=n {
        let mut cur: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        cur.push(vec![1.0]);
        for i in 1..=m {
            // The largest observation is either from sample A (adds j to U)
            // or from sample B (adds nothing).
            let mut dist = vec![0.0; i * j + 1];
            for (u, c) in cur[i - 1].iter().enumerate() {
                dist[u + j] += c;
            }
            for (u, c) in prev[i].iter().enumerate() {
                dist[u] += c;
            }
            cur.push(dist);
        }
        prev = cur;
    }
    prev.swap_remove(m)
}

fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Normal approximation of the two-sided U p-value with tie and
/// continuity corrections. `ties` holds the sizes of tied groups.
pub fn normal_approx_p(u: f64, na: usize, nb: usize, ties: &[usize]) -> f64 {
    let n = (na + nb) as f64;
    let nn = (na * nb) as f64;
    let tie_term: f64 =
        ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0)).max(1.0);
    let var = nn / 12.0 * ((n + 1.0) - tie_term);
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - nn / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    normal_two_sided(z)
}

/// Wilcoxon-Mann-Whitney U test, two-sided.
///
/// The statistic is U for sample `a`. Small tie-free samples get the exact
/// p-value, otherwise the normal approximation with tie and continuity
/// corrections. The effect size is the absolute rank-biserial correlation.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    if a.is_empty() {
        return Err(StatsError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(StatsError::EmptySample("b"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite observation".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u = rank_sum_a - (na * (na + 1)) as f64 / 2.0;
    let nn = (na * nb) as f64;
    let effect_size = (1.0 - 2.0 * u / nn).abs();

    let (p_value, method) = if n <= EXACT_MAX_N && ties.is_empty() {
        let dist = u_distribution(na, nb);
        let total: f64 = dist.iter().sum();
        let k = u.round() as usize;
        let lower: f64 = dist[..=k].iter().sum::<f64>() / total;
        let upper: f64 = dist[k..].iter().sum::<f64>() / total;
        ((2.0 * lower.min(upper)).min(1.0), TestMethod::Exact)
    } else {
        let p = normal_approx_p(u, na, nb, &ties);
        (p, TestMethod::NormalApprox)
    };

    Ok(TestResult {
        statistic: u,
        statistic_kind: StatisticKind::U,
        p_value,
        effect_size,
        effect_kind: EffectKind::RankBiserialR,
        method,
        df: None,
    })
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch two-sample t test with Cohen's d from the pooled SD.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    if a.len() < 2 {
        return Err(StatsError::TooFewObservations("a", 2));
    }
    if b.len() < 2 {
        return Err(StatsError::TooFewObservations("b", 2));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va <= 0.0 && vb <= 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let pooled = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    Ok(TestResult {
        statistic: t,
        statistic_kind: StatisticKind::T,
        p_value: student_t_two_sided(t, df),
        effect_size: (ma - mb) / pooled,
        effect_kind: EffectKind::CohensD,
        method: TestMethod::Welch,
        df: Some(df),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Enumerate every way of assigning ranks 1..=n to sample A.
    fn enumerate_two_sided(na: usize, nb: usize, u_obs: f64) -> f64 {
        let n = na + nb;
        let mut lower = 0u64;
        let mut upper = 0u64;
        let mut total = 0u64;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != na {
                continue;
            }
            let rank_sum: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
            let u = rank_sum as f64 - (na * (na + 1)) as f64 / 2.0;
            total += 1;
            if u <= u_obs {
                lower += 1;
            }
            if u >= u_obs {
                upper += 1;
            }
        }
        (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
    }

    #[test]
    fn exact_p_for_separated_triples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.method, TestMethod::Exact);
        assert!((r.p_value - enumerate_two_sided(3, 3, 0.0)).abs() < 1e-12);
        assert!((r.p_value - 0.1).abs() < 1e-12);
        assert_eq!(r.effect_size, 1.0);
    }

    #[test]
    fn exact_matches_enumeration_for_small_sizes() {
        let a = [0.3, 2.2, 5.1, 7.7, 1.4];
        let b = [0.9, 3.3, 4.4, 6.2, 8.8, 9.1];
        let r = mann_whitney_u(&a, &b).unwrap();
        assert!((r.p_value - enumerate_two_sided(5, 6, r.statistic)).abs() < 1e-12);
        let dist = u_distribution(4, 7);
        assert_eq!(dist.iter().sum::<f64>(), 330.0);
        assert_eq!(dist.len(), 29);
    }

    #[test]
    fn identical_samples_have_zero_effect() {
        let x = [1.0, 4.0, 2.0, 8.0];
        let r = mann_whitney_u(&x, &x).unwrap();
        assert_eq!(r.effect_size, 0.0);
        assert_eq!(r.method, TestMethod::NormalApprox);
    }

    #[test]
    fn exact_and_approx_agree_at_eight_plus_eight() {
        let a = [1.0, 3.0, 4.0, 7.0, 9.0, 10.0, 14.0, 15.0];
        let b = [2.0, 5.0, 6.0, 8.0, 11.0, 12.0, 13.0, 16.0];
        let exact = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(exact.method, TestMethod::Exact);
        let approx = normal_approx_p(exact.statistic, 8, 8, &[]);
        assert!(
            (exact.p_value - approx).abs() < 0.02,
            "{} vs {approx}",
            exact.p_value
        );
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert_eq!(
            mann_whitney_u(&[], &[1.0]),
            Err(StatsError::EmptySample("a"))
        );
        assert_eq!(
            mann_whitney_u(&[1.0], &[]),
            Err(StatsError::EmptySample("b"))
        );
    }

    #[test]
    fn welch_identical_and_shifted() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = welch_t(&a, &a).unwrap();
        assert_eq!((r.statistic, r.p_value, r.effect_size), (0.0, 1.0, 0.0));
        let b: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        let r = welch_t(&a, &b).unwrap();
        assert!(r.p_value < 0.01);
        assert!(r.effect_size.abs() > 5.0);
        let swapped = welch_t(&b, &a).unwrap();
        assert_eq!(swapped.statistic, -r.statistic);
        assert_eq!(swapped.effect_size, -r.effect_size);
        assert!((swapped.p_value - r.p_value).abs() < 1e-15);
        assert_eq!(
            welch_t(&[1.0, 1.0], &[2.0, 2.0]),
            Err(StatsError::DegenerateVariance)
        );
        assert!(welch_t(&[1.0], &[2.0, 3.0]).is_err());
    }

    /// Two-sided t tail by Simpson integration of the density.
    fn t_tail_quadrature(t: f64, df: f64) -> f64 {
        let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp()
            / (df * std::f64::consts::PI).sqrt();
        let pdf = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        let steps = 20_000;
        let h = t.abs() / steps as f64;
        let mut s = pdf(0.0) + pdf(t.abs());
        for i in 1..steps {
            s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        1.0 - 2.0 * s * h / 3.0
    }

    #[test]
    fn t_tail_matches_quadrature() {
        for &(t, df) in &[
            (0.5, 3.0),
            (2.1, 7.5),
            (3.755, 40.0),
            (-1.3, 2.2),
            (6.0, 5.0),
        ] {
            let p = student_t_two_sided(t, df);
            let q = t_tail_quadrature(t, df);
            assert!((p - q).abs() < 1e-7, "t={t} df={df}: {p} vs {q}");
        }
    }

    #[test]
    fn incomplete_beta_known_values() {
        assert!((regularized_incomplete_beta(1.0, 1.0, 0.3) - 0.3).abs() < 1e-14);
        // I_x(a, 1) = x^a
        assert!((regularized_incomplete_beta(2.5, 1.0, 0.6) - 0.6f64.powf(2.5)).abs() < 1e-13);
        let x = 0.35;
        let lhs = regularized_incomplete_beta(3.0, 4.5, x);
        let rhs = 1.0 - regularized_incomplete_beta(4.5, 3.0, 1.0 - x);
        assert!((lhs - rhs).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn mwu_is_rank_invariant(
            a in prop::collection::vec(-100.0f64..100.0, 1..15),
            b in prop::collection::vec(-100.0f64..100.0, 1..15),
        ) {
            let r1 = mann_whitney_u(&a, &b).unwrap();
            let f = |v: &f64| (v / 50.0).exp() - 3.0;
            let ta: Vec<f64> = a.iter().map(f).collect();
            let tb: Vec<f64> = b.iter().map(f).collect();
            let r2 = mann_whitney_u(&ta, &tb).unwrap();
            prop_assert_eq!(r1.statistic, r2.statistic);
            prop_assert!((r1.p_value - r2.p_value).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r1.p_value));
        }
    }
}
