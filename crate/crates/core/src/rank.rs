//! Rank-based tests: two-sample Wilcoxon rank-sum (Mann-Whitney),
//! Kruskal-Wallis and Dunn's pairwise post-hoc test.
//!
//! All statistics use mid-ranks for ties with the usual tie-corrected
//! variances. P-values come either from the large-sample approximations
//! (normal with a 0.5 continuity correction, chi-square) or from the exact
//! permutation distribution of the observed mid-ranks.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::scalar::Scalar;

/// Groups at or below this size get exact p-values under [`PValueMethod::Auto`].
pub const EXACT_MAX_GROUP: usize = 8;
/// Exact Kruskal-Wallis is available for at most this many groups.
pub const EXACT_MAX_GROUPS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankError {
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("need at least {need} groups, found {found}")]
    TooFewGroups { need: usize, found: usize },
    #[error("input contains NaN")]
    NotANumber,
    #[error("exact p-values support at most {EXACT_MAX_GROUPS} groups")]
    ExactUnsupported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    WilcoxonRankSum,
    KruskalWallis,
    Dunn,
}

/// Direction of the alternative, stated for the first group against the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// First group stochastically smaller.
    #[default]
    Less,
    Greater,
    TwoSided,
}

impl Alternative {
    pub fn flipped(self) -> Self {
        match self {
            Alternative::Less => Alternative::Greater,
            Alternative::Greater => Alternative::Less,
            Alternative::TwoSided => Alternative::TwoSided,
        }
    }
}

impl std::str::FromStr for Alternative {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "less" => Ok(Alternative::Less),
            "greater" => Ok(Alternative::Greater),
            "two_sided" | "two-sided" | "twosided" => Ok(Alternative::TwoSided),
            other => Err(format!("unknown alternative '{other}' (expected less|greater)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    #[default]
    None,
    Bonferroni,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Exact for small groups, asymptotic otherwise.
    #[default]
    Auto,
    Asymptotic,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub test: TestKind,
    /// U of the first group, H, or Dunn's z.
    pub statistic: f64,
    /// Normal deviate where one applies.
    pub z: Option<f64>,
    pub p_value: f64,
    /// Dunn only: p before the multiplicity correction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_unadjusted: Option<f64>,
    pub alternative: Alternative,
    pub group_sizes: Vec<usize>,
    pub group_labels: Vec<String>,
    pub correction: Correction,
    /// Method actually used (never `Auto`).
    pub method: PValueMethod,
    /// Every pooled value tied; the test carries no information.
    pub degenerate: bool,
    #[serde(skip)]
    group_index: Vec<usize>,
}

impl TestResult {
    /// Replaces the default `g1, g2, ...` labels with caller names, indexed by
    /// the position of each group in the original input.
    pub fn with_labels<S: AsRef<str>>(mut self, labels: &[S]) -> Self {
        self.group_labels = self
            .group_index
            .iter()
            .map(|&i| labels.get(i).map_or_else(|| format!("g{}", i + 1), |s| s.as_ref().to_string()))
            .collect();
        self
    }
}

fn default_labels(idx: &[usize]) -> Vec<String> {
    idx.iter().map(|i| format!("g{}", i + 1)).collect()
}

/// Pooled mid-ranks (1-based) and the tie term `Σ (t³ − t)`.
pub fn midranks<T: Scalar>(pooled: &[T]) -> Result<(Vec<f64>, f64), RankError> {
    if pooled.iter().any(|v| v.is_nan()) {
        return Err(RankError::NotANumber);
    }
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&a, &b| pooled[a].partial_cmp(&pooled[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; pooled.len()];
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && pooled[idx[end]] == pooled[idx[start]] {
            end += 1;
        }
        // positions start..end share rank (start+1 + end) / 2
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    Ok((ranks, tie_term))
}

fn std_normal() -> Normal {
    Normal::standard()
}

fn check_groups<T, G: AsRef<[T]>>(groups: &[G], need: usize) -> Result<(), RankError> {
    if groups.len() < need {
        return Err(RankError::TooFewGroups {
            need,
            found: groups.len(),
        });
    }
    if let Some(i) = groups.iter().position(|g| g.as_ref().is_empty()) {
        return Err(RankError::EmptyGroup(i));
    }
    Ok(())
}

fn resolve<T, G: AsRef<[T]>>(groups: &[G], method: PValueMethod) -> Result<PValueMethod, RankError> {
    match method {
        PValueMethod::Auto => {
            let small = groups.len() <= EXACT_MAX_GROUPS
                && groups.iter().all(|g| g.as_ref().len() <= EXACT_MAX_GROUP);
            Ok(if small {
                PValueMethod::Exact
            } else {
                PValueMethod::Asymptotic
            })
        }
        PValueMethod::Exact if groups.len() > EXACT_MAX_GROUPS => Err(RankError::ExactUnsupported),
        m => Ok(m),
    }
}

/// Rank-sum test of `a` against `b` with the default p-value method.
pub fn wilcoxon_rank_sum<T: Scalar>(
    a: &[T],
    b: &[T],
    alternative: Alternative,
) -> Result<TestResult, RankError> {
    wilcoxon_rank_sum_with(a, b, alternative, PValueMethod::Auto)
}

/// Rank-sum test of `a` against `b`.
///
/// `statistic` is `U` of `a`. `z` uses the continuity correction in the
/// direction of the alternative and is negative when `a` tends to rank below `b`.
pub fn wilcoxon_rank_sum_with<T: Scalar>(
    a: &[T],
    b: &[T],
    alternative: Alternative,
    method: PValueMethod,
) -> Result<TestResult, RankError> {
    check_groups(&[a, b], 2)?;
    let method = resolve(&[a, b], method)?;
    let pooled: Vec<T> = a.iter().chain(b).copied().collect();
    let (ranks, tie_term) = midranks(&pooled)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let rank_sum_a: f64 = ranks[..a.len()].iter().sum();
    let u = rank_sum_a - na * (na + 1.0) / 2.0;
    let mu = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));

    let mut result = TestResult {
        test: TestKind::WilcoxonRankSum,
        statistic: u,
        z: Some(0.0),
        p_value: 1.0,
        p_unadjusted: None,
        alternative,
        group_sizes: vec![a.len(), b.len()],
        group_labels: default_labels(&[0, 1]),
        correction: Correction::None,
        method,
        degenerate: false,
        group_index: vec![0, 1],
    };
    if var <= 0.0 {
        result.degenerate = true;
        return Ok(result);
    }
    let d = u - mu;
    let correction = match alternative {
        Alternative::Less => -0.5,
        Alternative::Greater => 0.5,
        Alternative::TwoSided if d == 0.0 => 0.0,
        Alternative::TwoSided => 0.5 * d.signum(),
    };
    let z = (d - correction) / var.sqrt();
    result.z = Some(z);
    result.p_value = match method {
        PValueMethod::Exact => exact_rank_sum_p(&ranks, a.len(), alternative),
        _ => {
            let nd = std_normal();
            match alternative {
                Alternative::Less => nd.cdf(z),
                Alternative::Greater => nd.sf(z),
                Alternative::TwoSided => (2.0 * nd.cdf(z).min(nd.sf(z))).min(1.0),
            }
        }
    };
    Ok(result)
}

/// Mid-ranks as integers on a common grid: scale 1 when all ranks are whole,
/// 2 when some tie produced a half rank.
fn integer_ranks(ranks: &[f64]) -> (Vec<usize>, usize) {
    let whole = ranks.iter().all(|r| r.fract() == 0.0);
    let scale = if whole { 1 } else { 2 };
    let ints = ranks
        .iter()
        .map(|&r| (r * scale as f64).round() as usize)
        .collect();
    (ints, scale)
}

/// Exact p of the rank sum of the first `na` pooled ranks over all
/// `C(N, na)` equally likely group assignments.
fn exact_rank_sum_p(ranks: &[f64], na: usize, alternative: Alternative) -> f64 {
    let (ints, _) = integer_ranks(ranks);
    let observed: usize = ints[..na].iter().sum();
    let max_sum: usize = {
        let mut sorted = ints.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        sorted[..na].iter().sum()
    };
    // counts[k][s]: subsets of size k with rank sum s
    let width = max_sum + 1;
    let mut counts = vec![0f64; (na + 1) * width];
    counts[0] = 1.0;
    for (t, &v) in ints.iter().enumerate() {
        for k in (1..=na.min(t + 1)).rev() {
            let (lo, hi) = counts.split_at_mut(k * width);
            let prev = &lo[(k - 1) * width..];
            let cur = &mut hi[..width];
            for s in (v..width).rev() {
                cur[s] += prev[s - v];
            }
        }
    }
    let dist = &counts[na * width..];
    let total: f64 = dist.iter().sum();
    let le: f64 = dist[..=observed.min(max_sum)].iter().sum();
    let ge: f64 = dist[observed.min(width)..].iter().sum();
    let (p_le, p_ge) = (le / total, ge / total);
    match alternative {
        Alternative::Less => p_le,
        Alternative::Greater => p_ge,
        Alternative::TwoSided => (2.0 * p_le.min(p_ge)).min(1.0),
    }
}

/// Kruskal-Wallis test with the default p-value method.
pub fn kruskal_wallis<T: Scalar, G: AsRef<[T]>>(groups: &[G]) -> Result<TestResult, RankError> {
    kruskal_wallis_with(groups, PValueMethod::Auto)
}

/// Kruskal-Wallis H with tie correction; p from chi-square with `k − 1`
/// degrees of freedom or from the exact permutation distribution.
pub fn kruskal_wallis_with<T: Scalar, G: AsRef<[T]>>(
    groups: &[G],
    method: PValueMethod,
) -> Result<TestResult, RankError> {
    check_groups(groups, 2)?;
    let method = resolve(groups, method)?;
    let sizes: Vec<usize> = groups.iter().map(|g| g.as_ref().len()).collect();
    let pooled: Vec<T> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    let (ranks, tie_term) = midranks(&pooled)?;
    let n = pooled.len() as f64;
    let k = groups.len();

    let mut result = TestResult {
        test: TestKind::KruskalWallis,
        statistic: 0.0,
        z: None,
        p_value: 1.0,
        p_unadjusted: None,
        alternative: Alternative::TwoSided,
        group_sizes: sizes.clone(),
        group_labels: default_labels(&(0..k).collect::<Vec<_>>()),
        correction: Correction::None,
        method,
        degenerate: false,
        group_index: (0..k).collect(),
    };
    let tie_factor = 1.0 - tie_term / (n * n * n - n);
    if tie_factor <= 0.0 {
        result.degenerate = true;
        return Ok(result);
    }
    let mut offset = 0;
    let mut weighted = 0.0;
    for &size in &sizes {
        let rs: f64 = ranks[offset..offset + size].iter().sum();
        weighted += rs * rs / size as f64;
        offset += size;
    }
    let h = (12.0 / (n * (n + 1.0)) * weighted - 3.0 * (n + 1.0)) / tie_factor;
    let h = h.max(0.0);
    result.statistic = h;
    result.p_value = match method {
        PValueMethod::Exact => exact_kw_p(&ranks, &sizes),
        _ => ChiSquared::new((k - 1) as f64)
            .map(|d| d.sf(h))
            .unwrap_or(1.0),
    };
    Ok(result)
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Exact upper-tail p of Kruskal-Wallis over all multinomial group
/// assignments of the observed mid-ranks, for two or three groups.
///
/// H is increasing in `Σ R_i² / n_i`, which is compared exactly as the
/// integer `Σ R_i² · (L / n_i)` with `L = lcm(n_i)`.
fn exact_kw_p(ranks: &[f64], sizes: &[usize]) -> f64 {
    let (ints, _) = integer_ranks(ranks);
    let lcm = sizes
        .iter()
        .fold(1u128, |l, &s| l / gcd(l, s as u128) * s as u128);
    let score = |sums: &[usize]| -> u128 {
        sums.iter()
            .zip(sizes)
            .map(|(&s, &n)| (s as u128) * (s as u128) * (lcm / n as u128))
            .sum()
    };
    let mut observed_sums = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &size in sizes {
        observed_sums.push(ints[offset..offset + size].iter().sum::<usize>());
        offset += size;
    }
    let observed = score(&observed_sums);
    let total_sum: usize = ints.iter().sum();

    // Dense DP over (c1, c2, s1, s2); the last group is implied.
    let (n1, n2) = (sizes[0], if sizes.len() == 3 { sizes[1] } else { 0 });
    let n_last = *sizes.last().unwrap();
    let top = |count: usize| -> usize {
        let mut v = ints.clone();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v[..count].iter().sum()
    };
    let (w1, w2) = (top(n1) + 1, top(n2) + 1);
    let plane = w1 * w2;
    let idx = |c1: usize, c2: usize| (c1 * (n2 + 1) + c2) * plane;
    let mut dp = vec![0f64; (n1 + 1) * (n2 + 1) * plane];
    dp[0] = 1.0;
    for (t, &v) in ints.iter().enumerate() {
        // t values assigned so far; after this step t + 1
        for c1 in (0..=n1.min(t + 1)).rev() {
            for c2 in (0..=n2.min(t + 1 - c1)).rev() {
                let base = idx(c1, c2);
                let stays = t + 1 - c1 - c2;
                if stays == 0 || stays > n_last {
                    dp[base..base + plane].iter_mut().for_each(|x| *x = 0.0);
                }
                if c1 > 0 {
                    let src = idx(c1 - 1, c2);
                    for s1 in (v..w1).rev() {
                        for s2 in 0..w2 {
                            let add = dp[src + (s1 - v) * w2 + s2];
                            if add != 0.0 {
                                dp[base + s1 * w2 + s2] += add;
                            }
                        }
                    }
                }
                if c2 > 0 {
                    let src = idx(c1, c2 - 1);
                    for s1 in 0..w1 {
                        for s2 in (v..w2).rev() {
                            let add = dp[src + s1 * w2 + s2 - v];
                            if add != 0.0 {
                                dp[base + s1 * w2 + s2] += add;
                            }
                        }
                    }
                }
            }
        }
    }
    let base = idx(n1, n2);
    let mut total = 0.0;
    let mut upper = 0.0;
    for s1 in 0..w1 {
        for s2 in 0..w2 {
            let w = dp[base + s1 * w2 + s2];
            if w == 0.0 {
                continue;
            }
            total += w;
            let s_last = total_sum - s1 - s2;
            let sums: Vec<usize> = if sizes.len() == 3 {
                vec![s1, s2, s_last]
            } else {
                vec![s1, s_last]
            };
            if score(&sums) >= observed {
                upper += w;
            }
        }
    }
    (upper / total).min(1.0)
}

/// Dunn's pairwise comparisons after Kruskal-Wallis, one result per
/// unordered pair `(i, j)` with `i < j`, in lexicographic order.
///
/// `z = (R̄_i − R̄_j) / sqrt(σ² (1/n_i + 1/n_j))` with the tie-corrected
/// pooled variance `σ² = N(N+1)/12 − Σ(t³ − t) / (12 (N − 1))`; p is
/// two-sided, multiplied by the number of pairs under Bonferroni and capped at 1.
pub fn dunn_posthoc<T: Scalar, G: AsRef<[T]>>(
    groups: &[G],
    correction: Correction,
) -> Result<Vec<TestResult>, RankError> {
    check_groups(groups, 2)?;
    let sizes: Vec<usize> = groups.iter().map(|g| g.as_ref().len()).collect();
    let pooled: Vec<T> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    let (ranks, tie_term) = midranks(&pooled)?;
    let n = pooled.len() as f64;
    let sigma2 = n * (n + 1.0) / 12.0 - tie_term / (12.0 * (n - 1.0));
    let degenerate = sigma2.partial_cmp(&(1e-12 * n * n)) != Some(std::cmp::Ordering::Greater);

    let mut means = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &size in &sizes {
        means.push(ranks[offset..offset + size].iter().sum::<f64>() / size as f64);
        offset += size;
    }
    let k = sizes.len();
    let pairs = k * (k - 1) / 2;
    let nd = std_normal();
    let mut out = Vec::with_capacity(pairs);
    for i in 0..k {
        for j in i + 1..k {
            let (z, raw) = if degenerate {
                (0.0, 1.0)
            } else {
                let se = (sigma2 * (1.0 / sizes[i] as f64 + 1.0 / sizes[j] as f64)).sqrt();
                let z = (means[i] - means[j]) / se;
                (z, (2.0 * nd.sf(z.abs())).min(1.0))
            };
            let p = match correction {
                Correction::None => raw,
                Correction::Bonferroni => (raw * pairs as f64).min(1.0),
            };
            out.push(TestResult {
                test: TestKind::Dunn,
                statistic: z,
                z: Some(z),
                p_value: p,
                p_unadjusted: Some(raw),
                alternative: Alternative::TwoSided,
                group_sizes: vec![sizes[i], sizes[j]],
                group_labels: default_labels(&[i, j]),
                correction,
                method: PValueMethod::Asymptotic,
                degenerate,
                group_index: vec![i, j],
            });
        }
    }
    Ok(out)
}
