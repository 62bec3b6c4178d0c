//! Nonparametric person-fit statistics.
//!
//! Items are ranked easiest-first by proportion correct `p_j` (ties keep the
//! original column order). For a respondent with number-correct `r`:
//!
//! * `G` counts item pairs answered "out of order": an easier item wrong and
//!   a harder item right.
//! * `G*` rescales `G` by its maximum `r (J - r)`.
//! * `U3` weighs correct answers by the item logits `c_j = ln(p_j / (1 - p_j))`
//!   and places the weight sum between the best (`r` easiest items) and
//!   worst (`r` hardest items) achievable for that `r`.
//! * `ZU3` standardizes `U3` with its exact mean and variance when all
//!   `C(J, r)` patterns with the same total are equally likely.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::response::{ResponseMatrix, Source};
use crate::scalar::{logit, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PfsError {
    #[error("item '{item}' has proportion correct {p}; filter degenerate items first")]
    DegenerateItem { item: String, p: f64 },
    #[error("proportion correct at position {index} is {p}, must lie strictly inside (0, 1)")]
    InvalidProportion { index: usize, p: f64 },
    #[error("no items")]
    NoItems,
    #[error("total score {r} out of range for null moments (need 0 < r < {j})")]
    ScoreOutOfRange { r: usize, j: usize },
    #[error("all items share one difficulty; U3 is undefined")]
    ConstantDifficulty,
    #[error("reference difficulty missing for item '{0}'")]
    MissingReference(String),
    #[error("pattern has {found} entries, item set has {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

/// The four person-fit measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Measure {
    G,
    GStar,
    U3,
    ZU3,
}

impl Measure {
    pub const ALL: [Measure; 4] = [Measure::G, Measure::GStar, Measure::U3, Measure::ZU3];

    /// Column / report label.
    pub fn label(self) -> &'static str {
        match self {
            Measure::G => "G",
            Measure::GStar => "G_star",
            Measure::U3 => "U3",
            Measure::ZU3 => "ZU3",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl TryFrom<String> for Measure {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Measure> for String {
    fn from(m: Measure) -> Self {
        m.label().to_string()
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "g" => Ok(Measure::G),
            "gstar" | "g_star" | "g*" => Ok(Measure::GStar),
            "u3" => Ok(Measure::U3),
            "zu3" => Ok(Measure::ZU3),
            other => Err(format!("unknown measure '{other}' (expected g, gstar, u3, zu3)")),
        }
    }
}

/// Per-item proportion correct, logits and easiest-first ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemStats<T> {
    p: Vec<T>,
    c: Vec<T>,
    order: Vec<usize>,
    // logits in easiest-first order
    c_ordered: Vec<T>,
    // w_max[r] / w_min[r]: sum of the r largest / r smallest logits
    w_max: Vec<T>,
    w_min: Vec<T>,
    c_mean: T,
    c_var: T,
}

impl<T: Scalar> ItemStats<T> {
    /// Builds item statistics from proportions correct, each in `(0, 1)`.
    pub fn from_proportions(p: Vec<T>) -> Result<Self, PfsError> {
        if p.is_empty() {
            return Err(PfsError::NoItems);
        }
        for (index, &pj) in p.iter().enumerate() {
            if !(pj > T::zero() && pj < T::one()) {
                return Err(PfsError::InvalidProportion {
                    index,
                    p: pj.as_f64(),
                });
            }
        }
        let c: Vec<T> = p.iter().map(|&pj| logit(pj)).collect();
        let mut order: Vec<usize> = (0..p.len()).collect();
        // stable: equal p keep column order
        order.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap_or(Ordering::Equal));
        let c_ordered: Vec<T> = order.iter().map(|&j| c[j]).collect();

        let j_count = p.len();
        let mut w_max = Vec::with_capacity(j_count + 1);
        let mut acc = T::zero();
        w_max.push(acc);
        for &cj in &c_ordered {
            acc = acc + cj;
            w_max.push(acc);
        }
        // Forward summation over the tail so a reversed pattern reproduces
        // w_min bit for bit.
        let w_min = (0..=j_count)
            .map(|r| {
                c_ordered[j_count - r..]
                    .iter()
                    .fold(T::zero(), |s, &cj| s + cj)
            })
            .collect();

        let n = T::of_usize(j_count);
        let c_mean = c.iter().copied().sum::<T>() / n;
        let c_var = c.iter().map(|&cj| (cj - c_mean) * (cj - c_mean)).sum::<T>() / n;

        Ok(Self {
            p,
            c,
            order,
            c_ordered,
            w_max,
            w_min,
            c_mean,
            c_var,
        })
    }

    /// Proportions correct estimated from the matrix itself.
    pub fn from_matrix(m: &ResponseMatrix) -> Result<Self, PfsError> {
        let n = T::of_usize(m.n_respondents());
        let sums = m.column_sums();
        for (j, &s) in sums.iter().enumerate() {
            if s == 0 || s == m.n_respondents() {
                return Err(PfsError::DegenerateItem {
                    item: m.items()[j].clone(),
                    p: s as f64 / m.n_respondents() as f64,
                });
            }
        }
        Self::from_proportions(sums.iter().map(|&s| T::of_usize(s) / n).collect())
    }

    /// Proportions correct taken from a reference table keyed by item id,
    /// aligned to `items`.
    pub fn from_reference(items: &[String], reference: &[(String, f64)]) -> Result<Self, PfsError> {
        let p = items
            .iter()
            .map(|item| {
                reference
                    .iter()
                    .find(|(id, _)| id == item)
                    .map(|&(_, p)| T::of_f64(p))
                    .ok_or_else(|| PfsError::MissingReference(item.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_proportions(p)
    }

    pub fn n_items(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[T] {
        &self.p
    }

    pub fn c(&self) -> &[T] {
        &self.c
    }

    /// Item indices, easiest first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Logits in easiest-first order.
    pub fn c_ordered(&self) -> &[T] {
        &self.c_ordered
    }

    /// Sum of the `r` largest logits.
    pub fn w_max(&self, r: usize) -> T {
        self.w_max[r]
    }

    /// Sum of the `r` smallest logits.
    pub fn w_min(&self, r: usize) -> T {
        self.w_min[r]
    }

    /// Reindexes a response row (original column order) easiest-first.
    pub fn easiest_first(&self, row: &[u8]) -> Vec<u8> {
        self.order.iter().map(|&j| row[j]).collect()
    }
}

/// Number of (easier wrong, harder right) pairs in an easiest-first pattern.
pub fn guttman_errors(ordered: &[u8]) -> u64 {
    let mut zeros = 0u64;
    let mut g = 0u64;
    for &x in ordered {
        if x == 0 {
            zeros += 1;
        } else {
            g += zeros;
        }
    }
    g
}

/// `G / (r (J - r))`, undefined for `r` of 0 or `J`.
pub fn g_star<T: Scalar>(g: u64, r: usize, j: usize) -> Option<T> {
    if r == 0 || r >= j {
        return None;
    }
    let max = (r * (j - r)) as u64;
    Some(T::from_u64(g)? / T::from_u64(max)?)
}

/// U3 for an easiest-first pattern.
pub fn u3<T: Scalar>(ordered: &[u8], stats: &ItemStats<T>) -> Option<T> {
    let j = stats.n_items();
    debug_assert_eq!(ordered.len(), j);
    let r = ordered.iter().filter(|&&x| x == 1).count();
    if r == 0 || r == j {
        return None;
    }
    let w = ordered
        .iter()
        .zip(stats.c_ordered())
        .filter(|(&x, _)| x == 1)
        .fold(T::zero(), |s, (_, &cj)| s + cj);
    let w_max = stats.w_max(r);
    let spread = w_max - stats.w_min(r);
    if spread <= T::zero() {
        return None;
    }
    Some((w_max - w) / spread)
}

/// Mean and variance of U3 given total score `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NullMoments<T> {
    pub r: usize,
    pub expected: T,
    pub variance: T,
}

/// Exact moments of U3 when every pattern with total `r` is equally likely.
///
/// The weight sum `W` is then the total of a size-`r` sample drawn without
/// replacement from the `J` logits, so `E(W) = r c̄` and
/// `Var(W) = r (J - r) / (J - 1) σ²` with `σ²` the population variance.
pub fn null_moments<T: Scalar>(stats: &ItemStats<T>, r: usize) -> Result<NullMoments<T>, PfsError> {
    let j = stats.n_items();
    if r == 0 || r >= j {
        return Err(PfsError::ScoreOutOfRange { r, j });
    }
    let w_max = stats.w_max(r);
    let spread = w_max - stats.w_min(r);
    if spread <= T::zero() {
        return Err(PfsError::ConstantDifficulty);
    }
    let rt = T::of_usize(r);
    let expected_w = rt * stats.c_mean;
    let var_w = rt * T::of_usize(j - r) / T::of_usize(j - 1) * stats.c_var;
    Ok(NullMoments {
        r,
        expected: (w_max - expected_w) / spread,
        variance: var_w / (spread * spread),
    })
}

/// Standardized U3; undefined when the null variance is zero.
pub fn zu3<T: Scalar>(u3_value: T, moments: &NullMoments<T>) -> Option<T> {
    if moments.variance > T::zero() {
        Some((u3_value - moments.expected) / moments.variance.sqrt())
    } else {
        None
    }
}

/// Person-fit statistics for one respondent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PfsRecord<T> {
    pub respondent_id: String,
    pub source: Source,
    /// Number correct.
    pub r: usize,
    pub g: u64,
    pub g_star: Option<T>,
    pub u3: Option<T>,
    pub zu3: Option<T>,
    pub valid: bool,
}

impl<T: Scalar> PfsRecord<T> {
    /// Value of `measure`, whether or not the record is valid.
    pub fn get(&self, measure: Measure) -> Option<T> {
        match measure {
            Measure::G => T::from_u64(self.g),
            Measure::GStar => self.g_star,
            Measure::U3 => self.u3,
            Measure::ZU3 => self.zu3,
        }
    }
}

/// Statistics for a single response row against fixed item statistics.
pub fn person_fit<T: Scalar>(
    row: &[u8],
    stats: &ItemStats<T>,
    moments: &[Option<NullMoments<T>>],
) -> (usize, u64, Option<T>, Option<T>, Option<T>) {
    let j = stats.n_items();
    let ordered = stats.easiest_first(row);
    let r = ordered.iter().filter(|&&x| x == 1).count();
    let g = guttman_errors(&ordered);
    let gs = g_star::<T>(g, r, j);
    let u = u3(&ordered, stats);
    let z = match (u, moments.get(r).copied().flatten()) {
        (Some(u), Some(m)) => zu3(u, &m),
        _ => None,
    };
    (r, g, gs, u, z)
}

fn moments_table<T: Scalar>(stats: &ItemStats<T>) -> Vec<Option<NullMoments<T>>> {
    (0..=stats.n_items())
        .map(|r| null_moments(stats, r).ok())
        .collect()
}

/// All four statistics for every respondent, item difficulties estimated from `m`.
pub fn compute_all<T: Scalar>(m: &ResponseMatrix) -> Result<Vec<PfsRecord<T>>, PfsError> {
    let stats = ItemStats::from_matrix(m)?;
    compute_all_with(m, &stats)
}

/// All four statistics for every respondent against supplied item statistics.
pub fn compute_all_with<T: Scalar>(
    m: &ResponseMatrix,
    stats: &ItemStats<T>,
) -> Result<Vec<PfsRecord<T>>, PfsError> {
    if stats.n_items() != m.n_items() {
        return Err(PfsError::LengthMismatch {
            expected: stats.n_items(),
            found: m.n_items(),
        });
    }
    let moments = moments_table(stats);
    let records = m
        .respondents()
        .par_iter()
        .enumerate()
        .map(|(n, resp)| {
            let (r, g, g_star, u3, zu3) = person_fit(m.row(n), stats, &moments);
            let valid = g_star.is_some() && u3.is_some() && zu3.is_some();
            PfsRecord {
                respondent_id: resp.id.clone(),
                source: resp.source.clone(),
                r,
                g,
                g_star,
                u3,
                zu3,
                valid,
            }
        })
        .collect();
    Ok(records)
}

/// Ids of valid records whose `measure` strictly exceeds `threshold`,
/// largest first.
pub fn flag_aberrant<T: Scalar>(
    records: &[PfsRecord<T>],
    measure: Measure,
    threshold: T,
) -> Vec<String> {
    let mut hits: Vec<(T, &str)> = records
        .iter()
        .filter(|rec| rec.valid)
        .filter_map(|rec| rec.get(measure).map(|v| (v, rec.respondent_id.as_str())))
        .filter(|(v, _)| *v > threshold)
        .collect();
    hits.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    hits.into_iter().map(|(_, id)| id.to_string()).collect()
}
