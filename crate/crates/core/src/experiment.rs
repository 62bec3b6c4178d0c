//! Research pipelines: pollution mixing, the human-versus-agent comparison,
//! the comparison across several agents, and the pollution sweep.
//!
//! Every pipeline scores person fit on the mixed matrix, so the aberrant
//! rows take part in the item difficulty estimates. Human rows always come
//! first in a mix, followed by the agent rows in input order.
//!
//! Seeds: a report's master seed keys the ChaCha8 stream that picks the
//! human subset (`stream_rng(seed, domain::MIX, 0)`); nothing else in a
//! report is random, so the same design always reproduces the same rows.
//! Under one seed the subsets of different levels are nested, which keeps
//! a sweep's level-to-level differences free of subsampling noise.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::DifficultySource;
use crate::pfs::{compute_all_with, ItemStats, Measure, PfsError, PfsRecord};
use crate::rank::{
    dunn_posthoc, kruskal_wallis, wilcoxon_rank_sum, Alternative, Correction, PValueMethod,
    RankError, TestKind, TestResult,
};
use crate::response::{filter_degenerate_items, DataError, Respondent, ResponseMatrix};
use crate::rng::{domain, stream_rng};

/// Kruskal-Wallis p below which Dunn comparisons are reported as confirmatory.
pub const POSTHOC_ALPHA: f64 = 0.05;
/// Kruskal-Wallis p below which Dunn comparisons are still reported, marked exploratory.
pub const POSTHOC_EXPLORATORY: f64 = 0.10;
/// Upper bound on histogram bins.
pub const MAX_BINS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("pollution level {0} must lie strictly inside (0, 1)")]
    Level(f64),
    #[error("pollution level needs {need} human respondents, only {have} available")]
    InsufficientHumans { need: usize, have: usize },
    #[error("design expects {expected} agent rows, data has {found}")]
    AgentCount { expected: usize, found: usize },
    #[error("design expects {expected} human rows at this level, rule gives {found}")]
    HumanCount { expected: usize, found: usize },
    #[error("need at least {need} agent groups, found {found}")]
    TooFewGroups { need: usize, found: usize },
    #[error("no pollution levels given")]
    NoLevels,
    #[error("no seeds given")]
    NoSeeds,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pfs(#[from] PfsError),
    #[error(transparent)]
    Rank(#[from] RankError),
}

/// Human rows needed so that `n_agent` agents make up `level` of the mix:
/// `round(n_agent (1 − level) / level)`.
pub fn human_count(n_agent: usize, level: f64) -> Result<usize, ExperimentError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(ExperimentError::Level(level));
    }
    Ok((n_agent as f64 * (1.0 - level) / level).round() as usize)
}

/// Pollution level of a mix that keeps every row of both pools.
pub fn natural_level(n_human: usize, n_agent: usize) -> f64 {
    n_agent as f64 / (n_agent + n_human) as f64
}

/// Sorted indices of the human rows kept at `level`.
fn sample_humans(
    pool: usize,
    n_agent: usize,
    level: f64,
    seed: u64,
) -> Result<Vec<usize>, ExperimentError> {
    let need = human_count(n_agent, level)?;
    if need > pool {
        return Err(ExperimentError::InsufficientHumans { need, have: pool });
    }
    if need == pool {
        return Ok((0..pool).collect());
    }
    // Partial Fisher-Yates: the first k picks do not depend on `need`, so
    // under one seed a smaller subset is nested in every larger one.
    let mut rng = stream_rng(seed, domain::MIX, 0);
    let mut perm: Vec<usize> = (0..pool).collect();
    for i in 0..need {
        let j = rng.random_range(i..pool);
        perm.swap(i, j);
    }
    perm.truncate(need);
    perm.sort_unstable();
    Ok(perm)
}

fn assemble(
    humans: &ResponseMatrix,
    rows: &[usize],
    agents: &ResponseMatrix,
) -> Result<ResponseMatrix, DataError> {
    if rows.is_empty() {
        return Ok(agents.clone());
    }
    let kept = if rows.len() == humans.n_respondents() {
        humans.clone()
    } else {
        humans.select_rows(rows)?
    };
    kept.vstack(agents)
}

/// Keeps every agent row and `round(n_agent (1 − level) / level)` human rows
/// drawn without replacement (all of them when that is the whole pool).
/// Humans come first, in their original order.
pub fn mix_pollution(
    humans: &ResponseMatrix,
    agents: &ResponseMatrix,
    level: f64,
    seed: u64,
) -> Result<ResponseMatrix, ExperimentError> {
    let rows = sample_humans(humans.n_respondents(), agents.n_respondents(), level, seed)?;
    Ok(assemble(humans, &rows, agents)?)
}

/// Parameters of one report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentDesign {
    pub pollution_level: f64,
    pub n_agent: usize,
    pub n_human: usize,
    pub measures: Vec<Measure>,
    pub seed: u64,
    pub alternative: Alternative,
    pub difficulty: DifficultySource,
    pub instrument: String,
}

impl ExperimentDesign {
    /// Design at `level` with all four measures and the "humans lower"
    /// alternative; the human count follows from the rounding rule.
    pub fn new(level: f64, n_agent: usize, seed: u64) -> Result<Self, ExperimentError> {
        Ok(Self {
            pollution_level: level,
            n_agent,
            n_human: human_count(n_agent, level)?,
            measures: Measure::ALL.to_vec(),
            seed,
            alternative: Alternative::Less,
            difficulty: DifficultySource::Mixed,
            instrument: String::new(),
        })
    }

    /// Same design at another level and seed.
    pub fn at(&self, level: f64, seed: u64) -> Result<Self, ExperimentError> {
        Ok(Self {
            pollution_level: level,
            n_human: human_count(self.n_agent, level)?,
            seed,
            ..self.clone()
        })
    }

    fn check(&self, n_agent: usize) -> Result<(), ExperimentError> {
        let n_human = human_count(self.n_agent, self.pollution_level)?;
        if n_agent != self.n_agent {
            return Err(ExperimentError::AgentCount {
                expected: self.n_agent,
                found: n_agent,
            });
        }
        if n_human != self.n_human {
            return Err(ExperimentError::HumanCount {
                expected: self.n_human,
                found: n_human,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Compare,
    Multigroup,
    Sensitivity,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Compare => "compare",
            Pipeline::Multigroup => "multigroup",
            Pipeline::Sensitivity => "sensitivity",
        }
    }
}

/// Standing of a Dunn comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PostHoc {
    /// Omnibus p below [`POSTHOC_ALPHA`].
    Confirmatory,
    /// Omnibus p in `[POSTHOC_ALPHA, POSTHOC_EXPLORATORY)`.
    Exploratory,
}

/// One test in a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestEntry {
    pub test: TestKind,
    pub measure: Measure,
    pub instrument: String,
    pub statistic: f64,
    pub z: Option<f64>,
    pub p_value: f64,
    pub alternative: Alternative,
    pub group_sizes: Vec<usize>,
    pub group_labels: Vec<String>,
    pub correction: Correction,
    pub method: PValueMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_unadjusted: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posthoc: Option<PostHoc>,
    pub degenerate: bool,
}

impl TestEntry {
    fn new(r: TestResult, measure: Measure, instrument: &str, posthoc: Option<PostHoc>) -> Self {
        Self {
            test: r.test,
            measure,
            instrument: instrument.to_string(),
            statistic: r.statistic,
            z: r.z,
            p_value: r.p_value,
            alternative: r.alternative,
            group_sizes: r.group_sizes,
            group_labels: r.group_labels,
            correction: r.correction,
            method: r.method,
            p_unadjusted: r.p_unadjusted,
            posthoc,
            degenerate: r.degenerate,
        }
    }
}

/// A requested measure that could not be tested.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Untestable {
    pub measure: Measure,
    pub test: TestKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Descriptive {
    pub measure: Measure,
    pub group: String,
    pub n: usize,
    pub n_valid: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation (`n − 1` denominator).
    pub sd: Option<f64>,
    pub median: Option<f64>,
}

/// One histogram bin of a group's valid values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityBin {
    pub measure: Measure,
    pub group: String,
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupInfo {
    pub label: String,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub pipeline: Pipeline,
    pub design: ExperimentDesign,
    pub groups: Vec<GroupInfo>,
    pub dropped_items: Vec<String>,
    pub tests: Vec<TestEntry>,
    pub untestable: Vec<Untestable>,
    pub descriptives: Vec<Descriptive>,
    /// Written as CSV, not part of the JSON.
    #[serde(skip)]
    pub densities: Vec<DensityBin>,
    /// Valid values per measure and group, in `descriptives` order.
    #[serde(skip)]
    pub samples: Vec<GroupSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    pub measure: Measure,
    pub group: String,
    pub values: Vec<f64>,
}

impl ExperimentReport {
    /// The part of the report that concerns `measure`.
    pub fn for_measure(&self, measure: Measure) -> Self {
        Self {
            pipeline: self.pipeline,
            design: ExperimentDesign {
                measures: vec![measure],
                ..self.design.clone()
            },
            groups: self.groups.clone(),
            dropped_items: self.dropped_items.clone(),
            tests: self.tests.iter().filter(|t| t.measure == measure).cloned().collect(),
            untestable: self
                .untestable
                .iter()
                .filter(|u| u.measure == measure)
                .cloned()
                .collect(),
            descriptives: self
                .descriptives
                .iter()
                .filter(|d| d.measure == measure)
                .cloned()
                .collect(),
            densities: self
                .densities
                .iter()
                .filter(|d| d.measure == measure)
                .cloned()
                .collect(),
            samples: self
                .samples
                .iter()
                .filter(|d| d.measure == measure)
                .cloned()
                .collect(),
        }
    }

    /// The primary (non post-hoc) test of `measure`, if it was testable.
    pub fn primary(&self, measure: Measure) -> Option<&TestEntry> {
        self.tests
            .iter()
            .find(|t| t.measure == measure && t.test != TestKind::Dunn)
    }
}

struct Group {
    label: String,
    rows: Range<usize>,
}

struct Scored {
    records: Vec<PfsRecord<f64>>,
    dropped: Vec<String>,
}

fn score_mix(
    mix: &ResponseMatrix,
    n_human: usize,
    difficulty: DifficultySource,
) -> Result<Scored, ExperimentError> {
    match difficulty {
        DifficultySource::Mixed => {
            let (m, dropped) = filter_degenerate_items(mix)?;
            let stats = ItemStats::from_matrix(&m)?;
            Ok(Scored {
                records: compute_all_with(&m, &stats)?,
                dropped,
            })
        }
        DifficultySource::HumanOnly => {
            let humans = mix.select_rows(&(0..n_human).collect::<Vec<_>>())?;
            let (h, dropped) = filter_degenerate_items(&humans)?;
            let dropped_set: HashSet<&String> = dropped.iter().collect();
            let keep: Vec<usize> = (0..mix.n_items())
                .filter(|&j| !dropped_set.contains(&mix.items()[j]))
                .collect();
            let m = mix.select_columns(&keep)?;
            let stats = ItemStats::from_matrix(&h)?;
            Ok(Scored {
                records: compute_all_with(&m, &stats)?,
                dropped,
            })
        }
    }
}

fn valid_values(records: &[PfsRecord<f64>], rows: &Range<usize>, measure: Measure) -> Vec<f64> {
    records[rows.clone()]
        .iter()
        .filter(|r| r.valid)
        .filter_map(|r| r.get(measure))
        .collect()
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(&sorted(values), 0.5)
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
    (Some(mean), Some((ss / (n - 1) as f64).sqrt()))
}

fn describe(measure: Measure, group: &str, n: usize, values: &[f64]) -> Descriptive {
    let (mean, sd) = mean_sd(values);
    Descriptive {
        measure,
        group: group.to_string(),
        n,
        n_valid: values.len(),
        mean,
        sd,
        median: median(values),
    }
}

/// Histogram edges for `values` by the Freedman-Diaconis rule
/// (`width = 2 IQR n^(-1/3)`), falling back to Sturges' bin count when the
/// IQR is zero. Constant data gets one zero-width bin; no data gets none.
pub fn histogram_edges(values: &[f64]) -> Vec<f64> {
    let s = sorted(values);
    let (Some(&lo), Some(&hi)) = (s.first(), s.last()) else {
        return Vec::new();
    };
    if hi <= lo {
        return vec![lo, hi];
    }
    let n = s.len() as f64;
    let iqr = quantile(&s, 0.75).unwrap_or(0.0) - quantile(&s, 0.25).unwrap_or(0.0);
    let width = 2.0 * iqr * n.powf(-1.0 / 3.0);
    let bins = if width > 0.0 {
        ((hi - lo) / width).ceil() as usize
    } else {
        n.log2().ceil() as usize + 1
    }
    .clamp(1, MAX_BINS);
    let step = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|k| lo + k as f64 * step).collect();
    edges.push(hi);
    edges
}

/// Counts of `values` in the bins given by `edges`; the last bin is closed.
pub fn histogram_counts(values: &[f64], edges: &[f64]) -> Vec<usize> {
    if edges.len() < 2 {
        return Vec::new();
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0; bins];
    for &x in values {
        let k = edges.partition_point(|&e| e <= x).saturating_sub(1).min(bins - 1);
        counts[k] += 1;
    }
    counts
}

/// Bins shared by all groups of one measure.
fn densities(measure: Measure, groups: &[(String, Vec<f64>)]) -> Vec<DensityBin> {
    let pooled: Vec<f64> = groups.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let edges = histogram_edges(&pooled);
    let mut out = Vec::new();
    for (label, values) in groups {
        for (k, count) in histogram_counts(values, &edges).into_iter().enumerate() {
            out.push(DensityBin {
                measure,
                group: label.clone(),
                bin_left: edges[k],
                bin_right: edges[k + 1],
                count,
            });
        }
    }
    out
}

struct Summary {
    descriptives: Vec<Descriptive>,
    densities: Vec<DensityBin>,
    samples: Vec<GroupSample>,
}

fn summarize(measures: &[Measure], records: &[PfsRecord<f64>], groups: &[Group]) -> Summary {
    let mut out = Summary {
        descriptives: Vec::new(),
        densities: Vec::new(),
        samples: Vec::new(),
    };
    for &m in measures {
        let per_group: Vec<(String, Vec<f64>)> = groups
            .iter()
            .map(|g| (g.label.clone(), valid_values(records, &g.rows, m)))
            .collect();
        for (g, (label, values)) in groups.iter().zip(&per_group) {
            out.descriptives.push(describe(m, label, g.rows.len(), values));
        }
        out.densities.extend(densities(m, &per_group));
        out.samples.extend(per_group.into_iter().map(|(group, values)| GroupSample {
            measure: m,
            group,
            values,
        }));
    }
    out
}

fn group_info(groups: &[Group]) -> Vec<GroupInfo> {
    groups
        .iter()
        .map(|g| GroupInfo {
            label: g.label.clone(),
            n: g.rows.len(),
        })
        .collect()
}

pub const HUMAN_LABEL: &str = "human";
pub const AGENT_LABEL: &str = "agent";

/// Human-versus-agent comparison at the design's pollution level: one
/// Wilcoxon rank-sum test per measure with the humans as the first group,
/// so the default `Less` alternative reads "humans fit better than agents".
pub fn run_two_group(
    design: &ExperimentDesign,
    humans: &ResponseMatrix,
    agents: &ResponseMatrix,
) -> Result<ExperimentReport, ExperimentError> {
    design.check(agents.n_respondents())?;
    let rows = sample_humans(
        humans.n_respondents(),
        agents.n_respondents(),
        design.pollution_level,
        design.seed,
    )?;
    let mix = assemble(humans, &rows, agents)?;
    let nh = rows.len();
    let scored = score_mix(&mix, nh, design.difficulty)?;
    let groups = [
        Group {
            label: HUMAN_LABEL.to_string(),
            rows: 0..nh,
        },
        Group {
            label: AGENT_LABEL.to_string(),
            rows: nh..mix.n_respondents(),
        },
    ];

    let mut tests = Vec::new();
    let mut untestable = Vec::new();
    for &m in &design.measures {
        let h = valid_values(&scored.records, &groups[0].rows, m);
        let a = valid_values(&scored.records, &groups[1].rows, m);
        if h.is_empty() || a.is_empty() {
            let empty = if h.is_empty() { HUMAN_LABEL } else { AGENT_LABEL };
            untestable.push(Untestable {
                measure: m,
                test: TestKind::WilcoxonRankSum,
                reason: format!("no valid {empty} records"),
            });
            continue;
        }
        let r = wilcoxon_rank_sum(&h, &a, design.alternative)?.with_labels(&[HUMAN_LABEL, AGENT_LABEL]);
        tests.push(TestEntry::new(r, m, &design.instrument, None));
    }
    let summary = summarize(&design.measures, &scored.records, &groups);
    Ok(ExperimentReport {
        pipeline: Pipeline::Compare,
        design: design.clone(),
        groups: group_info(&groups),
        dropped_items: scored.dropped,
        tests,
        untestable,
        descriptives: summary.descriptives,
        densities: summary.densities,
        samples: summary.samples,
    })
}

/// Stacks agent groups, prefixing ids with `<label>/` when ids collide.
pub fn stack_groups(groups: &[(String, ResponseMatrix)]) -> Result<ResponseMatrix, DataError> {
    let mut seen = HashSet::new();
    let collide = groups
        .iter()
        .flat_map(|(_, m)| m.respondents())
        .any(|r| !seen.insert(r.id.as_str()));
    let mut stacked: Option<ResponseMatrix> = None;
    for (label, m) in groups {
        let m = if collide {
            let respondents = m
                .respondents()
                .iter()
                .map(|r| Respondent::new(format!("{label}/{}", r.id), r.source.clone()))
                .collect();
            let rows: Vec<Vec<u8>> = m.rows().map(<[u8]>::to_vec).collect();
            ResponseMatrix::from_rows(respondents, m.items().to_vec(), &rows)?
        } else {
            m.clone()
        };
        stacked = Some(match stacked {
            None => m,
            Some(acc) => acc.vstack(&m)?,
        });
    }
    stacked.ok_or(DataError::NoRespondents)
}

/// Comparison across agent groups: every group joins one mix with the
/// sampled humans, and a Kruskal-Wallis test runs across the agent groups
/// per measure. Dunn-Bonferroni comparisons follow when the omnibus p is
/// below [`POSTHOC_EXPLORATORY`], marked by their [`PostHoc`] standing.
///
/// `design.n_agent` counts the agents of all groups together.
pub fn run_multi_agent(
    design: &ExperimentDesign,
    humans: &ResponseMatrix,
    agent_groups: &[(String, ResponseMatrix)],
) -> Result<ExperimentReport, ExperimentError> {
    if agent_groups.len() < 2 {
        return Err(ExperimentError::TooFewGroups {
            need: 2,
            found: agent_groups.len(),
        });
    }
    let agents = stack_groups(agent_groups)?;
    design.check(agents.n_respondents())?;
    let rows = sample_humans(
        humans.n_respondents(),
        agents.n_respondents(),
        design.pollution_level,
        design.seed,
    )?;
    let mix = assemble(humans, &rows, &agents)?;
    let nh = rows.len();
    let scored = score_mix(&mix, nh, design.difficulty)?;

    let mut groups = vec![Group {
        label: HUMAN_LABEL.to_string(),
        rows: 0..nh,
    }];
    let mut start = nh;
    for (label, m) in agent_groups {
        groups.push(Group {
            label: label.clone(),
            rows: start..start + m.n_respondents(),
        });
        start += m.n_respondents();
    }
    let labels: Vec<&str> = agent_groups.iter().map(|(l, _)| l.as_str()).collect();

    let mut tests = Vec::new();
    let mut untestable = Vec::new();
    for &m in &design.measures {
        let values: Vec<Vec<f64>> = groups[1..]
            .iter()
            .map(|g| valid_values(&scored.records, &g.rows, m))
            .collect();
        if let Some(k) = values.iter().position(Vec::is_empty) {
            untestable.push(Untestable {
                measure: m,
                test: TestKind::KruskalWallis,
                reason: format!("no valid {} records", labels[k]),
            });
            continue;
        }
        let kw = kruskal_wallis(&values)?.with_labels(&labels);
        let p = kw.p_value;
        tests.push(TestEntry::new(kw, m, &design.instrument, None));
        let standing = if p < POSTHOC_ALPHA {
            Some(PostHoc::Confirmatory)
        } else if p < POSTHOC_EXPLORATORY {
            Some(PostHoc::Exploratory)
        } else {
            None
        };
        if let Some(standing) = standing {
            for d in dunn_posthoc(&values, Correction::Bonferroni)? {
                let d = d.with_labels(&labels);
                tests.push(TestEntry::new(d, m, &design.instrument, Some(standing)));
            }
        }
    }
    let summary = summarize(&design.measures, &scored.records, &groups);
    Ok(ExperimentReport {
        pipeline: Pipeline::Multigroup,
        design: design.clone(),
        groups: group_info(&groups),
        dropped_items: scored.dropped,
        tests,
        untestable,
        descriptives: summary.descriptives,
        densities: summary.densities,
        samples: summary.samples,
    })
}

/// Per-measure aggregate over the seeds of one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureSummary {
    pub measure: Measure,
    pub n_tested: usize,
    pub n_untestable: usize,
    pub median_p: Option<f64>,
    /// Median of `−ln p`; p is floored at the smallest positive double.
    pub median_neg_log_p: Option<f64>,
}

/// Mean and sample SD of a group's valid values, pooled over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub measure: Measure,
    pub group: String,
    pub n_valid: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: f64,
    pub n_human: usize,
    pub n_agent: usize,
    pub seeds: Vec<u64>,
    pub measures: Vec<MeasureSummary>,
    pub groups: Vec<GroupSummary>,
    /// One report per seed, in seed order.
    #[serde(skip)]
    pub reports: Vec<ExperimentReport>,
    /// Histogram of the valid values pooled over seeds.
    #[serde(skip)]
    pub densities: Vec<DensityBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub base: ExperimentDesign,
    pub levels: Vec<LevelSummary>,
}

/// Negative log p with `p` floored so the result stays finite.
pub fn neg_log_p(p: f64) -> f64 {
    -p.max(f64::MIN_POSITIVE).ln()
}

/// Combines per-seed `(n, mean, sd)` triples into pooled mean and SD.
fn pool(parts: &[&Descriptive]) -> (usize, Option<f64>, Option<f64>) {
    let n: usize = parts.iter().map(|d| d.n_valid).sum();
    if n == 0 {
        return (0, None, None);
    }
    let sum: f64 = parts
        .iter()
        .filter_map(|d| d.mean.map(|m| m * d.n_valid as f64))
        .sum();
    let mean = sum / n as f64;
    if n < 2 {
        return (n, Some(mean), None);
    }
    // total sum of squares around the pooled mean
    let ss: f64 = parts
        .iter()
        .filter(|d| d.n_valid > 0)
        .map(|d| {
            let k = d.n_valid as f64;
            let m = d.mean.unwrap_or(0.0);
            let within = d.sd.map_or(0.0, |s| s * s * (k - 1.0));
            within + k * (m - mean) * (m - mean)
        })
        .sum();
    (n, Some(mean), Some((ss / (n - 1) as f64).sqrt()))
}

fn level_summary(
    design: &ExperimentDesign,
    level: f64,
    seeds: &[u64],
    reports: Vec<ExperimentReport>,
) -> LevelSummary {
    let measures = design
        .measures
        .iter()
        .map(|&m| {
            let ps: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.primary(m).map(|t| t.p_value))
                .collect();
            let logs: Vec<f64> = ps.iter().map(|&p| neg_log_p(p)).collect();
            MeasureSummary {
                measure: m,
                n_tested: ps.len(),
                n_untestable: reports.len() - ps.len(),
                median_p: median(&ps),
                median_neg_log_p: median(&logs),
            }
        })
        .collect();
    let mut groups = Vec::new();
    let mut pooled_densities = Vec::new();
    for &m in &design.measures {
        let pooled: Vec<(String, Vec<f64>)> = [HUMAN_LABEL, AGENT_LABEL]
            .iter()
            .map(|&label| {
                let values = reports
                    .iter()
                    .flat_map(|r| r.samples.iter())
                    .filter(|g| g.measure == m && g.group == label)
                    .flat_map(|g| g.values.iter().copied())
                    .collect();
                (label.to_string(), values)
            })
            .collect();
        pooled_densities.extend(densities(m, &pooled));
        for label in [HUMAN_LABEL, AGENT_LABEL] {
            let parts: Vec<&Descriptive> = reports
                .iter()
                .flat_map(|r| r.descriptives.iter())
                .filter(|d| d.measure == m && d.group == label)
                .collect();
            let (n_valid, mean, sd) = pool(&parts);
            groups.push(GroupSummary {
                measure: m,
                group: label.to_string(),
                n_valid,
                mean,
                sd,
            });
        }
    }
    LevelSummary {
        level,
        n_human: reports.first().map_or(0, |r| r.design.n_human),
        n_agent: design.n_agent,
        seeds: seeds.to_vec(),
        measures,
        groups,
        reports,
        densities: pooled_densities,
    }
}

/// Runs [`run_two_group`] for every `(level, seed)` pair with the same
/// agents and a fresh human subset, then aggregates per level. Pairs run in
/// parallel; results keep the input order.
pub fn run_sensitivity(
    base: &ExperimentDesign,
    levels: &[f64],
    seeds: &[u64],
    humans: &ResponseMatrix,
    agents: &ResponseMatrix,
) -> Result<SensitivityReport, ExperimentError> {
    if levels.is_empty() {
        return Err(ExperimentError::NoLevels);
    }
    if seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    let designs = levels
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| base.at(l, s)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut reports = designs
        .par_iter()
        .map(|d| run_two_group(d, humans, agents))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter();
    let summaries = levels
        .iter()
        .map(|&level| {
            let chunk: Vec<ExperimentReport> = reports.by_ref().take(seeds.len()).collect();
            level_summary(base, level, seeds, chunk)
        })
        .collect();
    Ok(SensitivityReport {
        base: base.clone(),
        levels: summaries,
    })
}
