//! Person-fit statistics for spotting aberrant responders in scored
//! multiple-choice data, with the rank tests and simulation tools needed to
//! compare groups of respondents.
//!
//! The statistics are generic over the floating-point type ([`Scalar`], implemented
//! for `f32` and `f64`); the aliases below fix the common choices. The
//! experiment pipelines work in `f64`.
//!
//! ```
//! use perfit_core::{compute_all, ResponseMatrix, Respondent, Source, PfsRecord64};
//!
//! let people = (1..=3).map(|k| Respondent::new(format!("p{k}"), Source::Human)).collect();
//! let items = vec!["q1".into(), "q2".into(), "q3".into()];
//! let rows = vec![vec![1, 1, 0], vec![1, 0, 0], vec![0, 1, 1]];
//! let m = ResponseMatrix::from_rows(people, items, &rows).unwrap();
//! let recs: Vec<PfsRecord64> = compute_all(&m).unwrap();
//! assert_eq!(recs[0].g, 0);
//! ```

pub mod config;
pub mod csvio;
pub mod experiment;
pub mod pfs;
pub mod rank;
pub mod report;
pub mod response;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use config::{ConfigError, DataSpec, DifficultySource, ExperimentConfig, SimConfig};
pub use csvio::{
    parse_difficulty_csv, parse_key_csv, parse_raw_csv, parse_scored_csv, read_scored_csv,
    write_scored_csv,
};
pub use experiment::{
    human_count, mix_pollution, run_multi_agent, run_sensitivity, run_two_group,
    ExperimentDesign, ExperimentError, ExperimentReport, SensitivityReport,
};
pub use pfs::{
    compute_all, compute_all_with, flag_aberrant, guttman_errors, null_moments, ItemStats,
    Measure, NullMoments, PfsError, PfsRecord,
};
pub use rank::{
    dunn_posthoc, kruskal_wallis, kruskal_wallis_with, wilcoxon_rank_sum,
    wilcoxon_rank_sum_with, Alternative, Correction, PValueMethod, RankError, TestKind,
    TestResult,
};
pub use response::{
    filter_degenerate_items, score, AnswerKey, DataError, RawResponses, Respondent,
    ResponseMatrix, Source,
};
pub use scalar::Scalar;
pub use sim::{sample_population, Aberrance, AccuracySpec, Dist, IrtItem, IrtItemBank, SimError};

pub type ItemStats64 = ItemStats<f64>;
pub type ItemStats32 = ItemStats<f32>;
pub type PfsRecord64 = PfsRecord<f64>;
pub type PfsRecord32 = PfsRecord<f32>;
pub type NullMoments64 = NullMoments<f64>;
pub type NullMoments32 = NullMoments<f32>;
