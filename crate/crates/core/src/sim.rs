//! Seeded synthetic respondents.
//!
//! Humans answer a three-parameter logistic (3PL) item bank,
//! `P(correct) = c + (1 − c) / (1 + exp(−a (θ − b)))`. Aberrant respondents
//! either ignore item difficulty altogether (fixed accuracy on every item)
//! or answer a bank whose difficulties are mirrored.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pfs::ItemStats;
use crate::response::{DataError, Respondent, ResponseMatrix, Source};
use crate::rng::{domain, stream_rng};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("item {index}: discrimination must be positive, got {a}")]
    Discrimination { index: usize, a: f64 },
    #[error("item {index}: guessing must lie in [0, 1), got {c}")]
    Guessing { index: usize, c: f64 },
    #[error("accuracy must lie strictly inside (0, 1), got {0}")]
    Accuracy(f64),
    #[error("total score {r} out of range (need 0 < r < {j})")]
    ScoreOutOfRange { r: usize, j: usize },
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("need at least one respondent")]
    Empty,
    #[error("need at least one item")]
    NoItems,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// One item of a 3PL bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrtItem {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl IrtItem {
    pub fn probability(&self, theta: f64) -> f64 {
        self.c + (1.0 - self.c) / (1.0 + (-self.a * (theta - self.b)).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrtItemBank {
    items: Vec<IrtItem>,
}

impl IrtItemBank {
    pub fn new(items: Vec<IrtItem>) -> Result<Self, SimError> {
        if items.is_empty() {
            return Err(SimError::NoItems);
        }
        for (index, it) in items.iter().enumerate() {
            if !(it.a > 0.0 && it.a.is_finite()) {
                return Err(SimError::Discrimination { index, a: it.a });
            }
            if !(0.0..1.0).contains(&it.c) {
                return Err(SimError::Guessing { index, c: it.c });
            }
            if !it.b.is_finite() {
                return Err(SimError::Distribution(format!("item {index}: difficulty {}", it.b)));
            }
        }
        Ok(Self { items })
    }

    /// Draws `n_items` items with `a ~ a_dist`, `b ~ b_dist` and a common guessing floor.
    pub fn generate(
        n_items: usize,
        a_dist: &Dist,
        b_dist: &Dist,
        guessing: f64,
        seed: u64,
    ) -> Result<Self, SimError> {
        let mut rng = stream_rng(seed, domain::ITEM_BANK, 0);
        let items = (0..n_items)
            .map(|_| {
                let a = a_dist.sample(&mut rng)?;
                let b = b_dist.sample(&mut rng)?;
                Ok(IrtItem { a, b, c: guessing })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        Self::new(items)
    }

    pub fn items(&self) -> &[IrtItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Mean success probability over the bank at ability `theta`.
    pub fn mean_probability(&self, theta: f64) -> f64 {
        self.items.iter().map(|it| it.probability(theta)).sum::<f64>() / self.items.len() as f64
    }

    /// The same bank with difficulties mirrored (`b → −b`).
    pub fn reversed(&self) -> Self {
        Self {
            items: self.items.iter().map(|it| IrtItem { b: -it.b, ..*it }).collect(),
        }
    }
}

/// Parameter distributions used in simulation configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dist {
    Normal { mean: f64, sd: f64 },
    #[serde(rename = "lognormal")]
    LogNormal { mu: f64, sigma: f64 },
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
}

impl Dist {
    pub fn standard_normal() -> Self {
        Dist::Normal { mean: 0.0, sd: 1.0 }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = match *self {
            Dist::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            Dist::LogNormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma >= 0.0,
            Dist::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            Dist::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::Distribution(format!("{self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<f64, SimError> {
        let err = |e: &dyn std::fmt::Display| SimError::Distribution(e.to_string());
        Ok(match *self {
            Dist::Normal { mean, sd } => Normal::new(mean, sd).map_err(|e| err(&e))?.sample(rng),
            Dist::LogNormal { mu, sigma } => {
                LogNormal::new(mu, sigma).map_err(|e| err(&e))?.sample(rng)
            }
            Dist::Uniform { low, high } => {
                Uniform::new(low, high).map_err(|e| err(&e))?.sample(rng)
            }
            Dist::Constant { value } => value,
        })
    }

    /// `E[f(X)]` by composite Simpson quadrature.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.expectation_dyn(&f)
    }

    fn expectation_dyn(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        const PANELS: usize = 4000;
        let simpson = |lo: f64, hi: f64, g: &dyn Fn(f64) -> f64| -> f64 {
            let h = (hi - lo) / PANELS as f64;
            let mut acc = g(lo) + g(hi);
            for k in 1..PANELS {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * g(lo + k as f64 * h);
            }
            acc * h / 3.0
        };
        match *self {
            Dist::Constant { value } => f(value),
            Dist::Normal { sd: 0.0, mean } => f(mean),
            Dist::Normal { mean, sd } => {
                let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                simpson(-10.0, 10.0, &|z| pdf(z) * f(mean + sd * z))
            }
            Dist::LogNormal { mu, sigma } => Dist::Normal {
                mean: mu,
                sd: sigma,
            }
            .expectation_dyn(&|x| f(x.exp())),
            Dist::Uniform { low, high } => simpson(low, high, &|x| f(x)) / (high - low),
        }
    }
}

/// How a single simulated respondent answers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RespondentModel {
    HumanIrt { theta: f64 },
    DifficultyBlind { accuracy: f64 },
    ReversedDifficulty { theta: f64 },
}

impl RespondentModel {
    pub fn validate(&self) -> Result<(), SimError> {
        match *self {
            RespondentModel::DifficultyBlind { accuracy } if !(accuracy > 0.0 && accuracy < 1.0) => {
                Err(SimError::Accuracy(accuracy))
            }
            _ => Ok(()),
        }
    }

    fn draw(&self, bank: &IrtItemBank, rng: &mut ChaCha8Rng) -> Vec<u8> {
        match *self {
            RespondentModel::HumanIrt { theta } => draw_irt(bank.items(), theta, rng),
            RespondentModel::DifficultyBlind { accuracy } => draw_flat(bank.len(), accuracy, rng),
            RespondentModel::ReversedDifficulty { theta } => {
                draw_irt(bank.reversed().items(), theta, rng)
            }
        }
    }
}

fn draw_irt(items: &[IrtItem], theta: f64, rng: &mut ChaCha8Rng) -> Vec<u8> {
    items
        .iter()
        .map(|it| u8::from(rng.random::<f64>() < it.probability(theta)))
        .collect()
}

fn draw_flat(n_items: usize, accuracy: f64, rng: &mut ChaCha8Rng) -> Vec<u8> {
    (0..n_items)
        .map(|_| u8::from(rng.random::<f64>() < accuracy))
        .collect()
}

/// One 3PL response vector at ability `theta`.
pub fn sample_human(bank: &IrtItemBank, theta: f64, seed: u64) -> Vec<u8> {
    draw_irt(bank.items(), theta, &mut stream_rng(seed, domain::HUMAN, 0))
}

/// Every item correct with probability `accuracy`, whatever its difficulty.
pub fn sample_difficulty_blind(n_items: usize, accuracy: f64, seed: u64) -> Result<Vec<u8>, SimError> {
    RespondentModel::DifficultyBlind { accuracy }.validate()?;
    Ok(draw_flat(
        n_items,
        accuracy,
        &mut stream_rng(seed, domain::AGENT, 0),
    ))
}

/// A pattern drawn uniformly from the `C(J, r)` patterns with total `r`,
/// in original item order.
pub fn sample_conditional_null<T: Scalar>(
    stats: &ItemStats<T>,
    r: usize,
    seed: u64,
) -> Result<Vec<u8>, SimError> {
    conditional_null_from(stats.n_items(), r, &mut stream_rng(seed, domain::NULL_PATTERN, 0))
}

/// As [`sample_conditional_null`], drawing from a caller-owned generator.
pub fn conditional_null_from(
    n_items: usize,
    r: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u8>, SimError> {
    if r == 0 || r >= n_items {
        return Err(SimError::ScoreOutOfRange { r, j: n_items });
    }
    // partial Fisher-Yates: the first r slots form a uniform r-subset
    let mut idx: Vec<usize> = (0..n_items).collect();
    for k in 0..r {
        let pick = rng.random_range(k..n_items);
        idx.swap(k, pick);
    }
    let mut x = vec![0u8; n_items];
    for &j in &idx[..r] {
        x[j] = 1;
    }
    Ok(x)
}

/// Accuracy of a difficulty-blind respondent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AccuracySpec {
    /// Equal to the human population's expected proportion correct.
    Matched,
    Fixed(f64),
}

impl Serialize for AccuracySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AccuracySpec::Matched => s.serialize_str("matched"),
            AccuracySpec::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for AccuracySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(AccuracySpec::Fixed(v)),
            Raw::Word(w) if w == "matched" => Ok(AccuracySpec::Matched),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "accuracy must be a number or \"matched\", got \"{w}\""
            ))),
        }
    }
}

/// Aberrance model for the non-human rows of a simulated population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Aberrance {
    DifficultyBlind { accuracy: AccuracySpec },
    ReversedDifficulty { theta: f64 },
    /// Drawn exactly like the humans; used for null runs.
    HumanLike,
}

impl Default for Aberrance {
    fn default() -> Self {
        Aberrance::DifficultyBlind {
            accuracy: AccuracySpec::Matched,
        }
    }
}

/// Distribution parameters for [`sample_population`].
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationConfig {
    pub theta_dist: Dist,
    pub aberrance: Aberrance,
    pub agent_name: String,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            theta_dist: Dist::standard_normal(),
            aberrance: Aberrance::default(),
            agent_name: "sim".to_string(),
        }
    }
}

/// Expected proportion correct of a human drawn from `theta_dist`.
pub fn expected_human_accuracy(bank: &IrtItemBank, theta_dist: &Dist) -> f64 {
    theta_dist.expectation(|t| bank.mean_probability(t))
}

fn pad(n: usize) -> usize {
    n.to_string().len().max(4)
}

/// Item ids `item01, item02, ...`.
pub fn item_ids(n_items: usize) -> Vec<String> {
    let w = n_items.to_string().len().max(2);
    (1..=n_items).map(|j| format!("item{j:0w$}")).collect()
}

/// `n_human` 3PL respondents (`h0001, ...`, θ drawn from the configured
/// distribution) followed by `n_aberrant` aberrant ones (`a0001, ...`, source
/// `agent:<agent_name>`).
pub fn sample_population(
    n_human: usize,
    n_aberrant: usize,
    bank: &IrtItemBank,
    config: &PopulationConfig,
    seed: u64,
) -> Result<ResponseMatrix, SimError> {
    if n_human + n_aberrant == 0 {
        return Err(SimError::Empty);
    }
    config.theta_dist.validate()?;
    let agent_model = |theta: f64| -> RespondentModel {
        match config.aberrance {
            Aberrance::DifficultyBlind { accuracy } => RespondentModel::DifficultyBlind {
                accuracy: match accuracy {
                    AccuracySpec::Fixed(a) => a,
                    AccuracySpec::Matched => expected_human_accuracy(bank, &config.theta_dist),
                },
            },
            Aberrance::ReversedDifficulty { theta } => RespondentModel::ReversedDifficulty { theta },
            Aberrance::HumanLike => RespondentModel::HumanIrt { theta },
        }
    };
    agent_model(0.0).validate()?;

    let theta_dist = &config.theta_dist;
    let humans: Vec<Vec<u8>> = (0..n_human)
        .into_par_iter()
        .map(|n| {
            let mut rng = stream_rng(seed, domain::HUMAN, n as u64);
            let theta = theta_dist.sample(&mut rng)?;
            Ok(RespondentModel::HumanIrt { theta }.draw(bank, &mut rng))
        })
        .collect::<Result<_, SimError>>()?;
    let agents: Vec<Vec<u8>> = (0..n_aberrant)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, domain::AGENT, k as u64);
            let theta = theta_dist.sample(&mut rng)?;
            Ok(agent_model(theta).draw(bank, &mut rng))
        })
        .collect::<Result<_, SimError>>()?;

    let (wh, wa) = (pad(n_human), pad(n_aberrant));
    let mut respondents: Vec<Respondent> = (1..=n_human)
        .map(|n| Respondent::new(format!("h{n:0wh$}"), Source::Human))
        .collect();
    respondents.extend(
        (1..=n_aberrant)
            .map(|k| Respondent::new(format!("a{k:0wa$}"), Source::Agent(config.agent_name.clone()))),
    );
    let rows: Vec<Vec<u8>> = humans.into_iter().chain(agents).collect();
    Ok(ResponseMatrix::from_rows(respondents, item_ids(bank.len()), &rows)?)
}
