//! Dichotomous response matrices: validation, answer-key scoring and
//! removal of items that carry no ordering information.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or ingesting response data.
///
/// Row numbers are 1-based file lines (the header is line 1); columns are
/// 1-based field positions.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column} (item '{item}'): invalid cell value '{value}', expected 0 or 1")]
    InvalidCell {
        row: usize,
        column: usize,
        item: String,
        value: String,
    },
    #[error("row {row}: invalid source label '{value}', expected 'human' or 'agent:<name>'")]
    InvalidSource { row: usize, value: String },
    #[error("row {row}: duplicate respondent id '{id}'")]
    DuplicateRespondent { row: usize, id: String },
    #[error("column {column}: duplicate item id '{id}'")]
    DuplicateItem { column: usize, id: String },
    #[error("row {row}: empty respondent id")]
    EmptyRespondentId { row: usize },
    #[error("item '{0}' is missing from the answer key")]
    MissingKey(String),
    #[error("no respondents")]
    NoRespondents,
    #[error("no items")]
    NoItems,
    #[error("no informative items: every item has proportion correct 0 or 1")]
    NoInformativeItems,
    #[error("cell buffer has {found} values, expected {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("item sets differ between matrices")]
    ItemMismatch,
    #[error("csv: {0}")]
    Csv(String),
    #[error("{0}")]
    Io(String),
}

impl From<csv::Error> for DataError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            DataError::Io(e.to_string())
        } else {
            DataError::Csv(e.to_string())
        }
    }
}

/// Who produced a response row. Metadata only; never enters a statistic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Source {
    Human,
    Agent(String),
}

impl Source {
    pub fn is_human(&self) -> bool {
        matches!(self, Source::Human)
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Human => f.write_str("human"),
            Source::Agent(name) => write!(f, "agent:{name}"),
        }
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "human" {
            return Ok(Source::Human);
        }
        match s.strip_prefix("agent:") {
            Some(name) if !name.is_empty() && !name.contains(',') => {
                Ok(Source::Agent(name.to_string()))
            }
            _ => Err(s.to_string()),
        }
    }
}

impl TryFrom<String> for Source {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Source> for String {
    fn from(s: Source) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Respondent {
    pub id: String,
    pub source: Source,
}

impl Respondent {
    pub fn new(id: impl Into<String>, source: Source) -> Self {
        Self {
            id: id.into(),
            source,
        }
    }
}

/// N×J matrix of scored responses, stored row-major.
///
/// Every cell is 0 or 1, respondent ids and item ids are unique and both
/// dimensions are at least one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseMatrix {
    respondents: Vec<Respondent>,
    items: Vec<String>,
    cells: Vec<u8>,
}

impl ResponseMatrix {
    pub fn new(
        respondents: Vec<Respondent>,
        items: Vec<String>,
        cells: Vec<u8>,
    ) -> Result<Self, DataError> {
        if respondents.is_empty() {
            return Err(DataError::NoRespondents);
        }
        if items.is_empty() {
            return Err(DataError::NoItems);
        }
        let expected = respondents.len() * items.len();
        if cells.len() != expected {
            return Err(DataError::ShapeMismatch {
                expected,
                found: cells.len(),
            });
        }
        let mut seen = HashSet::with_capacity(items.len());
        for (j, item) in items.iter().enumerate() {
            if !seen.insert(item.as_str()) {
                return Err(DataError::DuplicateItem {
                    column: j + 1,
                    id: item.clone(),
                });
            }
        }
        let mut seen = HashSet::with_capacity(respondents.len());
        for (n, resp) in respondents.iter().enumerate() {
            if resp.id.is_empty() {
                return Err(DataError::EmptyRespondentId { row: n + 1 });
            }
            if !seen.insert(resp.id.as_str()) {
                return Err(DataError::DuplicateRespondent {
                    row: n + 1,
                    id: resp.id.clone(),
                });
            }
        }
        let j_count = items.len();
        if let Some(pos) = cells.iter().position(|&v| v > 1) {
            return Err(DataError::InvalidCell {
                row: pos / j_count + 1,
                column: pos % j_count + 1,
                item: items[pos % j_count].clone(),
                value: cells[pos].to_string(),
            });
        }
        Ok(Self {
            respondents,
            items,
            cells,
        })
    }

    /// Builds a matrix from nested rows; handy for tests and small inputs.
    pub fn from_rows(
        respondents: Vec<Respondent>,
        items: Vec<String>,
        rows: &[Vec<u8>],
    ) -> Result<Self, DataError> {
        let j_count = items.len();
        let mut cells = Vec::with_capacity(rows.len() * j_count);
        for row in rows {
            if row.len() != j_count {
                return Err(DataError::ShapeMismatch {
                    expected: rows.len() * j_count,
                    found: rows.iter().map(Vec::len).sum(),
                });
            }
            cells.extend_from_slice(row);
        }
        Self::new(respondents, items, cells)
    }

    pub fn n_respondents(&self) -> usize {
        self.respondents.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn respondents(&self) -> &[Respondent] {
        &self.respondents
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn row(&self, n: usize) -> &[u8] {
        let j = self.items.len();
        &self.cells[n * j..(n + 1) * j]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u8]> {
        self.cells.chunks_exact(self.items.len())
    }

    /// Number of correct answers per item.
    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = vec![0usize; self.items.len()];
        for row in self.rows() {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += v as usize;
            }
        }
        sums
    }

    /// Keeps the listed rows, in the order given.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, DataError> {
        let respondents = rows.iter().map(|&n| self.respondents[n].clone()).collect();
        let mut cells = Vec::with_capacity(rows.len() * self.items.len());
        for &n in rows {
            cells.extend_from_slice(self.row(n));
        }
        Self::new(respondents, self.items.clone(), cells)
    }

    /// Keeps the listed columns, in the order given.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self, DataError> {
        let items = cols.iter().map(|&j| self.items[j].clone()).collect();
        let mut cells = Vec::with_capacity(self.respondents.len() * cols.len());
        for row in self.rows() {
            cells.extend(cols.iter().map(|&j| row[j]));
        }
        Self::new(self.respondents.clone(), items, cells)
    }

    /// Stacks `other` below `self`. Item ids must match position by position.
    pub fn vstack(&self, other: &ResponseMatrix) -> Result<Self, DataError> {
        if self.items != other.items {
            return Err(DataError::ItemMismatch);
        }
        let mut respondents = self.respondents.clone();
        respondents.extend(other.respondents.iter().cloned());
        let mut cells = self.cells.clone();
        cells.extend_from_slice(&other.cells);
        Self::new(respondents, self.items.clone(), cells)
    }
}

/// Correct option label per item.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnswerKey {
    pub entries: BTreeMap<String, String>,
}

impl AnswerKey {
    pub fn get(&self, item: &str) -> Option<&str> {
        self.entries.get(item).map(String::as_str)
    }
}

impl FromIterator<(String, String)> for AnswerKey {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

/// Unscored responses: chosen option labels, `None` for a blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponses {
    pub respondents: Vec<Respondent>,
    pub items: Vec<String>,
    pub answers: Vec<Vec<Option<String>>>,
}

/// Applies the answer key. A cell scores 1 only when the chosen option equals
/// the keyed option; blanks and any other label score 0.
pub fn score(raw: &RawResponses, key: &AnswerKey) -> Result<ResponseMatrix, DataError> {
    let keyed: Vec<&str> = raw
        .items
        .iter()
        .map(|item| key.get(item).ok_or_else(|| DataError::MissingKey(item.clone())))
        .collect::<Result<_, _>>()?;
    let mut cells = Vec::with_capacity(raw.respondents.len() * raw.items.len());
    for answers in &raw.answers {
        if answers.len() != keyed.len() {
            return Err(DataError::ShapeMismatch {
                expected: raw.respondents.len() * keyed.len(),
                found: raw.answers.iter().map(Vec::len).sum(),
            });
        }
        cells.extend(answers.iter().zip(&keyed).map(|(chosen, correct)| {
            match chosen {
                Some(opt) if opt.trim() == correct.trim() => 1u8,
                _ => 0u8,
            }
        }));
    }
    ResponseMatrix::new(raw.respondents.clone(), raw.items.clone(), cells)
}

/// Drops items answered correctly by nobody or by everybody.
///
/// Returns the reduced matrix and the dropped item ids in column order.
pub fn filter_degenerate_items(
    m: &ResponseMatrix,
) -> Result<(ResponseMatrix, Vec<String>), DataError> {
    let n = m.n_respondents();
    let sums = m.column_sums();
    let (keep, drop): (Vec<usize>, Vec<usize>) =
        (0..m.n_items()).partition(|&j| sums[j] > 0 && sums[j] < n);
    if keep.is_empty() {
        return Err(DataError::NoInformativeItems);
    }
    let dropped = drop.iter().map(|&j| m.items()[j].clone()).collect();
    if drop.is_empty() {
        return Ok((m.clone(), dropped));
    }
    Ok((m.select_columns(&keep)?, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(n: usize) -> Vec<String> {
        (1..=n).map(|j| format!("i{j}")).collect()
    }

    fn humans(n: usize) -> Vec<Respondent> {
        (1..=n)
            .map(|k| Respondent::new(format!("h{k}"), Source::Human))
            .collect()
    }

    #[test]
    fn source_round_trips_through_text() {
        for s in ["human", "agent:chatgpt", "agent:sim"] {
            assert_eq!(s.parse::<Source>().unwrap().to_string(), s);
        }
        assert!("agent:".parse::<Source>().is_err());
        assert!("robot".parse::<Source>().is_err());
    }

    #[test]
    fn rejects_duplicate_ids_and_bad_cells() {
        let r = vec![
            Respondent::new("a", Source::Human),
            Respondent::new("a", Source::Human),
        ];
        let err = ResponseMatrix::new(r, items(1), vec![0, 1]).unwrap_err();
        assert!(matches!(err, DataError::DuplicateRespondent { row: 2, .. }));

        let err = ResponseMatrix::new(humans(1), vec!["x".into(), "x".into()], vec![0, 1])
            .unwrap_err();
        assert!(matches!(err, DataError::DuplicateItem { column: 2, .. }));

        let err = ResponseMatrix::new(humans(2), items(2), vec![0, 1, 1, 2]).unwrap_err();
        assert!(matches!(err, DataError::InvalidCell { row: 2, column: 2, .. }));
    }

    #[test]
    fn scoring_matches_key_exactly() {
        let raw = RawResponses {
            respondents: humans(1),
            items: items(3),
            answers: vec![vec![Some("B".into()), None, Some("E".into())]],
        };
        let key: AnswerKey = [("i1", "B"), ("i2", "A"), ("i3", "C")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let m = score(&raw, &key).unwrap();
        assert_eq!(m.row(0), &[1, 0, 0]);
    }

    #[test]
    fn scoring_requires_complete_key() {
        let raw = RawResponses {
            respondents: humans(1),
            items: items(2),
            answers: vec![vec![Some("A".into()), Some("B".into())]],
        };
        let key: AnswerKey = std::iter::once(("i1".to_string(), "A".to_string())).collect();
        assert_eq!(score(&raw, &key).unwrap_err(), DataError::MissingKey("i2".into()));
    }

    #[test]
    fn filter_drops_constant_columns() {
        let m = ResponseMatrix::from_rows(
            humans(3),
            items(3),
            &[vec![1, 0, 1], vec![1, 1, 0], vec![1, 0, 0]],
        )
        .unwrap();
        let (f, dropped) = filter_degenerate_items(&m).unwrap();
        assert_eq!(dropped, vec!["i1".to_string()]);
        assert_eq!(f.items(), &["i2".to_string(), "i3".to_string()]);
        assert_eq!(f.row(1), &[1, 0]);

        let (g, none) = filter_degenerate_items(&f).unwrap();
        assert!(none.is_empty());
        assert_eq!(g, f);
    }

    #[test]
    fn filter_errors_when_nothing_is_informative() {
        let m = ResponseMatrix::from_rows(humans(2), items(2), &[vec![0, 0], vec![0, 0]]).unwrap();
        assert_eq!(
            filter_degenerate_items(&m).unwrap_err(),
            DataError::NoInformativeItems
        );
    }

    #[test]
    fn vstack_requires_same_items() {
        let a = ResponseMatrix::from_rows(humans(1), items(2), &[vec![0, 1]]).unwrap();
        let b = ResponseMatrix::from_rows(
            vec![Respondent::new("x", Source::Agent("sim".into()))],
            items(2),
            &[vec![1, 1]],
        )
        .unwrap();
        let s = a.vstack(&b).unwrap();
        assert_eq!(s.n_respondents(), 2);
        let c = ResponseMatrix::from_rows(humans(1), items(3), &[vec![0, 1, 1]]).unwrap();
        assert_eq!(a.vstack(&c).unwrap_err(), DataError::ItemMismatch);
    }
}
