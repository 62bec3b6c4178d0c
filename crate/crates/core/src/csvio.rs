//! CSV formats for scored matrices, raw responses, answer keys and
//! reference item difficulties.
//!
//! Scored and raw files share the header
//! `respondent_id,source,<item_1>,...,<item_J>`; `source` is `human` or
//! `agent:<name>`. Scored cells are `0`/`1`, raw cells are option labels or
//! empty. Answer keys use `item_id,correct_option`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::response::{AnswerKey, DataError, RawResponses, Respondent, ResponseMatrix, Source};

fn reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(rdr)
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))
}

struct Table {
    items: Vec<String>,
    rows: Vec<(usize, Respondent, Vec<String>)>,
}

fn read_table<R: Read>(rdr: R) -> Result<Table, DataError> {
    let mut rdr = reader(rdr);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(DataError::MalformedHeader("empty file".into())),
    };
    if header.len() < 3 {
        return Err(DataError::MalformedHeader(
            "expected respondent_id,source followed by at least one item".into(),
        ));
    }
    if &header[0] != "respondent_id" || &header[1] != "source" {
        return Err(DataError::MalformedHeader(format!(
            "expected first columns 'respondent_id,source', found '{},{}'",
            &header[0], &header[1]
        )));
    }
    let items: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for (k, item) in items.iter().enumerate() {
        if item.is_empty() {
            return Err(DataError::MalformedHeader(format!("empty item id in column {}", k + 3)));
        }
        if !seen.insert(item.as_str()) {
            return Err(DataError::DuplicateItem {
                column: k + 3,
                id: item.clone(),
            });
        }
    }

    let mut rows = Vec::new();
    let mut ids = HashSet::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(rows.len() + 2, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != items.len() + 2 {
            return Err(DataError::RaggedRow {
                row: line,
                expected: items.len() + 2,
                found: rec.len(),
            });
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(DataError::EmptyRespondentId { row: line });
        }
        if !ids.insert(id.clone()) {
            return Err(DataError::DuplicateRespondent { row: line, id });
        }
        let source: Source = rec[1].parse().map_err(|value| DataError::InvalidSource {
            row: line,
            value,
        })?;
        let cells = rec.iter().skip(2).map(str::to_string).collect();
        rows.push((line, Respondent::new(id, source), cells));
    }
    if rows.is_empty() {
        return Err(DataError::NoRespondents);
    }
    Ok(Table { items, rows })
}

/// Reads a scored matrix from any reader.
pub fn read_scored_csv<R: Read>(rdr: R) -> Result<ResponseMatrix, DataError> {
    let table = read_table(rdr)?;
    let mut cells = Vec::with_capacity(table.rows.len() * table.items.len());
    let mut respondents = Vec::with_capacity(table.rows.len());
    for (line, resp, values) in table.rows {
        for (k, v) in values.iter().enumerate() {
            let cell = match v.as_str() {
                "0" => 0u8,
                "1" => 1u8,
                _ => {
                    return Err(DataError::InvalidCell {
                        row: line,
                        column: k + 3,
                        item: table.items[k].clone(),
                        value: v.clone(),
                    })
                }
            };
            cells.push(cell);
        }
        respondents.push(resp);
    }
    ResponseMatrix::new(respondents, table.items, cells)
}

pub fn parse_scored_csv(path: impl AsRef<Path>) -> Result<ResponseMatrix, DataError> {
    read_scored_csv(open(path.as_ref())?)
}

/// Writes the canonical scored-matrix CSV.
pub fn write_scored_csv<W: Write>(m: &ResponseMatrix, w: W) -> Result<(), DataError> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let mut header = vec!["respondent_id".to_string(), "source".to_string()];
    header.extend(m.items().iter().cloned());
    wtr.write_record(&header)?;
    for (resp, row) in m.respondents().iter().zip(m.rows()) {
        let mut rec = Vec::with_capacity(row.len() + 2);
        rec.push(resp.id.clone());
        rec.push(resp.source.to_string());
        rec.extend(row.iter().map(|v| if *v == 1 { "1".to_string() } else { "0".to_string() }));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| DataError::Csv(e.to_string()))
}

pub fn read_raw_csv<R: Read>(rdr: R) -> Result<RawResponses, DataError> {
    let table = read_table(rdr)?;
    let mut respondents = Vec::with_capacity(table.rows.len());
    let mut answers = Vec::with_capacity(table.rows.len());
    for (_, resp, values) in table.rows {
        respondents.push(resp);
        answers.push(
            values
                .into_iter()
                .map(|v| if v.is_empty() { None } else { Some(v) })
                .collect(),
        );
    }
    Ok(RawResponses {
        respondents,
        items: table.items,
        answers,
    })
}

pub fn parse_raw_csv(path: impl AsRef<Path>) -> Result<RawResponses, DataError> {
    read_raw_csv(open(path.as_ref())?)
}

/// Reads `item_id,correct_option` rows.
pub fn read_key_csv<R: Read>(rdr: R) -> Result<AnswerKey, DataError> {
    let mut rdr = reader(rdr);
    let mut records = rdr.records();
    match records.next() {
        Some(h) => {
            let h = h?;
            if h.len() != 2 || &h[0] != "item_id" || &h[1] != "correct_option" {
                return Err(DataError::MalformedHeader(
                    "answer key header must be 'item_id,correct_option'".into(),
                ));
            }
        }
        None => return Err(DataError::MalformedHeader("empty answer key".into())),
    }
    let mut key = AnswerKey::default();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 2 {
            return Err(DataError::RaggedRow {
                row: line,
                expected: 2,
                found: rec.len(),
            });
        }
        if key.entries.insert(rec[0].to_string(), rec[1].to_string()).is_some() {
            return Err(DataError::DuplicateItem {
                column: 1,
                id: rec[0].to_string(),
            });
        }
    }
    Ok(key)
}

pub fn parse_key_csv(path: impl AsRef<Path>) -> Result<AnswerKey, DataError> {
    read_key_csv(open(path.as_ref())?)
}

/// Reads reference item difficulties as `item_id,p` rows.
pub fn read_difficulty_csv<R: Read>(rdr: R) -> Result<Vec<(String, f64)>, DataError> {
    let mut rdr = reader(rdr);
    let mut records = rdr.records();
    match records.next() {
        Some(h) => {
            let h = h?;
            if h.len() != 2 || &h[0] != "item_id" || &h[1] != "p" {
                return Err(DataError::MalformedHeader(
                    "difficulty header must be 'item_id,p'".into(),
                ));
            }
        }
        None => return Err(DataError::MalformedHeader("empty difficulty file".into())),
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(DataError::RaggedRow {
                row: line,
                expected: 2,
                found: rec.len(),
            });
        }
        let p: f64 = rec[1].parse().map_err(|_| DataError::InvalidCell {
            row: line,
            column: 2,
            item: rec[0].to_string(),
            value: rec[1].to_string(),
        })?;
        out.push((rec[0].to_string(), p));
    }
    Ok(out)
}

pub fn parse_difficulty_csv(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>, DataError> {
    read_difficulty_csv(open(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const WELL_FORMED: &str = "respondent_id,source,q1,q2,q3\n\
                               s1,human,1,0,1\n\
                               s2,agent:gpt,0,0,1\n";

    #[test]
    fn parses_well_formed_matrix() {
        let m = read_scored_csv(WELL_FORMED.as_bytes()).unwrap();
        assert_eq!(m.n_respondents(), 2);
        assert_eq!(m.n_items(), 3);
        assert_eq!(m.row(1), &[0, 0, 1]);
        assert_eq!(m.respondents()[1].source, Source::Agent("gpt".into()));
    }

    #[test]
    fn canonical_output_is_stable() {
        let m = read_scored_csv(WELL_FORMED.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_scored_csv(&m, &mut out).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), WELL_FORMED);
        let again = read_scored_csv(out.as_slice()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn invalid_cell_names_row_and_column() {
        let src = "respondent_id,source,q1,q2\ns1,human,1,0\ns2,human,2,1\n";
        let err = read_scored_csv(src.as_bytes()).unwrap_err();
        assert_eq!(
            err,
            DataError::InvalidCell {
                row: 3,
                column: 3,
                item: "q1".into(),
                value: "2".into()
            }
        );
        assert!(err.to_string().contains("row 3, column 3"));
    }

    #[test]
    fn blank_scored_cell_is_rejected() {
        let src = "respondent_id,source,q1,q2\ns1,human,1,\n";
        assert!(matches!(
            read_scored_csv(src.as_bytes()).unwrap_err(),
            DataError::InvalidCell { row: 2, column: 4, .. }
        ));
    }

    #[test]
    fn duplicate_respondent_is_reported() {
        let src = "respondent_id,source,q1\ns1,human,1\ns1,human,0\n";
        let err = read_scored_csv(src.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("duplicate respondent"));
    }

    #[test]
    fn malformed_header_is_reported() {
        let src = "id,source,q1\ns1,human,1\n";
        assert!(matches!(
            read_scored_csv(src.as_bytes()).unwrap_err(),
            DataError::MalformedHeader(_)
        ));
        let src = "respondent_id,source,q1,q1\ns1,human,1,0\n";
        assert!(matches!(
            read_scored_csv(src.as_bytes()).unwrap_err(),
            DataError::DuplicateItem { column: 4, .. }
        ));
    }

    #[test]
    fn raw_blanks_become_none() {
        let src = "respondent_id,source,q1,q2\ns1,human,B,\n";
        let raw = read_raw_csv(src.as_bytes()).unwrap();
        assert_eq!(raw.answers[0], vec![Some("B".to_string()), None]);
    }

    #[test]
    fn key_round_trip() {
        let key = read_key_csv("item_id,correct_option\nq1,B\nq2,C\n".as_bytes()).unwrap();
        assert_eq!(key.get("q2"), Some("C"));
        assert!(read_key_csv("item,answer\n".as_bytes()).is_err());
    }
}
