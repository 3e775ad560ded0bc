//! Readers for the raw input files.
//!
//! Ratings: `user_id, item_id, rating[, timestamp]`, one interaction per
//! line. A header is recognised by a non-numeric third field on the first
//! line. Item categories: `item_id, ..., labels` where the last field is a
//! `|`-separated label list; extra middle columns (titles) are ignored, so a
//! MovieLens `movies.csv` reads as is.

use std::fs::File;
use std::path::Path;

use cvae_core::data::{InteractionMatrix, ItemConditionMatrix, RawRating};

use crate::error::{Error, Result};

fn reader(path: &Path, delimiter: u8) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(Error::io(path))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(path, line, e.to_string())
}

/// Reads a ratings file, keeping rows with `rating >= threshold` in file
/// order.
pub fn load_ratings(path: &Path, delimiter: u8, threshold: f64) -> Result<Vec<RawRating>> {
    let mut rdr = reader(path, delimiter)?;
    let mut out = Vec::new();
    let mut first = true;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() < 3 || rec.len() > 4 {
            return Err(parse_error(path, line, format!("expected 3 or 4 fields, found {}", rec.len())));
        }
        let value = rec[2].parse::<f64>();
        if std::mem::take(&mut first) && value.is_err() {
            continue;
        }
        let value = value.map_err(|_| parse_error(path, line, format!("rating {:?} is not a number", &rec[2])))?;
        if !value.is_finite() {
            return Err(parse_error(path, line, "rating is not finite"));
        }
        let timestamp = match rec.get(3) {
            Some(t) if !t.is_empty() => Some(
                t.parse::<i64>()
                    .map_err(|_| parse_error(path, line, format!("timestamp {t:?} is not an integer")))?,
            ),
            _ => None,
        };
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(parse_error(path, line, "empty user or item id"));
        }
        if value >= threshold {
            out.push(RawRating {
                user_id: rec[0].to_string(),
                item_id: rec[1].to_string(),
                value,
                timestamp,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::format(path, format!("no ratings at or above {threshold}")));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedCategories {
    pub g: ItemConditionMatrix,
    /// Lines whose item id is not in the interaction matrix.
    pub skipped: usize,
}

/// Reads item labels for the items of `matrix`, dropping labels in `drop`.
/// A first line whose id is unknown is taken to be a header.
pub fn load_item_conditions(
    path: &Path,
    delimiter: u8,
    matrix: &InteractionMatrix,
    drop: &[String],
) -> Result<LoadedCategories> {
    let mut rdr = reader(path, delimiter)?;
    let mut labels: Vec<(usize, Vec<String>)> = Vec::new();
    let mut skipped = 0;
    let mut first = true;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() < 2 {
            return Err(parse_error(path, line, "expected an item id and a label list"));
        }
        let is_first = std::mem::take(&mut first);
        let Some(item) = matrix.item_index(&rec[0]) else {
            if !is_first {
                skipped += 1;
            }
            continue;
        };
        let list = rec[rec.len() - 1]
            .split('|')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        labels.push((item as usize, list));
    }
    if labels.is_empty() {
        return Err(Error::format(path, "no category line matches a known item"));
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} lines with unknown item ids", path.display());
    }
    let g = ItemConditionMatrix::from_labels(
        matrix.n_items(),
        labels.iter().map(|(i, l)| (*i, l.iter().map(String::as_str).collect())),
        drop,
    )?;
    Ok(LoadedCategories { g, skipped })
}

/// Reads a user history: one external item id per line (blank lines and
/// `#` comments ignored). Returns the known item indices and the unknown
/// ids.
pub fn load_history(path: &Path, matrix_items: impl Fn(&str) -> Option<u32>) -> Result<(Vec<u32>, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    let mut known = Vec::new();
    let mut unknown = Vec::new();
    for line in text.lines() {
        let id = line.split('#').next().unwrap_or("").trim();
        let id = id.split(',').next().unwrap_or("").trim();
        if id.is_empty() {
            continue;
        }
        match matrix_items(id) {
            Some(i) => known.push(i),
            None => unknown.push(id.to_string()),
        }
    }
    known.sort_unstable();
    known.dedup();
    Ok((known, unknown))
}

/// Parses a single-character delimiter; `tab` names the tab character.
pub fn parse_delimiter(s: &str) -> Result<u8> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(Error::Config(format!("delimiter must be a single ASCII character, got {s:?}"))),
    }
}
