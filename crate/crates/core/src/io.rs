//! Text formats for workloads and hash databases.
//!
//! Workloads are CSV (`hash,count`, optional header) or JSON Lines with
//! `{"hash": ..., "count": ...}` objects. A database file lists one 64-hex
//! hash per line, optionally followed by a tab and an identifier. Blank lines
//! and lines starting with `#` are skipped everywhere.

use std::fs;
use std::path::Path;

use crate::bits::PerceptualHash;
use crate::distribution::WorkloadRecord;
use crate::error::{Error, Result};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn record_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Record { line, reason: reason.into() }
}

pub fn parse_workload_csv(text: &str) -> Result<Vec<WorkloadRecord>> {
    let mut out = Vec::new();
    for (n, line) in content_lines(text) {
        let Some((h, c)) = line.split_once(',') else {
            return Err(record_err(n, "expected hash,count"));
        };
        let (h, c) = (h.trim(), c.trim());
        if out.is_empty() && h.eq_ignore_ascii_case("hash") {
            continue;
        }
        let hash = PerceptualHash::from_hex(h).map_err(|e| record_err(n, e.to_string()))?;
        let count: u64 = c.parse().map_err(|_| record_err(n, format!("bad count {c:?}")))?;
        if count == 0 {
            return Err(record_err(n, "count must be positive"));
        }
        out.push(WorkloadRecord { hash, count });
    }
    Ok(out)
}

pub fn parse_workload_jsonl(text: &str) -> Result<Vec<WorkloadRecord>> {
    content_lines(text)
        .map(|(n, line)| {
            let r: WorkloadRecord = serde_json::from_str(line).map_err(|e| record_err(n, e.to_string()))?;
            if r.count == 0 {
                return Err(record_err(n, "count must be positive"));
            }
            Ok(r)
        })
        .collect()
}

/// Reads a workload, choosing JSON Lines for `.jsonl`/`.json` and CSV otherwise.
pub fn read_workload(path: &Path) -> Result<Vec<WorkloadRecord>> {
    let text = fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl" | "json") => parse_workload_jsonl(&text),
        _ => parse_workload_csv(&text),
    }
}

pub fn workload_to_csv(records: &[WorkloadRecord]) -> String {
    let mut out = String::from("hash,count\n");
    for r in records {
        out.push_str(&format!("{},{}\n", r.hash, r.count));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DbEntry {
    pub hash: PerceptualHash,
    pub id: Option<String>,
}

pub fn parse_database(text: &str) -> Result<Vec<DbEntry>> {
    content_lines(text)
        .map(|(n, line)| {
            let (h, id) = match line.split_once('\t') {
                Some((h, id)) => (h.trim(), Some(id.trim().to_string())),
                None => (line, None),
            };
            let hash = PerceptualHash::from_hex(h).map_err(|e| record_err(n, e.to_string()))?;
            Ok(DbEntry { hash, id })
        })
        .collect()
}

pub fn read_database(path: &Path) -> Result<Vec<DbEntry>> {
    parse_database(&fs::read_to_string(path)?)
}

pub fn database_to_text(hashes: &[PerceptualHash]) -> String {
    hashes.iter().map(|h| format!("{h}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(n: u64) -> PerceptualHash {
        PerceptualHash::from_words([n, 1, 2, 3])
    }

    #[test]
    fn csv_roundtrip_with_header_and_comments() {
        let records = vec![WorkloadRecord { hash: h(1), count: 4 }, WorkloadRecord { hash: h(2), count: 1 }];
        let text = format!("# generated\n{}\n", workload_to_csv(&records));
        assert_eq!(parse_workload_csv(&text).unwrap(), records);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let text = format!("hash,count\n{},0\n", h(1));
        assert!(matches!(parse_workload_csv(&text), Err(Error::Record { line: 2, .. })));
        assert!(parse_workload_csv("abc,3").is_err());
        assert!(parse_workload_csv(&format!("{},x", h(1))).is_err());
        assert!(parse_workload_csv(&h(1).to_string()).is_err());
    }

    #[test]
    fn jsonl_records() {
        let text = format!("{{\"hash\":\"{}\",\"count\":3}}\n\n{{\"hash\":\"{}\",\"count\":1}}\n", h(1), h(2));
        let r = parse_workload_jsonl(&text).unwrap();
        assert_eq!(r[0], WorkloadRecord { hash: h(1), count: 3 });
        assert_eq!(r.len(), 2);
        assert!(parse_workload_jsonl(&format!("{{\"hash\":\"{}\",\"count\":0}}", h(1))).is_err());
    }

    #[test]
    fn database_with_ids() {
        let text = format!("{}\tcat.jpg\n# skip\n{}\n", h(1), h(2));
        let db = parse_database(&text).unwrap();
        assert_eq!(db[0], DbEntry { hash: h(1), id: Some("cat.jpg".into()) });
        assert_eq!(db[1].id, None);
        assert_eq!(parse_database(&database_to_text(&[h(5)])).unwrap()[0].hash, h(5));
        assert!(parse_database("zz").is_err());
    }
}
