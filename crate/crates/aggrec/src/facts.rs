//! Fact files.
//!
//! Two formats: CSV with the predicate name in the first field
//! (`mov,a,b,0.1`), and whitespace-separated per-predicate files where the
//! predicate is the file stem (`edge.facts` holding `a b` lines).

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use aggrec_core::parser::parse_value_token;
use aggrec_core::{FactSet, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FactsError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

fn malformed(path: &Path, line: u64, message: impl Into<String>) -> FactsError {
    FactsError::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn value(path: &Path, line: u64, field: &str) -> Result<Value, FactsError> {
    parse_value_token(field).map_err(|e| malformed(path, line, e.to_string()))
}

/// Reads `predicate,field,...` records. Lines starting with `#` are
/// comments.
pub fn read_csv(reader: impl Read, path: &Path, into: &mut FactSet) -> Result<(), FactsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut fields = rec.iter();
        let Some(pred) = fields.next().filter(|p| !p.is_empty()) else {
            continue;
        };
        if !is_predicate_name(pred) {
            return Err(malformed(
                path,
                line,
                format!("bad predicate name {pred:?}"),
            ));
        }
        let tuple = fields
            .map(|f| value(path, line, f))
            .collect::<Result<Vec<_>, _>>()?;
        into.insert(pred, tuple);
    }
    Ok(())
}

/// Reads a per-predicate file: one fact per line, fields separated by
/// tabs or spaces.
pub fn read_predicate_file(
    reader: impl Read,
    path: &Path,
    predicate: &str,
    into: &mut FactSet,
) -> Result<(), FactsError> {
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|source| FactsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let n = i as u64 + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let tuple = text
            .split_whitespace()
            .map(|f| value(path, n, f))
            .collect::<Result<Vec<_>, _>>()?;
        into.insert(predicate, tuple);
    }
    Ok(())
}

fn open(path: &Path) -> Result<File, FactsError> {
    File::open(path).map_err(|source| FactsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_csv(path: &Path, into: &mut FactSet) -> Result<(), FactsError> {
    read_csv(open(path)?, path, into)
}

/// Loads a per-predicate file named after its predicate.
pub fn load_predicate_file(path: &Path, into: &mut FactSet) -> Result<(), FactsError> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| is_predicate_name(s))
        .ok_or_else(|| malformed(path, 0, "file name is not a predicate name"))?
        .to_string();
    read_predicate_file(open(path)?, path, &stem, into)
}

fn is_predicate_name(s: &str) -> bool {
    let mut cs = s.chars();
    cs.next().is_some_and(|c| c.is_ascii_lowercase())
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_record_becomes_fact() {
        let mut f = FactSet::new();
        read_csv(
            "mov,a,b,0.1\n# comment\nn, 3 ,x\n".as_bytes(),
            Path::new("t.csv"),
            &mut f,
        )
        .unwrap();
        assert!(f
            .get("mov")
            .unwrap()
            .contains(&vec!["a".into(), "b".into(), 0.1.into()]));
        assert!(f.get("n").unwrap().contains(&vec![3.into(), "x".into()]));
    }

    #[test]
    fn malformed_number_is_reported_with_line() {
        let mut f = FactSet::new();
        let err = read_csv("p,1\np,1.2.3\n".as_bytes(), Path::new("t.csv"), &mut f).unwrap_err();
        assert!(err.to_string().starts_with("t.csv:2:"), "{err}");
    }

    #[test]
    fn predicate_file() {
        let mut f = FactSet::new();
        read_predicate_file(
            "a b\n\nb\tc\n".as_bytes(),
            Path::new("edge.facts"),
            "edge",
            &mut f,
        )
        .unwrap();
        assert_eq!(f.count("edge"), 2);
    }
}
