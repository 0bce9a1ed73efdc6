//! Line-delimited JSON I/O.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::Validate;

/// Parses JSONL from a reader. Blank lines are skipped; line numbers are 1-based.
pub fn parse<T, R>(reader: R, source_name: &str) -> Result<Vec<T>>
where
    T: DeserializeOwned + Validate,
    R: Read,
{
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Record {
            source_name: source_name.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::Record {
            source_name: source_name.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        record.validate().map_err(|e| Error::Record {
            source_name: source_name.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn read<T>(path: impl AsRef<Path>) -> Result<Vec<T>>
where
    T: DeserializeOwned + Validate,
{
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse(file, &path.display().to_string())
}

pub fn to_writer<T: Serialize, W: Write>(records: &[T], mut writer: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    to_writer(records, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidRecord(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Passage;

    #[test]
    fn malformed_line_reports_line_number() {
        let data = "{\"passage_id\":\"a\",\"body\":\"x\"}\n\n{not json}\n";
        let err = parse::<Passage, _>(data.as_bytes(), "corpus.jsonl").unwrap_err();
        assert!(err.to_string().starts_with("corpus.jsonl:3:"), "{err}");
    }

    #[test]
    fn missing_field_is_named() {
        let data = "{\"passage_id\":\"a\"}\n";
        let err = parse::<Passage, _>(data.as_bytes(), "c").unwrap_err();
        assert!(err.to_string().contains("body"), "{err}");
    }
}
