//! JSON Lines I/O for regime records.

use std::io::{BufRead, Write};

use super::RegimeRecord;
use crate::error::{Error, Result};

/// Reads one record per non-blank line. Malformed or invalid records fail
/// with the 1-based line number.
pub fn read_records_jsonl<R: BufRead>(reader: R) -> Result<Vec<RegimeRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| Error::Parse { line: i + 1, message };
        let rec: RegimeRecord = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        rec.validate().map_err(|e| parse(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records_jsonl<W: Write>(mut writer: W, records: &[RegimeRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
