//! Line-delimited JSON files: datasets, feature rows and sample weights.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use proxkit_core::simulator::SampleRecord;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// One JSON document per line, each line ending in `\n`.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("in-memory serialization");
        out.push(b'\n');
    }
    out
}

/// Parses JSONL, skipping blank lines; errors name the 1-based line.
pub fn from_jsonl<T: DeserializeOwned, R: BufRead>(reader: R, origin: &str) -> CliResult<Vec<T>> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::Data(format!("{origin}: line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| CliError::Data(format!("{origin}: line {}: {e}", i + 1)))?;
        items.push(item);
    }
    Ok(items)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let file = File::open(path).map_err(|e| CliError::input(path, e))?;
    from_jsonl(BufReader::new(file), &path.display().to_string())
}

/// Writes `bytes` to `path`; the parent directory must already exist.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::output(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(|e| CliError::output(path, e))?;
    w.flush().map_err(|e| CliError::output(path, e))
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::input(path, e))
}

pub fn read_dataset(path: &Path) -> CliResult<Vec<SampleRecord>> {
    read_jsonl(path)
}

/// Encoded window: `features` is the histogram followed by the unscaled
/// carriage features, stored as 32-bit floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub id: String,
    pub label: u8,
    pub features: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub id: String,
    pub weight: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proxkit_core::simulator::{generate_dataset, SimConfig};

    #[test]
    fn dataset_bytes_survive_a_round_trip() {
        let records = generate_dataset(&SimConfig::default().with_total_records(6)).unwrap();
        let bytes = to_jsonl(&records);
        let back: Vec<SampleRecord> = from_jsonl(bytes.as_slice(), "mem").unwrap();
        assert_eq!(back, records);
        assert_eq!(to_jsonl(&back), bytes);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = b"{\"id\":\"a\",\"weight\":1.0}\n\nnot json\n";
        let err = from_jsonl::<WeightRow, _>(&text[..], "w.jsonl").unwrap_err();
        assert!(err.to_string().contains("w.jsonl: line 3"), "{err}");
    }
}
