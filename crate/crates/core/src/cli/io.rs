//! Dataset loading and atomic file output.

use std::io::Write;
use std::path::Path;

use super::CliError;
use crate::predictor::{Sample, Target};

pub const DATASET_HEADER: [&str; 4] = ["model_id", "cycles", "energy_j", "latency_s"];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Rows without a value for the selected target.
    pub skipped: usize,
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::data(path, e))
}

/// Reads a `model_id,cycles,energy_j,latency_s` CSV, keeping rows that have
/// a value for `target`.
pub fn load_dataset(path: &Path, target: Target) -> Result<Dataset, CliError> {
    let text = read_text(path)?;
    parse_dataset(&text, target).map_err(|m| CliError::data(path, m))
}

pub fn parse_dataset(text: &str, target: Target) -> Result<Dataset, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(format!(
            "line 1: header must be `{}`, found `{}`",
            DATASET_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        ));
    }
    let col = match target {
        Target::Energy => 2,
        Target::Latency => 3,
    };
    let mut samples = Vec::new();
    let mut skipped = 0;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| format!("line {line}: {e}"))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let id = field(0);
        if id.is_empty() {
            return Err(format!("line {line}: empty model_id"));
        }
        let cycles: u64 = field(1).parse().map_err(|_| {
            format!(
                "line {line}: cycles {:?} is not a nonnegative integer",
                field(1)
            )
        })?;
        // the untargeted column is still checked when present
        for c in [2, 3] {
            if !field(c).is_empty() && field(c).parse::<f64>().is_err() {
                return Err(format!(
                    "line {line}: {} {:?} is not a number",
                    DATASET_HEADER[c],
                    field(c)
                ));
            }
        }
        if field(col).is_empty() {
            skipped += 1;
            continue;
        }
        let value: f64 = field(col).parse().expect("checked above");
        let s = Sample::new(id, cycles, value).map_err(|e| format!("line {line}: {e}"))?;
        samples.push(s);
    }
    if skipped > 0 {
        log::info!("skipped {skipped} rows without a {target} value");
    }
    Ok(Dataset { samples, skipped })
}

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::data(path, e))?;
    tmp.write_all(contents)
        .map_err(|e| CliError::data(path, e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| CliError::data(path, e))?;
    tmp.persist(path)
        .map_err(|e| CliError::data(path, e.error))?;
    Ok(())
}

pub fn save_report(path: &Path, report: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).expect("report serialization cannot fail");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "model_id,cycles,energy_j,latency_s\n";

    #[test]
    fn three_rows() {
        let d = parse_dataset(
            &format!("{HEAD}a,10,0.1,0.01\nb,20,0.2,0.02\nc,30,0.3,0.03\n"),
            Target::Energy,
        )
        .unwrap();
        assert_eq!(d.samples.len(), 3);
        assert_eq!(d.skipped, 0);
        assert_eq!(d.samples[2].measured, 0.3);
    }

    #[test]
    fn bad_header() {
        let e = parse_dataset("id,cyc\na,1\n", Target::Energy).unwrap_err();
        assert!(e.contains("header"), "{e}");
    }

    #[test]
    fn blank_target_skipped() {
        let d = parse_dataset(
            &format!("{HEAD}a,10,,0.01\nb,20,0.2,0.02\nc,30,0.3,\n"),
            Target::Energy,
        )
        .unwrap();
        assert_eq!(d.samples.len(), 2);
        assert_eq!(d.skipped, 1);
    }

    #[test]
    fn non_numeric_field() {
        let e = parse_dataset(&format!("{HEAD}a,ten,0.1,0.01\n"), Target::Energy).unwrap_err();
        assert!(e.starts_with("line 2"), "{e}");
        let e = parse_dataset(&format!("{HEAD}a,10,0.1,fast\n"), Target::Energy).unwrap_err();
        assert!(e.contains("latency_s"), "{e}");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
