//! Local checks on a downloaded file. Every applicable check runs.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ProvenanceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Nonempty,
    SizeWithin,
    ChecksumMatch,
    DeclaredFormatMatch,
    MetadataRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Json,
    Geojson,
    Parquet,
    Zip,
    Gzip,
    Text,
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string));
        f.write_str(s.as_deref().unwrap_or("?"))
    }
}

/// A declared metadata bound, such as a year range, with the value the
/// record claims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataRange {
    pub key: String,
    pub min: f64,
    pub max: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpectedProperties {
    pub min_size: Option<u64>,
    pub max_size: Option<u64>,
    /// `sha256:<hex>` or bare hex.
    pub checksum: Option<String>,
    pub declared_format: Option<DataFormat>,
    pub metadata_ranges: Vec<MetadataRange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub kind: CheckKind,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetValidation {
    pub checks: Vec<ValidationCheck>,
    pub passed: bool,
    pub size_bytes: u64,
    /// `sha256:<hex>` of the file.
    pub sha256: String,
}

fn check(kind: CheckKind, passed: bool, detail: String) -> ValidationCheck {
    ValidationCheck { kind, passed, detail }
}

fn format_matches(format: DataFormat, bytes: &[u8]) -> bool {
    match format {
        DataFormat::Parquet => bytes.len() >= 8 && bytes.starts_with(b"PAR1") && bytes.ends_with(b"PAR1"),
        DataFormat::Zip => bytes.starts_with(b"PK\x03\x04") || bytes.starts_with(b"PK\x05\x06"),
        DataFormat::Gzip => bytes.starts_with(&[0x1f, 0x8b]),
        DataFormat::Text => std::str::from_utf8(bytes).is_ok(),
        DataFormat::Json => serde_json::from_slice::<serde_json::Value>(bytes).is_ok(),
        DataFormat::Geojson => serde_json::from_slice::<serde_json::Value>(bytes)
            .ok()
            .and_then(|v| v.get("type").and_then(|t| t.as_str()).map(str::to_string))
            .is_some_and(|t| matches!(t.as_str(), "FeatureCollection" | "Feature")),
        DataFormat::Csv => {
            let Ok(text) = std::str::from_utf8(bytes) else {
                return false;
            };
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            let Some(header) = lines.next() else {
                return false;
            };
            let columns = header.matches(',').count();
            columns > 0 && lines.take(50).all(|l| l.matches(',').count() == columns)
        }
    }
}

fn normalize_checksum(expected: &str) -> String {
    expected.trim().trim_start_matches("sha256:").to_ascii_lowercase()
}

pub fn validate_dataset(path: &Path, expected: &ExpectedProperties) -> Result<DatasetValidation, ProvenanceError> {
    let bytes = std::fs::read(path).map_err(|e| ProvenanceError::FileUnreadable {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let size = bytes.len() as u64;
    let digest = hex::encode(Sha256::digest(&bytes));
    let mut checks = vec![check(CheckKind::Nonempty, size > 0, format!("{size} bytes"))];

    if expected.min_size.is_some() || expected.max_size.is_some() {
        let lo = expected.min_size.unwrap_or(0);
        let hi = expected.max_size.unwrap_or(u64::MAX);
        checks.push(check(
            CheckKind::SizeWithin,
            (lo..=hi).contains(&size),
            format!("{size} bytes, expected {lo}..={hi}"),
        ));
    }
    if let Some(want) = &expected.checksum {
        let want = normalize_checksum(want);
        checks.push(check(CheckKind::ChecksumMatch, want == digest, format!("sha256 {digest}, expected {want}")));
    }
    if let Some(format) = expected.declared_format {
        checks.push(check(
            CheckKind::DeclaredFormatMatch,
            format_matches(format, &bytes),
            format!("declared {format}"),
        ));
    }
    for range in &expected.metadata_ranges {
        checks.push(check(
            CheckKind::MetadataRange,
            range.min <= range.observed && range.observed <= range.max,
            format!("{} = {}, declared {}..={}", range.key, range.observed, range.min, range.max),
        ));
    }
    Ok(DatasetValidation {
        passed: checks.iter().all(|c| c.passed),
        checks,
        size_bytes: size,
        sha256: format!("sha256:{digest}"),
    })
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn file(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f
    }

    #[test]
    fn empty_file_fails() {
        let f = file(b"");
        let v = validate_dataset(f.path(), &ExpectedProperties::default()).unwrap();
        assert!(!v.passed);
        assert_eq!(v.checks[0].kind, CheckKind::Nonempty);
    }

    #[test]
    fn checksum_and_size() {
        // sha256("abc"), the FIPS 180-2 test vector.
        let f = file(b"abc");
        let expected = ExpectedProperties {
            min_size: Some(3),
            max_size: Some(3),
            checksum: Some("sha256:BA7816BF8F01CFEA414140DE5DAE2223B00361A396177A9CB410FF61F20015AD".into()),
            ..Default::default()
        };
        let v = validate_dataset(f.path(), &expected).unwrap();
        assert!(v.passed, "{v:?}");
        assert_eq!(v.checks.len(), 3);
    }

    #[test]
    fn year_out_of_range_and_no_short_circuit() {
        let f = file(b"");
        let expected = ExpectedProperties {
            declared_format: Some(DataFormat::Csv),
            metadata_ranges: vec![MetadataRange { key: "year".into(), min: 2018.0, max: 2020.0, observed: 2017.0 }],
            ..Default::default()
        };
        let v = validate_dataset(f.path(), &expected).unwrap();
        assert_eq!(v.checks.len(), 3);
        assert!(v.checks.iter().all(|c| !c.passed));
    }

    #[test]
    fn formats() {
        assert!(format_matches(DataFormat::Csv, b"a,b\n1,2\n"));
        assert!(!format_matches(DataFormat::Csv, b"a,b\n1\n"));
        assert!(format_matches(DataFormat::Geojson, br#"{"type":"FeatureCollection","features":[]}"#));
        assert!(!format_matches(DataFormat::Geojson, br#"{"type":"Other"}"#));
        assert!(format_matches(DataFormat::Gzip, &[0x1f, 0x8b, 0]));
    }

    #[test]
    fn unreadable() {
        assert!(matches!(
            validate_dataset(Path::new("/nonexistent/x.csv"), &ExpectedProperties::default()),
            Err(ProvenanceError::FileUnreadable { .. })
        ));
    }
}
