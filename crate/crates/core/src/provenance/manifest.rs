//! `data/DATA_MANIFEST.md`: one `## <id>` section per dataset, each a
//! two-column field table.
//!
//! Cells escape `\` as `\\`, `|` as `\|` and newlines as `\n`. Inside the
//! `variables` cell, names are separated by `, ` and a literal comma is `\,`.
//! Unknown fields are kept by appending `key: value` to the notes.

use std::collections::BTreeSet;

use chrono::NaiveDate;

use super::{DatasetRecord, ProvenanceError, ValidationStatus};
use crate::store::{Store, StoreError};

pub const DATA_MANIFEST_FILE: &str = "data/DATA_MANIFEST.md";

const TITLE: &str = "# Data Manifest";

pub const MANIFEST_FIELDS: [&str; 11] = [
    "source_name",
    "url",
    "tier",
    "access_class",
    "retrieval_date",
    "license",
    "variables",
    "size_bytes",
    "checksum",
    "validation",
    "notes",
];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '|' => out.push_str("\\|"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn escape_variable(s: &str) -> String {
    escape(s).replace(',', "\\,")
}

/// Reverses [`escape`] and [`escape_variable`].
fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Splits on `sep` where it is not escaped. Escapes are kept.
fn split_unescaped(s: &str, sep: char) -> Vec<String> {
    let mut parts = vec![String::new()];
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            let last = parts.last_mut().expect("nonempty");
            last.push(c);
            if let Some(n) = chars.next() {
                last.push(n);
            }
        } else if c == sep {
            parts.push(String::new());
        } else {
            parts.last_mut().expect("nonempty").push(c);
        }
    }
    parts
}

fn row(field: &str, value: &str) -> String {
    if value.is_empty() {
        format!("| {field} | |\n")
    } else {
        format!("| {field} | {value} |\n")
    }
}

pub fn render_manifest(records: &[DatasetRecord]) -> Result<String, ProvenanceError> {
    let mut seen = BTreeSet::new();
    let mut out = format!("{TITLE}\n");
    for r in records {
        r.validate()?;
        if !seen.insert(r.id.as_str()) {
            return Err(ProvenanceError::InvalidRecord {
                id: r.id.clone(),
                reason: "duplicate id".into(),
            });
        }
        let variables: Vec<String> = r.variables.iter().map(|v| escape_variable(v)).collect();
        out.push_str(&format!("\n## {}\n\n| Field | Value |\n|---|---|\n", r.id));
        out.push_str(&row("source_name", &escape(&r.source_name)));
        out.push_str(&row("url", &escape(&r.url)));
        out.push_str(&row("tier", &r.tier.to_string()));
        out.push_str(&row("access_class", r.access_class.as_str()));
        out.push_str(&row("retrieval_date", &r.retrieval_date.format("%Y-%m-%d").to_string()));
        out.push_str(&row("license", &escape(&r.license)));
        out.push_str(&row("variables", &variables.join(", ")));
        out.push_str(&row("size_bytes", &r.size_bytes.to_string()));
        out.push_str(&row("checksum", &escape(r.checksum.as_deref().unwrap_or(""))));
        out.push_str(&row("validation", r.validation().as_str()));
        out.push_str(&row("notes", &escape(&r.notes)));
    }
    Ok(out)
}

struct Section {
    id: String,
    line: usize,
    fields: Vec<(String, String, usize)>,
}

fn malformed(line: usize, reason: impl Into<String>) -> ProvenanceError {
    ProvenanceError::MalformedManifest {
        line,
        reason: reason.into(),
    }
}

fn parse_table_row(line: &str, line_no: usize) -> Result<Option<(String, String)>, ProvenanceError> {
    let inner = line
        .trim()
        .strip_prefix('|')
        .and_then(|l| l.strip_suffix('|'))
        .ok_or_else(|| malformed(line_no, "table row must start and end with `|`"))?;
    let cells = split_unescaped(inner, '|');
    if cells.len() != 2 {
        return Err(malformed(line_no, format!("expected 2 cells, found {}", cells.len())));
    }
    let key = cells[0].trim();
    let value = cells[1].trim();
    if key == "Field" && value == "Value" {
        return Ok(None);
    }
    if key.chars().all(|c| matches!(c, '-' | ':')) && value.chars().all(|c| matches!(c, '-' | ':')) {
        return Ok(None);
    }
    Ok(Some((key.to_string(), value.to_string())))
}

fn build_record(section: Section) -> Result<DatasetRecord, ProvenanceError> {
    let get = |name: &str| section.fields.iter().find(|(k, _, _)| k == name);
    let required = |name: &str| {
        get(name)
            .map(|(_, v, l)| (v.as_str(), *l))
            .ok_or_else(|| malformed(section.line, format!("dataset `{}` is missing `{name}`", section.id)))
    };
    let (tier, tier_line) = required("tier")?;
    let tier: u8 = tier.parse().map_err(|_| malformed(tier_line, format!("bad tier `{tier}`")))?;
    let (class, class_line) = required("access_class")?;
    let class = class.parse().map_err(|e: String| malformed(class_line, e))?;
    let (date, date_line) = required("retrieval_date")?;
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
        .map_err(|_| malformed(date_line, format!("bad retrieval_date `{date}`")))?;

    let mut record = DatasetRecord::new(
        &section.id,
        &unescape(required("source_name")?.0),
        &unescape(required("url")?.0),
        tier,
        class,
        date,
    );
    if let Some((_, v, _)) = get("license") {
        record.license = unescape(v);
    }
    if let Some((_, v, _)) = get("variables") {
        if !v.is_empty() {
            record.variables = split_unescaped(v, ',').iter().map(|p| unescape(p.trim())).collect();
        }
    }
    if let Some((_, v, l)) = get("size_bytes") {
        record.size_bytes = v.parse().map_err(|_| malformed(*l, format!("bad size_bytes `{v}`")))?;
    }
    if let Some((_, v, _)) = get("checksum") {
        if !v.is_empty() {
            record.checksum = Some(unescape(v));
        }
    }
    if let Some((_, v, l)) = get("validation") {
        let status: ValidationStatus = v.parse().map_err(|e: String| malformed(*l, e))?;
        record.set_validation(status);
    }
    let mut notes = get("notes").map(|(_, v, _)| unescape(v)).unwrap_or_default();
    for (k, v, _) in &section.fields {
        if !MANIFEST_FIELDS.contains(&k.as_str()) {
            if !notes.is_empty() {
                notes.push_str("; ");
            }
            notes.push_str(&format!("{k}: {}", unescape(v)));
        }
    }
    record.notes = notes;
    record.validate()?;
    Ok(record)
}

pub fn parse_manifest(text: &str) -> Result<Vec<DatasetRecord>, ProvenanceError> {
    let mut sections: Vec<Section> = Vec::new();
    let mut saw_title = false;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(id) = trimmed.strip_prefix("## ") {
            let id = id.trim();
            if sections.iter().any(|s| s.id == id) {
                return Err(malformed(line_no, format!("duplicate dataset `{id}`")));
            }
            sections.push(Section {
                id: id.to_string(),
                line: line_no,
                fields: Vec::new(),
            });
        } else if trimmed.starts_with("# ") && sections.is_empty() && !saw_title {
            saw_title = true;
        } else if trimmed.starts_with('|') {
            let Some(section) = sections.last_mut() else {
                return Err(malformed(line_no, "table row outside a dataset section"));
            };
            if let Some((k, v)) = parse_table_row(trimmed, line_no)? {
                if section.fields.iter().any(|(f, _, _)| *f == k) {
                    return Err(malformed(line_no, format!("field `{k}` repeated")));
                }
                section.fields.push((k, v, line_no));
            }
        } else if sections.is_empty() {
            continue;
        } else {
            return Err(malformed(line_no, format!("unexpected line `{trimmed}`")));
        }
    }
    sections.into_iter().map(build_record).collect()
}

impl From<StoreError> for ProvenanceError {
    fn from(e: StoreError) -> Self {
        ProvenanceError::Store(e.to_string())
    }
}

pub fn load_manifest(store: &Store) -> Result<Vec<DatasetRecord>, ProvenanceError> {
    match store.read_to_string(DATA_MANIFEST_FILE)? {
        Some(text) => parse_manifest(&text),
        None => Ok(Vec::new()),
    }
}

pub fn save_manifest(store: &Store, records: &[DatasetRecord]) -> Result<(), ProvenanceError> {
    let text = render_manifest(records)?;
    store.write_atomic(DATA_MANIFEST_FILE, text.as_bytes())?;
    Ok(())
}

/// Adds or replaces one record, keyed by id.
pub fn upsert_record(store: &Store, record: DatasetRecord) -> Result<(), ProvenanceError> {
    let mut records = load_manifest(store)?;
    match records.iter_mut().find(|r| r.id == record.id) {
        Some(slot) => *slot = record,
        None => records.push(record),
    }
    save_manifest(store, &records)
}
