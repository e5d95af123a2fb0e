//! Typed field lists for agent return payloads.

use serde::{Deserialize, Serialize};

use super::AgentResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Text,
    Integer,
    Number,
    List,
    Map,
}

impl FieldKind {
    pub fn accepts(self, value: &serde_json::Value) -> bool {
        match self {
            FieldKind::Text => value.is_string(),
            FieldKind::Integer => value.is_i64() || value.is_u64(),
            FieldKind::Number => value.is_number(),
            FieldKind::List => value.is_array(),
            FieldKind::Map => value.is_object(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default = "yes")]
    pub required: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReturnSchema {
    pub fields: Vec<FieldSpec>,
}

impl ReturnSchema {
    pub fn from_yaml(text: &str) -> Result<Self, serde_yaml::Error> {
        serde_yaml::from_str(text)
    }

    pub fn field(name: &str, kind: FieldKind) -> FieldSpec {
        FieldSpec {
            name: name.to_string(),
            kind,
            required: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReturnCheck {
    Ok,
    /// Every absent or ill-typed field, in schema order.
    Malformed { fields: Vec<String> },
}

impl ReturnCheck {
    pub fn is_ok(&self) -> bool {
        matches!(self, ReturnCheck::Ok)
    }
}

pub fn validate_return(result: &AgentResult, schema: &ReturnSchema) -> ReturnCheck {
    let fields: Vec<String> = schema
        .fields
        .iter()
        .filter(|spec| match result.structured.get(&spec.name) {
            None | Some(serde_json::Value::Null) => spec.required,
            Some(value) => !spec.kind.accepts(value),
        })
        .map(|spec| spec.name.clone())
        .collect();
    if fields.is_empty() {
        ReturnCheck::Ok
    } else {
        ReturnCheck::Malformed { fields }
    }
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;
    use crate::backend::TokenUsage;

    fn scout_schema() -> ReturnSchema {
        use FieldKind::*;
        ReturnSchema {
            fields: [
                ("id", Text),
                ("title", Text),
                ("authors", List),
                ("year", Integer),
                ("venue", Text),
                ("abstract", Text),
                ("citation_count", Integer),
                ("doi", Text),
                ("url", Text),
            ]
            .into_iter()
            .map(|(n, k)| ReturnSchema::field(n, k))
            .collect(),
        }
    }

    fn record() -> serde_json::Value {
        json!({
            "id": "p1", "title": "T", "authors": ["A"], "year": 2024, "venue": "V",
            "abstract": "...", "citation_count": 12, "doi": "10.1/x", "url": "https://x"
        })
    }

    fn result(v: serde_json::Value) -> AgentResult {
        AgentResult::from_raw(v.to_string(), TokenUsage::default())
    }

    #[test]
    fn complete_record_is_ok() {
        assert_eq!(validate_return(&result(record()), &scout_schema()), ReturnCheck::Ok);
    }

    #[test]
    fn missing_doi() {
        let mut v = record();
        v.as_object_mut().unwrap().remove("doi");
        assert_eq!(
            validate_return(&result(v), &scout_schema()),
            ReturnCheck::Malformed { fields: vec!["doi".into()] }
        );
    }

    #[test]
    fn wrong_type() {
        let mut v = record();
        v["citation_count"] = json!("twelve");
        assert_eq!(
            validate_return(&result(v), &scout_schema()),
            ReturnCheck::Malformed { fields: vec!["citation_count".into()] }
        );
    }

    #[test]
    fn yaml_form() {
        let s = ReturnSchema::from_yaml("fields:\n  - {name: doi, kind: text}\n  - {name: note, kind: text, required: false}\n").unwrap();
        assert!(s.fields[0].required && !s.fields[1].required);
    }
}
