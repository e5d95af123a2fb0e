//! The YAML frontmatter shared by skills and agents.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use super::DocumentError;

/// A tool allowlist: explicit names or the `all` wildcard.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tools {
    All,
    List(Vec<String>),
}

impl Default for Tools {
    fn default() -> Self {
        Tools::List(Vec::new())
    }
}

impl Tools {
    pub fn is_empty(&self) -> bool {
        matches!(self, Tools::List(list) if list.is_empty())
    }

    pub fn is_wildcard(&self) -> bool {
        matches!(self, Tools::All)
    }

    pub fn allows(&self, tool: &str) -> bool {
        match self {
            Tools::All => true,
            Tools::List(list) => list.iter().any(|t| t == tool),
        }
    }

    fn from_names(names: Vec<String>) -> Self {
        if names.len() == 1 && names[0].eq_ignore_ascii_case("all") {
            Tools::All
        } else {
            Tools::List(names)
        }
    }
}

impl fmt::Display for Tools {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tools::All => f.write_str("all"),
            Tools::List(list) => f.write_str(&list.join(", ")),
        }
    }
}

impl Serialize for Tools {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Tools::All => serializer.serialize_str("all"),
            Tools::List(list) => list.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for Tools {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ToolsVisitor;

        impl<'de> Visitor<'de> for ToolsVisitor {
            type Value = Tools;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a tool list, a comma-separated string, or `all`")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Tools, E> {
                let names = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect();
                Ok(Tools::from_names(names))
            }

            fn visit_unit<E: de::Error>(self) -> Result<Tools, E> {
                Ok(Tools::default())
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Tools, A::Error> {
                let mut names = Vec::new();
                while let Some(name) = seq.next_element::<String>()? {
                    names.push(name.trim().to_string());
                }
                Ok(Tools::from_names(names))
            }
        }

        deserializer.deserialize_any(ToolsVisitor)
    }
}

/// `argument-hint` is written either as free text or as a YAML list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgumentHint {
    Text(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontmatter {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(
        rename = "argument-hint",
        alias = "argument_hint",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub argument_hint: Option<ArgumentHint>,
    #[serde(default)]
    pub tools: Tools,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    /// Keys this model does not interpret, kept for round-tripping.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_yaml::Value>,
}

impl Frontmatter {
    pub fn parse(yaml: &str) -> Result<Self, DocumentError> {
        if yaml.trim().is_empty() {
            return Err(DocumentError::MalformedFrontmatter("frontmatter is empty".into()));
        }
        serde_yaml::from_str(yaml).map_err(|e| DocumentError::MalformedFrontmatter(e.to_string()))
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("frontmatter serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tools_forms() {
        let fm = Frontmatter::parse("name: a\ntools: Read, Write\n").unwrap();
        assert_eq!(fm.tools, Tools::List(vec!["Read".into(), "Write".into()]));
        let fm = Frontmatter::parse("name: orchestrator\ntools: all\n").unwrap();
        assert_eq!(fm.tools, Tools::All);
        let fm = Frontmatter::parse("name: a\ntools: [Read, Bash]\n").unwrap();
        assert_eq!(fm.tools, Tools::List(vec!["Read".into(), "Bash".into()]));
    }

    #[test]
    fn flags_and_hint() {
        let fm = Frontmatter::parse(
            "name: auto-review-loop\nargument-hint: [artifact-path]\ntools: [Read]\nflags: [hard_mode, nightmare_mode]\n",
        )
        .unwrap();
        assert_eq!(fm.flags, vec!["hard_mode", "nightmare_mode"]);
        assert_eq!(fm.argument_hint, Some(ArgumentHint::List(vec!["artifact-path".into()])));
    }

    #[test]
    fn missing_name_or_bad_yaml_is_malformed() {
        assert!(Frontmatter::parse("tools: [Read]\n").is_err());
        assert!(Frontmatter::parse("name: [unclosed\n").is_err());
        assert!(Frontmatter::parse("").is_err());
    }

    #[test]
    fn extra_keys_survive() {
        let fm = Frontmatter::parse("name: a\ntools: [Read]\nparallelism:\n  class: independent\n").unwrap();
        assert!(fm.extra.contains_key("parallelism"));
        let again = Frontmatter::parse(&fm.to_yaml()).unwrap();
        assert_eq!(fm, again);
    }
}
