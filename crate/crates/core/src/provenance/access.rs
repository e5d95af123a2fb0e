//! Access classes and the human-gate rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Declared in precedence order, most restrictive first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessClass {
    Captcha,
    Paid,
    Institutional,
    Login,
    Clickthrough,
    Api,
    Public,
}

impl AccessClass {
    pub const ALL: [AccessClass; 7] = [
        AccessClass::Captcha,
        AccessClass::Paid,
        AccessClass::Institutional,
        AccessClass::Login,
        AccessClass::Clickthrough,
        AccessClass::Api,
        AccessClass::Public,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AccessClass::Captcha => "captcha",
            AccessClass::Paid => "paid",
            AccessClass::Institutional => "institutional",
            AccessClass::Login => "login",
            AccessClass::Clickthrough => "clickthrough",
            AccessClass::Api => "api",
            AccessClass::Public => "public",
        }
    }
}

impl fmt::Display for AccessClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccessClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown access class `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct AccessDescriptor {
    pub requires_credential: bool,
    pub requires_payment: bool,
    pub requires_click_agreement: bool,
    pub has_captcha: bool,
    pub is_api: bool,
    /// Access only through an institutional affiliation.
    pub institutional: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessClassification {
    pub class: AccessClass,
    pub needs_human_gate: bool,
    /// An API that needs a key; the class stays `api`.
    pub credential_required: bool,
}

/// captcha > paid > institutional > login > clickthrough > api > public.
/// A credential on an API source keeps the `api` class; a credential
/// without an API is `login`.
pub fn classify_access(d: &AccessDescriptor) -> AccessClassification {
    let class = if d.has_captcha {
        AccessClass::Captcha
    } else if d.requires_payment {
        AccessClass::Paid
    } else if d.institutional {
        AccessClass::Institutional
    } else if d.requires_credential && !d.is_api {
        AccessClass::Login
    } else if d.requires_click_agreement {
        AccessClass::Clickthrough
    } else if d.is_api {
        AccessClass::Api
    } else {
        AccessClass::Public
    };
    AccessClassification {
        class,
        needs_human_gate: class != AccessClass::Public,
        credential_required: d.requires_credential,
    }
}

/// Default size above which a download needs authorization: 1 GiB.
pub const DEFAULT_SIZE_GATE_BYTES: u64 = 1 << 30;

pub fn exceeds_size_gate(size_bytes: u64, threshold: u64) -> bool {
    size_bytes > threshold
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let c = classify_access(&AccessDescriptor::default());
        assert_eq!((c.class, c.needs_human_gate), (AccessClass::Public, false));

        let c = classify_access(&AccessDescriptor { requires_credential: true, is_api: true, ..Default::default() });
        assert_eq!((c.class, c.needs_human_gate, c.credential_required), (AccessClass::Api, true, true));

        let all = AccessDescriptor {
            requires_credential: true,
            requires_payment: true,
            requires_click_agreement: true,
            has_captcha: true,
            is_api: true,
            institutional: true,
        };
        assert_eq!(classify_access(&all).class, AccessClass::Captcha);
        let c = classify_access(&AccessDescriptor { requires_credential: true, ..Default::default() });
        assert_eq!(c.class, AccessClass::Login);
    }

    #[test]
    fn size_gate() {
        assert!(!exceeds_size_gate(DEFAULT_SIZE_GATE_BYTES, DEFAULT_SIZE_GATE_BYTES));
        assert!(exceeds_size_gate(DEFAULT_SIZE_GATE_BYTES + 1, DEFAULT_SIZE_GATE_BYTES));
    }
}
