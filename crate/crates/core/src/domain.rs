use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Subject area a tool or seed concept belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(alias = "financial")]
    Financial,
    #[serde(alias = "medical")]
    Medical,
    #[serde(alias = "academic")]
    Academic,
    #[serde(alias = "biological")]
    Biological,
    #[serde(alias = "general")]
    General,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::Financial,
        Domain::Medical,
        Domain::Academic,
        Domain::Biological,
        Domain::General,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Financial => "Financial",
            Domain::Medical => "Medical",
            Domain::Academic => "Academic",
            Domain::Biological => "Biological",
            Domain::General => "General",
        }
    }

    /// A tool tagged `tool_domain` may join a toolset scoped to `self`.
    /// General tools are compatible with every domain.
    pub fn accepts(self, tool_domain: Domain) -> bool {
        tool_domain == self || tool_domain == Domain::General
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown domain `{0}`")]
pub struct UnknownDomain(pub String);

impl FromStr for Domain {
    type Err = UnknownDomain;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownDomain(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn general_tools_join_every_domain() {
        for d in Domain::ALL {
            assert!(d.accepts(Domain::General));
            assert!(d.accepts(d));
        }
        assert!(!Domain::Medical.accepts(Domain::Financial));
    }

    #[test]
    fn parses_case_insensitively() {
        assert_eq!("medical".parse::<Domain>().unwrap(), Domain::Medical);
        assert!("chemistry".parse::<Domain>().is_err());
    }
}
