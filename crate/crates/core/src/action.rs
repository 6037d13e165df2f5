use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six actions the default corpus and compatibility table cover.
pub const DEFAULT_ACTIONS: [&str; 6] = ["Hit", "Cut", "Scoop", "Flip", "Poke", "Rake"];

/// Name of an action a tool can perform. The set is open: any non-empty
/// identifier is accepted, and the default actions are matched
/// case-insensitively to their canonical spelling.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ActionName(String);

impl ActionName {
    pub fn new(name: &str) -> Result<Self> {
        let name = name.trim();
        if name.is_empty() || name.contains(|c: char| c.is_whitespace() || c == ',' || c == ';') {
            return Err(Error::Unknown {
                kind: "action",
                token: name.into(),
            });
        }
        let canonical = DEFAULT_ACTIONS
            .iter()
            .find(|a| a.eq_ignore_ascii_case(name))
            .map_or_else(|| name.to_string(), |a| a.to_string());
        Ok(Self(canonical))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn defaults() -> Vec<ActionName> {
        DEFAULT_ACTIONS
            .iter()
            .map(|a| ActionName(a.to_string()))
            .collect()
    }
}

impl fmt::Display for ActionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ActionName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(s)
    }
}

impl TryFrom<String> for ActionName {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::new(&s)
    }
}

impl From<ActionName> for String {
    fn from(a: ActionName) -> String {
        a.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalizes_known_actions() {
        assert_eq!(ActionName::new("hit").unwrap().as_str(), "Hit");
        assert_eq!(ActionName::new(" RAKE ").unwrap().as_str(), "Rake");
        assert_eq!(ActionName::new("Stir").unwrap().as_str(), "Stir");
        assert!(ActionName::new("").is_err());
        assert!(ActionName::new("a;b").is_err());
    }
}
