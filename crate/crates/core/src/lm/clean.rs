//! Post-generation text cleaning.

use serde::{Deserialize, Serialize};

/// ASCII characters stripped from generated text in addition to non-ASCII and
/// control characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    pub removed: String,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            removed: "()'`".into(),
        }
    }
}

/// Cleans with the default removal set.
pub fn clean_text(raw: &str) -> String {
    clean_text_with(raw, &CleanConfig::default())
}

/// Drops non-ASCII characters, control characters and everything in
/// `config.removed`, then collapses whitespace runs to one space and trims.
pub fn clean_text_with(raw: &str, config: &CleanConfig) -> String {
    let kept: String = raw
        .chars()
        .filter_map(|c| {
            if !c.is_ascii() || config.removed.contains(c) {
                None
            } else if c.is_ascii_whitespace() {
                Some(' ')
            } else if c.is_ascii_control() {
                None
            } else {
                Some(c)
            }
        })
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}
