// SPDX-License-Identifier: MIT OR Apache-2.0

//! Lexicon configuration and its sectioned plain-text file format.
//!
//! ```text
//! [names]
//! John
//! Mary
//! [objects]
//! the keys
//! [places]
//! store
//! [templates]
//! When {A} and {B} went to the {place}, {A} gave {object} to
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{AuditError, Result};

const DEFAULT_LEXICON: &str = include_str!("../../data/default_lexicon.txt");

pub const SLOT_SUBJECT: &str = "{A}";
pub const SLOT_IO: &str = "{B}";
pub const SLOT_OBJECT: &str = "{object}";
pub const SLOT_PLACE: &str = "{place}";

/// Word lists and surface templates the generator samples from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconConfig {
    pub names: Vec<String>,
    pub objects: Vec<String>,
    pub places: Vec<String>,
    pub templates: Vec<String>,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("shipped lexicon is valid")
    }
}

impl LexiconConfig {
    /// Parses the sectioned text format and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = LexiconConfig {
            names: Vec::new(),
            objects: Vec::new(),
            places: Vec::new(),
            templates: Vec::new(),
        };
        let mut section: Option<&mut Vec<String>> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if trimmed.starts_with('[') && trimmed.ends_with(']') {
                section = Some(match trimmed {
                    "[names]" => &mut lex.names,
                    "[objects]" => &mut lex.objects,
                    "[places]" => &mut lex.places,
                    "[templates]" => &mut lex.templates,
                    other => {
                        return Err(AuditError::Config(format!(
                            "lexicon line {}: unknown section {other}",
                            lineno + 1
                        )))
                    }
                });
                continue;
            }
            match section.as_deref_mut() {
                Some(list) => list.push(trimmed.to_string()),
                None => {
                    return Err(AuditError::Config(format!(
                        "lexicon line {}: entry outside of any section",
                        lineno + 1
                    )))
                }
            }
        }
        lex.validate()?;
        Ok(lex)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        Self::parse(&text)
    }

    /// Checks every list invariant, naming the offending list on failure.
    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("names", &self.names),
            ("objects", &self.objects),
            ("places", &self.places),
            ("templates", &self.templates),
        ];
        for (label, list) in lists {
            if list.is_empty() {
                return Err(AuditError::Config(format!("lexicon list `{label}` is empty")));
            }
        }
        if self.names.len() < 2 {
            return Err(AuditError::Config(
                "lexicon list `names` needs at least two entries".into(),
            ));
        }
        for (label, list) in [
            ("names", &self.names),
            ("objects", &self.objects),
            ("places", &self.places),
        ] {
            let mut seen = HashSet::new();
            for item in list {
                if !seen.insert(item.as_str()) {
                    return Err(AuditError::Config(format!(
                        "lexicon list `{label}` contains duplicate entry {item:?}"
                    )));
                }
            }
        }
        for (i, template) in self.templates.iter().enumerate() {
            let expect = [
                (SLOT_SUBJECT, 2),
                (SLOT_IO, 1),
                (SLOT_OBJECT, 1),
                (SLOT_PLACE, 1),
            ];
            for (slot, count) in expect {
                let found = template.matches(slot).count();
                if found != count {
                    return Err(AuditError::Config(format!(
                        "lexicon list `templates` entry {i}: slot {slot} appears {found} times, expected {count}"
                    )));
                }
            }
            if template.ends_with(char::is_whitespace) {
                return Err(AuditError::Config(format!(
                    "lexicon list `templates` entry {i} has trailing whitespace"
                )));
            }
        }
        Ok(())
    }

    /// Serializes back into the sectioned text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (label, list) in [
            ("names", &self.names),
            ("objects", &self.objects),
            ("places", &self.places),
            ("templates", &self.templates),
        ] {
            out.push('[');
            out.push_str(label);
            out.push_str("]\n");
            for item in list {
                out.push_str(item);
                out.push('\n');
            }
        }
        out
    }
}

/// Fills a template's slots.
pub fn render_template(template: &str, subject: &str, io: &str, object: &str, place: &str) -> String {
    template
        .replace(SLOT_SUBJECT, subject)
        .replace(SLOT_IO, io)
        .replace(SLOT_OBJECT, object)
        .replace(SLOT_PLACE, place)
}
