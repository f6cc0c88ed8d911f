//! Annotated prompt templates.
//!
//! A template source is plain text where `[[...]]` marks a player span and
//! `{name}` marks a variable. Everything else is constant text that appears in
//! every coalition's prompt.
//!
//! ```
//! use biasprobe_core::{CoalitionMask, PromptTemplate};
//!
//! let t = PromptTemplate::parse("if stock [[B]] makes a [[profit]] [[70%]] of the time").unwrap();
//! assert_eq!(t.player_count(), 3);
//! let mask = CoalitionMask::from_players([0, 2], 3).unwrap();
//! assert_eq!(t.render(mask, &Default::default()).unwrap(), "if stock B makes a 70% of the time");
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coalition::CoalitionMask;
use crate::error::{Error, Result};

/// Most players a template may declare. Exact attribution needs `2^n`
/// coalition values, so this is also the exact-mode cap.
pub const MAX_PLAYERS: usize = 24;

/// Variable name to substituted text.
pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Constant { text: String },
    Player { ordinal: usize, text: String },
    Variable { name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    segments: Vec<Segment>,
    player_count: usize,
}

impl PromptTemplate {
    /// Parses annotated source text. Players are numbered left to right.
    pub fn parse(source: &str) -> Result<Self> {
        let mut segments = Vec::new();
        let mut constant = String::new();
        let mut player_count = 0;
        let mut rest = source;
        let mut offset = 0;

        let malformed = |offset: usize, reason: &str| Error::MalformedTemplate {
            offset,
            reason: reason.to_string(),
        };

        while let Some(c) = rest.chars().next() {
            if rest.starts_with("[[") {
                let body = &rest[2..];
                let close = body
                    .find("]]")
                    .ok_or_else(|| malformed(offset, "unclosed `[[`"))?;
                let text = &body[..close];
                if text.contains("[[") {
                    return Err(malformed(offset, "nested `[[`"));
                }
                if text.contains('{') || text.contains('}') {
                    return Err(malformed(offset, "variable inside a player span"));
                }
                if text.trim().is_empty() {
                    return Err(malformed(offset, "empty player span"));
                }
                flush_constant(&mut constant, &mut segments);
                segments.push(Segment::Player {
                    ordinal: player_count,
                    text: text.to_string(),
                });
                player_count += 1;
                let consumed = 2 + close + 2;
                rest = &rest[consumed..];
                offset += consumed;
            } else if rest.starts_with("]]") {
                return Err(malformed(offset, "`]]` without matching `[[`"));
            } else if c == '{' {
                let close = rest
                    .find('}')
                    .ok_or_else(|| malformed(offset, "unclosed `{`"))?;
                let name = &rest[1..close];
                if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                    return Err(malformed(offset, "invalid variable name"));
                }
                flush_constant(&mut constant, &mut segments);
                segments.push(Segment::Variable {
                    name: name.to_string(),
                });
                rest = &rest[close + 1..];
                offset += close + 1;
            } else if c == '}' {
                return Err(malformed(offset, "`}` without matching `{`"));
            } else {
                constant.push(c);
                rest = &rest[c.len_utf8()..];
                offset += c.len_utf8();
            }
        }
        flush_constant(&mut constant, &mut segments);

        if player_count > MAX_PLAYERS {
            return Err(Error::TooManyPlayers {
                found: player_count,
                cap: MAX_PLAYERS,
            });
        }
        Ok(Self {
            segments,
            player_count,
        })
    }

    /// Reads a template file. A single trailing line break is dropped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let source = source
            .strip_suffix("\r\n")
            .or_else(|| source.strip_suffix('\n'))
            .unwrap_or(&source);
        Self::parse(source)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn player_count(&self) -> usize {
        self.player_count
    }

    /// Player texts in ordinal order.
    pub fn player_texts(&self) -> Vec<String> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Player { text, .. } => Some(text.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn variables(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Variable { name } => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn full_mask(&self) -> CoalitionMask {
        CoalitionMask::full(self.player_count)
    }

    /// Renders the prompt for one coalition.
    ///
    /// Absent players are deleted. Whitespace touching a deletion site
    /// collapses to a single space, and the result is trimmed.
    pub fn render(&self, mask: CoalitionMask, bindings: &Bindings) -> Result<String> {
        if mask.width() != self.player_count {
            return Err(Error::MaskWidthMismatch {
                expected: self.player_count,
                got: mask.width(),
            });
        }
        let mut out = String::new();
        // Set after a deletion until the next kept text is appended.
        let mut pending_gap = false;
        for segment in &self.segments {
            let text = match segment {
                Segment::Constant { text } => text.as_str(),
                Segment::Player { ordinal, text } => {
                    if mask.contains(*ordinal) {
                        text.as_str()
                    } else {
                        if !pending_gap {
                            let trimmed = out.trim_end().len();
                            if trimmed < out.len() {
                                out.truncate(trimmed);
                                out.push(' ');
                            }
                        }
                        pending_gap = true;
                        continue;
                    }
                }
                Segment::Variable { name } => bindings
                    .get(name)
                    .map(String::as_str)
                    .ok_or_else(|| Error::UnboundVariable(name.clone()))?,
            };
            if pending_gap && !text.is_empty() {
                let rest = text.trim_start();
                if rest.len() < text.len() && !out.ends_with(' ') {
                    out.push(' ');
                }
                out.push_str(rest);
                if !rest.is_empty() {
                    pending_gap = false;
                }
            } else {
                out.push_str(text);
            }
        }
        Ok(out.trim().to_string())
    }

    /// The full-coalition prompt.
    pub fn render_full(&self, bindings: &Bindings) -> Result<String> {
        self.render(self.full_mask(), bindings)
    }
}

fn flush_constant(constant: &mut String, segments: &mut Vec<Segment>) {
    if !constant.is_empty() {
        segments.push(Segment::Constant {
            text: std::mem::take(constant),
        });
    }
}

/// Convenience for building bindings from pairs.
pub fn bindings<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Bindings {
    pairs
        .into_iter()
        .map(|(k, v)| (k.into(), v.into()))
        .collect()
}
