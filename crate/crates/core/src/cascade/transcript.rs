//! Public record of every parity exchange, serialized as JSON lines.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bitlinalg::BitVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Alice,
    Bob,
}

impl Role {
    pub fn peer(self) -> Role {
        match self {
            Role::Alice => Role::Bob,
            Role::Bob => Role::Alice,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Alice => "alice",
            Role::Bob => "bob",
        })
    }
}

mod bit01 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bit: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*bit))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("bit must be 0 or 1, got {other}"))),
        }
    }
}

/// One symmetric parity exchange: `sender` announces `bit`, its peer
/// answers with `reply`, both over the same mask and (when encrypted) the
/// same pad bit. Their XOR is the relative parity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptEntry {
    pub round: u32,
    pub sender: Role,
    pub mask: BitVec,
    #[serde(with = "bit01")]
    pub bit: bool,
    #[serde(with = "bit01")]
    pub reply: bool,
    pub encrypted: bool,
    pub pad_index: Option<usize>,
}

impl TranscriptEntry {
    pub fn relative_parity(&self) -> bool {
        self.bit ^ self.reply
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranscriptError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: encrypted entry without pad index")]
    MissingPadIndex { line: usize },
    #[error("line {line}: plaintext entry carries pad index")]
    UnexpectedPadIndex { line: usize },
    #[error("line {line}: mask length {found} differs from {expected}")]
    MaskLength {
        line: usize,
        expected: usize,
        found: usize,
    },
}

/// A pad index used by more than one entry (0-based entry positions).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DuplicatePad {
    pub pad_index: usize,
    pub entries: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: TranscriptEntry) {
        self.entries.push(entry);
    }

    pub fn extend(&mut self, other: Transcript) {
        self.entries.extend(other.entries);
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Pre-shared secret bits consumed: one per encrypted exchange.
    pub fn leakage(&self) -> usize {
        self.entries.iter().filter(|e| e.encrypted).count()
    }

    pub fn duplicate_pad_indices(&self) -> Vec<DuplicatePad> {
        let mut seen: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            if let Some(p) = e.pad_index {
                seen.entry(p).or_default().push(i);
            }
        }
        let mut dups: Vec<DuplicatePad> = seen
            .into_iter()
            .filter(|(_, v)| v.len() > 1)
            .map(|(pad_index, entries)| DuplicatePad { pad_index, entries })
            .collect();
        dups.sort_by_key(|d| d.pad_index);
        dups
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses JSON lines. Every line must be a complete entry, encrypted
    /// entries must name their pad bit, and masks must share one length.
    pub fn from_jsonl(text: &str) -> Result<Self, TranscriptError> {
        let mut entries = Vec::new();
        let mut width = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let e: TranscriptEntry =
                serde_json::from_str(raw).map_err(|err| TranscriptError::Parse {
                    line,
                    message: err.to_string(),
                })?;
            match (e.encrypted, e.pad_index) {
                (true, None) => return Err(TranscriptError::MissingPadIndex { line }),
                (false, Some(_)) => return Err(TranscriptError::UnexpectedPadIndex { line }),
                _ => {}
            }
            let expected = *width.get_or_insert(e.mask.len());
            if e.mask.len() != expected {
                return Err(TranscriptError::MaskLength {
                    line,
                    expected,
                    found: e.mask.len(),
                });
            }
            entries.push(e);
        }
        if !text.is_empty() && !text.ends_with('\n') {
            return Err(TranscriptError::Parse {
                line: text.lines().count(),
                message: "truncated final line".into(),
            });
        }
        Ok(Self { entries })
    }

    /// SHA-256 of the JSON-lines serialization, hex encoded.
    pub fn digest(&self) -> String {
        digest_hex(self.to_jsonl().as_bytes())
    }

    /// Same masks, in order, as the support of Z-type announcements.
    pub fn masks(&self) -> impl Iterator<Item = &BitVec> {
        self.entries.iter().map(|e| &e.mask)
    }
}

pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
