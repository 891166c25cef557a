//! On-disk formats: coloring files (JSON and binary) and item lists.
//!
//! Binary integers are big-endian throughout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color_seq::ColorSequence;
use crate::csa::{AncestralColoring, CsaError};

pub const COLORING_MAGIC: &[u8; 4] = b"ACOL";
pub const COLORING_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Coloring(#[from] CsaError),
    #[error("unsupported coloring file version {0}")]
    Version(u32),
    #[error("stored sequence {stored} does not match the classes ({actual})")]
    SequenceMismatch { stored: String, actual: String },
    #[error("class keys must be 1..={h}")]
    ClassKeys { h: u32 },
    #[error("binary coloring: {0}")]
    Binary(String),
    #[error("items line {line}: {reason}")]
    Item { line: usize, reason: String },
}

#[derive(Serialize, Deserialize)]
struct ColoringFile {
    version: u32,
    h: u32,
    sequence: ColorSequence,
    classes: BTreeMap<u16, Vec<u64>>,
}

pub fn coloring_to_json(c: &AncestralColoring) -> String {
    let file = ColoringFile {
        version: COLORING_VERSION,
        h: c.height(),
        sequence: c.sequence(),
        classes: c
            .classes()
            .map(|(color, nodes)| (color.get(), nodes.to_vec()))
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("coloring serializes")
}

pub fn coloring_from_json(text: &str) -> Result<AncestralColoring, FormatError> {
    let file: ColoringFile = serde_json::from_str(text)?;
    if file.version != COLORING_VERSION {
        return Err(FormatError::Version(file.version));
    }
    let keys_ok = file
        .classes
        .keys()
        .copied()
        .eq(1..=file.classes.len() as u16)
        && file.classes.len() == file.h as usize;
    if !keys_ok {
        return Err(FormatError::ClassKeys { h: file.h });
    }
    let coloring = AncestralColoring::from_classes(file.h, file.classes.into_values().collect())?;
    let actual = coloring.sequence();
    if actual != file.sequence {
        return Err(FormatError::SequenceMismatch {
            stored: file.sequence.to_compact(),
            actual: actual.to_compact(),
        });
    }
    Ok(coloring)
}

/// `ACOL`, u32 height, then for colors 1..=h a u64 length and that many
/// u64 node ids.
pub fn coloring_to_bytes(c: &AncestralColoring) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * (c.height() as usize + (2usize << c.height())));
    out.extend_from_slice(COLORING_MAGIC);
    out.extend_from_slice(&c.height().to_be_bytes());
    for (_, nodes) in c.classes() {
        out.extend_from_slice(&(nodes.len() as u64).to_be_bytes());
        for v in nodes {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out
}

pub fn coloring_from_bytes(bytes: &[u8]) -> Result<AncestralColoring, FormatError> {
    let bad = |m: &str| FormatError::Binary(m.to_string());
    if bytes.len() < 8 || &bytes[..4] != COLORING_MAGIC {
        return Err(bad("missing ACOL header"));
    }
    let h = u32::from_be_bytes(bytes[4..8].try_into().unwrap());
    let mut rest = &bytes[8..];
    let mut next = || -> Result<u64, FormatError> {
        let (head, tail) = rest
            .split_first_chunk::<8>()
            .ok_or_else(|| bad("truncated"))?;
        rest = tail;
        Ok(u64::from_be_bytes(*head))
    };
    let mut classes = Vec::new();
    for _ in 0..h {
        let len = next()?;
        if len > 1u64 << 40 {
            return Err(bad("implausible class length"));
        }
        classes.push((0..len).map(|_| next()).collect::<Result<Vec<_>, _>>()?);
    }
    if !rest.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(AncestralColoring::from_classes(h, classes)?)
}

/// Either format, told apart by the magic.
pub fn coloring_from_any(bytes: &[u8]) -> Result<AncestralColoring, FormatError> {
    if bytes.starts_with(COLORING_MAGIC) {
        coloring_from_bytes(bytes)
    } else {
        coloring_from_json(
            std::str::from_utf8(bytes)
                .map_err(|_| FormatError::Binary("neither ACOL nor utf-8 JSON".into()))?,
        )
    }
}

/// One JSON string per line. `"0x..."` is hex-decoded, anything else is
/// taken as UTF-8. Blank lines are skipped.
pub fn parse_items(text: &str) -> Result<Vec<Vec<u8>>, FormatError> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| FormatError::Item {
            line: i + 1,
            reason,
        };
        let s: String = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        match s.strip_prefix("0x") {
            Some(h) => items.push(hex::decode(h).map_err(|e| err(e.to_string()))?),
            None => items.push(s.into_bytes()),
        }
    }
    Ok(items)
}
