//! Symbol files: `{"L": depth, "entries": [{"level", "pos", "value"}, ...]}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicInterval;
use crate::error::{Error, Result};
use crate::symbols::CoefSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    level: u32,
    pos: usize,
    value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SymbolFile {
    #[serde(rename = "L")]
    depth: u32,
    entries: Vec<Entry>,
}

/// Nonzero entries only, in canonical order.
pub fn to_string(seq: &CoefSequence) -> Result<String> {
    let file = SymbolFile {
        depth: seq.depth(),
        entries: seq
            .nonzero()
            .map(|(i, value)| Entry {
                level: i.level(),
                pos: i.position(),
                value,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

pub fn from_str(text: &str) -> Result<CoefSequence> {
    let file: SymbolFile = serde_json::from_str(text).map_err(|e| Error::SymbolFile(e.to_string()))?;
    let mut entries = Vec::with_capacity(file.entries.len());
    for e in file.entries {
        if !e.value.is_finite() {
            return Err(Error::SymbolFile(format!("non-finite value at ({},{})", e.level, e.pos)));
        }
        let i = DyadicInterval::try_new(e.level, e.pos).map_err(|err| Error::SymbolFile(err.to_string()))?;
        entries.push((i, e.value));
    }
    CoefSequence::from_entries(file.depth, entries).map_err(|e| Error::SymbolFile(e.to_string()))
}

pub fn read(path: &Path) -> Result<CoefSequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::SymbolFile(format!("{}: {e}", path.display())))?;
    from_str(&text)
}

pub fn write(path: &Path, seq: &CoefSequence) -> Result<()> {
    fs::write(path, to_string(seq)?)?;
    Ok(())
}
