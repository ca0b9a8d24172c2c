use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One ⟨premise, image, hypotheses⟩ record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub pair_id: String,
    pub premise: String,
    pub hypotheses: Vec<String>,
    pub image_id: String,
}

/// Read a triples file: one JSON object per line. Blank lines and lines
/// starting with `#` are skipped.
pub fn read_triples<R: BufRead>(r: R) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let t: Triple = serde_json::from_str(trimmed)
            .map_err(|e| Error::Data(format!("triples line {}: {e}", i + 1)))?;
        if t.hypotheses.is_empty() {
            return Err(Error::Data(format!(
                "triples line {}: pair {} has no hypotheses",
                i + 1,
                t.pair_id
            )));
        }
        out.push(t);
    }
    Ok(out)
}

pub fn write_triples<W: Write>(mut w: W, header: Option<&str>, triples: &[Triple]) -> Result<()> {
    if let Some(h) = header {
        writeln!(w, "# {h}")?;
    }
    for t in triples {
        let line = serde_json::to_string(t).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Collapse records that share premise text and image into one record whose
/// hypotheses are the union of theirs, in first-seen order. The merged record
/// keeps the first record's `pair_id`.
pub fn merge_references(triples: &[Triple]) -> Vec<Triple> {
    let mut slot: HashMap<(&str, &str), usize> = HashMap::new();
    let mut out: Vec<Triple> = Vec::new();
    for t in triples {
        let key = (t.premise.as_str(), t.image_id.as_str());
        match slot.get(&key) {
            Some(&i) => {
                for h in &t.hypotheses {
                    if !out[i].hypotheses.contains(h) {
                        out[i].hypotheses.push(h.clone());
                    }
                }
            }
            None => {
                slot.insert(key, out.len());
                out.push(t.clone());
            }
        }
    }
    out
}
