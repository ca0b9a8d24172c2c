use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How references are used by [`bleu1`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BleuMode {
    /// Clip against the whole reference set of each candidate.
    #[default]
    MultiRef,
    /// Score each reference slot as its own single-reference corpus and
    /// average the slot scores.
    SingleRefMean,
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

/// Reference length closest to `c`; ties go to the shorter reference.
fn closest_ref_len(c: usize, refs: &[&[String]]) -> usize {
    refs.iter()
        .map(|r| r.len())
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

/// Corpus-level BLEU-1 over `(candidate, references)` pairs.
fn corpus_bleu1<'a>(pairs: impl Iterator<Item = (&'a [String], Vec<&'a [String]>)>) -> Result<f64> {
    let (mut clipped, mut cand_len, mut ref_len) = (0usize, 0usize, 0usize);
    for (cand, refs) in pairs {
        if refs.is_empty() {
            return Err(Error::Contract("candidate without references".into()));
        }
        let mut max_ref: HashMap<&str, usize> = HashMap::new();
        for r in &refs {
            for (w, n) in counts(r) {
                let e = max_ref.entry(w).or_insert(0);
                *e = (*e).max(n);
            }
        }
        clipped += counts(cand)
            .into_iter()
            .map(|(w, n)| n.min(max_ref.get(w).copied().unwrap_or(0)))
            .sum::<usize>();
        cand_len += cand.len();
        ref_len += closest_ref_len(cand.len(), &refs);
    }
    if cand_len == 0 {
        // every candidate is empty: the brevity penalty tends to 0
        return Ok(0.0);
    }
    let precision = clipped as f64 / cand_len as f64;
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(bp * precision)
}

/// Corpus BLEU-1 with brevity penalty computed at corpus level.
pub fn bleu1(candidates: &[Vec<String>], references: &[Vec<Vec<String>>], mode: BleuMode) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::dim("bleu1", &[candidates.len()], &[references.len()]));
    }
    if candidates.is_empty() {
        return Err(Error::Contract("empty candidate corpus".into()));
    }
    match mode {
        BleuMode::MultiRef => corpus_bleu1(
            candidates
                .iter()
                .zip(references)
                .map(|(c, rs)| (c.as_slice(), rs.iter().map(Vec::as_slice).collect())),
        ),
        BleuMode::SingleRefMean => {
            let slots = references.iter().map(Vec::len).max().unwrap_or(0);
            let mut total = 0.0;
            for j in 0..slots {
                total += corpus_bleu1(
                    candidates
                        .iter()
                        .zip(references)
                        .filter(|(_, rs)| rs.len() > j)
                        .map(|(c, rs)| (c.as_slice(), vec![rs[j].as_slice()])),
                )?;
            }
            Ok(total / slots as f64)
        }
    }
}
