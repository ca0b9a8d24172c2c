use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use super::tokenize::tokenize;
use super::triples::Triple;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Token/index bijection with reserved PAD, BOS, EOS, UNK at 0..3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    min_frequency: u64,
}

impl Vocabulary {
    fn from_parts(entries: Vec<(String, u64)>, min_frequency: u64) -> Self {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut counts = vec![0; RESERVED.len()];
        for (t, c) in entries {
            tokens.push(t);
            counts.push(c);
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            counts,
            index,
            min_frequency,
        }
    }

    /// Vocabulary over a list of pre-tokenized sentences. Stored order is
    /// count descending, then token ascending.
    pub fn from_token_lists<'a>(
        sentences: impl IntoIterator<Item = &'a [String]>,
        min_frequency: u64,
    ) -> Result<Self> {
        let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
        let mut any = false;
        for s in sentences {
            any = true;
            for t in s {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
        if !any {
            return Err(Error::Contract("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut kept: Vec<(String, u64)> = freq
            .into_iter()
            .filter(|(t, c)| *c >= min_frequency.max(1) && !RESERVED.contains(t))
            .map(|(t, c)| (t.to_string(), c))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self::from_parts(kept, min_frequency))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_frequency(&self) -> u64 {
        self.min_frequency
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts.get(index).copied().unwrap_or(0)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_of(t)).collect()
    }

    /// Tokens for indices, skipping PAD, BOS and EOS.
    pub fn decode(&self, indices: &[usize]) -> Vec<String> {
        indices
            .iter()
            .filter(|&&i| i != PAD && i != BOS && i != EOS)
            .map(|&i| self.token(i).unwrap_or(RESERVED[UNK]).to_string())
            .collect()
    }

    /// Tab-separated `token<TAB>count`, one per line in index order, after a
    /// `#` header.
    pub fn write<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        writeln!(w, "# {header}")?;
        writeln!(w, "# min_frequency={}", self.min_frequency)?;
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            writeln!(w, "{t}\t{c}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut entries = Vec::new();
        let mut min_frequency = 1;
        let mut seen = 0usize;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("min_frequency=") {
                    min_frequency = v
                        .parse()
                        .map_err(|_| Error::Data(format!("vocab line {}: bad min_frequency", lineno + 1)))?;
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (tok, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::Data(format!("vocab line {}: expected token<TAB>count", lineno + 1)))?;
            let count: u64 = count
                .parse()
                .map_err(|_| Error::Data(format!("vocab line {}: bad count", lineno + 1)))?;
            if seen < RESERVED.len() {
                if tok != RESERVED[seen] {
                    return Err(Error::Data(format!(
                        "vocab line {}: expected reserved token {}",
                        lineno + 1,
                        RESERVED[seen]
                    )));
                }
            } else {
                entries.push((tok.to_string(), count));
            }
            seen += 1;
        }
        if seen < RESERVED.len() {
            return Err(Error::Data("vocabulary file lacks reserved tokens".into()));
        }
        Ok(Self::from_parts(entries, min_frequency))
    }
}

/// Count tokens over premises and all hypotheses of `triples` and keep those
/// seen at least `min_frequency` times.
pub fn build_vocab(triples: &[Triple], min_frequency: u64) -> Result<Vocabulary> {
    let mut sentences: Vec<Vec<String>> = Vec::new();
    for t in triples {
        sentences.push(tokenize(&t.premise));
        for h in &t.hypotheses {
            sentences.push(tokenize(h));
        }
    }
    Vocabulary::from_token_lists(sentences.iter().map(Vec::as_slice), min_frequency)
}
