//! Greedy and beam-search generation from a source representation.
//!
//! Scores are summed log-probabilities with no length normalization. PAD and
//! BOS are never emitted; their probability mass is not redistributed.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{EncodedExample, FeatureStore, Vocabulary, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::models::{model_input, Model, SourceRepresentation};
use crate::numcore::{Scalar, Tensor};
use crate::par::{self, Execution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    /// Generated indices without BOS; ends in EOS unless truncated.
    pub tokens: Vec<usize>,
    pub logprob: f64,
    pub per_step_logprobs: Vec<f64>,
}

impl GenerationResult {
    pub fn finished(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }

    /// Tokens with the trailing EOS removed.
    pub fn content(&self) -> &[usize] {
        match self.tokens.split_last() {
            Some((&EOS, rest)) => rest,
            _ => &self.tokens,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Greedy,
    Beam(usize),
}

fn emittable(token: usize) -> bool {
    token != PAD && token != BOS
}

/// Highest-probability emittable token; ties go to the lowest index.
fn argmax(logp: &[f64]) -> usize {
    let mut best = EOS;
    for (i, &x) in logp.iter().enumerate() {
        if emittable(i) && x > logp[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_generate<F: Scalar>(
    model: &Model<F>,
    src: &SourceRepresentation<F>,
    max_len: usize,
) -> Result<GenerationResult> {
    let mut state = model.decoder_initial_state();
    let mut prev = BOS;
    let mut out = GenerationResult {
        tokens: Vec::new(),
        logprob: 0.0,
        per_step_logprobs: Vec::new(),
    };
    while out.tokens.len() < max_len {
        let (next, logp) = model.decoder_step(&state, prev, src)?;
        let tok = argmax(&logp);
        out.tokens.push(tok);
        out.per_step_logprobs.push(logp[tok]);
        out.logprob += logp[tok];
        if tok == EOS {
            break;
        }
        state = next;
        prev = tok;
    }
    Ok(out)
}

struct Hyp<F: Scalar> {
    tokens: Vec<usize>,
    steps: Vec<f64>,
    score: f64,
    state: Tensor<F>,
}

/// Higher score first, then lexicographically smaller token list.
fn rank(a_score: f64, a_tokens: &[usize], b_score: f64, b_tokens: &[usize]) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_tokens.cmp(b_tokens))
}

pub fn beam_generate<F: Scalar>(
    model: &Model<F>,
    src: &SourceRepresentation<F>,
    beam_width: usize,
    max_len: usize,
) -> Result<GenerationResult> {
    if beam_width == 0 {
        return Err(Error::Contract("beam width must be at least 1".into()));
    }
    let mut beam = vec![Hyp {
        tokens: Vec::new(),
        steps: Vec::new(),
        score: 0.0,
        state: model.decoder_initial_state(),
    }];
    let mut finished: Vec<Hyp<F>> = Vec::new();

    for _ in 0..max_len {
        if beam.is_empty() {
            break;
        }
        // (parent, token, score, step logprob) for every extension of every live hypothesis
        let mut cands: Vec<(usize, usize, f64, f64)> = Vec::new();
        let mut states = Vec::with_capacity(beam.len());
        for (pi, h) in beam.iter().enumerate() {
            let prev = h.tokens.last().copied().unwrap_or(BOS);
            let (next, logp) = model.decoder_step(&h.state, prev, src)?;
            states.push(next);
            for (tok, &lp) in logp.iter().enumerate() {
                if emittable(tok) {
                    cands.push((pi, tok, h.score + lp, lp));
                }
            }
        }
        let key = |c: &(usize, usize, f64, f64)| {
            let mut t = beam[c.0].tokens.clone();
            t.push(c.1);
            t
        };
        cands.sort_by(|a, b| rank(a.2, &key(a), b.2, &key(b)));
        cands.truncate(beam_width);

        let mut next_beam = Vec::with_capacity(cands.len());
        for (pi, tok, score, lp) in cands {
            let parent = &beam[pi];
            let mut tokens = parent.tokens.clone();
            tokens.push(tok);
            let mut steps = parent.steps.clone();
            steps.push(lp);
            let hyp = Hyp {
                tokens,
                steps,
                score,
                state: states[pi].clone(),
            };
            if tok == EOS {
                finished.push(hyp);
            } else {
                next_beam.push(hyp);
            }
        }
        beam = next_beam;

        // Extensions only lower a score, so a strictly better finished
        // hypothesis can no longer be overtaken.
        let best_done = finished.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        if beam.iter().all(|h| h.score < best_done) {
            break;
        }
    }

    let pool = if finished.is_empty() { beam } else { finished };
    let best = pool
        .into_iter()
        .min_by(|a, b| rank(a.score, &a.tokens, b.score, &b.tokens))
        .expect("beam search keeps at least one hypothesis");
    Ok(GenerationResult {
        logprob: best.steps.iter().sum(),
        tokens: best.tokens,
        per_step_logprobs: best.steps,
    })
}

pub fn generate<F: Scalar>(
    model: &Model<F>,
    src: &SourceRepresentation<F>,
    strategy: Strategy,
    max_len: usize,
) -> Result<GenerationResult> {
    match strategy {
        Strategy::Greedy => greedy_generate(model, src, max_len),
        Strategy::Beam(w) => beam_generate(model, src, w, max_len),
    }
}

/// Generate for every example, results in input order.
pub fn generate_all<F: Scalar>(
    model: &Model<F>,
    examples: &[EncodedExample],
    features: Option<&FeatureStore>,
    strategy: Strategy,
    max_len: usize,
    exec: Execution,
) -> Result<Vec<GenerationResult>> {
    let variant = model.config().variant;
    par::map(exec, examples, |ex| {
        let input = model_input(ex, features, variant)?;
        let src = model.encode(&input)?;
        generate(model, &src, strategy, max_len)
    })
    .into_iter()
    .collect()
}

/// One line of a generation output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub pair_id: String,
    pub text: String,
    pub logprob: f64,
}

impl GenerationRecord {
    pub fn new(pair_id: &str, result: &GenerationResult, vocab: &Vocabulary) -> Self {
        GenerationRecord {
            pair_id: pair_id.to_string(),
            text: vocab.decode(result.content()).join(" "),
            logprob: result.logprob,
        }
    }
}

/// JSONL, preceded by `# `-prefixed header lines.
pub fn write_generations<W: Write>(mut w: W, header: &[String], records: &[GenerationRecord]) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_generations<R: BufRead>(r: R) -> Result<Vec<GenerationRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(
            serde_json::from_str(t)
                .map_err(|e| Error::Data(format!("generations line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}
