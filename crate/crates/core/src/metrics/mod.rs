//! Multi-reference generation metrics and overlap statistics.

mod bleu;
mod cider;
mod meteor;
mod overlap;
mod perplexity;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu1, BleuMode};
pub use cider::{cider, cider_with, CiderScores, CIDER_MAX_N};
pub use meteor::{align as meteor_align, meteor_exact};
pub use overlap::{content_set, dice, pearson, stopword_set, STOPWORDS, STOPWORDS_VERSION};
pub use perplexity::{corpus_nll, perplexity, perplexity_with_seed, sample_references, NllTotals};

use crate::corpus::tokenize;
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// A candidate and its reference group, already tokenized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub pair_id: String,
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl EvalInstance {
    /// Tokenize raw strings with the corpus tokenizer.
    pub fn from_text(pair_id: &str, candidate: &str, references: &[&str]) -> Self {
        EvalInstance {
            pair_id: pair_id.to_string(),
            candidate: tokenize(candidate),
            references: references.iter().map(|r| tokenize(r)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceScores {
    pub pair_id: String,
    pub cider: f64,
    pub meteor: f64,
    /// Max Dice between premise and any reference; absent without premises.
    pub dice: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu1: f64,
    pub bleu1_mode: BleuMode,
    pub meteor: f64,
    pub cider: f64,
    pub perplexity: Option<f64>,
    pub per_instance: Vec<InstanceScores>,
}

/// Corpus scores for aligned instances. `premises`, when given, enables the
/// per-instance Dice column.
pub fn metric_report(
    instances: &[EvalInstance],
    premises: Option<&[Vec<String>]>,
    bleu_mode: BleuMode,
    perplexity: Option<f64>,
    exec: Execution,
) -> Result<MetricReport> {
    if let Some(p) = premises {
        if p.len() != instances.len() {
            return Err(Error::dim("metric_report", &[instances.len()], &[p.len()]));
        }
    }
    let cands: Vec<Vec<String>> = instances.iter().map(|i| i.candidate.clone()).collect();
    let refs: Vec<Vec<Vec<String>>> = instances.iter().map(|i| i.references.clone()).collect();
    let bleu = bleu1(&cands, &refs, bleu_mode)?;
    let cid = cider_with(instances, exec)?;
    let meteors = par::map(exec, instances, |i| meteor_exact(&i.candidate, &i.references));
    let sw = stopword_set();
    let per_instance = instances
        .iter()
        .enumerate()
        .map(|(k, inst)| InstanceScores {
            pair_id: inst.pair_id.clone(),
            cider: cid.per_instance[k],
            meteor: meteors[k],
            dice: premises.map(|p| {
                inst.references
                    .iter()
                    .map(|r| dice(&p[k], r, &sw))
                    .fold(0.0, f64::max)
            }),
        })
        .collect();
    Ok(MetricReport {
        bleu1: bleu,
        bleu1_mode: bleu_mode,
        meteor: meteors.iter().sum::<f64>() / meteors.len() as f64,
        cider: cid.corpus,
        perplexity,
        per_instance,
    })
}
