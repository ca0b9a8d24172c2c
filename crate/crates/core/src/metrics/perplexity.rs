use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EncodedExample, FeatureStore};
use crate::error::Result;
use crate::models::{model_input, Model};
use crate::numcore::Scalar;
use crate::par::{self, Execution};

/// One reference index per example, drawn in order from `seed`.
pub fn sample_references(examples: &[EncodedExample], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    examples
        .iter()
        .map(|e| rng.random_range(0..e.hypotheses.len()))
        .collect()
}

/// Total negative log-likelihood and scored token count.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NllTotals {
    pub nll: f64,
    pub tokens: usize,
}

impl NllTotals {
    pub fn perplexity(&self) -> f64 {
        (self.nll / self.tokens as f64).exp()
    }
}

/// Teacher-forced NLL of `examples[i].hypotheses[refs[i]]`, summed over every
/// target token (EOS included, PAD excluded).
pub fn corpus_nll<F: Scalar>(
    model: &Model<F>,
    examples: &[EncodedExample],
    features: Option<&FeatureStore>,
    refs: &[usize],
    exec: Execution,
) -> Result<NllTotals> {
    let variant = model.config().variant;
    let per = par::map_range(exec, examples.len(), |i| {
        let ex = &examples[i];
        let input = model_input(ex, features, variant)?;
        model.target_log_probs(&input, &ex.hypotheses[refs[i]])
    });
    let mut totals = NllTotals::default();
    for lp in per {
        let lp = lp?;
        totals.tokens += lp.len();
        for x in lp {
            totals.nll -= x;
        }
    }
    Ok(totals)
}

pub fn perplexity_with_seed<F: Scalar>(
    model: &Model<F>,
    examples: &[EncodedExample],
    features: Option<&FeatureStore>,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    let refs = sample_references(examples, seed);
    Ok(corpus_nll(model, examples, features, &refs, exec)?.perplexity())
}

/// Corpus perplexity with one seeded reference per premise.
pub fn perplexity<F: Scalar>(
    model: &Model<F>,
    examples: &[EncodedExample],
    features: Option<&FeatureStore>,
    seed: u64,
) -> Result<f64> {
    perplexity_with_seed(model, examples, features, seed, Execution::default())
}
