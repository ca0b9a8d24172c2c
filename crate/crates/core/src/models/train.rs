use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelInput, Variant};
use crate::corpus::{EncodedExample, FeatureStore};
use crate::error::{Error, Result};
use crate::metrics::perplexity_with_seed;
use crate::numcore::{adam_step, AdamConfig, AdamState, Scalar, Tensor};
use crate::par::{self, Execution};

/// Optimization schedule. Defaults: 30 epochs, batch 32, Adam lr 1e-4,
/// init `Uniform[-0.08, 0.08]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub init_scale: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            epochs: 30,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 1,
            init_scale: 0.08,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean token cross-entropy over the epoch's batches.
    pub train_loss: f64,
    pub train_perplexity: f64,
    pub dev_perplexity: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<F: Scalar = f32> {
    /// Parameters from the epoch with the lowest dev perplexity, or the last
    /// epoch when no dev set is given.
    pub model: Model<F>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Encoder input for `ex`, resolving its image when the variant needs one.
pub fn model_input<'a>(
    ex: &'a EncodedExample,
    features: Option<&'a FeatureStore>,
    variant: Variant,
) -> Result<ModelInput<'a>> {
    let image = if variant.uses_image() {
        let store = features.ok_or_else(|| {
            Error::Data(format!("{variant} model needs image features (pair {})", ex.pair_id))
        })?;
        Some(store.get(&ex.image_id).ok_or_else(|| {
            Error::Data(format!(
                "missing image features for pair {} (image {})",
                ex.pair_id, ex.image_id
            ))
        })?)
    } else {
        None
    };
    Ok(ModelInput {
        pair_id: &ex.pair_id,
        premise: &ex.premise,
        image,
    })
}

/// Fail if any example's image is absent from `features` (multimodal
/// variants only); the error lists every missing image id.
pub fn check_features(examples: &[EncodedExample], features: Option<&FeatureStore>, variant: Variant) -> Result<()> {
    if !variant.uses_image() {
        return Ok(());
    }
    let store = features
        .ok_or_else(|| Error::Data(format!("{variant} model needs an image feature file")))?;
    let mut missing: Vec<&str> = examples
        .iter()
        .filter(|e| !store.contains(&e.image_id))
        .map(|e| e.image_id.as_str())
        .collect();
    missing.sort_unstable();
    missing.dedup();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Data(format!(
            "{} image id(s) have no features: {}",
            missing.len(),
            missing.join(", ")
        )))
    }
}

pub fn train<F: Scalar>(
    train_set: &[EncodedExample],
    dev_set: Option<&[EncodedExample]>,
    features: Option<&FeatureStore>,
    config: ModelConfig,
    schedule: &Schedule,
) -> Result<TrainOutcome<F>> {
    if train_set.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    if schedule.batch_size == 0 || schedule.epochs == 0 {
        return Err(Error::Config("epochs and batch size must be positive".into()));
    }
    check_features(train_set, features, config.variant)?;
    if let Some(dev) = dev_set {
        check_features(dev, features, config.variant)?;
    }

    let mut model = Model::<F>::init(config, schedule.init_scale, schedule.seed)?;
    let mut adam = AdamState::new(schedule.adam, model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed.wrapping_add(1));
    let dev_seed = schedule.seed.wrapping_add(2);
    let exec = schedule.execution;

    let mut log = Vec::with_capacity(schedule.epochs);
    let mut best: Option<(f64, usize, Model<F>)> = None;

    for epoch in 1..=schedule.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let picks: Vec<(usize, usize)> = order
            .iter()
            .map(|&i| (i, rng.random_range(0..train_set[i].hypotheses.len())))
            .collect();

        let mut epoch_nll = 0.0;
        let mut epoch_tokens = 0usize;
        for batch in picks.chunks(schedule.batch_size) {
            let results = par::map(exec, batch, |&(i, r)| {
                let ex = &train_set[i];
                let input = model_input(ex, features, config.variant)?;
                model.nll_and_grads(&input, &ex.hypotheses[r])
            });
            let mut grads: Option<Vec<Tensor<F>>> = None;
            let mut tokens = 0usize;
            for res in results {
                let (nll, n, g) = res?;
                epoch_nll += nll;
                tokens += n;
                match &mut grads {
                    None => grads = Some(g),
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            a.add_assign(b)?;
                        }
                    }
                }
            }
            epoch_tokens += tokens;
            let mut grads = grads.expect("batches are non-empty");
            let scale = F::from_f64(1.0 / tokens as f64);
            for g in &mut grads {
                for x in g.data_mut() {
                    *x *= scale;
                }
                if !g.is_finite() {
                    return Err(Error::Invariant(format!("non-finite gradient in epoch {epoch}")));
                }
            }
            adam_step(model.params_mut(), &grads, &mut adam)?;
        }

        let train_loss = epoch_nll / epoch_tokens as f64;
        let dev_perplexity = match dev_set {
            Some(dev) if !dev.is_empty() => Some(perplexity_with_seed(&model, dev, features, dev_seed, exec)?),
            _ => None,
        };
        log.push(EpochLog {
            epoch,
            train_loss,
            train_perplexity: train_loss.exp(),
            dev_perplexity,
        });
        if let Some(score) = dev_perplexity {
            if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
                best = Some((score, epoch, model.clone()));
            }
        }
    }

    let (best_epoch, model) = match best {
        Some((_, epoch, m)) => (epoch, m),
        None => (schedule.epochs, model),
    };
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
    })
}
