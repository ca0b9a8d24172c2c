//! Finite-difference cases for every differentiable op and every model variant.
//!
//! Shared by the crate tests and the acceptance runner.

#![allow(dead_code)]

use entgen::corpus::{BOS, EOS};
use entgen::models::{Model, ModelConfig, ModelInput, Variant};
use entgen::numcore::gradcheck::check_gradients;
use entgen::numcore::{Graph, Tensor, Var};
use entgen::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-5;

/// Checks run and failure descriptions.
pub type Outcome = (usize, Vec<String>);

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=6)
}

/// Reduce `v` to a scalar through fixed random weights so every element
/// receives a distinct upstream gradient.
fn weighted_sum(g: &mut Graph<f64>, v: Var, w: &Tensor<f64>) -> Result<Var> {
    let w = g.leaf(w.clone());
    let p = g.mul(v, w)?;
    g.sum(p)
}

type Build = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

/// `(name, inputs, build)` for one random instance of each op.
fn op_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Vec<Tensor<f64>>, Build)> {
    let (m, k, n) = (dim(rng), dim(rng), dim(rng));
    let mut cases: Vec<(&'static str, Vec<Tensor<f64>>, Build)> = Vec::new();

    let w = rand_tensor(rng, &[m, n]);
    cases.push((
        "matmul",
        vec![rand_tensor(rng, &[m, k]), rand_tensor(rng, &[k, n])],
        Box::new(move |g, v| {
            let y = g.matmul(v[0], v[1])?;
            weighted_sum(g, y, &w)
        }),
    ));
    for name in ["add", "sub", "mul"] {
        let w = rand_tensor(rng, &[m, n]);
        cases.push((
            name,
            vec![rand_tensor(rng, &[m, n]), rand_tensor(rng, &[m, n])],
            Box::new(move |g, v| {
                let y = match name {
                    "add" => g.add(v[0], v[1])?,
                    "sub" => g.sub(v[0], v[1])?,
                    _ => g.mul(v[0], v[1])?,
                };
                weighted_sum(g, y, &w)
            }),
        ));
    }
    let w = rand_tensor(rng, &[m, n]);
    cases.push((
        "add_bias",
        vec![rand_tensor(rng, &[m, n]), rand_tensor(rng, &[n])],
        Box::new(move |g, v| {
            let y = g.add_bias(v[0], v[1])?;
            weighted_sum(g, y, &w)
        }),
    ));
    for name in ["sigmoid", "tanh", "softmax"] {
        let w = rand_tensor(rng, &[m, n]);
        cases.push((
            name,
            vec![rand_tensor(rng, &[m, n]).map(|x| 2.0 * x)],
            Box::new(move |g, v| {
                let y = match name {
                    "sigmoid" => g.sigmoid(v[0])?,
                    "tanh" => g.tanh(v[0])?,
                    _ => g.softmax(v[0])?,
                };
                weighted_sum(g, y, &w)
            }),
        ));
    }
    let n2 = dim(rng);
    let w = rand_tensor(rng, &[m, n + n2]);
    cases.push((
        "concat",
        vec![rand_tensor(rng, &[m, n]), rand_tensor(rng, &[m, n2])],
        Box::new(move |g, v| {
            let y = g.concat(&[v[0], v[1]])?;
            weighted_sum(g, y, &w)
        }),
    ));
    let w = rand_tensor(rng, &[3, n]);
    cases.push((
        "stack_rows",
        vec![rand_tensor(rng, &[1, n]), rand_tensor(rng, &[1, n]), rand_tensor(rng, &[1, n])],
        Box::new(move |g, v| {
            let y = g.stack_rows(&[v[0], v[2], v[1]])?;
            weighted_sum(g, y, &w)
        }),
    ));
    let times = dim(rng);
    let w = rand_tensor(rng, &[times, n]);
    cases.push((
        "tile_rows",
        vec![rand_tensor(rng, &[1, n])],
        Box::new(move |g, v| {
            let y = g.tile_rows(v[0], times)?;
            weighted_sum(g, y, &w)
        }),
    ));
    let idx: Vec<usize> = (0..dim(rng)).map(|_| rng.random_range(0..m)).collect();
    let w = rand_tensor(rng, &[idx.len(), n]);
    cases.push((
        "gather",
        vec![rand_tensor(rng, &[m, n])],
        Box::new(move |g, v| {
            let y = g.gather(v[0], &idx)?;
            weighted_sum(g, y, &w)
        }),
    ));
    let classes = dim(rng).max(2);
    let targets: Vec<usize> = (0..m).map(|_| rng.random_range(0..classes)).collect();
    cases.push((
        "cross_entropy",
        vec![rand_tensor(rng, &[m, classes]).map(|x| 3.0 * x)],
        Box::new(move |g, v| g.cross_entropy(v[0], &targets)),
    ));
    let factor = rng.random_range(-2.0..2.0);
    let w = rand_tensor(rng, &[m, n]);
    cases.push((
        "scale",
        vec![rand_tensor(rng, &[m, n])],
        Box::new(move |g, v| {
            let y = g.scale(v[0], factor)?;
            weighted_sum(g, y, &w)
        }),
    ));
    cases.push((
        "sum",
        vec![rand_tensor(rng, &[m, n])],
        Box::new(|g, v| g.sum(v[0])),
    ));
    cases
}

/// `trials` random instances of every op; also reports ops never exercised.
pub fn check_ops(trials: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    let (mut checked, mut failures) = (0, Vec::new());
    for trial in 0..trials {
        for (name, inputs, build) in op_cases(&mut rng) {
            checked += 1;
            match check_gradients(&inputs, build) {
                Ok(r) if r.max_rel_error < TOL => {}
                Ok(r) => failures.push(format!("{name} trial {trial}: rel error {:.3e}", r.max_rel_error)),
                Err(e) => failures.push(format!("{name} trial {trial}: {e}")),
            }
            seen.insert(name);
        }
    }
    if seen.len() != 15 {
        failures.push(format!("only {} ops exercised", seen.len()));
    }
    (checked, failures)
}

fn random_config(rng: &mut ChaCha8Rng, variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        embed_dim: dim(rng),
        hidden_dim: dim(rng),
        image_dim: dim(rng),
        image_proj_dim: dim(rng),
        vocab_size: rng.random_range(5..=6),
        max_decode_len: 6,
    }
}

fn random_sentence(rng: &mut ChaCha8Rng, vocab: usize) -> Vec<usize> {
    let len = rng.random_range(0..=3);
    let mut s = vec![BOS];
    s.extend((0..len).map(|_| rng.random_range(3..vocab)));
    s.push(EOS);
    s
}

/// Full-model checks: FD against the mean loss, and the training path's
/// summed-NLL gradients against `n` times the mean-loss gradients.
pub fn check_variants(trials: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut checked, mut failures) = (0, Vec::new());
    for trial in 0..trials {
        for variant in Variant::ALL {
            checked += 1;
            let config = random_config(&mut rng, variant);
            let model = Model::<f64>::init(config, 0.5, rng.random()).unwrap();
            let premise = random_sentence(&mut rng, config.vocab_size);
            let target = random_sentence(&mut rng, config.vocab_size);
            let image: Vec<f32> = (0..config.image_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let input = ModelInput {
                pair_id: "g",
                premise: &premise,
                image: Some(&image),
            };
            let params: Vec<Tensor<f64>> = model.params().iter().map(|(_, t)| t.clone()).collect();
            match check_gradients(&params, |g, v| Ok(model.loss_in(g, v, &input, &target)?.0)) {
                Ok(r) if r.max_rel_error < TOL => {}
                Ok(r) => failures.push(format!("{variant} trial {trial}: rel error {:.3e}", r.max_rel_error)),
                Err(e) => failures.push(format!("{variant} trial {trial}: {e}")),
            }

            let (_, n, grads) = model.nll_and_grads(&input, &target).unwrap();
            let mut g = Graph::new();
            let bound = model.params().bind(&mut g);
            let (loss, _) = model.loss_in(&mut g, &bound, &input, &target).unwrap();
            let mean = g.backward(loss).unwrap();
            let consistent = bound.iter().enumerate().all(|(k, &v)| {
                grads[k]
                    .data()
                    .iter()
                    .zip(mean.wrt(v).data())
                    .all(|(a, b)| (a - b * n as f64).abs() < 1e-12)
            });
            if !consistent {
                failures.push(format!("{variant} trial {trial}: summed-NLL gradients disagree with the mean loss"));
            }
        }
    }
    (checked, failures)
}
