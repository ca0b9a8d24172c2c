//! GRU encoder-decoders for entailment generation.
//!
//! Four variants share one decoder. They differ only in how the source
//! representation is built:
//!
//! | variant       | source representation                                  |
//! |---------------|--------------------------------------------------------|
//! | `unimodal`    | final encoder state over the premise                   |
//! | `init_inject` | final encoder state, encoder started from the image    |
//! | `merge`       | `concat(final encoder state, projected image)`         |
//! | `image_only`  | projected image, no encoder RNN at all                 |
//!
//! The decoder always starts from a zero state; the source representation is
//! concatenated to each decoder state right before the output layer.

mod config;
mod train;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use config::{ModelConfig, Variant};
pub use train::{check_features, model_input, train, EpochLog, Schedule, TrainOutcome};

use crate::corpus::{BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::numcore::{Graph, ParamId, ParamStore, Scalar, Tensor, Var};

/// Where a source representation came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    TextFinalState,
    ImageInitFinalState,
    MergeConcat,
    ImageOnly,
}

/// The fixed vector conditioning every decoder step.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceRepresentation<F: Scalar = f32> {
    /// A `1×d` row.
    pub vector: Tensor<F>,
    pub provenance: Provenance,
}

impl<F: Scalar> SourceRepresentation<F> {
    pub fn dim(&self) -> usize {
        self.vector.cols()
    }

    pub fn values(&self) -> &[F] {
        self.vector.data()
    }
}

/// What the encoder needs for one example.
#[derive(Clone, Copy, Debug)]
pub struct ModelInput<'a> {
    pub pair_id: &'a str,
    pub premise: &'a [usize],
    pub image: Option<&'a [f32]>,
}

/// Parameter handles for one GRU.
#[derive(Clone, Copy, Debug)]
pub struct GruIds {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
}

/// Graph variables for one GRU's weights.
#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

impl GruIds {
    fn register<F: Scalar>(store: &mut ParamStore<F>, prefix: &str, input: usize, hidden: usize) -> Self {
        let mut w = |name: &str, shape: &[usize]| store.push(format!("{prefix}.{name}"), Tensor::zeros(shape));
        GruIds {
            w_z: w("w_z", &[input, hidden]),
            u_z: w("u_z", &[hidden, hidden]),
            b_z: w("b_z", &[hidden]),
            w_r: w("w_r", &[input, hidden]),
            u_r: w("u_r", &[hidden, hidden]),
            b_r: w("b_r", &[hidden]),
            w_h: w("w_h", &[input, hidden]),
            u_h: w("u_h", &[hidden, hidden]),
            b_h: w("b_h", &[hidden]),
        }
    }

    fn vars(&self, bound: &[Var]) -> GruVars {
        let v = |id: ParamId| bound[id.index()];
        GruVars {
            w_z: v(self.w_z),
            u_z: v(self.u_z),
            b_z: v(self.b_z),
            w_r: v(self.w_r),
            u_r: v(self.u_r),
            b_r: v(self.b_r),
            w_h: v(self.w_h),
            u_h: v(self.u_h),
            b_h: v(self.b_h),
        }
    }
}

/// Parameter handles of a whole model; absent groups are `None`.
#[derive(Clone, Copy, Debug)]
pub struct ModelIds {
    pub enc_embed: Option<ParamId>,
    pub enc_gru: Option<GruIds>,
    pub dec_embed: ParamId,
    pub dec_gru: GruIds,
    pub img_w: Option<ParamId>,
    pub img_b: Option<ParamId>,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// One GRU update:
/// `z = σ(xW_z + hU_z + b_z)`, `r = σ(xW_r + hU_r + b_r)`,
/// `h̃ = tanh(xW_h + (r⊙h)U_h + b_h)`, `h' = (1−z)⊙h + z⊙h̃`.
pub fn gru_step<F: Scalar>(g: &mut Graph<F>, x: Var, h: Var, w: &GruVars) -> Result<Var> {
    let gate = |g: &mut Graph<F>, wx: Var, uh: Var, b: Var, h_in: Var| -> Result<Var> {
        let a = g.matmul(x, wx)?;
        let c = g.matmul(h_in, uh)?;
        let s = g.add(a, c)?;
        g.add_bias(s, b)
    };
    let z_pre = gate(g, w.w_z, w.u_z, w.b_z, h)?;
    let z = g.sigmoid(z_pre)?;
    let r_pre = gate(g, w.w_r, w.u_r, w.b_r, h)?;
    let r = g.sigmoid(r_pre)?;
    let rh = g.mul(r, h)?;
    let cand_pre = gate(g, w.w_h, w.u_h, w.b_h, rh)?;
    let cand = g.tanh(cand_pre)?;
    // (1−z)⊙h + z⊙h̃ == h + z⊙(h̃ − h)
    let diff = g.sub(cand, h)?;
    let step = g.mul(z, diff)?;
    g.add(h, step)
}

/// A model: configuration plus parameters.
#[derive(Clone, Debug)]
pub struct Model<F: Scalar = f32> {
    config: ModelConfig,
    params: ParamStore<F>,
    ids: ModelIds,
}

/// Result of a teacher-forced pass.
#[derive(Clone, Debug)]
pub struct TeacherForced<F: Scalar = f32> {
    /// Mean cross-entropy over predicted positions.
    pub loss: F,
    /// `[positions × vocab]` logits; row `t` predicts `target[t + 1]`.
    pub logits: Tensor<F>,
}

impl<F: Scalar> Model<F> {
    /// A model with all parameters zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut p = ParamStore::new();
        let (e, h, v) = (config.embed_dim, config.hidden_dim, config.vocab_size);
        let (enc_embed, enc_gru) = if config.variant.uses_text_encoder() {
            let emb = p.push("enc.embed", Tensor::zeros(&[v, e]));
            (Some(emb), Some(GruIds::register(&mut p, "enc.gru", e, h)))
        } else {
            (None, None)
        };
        let (img_w, img_b) = if config.variant.uses_image() {
            let out = config.image_out_dim();
            (
                Some(p.push("img.w", Tensor::zeros(&[config.image_dim, out]))),
                Some(p.push("img.b", Tensor::zeros(&[out]))),
            )
        } else {
            (None, None)
        };
        let dec_embed = p.push("dec.embed", Tensor::zeros(&[v, e]));
        let dec_gru = GruIds::register(&mut p, "dec.gru", e, h);
        let out_w = p.push("out.w", Tensor::zeros(&[h + config.source_dim(), v]));
        let out_b = p.push("out.b", Tensor::zeros(&[v]));
        Ok(Model {
            config,
            params: p,
            ids: ModelIds {
                enc_embed,
                enc_gru,
                dec_embed,
                dec_gru,
                img_w,
                img_b,
                out_w,
                out_b,
            },
        })
    }

    /// Uniform `[-scale, scale]` initialization from `seed`.
    pub fn init(config: ModelConfig, scale: f64, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        m.params.init_uniform(scale, seed);
        Ok(m)
    }

    /// Rebuild from a parameter store (e.g. a checkpoint), matching by name.
    pub fn from_params(config: ModelConfig, params: &ParamStore<F>) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        m.params.load_from(params)?;
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn ids(&self) -> &ModelIds {
        &self.ids
    }

    pub fn cast<G: Scalar>(&self) -> Model<G> {
        Model {
            config: self.config,
            params: self.params.cast(),
            ids: self.ids,
        }
    }

    fn image_tensor(&self, input: &ModelInput) -> Result<Tensor<F>> {
        let img = input.image.ok_or_else(|| {
            Error::Data(format!("missing image features for pair {}", input.pair_id))
        })?;
        if img.len() != self.config.image_dim {
            return Err(Error::dim("image features", &[self.config.image_dim], &[img.len()]));
        }
        Ok(Tensor::row(img.iter().map(|&x| F::from_f64(x as f64)).collect()))
    }

    /// `tanh(image·W_img + b_img)` inside `g`.
    fn project_image(&self, g: &mut Graph<F>, bound: &[Var], input: &ModelInput) -> Result<Var> {
        let (w, b) = match (self.ids.img_w, self.ids.img_b) {
            (Some(w), Some(b)) => (bound[w.index()], bound[b.index()]),
            _ => {
                return Err(Error::Config(format!(
                    "{} model has no image projection",
                    self.config.variant
                )))
            }
        };
        let img = g.leaf(self.image_tensor(input)?);
        let p = g.matmul(img, w)?;
        let p = g.add_bias(p, b)?;
        g.tanh(p)
    }

    fn run_encoder(&self, g: &mut Graph<F>, bound: &[Var], premise: &[usize], h0: Var) -> Result<Var> {
        if premise.is_empty() {
            return Err(Error::Contract("premise sequence is empty".into()));
        }
        let (emb, gru) = match (self.ids.enc_embed, self.ids.enc_gru) {
            (Some(e), Some(gr)) => (bound[e.index()], gr.vars(bound)),
            _ => {
                return Err(Error::Config(format!(
                    "{} model has no text encoder",
                    self.config.variant
                )))
            }
        };
        let mut h = h0;
        for &tok in premise {
            let x = g.gather(emb, &[tok])?;
            h = gru_step(g, x, h, &gru)?;
        }
        Ok(h)
    }

    fn zero_state(&self, g: &mut Graph<F>) -> Var {
        g.leaf(Tensor::zeros(&[1, self.config.hidden_dim]))
    }

    /// Build the source representation inside `g` (differentiable).
    pub fn encode_in(&self, g: &mut Graph<F>, bound: &[Var], input: &ModelInput) -> Result<(Var, Provenance)> {
        match self.config.variant {
            Variant::Unimodal => {
                let h0 = self.zero_state(g);
                Ok((self.run_encoder(g, bound, input.premise, h0)?, Provenance::TextFinalState))
            }
            Variant::InitInject => {
                let h0 = self.project_image(g, bound, input)?;
                Ok((
                    self.run_encoder(g, bound, input.premise, h0)?,
                    Provenance::ImageInitFinalState,
                ))
            }
            Variant::Merge => {
                let h0 = self.zero_state(g);
                let text = self.run_encoder(g, bound, input.premise, h0)?;
                let img = self.project_image(g, bound, input)?;
                Ok((g.concat(&[text, img])?, Provenance::MergeConcat))
            }
            Variant::ImageOnly => Ok((self.project_image(g, bound, input)?, Provenance::ImageOnly)),
        }
    }

    /// Teacher-forced decoding inside `g`. Returns the mean cross-entropy
    /// variable, the logits variable, and the number of scored positions.
    pub fn decode_in(&self, g: &mut Graph<F>, bound: &[Var], src: Var, target: &[usize]) -> Result<(Var, Var, usize)> {
        check_target(target)?;
        let src_dim = g.value(src).cols();
        if src_dim != self.config.source_dim() || g.value(src).rows() != 1 {
            return Err(Error::Config(format!(
                "source representation has width {src_dim}, output layer expects {}",
                self.config.source_dim()
            )));
        }
        let emb = bound[self.ids.dec_embed.index()];
        let gru = self.ids.dec_gru.vars(bound);
        let mut h = self.zero_state(g);
        let mut states = Vec::with_capacity(target.len() - 1);
        let mut gold = Vec::with_capacity(target.len() - 1);
        let mut keep = Vec::with_capacity(target.len() - 1);
        for t in 0..target.len() - 1 {
            let x = g.gather(emb, &[target[t]])?;
            h = gru_step(g, x, h, &gru)?;
            states.push(h);
            if target[t + 1] != PAD {
                keep.push(t);
                gold.push(target[t + 1]);
            }
        }
        let kept: Vec<Var> = keep.iter().map(|&t| states[t]).collect();
        let hs = g.stack_rows(&kept)?;
        let srcs = g.tile_rows(src, kept.len())?;
        let feats = g.concat(&[hs, srcs])?;
        let logits = g.matmul(feats, bound[self.ids.out_w.index()])?;
        let logits = g.add_bias(logits, bound[self.ids.out_b.index()])?;
        let loss = g.cross_entropy(logits, &gold)?;
        Ok((loss, logits, gold.len()))
    }

    /// Full forward pass for one example; returns the loss variable (mean
    /// over scored positions) and the position count.
    pub fn loss_in(&self, g: &mut Graph<F>, bound: &[Var], input: &ModelInput, target: &[usize]) -> Result<(Var, usize)> {
        let (src, _) = self.encode_in(g, bound, input)?;
        let (loss, _, n) = self.decode_in(g, bound, src, target)?;
        Ok((loss, n))
    }

    /// Sum of token negative log-likelihoods and gradients of that sum with
    /// respect to every parameter (store order).
    pub fn nll_and_grads(&self, input: &ModelInput, target: &[usize]) -> Result<(f64, usize, Vec<Tensor<F>>)> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let (loss, n) = self.loss_in(&mut g, &bound, input, target)?;
        let total = g.scale(loss, F::from_f64(n as f64))?;
        let nll = g.value(total).item().as_f64();
        let mut grads = g.backward(total)?;
        let gs = bound.iter().map(|&v| grads.take(v)).collect();
        Ok((nll, n, gs))
    }

    fn eager_source(&self, input: &ModelInput) -> Result<SourceRepresentation<F>> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let (src, provenance) = self.encode_in(&mut g, &bound, input)?;
        Ok(SourceRepresentation {
            vector: g.value(src).clone(),
            provenance,
        })
    }

    fn require(&self, v: Variant) -> Result<()> {
        if self.config.variant == v {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "model is {}, operation needs {v}",
                self.config.variant
            )))
        }
    }

    pub fn encode_unimodal(&self, premise: &[usize]) -> Result<SourceRepresentation<F>> {
        self.require(Variant::Unimodal)?;
        self.eager_source(&ModelInput {
            pair_id: "",
            premise,
            image: None,
        })
    }

    pub fn encode_init_inject(&self, input: &ModelInput) -> Result<SourceRepresentation<F>> {
        self.require(Variant::InitInject)?;
        self.eager_source(input)
    }

    pub fn encode_merge(&self, input: &ModelInput) -> Result<SourceRepresentation<F>> {
        self.require(Variant::Merge)?;
        self.eager_source(input)
    }

    pub fn encode_image_only(&self, input: &ModelInput) -> Result<SourceRepresentation<F>> {
        self.require(Variant::ImageOnly)?;
        self.eager_source(input)
    }

    /// Source representation for whichever variant this model is.
    pub fn encode(&self, input: &ModelInput) -> Result<SourceRepresentation<F>> {
        self.eager_source(input)
    }

    pub fn decode_teacher_forced(&self, src: &SourceRepresentation<F>, target: &[usize]) -> Result<TeacherForced<F>> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let s = g.leaf(src.vector.clone());
        let (loss, logits, _) = self.decode_in(&mut g, &bound, s, target)?;
        Ok(TeacherForced {
            loss: g.value(loss).item(),
            logits: g.value(logits).clone(),
        })
    }

    /// Log-probability (f64) of each target token after BOS, in order.
    pub fn target_log_probs(&self, input: &ModelInput, target: &[usize]) -> Result<Vec<f64>> {
        let src = self.encode(input)?;
        let tf = self.decode_teacher_forced(&src, target)?;
        let gold: Vec<usize> = target[1..].iter().copied().filter(|&t| t != PAD).collect();
        Ok(gold
            .iter()
            .enumerate()
            .map(|(r, &t)| {
                let row: Vec<f64> = tf.logits.row_slice(r).iter().map(|x| x.as_f64()).collect();
                row[t] - log_sum_exp_f64(&row)
            })
            .collect())
    }

    /// Zero decoder state as a `1×hidden` row.
    pub fn decoder_initial_state(&self) -> Tensor<F> {
        Tensor::zeros(&[1, self.config.hidden_dim])
    }

    /// Feed `token` to the decoder from `state`; returns the next state and
    /// the log-distribution (f64) over the next token.
    pub fn decoder_step(&self, state: &Tensor<F>, token: usize, src: &SourceRepresentation<F>) -> Result<(Tensor<F>, Vec<f64>)> {
        if src.dim() != self.config.source_dim() {
            return Err(Error::Config(format!(
                "source representation has width {}, output layer expects {}",
                src.dim(),
                self.config.source_dim()
            )));
        }
        let mut g = Graph::new();
        let p = &self.params;
        let emb = g.leaf_shared(p.shared(self.ids.dec_embed));
        let ids = self.ids.dec_gru;
        let mut leaf = |id: ParamId| g.leaf_shared(p.shared(id));
        let gru = GruVars {
            w_z: leaf(ids.w_z),
            u_z: leaf(ids.u_z),
            b_z: leaf(ids.b_z),
            w_r: leaf(ids.w_r),
            u_r: leaf(ids.u_r),
            b_r: leaf(ids.b_r),
            w_h: leaf(ids.w_h),
            u_h: leaf(ids.u_h),
            b_h: leaf(ids.b_h),
        };
        let out_w = leaf(self.ids.out_w);
        let out_b = leaf(self.ids.out_b);
        let h = g.leaf(state.clone());
        let s = g.leaf(src.vector.clone());
        let x = g.gather(emb, &[token])?;
        let h2 = gru_step(&mut g, x, h, &gru)?;
        let feats = g.concat(&[h2, s])?;
        let logits = g.matmul(feats, out_w)?;
        let logits = g.add_bias(logits, out_b)?;
        let row: Vec<f64> = g.value(logits).data().iter().map(|x| x.as_f64()).collect();
        let lse = log_sum_exp_f64(&row);
        Ok((g.value(h2).clone(), row.iter().map(|x| x - lse).collect()))
    }

    /// Share parameters with another thread cheaply.
    pub fn shared(self) -> Arc<Self> {
        Arc::new(self)
    }
}

fn check_target(target: &[usize]) -> Result<()> {
    if target.len() < 2 || target[0] != BOS || *target.last().unwrap() != EOS {
        return Err(Error::Contract(
            "decoder target must start with BOS, end with EOS and have length ≥ 2".into(),
        ));
    }
    Ok(())
}

pub(crate) fn log_sum_exp_f64(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
