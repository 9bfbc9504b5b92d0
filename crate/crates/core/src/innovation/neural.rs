//! Toy-scale adversarial innovation autoencoder.
//!
//! Encoder and decoder are causal 1-D convolution stacks; a feed-forward
//! critic compares length-B blocks of the latent against IID-uniform blocks
//! (Wasserstein estimate with weight clipping). Gradients are derived by hand.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovation::model::{InnovationMode, InnovationSequence};
use crate::nst::ks_uniform;
use crate::rng::{rng_from, stream_seed, Rng};
use crate::waveform::WaveformSeries;

pub const NEURAL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub in_ch: usize,
    pub out_ch: usize,
    pub width: usize,
    pub activation: Activation,
}

impl ConvShape {
    fn weights(&self) -> usize {
        self.in_ch * self.out_ch * self.width
    }

    fn params(&self) -> usize {
        self.weights() + self.out_ch
    }
}

/// Stack of causal convolutions over a single-channel sequence. Parameters
/// are stored flat, layer by layer: weights `[out][in][tap]` then biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalConvNet {
    pub layers: Vec<ConvShape>,
    pub params: Vec<f64>,
}

/// Layer outputs of one forward pass, each `channels x T` row-major.
pub struct ConvCache {
    len: usize,
    acts: Vec<Vec<f64>>,
}

impl ConvCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least the input")
    }
}

impl CausalConvNet {
    pub fn new(layers: Vec<ConvShape>, rng: &mut Rng) -> Self {
        let mut params = Vec::with_capacity(layers.iter().map(ConvShape::params).sum());
        for l in &layers {
            let bound = (6.0 / ((l.in_ch + l.out_ch) * l.width) as f64).sqrt();
            params.extend((0..l.weights()).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, l.out_ch));
        }
        Self { layers, params }
    }

    /// `L` layers of width `w`: 1 -> h -> ... -> h -> 1.
    pub fn stack(depth: usize, width: usize, hidden: usize, out: Activation, rng: &mut Rng) -> Self {
        let layers = (0..depth)
            .map(|i| ConvShape {
                in_ch: if i == 0 { 1 } else { hidden },
                out_ch: if i + 1 == depth { 1 } else { hidden },
                width,
                activation: if i + 1 == depth { out } else { Activation::Tanh },
            })
            .collect();
        Self::new(layers, rng)
    }

    /// Number of input samples each output depends on.
    pub fn receptive_field(&self) -> usize {
        1 + self.layers.iter().map(|l| l.width - 1).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let expect: usize = self.layers.iter().map(ConvShape::params).sum();
        if self.layers.is_empty() || expect != self.params.len() {
            return Err(Error::Config(format!(
                "network declares {expect} parameters, holds {}",
                self.params.len()
            )));
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_ch != pair[1].in_ch {
                return Err(Error::Config("layer channel counts do not chain".into()));
            }
        }
        if self.layers[0].in_ch != 1 || self.layers.last().unwrap().out_ch != 1 {
            return Err(Error::Config("network must map one channel to one channel".into()));
        }
        if self.layers.iter().any(|l| l.width == 0) {
            return Err(Error::Config("zero kernel width".into()));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> ConvCache {
        let t_len = x.len();
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        for l in &self.layers {
            let (w, rest) = self.params[off..off + l.params()].split_at(l.weights());
            let input = acts.last().unwrap();
            let mut out = vec![0.0; l.out_ch * t_len];
            for o in 0..l.out_ch {
                let row = &mut out[o * t_len..(o + 1) * t_len];
                row.fill(rest[o]);
                for i in 0..l.in_ch {
                    let a = &input[i * t_len..(i + 1) * t_len];
                    for j in 0..l.width {
                        let wv = w[(o * l.in_ch + i) * l.width + j];
                        for t in j..t_len {
                            row[t] += wv * a[t - j];
                        }
                    }
                }
                for v in row.iter_mut() {
                    *v = l.activation.apply(*v);
                }
            }
            off += l.params();
            acts.push(out);
        }
        ConvCache { len: t_len, acts }
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(&self, cache: &ConvCache, grad_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let t_len = cache.len;
        let mut g = grad_out.to_vec();
        let mut off = self.params.len();
        for (li, l) in self.layers.iter().enumerate().rev() {
            off -= l.params();
            let out = &cache.acts[li + 1];
            let input = &cache.acts[li];
            for (gv, y) in g.iter_mut().zip(out) {
                *gv *= l.activation.derivative(*y);
            }
            let mut g_in = vec![0.0; l.in_ch * t_len];
            for o in 0..l.out_ch {
                let go = &g[o * t_len..(o + 1) * t_len];
                grad[off + l.weights() + o] += go.iter().sum::<f64>();
                for i in 0..l.in_ch {
                    let a = &input[i * t_len..(i + 1) * t_len];
                    let gi = &mut g_in[i * t_len..(i + 1) * t_len];
                    for j in 0..l.width {
                        let widx = off + (o * l.in_ch + i) * l.width + j;
                        let wv = self.params[widx];
                        let mut acc = 0.0;
                        for t in j..t_len {
                            acc += go[t] * a[t - j];
                            gi[t - j] += wv * go[t];
                        }
                        grad[widx] += acc;
                    }
                }
            }
            g = g_in;
        }
        g
    }
}

/// Fully connected critic; flat parameters per layer: weights `[out][in]`, biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn new(sizes: Vec<usize>, bound: f64, rng: &mut Rng) -> Self {
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            params.extend((0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Self { sizes, params }
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 2 == self.sizes.len() {
            Activation::Identity
        } else {
            Activation::Tanh
        }
    }

    fn forward(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![u.to_vec()];
        let mut off = 0;
        for (li, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let input = acts.last().unwrap();
            let out = (0..n_out)
                .map(|o| {
                    let row = &self.params[off + o * n_in..off + (o + 1) * n_in];
                    let z = self.params[off + n_in * n_out + o]
                        + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    self.activation(li).apply(z)
                })
                .collect();
            off += n_in * n_out + n_out;
            acts.push(out);
        }
        acts
    }

    pub fn score(&self, u: &[f64]) -> f64 {
        self.forward(u).last().unwrap()[0]
    }

    /// Adds `scale * d score / d params` into `grad`; returns `scale * d score / d u`.
    fn backward(&self, acts: &[Vec<f64>], scale: f64, grad: &mut [f64]) -> Vec<f64> {
        let mut g = vec![scale];
        let mut off = self.params.len();
        for li in (0..self.sizes.len() - 1).rev() {
            let (n_in, n_out) = (self.sizes[li], self.sizes[li + 1]);
            off -= n_in * n_out + n_out;
            let act = self.activation(li);
            for (gv, y) in g.iter_mut().zip(&acts[li + 1]) {
                *gv *= act.derivative(*y);
            }
            let mut g_in = vec![0.0; n_in];
            for o in 0..n_out {
                grad[off + n_in * n_out + o] += g[o];
                for i in 0..n_in {
                    grad[off + o * n_in + i] += g[o] * acts[li][i];
                    g_in[i] += self.params[off + o * n_in + i] * g[o];
                }
            }
            g = g_in;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralHyper {
    #[serde(rename = "L")]
    pub layers: usize,
    /// Kernel width w.
    pub width: usize,
    /// Hidden channels h.
    pub hidden: usize,
    /// Critic block length B.
    pub block: usize,
    pub lambda_scale: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub critic_steps: usize,
    pub clip: f64,
    pub segment_len: usize,
    pub segments_per_epoch: usize,
}

impl Default for NeuralHyper {
    fn default() -> Self {
        Self {
            layers: 3,
            width: 4,
            hidden: 8,
            block: 32,
            lambda_scale: 1.0,
            lr: 1e-3,
            epochs: 200,
            seed: 0,
            critic_steps: 5,
            clip: 0.01,
            segment_len: 256,
            segments_per_epoch: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub critic: f64,
    pub generator: f64,
    pub reconstruction: f64,
    pub best_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralInnovationModel {
    pub version: u32,
    pub input_mean: f64,
    pub input_scale: f64,
    pub encoder: CausalConvNet,
    pub decoder: CausalConvNet,
    pub critic: Mlp,
    pub block: usize,
    pub lambda_scale: f64,
    #[serde(default)]
    pub loss_trace: Vec<EpochLoss>,
}

/// Loss terms and gradients for one segment.
pub struct SegmentLoss {
    pub critic_score: f64,
    pub reconstruction: f64,
    pub total: f64,
    pub grad_encoder: Vec<f64>,
    pub grad_decoder: Vec<f64>,
}

impl NeuralInnovationModel {
    pub fn init(train: &[f64], hyper: &NeuralHyper) -> Result<Self> {
        if hyper.layers == 0 || hyper.width == 0 || hyper.hidden == 0 || hyper.block == 0 {
            return Err(Error::Config(format!("invalid network hyper-parameters {hyper:?}")));
        }
        let n = train.len() as f64;
        let mean = train.iter().sum::<f64>() / n;
        let var = train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::Degenerate("training series has zero variance".into()));
        }
        let mut rng = rng_from(stream_seed(hyper.seed, "neural-init"));
        let encoder = CausalConvNet::stack(hyper.layers, hyper.width, hyper.hidden, Activation::Sigmoid, &mut rng);
        let decoder = CausalConvNet::stack(hyper.layers, hyper.width, hyper.hidden, Activation::Identity, &mut rng);
        let critic = Mlp::new(vec![hyper.block, hyper.hidden, 1], hyper.clip, &mut rng);
        Ok(Self {
            version: NEURAL_VERSION,
            input_mean: mean,
            input_scale: var.sqrt(),
            encoder,
            decoder,
            critic,
            block: hyper.block,
            lambda_scale: hyper.lambda_scale,
            loss_trace: Vec::new(),
        })
    }

    /// Samples before the first latent value with a full receptive field.
    pub fn encoder_context(&self) -> usize {
        self.encoder.receptive_field() - 1
    }

    pub fn decoder_context(&self) -> usize {
        self.decoder.receptive_field() - 1
    }

    fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| (v - self.input_mean) / self.input_scale).collect()
    }

    /// Generator loss `mean critic(V-block) + lambda * reconstruction MSE` on
    /// one segment, with gradients for encoder and decoder.
    pub fn segment_loss(&self, x: &[f64]) -> SegmentLoss {
        let xn = self.normalize(x);
        let t_len = xn.len();
        let enc = self.encoder.forward(&xn);
        let v = enc.output();
        let dec = self.decoder.forward(v);
        let xhat = dec.output();

        let mut grad_v = vec![0.0; t_len];
        let start = self.encoder_context();
        let n_blocks = t_len.saturating_sub(start) / self.block;
        let mut critic_score = 0.0;
        let mut scratch = vec![0.0; self.critic.params.len()];
        for b in 0..n_blocks {
            let lo = start + b * self.block;
            let acts = self.critic.forward(&v[lo..lo + self.block]);
            critic_score += acts.last().unwrap()[0] / n_blocks as f64;
            let g = self.critic.backward(&acts, 1.0 / n_blocks as f64, &mut scratch);
            for (k, gk) in g.iter().enumerate() {
                grad_v[lo + k] += gk;
            }
        }

        let r0 = start + self.decoder_context();
        let count = t_len.saturating_sub(r0).max(1) as f64;
        let mut recon = 0.0;
        let mut grad_xhat = vec![0.0; t_len];
        for t in r0..t_len {
            let d = xhat[t] - xn[t];
            recon += d * d / count;
            grad_xhat[t] = self.lambda_scale * 2.0 * d / count;
        }

        let mut grad_decoder = vec![0.0; self.decoder.params.len()];
        let gv_dec = self.decoder.backward(&dec, &grad_xhat, &mut grad_decoder);
        for (a, b) in grad_v.iter_mut().zip(gv_dec) {
            *a += b;
        }
        let mut grad_encoder = vec![0.0; self.encoder.params.len()];
        self.encoder.backward(&enc, &grad_v, &mut grad_encoder);
        SegmentLoss {
            critic_score,
            reconstruction: recon,
            total: critic_score + self.lambda_scale * recon,
            grad_encoder,
            grad_decoder,
        }
    }

    /// Critic objective `mean D(U) - mean D(V)` (minimized) and its gradient.
    pub fn critic_loss(&self, x: &[f64], reference: &[f64]) -> (f64, Vec<f64>) {
        let xn = self.normalize(x);
        let enc = self.encoder.forward(&xn);
        let v = enc.output();
        let start = self.encoder_context();
        let n_blocks = (v.len().saturating_sub(start) / self.block)
            .min(reference.len() / self.block)
            .max(1);
        let mut grad = vec![0.0; self.critic.params.len()];
        let mut loss = 0.0;
        for b in 0..n_blocks {
            let lo = start + b * self.block;
            if lo + self.block > v.len() {
                break;
            }
            let acts = self.critic.forward(&v[lo..lo + self.block]);
            loss -= acts.last().unwrap()[0] / n_blocks as f64;
            self.critic.backward(&acts, -1.0 / n_blocks as f64, &mut grad);
            let r = &reference[b * self.block..(b + 1) * self.block];
            let acts = self.critic.forward(r);
            loss += acts.last().unwrap()[0] / n_blocks as f64;
            self.critic.backward(&acts, 1.0 / n_blocks as f64, &mut grad);
        }
        (loss, grad)
    }

    /// Reconstruction MSE (normalized units) over the whole series.
    pub fn reconstruction_mse(&self, x: &[f64]) -> f64 {
        let xn = self.normalize(x);
        let v = self.encoder.forward(&xn);
        let xhat = self.decoder.forward(v.output());
        let r0 = self.encoder_context() + self.decoder_context();
        let n = xn.len().saturating_sub(r0).max(1) as f64;
        (r0..xn.len()).map(|t| (xhat.output()[t] - xn[t]).powi(2)).sum::<f64>() / n
    }

    pub fn latent_ks(&self, x: &[f64]) -> f64 {
        let xn = self.normalize(x);
        let v = self.encoder.forward(&xn);
        ks_uniform(&v.output()[self.encoder_context()..])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.encoder.validate()?;
        m.decoder.validate()?;
        Ok(m)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Alternating critic / autoencoder optimization on random training segments.
pub fn train_autoencoder(train: &WaveformSeries, hyper: &NeuralHyper) -> Result<NeuralInnovationModel> {
    let x = train.samples();
    if x.len() < 10 * hyper.block {
        return Err(Error::Argument(format!(
            "{} samples is fewer than 10 blocks of {}",
            x.len(),
            hyper.block
        )));
    }
    let mut model = NeuralInnovationModel::init(x, hyper)?;
    let seg = hyper.segment_len.min(x.len()).max(model.encoder_context() + hyper.block);
    if seg > x.len() {
        return Err(Error::Argument("series shorter than one training segment".into()));
    }
    let mut rng = rng_from(stream_seed(hyper.seed, "neural-train"));
    let mut opt_enc = Adam::new(model.encoder.params.len(), hyper.lr);
    let mut opt_dec = Adam::new(model.decoder.params.len(), hyper.lr);
    let mut opt_critic = Adam::new(model.critic.params.len(), hyper.lr);
    let mut best = f64::INFINITY;
    let mut iteration = 0usize;
    for _epoch in 0..hyper.epochs {
        let (mut c_sum, mut g_sum, mut r_sum) = (0.0, 0.0, 0.0);
        for _ in 0..hyper.segments_per_epoch {
            for _ in 0..hyper.critic_steps {
                let s = rng.random_range(0..=x.len() - seg);
                let reference: Vec<f64> = (0..seg).map(|_| rng.random::<f64>()).collect();
                let (loss, grad) = model.critic_loss(&x[s..s + seg], &reference);
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged {
                        iteration,
                        message: "critic loss is not finite".into(),
                    });
                }
                opt_critic.step(&mut model.critic.params, &grad);
                for p in &mut model.critic.params {
                    *p = p.clamp(-hyper.clip, hyper.clip);
                }
                c_sum += loss;
            }
            let s = rng.random_range(0..=x.len() - seg);
            let out = model.segment_loss(&x[s..s + seg]);
            if !out.total.is_finite() {
                return Err(Error::TrainingDiverged {
                    iteration,
                    message: "generator loss is not finite".into(),
                });
            }
            opt_enc.step(&mut model.encoder.params, &out.grad_encoder);
            opt_dec.step(&mut model.decoder.params, &out.grad_decoder);
            g_sum += out.total;
            r_sum += out.reconstruction;
            iteration += 1;
        }
        let k = hyper.segments_per_epoch.max(1) as f64;
        best = best.min(g_sum / k);
        model.loss_trace.push(EpochLoss {
            critic: c_sum / (k * hyper.critic_steps.max(1) as f64),
            generator: g_sum / k,
            reconstruction: r_sum / k,
            best_total: best,
        });
    }
    Ok(model)
}

pub fn neural_encode(model: &NeuralInnovationModel, x: &WaveformSeries) -> Result<InnovationSequence> {
    let ctx = model.encoder_context();
    if x.len() <= ctx {
        return Err(Error::Argument(format!(
            "series of {} samples within the encoder context {ctx}",
            x.len()
        )));
    }
    let v = model.encoder.forward(&model.normalize(x.samples()));
    Ok(InnovationSequence {
        values: v.output()[ctx..].to_vec(),
        mode: InnovationMode::Uniform,
        warmup: ctx,
        sample_rate: x.sample_rate(),
    })
}

/// Decodes `v`, with `context` holding the innovations just before it.
pub fn neural_decode(
    model: &NeuralInnovationModel,
    v: &InnovationSequence,
    context: &[f64],
) -> Result<WaveformSeries> {
    let need = model.decoder_context();
    if context.len() < need {
        return Err(Error::Argument(format!(
            "decoder needs {need} context innovations, got {}",
            context.len()
        )));
    }
    let mut input = context[context.len() - need..].to_vec();
    input.extend_from_slice(&v.values);
    let out = model.decoder.forward(&input);
    let x: Vec<f64> = out.output()[need..]
        .iter()
        .map(|z| model.input_mean + model.input_scale * z)
        .collect();
    WaveformSeries::new(x, v.sample_rate, 0.0)
}
