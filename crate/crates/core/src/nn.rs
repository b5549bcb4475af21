//! Minimal dense feed-forward network used as the Q-function approximator:
//! ReLU hidden layers, optional inverted dropout, mean-squared-error loss on
//! the taken action's value, analytic backpropagation and plain SGD with
//! per-component gradient clipping. No external ML framework.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 4] = b"DRQN";
const CHECKPOINT_VERSION: u32 = 1;

/// Gradient components are clipped to this symmetric bound before the update;
/// large violation penalties otherwise blow up plain SGD.
pub const GRAD_CLIP: f64 = 1.0;

/// Network shape. The default stack is five ReLU hidden layers
/// (512, 512, 512, 512, 256) with 0.5-rate dropout after layers 1 and 3.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_size: usize,
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    /// Zero-based hidden-layer indices that are followed by a dropout layer.
    pub dropout_after: Vec<usize>,
    pub output_size: usize,
}

impl NetworkConfig {
    /// The full-size architecture with the default hidden stack.
    pub fn standard(input_size: usize, output_size: usize) -> Self {
        NetworkConfig {
            input_size,
            hidden: vec![512, 512, 512, 512, 256],
            dropout_rate: 0.5,
            dropout_after: vec![1, 3],
            output_size,
        }
    }

    /// A custom stack without dropout, handy for small experiments.
    pub fn plain(input_size: usize, hidden: Vec<usize>, output_size: usize) -> Self {
        NetworkConfig {
            input_size,
            hidden,
            dropout_rate: 0.0,
            dropout_after: Vec::new(),
            output_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.output_size == 0 {
            return Err(Error::Config(
                "input and output sizes must be >= 1".into(),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if let Some(&bad) = self.dropout_after.iter().find(|&&i| i >= self.hidden.len()) {
            return Err(Error::Config(format!(
                "dropout_after index {bad} exceeds hidden layer count {}",
                self.hidden.len()
            )));
        }
        Ok(())
    }

    /// Layer dimensions chained input -> hidden* -> output, as (out, in) pairs.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_size;
        for &h in &self.hidden {
            dims.push((h, prev));
            prev = h;
        }
        dims.push((self.output_size, prev));
        dims
    }

    fn has_dropout_after(&self, hidden_index: usize) -> bool {
        self.dropout_rate > 0.0 && self.dropout_after.contains(&hidden_index)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    out_dim: usize,
    in_dim: usize,
    /// Row-major `out_dim x in_dim`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn zeroed(out_dim: usize, in_dim: usize) -> Self {
        Layer {
            out_dim,
            in_dim,
            weights: vec![0.0; out_dim * in_dim],
            biases: vec![0.0; out_dim],
        }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for row in 0..self.out_dim {
            let w = &self.weights[row * self.in_dim..(row + 1) * self.in_dim];
            let mut acc = self.biases[row];
            for (wi, xi) in w.iter().zip(input) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// One training sample: regress the taken action's Q-value toward `target`.
#[derive(Debug, Clone, Copy)]
pub struct TrainSample<'a> {
    pub input: &'a [f64],
    pub action: usize,
    pub target: f64,
}

/// The network weights (and the shape they belong to). Cloning yields a deep,
/// independent copy; that is the target-network synchronization primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    config: NetworkConfig,
    layers: Vec<Layer>,
}

enum ForwardMode<'r> {
    Eval,
    Train(&'r mut ChaCha8Rng),
}

struct ForwardTrace {
    /// Post-activation (and post-dropout) output of each hidden layer.
    hidden_outputs: Vec<Vec<f64>>,
    /// Whether each hidden unit's pre-activation was positive.
    relu_active: Vec<Vec<bool>>,
    /// Per-unit dropout factor (0 or 1/keep) for layers with dropout, else None.
    dropout_scale: Vec<Option<Vec<f64>>>,
    output: Vec<f64>,
}

impl NetworkParams {
    /// Initializes weights uniformly in `[-sqrt(6/fan_in), +sqrt(6/fan_in)]`
    /// per layer and biases to zero, deterministically for a given seed.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = config
            .layer_dims()
            .into_iter()
            .map(|(out_dim, in_dim)| {
                let bound = (6.0 / in_dim as f64).sqrt();
                Layer {
                    out_dim,
                    in_dim,
                    weights: (0..out_dim * in_dim)
                        .map(|_| rng.random_range(-bound..bound))
                        .collect(),
                    biases: vec![0.0; out_dim],
                }
            })
            .collect();
        Ok(NetworkParams { config, layers })
    }

    /// All-zero weights and biases; every forward pass returns zeros.
    pub fn zeroed(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_dims()
            .into_iter()
            .map(|(out, inp)| Layer::zeroed(out, inp))
            .collect();
        Ok(NetworkParams { config, layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.config.input_size {
            return Err(Error::Shape(format!(
                "input length {} does not match input_size {}",
                input.len(),
                self.config.input_size
            )));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite network input".into()));
        }
        Ok(())
    }

    fn forward_trace(&self, input: &[f64], mut mode: ForwardMode<'_>) -> ForwardTrace {
        let n_hidden = self.config.hidden.len();
        let mut hidden_outputs = Vec::with_capacity(n_hidden);
        let mut relu_active = Vec::with_capacity(n_hidden);
        let mut dropout_scale = Vec::with_capacity(n_hidden);
        let mut current: Vec<f64> = input.to_vec();
        let mut buf = Vec::new();

        for l in 0..n_hidden {
            self.layers[l].apply(&current, &mut buf);
            let active: Vec<bool> = buf.iter().map(|&z| z > 0.0).collect();
            let mut act: Vec<f64> = buf.iter().map(|&z| z.max(0.0)).collect();
            let scale = match (&mut mode, self.config.has_dropout_after(l)) {
                (ForwardMode::Train(rng), true) => {
                    let keep = 1.0 - self.config.dropout_rate;
                    let scale: Vec<f64> = act
                        .iter()
                        .map(|_| {
                            if rng.random::<f64>() < self.config.dropout_rate {
                                0.0
                            } else {
                                1.0 / keep
                            }
                        })
                        .collect();
                    for (a, s) in act.iter_mut().zip(&scale) {
                        *a *= s;
                    }
                    Some(scale)
                }
                _ => None,
            };
            relu_active.push(active);
            dropout_scale.push(scale);
            hidden_outputs.push(act.clone());
            current = act;
        }
        self.layers[n_hidden].apply(&current, &mut buf);
        ForwardTrace {
            hidden_outputs,
            relu_active,
            dropout_scale,
            output: buf,
        }
    }

    /// Deterministic forward pass without dropout.
    pub fn forward_eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.forward_trace(input, ForwardMode::Eval).output)
    }

    /// Forward pass with fresh inverted-dropout masks drawn from `rng`.
    pub fn forward_train(&self, input: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.forward_trace(input, ForwardMode::Train(rng)).output)
    }

    /// Backpropagates one sample's trace into the gradient accumulators and
    /// returns the sample's squared error on the taken action.
    fn accumulate_sample(
        &self,
        input: &[f64],
        trace: &ForwardTrace,
        action: usize,
        target: f64,
        grads: &mut [Layer],
    ) -> f64 {
        let pred = trace.output[action];
        let err = pred - target;

        // delta holds dLoss/dz of the layer currently being processed
        let mut delta = vec![0.0; self.config.output_size];
        delta[action] = 2.0 * err;

        for l in (0..self.layers.len()).rev() {
            let layer_input: &[f64] = if l == 0 {
                input
            } else {
                &trace.hidden_outputs[l - 1]
            };
            let g = &mut grads[l];
            for (row, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[row] += d;
                let w = &mut g.weights[row * g.in_dim..(row + 1) * g.in_dim];
                for (wi, xi) in w.iter_mut().zip(layer_input) {
                    *wi += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            let layer = &self.layers[l];
            let mut prev = vec![0.0; layer.in_dim];
            for (row, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let w = &layer.weights[row * layer.in_dim..(row + 1) * layer.in_dim];
                for (p, wi) in prev.iter_mut().zip(w) {
                    *p += wi * d;
                }
            }
            let h = l - 1;
            for (j, p) in prev.iter_mut().enumerate() {
                if let Some(scale) = &trace.dropout_scale[h] {
                    *p *= scale[j];
                }
                if !trace.relu_active[h][j] {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        err * err
    }

    fn gradients_internal(
        &self,
        batch: &[TrainSample<'_>],
        mut mode: ForwardMode<'_>,
    ) -> Result<(Vec<Layer>, f64)> {
        if batch.is_empty() {
            return Err(Error::Argument("empty training batch".into()));
        }
        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer::zeroed(l.out_dim, l.in_dim))
            .collect();
        let mut loss = 0.0;
        for sample in batch {
            self.check_input(sample.input)?;
            if sample.action >= self.config.output_size {
                return Err(Error::Range(format!(
                    "sample action {} out of range (output size {})",
                    sample.action, self.config.output_size
                )));
            }
            let trace = match &mut mode {
                ForwardMode::Eval => self.forward_trace(sample.input, ForwardMode::Eval),
                ForwardMode::Train(rng) => {
                    self.forward_trace(sample.input, ForwardMode::Train(rng))
                }
            };
            loss += self.accumulate_sample(sample.input, &trace, sample.action, sample.target, &mut grads);
        }
        let inv = 1.0 / batch.len() as f64;
        for g in &mut grads {
            for w in &mut g.weights {
                *w *= inv;
            }
            for b in &mut g.biases {
                *b *= inv;
            }
        }
        Ok((grads, loss * inv))
    }

    /// Batch-averaged analytic gradients (dropout disabled) flattened in
    /// parameter order, plus the batch loss. Matches [`Self::params_flat`]
    /// ordering; exposed so gradients can be checked against finite differences.
    pub fn gradients_flat(&self, batch: &[TrainSample<'_>]) -> Result<(Vec<f64>, f64)> {
        let (grads, loss) = self.gradients_internal(batch, ForwardMode::Eval)?;
        let mut flat = Vec::new();
        for g in &grads {
            flat.extend_from_slice(&g.weights);
            flat.extend_from_slice(&g.biases);
        }
        Ok((flat, loss))
    }

    /// One plain-SGD step on the batch with dropout masks shared between the
    /// forward and backward passes. Each averaged gradient component is clipped
    /// to `[-GRAD_CLIP, GRAD_CLIP]`. Returns the pre-update batch loss.
    pub fn sgd_step(
        &mut self,
        batch: &[TrainSample<'_>],
        learning_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        if !learning_rate.is_finite() || learning_rate < 0.0 {
            return Err(Error::Argument(format!(
                "learning rate must be a finite value >= 0, got {learning_rate}"
            )));
        }
        let (grads, loss) = self.gradients_internal(batch, ForwardMode::Train(rng))?;
        for (layer, g) in self.layers.iter_mut().zip(&grads) {
            for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= learning_rate * gw.clamp(-GRAD_CLIP, GRAD_CLIP);
            }
            for (b, gb) in layer.biases.iter_mut().zip(&g.biases) {
                *b -= learning_rate * gb.clamp(-GRAD_CLIP, GRAD_CLIP);
            }
        }
        if !self.all_finite() {
            return Err(Error::Numeric(
                "non-finite network parameter after SGD update".into(),
            ));
        }
        Ok(loss)
    }

    fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|w| w.is_finite()) && l.biases.iter().all(|b| b.is_finite())
        })
    }

    /// Total parameter count.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Flat view of all parameters, layer by layer, weights then biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            flat.extend_from_slice(&l.weights);
            flat.extend_from_slice(&l.biases);
        }
        flat
    }

    /// Overwrites all parameters from a flat vector in [`Self::params_flat`] order.
    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// Binary checkpoint: "DRQN" magic, version, config fields, then per layer
    /// the row-major weight matrix and bias vector as little-endian f64.
    pub fn save(&self, mut w: impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        write_u32(&mut w, CHECKPOINT_VERSION)?;
        write_u32(&mut w, self.config.input_size as u32)?;
        write_u32(&mut w, self.config.hidden.len() as u32)?;
        for &h in &self.config.hidden {
            write_u32(&mut w, h as u32)?;
        }
        write_f64(&mut w, self.config.dropout_rate)?;
        write_u32(&mut w, self.config.dropout_after.len() as u32)?;
        for &d in &self.config.dropout_after {
            write_u32(&mut w, d as u32)?;
        }
        write_u32(&mut w, self.config.output_size as u32)?;
        write_u32(&mut w, self.layers.len() as u32)?;
        for l in &self.layers {
            write_u32(&mut w, l.out_dim as u32)?;
            write_u32(&mut w, l.in_dim as u32)?;
            for &x in &l.weights {
                write_f64(&mut w, x)?;
            }
            for &x in &l.biases {
                write_f64(&mut w, x)?;
            }
        }
        Ok(())
    }

    pub fn load(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Parse("not a network checkpoint (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let input_size = read_u32(&mut r)? as usize;
        let n_hidden = read_u32(&mut r)? as usize;
        let hidden = (0..n_hidden)
            .map(|_| read_u32(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let dropout_rate = read_f64(&mut r)?;
        let n_dropout = read_u32(&mut r)? as usize;
        let dropout_after = (0..n_dropout)
            .map(|_| read_u32(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let output_size = read_u32(&mut r)? as usize;
        let config = NetworkConfig {
            input_size,
            hidden,
            dropout_rate,
            dropout_after,
            output_size,
        };
        config.validate()?;
        let n_layers = read_u32(&mut r)? as usize;
        if n_layers != config.layer_dims().len() {
            return Err(Error::Parse(format!(
                "checkpoint holds {n_layers} layers but the config implies {}",
                config.layer_dims().len()
            )));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (expect_out, expect_in) in config.layer_dims() {
            let out_dim = read_u32(&mut r)? as usize;
            let in_dim = read_u32(&mut r)? as usize;
            if out_dim != expect_out || in_dim != expect_in {
                return Err(Error::Parse(format!(
                    "checkpoint layer shape {out_dim}x{in_dim} does not chain (expected {expect_out}x{expect_in})"
                )));
            }
            let mut weights = vec![0.0; out_dim * in_dim];
            for w in &mut weights {
                *w = read_f64(&mut r)?;
            }
            let mut biases = vec![0.0; out_dim];
            for b in &mut biases {
                *b = read_f64(&mut r)?;
            }
            layers.push(Layer {
                out_dim,
                in_dim,
                weights,
                biases,
            });
        }
        let params = NetworkParams { config, layers };
        if !params.all_finite() {
            return Err(Error::Numeric("checkpoint holds non-finite values".into()));
        }
        Ok(params)
    }

    pub fn save_to_path(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.save(std::io::BufWriter::new(file))
    }

    pub fn load_from_path(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(file))
    }
}

/// Mean of squared element-wise differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "mse_loss needs equal nonempty lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> NetworkConfig {
        NetworkConfig::plain(4, vec![2], 3)
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = NetworkParams::init(small_config(), 9).unwrap();
        let b = NetworkParams::init(small_config(), 9).unwrap();
        assert_eq!(a, b);
        for l in &a.layers {
            assert!(l.biases.iter().all(|&b| b == 0.0));
        }
        let c = NetworkParams::init(small_config(), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_layer_shapes_chain() {
        let cfg = NetworkConfig::plain(97, vec![512, 256], 10);
        let net = NetworkParams::init(cfg, 0).unwrap();
        assert_eq!(net.layers[0].out_dim, 512);
        assert_eq!(net.layers[0].in_dim, 97);
        assert_eq!(net.layers[0].weights.len(), 512 * 97);
        assert_eq!(net.layers[1].in_dim, 512);
        assert_eq!(net.layers[2].in_dim, 256);
        assert_eq!(net.layers[2].out_dim, 10);
    }

    #[test]
    fn init_weight_bound_respected() {
        let cfg = NetworkConfig::plain(8, vec![16], 4);
        let net = NetworkParams::init(cfg, 3).unwrap();
        let bound0 = (6.0f64 / 8.0).sqrt();
        assert!(net.layers[0].weights.iter().all(|w| w.abs() <= bound0));
    }

    #[test]
    fn init_rejects_zero_width() {
        let cfg = NetworkConfig::plain(4, vec![0], 3);
        assert!(NetworkParams::init(cfg, 0).is_err());
    }

    #[test]
    fn forward_zero_network_outputs_zeros() {
        let net = NetworkParams::zeroed(small_config()).unwrap();
        let out = net.forward_eval(&[1.0, -2.0, 3.0, 4.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn forward_eval_is_deterministic() {
        let net = NetworkParams::init(small_config(), 5).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(net.forward_eval(&x).unwrap(), net.forward_eval(&x).unwrap());
    }

    #[test]
    fn relu_clips_negative_preactivation() {
        // 1-1-1 net, all weights 1: z = -5 -> relu 0 -> output 0.
        let mut net = NetworkParams::zeroed(NetworkConfig::plain(1, vec![1], 1)).unwrap();
        net.layers[0].weights[0] = 1.0;
        net.layers[1].weights[0] = 1.0;
        assert_eq!(net.forward_eval(&[-5.0]).unwrap(), vec![0.0]);
        assert_eq!(net.forward_eval(&[5.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let net = NetworkParams::init(small_config(), 5).unwrap();
        assert!(matches!(
            net.forward_eval(&[1.0, 2.0]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            net.forward_eval(&[1.0, f64::NAN, 0.0, 0.0]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[2.0, 4.0]).unwrap(), 10.0);
        assert_eq!(mse_loss(&[3.0], &[1.0]).unwrap(), 4.0);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sgd_zero_learning_rate_leaves_params_unchanged() {
        let mut net = NetworkParams::init(small_config(), 2).unwrap();
        let before = net.params_flat();
        let x = [0.5, 0.5, 0.5, 0.5];
        let batch = [TrainSample {
            input: &x,
            action: 1,
            target: 3.0,
        }];
        net.sgd_step(&batch, 0.0, &mut rng(0)).unwrap();
        assert_eq!(net.params_flat(), before);
    }

    #[test]
    fn sgd_zero_gradient_leaves_params_unchanged() {
        let mut net = NetworkParams::init(small_config(), 2).unwrap();
        let x = [0.5, 0.5, 0.5, 0.5];
        let pred = net.forward_eval(&x).unwrap();
        let batch = [TrainSample {
            input: &x,
            action: 0,
            target: pred[0],
        }];
        let before = net.params_flat();
        let loss = net.sgd_step(&batch, 0.1, &mut rng(0)).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(net.params_flat(), before);
        // and again
        net.sgd_step(&batch, 0.1, &mut rng(1)).unwrap();
        assert_eq!(net.params_flat(), before);
    }

    #[test]
    fn sgd_rejects_empty_batch() {
        let mut net = NetworkParams::init(small_config(), 2).unwrap();
        assert!(matches!(
            net.sgd_step(&[], 0.1, &mut rng(0)),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        // 4-2-3 network, 5 samples, no dropout, perturbation 1e-5.
        let net = NetworkParams::init(NetworkConfig::plain(4, vec![2], 3), 11).unwrap();
        let mut r = rng(12);
        let inputs: Vec<[f64; 4]> = (0..5)
            .map(|_| std::array::from_fn(|_| r.random_range(-1.0..1.0)))
            .collect();
        let batch: Vec<TrainSample> = inputs
            .iter()
            .enumerate()
            .map(|(i, x)| TrainSample {
                input: x.as_slice(),
                action: i % 3,
                target: r.random_range(-1.0..1.0),
            })
            .collect();
        let (analytic, _) = net.gradients_flat(&batch).unwrap();
        let flat = net.params_flat();
        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for k in 0..flat.len() {
            let mut probe = net.clone();
            let mut plus = flat.clone();
            plus[k] += h;
            probe.set_params_flat(&plus).unwrap();
            let (_, loss_plus) = probe.gradients_flat(&batch).unwrap();
            let mut minus = flat.clone();
            minus[k] -= h;
            probe.set_params_flat(&minus).unwrap();
            let (_, loss_minus) = probe.gradients_flat(&batch).unwrap();
            let numeric = (loss_plus - loss_minus) / (2.0 * h);
            let denom = analytic[k].abs().max(numeric.abs());
            if denom > 1e-6 {
                max_rel = max_rel.max((analytic[k] - numeric).abs() / denom);
            } else {
                assert!((analytic[k] - numeric).abs() < 1e-6);
            }
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    #[test]
    fn sgd_step_descends_on_fixed_batch() {
        let mut r = rng(21);
        for trial in 0..100 {
            let mut net =
                NetworkParams::init(NetworkConfig::plain(3, vec![6, 4], 2), trial).unwrap();
            let inputs: Vec<[f64; 3]> = (0..4)
                .map(|_| std::array::from_fn(|_| r.random_range(-1.0..1.0)))
                .collect();
            let batch: Vec<TrainSample> = inputs
                .iter()
                .enumerate()
                .map(|(i, x)| TrainSample {
                    input: x.as_slice(),
                    action: i % 2,
                    target: r.random_range(-1.0..1.0),
                })
                .collect();
            let (_, before) = net.gradients_flat(&batch).unwrap();
            net.sgd_step(&batch, 1e-3, &mut rng(trial)).unwrap();
            let (_, after) = net.gradients_flat(&batch).unwrap();
            assert!(
                after <= before + 1e-12,
                "trial {trial}: loss rose from {before} to {after}"
            );
        }
    }

    #[test]
    fn dropout_train_mean_matches_eval_output() {
        // Dropout feeding the linear output layer: the mask average converges
        // to the eval output. 10^4 draws, 3 standard errors per coordinate.
        let cfg = NetworkConfig {
            input_size: 4,
            hidden: vec![8],
            dropout_rate: 0.5,
            dropout_after: vec![0],
            output_size: 3,
        };
        let net = NetworkParams::init(cfg, 33).unwrap();
        let x = [0.7, -0.3, 0.9, 0.2];
        let eval = net.forward_eval(&x).unwrap();
        let n = 10_000;
        let mut r = rng(34);
        let mut sums = [0.0; 3];
        let mut sq_sums = [0.0; 3];
        for _ in 0..n {
            let out = net.forward_train(&x, &mut r).unwrap();
            for (k, &v) in out.iter().enumerate() {
                sums[k] += v;
                sq_sums[k] += v * v;
            }
        }
        for k in 0..3 {
            let mean = sums[k] / n as f64;
            let var = (sq_sums[k] / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - eval[k]).abs() <= 3.0 * se.max(1e-12),
                "coordinate {k}: mean {mean} vs eval {} (se {se})",
                eval[k]
            );
        }
    }

    #[test]
    fn eval_mode_applies_no_dropout() {
        let cfg = NetworkConfig {
            input_size: 2,
            hidden: vec![4],
            dropout_rate: 0.5,
            dropout_after: vec![0],
            output_size: 2,
        };
        let net = NetworkParams::init(cfg, 1).unwrap();
        let x = [0.4, 0.6];
        assert_eq!(net.forward_eval(&x).unwrap(), net.forward_eval(&x).unwrap());
    }

    #[test]
    fn clone_is_a_deep_independent_copy() {
        let mut src = NetworkParams::init(small_config(), 8).unwrap();
        let copy = src.clone();
        let x = [0.3, 0.1, -0.2, 0.5];
        assert_eq!(
            src.forward_eval(&x).unwrap(),
            copy.forward_eval(&x).unwrap()
        );
        let batch = [TrainSample {
            input: &x,
            action: 2,
            target: 5.0,
        }];
        src.sgd_step(&batch, 0.1, &mut rng(0)).unwrap();
        assert_ne!(src, copy);
        let copy2 = copy.clone();
        assert_eq!(copy, copy2);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let cfg = NetworkConfig {
            input_size: 5,
            hidden: vec![7, 3],
            dropout_rate: 0.5,
            dropout_after: vec![0],
            output_size: 4,
        };
        let net = NetworkParams::init(cfg, 77).unwrap();
        let mut bytes = Vec::new();
        net.save(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"DRQN");
        let loaded = NetworkParams::load(bytes.as_slice()).unwrap();
        assert_eq!(net, loaded);
        let mut bytes2 = Vec::new();
        loaded.save(&mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(NetworkParams::load(&b"NOPE"[..]).is_err());
        assert!(NetworkParams::load(&b"DRQN\x02\x00\x00\x00"[..]).is_err());
    }

    proptest::proptest! {
        /// Checkpoints round-trip bit-exactly across arbitrary shapes.
        #[test]
        fn checkpoint_roundtrip_any_shape(
            input_size in 1usize..12,
            hidden in proptest::collection::vec(1usize..12, 0..3),
            output_size in 1usize..12,
            dropout_rate in 0.0f64..0.9,
            seed in 0u64..1000,
        ) {
            let dropout_after = if hidden.is_empty() { vec![] } else { vec![0] };
            let cfg = NetworkConfig {
                input_size,
                hidden,
                dropout_rate,
                dropout_after,
                output_size,
            };
            let net = NetworkParams::init(cfg, seed).unwrap();
            let mut bytes = Vec::new();
            net.save(&mut bytes).unwrap();
            let loaded = NetworkParams::load(bytes.as_slice()).unwrap();
            proptest::prop_assert_eq!(&net, &loaded);
        }
    }

    #[test]
    fn params_flat_roundtrip() {
        let mut net = NetworkParams::init(small_config(), 4).unwrap();
        let flat = net.params_flat();
        assert_eq!(flat.len(), net.param_count());
        let doubled: Vec<f64> = flat.iter().map(|x| x * 2.0).collect();
        net.set_params_flat(&doubled).unwrap();
        assert_eq!(net.params_flat(), doubled);
        assert!(net.set_params_flat(&[1.0]).is_err());
    }

    #[test]
    fn training_keeps_params_finite() {
        let mut net = NetworkParams::init(NetworkConfig::plain(3, vec![8], 4), 55).unwrap();
        let mut r = rng(56);
        let x = [0.2, -0.4, 0.9];
        for step in 0..500 {
            let batch = [TrainSample {
                input: &x,
                action: step % 4,
                target: -1.0e5,
            }];
            net.sgd_step(&batch, 1e-3, &mut r).unwrap();
        }
        assert!(net.all_finite());
    }
}
