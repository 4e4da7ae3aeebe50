use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// ε inside the batch-norm square root.
pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the newest batch in the running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

/// Architecture of a dense network: `linear → [batch norm] → activation` per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
    pub class_count: usize,
}

impl ModelSpec {
    /// ReLU hidden layers (optionally batch-normalized) followed by an identity logit layer.
    pub fn mlp(input_width: usize, hidden: &[usize], class_count: usize, batch_norm: bool) -> Self {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&width| LayerSpec {
                width,
                activation: Activation::Relu,
                batch_norm,
            })
            .collect();
        layers.push(LayerSpec {
            width: class_count,
            activation: Activation::Identity,
            batch_norm: false,
        });
        Self {
            input_width,
            layers,
            class_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.class_count == 0 {
            return Err(Error::arg("input width and class count must be positive"));
        }
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::arg("a model needs at least one layer"))?;
        if last.width != self.class_count {
            return Err(Error::arg(format!(
                "last layer width {} differs from class count {}",
                last.width, self.class_count
            )));
        }
        if last.batch_norm {
            return Err(Error::arg("the logit layer cannot be batch-normalized"));
        }
        if self.layers.iter().any(|l| l.width == 0) {
            return Err(Error::arg("layer widths must be positive"));
        }
        Ok(())
    }

    pub fn layer_inputs(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.input_width).chain(self.layers.iter().map(|l| l.width))
    }

    /// Trainable scalars: weights, biases, and batch-norm scale/shift.
    pub fn param_count(&self) -> usize {
        self.layer_inputs()
            .zip(&self.layers)
            .map(|(fan_in, l)| fan_in * l.width + l.width + if l.batch_norm { 2 * l.width } else { 0 })
            .sum()
    }

    pub fn bn_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.batch_norm).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// fan_in × fan_out
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub batch_norm: Option<BatchNorm>,
}

/// Weights and batch-norm state of one network. Value type; clone freely.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    spec: ModelSpec,
    layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics.
    Train,
    /// Normalize with stored running statistics.
    Eval,
}

/// Mean and (biased) variance of the input to one batch-norm layer over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

struct BnTrace {
    /// z minus the batch mean
    batch_centered: Array2<f64>,
    /// z minus whichever mean was used for normalization
    centered: Array2<f64>,
    inv_std: Array1<f64>,
    normalized: Array2<f64>,
}

struct LayerTrace {
    input: Array2<f64>,
    bn: Option<BnTrace>,
    pre_activation: Array2<f64>,
}

/// Result of a forward pass, retaining what `backward` needs.
pub struct Forward {
    pub logits: Array2<f64>,
    /// Statistics measured at every batch-norm layer, in layer order.
    pub bn_stats: Vec<BnStats>,
    mode: Mode,
    trace: Vec<LayerTrace>,
}

impl Forward {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                    gamma: l.batch_norm.as_ref().map(|b| Array1::zeros(b.gamma.len())),
                    beta: l.batch_norm.as_ref().map(|b| Array1::zeros(b.beta.len())),
                })
                .collect(),
        }
    }

    /// Flattened in the same order as [`ModelParams::trainable_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.extend(g.iter());
                out.extend(b.iter());
            }
        }
        out
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weight *= k;
            l.bias *= k;
            if let Some(g) = &mut l.gamma {
                *g *= k;
            }
            if let Some(b) = &mut l.beta {
                *b *= k;
            }
        }
    }
}

impl ModelParams {
    /// He-uniform weights, zero biases, unit BN scale, zero BN shift, running stats (0, 1).
    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_inputs()
            .zip(&spec.layers)
            .map(|(fan_in, l)| {
                let bound = (6.0 / fan_in as f64).sqrt();
                let weight = Array2::from_shape_fn((fan_in, l.width), |_| rng.random_range(-bound..bound));
                DenseLayer {
                    weight,
                    bias: Array1::zeros(l.width),
                    batch_norm: l.batch_norm.then(|| BatchNorm::new(l.width)),
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    /// Assembles a model from explicit layers, checking every shape against `spec`.
    pub fn from_layers(spec: ModelSpec, layers: Vec<DenseLayer>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.layers.len() {
            return Err(Error::arg("layer count does not match the spec"));
        }
        for ((fan_in, ls), l) in spec.layer_inputs().zip(&spec.layers).zip(&layers) {
            let bn_ok = match (&l.batch_norm, ls.batch_norm) {
                (Some(bn), true) => [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
                    .iter()
                    .all(|a| a.len() == ls.width),
                (None, false) => true,
                _ => false,
            };
            if l.weight.dim() != (fan_in, ls.width) || l.bias.len() != ls.width || !bn_ok {
                return Err(Error::arg("layer shapes do not match the spec"));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn class_count(&self) -> usize {
        self.spec.class_count
    }

    pub fn input_width(&self) -> usize {
        self.spec.input_width
    }

    pub fn forward(&self, batch: ArrayView2<f64>, mode: Mode) -> Result<Forward> {
        if batch.ncols() != self.spec.input_width {
            return Err(Error::arg(format!(
                "batch has {} columns, model expects {}",
                batch.ncols(),
                self.spec.input_width
            )));
        }
        if batch.nrows() == 0 {
            return Err(Error::arg("empty batch"));
        }
        let mut x = batch.to_owned();
        let mut trace = Vec::with_capacity(self.layers.len());
        let mut bn_stats = Vec::new();
        for (layer, ls) in self.layers.iter().zip(&self.spec.layers) {
            let z = x.dot(&layer.weight) + &layer.bias;
            let (pre_activation, bn) = match &layer.batch_norm {
                None => (z, None),
                Some(norm) => {
                    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                    let batch_centered = &z - &mean;
                    let var = batch_centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
                    let (centered, inv_std) = match mode {
                        Mode::Train => (
                            batch_centered.clone(),
                            var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt()),
                        ),
                        Mode::Eval => (
                            &z - &norm.running_mean,
                            norm.running_var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt()),
                        ),
                    };
                    let normalized = &centered * &inv_std;
                    let out = &normalized * &norm.gamma + &norm.beta;
                    bn_stats.push(BnStats { mean, var });
                    (
                        out,
                        Some(BnTrace {
                            batch_centered,
                            centered,
                            inv_std,
                            normalized,
                        }),
                    )
                }
            };
            let next = match ls.activation {
                Activation::Relu => pre_activation.mapv(|v| v.max(0.0)),
                Activation::Identity => pre_activation.clone(),
            };
            trace.push(LayerTrace {
                input: x,
                bn,
                pre_activation,
            });
            x = next;
        }
        Ok(Forward {
            logits: x,
            bn_stats,
            mode,
            trace,
        })
    }

    /// Eval-mode logits.
    pub fn predict(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(batch, Mode::Eval)?.logits)
    }

    /// Gradients of a scalar loss given its gradient with respect to the logits.
    ///
    /// `d_stats`, when given, holds one entry per batch-norm layer with the loss gradient with
    /// respect to the measured batch mean and variance at that layer. Also returns the gradient
    /// with respect to the input batch.
    pub fn backward(
        &self,
        fwd: &Forward,
        d_logits: ArrayView2<f64>,
        d_stats: Option<&[BnStats]>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if d_logits.dim() != fwd.logits.dim() {
            return Err(Error::arg("logit gradient shape does not match the forward pass"));
        }
        if let Some(ds) = d_stats {
            if ds.len() != fwd.bn_stats.len() {
                return Err(Error::arg("one statistics gradient per batch-norm layer required"));
            }
        }
        let n = d_logits.nrows() as f64;
        let mut bn_index = fwd.bn_stats.len();
        let mut grad = d_logits.to_owned();
        let mut layers = Vec::with_capacity(self.layers.len());
        for ((layer, ls), tr) in self.layers.iter().zip(&self.spec.layers).zip(&fwd.trace).rev() {
            if ls.activation == Activation::Relu {
                grad.zip_mut_with(&tr.pre_activation, |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0
                    }
                });
            }
            let (dz, gamma, beta) = match (&layer.batch_norm, &tr.bn) {
                (Some(norm), Some(bn)) => {
                    bn_index -= 1;
                    let d_gamma = (&grad * &bn.normalized).sum_axis(Axis(0));
                    let d_beta = grad.sum_axis(Axis(0));
                    let d_norm = &grad * &norm.gamma;
                    let mut dz = &d_norm * &bn.inv_std;
                    let (mut d_mean, mut d_var) = match fwd.mode {
                        Mode::Train => {
                            let inv3 = bn.inv_std.mapv(|s| -0.5 * s * s * s);
                            (
                                -(d_norm.sum_axis(Axis(0)) * &bn.inv_std),
                                (&d_norm * &bn.centered).sum_axis(Axis(0)) * inv3,
                            )
                        }
                        Mode::Eval => (Array1::zeros(ls.width), Array1::zeros(ls.width)),
                    };
                    if let Some(ds) = d_stats {
                        d_mean += &ds[bn_index].mean;
                        d_var += &ds[bn_index].var;
                    }
                    dz += &(d_mean / n);
                    dz += &(&bn.batch_centered * &(d_var * (2.0 / n)));
                    (dz, Some(d_gamma), Some(d_beta))
                }
                _ => (grad, None, None),
            };
            let d_weight = tr.input.t().dot(&dz);
            let d_bias = dz.sum_axis(Axis(0));
            grad = dz.dot(&layer.weight.t());
            layers.push(LayerGrads {
                weight: d_weight,
                bias: d_bias,
                gamma,
                beta,
            });
        }
        layers.reverse();
        Ok((Gradients { layers }, grad))
    }

    /// Blends measured batch statistics into the running statistics.
    pub fn absorb_bn_stats(&mut self, stats: &[BnStats]) -> Result<()> {
        let mut it = stats.iter();
        for layer in &mut self.layers {
            if let Some(norm) = &mut layer.batch_norm {
                let s = it
                    .next()
                    .ok_or_else(|| Error::arg("missing batch statistics for a batch-norm layer"))?;
                norm.running_mean = &norm.running_mean * (1.0 - BN_MOMENTUM) + &s.mean * BN_MOMENTUM;
                norm.running_var = &norm.running_var * (1.0 - BN_MOMENTUM) + &s.var * BN_MOMENTUM;
            }
        }
        Ok(())
    }

    /// Stored running statistics of every batch-norm layer, in layer order.
    pub fn running_stats(&self) -> Vec<BnStats> {
        self.layers
            .iter()
            .filter_map(|l| l.batch_norm.as_ref())
            .map(|b| BnStats {
                mean: b.running_mean.clone(),
                var: b.running_var.clone(),
            })
            .collect()
    }

    /// Weights, biases, then BN scale and shift, layer by layer.
    pub fn trainable_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.param_count());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
            if let Some(b) = &l.batch_norm {
                out.extend(b.gamma.iter());
                out.extend(b.beta.iter());
            }
        }
        out
    }

    pub fn set_trainable_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.spec.param_count() {
            return Err(Error::arg(format!(
                "expected {} parameters, got {}",
                self.spec.param_count(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|v| *v = it.next().unwrap());
            l.bias.iter_mut().for_each(|v| *v = it.next().unwrap());
            if let Some(b) = &mut l.batch_norm {
                b.gamma.iter_mut().for_each(|v| *v = it.next().unwrap());
                b.beta.iter_mut().for_each(|v| *v = it.next().unwrap());
            }
        }
        Ok(())
    }

    /// Running means then running variances, layer by layer.
    pub fn running_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for b in self.layers.iter().filter_map(|l| l.batch_norm.as_ref()) {
            out.extend(b.running_mean.iter());
            out.extend(b.running_var.iter());
        }
        out
    }

    pub fn set_running_flat(&mut self, flat: &[f64]) -> Result<()> {
        let want: usize = self
            .layers
            .iter()
            .filter_map(|l| l.batch_norm.as_ref())
            .map(|b| 2 * b.running_mean.len())
            .sum();
        if flat.len() != want {
            return Err(Error::arg(format!("expected {want} running statistics, got {}", flat.len())));
        }
        let mut it = flat.iter().copied();
        for b in self.layers.iter_mut().filter_map(|l| l.batch_norm.as_mut()) {
            b.running_mean.iter_mut().for_each(|v| *v = it.next().unwrap());
            b.running_var.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    /// FNV-1a over the bit patterns of every stored value; used to detect mutation.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.trainable_flat().into_iter().chain(self.running_flat()) {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// In-place SGD update `w ← w − lr·∇w`. Running statistics are not touched.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, lr: f64) -> Result<()> {
    if grads.layers.len() != params.layers.len() {
        return Err(Error::arg("gradient layer count does not match the model"));
    }
    for (l, g) in params.layers.iter_mut().zip(&grads.layers) {
        if l.weight.dim() != g.weight.dim() || l.bias.len() != g.bias.len() {
            return Err(Error::arg("gradient shape does not match the model"));
        }
        l.weight.scaled_add(-lr, &g.weight);
        l.bias.scaled_add(-lr, &g.bias);
        match (&mut l.batch_norm, &g.gamma, &g.beta) {
            (Some(b), Some(dg), Some(db)) => {
                b.gamma.scaled_add(-lr, dg);
                b.beta.scaled_add(-lr, db);
            }
            (None, None, None) => {}
            _ => return Err(Error::arg("gradient batch-norm layout does not match the model")),
        }
    }
    Ok(())
}

/// Index of the largest entry in every row (lowest index on ties).
pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_net(width: usize) -> ModelParams {
        let spec = ModelSpec {
            input_width: width,
            layers: vec![LayerSpec {
                width,
                activation: Activation::Identity,
                batch_norm: false,
            }],
            class_count: width,
        };
        ModelParams::from_layers(
            spec,
            vec![DenseLayer {
                weight: Array2::eye(width),
                bias: Array1::zeros(width),
                batch_norm: None,
            }],
        )
        .unwrap()
    }

    #[test]
    fn identity_network_passes_input_through() {
        let net = identity_net(3);
        let x = array![[1.0, -2.0, 0.5], [0.0, 4.0, 9.0]];
        assert_eq!(net.predict(x.view()).unwrap(), x);
    }

    #[test]
    fn eval_forward_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ModelParams::init(&ModelSpec::mlp(4, &[8], 3, true), &mut rng).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i * 4 + j) as f64 * 0.1);
        let before = net.clone();
        let a = net.predict(x.view()).unwrap();
        let b = net.predict(x.view()).unwrap();
        assert_eq!(a, b);
        assert_eq!(net, before);
    }

    #[test]
    fn constant_batch_normalizes_to_zero() {
        let spec = ModelSpec {
            input_width: 2,
            layers: vec![LayerSpec {
                width: 2,
                activation: Activation::Identity,
                batch_norm: true,
            }, LayerSpec {
                width: 2,
                activation: Activation::Identity,
                batch_norm: false,
            }],
            class_count: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = ModelParams::init(&spec, &mut rng).unwrap();
        let x = array![[0.3, -1.0], [0.3, -1.0], [0.3, -1.0]];
        let fwd = net.forward(x.view(), Mode::Train).unwrap();
        let bn = fwd.trace[0].bn.as_ref().unwrap();
        assert!(bn.normalized.iter().all(|v| v.abs() < 1e-12));
        assert!(fwd.bn_stats[0].var.iter().all(|v| v.abs() < 1e-24));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let net = identity_net(3);
        assert!(net.predict(Array2::zeros((2, 4)).view()).is_err());
    }

    #[test]
    fn sgd_fixed_points_and_quadratic_step() {
        let mut net = identity_net(1);
        let zero = Gradients::zeros_like(&net);
        let before = net.clone();
        sgd_step(&mut net, &zero, 0.5).unwrap();
        assert_eq!(net, before);

        // f(w) = ½w², ∇f = w.
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weight[[0, 0]] = net.layers()[0].weight[[0, 0]];
        sgd_step(&mut net, &g, 0.0).unwrap();
        assert_eq!(net, before);
        sgd_step(&mut net, &g, 0.1).unwrap();
        assert!((net.layers()[0].weight[[0, 0]] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn sgd_leaves_running_stats_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = ModelParams::init(&ModelSpec::mlp(3, &[4], 2, true), &mut rng).unwrap();
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].gamma.as_mut().unwrap().fill(1.0);
        let running = net.running_flat();
        sgd_step(&mut net, &g, 0.1).unwrap();
        assert_eq!(net.running_flat(), running);
        assert!((net.layers()[0].batch_norm.as_ref().unwrap().gamma[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = ModelParams::init(&ModelSpec::mlp(5, &[7, 6], 4, true), &mut rng).unwrap();
        let flat = net.trainable_flat();
        assert_eq!(flat.len(), net.spec().param_count());
        let mut other = ModelParams::init(net.spec(), &mut rng).unwrap();
        other.set_trainable_flat(&flat).unwrap();
        other.set_running_flat(&net.running_flat()).unwrap();
        assert_eq!(other, net);
    }

    #[test]
    fn spec_validation() {
        let mut spec = ModelSpec::mlp(4, &[8], 3, true);
        assert!(spec.validate().is_ok());
        spec.class_count = 5;
        assert!(spec.validate().is_err());
        let no_layers = ModelSpec {
            input_width: 3,
            layers: vec![],
            class_count: 3,
        };
        assert!(no_layers.validate().is_err());
    }
}
