//! Multilayer perceptron with a reverse-mode tape and the Adam optimizer.
//!
//! The network is a fixed stack of dense layers with a leaky-rectifier
//! activation (slope 0.01 on negatives) on every hidden layer and a linear
//! output. The forward pass records the activations needed for an exact
//! backward pass; the loss side supplies the gradient with respect to the
//! network outputs (the seed), and [`Tape::backward`] turns it into
//! per-parameter gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{add_bias_rows, col_sums, matmul, matmul_nt, matmul_tn, Tensor};

/// Negative-side slope of the hidden activation.
pub const LEAKY_SLOPE: f64 = 0.01;

/// One dense layer: weights are `[in, out]`, bias is `[out]`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Parameters of the MLP. Every mutation path bumps `version`, which lets a
/// recorded tape detect that it has gone stale.
#[derive(Debug, Clone)]
pub struct MlpParams {
    layers: Vec<DenseLayer>,
    dims: Vec<usize>,
    version: u64,
}

/// Gradients with the same layer shapes as [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<DenseLayer>,
}

/// Draw initial parameters: Glorot-uniform weights, zero biases.
/// The same seed always produces bit-identical parameters.
pub fn init_params(seed: u64, dims: &[usize]) -> Result<MlpParams> {
    if dims.len() < 2 {
        return Err(Error::Config(format!(
            "mlp needs at least 2 layer sizes, got {:?}",
            dims
        )));
    }
    if let Some(w) = dims.iter().find(|&&d| d == 0) {
        let _ = w;
        return Err(Error::Config(format!("zero-width layer in dims {:?}", dims)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        layers.push(DenseLayer {
            weights: Tensor::from_vec(&[fan_in, fan_out], data)?,
            bias: Tensor::zeros(&[fan_out]),
        });
    }
    Ok(MlpParams {
        layers,
        dims: dims.to_vec(),
        version: 0,
    })
}

impl MlpParams {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_width(&self) -> usize {
        self.dims[0]
    }

    pub fn output_width(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Mutable access to a layer for direct parameter surgery; invalidates
    /// outstanding tapes.
    pub fn layer_mut(&mut self, idx: usize) -> &mut DenseLayer {
        self.version += 1;
        &mut self.layers[idx]
    }

    /// Flat views of every parameter slot, in a fixed order
    /// (w0, b0, w1, b1, ...); invalidates outstanding tapes.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            let DenseLayer { weights, bias } = layer;
            out.push(weights.data_mut());
            out.push(bias.data_mut());
        }
        out
    }

    /// Lengths of the slots returned by [`Self::param_slices_mut`].
    pub fn param_slot_lens(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            out.push(layer.weights.len());
            out.push(layer.bias.len());
        }
        out
    }
}

impl MlpGrads {
    /// Flat views matching the order of [`MlpParams::param_slices_mut`].
    pub fn grad_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            out.push(layer.weights.data());
            out.push(layer.bias.data());
        }
        out
    }
}

/// Activations recorded by a forward pass, sufficient to replay it backward.
pub struct Tape {
    input: Tensor,
    /// Pre-activation values of each hidden layer.
    hidden_pre: Vec<Tensor>,
    /// Post-activation values of each hidden layer.
    hidden_post: Vec<Tensor>,
    version: u64,
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Run the network on a batch (rows are inputs) and record a tape.
pub fn mlp_forward(params: &MlpParams, x: &Tensor) -> Result<(Tensor, Tape)> {
    if x.cols() != params.input_width() {
        return Err(Error::Dimension(format!(
            "input width {} vs network input {}",
            x.cols(),
            params.input_width()
        )));
    }
    let n_layers = params.layers.len();
    let mut hidden_pre = Vec::with_capacity(n_layers - 1);
    let mut hidden_post = Vec::with_capacity(n_layers - 1);
    let mut current = x.clone();
    for (i, layer) in params.layers.iter().enumerate() {
        let mut z = matmul(&current, &layer.weights)?;
        add_bias_rows(&mut z, &layer.bias)?;
        if i + 1 == n_layers {
            if !z.all_finite() {
                return Err(Error::Diverged("non-finite network output".into()));
            }
            return Ok((
                z,
                Tape {
                    input: x.clone(),
                    hidden_pre,
                    hidden_post,
                    version: params.version,
                },
            ));
        }
        let mut a = z.clone();
        for v in a.data_mut() {
            *v = leaky(*v);
        }
        hidden_pre.push(z);
        current = a.clone();
        hidden_post.push(a);
    }
    unreachable!("init_params guarantees at least one layer");
}

impl Tape {
    /// Exact reverse-mode gradients of a scalar loss whose gradient with
    /// respect to the network outputs is `seed_grad` (same shape as outputs).
    pub fn backward(&self, params: &MlpParams, seed_grad: &Tensor) -> Result<MlpGrads> {
        if params.version != self.version {
            return Err(Error::StaleTape);
        }
        let n_layers = params.layers.len();
        if seed_grad.rows() != self.input.rows() || seed_grad.cols() != params.output_width() {
            return Err(Error::Dimension(format!(
                "seed grad shape {:?} vs outputs [{}, {}]",
                seed_grad.shape(),
                self.input.rows(),
                params.output_width()
            )));
        }

        let mut grads: Vec<DenseLayer> = params
            .layers
            .iter()
            .map(|l| DenseLayer {
                weights: Tensor::zeros(l.weights.shape()),
                bias: Tensor::zeros(l.bias.shape()),
            })
            .collect();

        // delta = dL/d(pre-activation of layer l), walking from the top.
        let mut delta = seed_grad.clone();
        for l in (0..n_layers).rev() {
            let below = if l == 0 {
                &self.input
            } else {
                &self.hidden_post[l - 1]
            };
            grads[l].weights = matmul_tn(below, &delta)?;
            grads[l].bias = col_sums(&delta)?;
            if l == 0 {
                break;
            }
            let mut da = matmul_nt(&delta, &params.layers[l].weights)?;
            for (d, z) in da.data_mut().iter_mut().zip(self.hidden_pre[l - 1].data()) {
                *d *= leaky_grad(*z);
            }
            delta = da;
        }
        Ok(MlpGrads { layers: grads })
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            ..Default::default()
        }
    }
}

/// Optimizer state: first/second moment accumulators mirroring the parameter
/// slots, plus the step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    hp: AdamParams,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// `slot_lens` gives the flat length of each parameter slot, in the order
    /// they will be passed to [`Self::step`].
    pub fn new(hp: AdamParams, slot_lens: &[usize]) -> Result<Self> {
        if hp.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be positive, got {}", hp.lr)));
        }
        Ok(AdamState {
            hp,
            t: 0,
            m: slot_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: slot_lens.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn hyperparams(&self) -> AdamParams {
        self.hp
    }

    /// One Adam update over every parameter slot. Rejects non-finite
    /// gradients so a diverging run surfaces instead of silently corrupting
    /// the parameters.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "adam expects {} slots, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (slot, (p, g)) in params.iter().zip(grads.iter()).enumerate() {
            if p.len() != self.m[slot].len() || g.len() != self.m[slot].len() {
                return Err(Error::Dimension(format!(
                    "adam slot {} length mismatch",
                    slot
                )));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite gradient in slot {}",
                    slot
                )));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let AdamParams {
            lr,
            beta1,
            beta2,
            eps,
        } = self.hp;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (slot, (p, g)) in params.iter_mut().zip(grads.iter()).enumerate() {
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for i in 0..g.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
