//! The dueling Q-network, built from first principles in 64-bit floats:
//! dense trunk layers with batch normalization and ReLU, a scalar value
//! head and a per-action advantage head, manual backpropagation, and the
//! adaptive-moment parameter update.
//!
//! Trunk layers run linear -> batch norm -> ReLU. In train mode the batch
//! statistics normalize and the running statistics get a momentum update;
//! eval mode is a pure function of the parameters using the running
//! statistics (biased variance in both cases).

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

/// One trunk layer: affine map plus batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// Weight matrix, `out x in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub bn_gamma: Array1<f64>,
    pub bn_beta: Array1<f64>,
    pub bn_running_mean: Array1<f64>,
    pub bn_running_var: Array1<f64>,
    /// Fraction of the old running statistic kept per train-mode batch.
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

/// Plain affine head.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All weights and normalization statistics of the dueling network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub trunk: Vec<DenseLayer>,
    pub value_head: LinearLayer,
    pub advantage_head: LinearLayer,
}

/// Architecture descriptor, enough to rebuild parameter shapes.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ArchSpec {
    pub state_dim: usize,
    pub widths: Vec<usize>,
    pub action_count: usize,
}

impl NetworkParams {
    /// Fresh network: weights uniform in +-1/sqrt(fan_in), biases zero,
    /// batch-norm at identity with unit running variance.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, arch: &ArchSpec) -> Self {
        assert!(!arch.widths.is_empty(), "trunk needs at least one layer");
        let mut trunk = Vec::with_capacity(arch.widths.len());
        let mut fan_in = arch.state_dim;
        for &width in &arch.widths {
            trunk.push(DenseLayer {
                weights: uniform_matrix(rng, width, fan_in),
                bias: Array1::zeros(width),
                bn_gamma: Array1::ones(width),
                bn_beta: Array1::zeros(width),
                bn_running_mean: Array1::zeros(width),
                bn_running_var: Array1::ones(width),
                bn_momentum: 0.99,
                bn_epsilon: 1e-5,
            });
            fan_in = width;
        }
        NetworkParams {
            trunk,
            value_head: LinearLayer {
                weights: uniform_matrix(rng, 1, fan_in),
                bias: Array1::zeros(1),
            },
            advantage_head: LinearLayer {
                weights: uniform_matrix(rng, arch.action_count, fan_in),
                bias: Array1::zeros(arch.action_count),
            },
        }
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec {
            state_dim: self.trunk[0].weights.ncols(),
            widths: self.trunk.iter().map(|l| l.weights.nrows()).collect(),
            action_count: self.advantage_head.weights.nrows(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.trunk[0].weights.ncols()
    }

    pub fn action_count(&self) -> usize {
        self.advantage_head.weights.nrows()
    }

    /// Number of trainable parameters (running statistics excluded).
    pub fn trainable_count(&self) -> usize {
        self.trunk
            .iter()
            .map(|l| l.weights.len() + l.bias.len() + l.bn_gamma.len() + l.bn_beta.len())
            .sum::<usize>()
            + self.value_head.weights.len()
            + self.value_head.bias.len()
            + self.advantage_head.weights.len()
            + self.advantage_head.bias.len()
    }

    /// Forward pass with batch statistics; updates the running statistics.
    /// Needs at least two rows for a meaningful batch variance.
    pub fn forward_train(&mut self, batch: &Array2<f64>) -> (Array2<f64>, ForwardCache) {
        assert!(
            batch.nrows() >= 2,
            "train-mode forward needs a batch of at least 2"
        );
        let (q, cache) = self.forward_internal(batch, true);
        for (layer, stats) in self.trunk.iter_mut().zip(&cache.layers) {
            let m = layer.bn_momentum;
            layer
                .bn_running_mean
                .zip_mut_with(&stats.batch_mean, |r, &b| *r = m * *r + (1.0 - m) * b);
            layer
                .bn_running_var
                .zip_mut_with(&stats.batch_var, |r, &b| *r = m * *r + (1.0 - m) * b);
        }
        (q, cache)
    }

    /// Forward pass on the running statistics; pure, safe to share.
    pub fn forward_eval(&self, batch: &Array2<f64>) -> Array2<f64> {
        self.forward_internal(batch, false).0
    }

    /// Q-values for a single state row, eval mode.
    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        let input = Array2::from_shape_vec((1, state.len()), state.to_vec()).unwrap();
        self.forward_eval(&input).row(0).to_vec()
    }

    fn forward_internal(&self, batch: &Array2<f64>, train: bool) -> (Array2<f64>, ForwardCache) {
        let mut layers = Vec::with_capacity(self.trunk.len());
        let mut x = batch.clone();
        for layer in &self.trunk {
            let z = x.dot(&layer.weights.t()) + &layer.bias;
            let (mean, var) = if train {
                let mean = z.mean_axis(Axis(0)).unwrap();
                let centered = &z - &mean;
                let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).unwrap();
                (mean, var)
            } else {
                (layer.bn_running_mean.clone(), layer.bn_running_var.clone())
            };
            let inv_std = var.mapv(|v| 1.0 / (v + layer.bn_epsilon).sqrt());
            let x_hat = (&z - &mean) * &inv_std;
            let y = &x_hat * &layer.bn_gamma + &layer.bn_beta;
            let h = y.mapv(|v| v.max(0.0));
            layers.push(LayerCache {
                input: x,
                x_hat,
                inv_std,
                activation: h.clone(),
                batch_mean: mean,
                batch_var: var,
            });
            x = h;
        }

        let v = x.dot(&self.value_head.weights.t()) + &self.value_head.bias; // (B,1)
        let a = x.dot(&self.advantage_head.weights.t()) + &self.advantage_head.bias;
        let v_col = v.column(0).to_owned();
        let q = combine_dueling(&v_col, &a);
        (
            q.clone(),
            ForwardCache {
                layers,
                value: v_col,
                advantage: a,
                q,
            },
        )
    }

    /// Deep copy including the running statistics (target-network sync).
    pub fn copy_into_target(&self, dst: &mut NetworkParams) {
        assert_eq!(self.arch(), dst.arch(), "architecture mismatch");
        dst.clone_from(self);
    }

    /// Flattens every array, running statistics included, in the documented
    /// checkpoint order: per trunk layer W (row-major), b, gamma, beta,
    /// running_mean, running_var; then value head W, b; advantage head W, b.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.trunk {
            extend(&mut out, &l.weights);
            out.extend(l.bias.iter());
            out.extend(l.bn_gamma.iter());
            out.extend(l.bn_beta.iter());
            out.extend(l.bn_running_mean.iter());
            out.extend(l.bn_running_var.iter());
        }
        extend(&mut out, &self.value_head.weights);
        out.extend(self.value_head.bias.iter());
        extend(&mut out, &self.advantage_head.weights);
        out.extend(self.advantage_head.bias.iter());
        out
    }

    /// Rebuilds parameters from the flat layout of [`NetworkParams::to_flat`].
    pub fn from_flat(arch: &ArchSpec, flat: &[f64]) -> Result<Self, String> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<Vec<f64>, String> {
            if pos + n > flat.len() {
                return Err("parameter array too short".into());
            }
            let s = flat[pos..pos + n].to_vec();
            pos += n;
            Ok(s)
        };
        let mut trunk = Vec::new();
        let mut fan_in = arch.state_dim;
        for &w in &arch.widths {
            let weights = Array2::from_shape_vec((w, fan_in), take(w * fan_in)?).unwrap();
            let bias = Array1::from_vec(take(w)?);
            let bn_gamma = Array1::from_vec(take(w)?);
            let bn_beta = Array1::from_vec(take(w)?);
            let bn_running_mean = Array1::from_vec(take(w)?);
            let bn_running_var = Array1::from_vec(take(w)?);
            trunk.push(DenseLayer {
                weights,
                bias,
                bn_gamma,
                bn_beta,
                bn_running_mean,
                bn_running_var,
                bn_momentum: 0.99,
                bn_epsilon: 1e-5,
            });
            fan_in = w;
        }
        let value_head = LinearLayer {
            weights: Array2::from_shape_vec((1, fan_in), take(fan_in)?).unwrap(),
            bias: Array1::from_vec(take(1)?),
        };
        let advantage_head = LinearLayer {
            weights: Array2::from_shape_vec(
                (arch.action_count, fan_in),
                take(arch.action_count * fan_in)?,
            )
            .unwrap(),
            bias: Array1::from_vec(take(arch.action_count)?),
        };
        if pos != flat.len() {
            return Err(format!(
                "parameter array has {} extra values",
                flat.len() - pos
            ));
        }
        Ok(NetworkParams {
            trunk,
            value_head,
            advantage_head,
        })
    }
}

fn extend(out: &mut Vec<f64>, m: &Array2<f64>) {
    out.extend(m.iter());
}

fn uniform_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let scale = 1.0 / (cols as f64).sqrt();
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = rng.gen_range(-scale..scale);
    }
    m
}

/// Dueling combine: `Q = V + A - mean_a(A)` per row.
pub fn combine_dueling(value: &Array1<f64>, advantage: &Array2<f64>) -> Array2<f64> {
    let mean_a = advantage.mean_axis(Axis(1)).unwrap();
    let mut q = advantage.clone();
    for (mut row, (&v, &m)) in q.rows_mut().into_iter().zip(value.iter().zip(mean_a.iter())) {
        row.mapv_inplace(|a| v + a - m);
    }
    q
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
    activation: Array2<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

/// Intermediates of one forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    pub value: Array1<f64>,
    pub advantage: Array2<f64>,
    pub q: Array2<f64>,
}

/// Gradient arrays mirroring the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub trunk: Vec<DenseGrad>,
    pub value_head: LinearGrad,
    pub advantage_head: LinearGrad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub bn_gamma: Array1<f64>,
    pub bn_beta: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Gradients {
            trunk: params
                .trunk
                .iter()
                .map(|l| DenseGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                    bn_gamma: Array1::zeros(l.bn_gamma.raw_dim()),
                    bn_beta: Array1::zeros(l.bn_beta.raw_dim()),
                })
                .collect(),
            value_head: LinearGrad {
                weights: Array2::zeros(params.value_head.weights.raw_dim()),
                bias: Array1::zeros(params.value_head.bias.raw_dim()),
            },
            advantage_head: LinearGrad {
                weights: Array2::zeros(params.advantage_head.weights.raw_dim()),
                bias: Array1::zeros(params.advantage_head.bias.raw_dim()),
            },
        }
    }

    /// Flat view in the same order as the trainable parameters.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.trunk {
            extend(&mut out, &g.weights);
            out.extend(g.bias.iter());
            out.extend(g.bn_gamma.iter());
            out.extend(g.bn_beta.iter());
        }
        extend(&mut out, &self.value_head.weights);
        out.extend(self.value_head.bias.iter());
        extend(&mut out, &self.advantage_head.weights);
        out.extend(self.advantage_head.bias.iter());
        out
    }
}

/// Mean squared error of the taken-action Q-values against the targets.
pub fn mse_loss(q: &Array2<f64>, targets: &[f64], actions: &[usize]) -> f64 {
    let b = targets.len();
    let mut loss = 0.0;
    for j in 0..b {
        let e = q[(j, actions[j])] - targets[j];
        loss += e * e;
    }
    loss / b as f64
}

/// Sum of squared weight-matrix entries (the ridge term matching the
/// decoupled L2 gradient).
pub fn weight_l2(params: &NetworkParams) -> f64 {
    let mut s = 0.0;
    for l in &params.trunk {
        s += l.weights.iter().map(|w| w * w).sum::<f64>();
    }
    s += params.value_head.weights.iter().map(|w| w * w).sum::<f64>();
    s += params
        .advantage_head
        .weights
        .iter()
        .map(|w| w * w)
        .sum::<f64>();
    s
}

/// Backpropagates the batch-mean squared error of the taken-action Q-values
/// against constant targets, plus `weight_decay * w` on every weight matrix
/// (never on biases or batch-norm parameters). Batch statistics are
/// differentiated through.
pub fn backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    targets: &[f64],
    actions: &[usize],
    weight_decay: f64,
) -> Gradients {
    let b = targets.len();
    let n_actions = params.action_count();
    assert_eq!(cache.q.nrows(), b);

    // dL/dQ is nonzero only at the taken action of each row.
    let mut d_q = Array2::<f64>::zeros((b, n_actions));
    for j in 0..b {
        d_q[(j, actions[j])] = 2.0 * (cache.q[(j, actions[j])] - targets[j]) / b as f64;
    }

    // Through the dueling combine.
    let d_v = d_q.sum_axis(Axis(1)); // (B)
    let row_mean = d_q.mean_axis(Axis(1)).unwrap();
    let d_a = &d_q - &row_mean.view().insert_axis(Axis(1));

    let head_input = cache
        .layers
        .last()
        .map(|l| &l.activation)
        .expect("trunk is never empty");
    let d_v2 = d_v.insert_axis(Axis(1)); // (B,1)

    let value_head = LinearGrad {
        weights: d_v2.t().dot(head_input) + &(params.value_head.weights.mapv(|w| w * weight_decay)),
        bias: d_v2.sum_axis(Axis(0)),
    };
    let advantage_head = LinearGrad {
        weights: d_a.t().dot(head_input)
            + &(params.advantage_head.weights.mapv(|w| w * weight_decay)),
        bias: d_a.sum_axis(Axis(0)),
    };

    let mut d_h = d_a.dot(&params.advantage_head.weights) + d_v2.dot(&params.value_head.weights);

    let mut trunk_grads = vec![
        DenseGrad {
            weights: Array2::zeros((0, 0)),
            bias: Array1::zeros(0),
            bn_gamma: Array1::zeros(0),
            bn_beta: Array1::zeros(0),
        };
        params.trunk.len()
    ];
    for (idx, layer) in params.trunk.iter().enumerate().rev() {
        let lc = &cache.layers[idx];
        // ReLU: pass gradient where the activation is strictly positive.
        let d_y = &d_h * &lc.activation.mapv(|h| if h > 0.0 { 1.0 } else { 0.0 });

        let d_gamma = (&d_y * &lc.x_hat).sum_axis(Axis(0));
        let d_beta = d_y.sum_axis(Axis(0));
        let d_x_hat = &d_y * &layer.bn_gamma;

        // Batch-norm backward with batch statistics (biased variance):
        // dz = inv_std/N * (N*dxh - sum(dxh) - xh * sum(dxh*xh))
        let n = b as f64;
        let sum_dxh = d_x_hat.sum_axis(Axis(0));
        let sum_dxh_xh = (&d_x_hat * &lc.x_hat).sum_axis(Axis(0));
        let d_z = ((&d_x_hat * n) - &sum_dxh - &(&lc.x_hat * &sum_dxh_xh)) * &lc.inv_std / n;

        trunk_grads[idx] = DenseGrad {
            weights: d_z.t().dot(&lc.input) + &(layer.weights.mapv(|w| w * weight_decay)),
            bias: d_z.sum_axis(Axis(0)),
            bn_gamma: d_gamma,
            bn_beta: d_beta,
        };
        d_h = d_z.dot(&layer.weights);
    }

    Gradients {
        trunk: trunk_grads,
        value_head,
        advantage_head,
    }
}

/// Adaptive-moment optimizer state: first and second moment accumulators
/// for every trainable parameter plus the shared hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled L2 coefficient, consumed by [`backward`].
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(params: &NetworkParams, lr: f64, weight_decay: f64) -> Self {
        AdamState {
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
        }
    }
}

/// One bias-corrected adaptive-moment update of every trainable parameter.
pub fn adam_step(params: &mut NetworkParams, grads: &Gradients, adam: &mut AdamState) {
    adam.step += 1;
    let t = adam.step as f64;
    let bc1 = 1.0 - adam.beta1.powf(t);
    let bc2 = 1.0 - adam.beta2.powf(t);
    let h = AdamHyper {
        lr: adam.lr,
        beta1: adam.beta1,
        beta2: adam.beta2,
        epsilon: adam.epsilon,
        bc1,
        bc2,
    };

    for ((layer, g), (m, v)) in params
        .trunk
        .iter_mut()
        .zip(&grads.trunk)
        .zip(adam.m.trunk.iter_mut().zip(adam.v.trunk.iter_mut()))
    {
        update_arr2(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights, &h);
        update_arr1(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, &h);
        update_arr1(&mut layer.bn_gamma, &g.bn_gamma, &mut m.bn_gamma, &mut v.bn_gamma, &h);
        update_arr1(&mut layer.bn_beta, &g.bn_beta, &mut m.bn_beta, &mut v.bn_beta, &h);
    }
    update_arr2(
        &mut params.value_head.weights,
        &grads.value_head.weights,
        &mut adam.m.value_head.weights,
        &mut adam.v.value_head.weights,
        &h,
    );
    update_arr1(
        &mut params.value_head.bias,
        &grads.value_head.bias,
        &mut adam.m.value_head.bias,
        &mut adam.v.value_head.bias,
        &h,
    );
    update_arr2(
        &mut params.advantage_head.weights,
        &grads.advantage_head.weights,
        &mut adam.m.advantage_head.weights,
        &mut adam.v.advantage_head.weights,
        &h,
    );
    update_arr1(
        &mut params.advantage_head.bias,
        &grads.advantage_head.bias,
        &mut adam.m.advantage_head.bias,
        &mut adam.v.advantage_head.bias,
        &h,
    );
}

struct AdamHyper {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    bc1: f64,
    bc2: f64,
}

fn adam_scalar(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, h: &AdamHyper) {
    *m = h.beta1 * *m + (1.0 - h.beta1) * g;
    *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
    let m_hat = *m / h.bc1;
    let v_hat = *v / h.bc2;
    *p -= h.lr * m_hat / (v_hat.sqrt() + h.epsilon);
}

fn update_arr1(p: &mut Array1<f64>, g: &Array1<f64>, m: &mut Array1<f64>, v: &mut Array1<f64>, h: &AdamHyper) {
    for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
        adam_scalar(p, g, m, v, h);
    }
}

fn update_arr2(p: &mut Array2<f64>, g: &Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>, h: &AdamHyper) {
    for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
        adam_scalar(p, g, m, v, h);
    }
}

/// Relative-error finite-difference check of [`backward`] on the total
/// objective (taken-action MSE plus the ridge term). Returns the worst
/// relative error across all trainable parameters.
pub fn finite_difference_max_error(
    params: &NetworkParams,
    batch: &Array2<f64>,
    targets: &[f64],
    actions: &[usize],
    weight_decay: f64,
    step: f64,
) -> f64 {
    let arch = params.arch();
    let (_, cache) = params.clone().forward_train(batch);
    let analytic = backward(params, &cache, targets, actions, weight_decay).to_flat();

    // Trainable parameters are a sub-slice pattern of the full flat layout;
    // rebuild through the full vector and index trainable positions.
    let full = params.to_flat();
    let trainable_idx = trainable_indices(&arch);
    assert_eq!(trainable_idx.len(), analytic.len());

    let loss_at = |full_flat: &[f64]| -> f64 {
        let mut p = NetworkParams::from_flat(&arch, full_flat).unwrap();
        let (q, _) = p.forward_train(batch);
        mse_loss(&q, targets, actions) + 0.5 * weight_decay * weight_l2(&p)
    };

    let mut worst = 0.0f64;
    for (k, &idx) in trainable_idx.iter().enumerate() {
        let mut plus = full.clone();
        plus[idx] += step;
        let mut minus = full.clone();
        minus[idx] -= step;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
        let a = analytic[k];
        let denom = a.abs().max(numeric.abs());
        let err = if denom < 1e-6 {
            (a - numeric).abs()
        } else {
            (a - numeric).abs() / denom
        };
        worst = worst.max(err);
    }
    worst
}

/// Flat-layout indices of the trainable parameters (skipping running stats).
fn trainable_indices(arch: &ArchSpec) -> Vec<usize> {
    let mut idx = Vec::new();
    let mut pos = 0;
    let mut fan_in = arch.state_dim;
    for &w in &arch.widths {
        for _ in 0..w * fan_in + w + w + w {
            idx.push(pos);
            pos += 1;
        }
        pos += 2 * w; // running mean + running var
        fan_in = w;
    }
    for _ in 0..fan_in + 1 + arch.action_count * fan_in + arch.action_count {
        idx.push(pos);
        pos += 1;
    }
    idx
}
