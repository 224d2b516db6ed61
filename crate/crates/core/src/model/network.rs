//! Batched forward pass and backpropagation through time.
//!
//! Activations are stored time-major: for a batch of `B` sequences the value
//! of unit `j` for sequence `b` at step `t` lives at `(t * B + b) * width + j`.
//! That layout turns the input projection of a whole layer and every weight
//! gradient into a single matrix product over `T * B` rows.

use super::config::ModelConfig;
use super::params::{LstmLayerParams, ModelParams};
use crate::error::{contract, Result};
use crate::numerics::loss::PROB_FLOOR;
use crate::numerics::{dropout_mask, gemm, sigmoid_scalar, softmax_into, tanh_scalar, Array2, Layout, Rng};

/// Whether a forward pass samples dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Stored activations of one layer over the whole window.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input_dim: usize,
    pub hidden: usize,
    /// Layer input (after ReLU or dropout where applicable), `T x B x D`.
    pub input: Vec<f64>,
    /// Activated gates `[i, f, g, o]`, `T x B x 4H`.
    pub gates: Vec<f64>,
    /// Cell states with the zero initial state in slot 0, `(T+1) x B x H`.
    pub cell: Vec<f64>,
    /// `tanh(c_t)`, `T x B x H`.
    pub tanh_cell: Vec<f64>,
    /// Hidden states with the zero initial state in slot 0, `(T+1) x B x H`.
    pub hidden_states: Vec<f64>,
}

impl LayerCache {
    /// Hidden state sequence `h_1..h_T`, `T x B x H`.
    pub fn outputs(&self) -> &[f64] {
        let initial = self.hidden_states.len() - self.tanh_cell.len();
        &self.hidden_states[initial..]
    }
}

/// Everything a backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub batch: usize,
    pub steps: usize,
    pub layers: Vec<LayerCache>,
    /// Inverted-dropout mask applied to the output of `dropout_after`.
    pub dropout_mask: Option<Vec<f64>>,
    pub dropout_after: Option<usize>,
    /// Softmax outputs, `B x C`.
    pub probs: Vec<f64>,
    pub num_classes: usize,
}

impl ForwardCache {
    pub fn probabilities(&self, b: usize) -> &[f64] {
        &self.probs[b * self.num_classes..(b + 1) * self.num_classes]
    }
}

fn check_window(window: &Array2, config: &ModelConfig) -> Result<()> {
    if window.shape() != (config.window_len, config.input_dim) {
        return Err(contract(format!(
            "window is {}x{}, model expects {}x{}",
            window.rows(),
            window.cols(),
            config.window_len,
            config.input_dim
        )));
    }
    Ok(())
}

/// Classifies one window. Returns the class probabilities and the cache for
/// [`model_backward`].
pub fn model_forward(
    window: &Array2,
    params: &ModelParams,
    config: &ModelConfig,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Vec<f64>, ForwardCache)> {
    let cache = forward_batch(&[window], params, config, mode, rng)?;
    Ok((cache.probs.clone(), cache))
}

/// Forward pass over a batch of windows; dropout masks come from `rng` in
/// training mode.
pub fn forward_batch(
    windows: &[&Array2],
    params: &ModelParams,
    config: &ModelConfig,
    mode: Mode,
    rng: &mut Rng,
) -> Result<ForwardCache> {
    let mask = match (mode, config.dropout_after()) {
        (Mode::Train, Some(layer)) if config.dropout_rate > 0.0 => {
            let len = config.window_len * windows.len() * config.hidden_sizes[layer];
            Some(dropout_mask(rng, len, config.dropout_rate)?)
        }
        _ => None,
    };
    forward_with_mask(windows, params, config, mask)
}

/// Forward pass with an explicit dropout mask (or none). Replaying a
/// training pass with its recorded mask reproduces it exactly.
pub fn forward_with_mask(
    windows: &[&Array2],
    params: &ModelParams,
    config: &ModelConfig,
    mask: Option<Vec<f64>>,
) -> Result<ForwardCache> {
    config.validate()?;
    params.check_shapes(config)?;
    if windows.is_empty() {
        return Err(contract("forward pass needs at least one window"));
    }
    for w in windows {
        check_window(w, config)?;
    }
    let batch = windows.len();
    let steps = config.window_len;
    let dropout_after = config.dropout_after();
    if let (Some(m), Some(layer)) = (&mask, dropout_after) {
        if m.len() != steps * batch * config.hidden_sizes[layer] {
            return Err(contract("dropout mask does not match the batch shape"));
        }
    }

    let d0 = config.input_dim;
    let mut input = vec![0.0; steps * batch * d0];
    for (b, w) in windows.iter().enumerate() {
        for t in 0..steps {
            let dst = &mut input[(t * batch + b) * d0..(t * batch + b + 1) * d0];
            dst.copy_from_slice(w.row(t));
            if config.input_relu {
                for x in dst.iter_mut() {
                    *x = x.max(0.0);
                }
            }
        }
    }

    let mut layers = Vec::with_capacity(params.layers.len());
    for (index, layer_params) in params.layers.iter().enumerate() {
        let cache = layer_forward(input, layer_params, steps, batch);
        let mut next: Vec<f64> = cache.outputs().to_vec();
        if dropout_after == Some(index) {
            if let Some(m) = &mask {
                for (x, k) in next.iter_mut().zip(m) {
                    *x *= k;
                }
            }
        }
        layers.push(cache);
        input = next;
    }

    let last = layers.last().expect("at least one layer");
    let hl = last.hidden;
    let h_final = &last.hidden_states[steps * batch * hl..];
    let classes = config.num_classes;
    let mut logits = vec![0.0; batch * classes];
    gemm(
        batch,
        hl,
        classes,
        1.0,
        h_final,
        Layout::Normal,
        params.dense_w.as_slice(),
        Layout::Transposed,
        0.0,
        &mut logits,
    );
    let mut probs = vec![0.0; batch * classes];
    for b in 0..batch {
        let row = &mut logits[b * classes..(b + 1) * classes];
        for (z, bias) in row.iter_mut().zip(&params.dense_b) {
            *z += bias;
        }
        softmax_into(row, &mut probs[b * classes..(b + 1) * classes]);
    }

    Ok(ForwardCache {
        batch,
        steps,
        layers,
        dropout_mask: mask,
        dropout_after,
        probs,
        num_classes: classes,
    })
}

fn layer_forward(input: Vec<f64>, params: &LstmLayerParams, steps: usize, batch: usize) -> LayerCache {
    let d = params.input_dim();
    let h = params.hidden();
    let g4 = 4 * h;
    let bh = batch * h;

    let mut gates = vec![0.0; steps * batch * g4];
    gemm(
        steps * batch,
        d,
        g4,
        1.0,
        &input,
        Layout::Normal,
        params.w.as_slice(),
        Layout::Transposed,
        0.0,
        &mut gates,
    );
    let mut cell = vec![0.0; (steps + 1) * bh];
    let mut hidden_states = vec![0.0; (steps + 1) * bh];
    let mut tanh_cell = vec![0.0; steps * bh];

    for t in 0..steps {
        let z = &mut gates[t * batch * g4..(t + 1) * batch * g4];
        let (h_hist, h_rest) = hidden_states.split_at_mut((t + 1) * bh);
        let h_prev = &h_hist[t * bh..];
        if t > 0 {
            gemm(
                batch,
                h,
                g4,
                1.0,
                h_prev,
                Layout::Normal,
                params.u.as_slice(),
                Layout::Transposed,
                1.0,
                z,
            );
        }
        let (c_hist, c_rest) = cell.split_at_mut((t + 1) * bh);
        let c_prev = &c_hist[t * bh..];
        let c_next = &mut c_rest[..bh];
        let h_next = &mut h_rest[..bh];
        let tc = &mut tanh_cell[t * bh..(t + 1) * bh];
        for b in 0..batch {
            let zb = &mut z[b * g4..(b + 1) * g4];
            for j in 0..h {
                let i = sigmoid_scalar(zb[j] + params.b[j]);
                let f = sigmoid_scalar(zb[h + j] + params.b[h + j]);
                let g = tanh_scalar(zb[2 * h + j] + params.b[2 * h + j]);
                let o = sigmoid_scalar(zb[3 * h + j] + params.b[3 * h + j]);
                zb[j] = i;
                zb[h + j] = f;
                zb[2 * h + j] = g;
                zb[3 * h + j] = o;
                let k = b * h + j;
                let c = f * c_prev[k] + i * g;
                let th = tanh_scalar(c);
                c_next[k] = c;
                tc[k] = th;
                h_next[k] = o * th;
            }
        }
    }

    LayerCache {
        input_dim: d,
        hidden: h,
        input,
        gates,
        cell,
        tanh_cell,
        hidden_states,
    }
}

/// Summed cross-entropy over the batch together with its gradients.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub grads: ModelParams,
    pub loss_sum: f64,
}

/// Backpropagation through time for a cached forward pass.
///
/// Returns the gradient of the summed categorical cross-entropy of the batch
/// (one target class per window) with respect to every parameter array.
pub fn model_backward(
    cache: &ForwardCache,
    targets: &[usize],
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Gradients> {
    params.check_shapes(config)?;
    if targets.len() != cache.batch {
        return Err(contract(format!(
            "{} targets for a batch of {}",
            targets.len(),
            cache.batch
        )));
    }
    if cache.layers.len() != config.hidden_sizes.len()
        || cache.num_classes != config.num_classes
        || cache.steps != config.window_len
        || cache
            .layers
            .iter()
            .zip(&config.hidden_sizes)
            .any(|(l, &h)| l.hidden != h)
        || cache.dropout_after != config.dropout_after()
    {
        return Err(contract("forward cache does not match the model config"));
    }
    let batch = cache.batch;
    let steps = cache.steps;
    let classes = cache.num_classes;

    let mut dlogits = cache.probs.clone();
    let mut loss_sum = 0.0;
    for (b, &target) in targets.iter().enumerate() {
        if target >= classes {
            return Err(contract(format!(
                "target class {target} out of range for {classes} classes"
            )));
        }
        let p = cache.probs[b * classes + target];
        loss_sum -= p.max(PROB_FLOOR).ln();
        dlogits[b * classes + target] -= 1.0;
    }

    let mut grads = ModelParams::zeros(config);
    let last = cache.layers.last().expect("validated cache has layers");
    let hl = last.hidden;
    let h_final = &last.hidden_states[steps * batch * hl..];
    gemm(
        classes,
        batch,
        hl,
        1.0,
        &dlogits,
        Layout::Transposed,
        h_final,
        Layout::Normal,
        0.0,
        grads.dense_w.as_mut_slice(),
    );
    for b in 0..batch {
        for c in 0..classes {
            grads.dense_b[c] += dlogits[b * classes + c];
        }
    }

    let mut d_out = vec![0.0; steps * batch * hl];
    gemm(
        batch,
        classes,
        hl,
        1.0,
        &dlogits,
        Layout::Normal,
        params.dense_w.as_slice(),
        Layout::Normal,
        0.0,
        &mut d_out[(steps - 1) * batch * hl..],
    );

    for index in (0..cache.layers.len()).rev() {
        let need_input_grad = index > 0;
        let d_in = layer_backward(
            &cache.layers[index],
            &params.layers[index],
            &d_out,
            steps,
            batch,
            &mut grads.layers[index],
            need_input_grad,
        );
        if let Some(mut d_in) = d_in {
            if cache.dropout_after == Some(index - 1) {
                if let Some(mask) = &cache.dropout_mask {
                    for (g, k) in d_in.iter_mut().zip(mask) {
                        *g *= k;
                    }
                }
            }
            d_out = d_in;
        }
    }

    Ok(Gradients { grads, loss_sum })
}

fn layer_backward(
    cache: &LayerCache,
    params: &LstmLayerParams,
    d_out: &[f64],
    steps: usize,
    batch: usize,
    grads: &mut LstmLayerParams,
    need_input_grad: bool,
) -> Option<Vec<f64>> {
    let h = cache.hidden;
    let d = cache.input_dim;
    let g4 = 4 * h;
    let bh = batch * h;

    let mut dz = vec![0.0; steps * batch * g4];
    let mut dh_next = vec![0.0; bh];
    let mut dc_next = vec![0.0; bh];

    for t in (0..steps).rev() {
        let gates = &cache.gates[t * batch * g4..(t + 1) * batch * g4];
        let tc = &cache.tanh_cell[t * bh..(t + 1) * bh];
        let c_prev = &cache.cell[t * bh..(t + 1) * bh];
        let dy = &d_out[t * bh..(t + 1) * bh];
        let dzt = &mut dz[t * batch * g4..(t + 1) * batch * g4];
        for b in 0..batch {
            let gb = &gates[b * g4..(b + 1) * g4];
            let db = &mut dzt[b * g4..(b + 1) * g4];
            for j in 0..h {
                let k = b * h + j;
                let (i, f, g, o) = (gb[j], gb[h + j], gb[2 * h + j], gb[3 * h + j]);
                let dh = dy[k] + dh_next[k];
                let th = tc[k];
                let d_o = dh * th;
                let dc = dc_next[k] + dh * o * (1.0 - th * th);
                db[j] = dc * g * i * (1.0 - i);
                db[h + j] = dc * c_prev[k] * f * (1.0 - f);
                db[2 * h + j] = dc * i * (1.0 - g * g);
                db[3 * h + j] = d_o * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
        }
        if t > 0 {
            gemm(
                batch,
                g4,
                h,
                1.0,
                dzt,
                Layout::Normal,
                params.u.as_slice(),
                Layout::Normal,
                0.0,
                &mut dh_next,
            );
        }
    }

    let rows = steps * batch;
    gemm(
        g4,
        rows,
        d,
        1.0,
        &dz,
        Layout::Transposed,
        &cache.input,
        Layout::Normal,
        0.0,
        grads.w.as_mut_slice(),
    );
    gemm(
        g4,
        rows,
        h,
        1.0,
        &dz,
        Layout::Transposed,
        &cache.hidden_states[..rows * h],
        Layout::Normal,
        0.0,
        grads.u.as_mut_slice(),
    );
    for row in dz.chunks_exact(g4) {
        for (acc, v) in grads.b.iter_mut().zip(row) {
            *acc += v;
        }
    }

    need_input_grad.then(|| {
        let mut d_in = vec![0.0; rows * d];
        gemm(
            rows,
            g4,
            d,
            1.0,
            &dz,
            Layout::Normal,
            params.w.as_slice(),
            Layout::Normal,
            0.0,
            &mut d_in,
        );
        d_in
    })
}

/// Summed loss of a batch in inference mode (no dropout).
pub fn batch_loss(windows: &[&Array2], targets: &[usize], params: &ModelParams, config: &ModelConfig) -> Result<f64> {
    let cache = forward_with_mask(windows, params, config, None)?;
    let mut loss = 0.0;
    for (b, &t) in targets.iter().enumerate() {
        loss += crate::numerics::cross_entropy(cache.probabilities(b), t)?;
    }
    Ok(loss)
}
