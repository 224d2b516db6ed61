use super::config::ModelConfig;
use crate::error::{contract, Result};
use crate::numerics::{Array2, Rng};

/// Weights of one LSTM layer with hidden size `H` and input size `D`.
///
/// Gate rows are stacked in the fixed order input, forget, cell candidate,
/// output: rows `0..H` feed the input gate, `H..2H` the forget gate, `2H..3H`
/// the candidate and `3H..4H` the output gate.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// Input-to-gates weights, `4H x D`.
    pub w: Array2,
    /// Recurrent weights, `4H x H`.
    pub u: Array2,
    /// Gate biases, length `4H`.
    pub b: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w: Array2::zeros(4 * hidden, input_dim),
            u: Array2::zeros(4 * hidden, hidden),
            b: vec![0.0; 4 * hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }
}

/// Every learnable array of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LstmLayerParams>,
    /// `num_classes x H_last`.
    pub dense_w: Array2,
    pub dense_b: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let layers = config
            .hidden_sizes
            .iter()
            .enumerate()
            .map(|(i, &h)| LstmLayerParams::zeros(config.layer_input_dim(i), h))
            .collect();
        Self {
            layers,
            dense_w: Array2::zeros(config.num_classes, config.last_hidden()),
            dense_b: vec![0.0; config.num_classes],
        }
    }

    /// Arrays in checkpoint order: per layer `W, U, b`, then dense `W, b`.
    pub fn arrays(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for layer in &self.layers {
            out.push(layer.w.as_slice());
            out.push(layer.u.as_slice());
            out.push(layer.b.as_slice());
        }
        out.push(self.dense_w.as_slice());
        out.push(self.dense_b.as_slice());
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for layer in &mut self.layers {
            out.push(layer.w.as_mut_slice());
            out.push(layer.u.as_mut_slice());
            out.push(layer.b.as_mut_slice());
        }
        out.push(self.dense_w.as_mut_slice());
        out.push(self.dense_b.as_mut_slice());
        out
    }

    /// Array names and `(rows, cols)` shapes in checkpoint order; vectors
    /// report one column.
    pub fn layout(config: &ModelConfig) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        for (i, &h) in config.hidden_sizes.iter().enumerate() {
            let d = config.layer_input_dim(i);
            out.push((format!("layer{i}.W"), (4 * h, d)));
            out.push((format!("layer{i}.U"), (4 * h, h)));
            out.push((format!("layer{i}.b"), (4 * h, 1)));
        }
        out.push(("dense.W".to_string(), (config.num_classes, config.last_hidden())));
        out.push(("dense.b".to_string(), (config.num_classes, 1)));
        out
    }

    pub fn num_params(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.arrays().concat()
    }

    pub fn from_flat(config: &ModelConfig, flat: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(config);
        if flat.len() != params.num_params() {
            return Err(contract(format!(
                "flat parameter vector has {} entries, model needs {}",
                flat.len(),
                params.num_params()
            )));
        }
        let mut offset = 0;
        for arr in params.arrays_mut() {
            let n = arr.len();
            arr.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(params)
    }

    /// Multiplies every entry by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for arr in self.arrays_mut() {
            for x in arr {
                *x *= factor;
            }
        }
    }

    /// Checks that the arrays are shaped for `config`.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = Self::layout(config);
        let found = self.arrays();
        if expected.len() != found.len() {
            return Err(contract(format!(
                "parameters hold {} arrays, config implies {}",
                found.len(),
                expected.len()
            )));
        }
        for ((name, (r, c)), arr) in expected.iter().zip(found) {
            if arr.len() != r * c {
                return Err(contract(format!(
                    "{name} has {} entries, config implies {r}x{c}",
                    arr.len()
                )));
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.w.cols() != config.layer_input_dim(i) || layer.u.cols() != config.hidden_sizes[i] {
                return Err(contract(format!("layer {i} shape disagrees with config")));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.iter().all(|x| x.is_finite()))
    }
}

/// Draws initial parameters.
///
/// Input weights are uniform in `±1/sqrt(D)` for the layer's input width `D`,
/// recurrent weights in `±1/sqrt(H)`, dense weights in `±1/sqrt(H_last)`.
/// Biases start at zero except the forget-gate slice, which starts at 1.
pub fn init_params(config: &ModelConfig, rng: &mut Rng) -> Result<ModelParams> {
    config.validate()?;
    let mut params = ModelParams::zeros(config);
    for layer in &mut params.layers {
        let h = layer.hidden();
        let wb = 1.0 / (layer.input_dim() as f64).sqrt();
        for x in layer.w.as_mut_slice() {
            *x = rng.uniform(-wb, wb);
        }
        let ub = 1.0 / (h as f64).sqrt();
        for x in layer.u.as_mut_slice() {
            *x = rng.uniform(-ub, ub);
        }
        layer.b[h..2 * h].fill(1.0);
    }
    let db = 1.0 / (config.last_hidden() as f64).sqrt();
    for x in params.dense_w.as_mut_slice() {
        *x = rng.uniform(-db, db);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let cfg = ModelConfig::variant_b();
        let a = init_params(&cfg, &mut Rng::new(5)).unwrap();
        let b = init_params(&cfg, &mut Rng::new(5)).unwrap();
        let bits = |p: &ModelParams| p.to_flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn variant_a_first_layer_shape() {
        let p = init_params(&ModelConfig::variant_a(), &mut Rng::new(1)).unwrap();
        assert_eq!(p.layers[0].w.shape(), (128, 6));
        assert_eq!(p.layers[0].u.shape(), (128, 32));
        assert_eq!(p.layers[1].w.shape(), (128, 32));
        assert_eq!(p.dense_w.shape(), (10, 32));
    }

    #[test]
    fn forget_bias_is_one_and_others_zero() {
        let p = init_params(&ModelConfig::variant_b(), &mut Rng::new(2)).unwrap();
        for layer in &p.layers {
            let h = layer.hidden();
            assert!(layer.b[h..2 * h].iter().all(|&x| x == 1.0));
            assert!(layer.b[..h].iter().chain(&layer.b[2 * h..]).all(|&x| x == 0.0));
        }
        assert!(p.dense_b.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn weights_within_bounds() {
        let cfg = ModelConfig::variant_a();
        let p = init_params(&cfg, &mut Rng::new(3)).unwrap();
        let bound = 1.0 / 6f64.sqrt();
        assert!(p.layers[0].w.as_slice().iter().all(|x| x.abs() <= bound));
        let bound = 1.0 / 32f64.sqrt();
        assert!(p.layers[1].u.as_slice().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn flat_round_trip() {
        let cfg = ModelConfig::variant_a();
        let p = init_params(&cfg, &mut Rng::new(4)).unwrap();
        let q = ModelParams::from_flat(&cfg, &p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(ModelParams::from_flat(&cfg, &[0.0; 3]).is_err());
    }
}
