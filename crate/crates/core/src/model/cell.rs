use super::params::LstmLayerParams;
use crate::error::{contract, Result};
use crate::numerics::{sigmoid_scalar, tanh_scalar};

/// Intermediates of one cell step, gate values already activated.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache {
    pub input: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Pre-activations in gate order `[i, f, g, o]`, length `4H`.
    pub preact: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One LSTM step for a single sequence.
///
/// ```text
/// i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
/// g = tanh(W_g x + U_g h + b_g) o = σ(W_o x + U_o h + b_o)
/// c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
/// ```
pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &LstmLayerParams,
) -> Result<(Vec<f64>, Vec<f64>, CellCache)> {
    let hidden = params.hidden();
    if x.len() != params.input_dim() || h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(contract(format!(
            "cell expects input {} and state {hidden}, got input {}, h {}, c {}",
            params.input_dim(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let preact: Vec<f64> = (0..4 * hidden)
        .map(|r| {
            let wx: f64 = params.w.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
            let uh: f64 = params.u.row(r).iter().zip(h_prev).map(|(a, b)| a * b).sum();
            wx + uh + params.b[r]
        })
        .collect();
    let slice = |k: usize| &preact[k * hidden..(k + 1) * hidden];
    let i: Vec<f64> = slice(0).iter().map(|&z| sigmoid_scalar(z)).collect();
    let f: Vec<f64> = slice(1).iter().map(|&z| sigmoid_scalar(z)).collect();
    let g: Vec<f64> = slice(2).iter().map(|&z| tanh_scalar(z)).collect();
    let o: Vec<f64> = slice(3).iter().map(|&z| sigmoid_scalar(z)).collect();
    let c: Vec<f64> = (0..hidden).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|&v| tanh_scalar(v)).collect();
    let h: Vec<f64> = (0..hidden).map(|j| o[j] * tanh_c[j]).collect();
    let cache = CellCache {
        input: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        preact,
        i,
        f,
        g,
        o,
        tanh_c,
    };
    Ok((h, c, cache))
}
