use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::label::GestureLabel;

/// Which of the two published architectures a [`ModelConfig`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Input ReLU, two stacked LSTMs of width 32, dense softmax head.
    A,
    /// Two LSTMs of width 64, dropout, a third LSTM of width 64, dense
    /// softmax head.
    B,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::A => "A",
            Variant::B => "B",
        })
    }
}

impl FromStr for Variant {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Variant::A),
            "B" | "b" => Ok(Variant::B),
            other => Err(contract(format!("unknown model variant {other:?} (expected A or B)"))),
        }
    }
}

/// Architecture description; shapes every array in
/// [`ModelParams`](super::ModelParams).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub input_relu: bool,
    pub window_len: usize,
}

pub const DEFAULT_WINDOW_LEN: usize = 250;
pub const SENSOR_CHANNELS: usize = 6;
pub const DEFAULT_DROPOUT: f64 = 0.5;

impl ModelConfig {
    pub fn variant_a() -> Self {
        Self {
            variant: Variant::A,
            input_dim: SENSOR_CHANNELS,
            hidden_sizes: vec![32, 32],
            num_classes: GestureLabel::COUNT,
            dropout_rate: DEFAULT_DROPOUT,
            input_relu: true,
            window_len: DEFAULT_WINDOW_LEN,
        }
    }

    pub fn variant_b() -> Self {
        Self {
            variant: Variant::B,
            input_dim: SENSOR_CHANNELS,
            hidden_sizes: vec![64, 64, 64],
            num_classes: GestureLabel::COUNT,
            dropout_rate: DEFAULT_DROPOUT,
            input_relu: false,
            window_len: DEFAULT_WINDOW_LEN,
        }
    }

    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::A => Self::variant_a(),
            Variant::B => Self::variant_b(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() {
            return Err(contract("model needs at least one LSTM layer"));
        }
        if self.input_dim == 0 || self.num_classes == 0 || self.window_len == 0 {
            return Err(contract("model dimensions must be at least 1"));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(contract("hidden sizes must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(contract(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    /// Index of the LSTM layer whose output sequence passes through dropout.
    ///
    /// Variant B drops out before its final LSTM layer; variant A has no
    /// dropout layer.
    pub fn dropout_after(&self) -> Option<usize> {
        match self.variant {
            Variant::A => None,
            Variant::B if self.hidden_sizes.len() >= 2 => Some(self.hidden_sizes.len() - 2),
            Variant::B => None,
        }
    }

    /// Input width of layer `index`.
    pub fn layer_input_dim(&self, index: usize) -> usize {
        if index == 0 {
            self.input_dim
        } else {
            self.hidden_sizes[index - 1]
        }
    }

    pub fn last_hidden(&self) -> usize {
        *self.hidden_sizes.last().expect("validated config has layers")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_match_published_shapes() {
        let a = ModelConfig::variant_a();
        assert_eq!(a.hidden_sizes, vec![32, 32]);
        assert!(a.input_relu);
        assert_eq!(a.dropout_after(), None);
        let b = ModelConfig::variant_b();
        assert_eq!(b.hidden_sizes, vec![64, 64, 64]);
        assert_eq!(b.dropout_after(), Some(1));
        assert!(a.validate().is_ok() && b.validate().is_ok());
    }

    #[test]
    fn two_layer_reading_of_b_drops_after_first() {
        let mut b = ModelConfig::variant_b();
        b.hidden_sizes = vec![64, 64];
        assert_eq!(b.dropout_after(), Some(0));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ModelConfig::variant_a();
        c.hidden_sizes.clear();
        assert!(c.validate().is_err());
        let mut c = ModelConfig::variant_a();
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::variant_b();
        c.hidden_sizes[1] = 0;
        assert!(c.validate().is_err());
        assert!("C".parse::<Variant>().is_err());
    }
}
