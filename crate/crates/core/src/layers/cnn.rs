use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, ParamId, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CnnActivation {
    Relu,
    Tanh,
    Identity,
}

impl From<CnnActivation> for Activation {
    fn from(a: CnnActivation) -> Self {
        match a {
            CnnActivation::Relu => Activation::Relu,
            CnnActivation::Tanh => Activation::Tanh,
            CnnActivation::Identity => Activation::Identity,
        }
    }
}

/// Multi-width convolutional sentence encoder with max pooling over time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnnEncoder {
    pub input_dim: usize,
    pub widths: Vec<usize>,
    pub filters: usize,
    pub weights: Vec<ParamId>,
    pub biases: Vec<ParamId>,
    pub activation: CnnActivation,
}

impl CnnEncoder {
    pub fn output_dim(&self) -> usize {
        self.filters * self.widths.len()
    }

    pub fn max_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(1)
    }

    /// Right-pads with zero rows up to the widest filter.
    pub fn pad<S: Scalar>(&self, tape: &mut Tape<'_, S>, seq: Var) -> Result<Var> {
        let t = tape.shape(seq)[0];
        let need = self.max_width();
        if t >= need {
            return Ok(seq);
        }
        let zeros = tape.zeros(vec![need - t, self.input_dim]);
        tape.concat(&[seq, zeros], 0)
    }

    /// Convolution outputs per width, activation applied, before pooling.
    pub fn conv_bank<S: Scalar>(&self, tape: &mut Tape<'_, S>, seq: Var) -> Result<Vec<Var>> {
        let s = tape.shape(seq).to_vec();
        if s.len() != 2 || s[1] != self.input_dim {
            return Err(Error::Dimension { op: "cnn_encode", lhs: s, rhs: vec![self.input_dim] });
        }
        let seq = self.pad(tape, seq)?;
        let mut maps = Vec::with_capacity(self.widths.len());
        for (k, &w) in self.widths.iter().enumerate() {
            let weight = tape.param(self.weights[k]);
            let bias = tape.param(self.biases[k]);
            let conv = tape.conv1d(seq, weight, bias, w)?;
            maps.push(tape.activation(self.activation.into(), conv));
        }
        Ok(maps)
    }

    pub fn encode<S: Scalar>(&self, tape: &mut Tape<'_, S>, seq: Var) -> Result<Var> {
        let maps = self.conv_bank(tape, seq)?;
        let pooled = maps
            .into_iter()
            .map(|m| tape.max_over_time(m))
            .collect::<Result<Vec<_>>>()?;
        tape.concat(&pooled, 0)
    }
}
