use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamId, ParamStore, Tensor};
use crate::error::Result;
use crate::layers::{BlstmEncoder, CnnActivation, CnnEncoder, DenseLayer, EmbeddingTable, LstmCell};
use crate::scalar::Scalar;

/// Half-width of the Glorot uniform range for a `fan_in x fan_out` matrix.
pub fn glorot_range(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Registers freshly initialized layer parameters in a store, drawing from one
/// seeded generator so registration order alone fixes every initial value.
pub struct LayerBuilder<'a, S> {
    store: &'a mut ParamStore<S>,
    rng: &'a mut ChaCha8Rng,
}

impl<'a, S: Scalar> LayerBuilder<'a, S> {
    pub fn new(store: &'a mut ParamStore<S>, rng: &'a mut ChaCha8Rng) -> Self {
        LayerBuilder { store, rng }
    }

    pub fn uniform(&mut self, name: &str, rows: usize, cols: usize, range: f64) -> Result<ParamId> {
        let values = (0..rows * cols)
            .map(|_| S::of(self.rng.gen_range(-range..=range)))
            .collect();
        self.store.register(name, Tensor::new(vec![rows, cols], values)?)
    }

    pub fn constant(&mut self, name: &str, len: usize, value: f64) -> Result<ParamId> {
        self.store
            .register(name, Tensor::new(vec![len], vec![S::of(value); len])?)
    }

    pub fn dense(&mut self, name: &str, input: usize, output: usize) -> Result<DenseLayer> {
        let weight = self.uniform(&format!("{name}.W"), input, output, glorot_range(input, output))?;
        let bias = self.constant(&format!("{name}.b"), output, 0.0)?;
        Ok(DenseLayer { weight, bias, input, output })
    }

    pub fn lstm_cell(&mut self, name: &str, input: usize, hidden: usize) -> Result<LstmCell> {
        let rows = input + hidden;
        let range = glorot_range(rows, hidden);
        let mut weights = [ParamId(0); 4];
        let mut biases = [ParamId(0); 4];
        for (g, gate) in ["i", "f", "o", "c"].iter().enumerate() {
            weights[g] = self.uniform(&format!("{name}.W_{gate}"), rows, hidden, range)?;
        }
        for (g, gate) in ["i", "f", "o", "c"].iter().enumerate() {
            let init = if *gate == "f" { LstmCell::FORGET_BIAS } else { 0.0 };
            biases[g] = self.constant(&format!("{name}.b_{gate}"), hidden, init)?;
        }
        Ok(LstmCell { input_dim: input, hidden_dim: hidden, weights, biases })
    }

    pub fn blstm(&mut self, name: &str, input: usize, hidden: usize) -> Result<BlstmEncoder> {
        let forward = self.lstm_cell(&format!("{name}.fwd"), input, hidden)?;
        let backward = self.lstm_cell(&format!("{name}.bwd"), input, hidden)?;
        Ok(BlstmEncoder { forward, backward })
    }

    pub fn cnn(
        &mut self,
        name: &str,
        input: usize,
        widths: &[usize],
        filters: usize,
        activation: CnnActivation,
    ) -> Result<CnnEncoder> {
        let mut weights = Vec::with_capacity(widths.len());
        let mut biases = Vec::with_capacity(widths.len());
        for &w in widths {
            let rows = w * input;
            weights.push(self.uniform(&format!("{name}.w{w}.W"), rows, filters, glorot_range(rows, filters))?);
            biases.push(self.constant(&format!("{name}.w{w}.b"), filters, 0.0)?);
        }
        Ok(CnnEncoder {
            input_dim: input,
            widths: widths.to_vec(),
            filters,
            weights,
            biases,
            activation,
        })
    }

    /// Embedding table with row 0 fixed at zero for padding.
    pub fn embedding(&mut self, name: &str, vocab: usize, dim: usize, trainable: bool) -> Result<EmbeddingTable> {
        let range = glorot_range(vocab, dim);
        let values = (0..vocab * dim)
            .map(|i| {
                let x = self.rng.gen_range(-range..=range);
                if i < dim { S::zero() } else { S::of(x) }
            })
            .collect();
        let table = self.store.register(name, Tensor::new(vec![vocab, dim], values)?)?;
        Ok(EmbeddingTable { table, vocab_size: vocab, dim, trainable })
    }
}
