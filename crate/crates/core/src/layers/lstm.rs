use crate::autodiff::{ParamId, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const INPUT: usize = 0;
const FORGET: usize = 1;
const OUTPUT: usize = 2;
const CANDIDATE: usize = 3;

/// One LSTM cell with separate input, forget, output and candidate gates,
/// each reading the concatenation `[x; h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Gate weights in i, f, o, c order, each `[(input + hidden) x hidden]`.
    pub weights: [ParamId; 4],
    pub biases: [ParamId; 4],
}

impl LstmCell {
    pub const FORGET_BIAS: f64 = 1.0;

    pub fn step<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        x: Var,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<(Var, Var)> {
        let (xs, hs, cs) = (tape.shape(x).to_vec(), tape.shape(h_prev).to_vec(), tape.shape(c_prev).to_vec());
        if xs != [self.input_dim] || hs != [self.hidden_dim] || cs != [self.hidden_dim] {
            return Err(Error::Dimension {
                op: "lstm_step",
                lhs: vec![self.input_dim, self.hidden_dim],
                rhs: [xs, hs, cs].concat(),
            });
        }
        let xh = tape.concat(&[x, h_prev], 0)?;
        let mut pre = [xh; 4];
        for (g, slot) in pre.iter_mut().enumerate() {
            let w = tape.param(self.weights[g]);
            let b = tape.param(self.biases[g]);
            let z = tape.matmul(xh, w)?;
            *slot = tape.add(z, b)?;
        }
        let i = tape.sigmoid(pre[INPUT]);
        let f = tape.sigmoid(pre[FORGET]);
        let o = tape.sigmoid(pre[OUTPUT]);
        let candidate = tape.tanh(pre[CANDIDATE]);
        let kept = tape.mul(f, c_prev)?;
        let written = tape.mul(i, candidate)?;
        let c = tape.add(kept, written)?;
        let squashed = tape.tanh(c);
        let h = tape.mul(o, squashed)?;
        Ok((h, c))
    }

    /// Runs the cell over `inputs` in the given order from `(h0, 0)` and
    /// returns the final hidden state.
    pub fn run<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        inputs: impl IntoIterator<Item = Var>,
        h0: Option<Var>,
    ) -> Result<Var> {
        let mut h = match h0 {
            Some(h) => h,
            None => tape.zeros(vec![self.hidden_dim]),
        };
        let mut c = tape.zeros(vec![self.hidden_dim]);
        for x in inputs {
            (h, c) = self.step(tape, x, h, c)?;
        }
        Ok(h)
    }
}

/// Bidirectional encoder summarized by the concatenated final states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlstmEncoder {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

impl BlstmEncoder {
    pub fn output_dim(&self) -> usize {
        self.forward.hidden_dim + self.backward.hidden_dim
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim
    }

    /// Encodes a list of rank-1 step inputs. `h0_fwd`/`h0_bwd` seed the initial
    /// hidden state of each direction; cell states always start at zero.
    pub fn encode_steps<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        steps: &[Var],
        h0_fwd: Option<Var>,
        h0_bwd: Option<Var>,
    ) -> Result<Var> {
        if steps.is_empty() {
            return Err(Error::Precondition("BLSTM over an empty sequence".into()));
        }
        let fwd = self.forward.run(tape, steps.iter().copied(), h0_fwd)?;
        let bwd = self.backward.run(tape, steps.iter().rev().copied(), h0_bwd)?;
        tape.concat(&[fwd, bwd], 0)
    }

    /// Encodes the rows of a `[T x d]` sequence.
    pub fn encode<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        seq: Var,
        h0_fwd: Option<Var>,
        h0_bwd: Option<Var>,
    ) -> Result<Var> {
        let steps = sequence_rows(tape, seq)?;
        self.encode_steps(tape, &steps, h0_fwd, h0_bwd)
    }
}

pub fn sequence_rows<S: Scalar>(tape: &mut Tape<'_, S>, seq: Var) -> Result<Vec<Var>> {
    let t = match tape.shape(seq) {
        [t, _] => *t,
        [_] => return Ok(vec![seq]),
        s => {
            return Err(Error::Dimension { op: "sequence rows", lhs: s.to_vec(), rhs: vec![] });
        }
    };
    (0..t).map(|i| tape.row(seq, i)).collect()
}
