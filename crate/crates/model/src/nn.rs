//! Small building blocks shared by the encoder and decoder.

use treeattn_core::{Axis, Mat, SeededRng, Tape, Var};

/// Samples inverted-dropout masks; a disabled source yields no masks.
pub struct Dropout<'a> {
    rate: f64,
    rng: Option<&'a mut SeededRng>,
}

impl<'a> Dropout<'a> {
    pub fn new(rate: f64, rng: &'a mut SeededRng) -> Self {
        Dropout { rate, rng: Some(rng) }
    }

    pub fn disabled() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn is_active(&self) -> bool {
        self.rng.is_some() && self.rate > 0.0
    }

    /// A mask with entries 0 or `1/(1-rate)`.
    pub fn mask(&mut self, rows: usize, cols: usize) -> Option<Mat> {
        let rate = self.rate;
        if rate <= 0.0 {
            return None;
        }
        let rng = self.rng.as_mut()?;
        let keep = 1.0 / (1.0 - rate);
        let data = (0..rows * cols)
            .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep })
            .collect();
        Some(Mat::from_vec(rows, cols, data))
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Var {
        let (rows, cols) = tape.shape(x);
        match self.mask(rows, cols) {
            Some(m) => {
                let m = tape.constant(m);
                tape.dropout(x, m)
            }
            None => x,
        }
    }
}

/// Repeats a column bias across `cols` columns.
pub fn broadcast_bias(tape: &mut Tape, bias: Var, cols: usize) -> Var {
    if cols == 1 {
        return bias;
    }
    let ones = tape.constant(Mat::filled(1, cols, 1.0));
    tape.matmul(bias, ones)
}

/// `w x + b` with the bias already broadcast to the width of `x`.
pub fn affine(tape: &mut Tape, w: Var, x: Var, b: Var) -> Var {
    let wx = tape.matmul(w, x);
    tape.add(wx, b)
}

/// One LSTM step over a block of columns. `w` maps `[x; h]` to the stacked
/// input, forget, output and candidate pre-activations.
pub fn lstm_step(tape: &mut Tape, w: Var, b: Var, x: Var, h: Var, c: Var) -> (Var, Var) {
    let hidden = tape.shape(h).0;
    let xh = tape.concat(&[x, h], Axis::Rows);
    let z = affine(tape, w, xh, b);
    let input = tape.slice_rows(z, 0..hidden);
    let forget = tape.slice_rows(z, hidden..2 * hidden);
    let output = tape.slice_rows(z, 2 * hidden..3 * hidden);
    let cand = tape.slice_rows(z, 3 * hidden..4 * hidden);
    let input = tape.sigmoid(input);
    let forget = tape.sigmoid(forget);
    let output = tape.sigmoid(output);
    let cand = tape.tanh(cand);
    let kept = tape.mul(forget, c);
    let written = tape.mul(input, cand);
    let c_next = tape.add(kept, written);
    let squashed = tape.tanh(c_next);
    let h_next = tape.mul(output, squashed);
    (h_next, c_next)
}

/// Euclidean norm of a column of plain values.
pub fn norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}
