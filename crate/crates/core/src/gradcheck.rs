//! Central finite-difference gradient checking.

use crate::autodiff::{Tape, TensorError, Var};
use crate::matrix::Matrix;

/// Result of comparing tape gradients with finite differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Norm-wise relative error per leaf: `|a - n| / max(|a|, |n|)`.
    pub relative_errors: Vec<f64>,
    pub analytic: Vec<Matrix<f64>>,
    pub numeric: Vec<Matrix<f64>>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

fn relative_error(a: &Matrix<f64>, n: &Matrix<f64>) -> f64 {
    let diff = a
        .as_slice()
        .iter()
        .zip(n.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .as_slice()
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(n.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Evaluates `build` on fresh tapes with `leaves` registered as parameters
/// and compares the reverse-mode gradient against central differences.
pub fn check_gradients<F>(leaves: &[Matrix<f64>], step: f64, build: F) -> Result<GradCheck, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |values: &[Matrix<f64>]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|m| tape.param(m.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.scalar(loss))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|m| tape.param(m.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Matrix<f64>> = vars
        .iter()
        .map(|&v| grads.get(v).cloned().expect("leaf gradient"))
        .collect();

    let mut numeric = Vec::with_capacity(leaves.len());
    let mut values = leaves.to_vec();
    for li in 0..leaves.len() {
        let mut g = Matrix::zeros(leaves[li].rows(), leaves[li].cols());
        for k in 0..leaves[li].len() {
            let orig = values[li].as_slice()[k];
            values[li].as_mut_slice()[k] = orig + step;
            let plus = eval(&values)?;
            values[li].as_mut_slice()[k] = orig - step;
            let minus = eval(&values)?;
            values[li].as_mut_slice()[k] = orig;
            g.as_mut_slice()[k] = (plus - minus) / (2.0 * step);
        }
        numeric.push(g);
    }

    let relative_errors = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(a, n))
        .collect();
    Ok(GradCheck {
        relative_errors,
        analytic,
        numeric,
    })
}
