//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Cap on coordinates probed per input tensor; `None` probes all of them.
    pub max_coords_per_input: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            tolerance: 1e-6,
            max_coords_per_input: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckResult {
    pub op_name: String,
    pub max_relative_error: f64,
    pub pass: bool,
    pub coords_checked: usize,
    /// Coordinate with the largest relative error.
    pub worst: Option<WorstCoord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorstCoord {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval_scalar<T, F>(f: &F, xs: &[Tensor<T>]) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::no_grad();
    let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out).item()?.as_f64();
    if !v.is_finite() {
        return Err(Error::Evaluation(format!("function value is not finite ({v})")));
    }
    Ok(v)
}

fn probe_indices(numel: usize, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(m) if m < numel => (0..m).map(|j| (j * numel + numel / (2 * m)) / m).collect(),
        _ => (0..numel).collect(),
    }
}

/// Compares the tape gradient of a scalar function of one tensor with central
/// differences `(f(x+εe) − f(x−εe)) / 2ε`.
pub fn grad_check<T, F>(name: &str, f: F, x: &Tensor<T>, opts: GradCheckOptions) -> Result<GradCheckResult>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    grad_check_many(
        name,
        |tape: &mut Tape<T>, vs: &[Var]| f(tape, vs[0]),
        std::slice::from_ref(x),
        opts,
    )
}

/// Like [`grad_check`] for a function of several tensors; every input is
/// differentiated.
pub fn grad_check_many<T, F>(name: &str, f: F, xs: &[Tensor<T>], opts: GradCheckOptions) -> Result<GradCheckResult>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    eval_scalar(&f, xs)?;

    let mut tape = Tape::new();
    let vars: Vec<Var> = xs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor<T>> = vars
        .iter()
        .map(|&v| tape.grad(v).cloned().expect("params always receive gradients"))
        .collect();
    drop(tape);

    let eps = opts.epsilon;
    let mut work: Vec<Tensor<T>> = xs.to_vec();
    let mut max_err = 0.0f64;
    let mut worst = None;
    let mut checked = 0;
    for (t, grad) in analytic.iter().enumerate() {
        for i in probe_indices(xs[t].numel(), opts.max_coords_per_input) {
            let orig = xs[t].data()[i];
            let up = T::lit(orig.as_f64() + eps);
            let down = T::lit(orig.as_f64() - eps);
            work[t].data_mut()[i] = up;
            let plus = eval_scalar(&f, &work)?;
            work[t].data_mut()[i] = down;
            let minus = eval_scalar(&f, &work)?;
            work[t].data_mut()[i] = orig;
            // the representable step, which differs from 2ε by rounding
            let numeric = (plus - minus) / (up.as_f64() - down.as_f64());
            let analytic = grad.data()[i].as_f64();
            let err = relative_error(analytic, numeric);
            if worst.is_none() || err > max_err {
                max_err = err;
                worst = Some(WorstCoord {
                    input: t,
                    index: i,
                    analytic,
                    numeric,
                });
            }
            checked += 1;
        }
    }
    Ok(GradCheckResult {
        op_name: name.to_string(),
        max_relative_error: max_err,
        pass: max_err < opts.tolerance,
        coords_checked: checked,
        worst,
    })
}
