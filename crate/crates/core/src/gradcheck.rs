//! Central-difference gradient checker and the built-in check suite.
//!
//! The checker compares the tape's analytic gradients with
//! `(f(x + h) - f(x - h)) / 2h` coordinate by coordinate and reports
//! `max |analytic - numeric| / max(1, |analytic|, |numeric|)`.
//! Everything here runs in 64-bit with dropout disabled.

use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

use crate::autodiff::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradCheckError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("loss is not finite at parameter {param}, coordinate {coord}")]
    NonFinite { param: usize, coord: usize },
    #[error("{0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Upper bound on checked coordinates per parameter; larger parameters
    /// are sampled with an even stride.
    pub max_coords_per_param: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            max_coords_per_param: 64,
        }
    }
}

fn eval<F>(f: &F, params: &[Tensor<f64>]) -> Result<(f64, Tape<f64>, Vec<Var>, Var), GradCheckError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.param(p.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let loss = f(&mut tape, &vars)?;
    let value = tape.value(loss).get(0, 0);
    Ok((value, tape, vars, loss))
}

/// Max relative error between analytic and central-difference gradients of
/// the scalar computation `f` with respect to every tensor in `params`.
pub fn grad_check<F>(params: &[Tensor<f64>], f: F, opts: GradCheckOptions) -> Result<f64, GradCheckError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let (_, mut tape, vars, loss) = eval(&f, params)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
        .collect();
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, p) in params.iter().enumerate() {
        let n = p.len();
        let stride = n.div_ceil(opts.max_coords_per_param.max(1)).max(1);
        for k in (0..n).step_by(stride) {
            let orig = p.data()[k];
            work[pi].data_mut()[k] = orig + opts.step;
            let plus = eval(&f, &work)?.0;
            work[pi].data_mut()[k] = orig - opts.step;
            let minus = eval(&f, &work)?.0;
            work[pi].data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(GradCheckError::NonFinite { param: pi, coord: k });
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[pi].data()[k];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

pub mod suite;
