//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates the forward function; it shares no
//! code with the backward rules it is checking.

use std::sync::Arc;

use crate::error::Result;
use crate::params::{Bound, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Relative error per input, `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, floor)`.
    pub relative_errors: Vec<f64>,
    /// Number of perturbed coordinates per input.
    pub coords_checked: Vec<usize>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error() < tolerance
    }
}

/// Options for [`check_gradients`].
#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Upper bound on perturbed coordinates per input; evenly strided when the
    /// input is larger.
    pub max_coords: usize,
    /// Norm below which a gradient is treated as zero.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: usize::MAX,
            floor: 1e-7,
        }
    }
}

/// Compare tape gradients of a scalar function against central differences.
///
/// `f` receives one tracked leaf per entry of `inputs` and must return a
/// scalar. It is evaluated `1 + 2·coords` times on fresh tapes.
pub fn check_gradients<F>(inputs: &[Tensor], opts: GradCheckOptions, f: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = values
            .iter()
            .map(|v| tape.param(Arc::new(v.clone())))
            .collect();
        f(&tape, &vars)?.value().item()
    };

    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs
        .iter()
        .map(|v| tape.param(Arc::new(v.clone())))
        .collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut relative_errors = Vec::with_capacity(inputs.len());
    let mut coords_checked = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        let n = inputs[i].len();
        let stride = n.div_ceil(opts.max_coords.max(1)).max(1);
        let coords: Vec<usize> = (0..n).step_by(stride).collect();
        let mut diff_sq = 0.0;
        let mut a_sq = 0.0;
        let mut n_sq = 0.0;
        for &c in &coords {
            let orig = work[i].data()[c];
            work[i].data_mut()[c] = orig + opts.step;
            let plus = eval(&work)?;
            work[i].data_mut()[c] = orig - opts.step;
            let minus = eval(&work)?;
            work[i].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic.data()[c];
            diff_sq += (a - numeric) * (a - numeric);
            a_sq += a * a;
            n_sq += numeric * numeric;
        }
        let denom = a_sq.sqrt().max(n_sq.sqrt()).max(opts.floor);
        relative_errors.push(diff_sq.sqrt() / denom);
        coords_checked.push(coords.len());
    }
    Ok(GradCheckReport {
        relative_errors,
        coords_checked,
    })
}

/// Per-parameter result of [`check_param_gradients`].
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub relative_error: f64,
    /// Norm of the analytic gradient over the checked coordinates.
    pub analytic_norm: f64,
    pub coords_checked: usize,
}

/// [`check_gradients`] over every tensor of a parameter store.
pub fn check_param_gradients<F>(store: &ParamStore, opts: GradCheckOptions, f: F) -> Result<Vec<ParamCheck>>
where
    F: for<'t, 's> Fn(&Bound<'t, 's>) -> Result<Var<'t>>,
{
    let eval = |s: &ParamStore| -> Result<f64> {
        let tape = Tape::new();
        let bound = Bound::new(&tape, s);
        f(&bound)?.value().item()
    };
    let tape = Tape::new();
    let bound = Bound::new(&tape, store);
    let loss = f(&bound)?;
    let grads = bound.take_gradients(tape.backward(loss)?);
    let mut work = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for id in store.ids() {
        let analytic = grads.get(id);
        let n = analytic.len();
        let stride = n.div_ceil(opts.max_coords.max(1)).max(1);
        let (mut diff_sq, mut a_sq, mut n_sq, mut count) = (0.0, 0.0, 0.0, 0);
        for c in (0..n).step_by(stride) {
            let orig = store.get(id).data()[c];
            work.get_mut(id).data_mut()[c] = orig + opts.step;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[c] = orig - opts.step;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic.data()[c];
            diff_sq += (a - numeric) * (a - numeric);
            a_sq += a * a;
            n_sq += numeric * numeric;
            count += 1;
        }
        out.push(ParamCheck {
            name: store.name(id).to_string(),
            relative_error: diff_sq.sqrt() / a_sq.sqrt().max(n_sq.sqrt()).max(opts.floor),
            analytic_norm: a_sq.sqrt(),
            coords_checked: count,
        });
    }
    Ok(out)
}
