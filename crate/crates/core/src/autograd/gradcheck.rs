//! Central finite-difference verification of tape gradients.
//!
//! Only forward evaluations are used to build the numerical estimate, so the
//! check is independent of every backward rule it validates.

use super::{ParamStore, Tape, Tensor, Var};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
pub const ABS_TOL: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct Mismatch {
    pub input: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub mismatches: Vec<Mismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// `|a − n| ≤ ABS_TOL + rel_tol · max(|a|, |n|)`.
pub fn close(analytic: f64, numeric: f64, rel_tol: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_TOL + rel_tol * analytic.abs().max(numeric.abs())
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale <= ABS_TOL {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Checks d(f)/d(inputs) for a scalar-valued `f` built on a fresh tape.
pub fn check_inputs<F>(f: F, inputs: &[Tensor], rel_tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.variable(x.clone())).collect();
        let o = f(&mut t, &vs)?;
        t.value(o).item()
    };

    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        for e in 0..inputs[i].numel() {
            let x0 = inputs[i].data()[e];
            work[i].data_mut()[e] = x0 + FD_STEP;
            let up = eval(&work)?;
            work[i].data_mut()[e] = x0 - FD_STEP;
            let down = eval(&work)?;
            work[i].data_mut()[e] = x0;
            let numeric = (up - down) / (2.0 * FD_STEP);
            record(&mut report, i, e, analytic[e], numeric, rel_tol);
        }
    }
    Ok(report)
}

/// Checks d(loss)/d(parameter) for every scalar in `store`, or for every
/// `stride`-th scalar when `stride > 1`.
pub fn check_params<F>(
    store: &ParamStore,
    f: F,
    rel_tol: f64,
    stride: usize,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let indices: Vec<usize> = (0..store.num_scalars()).step_by(stride.max(1)).collect();
    check_params_at(store, f, rel_tol, &indices)
}

/// Checks d(loss)/d(parameter) at the given flat parameter indices.
pub fn check_params_at<F>(
    store: &ParamStore,
    f: F,
    rel_tol: f64,
    indices: &[usize],
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let grads = tape.backward(out)?;
    let mut analytic_store = store.clone();
    analytic_store.zero_grad();
    analytic_store.accumulate(&tape.param_grads(&grads));
    let analytic = analytic_store.flat_grads();

    let base = store.flat_values();
    let mut probe = store.clone();
    let mut flat = base.clone();
    let mut eval = |flat: &[f64]| -> Result<f64> {
        probe.set_flat_values(flat)?;
        let mut t = Tape::new();
        let o = f(&mut t, &probe)?;
        t.value(o).item()
    };

    let mut report = GradCheckReport::default();
    for &e in indices {
        flat[e] = base[e] + FD_STEP;
        let up = eval(&flat)?;
        flat[e] = base[e] - FD_STEP;
        let down = eval(&flat)?;
        flat[e] = base[e];
        let numeric = (up - down) / (2.0 * FD_STEP);
        record(&mut report, 0, e, analytic[e], numeric, rel_tol);
    }
    Ok(report)
}

fn record(report: &mut GradCheckReport, input: usize, element: usize, a: f64, n: f64, tol: f64) {
    report.checked += 1;
    report.max_rel_error = report.max_rel_error.max(rel_error(a, n));
    if !close(a, n, tol) {
        report.mismatches.push(Mismatch {
            input,
            element,
            analytic: a,
            numeric: n,
        });
    }
}
