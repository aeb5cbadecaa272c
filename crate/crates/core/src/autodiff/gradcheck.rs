//! Central finite-difference checks of tape gradients.

use crate::error::Result;

use super::{ParamStore, Tape, Tensor, Var};

/// Outcome of one gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||)` over all inputs.
    pub rel_error: f64,
    pub evaluations: usize,
}

/// Compares the tape gradient of `build(inputs)` with central differences of step `h`.
///
/// `build` must produce a scalar from leaves created for each input, in order.
pub fn check<F>(inputs: &[Tensor], h: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.constant(v.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss)[[0, 0, 0, 0]])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut diff2 = 0.0;
    let mut an2 = 0.0;
    let mut nu2 = 0.0;
    let mut evaluations = 0;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].dim()));
        for idx in 0..inputs[k].len() {
            let orig = inputs[k].as_slice().expect("standard layout")[idx];
            work[k].as_slice_mut().unwrap()[idx] = orig + h;
            let up = eval(&work)?;
            work[k].as_slice_mut().unwrap()[idx] = orig - h;
            let down = eval(&work)?;
            work[k].as_slice_mut().unwrap()[idx] = orig;
            evaluations += 2;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.as_slice().expect("standard layout")[idx];
            diff2 += (a - numeric) * (a - numeric);
            an2 += a * a;
            nu2 += numeric * numeric;
        }
    }
    let scale = an2.sqrt().max(nu2.sqrt()).max(1e-300);
    Ok(GradCheck {
        rel_error: diff2.sqrt() / scale,
        evaluations,
    })
}

/// Like [`check`], but differentiates with respect to parameters in `store`.
///
/// At most `per_param` evenly spaced entries of each parameter are probed,
/// which keeps whole-network checks cheap.
pub fn check_params<F>(store: &ParamStore, per_param: usize, h: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = build(&mut tape, s)?;
        Ok(tape.value(loss)[[0, 0, 0, 0]])
    };

    let mut tape = Tape::new();
    let loss = build(&mut tape, store)?;
    let grads = tape.backward(loss)?;

    let mut work = store.clone();
    let mut diff2 = 0.0;
    let mut an2 = 0.0;
    let mut nu2 = 0.0;
    let mut evaluations = 0;
    for id in store.ids() {
        let analytic = grads.param_like(store, id);
        let n = store.get(id).len();
        let step = n.div_ceil(per_param.max(1)).max(1);
        for idx in (0..n).step_by(step) {
            let orig = store.get(id).as_slice().expect("standard layout")[idx];
            work.get_mut(id).as_slice_mut().unwrap()[idx] = orig + h;
            let up = eval(&work)?;
            work.get_mut(id).as_slice_mut().unwrap()[idx] = orig - h;
            let down = eval(&work)?;
            work.get_mut(id).as_slice_mut().unwrap()[idx] = orig;
            evaluations += 2;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.as_slice().expect("standard layout")[idx];
            diff2 += (a - numeric) * (a - numeric);
            an2 += a * a;
            nu2 += numeric * numeric;
        }
    }
    let scale = an2.sqrt().max(nu2.sqrt()).max(1e-300);
    Ok(GradCheck {
        rel_error: diff2.sqrt() / scale,
        evaluations,
    })
}
