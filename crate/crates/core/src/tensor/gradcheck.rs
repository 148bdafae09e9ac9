//! Central finite-difference gradient checks.
//!
//! These only evaluate forward passes, so they stay independent of the
//! backward rules they verify.

use rand::seq::index::sample;
use rand::Rng;

use super::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const STEP: f64 = 1e-6;

/// Denominator floor for the relative error, so gradients near zero are
/// compared on an absolute scale of `1e-4 · tolerance`.
pub const REL_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Location of the worst entry: (input or parameter index, flat offset).
    pub worst: Option<(usize, usize)>,
}

impl Report {
    fn record(&mut self, which: usize, offset: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = self.max_rel_err.max(err);
            self.worst = Some((which, offset));
        }
    }
}

fn scalar_of(tape: &Tape, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if !t.is_scalar() {
        return Err(Error::Validation(format!("gradcheck: loss shape {:?} is not scalar", t.shape())));
    }
    Ok(t.item())
}

/// Checks d f / d inputs for every entry of every input tensor.
pub fn check_inputs<F>(inputs: &[Tensor], f: F) -> Result<Report>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.leaf(x.clone(), false)).collect();
        let l = f(&mut t, &vs)?;
        scalar_of(&t, l)
    };

    let mut report = Report::default();
    let mut work = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let zeros = Tensor::zeros(inputs[which].shape());
        let analytic = grads.leaf(*var).unwrap_or(&zeros).clone();
        for off in 0..inputs[which].numel() {
            let orig = inputs[which].data()[off];
            work[which].data_mut()[off] = orig + STEP;
            let plus = eval(&work)?;
            work[which].data_mut()[off] = orig - STEP;
            let minus = eval(&work)?;
            work[which].data_mut()[off] = orig;
            report.record(which, off, analytic.data()[off], (plus - minus) / (2.0 * STEP));
        }
    }
    Ok(report)
}

/// Checks parameter gradients on up to `samples` randomly chosen scalar
/// entries drawn across all trainable parameters of `store`.
pub fn check_params<F, R>(store: &mut ParamStore, samples: usize, rng: &mut R, f: F) -> Result<Report>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
    R: Rng + ?Sized,
{
    let mut tape = Tape::new();
    let loss = f(store, &mut tape)?;
    let grads = tape.backward(loss)?;
    drop(tape);

    let mut slots: Vec<(ParamId, usize)> = Vec::new();
    for id in store.ids().filter(|&id| store.is_trainable(id)) {
        for off in 0..store.value(id).numel() {
            slots.push((id, off));
        }
    }
    let chosen: Vec<usize> = if slots.len() <= samples {
        (0..slots.len()).collect()
    } else {
        let mut idx = sample(rng, slots.len(), samples).into_vec();
        idx.sort_unstable();
        idx
    };

    let mut report = Report::default();
    for i in chosen {
        let (id, off) = slots[i];
        let analytic = grads.param(id).map_or(0.0, |g| g.data()[off]);
        let orig = store.value(id).data()[off];
        store.value_mut(id).data_mut()[off] = orig + STEP;
        let plus = {
            let mut t = Tape::new();
            let l = f(store, &mut t)?;
            scalar_of(&t, l)?
        };
        store.value_mut(id).data_mut()[off] = orig - STEP;
        let minus = {
            let mut t = Tape::new();
            let l = f(store, &mut t)?;
            scalar_of(&t, l)?
        };
        store.value_mut(id).data_mut()[off] = orig;
        report.record(id.index(), off, analytic, (plus - minus) / (2.0 * STEP));
    }
    Ok(report)
}
