//! Central finite-difference gradient checking.
//!
//! The check only evaluates forward values, so it is independent of the
//! backward rules it verifies.

use super::{Tape, Tensor2D, Var};
use crate::error::Result;

/// Outcome of [`check_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// `(parameter index, flat entry index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub entries_checked: usize,
}

/// Denominator floor that keeps entries with vanishing gradients from
/// dominating the relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Compares backward gradients of `loss` with central differences of step `h`
/// for every entry of every tensor in `params`.
///
/// `loss` must rebuild the whole graph from the parameter vars it is given and
/// must be deterministic (recreate any RNG inside the closure).
pub fn check_gradients<F>(params: &[Tensor2D], h: f64, mut loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |loss: &mut F, params: &[Tensor2D]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
        let out = loss(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let out = loss(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| tape.grad(v).map(Tensor2D::into_data).unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();

    let mut work: Vec<Tensor2D> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        entries_checked: 0,
    };
    for p in 0..work.len() {
        for e in 0..work[p].len() {
            let orig = work[p].data()[e];
            work[p].data_mut()[e] = orig + h;
            let plus = eval(&mut loss, &work)?;
            work[p].data_mut()[e] = orig - h;
            let minus = eval(&mut loss, &work)?;
            work[p].data_mut()[e] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[p][e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            report.entries_checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((p, e));
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    Ok(report)
}
