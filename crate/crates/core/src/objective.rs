//! Hybrid training objective.
//!
//! `L = λ₁·L_dir + λ₂·L₁ + λ₃·L_con` over a batch of matched rows `(a_i, t_i)`:
//!
//! * `L_dir = mean_i (1 − a_i·t_i)` on unit rows,
//! * `L₁ = mean_ij |a_ij − t_ij|` on the same unit rows,
//! * `L_con` is the symmetric in-batch cross-entropy over `S = a·tᵀ / τ`.
//!
//! Every loss has a plain tensor version and a tape version used in training.

use crate::error::{Error, Result};
use crate::numerics::{log_softmax_rows, Tape, Tensor2D, Var};

pub const DEFAULT_TEMPERATURE: f64 = 0.07;

/// Tolerance for unit-norm checks on loss inputs.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Largest simplex deviation that is silently renormalized.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Simplex weights of the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    directional: f64,
    l1: f64,
    contrastive: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            directional: 0.3,
            l1: 0.3,
            contrastive: 0.4,
        }
    }
}

impl LossWeights {
    /// Validates nonnegativity and the simplex constraint, renormalizing small drift.
    pub fn new(directional: f64, l1: f64, contrastive: f64) -> Result<Self> {
        let w = [directional, l1, contrastive];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(format!("loss weights must be finite and nonnegative, got {w:?}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::config(format!("loss weights sum to {sum}, expected 1")));
        }
        Ok(Self {
            directional: directional / sum,
            l1: l1 / sum,
            contrastive: contrastive / sum,
        })
    }

    pub fn contrastive_only() -> Self {
        Self {
            directional: 0.0,
            l1: 0.0,
            contrastive: 1.0,
        }
    }

    pub fn directional(&self) -> f64 {
        self.directional
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn contrastive(&self) -> f64 {
        self.contrastive
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.directional, self.l1, self.contrastive]
    }
}

/// Component and total values for one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLossReport {
    pub directional: f64,
    pub l1: f64,
    pub contrastive: f64,
    pub total: f64,
    pub batch_size: usize,
}

/// Contrastive temperature: fixed, or learned through a 1×1 log-temperature var.
#[derive(Debug, Clone, Copy)]
pub enum Temperature {
    Fixed(f64),
    LearnedLog(Var),
}

fn check_pair_shapes(a: &Tensor2D, t: &Tensor2D) -> Result<()> {
    if a.shape() != t.shape() {
        return Err(Error::config(format!(
            "loss inputs differ in shape: {:?} vs {:?}",
            a.shape(),
            t.shape()
        )));
    }
    if a.rows() == 0 {
        return Err(Error::usage("loss over an empty batch"));
    }
    Ok(())
}

fn check_unit_rows(x: &Tensor2D, what: &str) -> Result<()> {
    for (i, n) in x.row_norms().into_iter().enumerate() {
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::usage(format!("{what} row {i} has norm {n}, expected unit length")));
        }
    }
    Ok(())
}

fn check_temperature(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::config(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// `mean_i (1 − a_i·t_i)`; rows must be unit length.
pub fn directional_loss(a: &Tensor2D, t: &Tensor2D) -> Result<f64> {
    check_pair_shapes(a, t)?;
    check_unit_rows(a, "audio")?;
    check_unit_rows(t, "text")?;
    let cos_sum: f64 = (0..a.rows())
        .map(|i| a.row(i).iter().zip(t.row(i)).map(|(x, y)| x * y).sum::<f64>())
        .sum();
    Ok(1.0 - cos_sum / a.rows() as f64)
}

/// `mean_ij |a_ij − t_ij|`.
pub fn l1_loss(a: &Tensor2D, t: &Tensor2D) -> Result<f64> {
    check_pair_shapes(a, t)?;
    let s: f64 = a.data().iter().zip(t.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(s / a.len() as f64)
}

/// Symmetric in-batch cross-entropy with matched pairs on the diagonal.
pub fn contrastive_loss(a: &Tensor2D, t: &Tensor2D, temperature: f64) -> Result<f64> {
    check_pair_shapes(a, t)?;
    check_temperature(temperature)?;
    let s = a.matmul(&t.transpose())?.map(|v| v / temperature);
    let b = a.rows();
    let diag_mean = |ls: &Tensor2D| (0..b).map(|i| ls.get(i, i)).sum::<f64>() / b as f64;
    let a2t = -diag_mean(&log_softmax_rows(&s));
    let t2a = -diag_mean(&log_softmax_rows(&s.transpose()));
    Ok(0.5 * (a2t + t2a))
}

/// All three components and their weighted sum.
pub fn hybrid_loss(a: &Tensor2D, t: &Tensor2D, weights: &LossWeights, temperature: f64) -> Result<BatchLossReport> {
    let directional = directional_loss(a, t)?;
    let l1 = l1_loss(a, t)?;
    let contrastive = contrastive_loss(a, t, temperature)?;
    Ok(BatchLossReport {
        directional,
        l1,
        contrastive,
        total: weights.directional * directional + weights.l1 * l1 + weights.contrastive * contrastive,
        batch_size: a.rows(),
    })
}

fn check_tape_pair(tape: &Tape, a: Var, t: Var) -> Result<()> {
    check_pair_shapes(tape.value(a), tape.value(t))
}

pub fn directional_on_tape(tape: &mut Tape, a: Var, t: Var) -> Result<Var> {
    check_tape_pair(tape, a, t)?;
    check_unit_rows(tape.value(a), "audio")?;
    check_unit_rows(tape.value(t), "text")?;
    let b = tape.shape(a).0 as f64;
    let prod = tape.mul(a, t)?;
    let cos_sum = tape.sum_all(prod)?;
    let mean = tape.scale(cos_sum, -1.0 / b)?;
    tape.add_const(mean, 1.0)
}

pub fn l1_on_tape(tape: &mut Tape, a: Var, t: Var) -> Result<Var> {
    check_tape_pair(tape, a, t)?;
    let diff = tape.sub(a, t)?;
    let abs = tape.abs(diff)?;
    tape.mean_all(abs)
}

pub fn contrastive_on_tape(tape: &mut Tape, a: Var, t: Var, temperature: Temperature) -> Result<Var> {
    check_tape_pair(tape, a, t)?;
    let tt = tape.transpose(t)?;
    let s = tape.matmul(a, tt)?;
    let s = match temperature {
        Temperature::Fixed(tau) => {
            check_temperature(tau)?;
            tape.scale(s, 1.0 / tau)?
        }
        Temperature::LearnedLog(log_tau) => {
            let neg = tape.scale(log_tau, -1.0)?;
            let inv_tau = tape.exp(neg)?;
            tape.scale_by(s, inv_tau)?
        }
    };
    let rows = tape.log_softmax_rows(s)?;
    let a2t = tape.mean_diag(rows)?;
    let st = tape.transpose(s)?;
    let cols = tape.log_softmax_rows(st)?;
    let t2a = tape.mean_diag(cols)?;
    let sum = tape.add(a2t, t2a)?;
    tape.scale(sum, -0.5)
}

/// Tape vars for each component and the total.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub directional: Var,
    pub l1: Var,
    pub contrastive: Var,
    pub total: Var,
    pub batch_size: usize,
}

impl LossVars {
    pub fn report(&self, tape: &Tape) -> BatchLossReport {
        BatchLossReport {
            directional: tape.value(self.directional).item(),
            l1: tape.value(self.l1).item(),
            contrastive: tape.value(self.contrastive).item(),
            total: tape.value(self.total).item(),
            batch_size: self.batch_size,
        }
    }
}

pub fn hybrid_on_tape(tape: &mut Tape, a: Var, t: Var, weights: &LossWeights, temperature: Temperature) -> Result<LossVars> {
    let directional = directional_on_tape(tape, a, t)?;
    let l1 = l1_on_tape(tape, a, t)?;
    let contrastive = contrastive_on_tape(tape, a, t, temperature)?;
    let wd = tape.scale(directional, weights.directional)?;
    let wl = tape.scale(l1, weights.l1)?;
    let wc = tape.scale(contrastive, weights.contrastive)?;
    let partial = tape.add(wd, wl)?;
    let total = tape.add(partial, wc)?;
    Ok(LossVars {
        directional,
        l1,
        contrastive,
        total,
        batch_size: tape.shape(a).0,
    })
}
