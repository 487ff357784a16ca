use crate::error::{Error, Result};
use crate::numerics::Tensor2D;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor2D>) -> Self {
        let sizes: Vec<usize> = params.into_iter().map(Tensor2D::len).collect();
        Self {
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update over `params` in order, using each tensor's grad slot.
///
/// The whole step is rejected, leaving parameters and moments untouched, if
/// any gradient is missing or non-finite.
pub fn adam_step(params: &mut [&mut Tensor2D], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::usage(format!(
            "optimizer tracks {} tensors, got {}",
            state.m.len(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        let g = p
            .grad
            .as_ref()
            .ok_or_else(|| Error::usage(format!("parameter {i} has no gradient")))?;
        if g.len() != state.m[i].len() || p.len() != g.len() {
            return Err(Error::usage(format!("parameter {i} changed size")));
        }
        if let Some(j) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient {} at parameter {i}, element {j}; step skipped",
                g[j]
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let g = p.grad.take().expect("checked above");
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            m[j] = BETA1 * m[j] + (1.0 - BETA1) * g[j];
            v[j] = BETA2 * v[j] + (1.0 - BETA2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *x -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
        p.grad = Some(g);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_grad(value: &[f64], grad: &[f64]) -> Tensor2D {
        let mut t = Tensor2D::row_vector(value);
        t.grad = Some(grad.to_vec());
        t
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = with_grad(&[0.0], &[1.0]);
        let mut s = AdamState::new([&p]);
        adam_step(&mut [&mut p], &mut s, 0.1).unwrap();
        assert!((p.data()[0] + 0.1).abs() < 1e-8);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let mut p = with_grad(&[0.5, -2.0], &[0.0, 0.0]);
        let mut s = AdamState::new([&p]);
        s.m[0] = vec![0.0, 0.0];
        adam_step(&mut [&mut p], &mut s, 0.1).unwrap();
        assert_eq!(p.data(), &[0.5, -2.0]);

        let mut q = with_grad(&[1.0], &[1.0]);
        let mut s = AdamState::new([&q]);
        adam_step(&mut [&mut q], &mut s, 0.01).unwrap();
        let (m1, v1) = (s.m[0][0], s.v[0][0]);
        q.grad = Some(vec![0.0]);
        adam_step(&mut [&mut q], &mut s, 0.01).unwrap();
        assert!(s.m[0][0].abs() < m1.abs() && s.v[0][0] < v1);
    }

    #[test]
    fn identical_parameters_follow_identical_paths() {
        let mut a = with_grad(&[0.3], &[0.7]);
        let mut b = with_grad(&[0.3], &[0.7]);
        let mut s = AdamState::new([&a, &b]);
        for k in 0..20 {
            let g = (k as f64 * 0.37).sin();
            a.grad = Some(vec![g]);
            b.grad = Some(vec![g]);
            adam_step(&mut [&mut a, &mut b], &mut s, 0.05).unwrap();
        }
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn matches_scalar_reference_over_many_steps() {
        let mut p = with_grad(&[1.0], &[0.0]);
        let mut s = AdamState::new([&p]);
        let (mut theta, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=50 {
            let g = 2.0 * theta - 0.5;
            p.grad = Some(vec![2.0 * p.data()[0] - 0.5]);
            adam_step(&mut [&mut p], &mut s, 0.02).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            theta -= 0.02 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        assert!((p.data()[0] - theta).abs() < 1e-12);
    }

    #[test]
    fn nan_gradient_aborts_without_side_effects() {
        let mut a = with_grad(&[1.0], &[0.5]);
        let mut b = with_grad(&[2.0], &[f64::NAN]);
        let mut s = AdamState::new([&a, &b]);
        let before = s.clone();
        let err = adam_step(&mut [&mut a, &mut b], &mut s, 0.1).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(s, before);
        assert_eq!((a.data()[0], b.data()[0]), (1.0, 2.0));

        let mut c = Tensor2D::row_vector(&[1.0]);
        let mut s = AdamState::new([&c]);
        assert!(matches!(adam_step(&mut [&mut c], &mut s, 0.1), Err(Error::Usage(_))));
    }
}
