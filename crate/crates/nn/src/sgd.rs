use crate::error::{NnError, Result};
use crate::params::ParamVector;

/// `params − eta · grads`, returned as a new vector.
pub fn sgd_step(params: &ParamVector, grads: &[f64], eta: f64) -> Result<ParamVector> {
    let mut next = params.clone();
    sgd_step_in_place(next.values_mut(), grads, eta)?;
    Ok(next)
}

pub fn sgd_step_in_place(params: &mut [f64], grads: &[f64], eta: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(NnError::LengthMismatch {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= eta * g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_step() {
        let p = ParamVector::gather([("w", vec![1.0, 2.0])]);
        let next = sgd_step(&p, &[1.0, 1.0], 0.5).unwrap();
        assert_eq!(next.values(), &[0.5, 1.5]);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let p = ParamVector::gather([("w", vec![0.1, -3.0, 7.25])]);
        assert_eq!(sgd_step(&p, &[0.0; 3], 0.01).unwrap(), p);
    }

    #[test]
    fn length_mismatch() {
        let p = ParamVector::gather([("w", vec![1.0])]);
        assert!(sgd_step(&p, &[1.0, 2.0], 0.1).is_err());
    }

    /// For a linear loss `L(w) = c·w` the gradient is constant, so two steps
    /// equal one step with the summed scaled gradient.
    #[test]
    fn two_steps_on_linear_model_compose() {
        let c = [0.25, -1.5, 2.0];
        let grad = |_: &[f64]| c.to_vec();
        let mut w = vec![1.0, 2.0, 3.0];
        let g1 = grad(&w);
        sgd_step_in_place(&mut w, &g1, 0.1).unwrap();
        let g2 = grad(&w);
        sgd_step_in_place(&mut w, &g2, 0.3).unwrap();
        let combined: Vec<f64> = c.iter().map(|ci| 0.1 * ci + 0.3 * ci).collect();
        let mut once = vec![1.0, 2.0, 3.0];
        sgd_step_in_place(&mut once, &combined, 1.0).unwrap();
        for (a, b) in w.iter().zip(&once) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
