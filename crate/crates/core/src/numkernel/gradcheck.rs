use super::mlp::MlpParams;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// A collection of parameter tensors visited in a fixed order.
///
/// The same type doubles as the container for its gradients.
pub trait ParamSet: Clone {
    type Scalar: Real;

    fn tensors(&self) -> Vec<&Tensor<Self::Scalar>>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor<Self::Scalar>>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(<Self::Scalar as num_traits::Zero>::zero());
        }
        z
    }
}

impl<T: Real> ParamSet for Tensor<T> {
    type Scalar = T;

    fn tensors(&self) -> Vec<&Tensor<T>> {
        vec![self]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![self]
    }
}

impl<T: Real> ParamSet for MlpParams<T> {
    type Scalar = T;

    fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

/// Relative error with denominator `max(|a|, |b|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient returned by `loss_fn` at `params` against
/// central differences `(L(p + eps) - L(p - eps)) / (2 eps)` for every
/// parameter, returning the maximum relative error.
///
/// The step actually taken is measured after rounding to the parameter type,
/// so the check stays meaningful for `f32` parameters.
pub fn finite_diff_check<P, F>(mut loss_fn: F, params: &P, eps: f64) -> Result<f64>
where
    P: ParamSet,
    F: FnMut(&P) -> Result<(f64, P)>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference eps {eps}")));
    }
    let (base, analytic) = loss_fn(params)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("loss at base point".into()));
    }
    let analytic: Vec<f64> = analytic
        .tensors()
        .iter()
        .flat_map(|t| t.data().iter().map(|v| v.widen()))
        .collect();
    if analytic.len() != params.param_count() {
        return Err(Error::DimensionMismatch {
            context: "analytic gradient length",
            expected: params.param_count(),
            actual: analytic.len(),
        });
    }

    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let mut flat = 0usize;
    let tensor_count = params.tensors().len();
    for t in 0..tensor_count {
        let len = params.tensors()[t].len();
        for i in 0..len {
            let original = params.tensors()[t].data()[i];
            let up = P::Scalar::narrow(original.widen() + eps);
            let down = P::Scalar::narrow(original.widen() - eps);

            probe.tensors_mut()[t].data_mut()[i] = up;
            let (plus, _) = loss_fn(&probe)?;
            probe.tensors_mut()[t].data_mut()[i] = down;
            let (minus, _) = loss_fn(&probe)?;
            probe.tensors_mut()[t].data_mut()[i] = original;

            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite("loss under perturbation".into()));
            }
            let numeric = (plus - minus) / (up.widen() - down.widen());
            worst = worst.max(relative_error(analytic[flat], numeric));
            flat += 1;
        }
    }
    Ok(worst)
}
