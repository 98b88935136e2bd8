use super::tensor::{dot, Real};
use crate::error::{Error, Result};

/// Inputs with norm at or below this are rejected by [`l2_normalize`].
pub const NORM_FLOOR: f64 = 1e-8;

/// Scales `v` to unit Euclidean norm. Returns the unit vector and the
/// original norm (needed by [`l2_normalize_backward`]).
pub fn l2_normalize<T: Real>(v: &[T]) -> Result<(Vec<T>, f64)> {
    let norm = dot(v, v).sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite("l2_normalize input".into()));
    }
    if norm <= NORM_FLOOR {
        return Err(Error::NearZeroNorm(norm));
    }
    Ok((v.iter().map(|x| T::narrow(x.widen() / norm)).collect(), norm))
}

/// Gradient through normalization: the upstream gradient projected onto the
/// tangent space at `unit`, divided by the input norm.
pub fn l2_normalize_backward<T: Real>(unit: &[T], norm: f64, grad: &[T]) -> Vec<T> {
    let radial = dot(grad, unit);
    grad.iter()
        .zip(unit)
        .map(|(g, u)| T::narrow((g.widen() - radial * u.widen()) / norm))
        .collect()
}

/// Max-shifted softmax; internal arithmetic in `f64`.
pub fn softmax<T: Real>(logits: &[T]) -> Result<Vec<T>> {
    Ok(softmax_f64(logits)?.into_iter().map(T::narrow).collect())
}

pub(crate) fn softmax_f64<T: Real>(logits: &[T]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax logits"));
    }
    let max = logits
        .iter()
        .map(|v| v.widen())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    let exps: Vec<f64> = logits.iter().map(|v| (v.widen() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `-log softmax(logits)[target]` and its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], target: usize) -> Result<(f64, Vec<T>)> {
    if target >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label: target,
            classes: logits.len(),
        });
    }
    let max = logits
        .iter()
        .map(|v| v.widen())
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logits.iter().map(|v| v.widen() - max).collect();
    let log_total = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
    let loss = log_total - shifted[target];
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy".into()));
    }
    let grad = shifted
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = (s - log_total).exp();
            T::narrow(if i == target { p - 1.0 } else { p })
        })
        .collect();
    Ok((loss, grad))
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax<T: Real>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        let (u, n) = l2_normalize(&[3.0f64, 4.0]).unwrap();
        assert!((u[0] - 0.6).abs() < 1e-15 && (u[1] - 0.8).abs() < 1e-15);
        assert_eq!(n, 5.0);
        assert_eq!(l2_normalize(&[1.0f32, 0.0]).unwrap().0, vec![1.0, 0.0]);
        assert!(matches!(
            l2_normalize(&[0.0f32, 0.0]),
            Err(Error::NearZeroNorm(_))
        ));
    }

    #[test]
    fn normalize_backward_is_tangent() {
        let (u, n) = l2_normalize(&[1.0f64, 2.0, -2.0]).unwrap();
        let g = l2_normalize_backward(&u, n, &[0.3, -0.1, 0.9]);
        assert!(dot(&g, &u).abs() < 1e-15);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0f64, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[2.0f64.ln(), 0.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12 && (p[1] - 1.0 / 3.0).abs() < 1e-12);
        let p = softmax(&[1000.0f32, 0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-6 && p[1] < 1e-6);
        assert!(matches!(softmax::<f32>(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn cross_entropy_uniform_is_ln_c() {
        let (loss, _) = softmax_cross_entropy(&[0.0f64; 7], 3).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.1f32, 0.9, 0.3]), Some(1));
        assert_eq!(argmax(&[0.5f32, 0.5, 0.5]), Some(0));
        assert_eq!(argmax::<f32>(&[]), None);
    }
}
