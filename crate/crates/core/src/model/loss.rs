//! Softmax, cross-entropy with optional label smoothing, and KL divergence,
//! together with their gradients with respect to logits.

use crate::error::{Error, Result};
use crate::scalar::{safe_ln, Scalar};

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Target distribution: `1 - epsilon` on `label`, `epsilon / (C - 1)`
/// spread over the other classes.
pub fn smoothed_target<T: Scalar>(num_classes: usize, label: usize, epsilon: T) -> Vec<T> {
    if num_classes == 1 {
        return vec![T::one()];
    }
    let off = epsilon / T::of_usize(num_classes - 1);
    (0..num_classes)
        .map(|c| if c == label { T::one() - epsilon } else { off })
        .collect()
}

/// Cross-entropy against a (possibly smoothed) one-hot target.
pub fn loss_ce<T: Scalar>(probs: &[T], label: usize, epsilon: T) -> Result<T> {
    if label >= probs.len() {
        return Err(Error::InvalidClass {
            class: label,
            num_classes: probs.len(),
        });
    }
    if epsilon.is_zero() {
        return Ok(-safe_ln(probs[label]));
    }
    let target = smoothed_target(probs.len(), label, epsilon);
    Ok(target
        .iter()
        .zip(probs)
        .filter(|(t, _)| !t.is_zero())
        .map(|(&t, &p)| -t * safe_ln(p))
        .sum())
}

/// `KL(p || q) = sum p_i ln(p_i / q_i)`.
pub fn loss_kl<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(pi, _)| !pi.is_zero())
        .map(|(&pi, &qi)| pi * (safe_ln(pi) - safe_ln(qi)))
        .sum())
}

/// d CE / d logits given softmax output: `probs - target`.
pub fn ce_logit_grad<T: Scalar>(probs: &[T], label: usize, epsilon: T) -> Vec<T> {
    let target = smoothed_target(probs.len(), label, epsilon);
    probs.iter().zip(target).map(|(&p, t)| p - t).collect()
}

/// Gradients of `KL(softmax(zp) || softmax(zq))` with respect to `zp` and
/// `zq`, given the two probability vectors.
pub fn kl_logit_grads<T: Scalar>(p: &[T], q: &[T]) -> (Vec<T>, Vec<T>) {
    let a: Vec<T> = p.iter().zip(q).map(|(&pi, &qi)| safe_ln(pi) - safe_ln(qi)).collect();
    let mean_a: T = p.iter().zip(&a).map(|(&pi, &ai)| pi * ai).sum();
    let gp = p.iter().zip(&a).map(|(&pi, &ai)| pi * (ai - mean_a)).collect();
    let gq = q.iter().zip(p).map(|(&qi, &pi)| qi - pi).collect();
    (gp, gq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_hot_ce_is_zero() {
        assert_eq!(loss_ce(&[0.0, 1.0, 0.0], 1, 0.0f64).unwrap(), 0.0);
    }

    #[test]
    fn ce_of_three_quarters() {
        let l = loss_ce(&[0.25, 0.75], 1, 0.0f64).unwrap();
        assert!((l - (-(0.75f64).ln())).abs() < 1e-15);
        assert!((l - 0.2877).abs() < 1e-4);
    }

    #[test]
    fn smoothed_ce_on_uniform_is_ln2() {
        let l = loss_ce(&[0.5, 0.5], 0, 0.2f64).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn ce_floor_keeps_loss_finite() {
        let l = loss_ce(&[1.0, 0.0], 1, 0.0f64).unwrap();
        assert!((l - 1e-12f64.ln().abs()).abs() < 1e-9);
        assert!(loss_ce(&[0.5, 0.5], 2, 0.0f64).is_err());
    }

    #[test]
    fn kl_examples() {
        assert!(loss_kl(&[0.3f64, 0.7], &[0.3, 0.7]).unwrap().abs() < 1e-15);
        let v = loss_kl(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert!(loss_kl(&[1.0f64], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0f64, 0.0, 0.0, 0.0]), vec![0.25; 4]);
        let p = softmax(&[0.0f64, 3f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        let shifted = softmax(&[5.0f64, 5.0 + 3f64.ln()]);
        assert!((shifted[1] - p[1]).abs() < 1e-15);
    }

    fn dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative((p, q) in (2usize..6).prop_flat_map(|n| (dist(n), dist(n)))) {
            prop_assert!(loss_kl(&p, &q).unwrap() >= -1e-12);
            prop_assert!(loss_kl(&p, &p).unwrap() <= 1e-9);
        }

        #[test]
        fn softmax_sums_to_one(z in prop::collection::vec(-50.0f64..50.0, 1..10)) {
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn kl_gradient_matches_differences(
            zp in prop::collection::vec(-2.0f64..2.0, 3),
            zq in prop::collection::vec(-2.0f64..2.0, 3),
        ) {
            let f = |a: &[f64], b: &[f64]| loss_kl(&softmax(a), &softmax(b)).unwrap();
            let (gp, gq) = kl_logit_grads(&softmax(&zp), &softmax(&zq));
            let h = 1e-6;
            for i in 0..3 {
                let (mut up, mut dn) = (zp.clone(), zp.clone());
                up[i] += h;
                dn[i] -= h;
                let num = (f(&up, &zq) - f(&dn, &zq)) / (2.0 * h);
                prop_assert!((num - gp[i]).abs() < 1e-6);
                let (mut up, mut dn) = (zq.clone(), zq.clone());
                up[i] += h;
                dn[i] -= h;
                let num = (f(&zp, &up) - f(&zp, &dn)) / (2.0 * h);
                prop_assert!((num - gq[i]).abs() < 1e-6);
            }
        }
    }
}
