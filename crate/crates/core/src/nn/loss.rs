use super::NnError;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the loss.
pub const PROB_CLAMP: f64 = 1e-7;

fn check(probs: &[f64], labels: &[bool]) -> Result<(), NnError> {
    if probs.len() != labels.len() {
        return Err(NnError::Shape(format!("{} probabilities for {} labels", probs.len(), labels.len())));
    }
    if probs.is_empty() {
        return Err(NnError::Shape("empty label vector".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy over labels.
pub fn bce_loss(probs: &[f64], labels: &[bool]) -> Result<f64, NnError> {
    check(probs, labels)?;
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / probs.len() as f64)
}

/// Derivative of [`bce_loss`] with respect to the pre-sigmoid outputs:
/// `(p - y) / K`, or zero where the clamp is active.
pub fn bce_logit_grad(probs: &[f64], labels: &[bool]) -> Result<Vec<f64>, NnError> {
    check(probs, labels)?;
    let k = probs.len() as f64;
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                0.0
            } else {
                (p - if y { 1.0 } else { 0.0 }) / k
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_probability_positive_label() {
        assert!((bce_loss(&[0.5], &[true]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(&[0.5], &[true]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_near_zero() {
        assert!(bce_loss(&[1.0, 0.0, 1.0], &[true, false, true]).unwrap() <= 1e-6);
        assert_eq!(bce_logit_grad(&[1.0, 0.0], &[true, false]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        assert!(matches!(bce_loss(&[0.2, 0.3], &[true]), Err(NnError::Shape(_))));
    }

    proptest! {
        #[test]
        fn matches_scalar_formula(pairs in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..40)) {
            let (p, y): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
            let mut oracle = 0.0;
            for i in 0..p.len() {
                let c = p[i].clamp(1e-7, 1.0 - 1e-7);
                let yi = if y[i] { 1.0 } else { 0.0 };
                oracle += -(yi * c.ln() + (1.0 - yi) * (1.0 - c).ln());
            }
            oracle /= p.len() as f64;
            let got = bce_loss(&p, &y).unwrap();
            prop_assert!((got - oracle).abs() <= 1e-12);
            prop_assert!(got >= 0.0);
        }
    }
}
