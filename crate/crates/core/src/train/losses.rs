/// Probabilities are clamped to this floor before taking logs.
pub const LOG_EPS: f64 = 1e-12;

/// `−ln p[label]`.
pub fn categorical_ce(probabilities: &[f64], label: usize) -> f64 {
    -probabilities[label].max(LOG_EPS).ln()
}

/// Binary cross-entropy of the positive-class probability `p`.
pub fn binary_ce(p: f64, label: bool) -> f64 {
    let q = if label { p } else { 1.0 - p };
    -q.max(LOG_EPS).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let uniform = [0.2; 5];
        for label in 0..5 {
            assert!((categorical_ce(&uniform, label) - 5f64.ln()).abs() < 1e-15);
        }
        assert_eq!(categorical_ce(&[0.0, 1.0], 1), 0.0);
        assert!((categorical_ce(&[0.7, 0.2, 0.1], 1) + 0.2f64.ln()).abs() < 1e-15);
        assert!((categorical_ce(&[0.7, 0.2, 0.1], 1) - 1.6094).abs() < 1e-4);
        assert!(categorical_ce(&[1.0, 0.0], 1).is_finite());
        assert!((binary_ce(0.8, true) + 0.8f64.ln()).abs() < 1e-15);
        assert!((binary_ce(0.8, false) + 0.2f64.ln()).abs() < 1e-12);
        assert!(binary_ce(0.0, true).is_finite());
    }
}
