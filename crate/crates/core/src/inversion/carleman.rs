//! Numerical check of the Carleman estimate
//! `∫_B^{B+ρ} (∫_z^{B+ρ} |q| dy) e^{2λz} dz ≤ (1/2λ) ∫_B^{B+ρ} |q| e^{2λz} dz`.

use crate::basis::trapezoid_weights;
use crate::error::{Error, Result};

/// Both sides of the estimate for `q` sampled uniformly on `[bottom, bottom + depth]`,
/// all integrals by the trapezoid rule.
pub fn carleman_lemma_check(lambda: f64, q: &[f64], bottom: f64, depth: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("Carleman parameter {lambda} must be positive")));
    }
    if q.len() < 2 || !(depth > 0.0) {
        return Err(Error::invalid("need at least two samples on a non-degenerate interval"));
    }
    let n = q.len();
    let h = depth / (n - 1) as f64;
    let w = trapezoid_weights(n, h);
    let weight: Vec<f64> = (0..n).map(|l| (2.0 * lambda * (bottom + h * l as f64)).exp()).collect();
    let mut tail = vec![0.0; n];
    for l in (0..n - 1).rev() {
        tail[l] = tail[l + 1] + 0.5 * h * (q[l].abs() + q[l + 1].abs());
    }
    let lhs = (0..n).map(|l| w[l] * tail[l] * weight[l]).sum();
    let rhs = (0..n).map(|l| w[l] * q[l].abs() * weight[l]).sum::<f64>() / (2.0 * lambda);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_q_matches_closed_form() {
        let q = vec![1.0; 4001];
        let (lhs, rhs) = carleman_lemma_check(1.0, &q, 0.0, 1.0).unwrap();
        // ∫₀¹ (1 − z) e^{2z} dz = (e² − 3)/4, (1/2)∫₀¹ e^{2z} dz = (e² − 1)/4.
        let e2 = 2f64.exp();
        assert!((lhs - (e2 - 3.0) / 4.0).abs() < 1e-6, "{lhs}");
        assert!((rhs - (e2 - 1.0) / 4.0).abs() < 1e-6, "{rhs}");
        assert!(lhs < rhs);
    }

    #[test]
    fn zero_q_and_bad_lambda() {
        assert_eq!(carleman_lemma_check(2.0, &[0.0; 10], 0.0, 1.0).unwrap(), (0.0, 0.0));
        assert!(carleman_lemma_check(0.0, &[1.0; 10], 0.0, 1.0).is_err());
        assert!(carleman_lemma_check(-1.0, &[1.0; 10], 0.0, 1.0).is_err());
    }
}
