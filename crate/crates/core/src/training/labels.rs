//! Gaussian span labels.

use crate::numerics::Tensor;

/// Smallest label standard deviation, in frames.
pub const SIGMA_FLOOR: f64 = 0.5;

/// Soft targets for the present positions, columns (start, middle, end).
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub values: Tensor,
    /// Positions outside the video carry zero targets and no loss.
    pub valid: Vec<bool>,
}

pub fn label_sigma(alpha: f64, t_s: usize, t_e: usize) -> f64 {
    (alpha * (t_e - t_s) as f64).max(SIGMA_FLOOR)
}

/// Centres `(t_s, (t_s+t_e)/2, t_e)` of the three label curves.
pub fn label_centres(t_s: usize, t_e: usize) -> [f64; 3] {
    [t_s as f64, (t_s + t_e) as f64 / 2.0, t_e as f64]
}

/// `y_ξ(t) = exp(−(t − t_ξ)² / (2σ_ξ²))` with `σ_ξ = α_ξ·(t_e − t_s)`.
pub fn gaussian_labels(t_s: usize, t_e: usize, positions: &[isize], valid: &[bool], alphas: [f64; 3]) -> GroundTruth {
    assert_eq!(positions.len(), valid.len(), "one validity flag per position");
    assert!(t_e >= t_s, "label interval reversed");
    let centres = label_centres(t_s, t_e);
    let sigmas = alphas.map(|a| label_sigma(a, t_s, t_e));
    let mut values = Tensor::zeros(positions.len(), 3);
    for (r, (&t, &ok)) in positions.iter().zip(valid).enumerate() {
        if !ok {
            continue;
        }
        for c in 0..3 {
            let z = t as f64 - centres[c];
            values.set(r, c, (-(z * z) / (2.0 * sigmas[c] * sigmas[c])).exp());
        }
    }
    GroundTruth {
        values,
        valid: valid.to_vec(),
    }
}
