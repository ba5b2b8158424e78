//! Hard-sample weighted cross-entropy, distillation and the combined loss.
//!
//! The weights `|y − p|^γ` and the teacher probabilities enter the graph as
//! constants, so no gradient flows through them.

use crate::error::Result;
use crate::numerics::{sigmoid, BceTargets, NodeId, Tape, Tensor};
use crate::training::labels::GroundTruth;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_ord: f64,
    pub l_pro: f64,
    pub l_kd: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(l_ord: f64, l_pro: f64, l_kd: f64, lambda: f64) -> Self {
        LossBreakdown {
            l_ord,
            l_pro,
            l_kd,
            total: total_loss(l_ord, l_pro, l_kd, lambda),
        }
    }

    pub fn add(&mut self, other: &LossBreakdown) {
        self.l_ord += other.l_ord;
        self.l_pro += other.l_pro;
        self.l_kd += other.l_kd;
        self.total += other.total;
    }

    pub fn scaled(&self, c: f64) -> LossBreakdown {
        LossBreakdown {
            l_ord: c * self.l_ord,
            l_pro: c * self.l_pro,
            l_kd: c * self.l_kd,
            total: c * self.total,
        }
    }
}

/// `(1 − λ)·L_ord + L_pro + λ·L_kd`.
pub fn total_loss(l_ord: f64, l_pro: f64, l_kd: f64, lambda: f64) -> f64 {
    (1.0 - lambda) * l_ord + l_pro + lambda * l_kd
}

/// `|y − p|^γ` on valid rows, zero elsewhere.
pub fn hard_weights(labels: &GroundTruth, probs: &Tensor, gamma: f64) -> Tensor {
    let mut w = labels
        .values
        .zip_map(probs, "hard_weights", |y, p| (y - p).abs().powf(gamma))
        .expect("labels and probabilities share a shape");
    for (r, &ok) in labels.valid.iter().enumerate() {
        if !ok {
            w.row_mut(r).fill(0.0);
        }
    }
    w
}

fn bce(y: f64, p: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn weighted_sum(targets: &Tensor, probs: &Tensor, weights: &Tensor) -> f64 {
    targets
        .data()
        .iter()
        .zip(probs.data())
        .zip(weights.data())
        .filter(|(_, &w)| w != 0.0)
        .map(|((&y, &p), &w)| w * bce(y, p))
        .sum()
}

/// Weighted CE of probabilities against the ground truth.
pub fn weighted_ce(labels: &GroundTruth, probs: &Tensor, gamma: f64) -> f64 {
    weighted_sum(&labels.values, probs, &hard_weights(labels, probs, gamma))
}

/// Weighted CE of the student against the teacher, with the weights taken
/// from the student's error on the ground truth.
pub fn kd_loss(teacher: &Tensor, student: &Tensor, labels: &GroundTruth, gamma: f64) -> f64 {
    weighted_sum(teacher, student, &hard_weights(labels, student, gamma))
}

/// Tape node for [`weighted_ce`]. `probs` are the constants used for the
/// weights, normally `sigmoid(logits)` at the current point.
pub fn weighted_ce_node(tape: &mut Tape, logits: NodeId, labels: &GroundTruth, probs: &Tensor, gamma: f64) -> Result<NodeId> {
    tape.bce_with_logits(
        logits,
        BceTargets {
            targets: labels.values.clone(),
            weights: hard_weights(labels, probs, gamma),
            clamp: PROB_CLAMP,
        },
    )
}

/// Tape node for [`kd_loss`]; `teacher` and `student_probs` are constants.
pub fn kd_node(
    tape: &mut Tape,
    student_logits: NodeId,
    teacher: &Tensor,
    student_probs: &Tensor,
    labels: &GroundTruth,
    gamma: f64,
) -> Result<NodeId> {
    tape.bce_with_logits(
        student_logits,
        BceTargets {
            targets: teacher.clone(),
            weights: hard_weights(labels, student_probs, gamma),
            clamp: PROB_CLAMP,
        },
    )
}

pub fn probabilities(logits: &Tensor) -> Tensor {
    logits.map(sigmoid)
}
