//! Frame projection, window partitioning and positional encoding.

use std::sync::Arc;

use rand::Rng;

use crate::encoding::config::ModelConfig;
use crate::error::Result;
use crate::numerics::layers::Linear;
use crate::numerics::{Backend, Mask, ParamStore, Tensor};

#[derive(Clone, Debug)]
pub struct FrameProjector {
    pub linear: Linear,
}

impl FrameProjector {
    pub fn new(store: &mut ParamStore, name: &str, frame_dim: usize, d: usize, rng: &mut impl Rng) -> Self {
        FrameProjector {
            linear: Linear::new(store, name, frame_dim, d, true, rng),
        }
    }
}

/// Per-row affine map followed by GeLU.
pub fn project_frames<B: Backend>(b: &mut B, raw: &B::Value, proj: &FrameProjector) -> Result<B::Value> {
    let y = proj.linear.forward(b, raw)?;
    b.gelu(&y)
}

/// Sinusoidal encoding of one absolute position.
pub fn positional_row(position: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|c| {
            let pair = (c / 2) as f64;
            let angle = position as f64 / 10_000f64.powf(2.0 * pair / d as f64);
            if c % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Adds encodings for positions `offset..offset + rows` to `block`.
pub fn positional_encode(block: &Tensor, offset: usize) -> Tensor {
    let mut out = block.clone();
    for r in 0..out.rows() {
        for (v, p) in out.row_mut(r).iter_mut().zip(positional_row(offset + r, block.cols())) {
            *v += p;
        }
    }
    out
}

/// A block of consecutive frames starting at absolute index `start`, which
/// may be negative; rows outside the video are zero and flagged invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBlock {
    pub features: Tensor,
    pub start: isize,
    pub valid: Vec<bool>,
}

impl FrameBlock {
    pub fn gather(frames: &Tensor, start: isize, len: usize) -> Self {
        let mut features = Tensor::zeros(len, frames.cols());
        let mut valid = vec![false; len];
        for (r, v) in valid.iter_mut().enumerate() {
            let t = start + r as isize;
            if t >= 0 && (t as usize) < frames.rows() {
                features.row_mut(r).copy_from_slice(frames.row(t as usize));
                *v = true;
            }
        }
        FrameBlock {
            features,
            start,
            valid,
        }
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    /// Encodings for valid rows, zeros elsewhere.
    pub fn positional_table(&self, d: usize) -> Tensor {
        let mut table = Tensor::zeros(self.len(), d);
        for (r, &ok) in self.valid.iter().enumerate() {
            if ok {
                let pos = (self.start + r as isize) as usize;
                table.row_mut(r).copy_from_slice(&positional_row(pos, d));
            }
        }
        table
    }
}

/// The frames around anchor `T`: present `T−M_p+1..=T`, history
/// `T−M_p−M_h+1..=T−M_p`, and optionally future `T+1..=T+M_h`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameWindow {
    pub anchor: usize,
    pub present: FrameBlock,
    pub history: FrameBlock,
    pub future: Option<FrameBlock>,
}

pub fn partition_window(frames: &Tensor, anchor: usize, m_p: usize, m_h: usize, with_future: bool) -> FrameWindow {
    let t = anchor as isize;
    let present_start = t - m_p as isize + 1;
    FrameWindow {
        anchor,
        present: FrameBlock::gather(frames, present_start, m_p),
        history: FrameBlock::gather(frames, present_start - m_h as isize, m_h),
        future: with_future.then(|| FrameBlock::gather(frames, t + 1, m_h)),
    }
}

/// Projects a raw block into the model space: invalid rows become exactly
/// zero and valid rows receive their absolute positional encoding.
pub fn embed_block<B: Backend>(
    b: &mut B,
    block: &FrameBlock,
    proj: &FrameProjector,
    config: &ModelConfig,
) -> Result<B::Value> {
    let raw = b.constant(&block.features)?;
    let mut x = project_frames(b, &raw, proj)?;
    if block.valid.iter().any(|v| !v) {
        let mask = Arc::new(Mask::rows_from(&block.valid, config.d));
        x = b.masked_fill(&x, &mask, 0.0)?;
    }
    if config.positional_encoding {
        let pe = b.constant(&block.positional_table(config.d))?;
        x = b.add(&x, &pe)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{CastParams, Eval};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn indexed_frames(count: usize) -> Tensor {
        Tensor::new(count, 1, (0..count).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn window_index_arithmetic() {
        let w = partition_window(&indexed_frames(200), 100, 8, 32, true);
        assert_eq!(w.present.features.data(), (93..=100).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(w.history.features.data(), (61..=92).map(|i| i as f64).collect::<Vec<_>>());
        let f = w.future.unwrap();
        assert_eq!(f.features.data(), (101..=132).map(|i| i as f64).collect::<Vec<_>>());
        assert!(w.present.valid.iter().chain(&w.history.valid).chain(&f.valid).all(|&v| v));
    }

    #[test]
    fn early_anchor_pads_prefix() {
        let frames = indexed_frames(50).map(|v| v + 1.0);
        let w = partition_window(&frames, 3, 8, 32, false);
        assert_eq!(w.present.valid, [false, false, false, false, true, true, true, true]);
        assert!(w.present.features.data()[..4].iter().all(|&v| v == 0.0));
        assert_eq!(&w.present.features.data()[4..], &[1.0, 2.0, 3.0, 4.0]);
        assert!(w.history.valid.iter().all(|&v| !v));
        assert!(w.future.is_none());
    }

    #[test]
    fn late_anchor_pads_future() {
        let w = partition_window(&indexed_frames(105), 100, 8, 32, true);
        let f = w.future.unwrap();
        assert_eq!(f.valid.iter().filter(|&&v| v).count(), 4);
    }

    #[test]
    fn zero_input_zero_bias_projects_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let proj = FrameProjector::new(&mut store, "frames", 5, 4, &mut rng);
        let params = CastParams::<f64>::new(&store);
        let mut e = Eval::new(&params);
        let x = e.constant(&Tensor::zeros(3, 5)).unwrap();
        let y = project_frames(&mut e, &x, &proj).unwrap();
        assert_eq!(y.shape(), [3, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_is_row_wise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let proj = FrameProjector::new(&mut store, "frames", 5, 4, &mut rng);
        let raw = Tensor::new(3, 5, (0..15).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let params = CastParams::<f64>::new(&store);
        let mut e = Eval::new(&params);
        let x = e.constant(&raw).unwrap();
        let full = project_frames(&mut e, &x, &proj).unwrap();
        for r in 0..3 {
            let x = e.constant(&raw.slice_rows(r, 1).unwrap()).unwrap();
            let one = project_frames(&mut e, &x, &proj).unwrap();
            assert_eq!(one.data(), full.row(r));
        }
    }

    #[test]
    fn positional_encoding_basics() {
        let zero = Tensor::zeros(3, 6);
        let pe = positional_encode(&zero, 0);
        assert_eq!(pe.get(0, 0), 0.0);
        assert_eq!(pe.get(0, 1), 1.0);
        assert_eq!(pe.row(2), positional_row(2, 6).as_slice());
        assert_ne!(positional_encode(&zero, 0), positional_encode(&zero, 5));
    }
}
