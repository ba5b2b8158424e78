//! Training windows and the per-sample objective.

use rand::Rng;

use crate::data::VideoData;
use crate::encoding::{partition_window, AnchorRange, FrameWindow, ModelConfig};
use crate::error::Result;
use crate::model::TwinNet;
use crate::numerics::{NodeId, Tape, Tensor};
use crate::training::labels::{gaussian_labels, GroundTruth};
use crate::training::loss::{kd_node, probabilities, weighted_ce_node, LossBreakdown};

#[derive(Clone, Debug)]
pub struct SampleInstance {
    pub query_id: String,
    pub anchor: usize,
    pub window: FrameWindow,
    pub words: Tensor,
    pub labels: GroundTruth,
}

/// Uniform over `[t_s − M_h, t_e + M_p]` clipped to the video, or over
/// the whole video.
pub fn sample_anchor(t_s: usize, t_e: usize, video_len: usize, config: &ModelConfig, rng: &mut impl Rng) -> usize {
    match config.anchor_range {
        AnchorRange::Event => {
            let lo = t_s.saturating_sub(config.m_h);
            let hi = (t_e + config.m_p).min(video_len - 1);
            rng.random_range(lo..=hi)
        }
        AnchorRange::Video => rng.random_range(0..video_len),
    }
}

/// Window and labels for query `query` of `video` anchored at `anchor`.
pub fn build_sample_at(video: &VideoData, query: usize, anchor: usize, config: &ModelConfig) -> SampleInstance {
    let q = &video.queries[query];
    let window = partition_window(&video.frames, anchor, config.m_p, config.m_h, true);
    let positions: Vec<isize> = (0..config.m_p).map(|r| window.present.start + r as isize).collect();
    let labels = gaussian_labels(
        q.t_s,
        q.t_e,
        &positions,
        &window.present.valid,
        [config.alpha_s, config.alpha_m, config.alpha_e],
    );
    SampleInstance {
        query_id: q.query_id.clone(),
        anchor,
        window,
        words: q.words.clone(),
        labels,
    }
}

pub fn build_sample(video: &VideoData, query: usize, config: &ModelConfig, rng: &mut impl Rng) -> SampleInstance {
    let q = &video.queries[query];
    let anchor = sample_anchor(q.t_s, q.t_e, video.frames.rows(), config, rng);
    build_sample_at(video, query, anchor, config)
}

/// Probabilities treated as constants by the losses.
#[derive(Clone, Debug)]
pub struct LossConstants {
    pub ordinary: Tensor,
    pub prophet: Option<Tensor>,
}

pub struct SampleLoss {
    pub total: NodeId,
    pub breakdown: LossBreakdown,
    pub constants: LossConstants,
}

/// Records the full objective of one sample. With `frozen`, the constant
/// weights and teacher are taken from there instead of the current point,
/// which makes the recorded function smooth for finite differences.
pub fn sample_loss(tape: &mut Tape, net: &TwinNet, sample: &SampleInstance, frozen: Option<&LossConstants>) -> Result<SampleLoss> {
    let c = &net.config;
    let q = net.encode_query(tape, &sample.words)?.q;
    let ord = net.ordinary_forward(tape, &sample.window, &q)?;
    let p_ord = match frozen {
        Some(f) => f.ordinary.clone(),
        None => probabilities(tape.value(ord.logits)),
    };
    let l_ord = weighted_ce_node(tape, ord.logits, &sample.labels, &p_ord, c.gamma)?;
    let mut total = tape.scale(l_ord, 1.0 - c.lambda)?;
    let (mut v_pro, mut v_kd, mut p_pro_out) = (0.0, 0.0, None);
    if !c.disable_prophet {
        let pro = net.prophet_forward(tape, &sample.window, &q)?;
        let p_pro = match frozen.and_then(|f| f.prophet.clone()) {
            Some(p) => p,
            None => probabilities(tape.value(pro.logits)),
        };
        let l_pro = weighted_ce_node(tape, pro.logits, &sample.labels, &p_pro, c.gamma)?;
        total = tape.add(total, l_pro)?;
        v_pro = tape.value(l_pro).item()?;
        if c.lambda > 0.0 {
            let l_kd = kd_node(tape, ord.logits, &p_pro, &p_ord, &sample.labels, c.gamma)?;
            let scaled = tape.scale(l_kd, c.lambda)?;
            total = tape.add(total, scaled)?;
            v_kd = tape.value(l_kd).item()?;
        } else {
            v_kd = crate::training::loss::kd_loss(&p_pro, &p_ord, &sample.labels, c.gamma);
        }
        p_pro_out = Some(p_pro);
    }
    let v_ord = tape.value(l_ord).item()?;
    Ok(SampleLoss {
        total,
        breakdown: LossBreakdown {
            l_ord: v_ord,
            l_pro: v_pro,
            l_kd: v_kd,
            total: tape.value(total).item()?,
        },
        constants: LossConstants {
            ordinary: p_ord,
            prophet: p_pro_out,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, QuerySample};
    use crate::numerics::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn video(len: usize, t_s: usize, t_e: usize) -> VideoData {
        VideoData {
            video_id: "v".into(),
            frames: Tensor::new(len, 2, (0..2 * len).map(|i| i as f64).collect()).unwrap(),
            queries: vec![QuerySample {
                query_id: "v#0".into(),
                words: Tensor::zeros(2, 2),
                t_s,
                t_e,
            }],
        }
    }

    #[test]
    fn anchor_at_start_peaks_start_label() {
        let cfg = ModelConfig::desk();
        let v = video(100, 40, 50);
        let s = build_sample_at(&v, 0, 40, &cfg);
        assert_eq!(s.labels.values.get(cfg.m_p - 1, 0), 1.0);
    }

    #[test]
    fn far_anchor_has_small_labels() {
        let cfg = ModelConfig::desk();
        let v = video(200, 100, 120);
        // σ_s = 5, so 3σ = 15 frames; the whole present block sits earlier.
        let s = build_sample_at(&v, 0, 100 - 16, &cfg);
        assert!(s.labels.values.data().iter().all(|&y| y < 0.012));
    }

    #[test]
    fn anchors_stay_in_range_and_are_reproducible() {
        let cfg = ModelConfig::desk();
        let v = video(60, 5, 50);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200).map(|_| build_sample(&v, 0, &cfg, &mut rng).anchor).collect::<Vec<_>>()
        };
        let a = draw(3);
        assert_eq!(a, draw(3));
        assert_eq!(a.iter().max(), Some(&58));
        assert_eq!(a.iter().min(), Some(&0));
    }

    #[test]
    fn video_anchors_reach_past_the_event() {
        let cfg = ModelConfig {
            anchor_range: AnchorRange::Video,
            ..ModelConfig::desk()
        };
        let v = video(200, 5, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<usize> = (0..400).map(|_| build_sample(&v, 0, &cfg, &mut rng).anchor).collect();
        assert!(a.iter().all(|&t| t < 200));
        assert!(a.iter().filter(|&&t| t > 20 + cfg.m_p).count() > 200);
        assert!(a.iter().any(|&t| t >= 180));
    }

    #[test]
    fn disabled_prophet_contributes_nothing() {
        let cfg = ModelConfig {
            disable_prophet: true,
            lambda: 0.4,
            d: 8,
            heads: 2,
            frame_dim: 2,
            word_dim: 2,
            ..ModelConfig::desk()
        };
        let (net, store): (TwinNet, ParamStore) = TwinNet::new(&cfg).unwrap();
        let data = Dataset {
            videos: vec![video(80, 20, 30)],
        };
        let s = build_sample_at(&data.videos[0], 0, 25, &cfg);
        let mut tape = Tape::new(&store);
        let out = sample_loss(&mut tape, &net, &s, None).unwrap();
        let b = out.breakdown;
        assert_eq!((b.l_pro, b.l_kd), (0.0, 0.0));
        assert!((b.total - 0.6 * b.l_ord).abs() < 1e-12);
        let grads = tape.backward(out.total).unwrap();
        for (id, _) in store.iter() {
            if net.is_prophet_param(id) {
                assert!(!grads.reached(id));
            }
        }
    }
}
