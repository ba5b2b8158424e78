//! Mini-batch AdamW training of both networks.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::encoding::ModelConfig;
use crate::error::{Error, Result};
use crate::model::TwinNet;
use crate::numerics::{AdamWConfig, AdamWState, ParamStore, Tape, Tensor, WarmupCosine};
use crate::training::checkpoint::save_checkpoint;
use crate::training::loss::LossBreakdown;
use crate::training::sample::{build_sample, sample_loss, SampleInstance};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub losses: LossBreakdown,
    pub lr: f64,
}

pub const METRICS_HEADER: &str = "step,L_ord,L_pro,L_kd,total,lr";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let l = r.losses;
        writeln!(out, "{},{},{},{},{},{}", r.step, l.l_ord, l.l_pro, l.l_kd, l.total, r.lr).expect("writing to a String");
    }
    out
}

pub struct TrainOutcome {
    pub net: TwinNet,
    pub store: ParamStore,
    pub metrics: Vec<MetricsRow>,
}

/// Runs `f` on `workers` threads, or inline when `workers == 1`.
pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers <= 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::contract(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Mean gradient and mean losses over `samples`. Per-sample results are
/// reduced in sample order, so the outcome does not depend on scheduling.
pub fn batch_gradients(
    net: &TwinNet,
    store: &ParamStore,
    samples: &[SampleInstance],
    parallel: bool,
    step: usize,
) -> Result<(Vec<Option<Tensor>>, LossBreakdown)> {
    let one = |s: &SampleInstance| -> Result<(Vec<Option<Tensor>>, LossBreakdown)> {
        let diverged = |reason: String| Error::Diverged {
            step,
            sample: s.query_id.clone(),
            reason,
        };
        let mut tape = Tape::new(store);
        let out = sample_loss(&mut tape, net, s, None).map_err(|e| match e {
            Error::Numeric { op } => diverged(format!("non-finite value in {op} at anchor {}", s.anchor)),
            other => other,
        })?;
        if !out.breakdown.total.is_finite() {
            return Err(diverged(format!("loss {} at anchor {}", out.breakdown.total, s.anchor)));
        }
        Ok((tape.backward(out.total)?.into_param_grads(), out.breakdown))
    };
    let results: Vec<Result<_>> = if parallel {
        samples.par_iter().map(one).collect()
    } else {
        samples.iter().map(one).collect()
    };
    let mut grads: Vec<Option<Tensor>> = vec![None; store.len()];
    let mut losses = LossBreakdown::default();
    for r in results {
        let (g, l) = r?;
        losses.add(&l);
        for (acc, g) in grads.iter_mut().zip(g) {
            match (acc.as_mut(), g) {
                (Some(a), Some(g)) => a.add_assign(&g)?,
                (None, Some(g)) => *acc = Some(g),
                (_, None) => {}
            }
        }
    }
    let inv = 1.0 / samples.len().max(1) as f64;
    for g in grads.iter_mut().flatten() {
        *g = g.scale(inv);
    }
    Ok((grads, losses.scaled(inv)))
}

/// Draws one epoch of samples: every annotation `samples_per_annotation`
/// times, shuffled.
pub fn epoch_samples(dataset: &Dataset, config: &ModelConfig, rng: &mut ChaCha8Rng) -> Vec<SampleInstance> {
    let mut order: Vec<(usize, usize)> = dataset
        .annotation_indices()
        .into_iter()
        .flat_map(|a| std::iter::repeat_n(a, config.samples_per_annotation))
        .collect();
    order.shuffle(rng);
    order
        .into_iter()
        .map(|(v, q)| build_sample(&dataset.videos[v], q, config, rng))
        .collect()
}

pub fn steps_per_epoch(dataset: &Dataset, config: &ModelConfig) -> usize {
    (dataset.annotation_count() * config.samples_per_annotation).div_ceil(config.batch_size)
}

/// Trains from the initialisation given by `config.seed`. When `out_dir` is
/// set, writes `checkpoint/` and `metrics.csv` there.
pub fn train(dataset: &Dataset, config: &ModelConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let (net, store) = TwinNet::new(config)?;
    train_from(dataset, net, store, out_dir)
}

pub fn train_from(dataset: &Dataset, net: TwinNet, mut store: ParamStore, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let config = net.config.clone();
    dataset.check_dims(config.frame_dim, config.word_dim)?;
    let mut adam = AdamWState::new(
        &store,
        AdamWConfig {
            weight_decay: config.weight_decay,
            ..Default::default()
        },
    );
    let total_steps = config.epochs * steps_per_epoch(dataset, &config);
    let schedule = WarmupCosine::new(config.lr, total_steps, config.warmup_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut metrics = Vec::with_capacity(total_steps);
    let parallel = config.workers > 1;
    let mut step = 0;
    with_workers(config.workers, || -> Result<()> {
        for _ in 0..config.epochs {
            let samples = epoch_samples(dataset, &config, &mut rng);
            for batch in samples.chunks(config.batch_size) {
                let (grads, losses) = batch_gradients(&net, &store, batch, parallel, step)?;
                let lr = schedule.lr(step);
                if lr > 0.0 {
                    adam.step(&mut store, &grads, lr)?;
                }
                metrics.push(MetricsRow { step, losses, lr });
                step += 1;
            }
        }
        Ok(())
    })??;
    if let Some(dir) = out_dir {
        save_checkpoint(dir.join("checkpoint"), &config, &store)?;
        let path = dir.join("metrics.csv");
        std::fs::write(&path, metrics_csv(&metrics)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(TrainOutcome { net, store, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_corpus, SyntheticSpec};

    fn tiny() -> (Dataset, ModelConfig) {
        let spec = SyntheticSpec {
            num_videos: 3,
            frames_per_video: 40,
            raw_dim: 6,
            event_length_range: (4, 10),
            words_per_query: 2,
            ..Default::default()
        };
        let data = Dataset::from_corpus(&generate_corpus(&spec).unwrap());
        let cfg = ModelConfig {
            d: 16,
            m_p: 4,
            m_h: 8,
            n: 3,
            heads: 2,
            frame_dim: 6,
            word_dim: 6,
            epochs: 2,
            batch_size: 4,
            samples_per_annotation: 2,
            ..ModelConfig::desk()
        };
        (data, cfg)
    }

    #[test]
    fn same_seed_same_trajectory_any_worker_count() {
        let (data, cfg) = tiny();
        let a = train(&data, &cfg, None).unwrap();
        let b = train(&data, &cfg, None).unwrap();
        let c = train(&data, &ModelConfig { workers: 3, ..cfg.clone() }, None).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.metrics, c.metrics);
        assert_eq!(a.metrics.len(), 2 * steps_per_epoch(&data, &cfg));
    }

    #[test]
    fn fixed_batch_loss_decreases() {
        let (data, cfg) = tiny();
        let (net, mut store) = TwinNet::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = epoch_samples(&data, &cfg, &mut rng);
        let mut adam = AdamWState::new(&store, AdamWConfig::default());
        let mut first = None;
        let mut last = 0.0;
        for step in 0..50 {
            let (g, l) = batch_gradients(&net, &store, &batch, false, step).unwrap();
            first.get_or_insert(l.total);
            last = l.total;
            adam.step(&mut store, &g, 3e-3).unwrap();
        }
        assert!(last < 0.5 * first.unwrap(), "{first:?} -> {last}");
    }

    #[test]
    fn outputs_written() {
        let (data, cfg) = tiny();
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig { epochs: 1, ..cfg };
        let out = train(&data, &cfg, Some(dir.path())).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(csv.starts_with(METRICS_HEADER));
        assert_eq!(csv.lines().count(), out.metrics.len() + 1);
        assert!(dir.path().join("checkpoint/index.txt").exists());
    }
}
