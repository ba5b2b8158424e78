//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! cargo test --release --test acceptance

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use streamground::data::{generate_corpus, Dataset, SyntheticSpec};
use streamground::encoding::{partition_window, AnchorRange, ModelConfig};
use streamground::evaluation::{
    evaluate_dataset, recall_at_n_iou, score_candidates_full, score_candidates_sparse, sparse_schedule, temporal_iou, EvalOptions,
    QueryCandidates,
};
use streamground::model::TwinNet;
use streamground::numerics::{grad_check_params, grad_check_with, CastParams, Eval, ParamStore, Tape, Tensor};
use streamground::streaming::{bench_paths, stream_init, stream_video, StreamModel};
use streamground::training::loss::{kd_node, probabilities, weighted_ce_node};
use streamground::training::{build_sample_at, gaussian_labels, kd_loss, sample_loss, train, weighted_ce, GroundTruth, LossBreakdown};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> streamground::Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(&mut *rng)).collect()).expect("shape matches data")
}

fn corpus(spec: &SyntheticSpec) -> Dataset {
    Dataset::from_corpus(&generate_corpus(spec).expect("valid synthetic spec"))
}

fn split(data: Dataset, train_videos: usize) -> (Dataset, Dataset) {
    let mut videos = data.videos;
    let val = videos.split_off(train_videos);
    (Dataset { videos }, Dataset { videos: val })
}

fn recall_at(data: &Dataset, store: &ParamStore, net: TwinNet, options: &EvalOptions, n: usize, m: f64) -> streamground::Result<f64> {
    let model = Arc::new(StreamModel::<f64>::new(net, store));
    Ok(evaluate_dataset(data, &model, options)?.recall(n, m).expect("n and m are in the grid"))
}

/// Reverse-mode gradients of every module, through the full objective and
/// through each loss alone, against central differences.
fn gradient_suite() -> streamground::Result<Outcome> {
    const GROUPS: [&str; 9] = [
        "frame_projection",
        "query",
        "ordinary.compressor",
        "ordinary.decoder",
        "ordinary.predictor",
        "prophet.history_compressor",
        "prophet.future_compressor",
        "prophet.decoder",
        "prophet.predictor",
    ];
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let data = corpus(&SyntheticSpec {
            num_videos: 1,
            frames_per_video: 80,
            noise_scale: 0.3,
            seed,
            ..Default::default()
        });
        let config = ModelConfig { seed, ..ModelConfig::desk() };
        let (net, store) = TwinNet::new(&config)?;
        let video = &data.videos[0];
        let q = rng.random_range(0..video.queries.len());
        let (t_s, t_e) = (video.queries[q].t_s, video.queries[q].t_e);
        let sample = build_sample_at(video, q, rng.random_range(t_s..=t_e + config.m_p).min(79), &config);
        let frozen = {
            let mut tape = Tape::new(&store);
            sample_loss(&mut tape, &net, &sample, None)?.constants
        };
        let mut coords = Vec::new();
        for group in GROUPS {
            let ids: Vec<_> = store.iter().filter(|(_, p)| p.name.starts_with(group)).map(|(id, p)| (id, p.value.len())).collect();
            assert!(!ids.is_empty(), "no parameters under {group}");
            for _ in 0..3 {
                let (id, len) = ids[rng.random_range(0..ids.len())];
                coords.push((id, rng.random_range(0..len)));
            }
        }
        checked += coords.len();
        worst = worst.max(grad_check_params(
            &store,
            |tape| Ok(sample_loss(tape, &net, &sample, Some(&frozen))?.total),
            &coords,
            1e-5,
        )?);

        // Each loss alone with respect to its logits.
        let rows = config.m_p;
        let logits = random(rows, 3, &mut rng);
        let probs = probabilities(&logits);
        let positions: Vec<isize> = (0..rows as isize).collect();
        let labels = gaussian_labels(2, 5, &positions, &vec![true; rows], [0.25, 0.21, 0.25]);
        let teacher = probabilities(&random(rows, 3, &mut rng));
        let empty = ParamStore::new();
        worst = worst.max(grad_check_with(&empty, |t, z| weighted_ce_node(t, z, &labels, &probs, config.gamma), &logits, 1e-5)?);
        worst = worst.max(grad_check_with(&empty, |t, z| kd_node(t, z, &teacher, &probs, &labels, config.gamma), &logits, 1e-5)?);
        checked += 2 * logits.len();
    }
    outcome(worst < 1e-4, format!("20 seeds, {checked} coordinates, max relative error {worst:.2e} (< 1e-4)"))
}

fn stream_config(seed: u64, m_h: usize) -> ModelConfig {
    ModelConfig {
        m_h,
        seed,
        ..ModelConfig::desk()
    }
}

fn streaming_equivalence() -> streamground::Result<Outcome> {
    let mut worst = 0.0_f64;
    let mut coherent = true;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let config = stream_config(seed, 32);
        let (net, store) = TwinNet::new(&config)?;
        let words = random(rng.random_range(1..6), config.word_dim, &mut rng);
        let frames = random(200, config.frame_dim, &mut rng);
        let mut fast = stream_init(Arc::new(StreamModel::<f64>::new(net, &store)), &words)?;
        let mut slow = fast.clone();
        for t in 0..200 {
            let a = fast.step(frames.row(t))?;
            let b = slow.step_reference(frames.row(t))?;
            worst = worst.max((a.s - b.s).abs()).max((a.m - b.m).abs()).max((a.e - b.e).abs());
            let cached = fast.cached_first_layer();
            let fresh = fast.first_layer_from_frames()?;
            coherent &= cached.vision == fresh.vision && cached.language == fresh.language;
        }
    }
    outcome(
        worst <= 1e-9 && coherent,
        format!("50 streams x 200 steps, max |incremental - reference| {worst:.1e} (<= 1e-9), caches bit-identical: {coherent}"),
    )
}

fn amortized_cost() -> streamground::Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for m_h in [32, 64, 512] {
        let mut rng = ChaCha8Rng::seed_from_u64(m_h as u64);
        let config = stream_config(3, m_h);
        let (net, store) = TwinNet::new(&config)?;
        let mut state = stream_init(Arc::new(StreamModel::<f64>::new(net, &store)), &random(3, config.word_dim, &mut rng))?;
        let frames = random(m_h + config.m_p + 4, config.frame_dim, &mut rng);
        let mut incremental = Vec::new();
        for t in 0..frames.rows() - 1 {
            state.step(frames.row(t))?;
            incremental.push(state.last_step_rows().total());
        }
        let mut reference = state.clone();
        reference.step_reference(frames.row(frames.rows() - 1))?;
        let reference = reference.last_step_rows().total();
        let ok = incremental.iter().all(|&c| c == 2) && reference == 2 * m_h;
        pass &= ok;
        let max = incremental.iter().max().copied().unwrap_or(0);
        parts.push(format!("M_h={m_h}: incremental {max}, reference {reference}"));
    }
    outcome(pass, format!("fresh first-layer rows per step: {} (expected 2 and 2*M_h)", parts.join("; ")))
}

fn throughput() -> streamground::Result<Outcome> {
    let config = ModelConfig::large();
    let (net, store) = TwinNet::new(&config)?;
    let model = Arc::new(StreamModel::<f32>::new(net, &store));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let frames = random(72, config.frame_dim, &mut rng);
    let words = random(6, config.word_dim, &mut rng);
    let report = bench_paths(&model, &words, &frames, 8)?;
    outcome(
        report.speedup() >= 1.3,
        format!(
            "d=512 M_h=512 M_p=32 n=16 f32: incremental {:.2} steps/s, reference {:.2} steps/s, speedup {:.3}x (>= 1.3)",
            report.incremental_sps,
            report.reference_sps,
            report.speedup()
        ),
    )
}

fn learning_sanity() -> streamground::Result<Outcome> {
    let data = corpus(&SyntheticSpec::default());
    // Whole-video anchors: the event window never shows a query the other
    // event of its video, and the network then fires on both.
    let config = ModelConfig {
        epochs: 100,
        anchor_range: AnchorRange::Video,
        ..ModelConfig::desk()
    };
    let run = train(&data, &config, None)?;
    let r = recall_at(&data, &run.store, run.net, &EvalOptions::default(), 1, 0.5)?;
    outcome(
        r >= 90.0,
        format!("d=64, {} annotations, {} epochs: training R@1,IoU=0.5 = {r:.1}% (>= 90)", data.annotation_count(), config.epochs),
    )
}

fn small_config(seed: u64, lambda: f64, epochs: usize) -> ModelConfig {
    ModelConfig {
        d: 32,
        m_h: 16,
        n: 4,
        heads: 4,
        lambda,
        epochs,
        seed,
        anchor_range: AnchorRange::Video,
        ..ModelConfig::desk()
    }
}

fn distillation_direction() -> streamground::Result<Outcome> {
    let mut with_kd = Vec::new();
    let mut without = Vec::new();
    for seed in 0..3u64 {
        let data = corpus(&SyntheticSpec {
            num_videos: 60,
            noise_scale: 0.3,
            seed: 300 + seed,
            ..Default::default()
        });
        let (train_set, val_set) = split(data, 40);
        for (lambda, sink) in [(0.3, &mut with_kd), (0.0, &mut without)] {
            let run = train(&train_set, &small_config(seed, lambda, 60), None)?;
            sink.push(recall_at(&val_set, &run.store, run.net, &EvalOptions::default(), 1, 0.5)?);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (a, b) = (mean(&with_kd), mean(&without));
    outcome(
        a >= b - 2.0,
        format!("validation R@1,IoU=0.5 over 3 seeds: lambda=0.3 {with_kd:.1?} mean {a:.1}, lambda=0 {without:.1?} mean {b:.1} (mean gap >= -2)"),
    )
}

fn label_loss_suite() -> streamground::Result<Outcome> {
    let alphas = [0.25, 0.21, 0.25];
    let positions: Vec<isize> = (-5..30).collect();
    let g = gaussian_labels(4, 14, &positions, &vec![true; positions.len()], alphas);
    let at = |t: isize, c: usize| g.values.get((t + 5) as usize, c);
    let peaks = at(4, 0) == 1.0 && at(9, 1) == 1.0 && at(14, 2) == 1.0;
    let symmetric = (1..10).all(|k| at(4 - k, 0) == at(4 + k, 0) && at(14 - k, 2) == at(14 + k, 2));
    // σ = 0.25·10 = 2.5, so five frames from the peak is two σ.
    let two_sigma = at(9, 0);
    let tail_ok = (two_sigma - 0.13534).abs() <= 1e-5;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let labels = GroundTruth {
        values: Tensor::new(4, 3, (0..12).map(|_| rng.random_range(0.0..=1.0)).collect())?,
        valid: vec![true; 4],
    };
    let ce_zero_at_match = weighted_ce(&labels, &labels.values, 3.0) == 0.0;
    let off = labels.values.map(|y| (y + 0.2).min(0.95));
    let ce_positive_off = weighted_ce(&labels, &off, 3.0) > 0.0;

    let identity = (0..100).all(|_| {
        let (a, b, c, l) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..=1.0));
        (LossBreakdown::new(a, b, c, l).total - ((1.0 - l) * a + b + l * c)).abs() <= 1e-12
    });

    let logits = random(4, 3, &mut rng);
    let student = probabilities(&logits);
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let z = tape.input(logits.clone())?;
    let loss = kd_node(&mut tape, z, &student, &student, &labels, 3.0)?;
    let grad = tape.backward(loss)?.wrt(z, logits.shape());
    let kd_flat = grad.data().iter().all(|&g| g == 0.0) && kd_loss(&student, &student, &labels, 3.0).is_finite();

    let pass = peaks && symmetric && tail_ok && ce_zero_at_match && ce_positive_off && identity && kd_flat;
    outcome(
        pass,
        format!(
            "peaks {peaks}, symmetry {symmetric}, y at 2 sigma {two_sigma:.5} (0.13534 +- 1e-5), CE zero iff match {}, breakdown identity {identity}, KD gradient zero at teacher=student {kd_flat}",
            ce_zero_at_match && ce_positive_off
        ),
    )
}

fn evaluation_suite() -> streamground::Result<Outcome> {
    let mut notes = Vec::new();
    let counts_ok = [64usize, 256, 1024].iter().all(|&l| {
        let count: usize = sparse_schedule(l).iter().map(|&(len, stride)| (l - len) / stride + 1).sum();
        let bound = 8 * l * (l as f64).log2().ceil() as usize + 64;
        notes.push(format!("L={l}: {count} <= {bound}"));
        count <= bound
    });

    let uniform = vec![0.5; 256];
    let spans: Vec<(usize, usize)> = score_candidates_sparse(&uniform, &uniform).iter().map(|c| (c.i, c.j)).collect();
    let mut coverage = f64::INFINITY;
    for a in 0..256 {
        for b in a..256 {
            coverage = coverage.min(spans.iter().map(|&c| temporal_iou(c, (a, b))).fold(0.0, f64::max));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let queries: Vec<QueryCandidates> = (0..200)
        .map(|k| {
            let len = rng.random_range(4..60);
            let s: Vec<f64> = (0..len).map(|_| rng.random()).collect();
            let e: Vec<f64> = (0..len).map(|_| rng.random()).collect();
            let a = rng.random_range(0..len);
            QueryCandidates {
                query_id: format!("q{k}"),
                candidates: score_candidates_full(&s, &e),
                ground_truth: (a, rng.random_range(a..len)),
            }
        })
        .collect();
    let (ns, ms) = ([1, 2, 5, 10], [0.1, 0.3, 0.5, 0.7, 0.9]);
    let r = recall_at_n_iou(&queries, &ns, &ms);
    let get = |n, m| r.recall(n, m).expect("grid point");
    let monotone = ns.windows(2).all(|w| ms.iter().all(|&m| get(w[1], m) >= get(w[0], m)))
        && ms.windows(2).all(|w| ns.iter().all(|&n| get(n, w[1]) <= get(n, w[0])));

    // Sparse versus exhaustive candidates from a trained model. With few
    // queries one query is several points, so use 100.
    let data = corpus(&SyntheticSpec {
        num_videos: 50,
        frames_per_video: 64,
        noise_scale: 0.3,
        seed: 64,
        ..Default::default()
    });
    let run = train(&data, &small_config(0, 0.3, 60), None)?;
    let model = Arc::new(StreamModel::<f64>::new(run.net, &run.store));
    let sparse = evaluate_dataset(&data, &model, &EvalOptions::default())?;
    let full = evaluate_dataset(&data, &model, &EvalOptions { full_candidates: true, ..Default::default() })?;
    let gaps: Vec<f64> = [0.3, 0.5, 0.7]
        .iter()
        .map(|&m| (full.recall(5, m).expect("grid point") - sparse.recall(5, m).expect("grid point")).abs())
        .collect();
    let gap = gaps.iter().copied().fold(0.0, f64::max);

    let pass = counts_ok && coverage >= 0.5 && monotone && gap <= 5.0;
    outcome(
        pass,
        format!(
            "counts {}; L=256 worst best-IoU {coverage:.3} (>= 0.5); monotone {monotone}; sparse vs full R@5 gap at IoU 0.3/0.5/0.7 {gaps:.1?} points, {} queries on 64-frame videos (<= 5)",
            notes.join(", "),
            sparse.queries
        ),
    )
}

fn causality_suite() -> streamground::Result<Outcome> {
    let mut future_ok = true;
    let mut present_ok = true;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
        let config = stream_config(seed, 32);
        let (net, store) = TwinNet::new(&config)?;
        let words = random(3, config.word_dim, &mut rng);
        let frames = random(80, config.frame_dim, &mut rng);
        let model = Arc::new(StreamModel::<f64>::new(net.clone(), &store));
        let base = stream_video(&model, &words, &frames)?;
        let cut = rng.random_range(0..79);
        let mut altered = frames.clone();
        for t in cut + 1..80 {
            altered.row_mut(t).copy_from_slice(random(1, config.frame_dim, &mut rng).row(0));
        }
        let replay = stream_video(&model, &words, &altered)?;
        future_ok &= base[..=cut] == replay[..=cut];

        let params = CastParams::<f64>::new(&store);
        let mut e = Eval::new(&params);
        let q = net.encode_query(&mut e, &words)?.q;
        let anchor = rng.random_range(config.m_p..80);
        let window = partition_window(&frames, anchor, config.m_p, config.m_h, false);
        let reference = net.ordinary_forward(&mut e, &window, &q)?.probs;
        for t in 0..config.m_p - 1 {
            let mut perturbed = window.clone();
            for j in t + 1..config.m_p {
                perturbed.present.features.row_mut(j).copy_from_slice(random(1, config.frame_dim, &mut rng).row(0));
            }
            let probs = net.ordinary_forward(&mut e, &perturbed, &q)?.probs;
            present_ok &= (0..=t).all(|r| probs.row(r) == reference.row(r));
        }
    }
    outcome(
        future_ok && present_ok,
        format!("10 seeds: emitted outputs unchanged by later frames {future_ok}; present rows <= t unchanged by rows > t {present_ok} (bit-exact)"),
    )
}

type Criterion = (&'static str, Duration, fn() -> streamground::Result<Outcome>);

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient suite", Duration::from_secs(120), gradient_suite),
        ("streaming equivalence", Duration::from_secs(60), streaming_equivalence),
        ("amortized cost", Duration::from_secs(60), amortized_cost),
        ("throughput", Duration::from_secs(300), throughput),
        ("learning sanity", Duration::from_secs(900), learning_sanity),
        ("distillation direction", Duration::from_secs(900), distillation_direction),
        ("label and loss units", Duration::from_secs(60), label_loss_suite),
        ("evaluation suite", Duration::from_secs(300), evaluation_suite),
        ("causality suite", Duration::from_secs(60), causality_suite),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let id = (k + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && took <= *budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!pass);
        println!(
            "{} {id}. {name}: {detail} [{:.1}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
