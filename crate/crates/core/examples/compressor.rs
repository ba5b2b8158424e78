//! Walks through one language-guided compressor: branch scores, pooled
//! tokens, router gates and the ablation switches.
//!
//! cargo run --example compressor

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use streamground::compressor::{language_branch, vision_branch, Compressor};
use streamground::encoding::ModelConfig;
use streamground::numerics::{Axis, Backend, CastParams, Eval, ParamStore, Tensor};

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(&mut *rng)).collect()).expect("shape")
}

fn main() -> streamground::Result<()> {
    let config = ModelConfig {
        d: 16,
        m_h: 12,
        n: 3,
        k: 2,
        ..ModelConfig::desk()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let compressor = Compressor::new(&mut store, "lfc", &config, &mut rng);
    let x = random(config.m_h, config.d, &mut rng);
    let q = random(1, config.d, &mut rng);

    let params = CastParams::<f64>::new(&store);
    let mut e = Eval::new(&params);
    let xv = e.constant(&x)?;
    let qv = e.constant(&q)?;
    let layer = compressor.first_layer().expect("LFC enabled");
    let (_, sv) = vision_branch(&mut e, &xv, layer.vision.as_ref().expect("vision branch"))?;
    let (_, sl) = language_branch(&mut e, &xv, &qv, layer.language.as_ref().expect("language branch"))?;
    // Each score column is a distribution over the M_h input frames.
    println!("vision score column sums   {:?}", sv.sum_rows().data());
    println!("language score column sums {:?}", sl.sum_rows().data());

    let out = compressor.compress(&mut e, &xv, &qv, None)?;
    println!("memory shape {:?}", out.memory.shape());
    for (k, g) in out.gates.iter().enumerate() {
        println!("layer {k}: g_V = {:.4}, g_L = {:.4}", g.vision.item()?, g.language.item()?);
    }

    for (name, cfg) in [
        ("w/o LFC-l", ModelConfig { disable_lfc_language: true, ..config.clone() }),
        ("w/o LFC-v", ModelConfig { disable_lfc_vision: true, ..config.clone() }),
        ("w/o LFC", ModelConfig { disable_lfc: true, ..config.clone() }),
    ] {
        let mut store = ParamStore::new();
        let c = Compressor::new(&mut store, "lfc", &cfg, &mut rng);
        let params = CastParams::<f64>::new(&store);
        let mut e = Eval::new(&params);
        let xv = e.constant(&x)?;
        let qv = e.constant(&q)?;
        let m = c.compress(&mut e, &xv, &qv, None)?.memory;
        let mean = m.mean(Axis::Rows)?;
        let norm = mean.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        println!("{name:10} memory {:?}, {} parameters, mean row norm {norm:.4}", m.shape(), store.len());
    }
    Ok(())
}
