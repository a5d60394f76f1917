//! Train a small support estimator, save it and run PRED with it.
//!
//! Usage: `cargo run --release --example train_estimator [epochs]`

use sprf::estimator::{save_model, train_with_log, Arch, TrainConfig};
use sprf::pred::{pred, PredConfig};
use sprf::rng::stream;
use sprf::signal::{Instance, Prior};
use sprf::support::recovery_metrics;

fn main() -> sprf::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let (n, m) = (32, 64);
    let arch = Arch::desk(n, m);
    let cfg = TrainConfig {
        epochs,
        batches: 100,
        seed: 1,
        ..TrainConfig::desk()
    };

    let (model, report) = train_with_log(&cfg, arch, |b| {
        if b.batch % 50 == 0 {
            println!("epoch {} batch {:3}: loss {:.5} lr {:.1e}", b.epoch, b.batch, b.loss, b.lr);
        }
    })?;
    println!("epoch losses: {:?}", report.epoch_losses);

    let path = std::env::temp_dir().join("sprf-example-model.bin");
    save_model(&model, &path)?;
    println!("saved {}", path.display());

    let k = 3;
    let mut hits = 0;
    for seed in 0..20 {
        let inst = Instance::generate(Prior::Uniform, n, m, k, 30.0, 1000 + seed)?;
        let r = pred(&inst.problem, k, &model, &PredConfig::default(), &mut stream(seed))?;
        hits += recovery_metrics(&r.support, inst.signal.support(), k)?.hit as usize;
    }
    println!("PRED with the trained estimator: {hits}/20 hits at k = {k}");
    Ok(())
}
