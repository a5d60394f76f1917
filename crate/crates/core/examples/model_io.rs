//! Model file round trip, header inspection and corruption detection.

use sprf::estimator::{inspect_model, load_model, save_model, Arch, EstimatorModel, ModelMeta};
use sprf::estimator::network::Layout;
use sprf::rng::stream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let arch = Arch::desk(32, 33);
    let weights = Layout::new(arch).init(&mut stream(4));
    let meta = ModelMeta {
        snr_db: Some(30.0),
        k1: 2,
        k2: 3,
        prior: "uniform".into(),
        seed: 4,
        epochs: 0,
        final_loss: None,
    };
    let model = EstimatorModel::new(arch, meta, weights)?;

    let dir = std::env::temp_dir();
    let path = dir.join("sprf-example-io.bin");
    save_model(&model, &path)?;
    println!("{} parameters written to {}", model.weights().len(), path.display());
    println!("header: {}", inspect_model(&path)?);

    let back = load_model(&path)?;
    let y: Vec<f64> = (0..33).map(|i| 1.0 + (i as f64 * 0.3).cos()).collect();
    let same = model.forward(&y)? == back.forward(&y)?;
    println!("reloaded outputs identical: {same}");

    let mut bytes = std::fs::read(&path)?;
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    let bad = dir.join("sprf-example-io-corrupt.bin");
    std::fs::write(&bad, &bytes)?;
    match load_model(&bad) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("corrupted copy rejected: {e}"),
    }
    Ok(())
}
