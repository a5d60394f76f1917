//! GESPAR support recovery over a handful of instances.

use sprf::gespar::{autocorr_support_sets, gespar, GesparConfig};
use sprf::rng::stream;
use sprf::signal::{Instance, Prior};
use sprf::support::recovery_metrics;

fn main() -> sprf::Result<()> {
    let (n, m, k) = (32, 64, 4);
    let cfg = GesparConfig::default();
    let mut hits = 0;
    for seed in 0..10 {
        let inst = Instance::generate(Prior::Uniform, n, m, k, 30.0, seed)?;
        let sets = autocorr_support_sets(&inst.problem, k)?;
        let r = gespar(&inst.problem, k, &cfg, &mut stream(100 + seed))?;
        let met = recovery_metrics(&r.support, inst.signal.support(), k)?;
        hits += met.hit as usize;
        println!(
            "seed {seed}: |v1| = {:2}, |v2| = {:2}, eta = {:4}, hit = {}, truth {:?}, found {:?}",
            sets.v1.len(),
            sets.v2.len(),
            r.eta,
            met.hit as u8,
            inst.signal.support().one_based(),
            r.support.one_based()
        );
    }
    println!("{hits}/10 supports recovered up to shift and reflection");
    Ok(())
}
