//! A small Monte-Carlo sweep comparing PRED (oracle estimator), GESPAR and
//! TSE on the true support.

use sprf::bench::{run_sweep, Algo, MRule, SweepConfig};

fn main() -> sprf::Result<()> {
    let out = std::env::temp_dir().join("sprf-example-sweep");
    let cfg = SweepConfig {
        algos: vec![Algo::Pred, Algo::Gespar, Algo::TseOracle],
        n: vec![32],
        m_rule: MRule::Double,
        k_min: 2,
        k_max: 6,
        snr_db: vec![30.0],
        trials: 20,
        out: out.clone(),
        master_seed: 7,
        ..SweepConfig::desk()
    };
    let result = run_sweep(&cfg)?;
    println!("{:<11} {:>3} {:>8} {:>9} {:>9}", "algo", "k", "hit", "mean eta", "wall ms");
    for a in &result.aggregates {
        println!(
            "{:<11} {:>3} {:>8.2} {:>9.2} {:>9.2}",
            a.algo.name(),
            a.k,
            a.hit_rate,
            a.mean_eta,
            a.mean_wall_ms
        );
    }
    println!("files in {}", out.display());
    Ok(())
}
