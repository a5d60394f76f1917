//! PRED driven by the ideal estimator output, with a per-iteration trace.

use sprf::estimator::OracleEstimator;
use sprf::pred::{pred_with_distribution, PredConfig};
use sprf::rng::stream;
use sprf::signal::{Instance, Prior};
use sprf::support::recovery_metrics;

fn main() -> sprf::Result<()> {
    let (n, k) = (64, 6);
    let inst = Instance::generate(Prior::Uniform, n, n + 1, k, 30.0, 5)?;
    let oracle = OracleEstimator::new(inst.signal.support(), n)?;
    let cfg = PredConfig::default();

    let mut t = 0;
    let r = pred_with_distribution(&inst.problem, k, oracle.distribution(), &cfg, &mut stream(9), |e, out| {
        t += 1;
        println!(
            "iter {t}: |E| = {:2}, extended objective {:.3e}, objective {:.3e}, S = {:?}",
            e.q(),
            out.extended_objective,
            out.objective,
            out.support.one_based()
        );
    })?;
    let met = recovery_metrics(&r.support, inst.signal.support(), k)?;
    println!("truth {:?}", inst.signal.support().one_based());
    println!(
        "eta = {}, residual l1 = {:.3e}, converged = {}, hit = {}, soft = {:.2}",
        r.eta, r.residual_l1, r.converged, met.hit, met.soft
    );
    Ok(())
}
