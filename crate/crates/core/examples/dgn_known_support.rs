//! Damped Gauss-Newton on the true support from random starts.

use sprf::gn::{dgn, GnConfig};
use sprf::rng::stream;
use sprf::signal::{Instance, Prior};

fn main() -> sprf::Result<()> {
    let inst = Instance::generate(Prior::Uniform, 64, 128, 5, f64::INFINITY, 3)?;
    let truth = inst.signal.support();
    let cfg = GnConfig::default();
    let mut rng = stream(1);

    for start in 0..5 {
        let out = dgn(&inst.problem, truth, &cfg, None, &mut rng)?;
        let err = out
            .x
            .iter()
            .zip(inst.signal.values())
            .map(|(a, b)| (a - b).abs().min((a + b).abs()))
            .fold(0.0, f64::max);
        println!(
            "start {start}: {:3} iterations, objective {:.3e}, max error up to sign {:.2e}",
            out.iterations, out.objective, err
        );
    }

    let out = dgn(&inst.problem, truth, &cfg, Some(inst.signal.values()), &mut rng)?;
    println!("warm start at the truth: {} iterations, objective {:.3e}", out.iterations, out.objective);
    Ok(())
}
