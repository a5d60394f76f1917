//! Generate a sparse signal, its noisy Fourier magnitudes and the support
//! sets derived from them.

use sprf::signal::{empirical_snr_db, Instance, Prior};
use sprf::support::ues;

fn main() -> sprf::Result<()> {
    let (n, m, k) = (32, 64, 4);
    let inst = Instance::generate(Prior::Uniform, n, m, k, 30.0, 11)?;
    let p = &inst.problem;

    println!("support (1-based): {:?}", inst.signal.support().one_based());
    println!("nonzeros: {:?}", inst.signal.support().iter().map(|i| inst.signal.values()[i]).collect::<Vec<_>>());
    println!("target SNR 30 dB, realized {:.2} dB", empirical_snr_db(&p.c, &p.w));
    println!("||y|| = {:.4}, default epsilon = {:.4e}", p.y_norm(), p.default_epsilon());

    let u = ues(inst.signal.support(), n)?;
    println!("shifted support: {:?}", u.alpha.one_based());
    println!("reflected support: {:?}", u.beta.one_based());
    println!("union minus origin: {:?}", u.union_minus_one.one_based());

    println!("first 8 measurements:");
    for (i, (y, c)) in p.y.iter().zip(&p.c).take(8).enumerate() {
        println!("  y[{i}] = {y:9.5}  (clean {c:9.5})");
    }
    Ok(())
}
