//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::f64::consts::PI;
use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use sprf::bench::{run_cells, Algo, EstimatorSource, MRule, SweepConfig};
use sprf::estimator::{target_distribution, train, Arch, EstimatorModel, TrainConfig};
use sprf::gn::{dgn, gradient, objective, GnConfig};
use sprf::rng::stream;
use sprf::signal::{empirical_snr_db, forward_magnitudes, sample_signal, Instance, PhaseProblem, Prior};
use sprf::support::{recovery_metrics, Support};
use std::sync::Arc;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed.as_secs_f64() < limit_s as f64
}

fn naive_magnitudes(x: &[f64], m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| {
            let (mut re, mut im) = (0.0, 0.0);
            for (p, &v) in x.iter().enumerate() {
                let th = -2.0 * PI * ((i * p) % m) as f64 / m as f64;
                re += v * th.cos();
                im += v * th.sin();
            }
            re * re + im * im
        })
        .collect()
}

fn forward_model() -> Outcome {
    let mut rng = stream(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=64);
        let m = rng.random_range(n..=2 * n + 3);
        let k = rng.random_range(1..=n);
        let s = sample_signal(Prior::Gaussian, n, k, &mut rng).unwrap();
        let fast = forward_magnitudes(&s, m).unwrap();
        let slow = naive_magnitudes(s.values(), m);
        let scale = slow.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let err = fast.iter().zip(&slow).fold(0.0f64, |a, (f, s)| a.max((f - s).abs()));
        worst = worst.max(err / scale);
    }
    outcome(worst <= 1e-10, format!("max relative error {worst:.2e} over 1000 instances"))
}

fn gradient_check() -> Outcome {
    let mut rng = stream(202);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=16);
        let m = rng.random_range(n..=2 * n);
        let k = rng.random_range(1..=n.min(5));
        let snr = if rng.random::<bool>() { 20.0 } else { f64::INFINITY };
        let truth = sample_signal(Prior::Uniform, n, k, &mut rng).unwrap();
        let p = PhaseProblem::synthesize(&truth, m, snr, &mut rng).unwrap();
        let support = sample_signal(Prior::Uniform, n, rng.random_range(1..=n), &mut rng).unwrap().support().clone();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = gradient(&x, &support, &p).unwrap();
        let fd: Vec<f64> = support
            .iter()
            .map(|j| {
                let h = 1e-6 * x[j].abs().max(1.0);
                let mut a = x.clone();
                let mut b = x.clone();
                a[j] += h;
                b[j] -= h;
                (objective(&a, &support, &p).unwrap() - objective(&b, &support, &p).unwrap()) / (2.0 * h)
            })
            .collect();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(diff / norm);
    }
    outcome(worst <= 1e-4, format!("max relative gradient error {worst:.2e} over 200 instances"))
}

fn dgn_contract() -> Outcome {
    let cfg = GnConfig::default();
    let mut rng = stream(303);
    let mut monotone = 0;
    for _ in 0..500 {
        let n = rng.random_range(4..=32);
        let m = if rng.random::<bool>() { n + 1 } else { 2 * n };
        let k = rng.random_range(1..=4.min(n));
        let snr = if rng.random::<bool>() { 30.0 } else { f64::INFINITY };
        let truth = sample_signal(Prior::Uniform, n, k, &mut rng).unwrap();
        let p = PhaseProblem::synthesize(&truth, m, snr, &mut rng).unwrap();
        let support = if rng.random::<bool>() {
            truth.support().clone()
        } else {
            sample_signal(Prior::Uniform, n, rng.random_range(1..=n.min(8)), &mut rng).unwrap().support().clone()
        };
        let out = dgn(&p, &support, &cfg, None, &mut rng).unwrap();
        if out.trace.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }

    let mut accurate = 0;
    for t in 0..100 {
        let inst = Instance::generate(Prior::Uniform, 32, 33, 3, f64::INFINITY, 3000 + t).unwrap();
        let truth = inst.signal.values();
        let best = (0..10)
            .map(|_| dgn(&inst.problem, inst.signal.support(), &cfg, None, &mut rng).unwrap())
            .min_by(|a, b| a.objective.total_cmp(&b.objective))
            .unwrap();
        let norm = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
        let plus = best.x.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let minus = best.x.iter().zip(truth).map(|(a, b)| (a + b).powi(2)).sum::<f64>().sqrt();
        if plus.min(minus) / norm <= 1e-3 {
            accurate += 1;
        }
    }
    outcome(
        monotone == 500 && accurate >= 90,
        format!("non-increasing traces {monotone}/500, accurate recoveries {accurate}/100"),
    )
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn equivalent(s: &[usize], t: &[usize], n: usize) -> bool {
    let max = *s.iter().max().unwrap();
    let reflected: Vec<usize> = s.iter().map(|&i| max - i).collect();
    let mut reflected_sorted = reflected.clone();
    reflected_sorted.sort_unstable();
    (-(n as i64)..n as i64).any(|shift| {
        let moved = |v: &[usize]| v.iter().map(|&i| i as i64 + shift).collect::<Vec<i64>>();
        let tt: Vec<i64> = t.iter().map(|&i| i as i64).collect();
        moved(s) == tt || moved(&reflected_sorted) == tt
    })
}

fn metric_exhaustive() -> Outcome {
    let mut pairs = 0usize;
    let mut wrong = 0usize;
    for n in 1..=10 {
        for k in 1..=3.min(n) {
            let all = combinations(n, k);
            for s in &all {
                for t in &all {
                    let hit = recovery_metrics(&Support::new(s.clone()), &Support::new(t.clone()), k)
                        .unwrap()
                        .hit;
                    pairs += 1;
                    if hit != equivalent(s, t, n) {
                        wrong += 1;
                    }
                }
            }
        }
    }
    outcome(wrong == 0, format!("{wrong} disagreements over {pairs} support pairs"))
}

fn noise_calibration() -> Outcome {
    let mut rng = stream(505);
    let mut report = Vec::new();
    let mut pass = true;
    for target in [15.0, 30.0] {
        let mean = (0..100)
            .map(|_| {
                let s = sample_signal(Prior::Uniform, 768, 20, &mut rng).unwrap();
                let p = PhaseProblem::synthesize(&s, 769, target, &mut rng).unwrap();
                empirical_snr_db(&p.c, &p.w)
            })
            .sum::<f64>()
            / 100.0;
        pass &= (mean - target).abs() <= 0.5;
        report.push(format!("target {target} dB -> mean {mean:.3} dB"));
    }
    outcome(pass, report.join(", "))
}

fn hit_rates(records: &[sprf::bench::TrialRecord], algo: Algo, k: usize) -> f64 {
    let rs: Vec<_> = records.iter().filter(|r| r.algo == algo && r.k == k).collect();
    rs.iter().map(|r| r.hit as f64).sum::<f64>() / rs.len() as f64
}

fn pred_oracle() -> Outcome {
    let cfg = SweepConfig {
        algos: vec![Algo::Pred],
        n: vec![64],
        m_rule: MRule::PlusOne,
        k_min: 2,
        k_max: 8,
        snr_db: vec![30.0],
        trials: 100,
        oracle: true,
        master_seed: 6,
        timing: false,
        ..SweepConfig::desk()
    };
    let out = run_cells(&cfg, &EstimatorSource::Oracle).unwrap();
    let rates: Vec<f64> = (2..=8).map(|k| hit_rates(&out.records, Algo::Pred, k)).collect();
    let text: Vec<String> = rates.iter().zip(2..).map(|(r, k)| format!("k={k}:{r:.2}")).collect();
    outcome(rates.iter().all(|&r| r >= 0.95), format!("hit rates {}", text.join(" ")))
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn complexity_trend() -> Outcome {
    let cfg = SweepConfig {
        algos: vec![Algo::Pred, Algo::Gespar],
        n: vec![64],
        m_rule: MRule::Double,
        k_min: 4,
        k_max: 4,
        snr_db: vec![f64::INFINITY],
        trials: 100,
        oracle: true,
        master_seed: 7,
        timing: false,
        ..SweepConfig::desk()
    };
    let out = run_cells(&cfg, &EstimatorSource::Oracle).unwrap();
    let eta = |algo| {
        median(out.records.iter().filter(|r| r.algo == algo).map(|r| r.eta).collect())
    };
    let (hp, hg) = (hit_rates(&out.records, Algo::Pred, 4), hit_rates(&out.records, Algo::Gespar, 4));
    let (ep, eg) = (eta(Algo::Pred), eta(Algo::Gespar));
    let detail = format!("m=128: hit PRED {hp:.2} GESPAR {hg:.2}; median eta PRED {ep} GESPAR {eg}");
    outcome(hp >= 0.9 && hg >= 0.9 && ep < eg, detail)
}

fn train_desk(m: usize, seed: u64) -> (EstimatorModel, Vec<f64>) {
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::desk()
    };
    let (model, report) = train(&cfg, Arch::desk(32, m)).unwrap();
    (model, report.epoch_losses)
}

fn training_sanity() -> Outcome {
    let (model, losses) = train_desk(33, 8);
    let ratio = losses.last().unwrap() / losses[0];
    let mut rng = stream(808);
    let mut contained = 0;
    for _ in 0..500 {
        let k = rng.random_range(2..=3);
        let s = sample_signal(Prior::Uniform, 32, k, &mut rng).unwrap();
        let p = PhaseProblem::synthesize(&s, 33, 30.0, &mut rng).unwrap();
        let d = model.forward(&p.y).unwrap();
        let top = sprf::support::hard_threshold(&d, 3 * k);
        let want = target_distribution(s.support(), 32).unwrap();
        if want.iter().enumerate().filter(|(_, &w)| w > 0.0).all(|(i, _)| top.contains(&i)) {
            contained += 1;
        }
    }
    outcome(
        ratio <= 0.5 && contained >= 400,
        format!("final/first epoch loss {ratio:.3}, top-3k containment {contained}/500"),
    )
}

fn largest_reliable_k(records: &[sprf::bench::TrialRecord], algo: Algo) -> usize {
    (2..=8).filter(|&k| hit_rates(records, algo, k) >= 0.95).max().unwrap_or(0)
}

fn trained_beats_gespar() -> Outcome {
    let (model, _) = train_desk(64, 9);
    let cfg = SweepConfig {
        algos: vec![Algo::Pred, Algo::Gespar],
        n: vec![32],
        m_rule: MRule::Double,
        k_min: 2,
        k_max: 8,
        snr_db: vec![30.0],
        trials: 100,
        oracle: false,
        master_seed: 9,
        timing: false,
        ..SweepConfig::desk()
    };
    let out = run_cells(&cfg, &EstimatorSource::Model(Arc::new(model))).unwrap();
    let rates = |algo| {
        (2..=8)
            .map(|k| format!("{:.2}", hit_rates(&out.records, algo, k)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let kp = largest_reliable_k(&out.records, Algo::Pred);
    let kg = largest_reliable_k(&out.records, Algo::Gespar);
    outcome(
        kp >= kg,
        format!(
            "m=64, k=2..8 hit PRED [{}] GESPAR [{}]; largest k at 95%: PRED {kp}, GESPAR {kg}",
            rates(Algo::Pred),
            rates(Algo::Gespar)
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    fs::write(
        &config,
        "algos = [\"pred\", \"gespar\", \"tse-oracle\"]\nn = [32]\nk_min = 2\nk_max = 6\n\
         snr_db = [30.0, inf]\ntrials = 20\noracle = true\ntiming = false\n",
    )
    .unwrap();
    let run = |out: &str, threads: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_sprf"))
            .args(["bench", "--config"])
            .arg(&config)
            .args(["--seed", "7", "--threads", threads, "--out"])
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    };
    run("a", "1");
    run("b", "4");
    let same = ["trials.csv", "aggregate.csv", "summary.json"]
        .iter()
        .all(|f| fs::read(dir.path().join("a").join(f)).unwrap() == fs::read(dir.path().join("b").join(f)).unwrap());
    outcome(same, format!("outputs identical across 1 and 4 threads: {same}"))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Option<u64>);
    let criteria: [Criterion; 10] = [
        ("forward model matches the naive DFT", forward_model, Some(10)),
        ("gradient matches finite differences", gradient_check, Some(30)),
        ("DGN monotone and accurate on the true support", dgn_contract, Some(120)),
        ("recovery metric agrees with exhaustive equivalence", metric_exhaustive, Some(60)),
        ("noise calibration", noise_calibration, Some(10)),
        ("PRED with oracle estimator", pred_oracle, Some(300)),
        ("PRED needs fewer DGN runs than GESPAR", complexity_trend, Some(300)),
        ("estimator training", training_sanity, Some(600)),
        ("trained PRED vs GESPAR", trained_beats_gespar, None),
        ("bench determinism", determinism, Some(120)),
    ];
    let only: Option<usize> = std::env::var("SPRF_CRITERION").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| within(elapsed, l));
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        let budget = limit.map_or(String::new(), |l| format!(" (limit {l} s)"));
        println!(
            "criterion {id:2} {}: {name}: {} [{:.1} s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
