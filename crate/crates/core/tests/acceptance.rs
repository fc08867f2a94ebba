//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! `cargo test -p idtrack-core --test acceptance -- AC3 AC9` runs a subset.
//! Trained benchmark networks are cached under the target directory, keyed
//! by a hash of everything that determines them.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use idtrack::baselines::{hungarian, jpda_marginals, BaselineConfig, CostMatrix};
use idtrack::dataset::load_manifest;
use idtrack::eval::{heading_swap_test, run_benchmark, shuffle_control_test, EvalReport, MethodKind, SwapConfig};
use idtrack::net::{
    lstm_cell, load_checkpoint, save_checkpoint, Architecture, BatchState, Bptt, Gate, InferenceSession, LayerState,
    LstmLayerParams, NetworkParams, TrainConfig, Trainer, Weights, Window,
};
use idtrack::sim::{generate_dataset, generate_sequences, SimConfig};
use idtrack::SequenceRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TEST_SEQUENCES: usize = 10;
const FRAMES: usize = 1000;
const TRAIN_SEED: u64 = 1;
const TEST_SEED: u64 = 999;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn cache_dir() -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&d).unwrap();
    d
}

// ---------------------------------------------------------------- AC1

fn ac1() -> Verdict {
    let started = Instant::now();
    // (N, M, hidden, layers, steps, batch, lambda)
    let configs = [
        (2, 3, 4, 2, 6, 1, 0.0),
        (2, 3, 3, 5, 4, 2, 1e-3),
        (1, 1, 5, 1, 8, 1, 0.0),
        (1, 2, 4, 2, 5, 3, 0.02),
        (3, 5, 3, 2, 4, 1, 0.0),
        (2, 2, 6, 1, 7, 2, 0.0),
        (3, 3, 2, 3, 5, 1, 0.01),
        (2, 1, 4, 4, 3, 2, 0.0),
        (1, 3, 3, 2, 9, 1, 0.0),
        (4, 4, 2, 2, 3, 2, 5e-4),
        (2, 3, 5, 3, 2, 1, 0.0),
        (3, 2, 3, 1, 6, 3, 0.0),
    ];
    let mut worst: f64 = 0.0;
    let mut params_checked = 0;
    for (ci, &(n, m, hidden, layers, steps, batch, lambda)) in configs.iter().enumerate() {
        let arch = Architecture { n_robots: n, max_detections: m, hidden, layers };
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + ci as u64);
        let mut p = NetworkParams::init(arch, &mut rng).unwrap();
        let flat: Vec<f64> = (0..p.weights.len()).map(|_| rng.random_range(-0.7..0.7)).collect();
        p.weights.set_flat(&flat).unwrap();
        let rows = steps * batch;
        let inputs: Vec<f64> = (0..rows * arch.input_dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let labels: Vec<usize> = (0..rows * m).map(|_| rng.random_range(0..=n)).collect();
        let mut init = BatchState::zeros(&arch, batch);
        for v in init.h.iter_mut().chain(init.c.iter_mut()).flatten() {
            *v = rng.random_range(-0.5..0.5);
        }
        let w = Window { steps, batch, inputs: &inputs, labels: &labels };
        let mut bptt = Bptt::new(arch);
        let mut grads = Weights::zeros(&arch);
        bptt.run(&p, &w, &init, lambda, Some(&mut grads)).unwrap();
        let analytic = grads.to_flat();
        let eps = 1e-5;
        for i in 0..flat.len() {
            let mut v = flat.clone();
            v[i] = flat[i] + eps;
            p.weights.set_flat(&v).unwrap();
            let up = bptt.run(&p, &w, &init, lambda, None).unwrap().loss();
            v[i] = flat[i] - eps;
            p.weights.set_flat(&v).unwrap();
            let down = bptt.run(&p, &w, &init, lambda, None).unwrap().loss();
            let numeric = (up - down) / (2.0 * eps);
            let rel = (numeric - analytic[i]).abs() / (numeric.abs() + analytic[i].abs()).max(1e-6);
            worst = worst.max(rel);
            params_checked += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        worst < 1e-4 && secs < 60.0,
        format!("{} configs, {params_checked} parameters, worst rel err {worst:.2e}, {secs:.1} s", configs.len()),
    )
}

// ---------------------------------------------------------------- AC2

fn ac2() -> Verdict {
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (d, hn) = (rng.random_range(1..20), rng.random_range(1..16));
        let mut p = LstmLayerParams::zeros(d, hn);
        for v in p.w_x.iter_mut().chain(p.w_h.iter_mut()).chain(p.bias.iter_mut()) {
            *v = rng.random_range(-1.0..1.0);
        }
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let prev = LayerState {
            h: (0..hn).map(|_| rng.random_range(-1.0..1.0)).collect(),
            c: (0..hn).map(|_| rng.random_range(-3.0..3.0)).collect(),
        };
        let got = lstm_cell(&x, &prev, &p).unwrap();
        for j in 0..hn {
            let a = |g: Gate| {
                let wx = p.input_weights(g);
                let wh = p.recurrent_weights(g);
                let mut s = p.gate_bias(g)[j];
                for k in 0..d {
                    s += wx[j * d + k] * x[k];
                }
                for k in 0..hn {
                    s += wh[j * hn + k] * prev.h[k];
                }
                s
            };
            let i = sig(a(Gate::Input));
            let f = sig(a(Gate::Forget));
            let o = sig(a(Gate::Output));
            let g = a(Gate::Cell).tanh();
            let c = f * prev.c[j] + i * g;
            let h = o * c.tanh();
            worst = worst.max((got.c[j] - c).abs()).max((got.h[j] - h).abs());
        }
    }
    verdict(worst <= 1e-12, format!("1000 random cells, max abs diff {worst:.2e}"))
}

// ---------------------------------------------------------------- AC3

fn brute_assignment(c: &CostMatrix) -> f64 {
    fn go(c: &CostMatrix, r: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if r == c.rows {
            *best = best.min(acc);
            return;
        }
        let free_cols = used.iter().filter(|u| !**u).count();
        // rows left over when there are more rows than columns stay unmatched
        if c.rows - r > free_cols {
            go(c, r + 1, used, acc, best);
        }
        for j in 0..c.cols {
            if !used[j] {
                used[j] = true;
                go(c, r + 1, used, acc + c.get(r, j), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(c, 0, &mut vec![false; c.cols], 0.0, &mut best);
    best
}

fn ac3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for k in 0..1000 {
        let (r, c) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let integer = k % 2 == 0;
        let m = CostMatrix::from_fn(r, c, |_, _| {
            if integer {
                f64::from(rng.random_range(0..10u32))
            } else {
                rng.random_range(-5.0..20.0)
            }
        })
        .unwrap();
        let a = hungarian(&m);
        let matched = a.row_to_col.iter().flatten().count();
        let mut cols: Vec<_> = a.row_to_col.iter().flatten().collect();
        cols.sort();
        cols.dedup();
        let sum: f64 = a.row_to_col.iter().enumerate().filter_map(|(i, j)| j.map(|j| m.get(i, j))).sum();
        let best = brute_assignment(&m);
        let exact = if integer { sum == best } else { (sum - best).abs() <= 1e-9 * best.abs().max(1.0) };
        if !(exact && matched == r.min(c) && cols.len() == matched) {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("1000 matrices up to 6x6, {mismatches} mismatches"))
}

// ---------------------------------------------------------------- AC4

fn ac4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut cases = 0;
    for n in 0..=3usize {
        for d in 0..=4usize {
            for trial in 0..40 {
                let gate = trial % 3 != 0;
                let pair: Vec<f64> = (0..n * d)
                    .map(|_| if gate && rng.random::<f64>() < 0.3 { 0.0 } else { rng.random_range(0.01..5.0) })
                    .collect();
                let miss: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
                let clutter: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
                let got = jpda_marginals(&pair, &miss, &clutter).unwrap();

                // every assignment of each detection to clutter or a track
                let (mut beta, mut fp, mut total) = (vec![0.0; n * d], vec![0.0; d], 0.0);
                for code in 0..(n + 1).pow(d as u32) {
                    let mut owner = vec![0usize; d];
                    let mut cc = code;
                    for o in owner.iter_mut() {
                        *o = cc % (n + 1);
                        cc /= n + 1;
                    }
                    let mut w = 1.0;
                    let mut hit = vec![false; n];
                    for (k, &o) in owner.iter().enumerate() {
                        if o == 0 {
                            w *= clutter[k];
                        } else {
                            if hit[o - 1] {
                                w = 0.0;
                            }
                            hit[o - 1] = true;
                            w *= pair[(o - 1) * d + k];
                        }
                    }
                    for (r, h) in hit.iter().enumerate() {
                        if !h {
                            w *= miss[r];
                        }
                    }
                    total += w;
                    for (k, &o) in owner.iter().enumerate() {
                        if o == 0 {
                            fp[k] += w;
                        } else {
                            beta[(o - 1) * d + k] += w;
                        }
                    }
                }
                for k in 0..d {
                    worst = worst.max((got.clutter[k] - fp[k] / total).abs());
                    let mut col = got.clutter[k];
                    for r in 0..n {
                        worst = worst.max((got.beta(r, k) - beta[r * d + k] / total).abs());
                        col += got.beta(r, k);
                    }
                    worst_sum = worst_sum.max((col - 1.0).abs());
                }
                cases += 1;
            }
        }
    }
    verdict(
        worst <= 1e-12 && worst_sum <= 1e-9,
        format!("{cases} cases (tracks<=3, detections<=4), max diff {worst:.2e}, max |sum-1| {worst_sum:.2e}"),
    )
}

// ------------------------------------------------------ trained benchmark

struct Bench {
    test: Vec<SequenceRecord>,
    net: NetworkParams,
    report: EvalReport,
    train_secs: Option<f64>,
}

/// N=2/M=3 trains on the minimum 200 sequences with default settings. The
/// three-robot case needs more distinct sequences and a slower learning
/// rate decay before it generalizes.
fn bench_setup(n: usize, m: usize) -> (usize, TrainConfig) {
    if (n, m) == (2, 3) {
        (200, TrainConfig::default())
    } else {
        (600, TrainConfig { epochs: 30, lr_decay: 3e-5, ..TrainConfig::default() })
    }
}

fn bench(n: usize, m: usize) -> Bench {
    let sim = SimConfig { n_robots: n, max_detections: m, ..SimConfig::default() };
    let (train_sequences, train_cfg) = bench_setup(n, m);
    let mut h = DefaultHasher::new();
    format!("{sim:?}|{train_cfg:?}|{TRAIN_SEED}|{train_sequences}|{FRAMES}|{}", env!("CARGO_PKG_VERSION")).hash(&mut h);
    let path = cache_dir().join(format!("net_{n}_{m}_{:016x}.ckpt", h.finish()));

    let (net, train_secs) = match load_checkpoint(&path) {
        Ok(p) => {
            println!("  using cached network {}", path.display());
            (p, None)
        }
        Err(_) => {
            let train = generate_sequences(&SimConfig { seed: TRAIN_SEED, ..sim.clone() }, train_sequences, FRAMES).unwrap();
            println!("  training N={n} M={m} on {train_sequences} sequences");
            let started = Instant::now();
            let mut t = Trainer::new(&train, train_cfg.clone(), None).unwrap();
            for e in 0..train_cfg.epochs {
                let loss = t.run_epoch().unwrap();
                println!("  N={n} M={m} epoch {e}: loss {loss:.4} ({:.0} s)", started.elapsed().as_secs_f64());
            }
            let secs = started.elapsed().as_secs_f64();
            save_checkpoint(t.params(), &path).unwrap();
            (t.into_params(), Some(secs))
        }
    };
    let test = generate_sequences(&SimConfig { seed: TEST_SEED, ..sim }, TEST_SEQUENCES, FRAMES).unwrap();
    let report = run_benchmark(&test, &MethodKind::ALL, &BaselineConfig::default(), Some(&net)).unwrap();
    for r in &report.methods {
        println!(
            "  N={n} M={m} {:<10} success {:6.2}%  localization {:.3} m",
            r.method,
            100.0 * r.success_rate,
            r.localization_error_m
        );
    }
    Bench { test, net, report, train_secs }
}

fn success(b: &Bench, method: &str) -> f64 {
    b.report.method(method).unwrap().success_rate
}

fn loc(b: &Bench, method: &str) -> f64 {
    b.report.method(method).unwrap().localization_error_m
}

fn ac5(small: &Bench, large: &Bench) -> Verdict {
    let (net, ha) = (success(small, "net"), success(small, "kalman-ha"));
    let (net5, ha5) = (success(large, "net"), success(large, "kalman-ha"));
    let time = match (small.train_secs, large.train_secs) {
        (Some(a), Some(b)) => format!(", training {:.0}+{:.0} s", a, b),
        _ => ", cached networks".into(),
    };
    verdict(
        net >= 0.85 && net - ha >= 0.05 && net5 - ha5 >= 0.05,
        format!(
            "M=3/N=2 net {:.2}% vs kalman-ha {:.2}%; M=5/N=3 net {:.2}% vs kalman-ha {:.2}%{time}",
            100.0 * net,
            100.0 * ha,
            100.0 * net5,
            100.0 * ha5
        ),
    )
}

fn ac6(b: &Bench) -> Verdict {
    let (net, jpda, ha2, ha) = (loc(b, "net"), loc(b, "jpda"), loc(b, "kalman-ha2"), loc(b, "kalman-ha"));
    verdict(
        net <= jpda && net <= ha2 && ha2 <= ha,
        format!("net {net:.3} m, jpda {jpda:.3} m, kalman-ha2 {ha2:.3} m, kalman-ha {ha:.3} m"),
    )
}

fn ac7(b: &Bench) -> Verdict {
    let cfg = SwapConfig::default();
    let r = heading_swap_test(&b.test, &b.net, &cfg).unwrap();
    verdict(
        r.trials.len() >= 50 && r.recovery_fraction >= 0.9 && cfg.horizon <= 150,
        format!(
            "{}/{} trials recovered within {} frames, mean {:.1} frames",
            r.recovered,
            r.trials.len(),
            cfg.horizon,
            r.mean_recovery_frames
        ),
    )
}

fn ac8(b: &Bench) -> Verdict {
    let r = shuffle_control_test(&b.test, &b.net, 0).unwrap();
    let gap = 100.0 * (r.ordered - r.shuffled);
    verdict(
        gap >= 15.0,
        format!("ordered {:.2}%, shuffled {:.2}%, gap {gap:.2} points", 100.0 * r.ordered, 100.0 * r.shuffled),
    )
}

// ---------------------------------------------------------------- AC9

fn ac9() -> Verdict {
    let sim = SimConfig { n_robots: 2, max_detections: 3, seed: 9, ..SimConfig::default() };
    let seq = generate_sequences(&sim, 1, 3000).unwrap().remove(0);
    let net = NetworkParams::init(Architecture::new(2, 3), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let mut session = InferenceSession::new(&net).unwrap();
    for f in seq.frames.iter().take(200) {
        session.step(&f.input).unwrap();
    }
    let mut times: Vec<f64> = seq.frames[200..]
        .iter()
        .map(|f| {
            let t = Instant::now();
            std::hint::black_box(session.step(&f.input).unwrap());
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    let p99 = times[times.len() * 99 / 100];
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    verdict(
        median < 4.0,
        format!(
            "{} layers x {} units, {} steps: median {median:.3} ms, mean {mean:.3} ms, p99 {p99:.3} ms",
            net.arch.layers,
            net.arch.hidden,
            times.len()
        ),
    )
}

// ---------------------------------------------------------------- AC10

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let _ = fs::remove_dir_all(dir);
    let sim = SimConfig { n_robots: 2, max_detections: 3, seed: 77, ..SimConfig::default() };
    let data_dir = dir.join("data");
    let manifest = generate_dataset(&sim, 12, 300, &data_dir).unwrap();
    let seqs = load_manifest(&manifest).unwrap();
    let cfg = TrainConfig { epochs: 2, seed: 5, ..TrainConfig::default() };
    let mut t = Trainer::new(&seqs[..10], cfg, None).unwrap();
    t.run().unwrap();
    save_checkpoint(t.params(), &dir.join("model.ckpt")).unwrap();
    t.log().write_csv(&dir.join("train_log.csv")).unwrap();
    let net = load_checkpoint(&dir.join("model.ckpt")).unwrap();
    let report = run_benchmark(&seqs[10..], &MethodKind::ALL, &BaselineConfig::default(), Some(&net)).unwrap();
    fs::write(dir.join("report.json"), report.to_json()).unwrap();
    fs::write(dir.join("report.tsv"), report.to_tsv()).unwrap();
    fs::write(dir.join("tracks.tsv"), report.tracks_tsv()).unwrap();

    let mut files: Vec<PathBuf> = fs::read_dir(&data_dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.extend(["model.ckpt", "train_log.csv", "report.json", "report.tsv", "tracks.tsv"].map(|f| dir.join(f)));
    files.sort();
    files
        .into_iter()
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()))
        .collect()
}

fn ac10() -> Verdict {
    let root = cache_dir().join("determinism");
    let a = pipeline(&root.join("a"));
    let b = pipeline(&root.join("b"));
    let differing: Vec<&str> =
        a.iter().zip(&b).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    let bytes: usize = a.iter().map(|f| f.1.len()).sum();
    verdict(
        a.len() == b.len() && differing.is_empty(),
        format!("{} artifacts ({bytes} bytes) compared, differing: {differing:?}", a.len()),
    )
}

// ----------------------------------------------------------------

fn main() {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with("AC")).collect();
    let selected = |id: &str| wanted.is_empty() || wanted.iter().any(|w| w == id);
    let mut lines = Vec::new();
    let mut record = |id: &str, name: &str, f: &mut dyn FnMut() -> Verdict| {
        if !selected(id) {
            return;
        }
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let line = format!("{id} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        println!("{line}");
        lines.push((v.pass, line));
    };

    record("AC1", "gradient check", &mut ac1);
    record("AC2", "lstm cell fidelity", &mut ac2);
    record("AC3", "hungarian optimality", &mut ac3);
    record("AC4", "jpda marginals", &mut ac4);

    let needs_bench = ["AC5", "AC6", "AC7", "AC8"].iter().any(|id| selected(id));
    if needs_bench {
        let small = catch_unwind(|| bench(2, 3));
        let large = if selected("AC5") { Some(catch_unwind(|| bench(3, 5))) } else { None };
        match &small {
            Ok(s) => {
                match &large {
                    Some(Ok(l)) => record("AC5", "benchmark success", &mut || ac5(s, l)),
                    Some(Err(_)) => record("AC5", "benchmark success", &mut || verdict(false, "M=5/N=3 run failed")),
                    None => {}
                }
                record("AC6", "localization ordering", &mut || ac6(s));
                record("AC7", "heading swap recovery", &mut || ac7(s));
                record("AC8", "temporal order", &mut || ac8(s));
            }
            Err(_) => {
                for id in ["AC5", "AC6", "AC7", "AC8"] {
                    record(id, "benchmark", &mut || verdict(false, "benchmark run failed"));
                }
            }
        }
    }

    record("AC9", "forward step latency", &mut ac9);
    record("AC10", "determinism", &mut ac10);

    let passed = lines.iter().filter(|l| l.0).count();
    println!("acceptance: {passed}/{} passed", lines.len());
}
