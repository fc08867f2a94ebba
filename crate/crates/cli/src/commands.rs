use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use idtrack::dataset::load_manifest;
use idtrack::eval::{heading_swap_test, run_benchmark, shuffle_control_test, MethodKind};
use idtrack::net::{load_checkpoint, save_checkpoint, NetworkParams, Trainer};
use idtrack::sim::generate_dataset;
use idtrack::tracker::NetTracker;
use idtrack::SequenceRecord;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{serve, Command, Common, CliError};

fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

fn base(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.paths.out, common.out.clone());
    Ok(cfg)
}

fn required(path: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    path.clone().ok_or_else(|| CliError::Invalid(format!("{what} is required")))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.paths.out.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    write_file(path, &(text + "\n"))
}

fn load_sequences(cfg: &RunConfig) -> Result<Vec<SequenceRecord>, CliError> {
    let manifest = required(&cfg.paths.manifest, "a manifest (--manifest or paths.manifest)")?;
    let seqs = load_manifest(&manifest)?;
    log::info!("loaded {} sequences from {}", seqs.len(), manifest.display());
    Ok(seqs)
}

fn load_params(cfg: &RunConfig) -> Result<NetworkParams, CliError> {
    let path = required(&cfg.paths.checkpoint, "a checkpoint (--checkpoint or paths.checkpoint)")?;
    Ok(load_checkpoint(&path)?)
}

fn check_arch(params: &NetworkParams, seqs: &[SequenceRecord]) -> Result<(), CliError> {
    for s in seqs {
        if (s.n_robots(), s.max_detections()) != (params.arch.n_robots, params.arch.max_detections) {
            return Err(CliError::Core(idtrack::Error::Shape(format!(
                "checkpoint is for N={}, M={}, sequence has N={}, M={}",
                params.arch.n_robots,
                params.arch.max_detections,
                s.n_robots(),
                s.max_detections()
            ))));
        }
    }
    Ok(())
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => {
            let mut cfg = base(&a.common)?;
            let s = &mut cfg.sim;
            set(&mut s.n_robots, a.n_robots);
            set(&mut s.max_detections, a.max_detections);
            set(&mut s.seed, a.seed);
            set(&mut s.p_fn, a.p_fn);
            set(&mut s.p_fp, a.p_fp);
            set(&mut s.sigma_x, a.sigma_x);
            set(&mut s.sigma_y, a.sigma_y);
            set(&mut s.sigma_phi, a.sigma_phi);
            set(&mut s.occlusion_rate, a.occlusion_rate);
            set(&mut s.broadcast_dropout, a.broadcast_dropout);
            set(&mut cfg.simulate.frames, a.frames);
            set(&mut cfg.simulate.sequences, a.sequences);
            cfg.validate()?;
            if cfg.simulate.frames == 0 {
                return Err(CliError::Invalid("simulate.frames must be at least 1".into()));
            }
            simulate(&cfg)
        }
        Command::Train(a) => {
            let mut cfg = base(&a.common)?;
            set(&mut cfg.paths.manifest, a.manifest.map(Some));
            set(&mut cfg.paths.fine_tune, a.fine_tune.map(Some));
            let t = &mut cfg.train;
            set(&mut t.epochs, a.epochs);
            set(&mut t.learning_rate, a.learning_rate);
            set(&mut t.lr_decay, a.lr_decay);
            set(&mut t.l2, a.l2);
            set(&mut t.bptt_window, a.bptt_window);
            set(&mut t.chunk_len, a.chunk_len);
            set(&mut t.batch_sequences, a.batch_sequences);
            set(&mut t.hidden_size, a.hidden_size);
            set(&mut t.lstm_layers, a.lstm_layers);
            set(&mut t.seed, a.seed);
            cfg.validate()?;
            train(&cfg)
        }
        Command::Infer(a) => {
            let mut cfg = base(&a.common)?;
            set(&mut cfg.paths.manifest, a.manifest.map(Some));
            set(&mut cfg.paths.checkpoint, a.checkpoint.map(Some));
            cfg.validate()?;
            infer(&cfg)
        }
        Command::Eval(a) => {
            let mut cfg = base(&a.common)?;
            set(&mut cfg.paths.manifest, a.manifest.map(Some));
            set(&mut cfg.paths.checkpoint, a.checkpoint.map(Some));
            if let Some(names) = a.methods {
                cfg.eval.methods = names
                    .iter()
                    .filter(|n| !n.trim().is_empty())
                    .map(|n| n.trim().parse::<MethodKind>())
                    .collect::<Result<_, _>>()?;
            }
            set(&mut cfg.eval.min_net_success, a.min_net_success.map(Some));
            set(&mut cfg.eval.min_margin_over_kalman_ha, a.min_margin_over_kalman_ha.map(Some));
            cfg.validate()?;
            eval(&cfg)
        }
        Command::SwapTest(a) => {
            let mut cfg = base(&a.common)?;
            set(&mut cfg.paths.manifest, a.manifest.map(Some));
            set(&mut cfg.paths.checkpoint, a.checkpoint.map(Some));
            let s = &mut cfg.swap;
            set(&mut s.trials, a.trials);
            set(&mut s.swap_len, a.swap_len);
            set(&mut s.horizon, a.horizon);
            set(&mut s.stable_frames, a.stable_frames);
            set(&mut s.warmup, a.warmup);
            set(&mut s.seed, a.seed);
            cfg.validate()?;
            swap_test(&cfg)
        }
        Command::ShuffleTest(a) => {
            let mut cfg = base(&a.common)?;
            set(&mut cfg.paths.manifest, a.manifest.map(Some));
            set(&mut cfg.paths.checkpoint, a.checkpoint.map(Some));
            set(&mut cfg.shuffle.seed, a.seed);
            set(&mut cfg.shuffle.min_gap, a.min_gap.map(Some));
            cfg.validate()?;
            shuffle_test(&cfg)
        }
        Command::Serve(a) => {
            let mut cfg = base(&a.common)?;
            set(&mut cfg.paths.manifest, a.manifest.map(Some));
            set(&mut cfg.serve.host, a.host);
            set(&mut cfg.serve.port, a.port);
            set(&mut cfg.serve.static_dir, a.static_dir.map(Some));
            cfg.validate()?;
            let seqs = load_sequences(&cfg)?;
            let session = serve::Session::new(seqs)?;
            serve::serve_blocking(session, &cfg.serve)
        }
    }
}

fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let manifest = generate_dataset(&cfg.sim, cfg.simulate.sequences, cfg.simulate.frames, &out)?;
    cfg.write_resolved(&out)?;
    log::info!(
        "wrote {} sequences of {} frames, manifest {}",
        cfg.simulate.sequences,
        cfg.simulate.frames,
        manifest.display()
    );
    Ok(())
}

fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let seqs = load_sequences(cfg)?;
    let init = match &cfg.paths.fine_tune {
        Some(p) => Some(load_checkpoint(p)?),
        None => None,
    };
    let out = out_dir(cfg)?;
    let mut trainer = Trainer::new(&seqs, cfg.train.clone(), init)?;
    for epoch in 0..cfg.train.epochs {
        let started = std::time::Instant::now();
        let loss = trainer.run_epoch()?;
        log::info!("epoch {epoch}: mean loss {loss:.5} ({:.1} s)", started.elapsed().as_secs_f64());
    }
    save_checkpoint(trainer.params(), &out.join("model.ckpt"))?;
    trainer.log().write_csv(&out.join("train_log.csv"))?;
    cfg.write_resolved(&out)?;
    log::info!("wrote {}", out.join("model.ckpt").display());
    Ok(())
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    sequence: usize,
    t: u64,
    classes: &'a [usize],
    probs: Vec<&'a [f64]>,
    positions: &'a [Option<(f64, f64)>],
}

fn infer(cfg: &RunConfig) -> Result<(), CliError> {
    let seqs = load_sequences(cfg)?;
    let params = load_params(cfg)?;
    check_arch(&params, &seqs)?;
    let out = out_dir(cfg)?;
    let path = out.join("predictions.jsonl");
    let file = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    let mut tracker = NetTracker::new(params)?;
    for (i, seq) in seqs.iter().enumerate() {
        idtrack::Associator::reset(&mut tracker);
        for f in &seq.frames {
            let (o, probs) = tracker.step_detailed(&f.input)?;
            let line = PredictionLine {
                sequence: i,
                t: f.input.t,
                classes: &o.label.classes,
                probs: (0..probs.slots).map(|s| probs.row(s)).collect(),
                positions: &o.positions,
            };
            let text = serde_json::to_string(&line).map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(w, "{text}").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    cfg.write_resolved(&out)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let methods = &cfg.eval.methods;
    let seqs = if methods.is_empty() && cfg.paths.manifest.is_none() { Vec::new() } else { load_sequences(cfg)? };
    let params = if methods.contains(&MethodKind::Net) {
        let p = load_params(cfg)?;
        check_arch(&p, &seqs)?;
        Some(p)
    } else {
        None
    };
    let out = out_dir(cfg)?;
    let started = std::time::Instant::now();
    let report = run_benchmark(&seqs, methods, &cfg.baselines, params.as_ref())?;
    write_file(&out.join("report.json"), &report.to_json())?;
    write_file(&out.join("report.tsv"), &report.to_tsv())?;
    if params.is_some() {
        write_file(&out.join("tracks.tsv"), &report.tracks_tsv())?;
    }
    cfg.write_resolved(&out)?;
    for m in &report.methods {
        log::info!(
            "{:<11} success {:.2}%  localization {:.3} m",
            m.method,
            100.0 * m.success_rate,
            m.localization_error_m
        );
    }
    log::info!("evaluated {} frames in {:.1} s", report.frames, started.elapsed().as_secs_f64());

    let net = report.method("net");
    if let (Some(min), Some(net)) = (cfg.eval.min_net_success, net) {
        if net.success_rate < min {
            return Err(CliError::Threshold(format!("net success {:.4} < {min}", net.success_rate)));
        }
    }
    if let (Some(margin), Some(net), Some(ha)) = (cfg.eval.min_margin_over_kalman_ha, net, report.method("kalman-ha")) {
        let gap = 100.0 * (net.success_rate - ha.success_rate);
        if gap < margin {
            return Err(CliError::Threshold(format!("net leads kalman-ha by {gap:.2} points < {margin}")));
        }
    }
    Ok(())
}

fn swap_test(cfg: &RunConfig) -> Result<(), CliError> {
    let seqs = load_sequences(cfg)?;
    let params = load_params(cfg)?;
    check_arch(&params, &seqs)?;
    let out = out_dir(cfg)?;
    let report = heading_swap_test(&seqs, &params, &cfg.swap)?;
    write_json(&out.join("swap_report.json"), &report)?;
    cfg.write_resolved(&out)?;
    log::info!(
        "recovered {}/{} trials, mean {:.1} frames",
        report.recovered,
        report.trials.len(),
        report.mean_recovery_frames
    );
    Ok(())
}

fn shuffle_test(cfg: &RunConfig) -> Result<(), CliError> {
    let seqs = load_sequences(cfg)?;
    let params = load_params(cfg)?;
    check_arch(&params, &seqs)?;
    let out = out_dir(cfg)?;
    let result = shuffle_control_test(&seqs, &params, cfg.shuffle.seed)?;
    write_json(&out.join("shuffle_report.json"), &result)?;
    cfg.write_resolved(&out)?;
    log::info!("ordered {:.2}%  shuffled {:.2}%", 100.0 * result.ordered, 100.0 * result.shuffled);
    if let Some(gap) = cfg.shuffle.min_gap {
        let got = 100.0 * (result.ordered - result.shuffled);
        if got < gap {
            return Err(CliError::Threshold(format!("ordered leads shuffled by {got:.2} points < {gap}")));
        }
    }
    Ok(())
}
