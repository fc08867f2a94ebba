use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{LocalizationError, SuccessCounts};
use crate::baselines::{BaselineConfig, Jpda, KalmanHa, KalmanHa2};
use crate::method::Associator;
use crate::net::NetworkParams;
use crate::sim::SimConfig;
use crate::tracker::{NetTracker, TrackRecord};
use crate::types::SequenceRecord;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    KalmanHa,
    KalmanHa2,
    Jpda,
    Net,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [MethodKind::KalmanHa, MethodKind::KalmanHa2, MethodKind::Jpda, MethodKind::Net];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::KalmanHa => "kalman-ha",
            MethodKind::KalmanHa2 => "kalman-ha2",
            MethodKind::Jpda => "jpda",
            MethodKind::Net => "net",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?} (expected kalman-ha, kalman-ha2, jpda or net)")))
    }
}

/// Instantiates a method for sequences generated under `sim`.
pub fn build_method(
    kind: MethodKind,
    sim: &SimConfig,
    baseline: &BaselineConfig,
    net: Option<&NetworkParams>,
) -> Result<Box<dyn Associator>> {
    Ok(match kind {
        MethodKind::KalmanHa => Box::new(KalmanHa::new(baseline.clone(), sim)?),
        MethodKind::KalmanHa2 => Box::new(KalmanHa2::new(baseline.clone(), sim)?),
        MethodKind::Jpda => Box::new(Jpda::new(baseline.clone(), sim)?),
        MethodKind::Net => {
            let params = net.ok_or_else(|| Error::Config("the net method needs a checkpoint".into()))?;
            check_net(params, sim)?;
            Box::new(NetTracker::new(params.clone())?)
        }
    })
}

fn check_net(params: &NetworkParams, sim: &SimConfig) -> Result<()> {
    if (params.arch.n_robots, params.arch.max_detections) != (sim.n_robots, sim.max_detections) {
        return Err(Error::Shape(format!(
            "checkpoint is for N={}, M={}, data has N={}, M={}",
            params.arch.n_robots, params.arch.max_detections, sim.n_robots, sim.max_detections
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub sequence: usize,
    pub seed: u64,
    pub frames: usize,
    pub correct: u64,
    pub detections: u64,
    pub success_rate: f64,
    pub localization_error_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub success_rate: f64,
    /// Metres, averaged over (frame, visible robot) pairs with an estimate.
    pub localization_error_m: f64,
    pub correct: u64,
    pub detections: u64,
    pub localized_pairs: u64,
    /// Visible-robot frames before the method first located that robot.
    pub unestimated_pairs: u64,
    pub sequences: Vec<SequenceResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_robots: usize,
    pub max_detections: usize,
    pub field_width_m: f64,
    pub field_height_m: f64,
    pub frames: usize,
    pub seeds: Vec<u64>,
    /// Clutter detections are part of the success-rate denominator.
    pub clutter_counted: bool,
    pub baseline: BaselineConfig,
    pub methods: Vec<MethodReport>,
    /// Smoothed net locations per sequence, when the net was evaluated.
    #[serde(skip)]
    pub net_tracks: Vec<Vec<TrackRecord>>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row per method and sequence plus an `all` row per method.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method\tsequence\tframes\tcorrect\tdetections\tsuccess_rate\tlocalization_error_m\n");
        for m in &self.methods {
            for s in &m.sequences {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    m.method, s.sequence, s.frames, s.correct, s.detections, s.success_rate, s.localization_error_m
                ));
            }
            out.push_str(&format!(
                "{}\tall\t{}\t{}\t{}\t{}\t{}\n",
                m.method, self.frames, m.correct, m.detections, m.success_rate, m.localization_error_m
            ));
        }
        out
    }

    /// Net tracks in metres.
    pub fn tracks_tsv(&self) -> String {
        let mut out = String::from("sequence\tt\trobot\tx_m\ty_m\talpha\n");
        for (i, seq) in self.net_tracks.iter().enumerate() {
            for r in seq {
                let alpha = r.alpha.map_or(String::new(), |a| a.to_string());
                out.push_str(&format!("{i}\t{}\t{}\t{}\t{}\t{alpha}\n", r.t, r.robot, r.x * self.field_width_m, r.y * self.field_height_m));
            }
        }
        out
    }
}

/// The generating configuration shared by all sequences.
pub fn common_sim_config(sequences: &[SequenceRecord]) -> Result<Option<SimConfig>> {
    let Some(first) = sequences.first() else { return Ok(None) };
    for s in sequences {
        s.validate()?;
        let c = &s.config;
        if (c.n_robots, c.max_detections) != (first.config.n_robots, first.config.max_detections) {
            return Err(Error::Config("sequences with different N or M cannot share a report".into()));
        }
    }
    Ok(Some(first.config.clone()))
}

/// Runs one method over every sequence, resetting it between sequences.
pub fn evaluate_method(method: &mut dyn Associator, sequences: &[SequenceRecord]) -> Result<MethodReport> {
    evaluate_with(method, sequences, |_| {})
}

/// As [`evaluate_method`], calling `after` with the method at the end of
/// each sequence.
pub fn evaluate_with<A: Associator + ?Sized>(
    method: &mut A,
    sequences: &[SequenceRecord],
    mut after: impl FnMut(&A),
) -> Result<MethodReport> {
    let n = sequences.first().map_or(0, |s| s.n_robots());
    let mut total = SuccessCounts::default();
    let mut loc = LocalizationError::new(n);
    let mut per_sequence = Vec::with_capacity(sequences.len());
    for (i, seq) in sequences.iter().enumerate() {
        method.reset();
        let field = (seq.config.field_width, seq.config.field_height);
        let mut counts = SuccessCounts::default();
        let mut seq_loc = LocalizationError::new(n);
        for f in &seq.frames {
            let out = method.step(&f.input)?;
            counts.add_frame(&f.input, &f.label, &out.label)?;
            seq_loc.add_frame(&out.positions, &f.truth, field)?;
        }
        after(method);
        total.merge(counts);
        loc.merge(&seq_loc);
        per_sequence.push(SequenceResult {
            sequence: i,
            seed: seq.config.seed,
            frames: seq.len(),
            correct: counts.correct,
            detections: counts.detections,
            success_rate: counts.rate(),
            localization_error_m: seq_loc.mean(),
        });
    }
    Ok(MethodReport {
        method: method.name().to_string(),
        success_rate: total.rate(),
        localization_error_m: loc.mean(),
        correct: total.correct,
        detections: total.detections,
        localized_pairs: loc.pairs,
        unestimated_pairs: loc.unestimated,
        sequences: per_sequence,
    })
}

/// Evaluates every requested method on identical inputs.
pub fn run_benchmark(
    sequences: &[SequenceRecord],
    methods: &[MethodKind],
    baseline: &BaselineConfig,
    net: Option<&NetworkParams>,
) -> Result<EvalReport> {
    let sim = common_sim_config(sequences)?;
    let mut report = EvalReport {
        n_robots: sim.as_ref().map_or(0, |c| c.n_robots),
        max_detections: sim.as_ref().map_or(0, |c| c.max_detections),
        field_width_m: sim.as_ref().map_or(0.0, |c| c.field_width),
        field_height_m: sim.as_ref().map_or(0.0, |c| c.field_height),
        frames: sequences.iter().map(SequenceRecord::len).sum(),
        seeds: sequences.iter().map(|s| s.config.seed).collect(),
        clutter_counted: true,
        baseline: baseline.clone(),
        methods: Vec::new(),
        net_tracks: Vec::new(),
    };
    if methods.contains(&MethodKind::Net) && net.is_none() {
        return Err(Error::Config("the net method needs a checkpoint".into()));
    }
    let Some(sim) = sim else { return Ok(report) };
    for &kind in methods {
        if kind == MethodKind::Net {
            let params = net.expect("checked above");
            check_net(params, &sim)?;
            let mut tracker = NetTracker::new(params.clone())?;
            let mut tracks = Vec::with_capacity(sequences.len());
            let r = evaluate_with(&mut tracker, sequences, |t| tracks.push(t.records().to_vec()))?;
            report.methods.push(r);
            report.net_tracks = tracks;
        } else {
            let mut m = build_method(kind, &sim, baseline, None)?;
            report.methods.push(evaluate_method(m.as_mut(), sequences)?);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::success_counts;
    use crate::net::Architecture;
    use crate::sim::generate_sequences;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data() -> Vec<SequenceRecord> {
        let cfg = SimConfig { n_robots: 2, max_detections: 3, seed: 21, ..SimConfig::default() };
        generate_sequences(&cfg, 2, 80).unwrap()
    }

    fn small_net(n: usize, m: usize) -> NetworkParams {
        let arch = Architecture { hidden: 5, layers: 1, ..Architecture::new(n, m) };
        NetworkParams::init(arch, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in MethodKind::ALL {
            assert_eq!(m.as_str().parse::<MethodKind>().unwrap(), m);
            assert_eq!(m.to_string(), m.as_str());
        }
        assert!("kalman".parse::<MethodKind>().is_err());
    }

    #[test]
    fn empty_inputs_give_empty_reports() {
        let r = run_benchmark(&[], &MethodKind::ALL[..3], &BaselineConfig::default(), None).unwrap();
        assert!(r.methods.is_empty());
        assert_eq!(r.frames, 0);
        let r = run_benchmark(&data(), &[], &BaselineConfig::default(), None).unwrap();
        assert!(r.methods.is_empty());
        assert_eq!(r.to_tsv().lines().count(), 1);
    }

    #[test]
    fn net_needs_a_matching_checkpoint() {
        let seqs = data();
        let b = BaselineConfig::default();
        assert!(run_benchmark(&seqs, &[MethodKind::Net], &b, None).is_err());
        assert!(matches!(
            run_benchmark(&seqs, &[MethodKind::Net], &b, Some(&small_net(3, 3))),
            Err(Error::Shape(_))
        ));
        let r = run_benchmark(&seqs, &[MethodKind::Net], &b, Some(&small_net(2, 3))).unwrap();
        assert_eq!(r.net_tracks.len(), 2);
    }

    #[test]
    fn mixed_dimensions_are_refused() {
        let mut seqs = data();
        let other = SimConfig { n_robots: 3, max_detections: 3, ..SimConfig::default() };
        seqs.extend(generate_sequences(&other, 1, 10).unwrap());
        assert!(run_benchmark(&seqs, &[MethodKind::Jpda], &BaselineConfig::default(), None).is_err());
    }

    #[test]
    fn totals_match_direct_scoring() {
        let seqs = data();
        let b = BaselineConfig::default();
        let report = run_benchmark(&seqs, &[MethodKind::KalmanHa, MethodKind::Jpda], &b, None).unwrap();
        assert_eq!(report.frames, 160);
        for (kind, m) in [MethodKind::KalmanHa, MethodKind::Jpda].into_iter().zip(&report.methods) {
            let mut method = build_method(kind, &seqs[0].config, &b, None).unwrap();
            let (mut inputs, mut truth, mut pred) = (Vec::new(), Vec::new(), Vec::new());
            for s in &seqs {
                method.reset();
                for f in &s.frames {
                    pred.push(method.step(&f.input).unwrap().label);
                    inputs.push(f.input.clone());
                    truth.push(f.label.clone());
                }
            }
            let c = success_counts(&inputs, &truth, &pred).unwrap();
            assert_eq!((m.correct, m.detections), (c.correct, c.detections));
            assert_eq!(m.success_rate, c.rate());
            let seq_correct: u64 = m.sequences.iter().map(|s| s.correct).sum();
            assert_eq!(seq_correct, m.correct);
            assert!(m.localization_error_m.is_finite() && m.localization_error_m >= 0.0);
        }
        assert_eq!(report.to_tsv().lines().count(), 1 + 2 * 3);
        let back: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back.methods, report.methods);
    }

    #[test]
    fn reports_are_reproducible() {
        let seqs = data();
        let net = small_net(2, 3);
        let a = run_benchmark(&seqs, &MethodKind::ALL, &BaselineConfig::default(), Some(&net)).unwrap();
        let b = run_benchmark(&seqs, &MethodKind::ALL, &BaselineConfig::default(), Some(&net)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.tracks_tsv(), b.tracks_tsv());
    }
}
