use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{observe, step_world, SimConfig, WorldState};
use crate::dataset::{write_manifest, write_sequence};
use crate::types::{FrameRecord, SequenceRecord};
use crate::{Error, Result};

/// Simulates `length` frames starting from uniformly random poses.
pub fn generate_sequence<R: Rng + ?Sized>(
    config: &SimConfig,
    length: usize,
    rng: &mut R,
) -> Result<SequenceRecord> {
    config.validate()?;
    if length == 0 {
        return Err(Error::Config("sequence length must be at least 1".into()));
    }
    let mut state = WorldState::random(config, rng);
    let mut frames = Vec::with_capacity(length);
    for k in 0..length {
        if k > 0 {
            state = step_world(&state, config, rng);
        }
        let (input, label) = observe(&state, config, rng);
        frames.push(FrameRecord { input, label, truth: state.truth() });
    }
    Ok(SequenceRecord { config: config.clone(), frames })
}

/// Per-sequence seeds derived from a master seed.
pub fn sequence_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..n).map(|_| rng.next_u64()).collect()
}

/// Generates `n` independent sequences in memory. Sequence `i` carries its
/// own derived seed in its config, so it can be regenerated alone.
pub fn generate_sequences(config: &SimConfig, n: usize, length: usize) -> Result<Vec<SequenceRecord>> {
    sequence_seeds(config.seed, n)
        .into_iter()
        .map(|seed| {
            let cfg = SimConfig { seed, ..config.clone() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            generate_sequence(&cfg, length, &mut rng)
        })
        .collect()
}

/// Writes `n` sequences to `out_dir` as `seq_XXXX.jsonl` plus a
/// `manifest.txt`, and returns the manifest path. `config.seed` is the
/// master seed.
pub fn generate_dataset(config: &SimConfig, n: usize, length: usize, out_dir: &Path) -> Result<PathBuf> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(n);
    for (i, seed) in sequence_seeds(config.seed, n).into_iter().enumerate() {
        let cfg = SimConfig { seed, ..config.clone() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let record = generate_sequence(&cfg, length, &mut rng)?;
        let name = PathBuf::from(format!("seq_{i:04}.jsonl"));
        write_sequence(&record, &out_dir.join(&name))?;
        entries.push(name);
    }
    let manifest = out_dir.join("manifest.txt");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{read_manifest, read_sequence};

    #[test]
    fn same_seed_same_sequence() {
        let config = SimConfig { n_robots: 7, max_detections: 10, ..SimConfig::default() };
        let a = generate_sequence(&config, 1000, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = generate_sequence(&config, 1000, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.frames[0].input.slots.len(), 10);
        assert_eq!(a.frames[0].input.broadcasts.len(), 7);
    }

    #[test]
    fn zero_length_rejected() {
        assert!(generate_sequence(&SimConfig::default(), 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn miss_fraction_matches_p_fn() {
        let config = SimConfig { occlusion_rate: 0.0, p_fp: 0.0, p_fn: 0.1, ..SimConfig::default() };
        let seq = generate_sequence(&config, 10_000, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut missing = 0usize;
        let mut total = 0usize;
        for f in &seq.frames {
            for r in 1..=config.n_robots {
                total += 1;
                if !f.label.classes.contains(&r) {
                    missing += 1;
                }
            }
        }
        let frac = missing as f64 / total as f64;
        assert!((frac - 0.1).abs() <= 0.01, "{frac}");
    }

    #[test]
    fn every_robot_present_without_occlusion_or_misses() {
        // Clutter is off too: on overflow it can outrank a robot's detection.
        let config = SimConfig { occlusion_rate: 0.0, p_fn: 0.0, p_fp: 0.0, ..SimConfig::default() };
        let seq = generate_sequence(&config, 2000, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        for f in &seq.frames {
            for r in 1..=config.n_robots {
                assert!(f.label.classes.contains(&r));
            }
        }
    }

    #[test]
    fn occlusions_happen_and_end() {
        let config = SimConfig { occlusion_rate: 0.01, ..SimConfig::default() };
        let seq = generate_sequence(&config, 3000, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let hidden = seq.frames.iter().filter(|f| !f.truth[0].visible).count();
        assert!(hidden > 0 && hidden < seq.len());
    }

    #[test]
    fn dataset_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let config = SimConfig { seed: 7, ..SimConfig::default() };
        let mf = generate_dataset(&config, 10, 1000, dir.path()).unwrap();
        let paths = read_manifest(&mf).unwrap();
        assert_eq!(paths.len(), 10);
        let first = read_sequence(&paths[0]).unwrap();
        assert_eq!(first.len(), 1000);

        let dir2 = tempfile::tempdir().unwrap();
        let mf2 = generate_dataset(&config, 10, 1000, dir2.path()).unwrap();
        assert_eq!(std::fs::read(&mf).unwrap(), std::fs::read(&mf2).unwrap());
        for (a, b) in paths.iter().zip(read_manifest(&mf2).unwrap()) {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
    }

    #[test]
    fn empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let mf = generate_dataset(&SimConfig::default(), 0, 100, dir.path()).unwrap();
        assert!(read_manifest(&mf).unwrap().is_empty());
    }
}
