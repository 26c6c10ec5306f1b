#![allow(dead_code)]

use nextloc::data::{Record, Split};
use nextloc::model::{ModelConfig, SeqBatch};
use nextloc::stratify::{PredictionSample, Stratum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn toy_config(n_users: usize, n_locations: usize) -> ModelConfig {
    ModelConfig {
        d: 3,
        n_hidden: 4,
        head_hidden: 5,
        ..ModelConfig::new(n_users, n_locations)
    }
}

pub fn sample(
    user: u32,
    locs: &[u32],
    hours: &[u8],
    target: u32,
    stratum: Stratum,
) -> PredictionSample {
    let inputs = locs
        .iter()
        .zip(hours)
        .map(|(&location, &hour)| Record {
            user,
            location,
            hour,
            category: None,
            ts: 0,
        })
        .collect();
    PredictionSample {
        user,
        inputs,
        target,
        target_hour: 0,
        target_category: None,
        stratum,
        split: Split::Train,
        trajectory: 0,
    }
}

/// Random samples with lengths in `1..=max_len`, strata alternating T1/T2.
pub fn random_samples(
    seed: u64,
    n: usize,
    n_users: u32,
    n_locations: u32,
    max_len: usize,
) -> Vec<PredictionSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(1..=max_len);
            let locs: Vec<u32> = (0..len).map(|_| rng.gen_range(0..n_locations)).collect();
            let hours: Vec<u8> = (0..len).map(|_| rng.gen_range(0..24)).collect();
            let stratum = if i % 2 == 0 { Stratum::T1 } else { Stratum::T2 };
            sample(
                rng.gen_range(0..n_users),
                &locs,
                &hours,
                rng.gen_range(0..n_locations),
                stratum,
            )
        })
        .collect()
}

pub fn batch_of(samples: &[PredictionSample]) -> SeqBatch {
    let refs: Vec<&PredictionSample> = samples.iter().collect();
    SeqBatch::from_samples(&refs)
}
