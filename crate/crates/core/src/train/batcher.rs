use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::stratify::PredictionSample;

/// Independent random streams of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Counterfactual = 3,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `(run seed, stream, epoch, batch)`.
pub fn derive_seed(seed: u64, stream: Stream, epoch: usize, batch: usize) -> u64 {
    [stream as u64, epoch as u64, batch as u64]
        .iter()
        .fold(splitmix(seed), |acc, &x| splitmix(acc ^ x))
}

/// Index lists into `samples`, one per batch.
///
/// Samples are shuffled with an epoch-derived seed; with `bucket` they are
/// then stably sorted by input length so each batch holds similar lengths.
/// The batch order is shuffled again so lengths do not arrive in order.
pub fn batcher(
    samples: &[&PredictionSample],
    batch_size: usize,
    seed: u64,
    epoch: usize,
    bucket: bool,
) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch_size must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Shuffle, epoch, 0));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    if bucket {
        order.sort_by_key(|&i| samples[i].tau());
    }
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    batches.shuffle(&mut rng);
    batches
}
