use crate::stratify::{PredictionSample, Stratum};

/// Step-major padded batch. Row `r` is valid at step `k` iff `mask[k][r]`;
/// valid steps of a row form a prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqBatch {
    pub users: Vec<usize>,
    pub locations: Vec<Vec<usize>>,
    pub hours: Vec<Vec<usize>>,
    pub mask: Vec<Vec<bool>>,
    pub lengths: Vec<usize>,
    pub targets: Vec<usize>,
    pub strata: Vec<Stratum>,
}

impl SeqBatch {
    pub fn from_samples(samples: &[&PredictionSample]) -> Self {
        let steps = samples.iter().map(|s| s.tau()).max().unwrap_or(0);
        let b = samples.len();
        let mut locations = vec![vec![0; b]; steps];
        let mut hours = vec![vec![0; b]; steps];
        let mut mask = vec![vec![false; b]; steps];
        for (r, s) in samples.iter().enumerate() {
            for (k, rec) in s.inputs.iter().enumerate() {
                locations[k][r] = rec.location as usize;
                hours[k][r] = rec.hour as usize;
                mask[k][r] = true;
            }
        }
        Self {
            users: samples.iter().map(|s| s.user as usize).collect(),
            locations,
            hours,
            mask,
            lengths: samples.iter().map(|s| s.tau()).collect(),
            targets: samples.iter().map(|s| s.target as usize).collect(),
            strata: samples.iter().map(|s| s.stratum).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.users.len()
    }

    pub fn steps(&self) -> usize {
        self.mask.len()
    }

    /// Appends `extra` fully masked steps.
    pub fn pad_steps(&mut self, extra: usize) {
        let b = self.rows();
        for _ in 0..extra {
            self.locations.push(vec![0; b]);
            self.hours.push(vec![0; b]);
            self.mask.push(vec![false; b]);
        }
    }

    pub fn last_locations(&self) -> Vec<usize> {
        self.lengths
            .iter()
            .enumerate()
            .map(|(r, &n)| self.locations[n - 1][r])
            .collect()
    }

    pub fn rows_in(&self, stratum: Stratum) -> Vec<usize> {
        (0..self.rows())
            .filter(|&r| self.strata[r] == stratum)
            .collect()
    }

    /// Fraction of (row, step) slots that are padding.
    pub fn padding_fraction(&self) -> f64 {
        let slots = self.rows() * self.steps();
        if slots == 0 {
            return 0.0;
        }
        let valid: usize = self.lengths.iter().sum();
        1.0 - valid as f64 / slots as f64
    }
}
