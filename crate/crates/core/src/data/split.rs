use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            valid: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    fn as_array(&self) -> [f64; 3] {
        [self.train, self.valid, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|r| !(0.0..=1.0).contains(r)) || (a.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split ratios {a:?} must be in [0,1] and sum to 1"
            )));
        }
        Ok(())
    }
}

/// Per-user (train, valid, test) counts for `n` trajectories.
///
/// Largest-remainder rounding (ties go to the earlier split), then every
/// split with a positive ratio gets at least one trajectory, taken from the
/// currently largest split, when `n` allows it.
pub fn split_counts(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    let r = ratios.as_array();
    let exact: Vec<f64> = r.iter().map(|&x| x * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|&x| (x + 1e-9).floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>().min(n);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - counts[a] as f64;
        let fb = exact[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    let positive = r.iter().filter(|&&x| x > 0.0).count();
    if n >= positive {
        for i in 0..3 {
            if r[i] > 0.0 && counts[i] == 0 {
                let donor = (0..3)
                    .max_by_key(|&j| (counts[j], std::cmp::Reverse(j)))
                    .unwrap();
                counts[donor] -= 1;
                counts[i] += 1;
            }
        }
    }
    [counts[0], counts[1], counts[2]]
}

/// Chronological per-user split: a user's earliest trajectories train, the
/// next validate, the latest test.
pub fn split_dataset(ds: &mut Dataset, ratios: &SplitRatios) -> Result<()> {
    ratios.validate()?;
    let mut start = 0;
    while start < ds.trajectories.len() {
        let user = ds.trajectories[start].user;
        let end = start
            + ds.trajectories[start..]
                .iter()
                .take_while(|t| t.user == user)
                .count();
        let [tr, va, _] = split_counts(end - start, ratios);
        for (k, tag) in ds.splits[start..end].iter_mut().enumerate() {
            *tag = if k < tr {
                Split::Train
            } else if k < tr + va {
                Split::Valid
            } else {
                Split::Test
            };
        }
        start = end;
    }
    Ok(())
}
