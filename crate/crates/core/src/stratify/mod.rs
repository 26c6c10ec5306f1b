//! Per-user anchor detection and stratification of prediction samples into
//! anchor-targeted (T1) and nonanchor-targeted (T2) travels.

mod gain;

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record, Split};
use crate::error::Result;

pub use gain::{prev_location_gain, GainCell, GainConfig, GainMeasure, GainReport, Transition};

/// Anchor thresholds swept by default.
pub const THRESHOLD_GRID: [u32; 6] = [0, 5, 10, 15, 20, 25];

#[derive(Clone, Debug, PartialEq)]
pub struct AnchorIndex {
    pub threshold: u32,
    anchors: Vec<BTreeSet<u32>>,
}

impl AnchorIndex {
    pub fn from_sets(threshold: u32, anchors: Vec<BTreeSet<u32>>) -> Self {
        Self { threshold, anchors }
    }

    pub fn is_anchor(&self, user: u32, location: u32) -> bool {
        self.anchors
            .get(user as usize)
            .is_some_and(|s| s.contains(&location))
    }

    pub fn anchors(&self, user: u32) -> Option<&BTreeSet<u32>> {
        self.anchors.get(user as usize)
    }

    pub fn n_users(&self) -> usize {
        self.anchors.len()
    }

    pub fn total_anchors(&self) -> usize {
        self.anchors.iter().map(BTreeSet::len).sum()
    }
}

/// Visit counts per user and location over the train split.
pub fn train_visit_counts(ds: &Dataset) -> Vec<HashMap<u32, u32>> {
    let mut counts = vec![HashMap::new(); ds.n_users()];
    for traj in ds.in_split(Split::Train) {
        for r in &traj.records {
            *counts[r.user as usize].entry(r.location).or_insert(0) += 1;
        }
    }
    counts
}

/// A location is an anchor of a user when the user's train-split visit
/// count strictly exceeds `threshold`.
pub fn build_anchor_index(ds: &Dataset, threshold: u32) -> AnchorIndex {
    anchor_index_from_counts(&train_visit_counts(ds), threshold)
}

pub fn anchor_index_from_counts(counts: &[HashMap<u32, u32>], threshold: u32) -> AnchorIndex {
    let anchors = counts
        .iter()
        .map(|c| {
            c.iter()
                .filter(|(_, &n)| n > threshold)
                .map(|(&l, _)| l)
                .collect()
        })
        .collect();
    AnchorIndex { threshold, anchors }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stratum {
    T1,
    T2,
}

impl Stratum {
    pub fn name(self) -> &'static str {
        match self {
            Stratum::T1 => "T1",
            Stratum::T2 => "T2",
        }
    }
}

/// Destination prediction for one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSample {
    pub user: u32,
    pub inputs: Vec<Record>,
    pub target: u32,
    pub target_hour: u8,
    pub target_category: Option<u32>,
    pub stratum: Stratum,
    pub split: Split,
    /// Index of the source trajectory in the dataset.
    pub trajectory: usize,
}

impl PredictionSample {
    pub fn tau(&self) -> usize {
        self.inputs.len()
    }

    pub fn last_location(&self) -> u32 {
        self.inputs[self.inputs.len() - 1].location
    }
}

/// One sample per trajectory with at least two records.
pub fn make_samples(ds: &Dataset, index: &AnchorIndex) -> Vec<PredictionSample> {
    ds.trajectories
        .iter()
        .enumerate()
        .filter(|(_, t)| t.len() >= 2)
        .map(|(i, t)| {
            let (last, inputs) = t.records.split_last().expect("non-empty");
            let stratum = if index.is_anchor(t.user, last.location) {
                Stratum::T1
            } else {
                Stratum::T2
            };
            PredictionSample {
                user: t.user,
                inputs: inputs.to_vec(),
                target: last.location,
                target_hour: last.hour,
                target_category: last.category,
                stratum,
                split: ds.split_of(i),
                trajectory: i,
            }
        })
        .collect()
}

/// Re-tags samples against another anchor index without rebuilding them.
pub fn restratify(samples: &mut [PredictionSample], index: &AnchorIndex) {
    for s in samples {
        s.stratum = if index.is_anchor(s.user, s.target) {
            Stratum::T1
        } else {
            Stratum::T2
        };
    }
}

/// Anchor and stratum counts for one threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumStats {
    pub threshold: u32,
    pub anchor_locations: usize,
    pub mean_anchors_per_user: f64,
    /// `[train, valid, test]` sample counts per stratum.
    pub t1: [usize; 3],
    pub t2: [usize; 3],
}

fn split_slot(s: Split) -> usize {
    match s {
        Split::Train => 0,
        Split::Valid => 1,
        Split::Test => 2,
    }
}

pub fn stratum_stats(ds: &Dataset, thresholds: &[u32]) -> Vec<StratumStats> {
    let counts = train_visit_counts(ds);
    let mut samples = make_samples(ds, &anchor_index_from_counts(&counts, 0));
    thresholds
        .iter()
        .map(|&th| {
            let index = anchor_index_from_counts(&counts, th);
            restratify(&mut samples, &index);
            let mut t1 = [0; 3];
            let mut t2 = [0; 3];
            for s in &samples {
                match s.stratum {
                    Stratum::T1 => t1[split_slot(s.split)] += 1,
                    Stratum::T2 => t2[split_slot(s.split)] += 1,
                }
            }
            let total = index.total_anchors();
            StratumStats {
                threshold: th,
                anchor_locations: total,
                mean_anchors_per_user: total as f64 / index.n_users().max(1) as f64,
                t1,
                t2,
            }
        })
        .collect()
}

pub fn write_stratum_stats_csv<W: Write>(out: W, stats: &[StratumStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "threshold",
        "anchor_locations",
        "mean_anchors_per_user",
        "train_t1",
        "train_t2",
        "valid_t1",
        "valid_t2",
        "test_t1",
        "test_t2",
    ])
    .map_err(csv_err)?;
    for s in stats {
        w.write_record(&[
            s.threshold.to_string(),
            s.anchor_locations.to_string(),
            format!("{:.4}", s.mean_anchors_per_user),
            s.t1[0].to_string(),
            s.t2[0].to_string(),
            s.t1[1].to_string(),
            s.t2[1].to_string(),
            s.t1[2].to_string(),
            s.t2[2].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| crate::Error::io("<csv>", e))?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::io("<csv>", std::io::Error::other(e))
}
