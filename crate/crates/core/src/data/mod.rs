//! Check-in ingestion, trajectory segmentation and filtering, vocabularies,
//! chronological splits, on-disk layout and the synthetic corpus generator.

mod checkin;
mod ingest;
mod io;
mod segment;
mod split;
mod synth;
mod vocab;

use serde::{Deserialize, Serialize};

pub use checkin::{parse_checkins, parse_checkins_from_reader, CheckinRecord, ParsedCheckins};
pub use ingest::{ingest, IngestConfig, IngestStats};
pub use io::{read_dataset, write_dataset};
pub use segment::{
    filter_trajectories, segment_by_gap, segment_trajectories, FilterStats, RawTrajectory,
};
pub use split::{split_counts, split_dataset, SplitRatios};
pub use synth::{synth_generate, SynthConfig, SynthCorpus, SYNTH_GAP_HOURS};
pub use vocab::{build_vocab, Vocab};

pub const HOURS: usize = 24;

/// One indexed visit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Record {
    pub user: u32,
    pub location: u32,
    /// Hour of day, `0..24`.
    pub hour: u8,
    pub category: Option<u32>,
    /// Epoch seconds (local clock).
    pub ts: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub user: u32,
    /// Position of this trajectory among the user's trajectories, in time order.
    pub ordinal: u32,
    pub records: Vec<Record>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Indexed trajectory corpus. Trajectories are ordered by (user, ordinal).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    /// Split tag per trajectory, aligned with `trajectories`.
    pub splits: Vec<Split>,
    pub users: Vocab,
    pub locations: Vocab,
    pub categories: Vocab,
}

impl Dataset {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn n_records(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.splits[i]
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &Trajectory> {
        self.trajectories
            .iter()
            .zip(&self.splits)
            .filter(move |(_, s)| **s == split)
            .map(|(t, _)| t)
    }

    pub fn count_split(&self, split: Split) -> usize {
        self.splits.iter().filter(|s| **s == split).count()
    }

    pub fn category_name(&self, id: Option<u32>) -> &str {
        id.and_then(|c| self.categories.raw(c)).unwrap_or("-")
    }
}

/// Hour-of-day of an epoch-seconds timestamp.
pub fn hour_of(ts: i64) -> u8 {
    (ts.rem_euclid(86_400) / 3_600) as u8
}
