use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::checkin::parse_checkins;
use super::segment::{filter_trajectories, segment_trajectories, FilterStats};
use super::split::{split_dataset, SplitRatios};
use super::vocab::build_vocab;
use super::Dataset;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub gap_hours: f64,
    pub min_records: usize,
    pub min_trajectories: usize,
    pub ratios: SplitRatios,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            gap_hours: 72.0,
            min_records: 5,
            min_trajectories: 5,
            ratios: SplitRatios::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub rows: usize,
    pub malformed: usize,
    pub trajectories_before_filter: usize,
    pub filter_passes: usize,
    pub dropped_trajectories: usize,
    pub dropped_users: usize,
}

/// Check-in file to a split, indexed dataset.
pub fn ingest(path: &Path, cfg: &IngestConfig) -> Result<(Dataset, IngestStats)> {
    cfg.ratios.validate()?;
    let parsed = parse_checkins(path)?;
    let trajs = segment_trajectories(parsed.records, cfg.gap_hours);
    let before = trajs.len();
    let (
        kept,
        FilterStats {
            passes,
            dropped_trajectories,
            dropped_users,
        },
    ) = filter_trajectories(trajs, cfg.min_records, cfg.min_trajectories)?;
    let mut ds = build_vocab(&kept);
    split_dataset(&mut ds, &cfg.ratios)?;
    info!(
        "{} rows ({} malformed), {} trajectories of {} users kept",
        parsed.rows,
        parsed.malformed,
        ds.trajectories.len(),
        ds.n_users()
    );
    Ok((
        ds,
        IngestStats {
            rows: parsed.rows,
            malformed: parsed.malformed,
            trajectories_before_filter: before,
            filter_passes: passes,
            dropped_trajectories,
            dropped_users,
        },
    ))
}
