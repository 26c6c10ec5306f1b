//! Synthetic check-in corpus with planted anchor structure.
//!
//! Locations are split into an anchor pool (routine places) and a nonanchor
//! pool laid out on a ring. Each user owns `n_anchor_per_user` anchors from
//! the pool. At every step the next visit is, with probability
//! `anchor_return_prob`, the user's anchor for the hour of the visit
//! (independent of where the user was), and otherwise a nonanchor place
//! drawn around a fixed ring position tied to the previous location, with
//! `P(offset) ∝ exp(−sharpness·|offset|)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkin::CheckinRecord;
use super::segment::{filter_trajectories, segment_trajectories};
use super::split::{split_dataset, SplitRatios};
use super::vocab::build_vocab;
use super::Dataset;
use crate::error::{Error, Result};

const ANCHOR_CATEGORIES: [&str; 4] = ["Home", "Office", "Station", "University"];
const NONANCHOR_CATEGORIES: [&str; 6] = ["Restaurant", "Cafe", "Shop", "Bar", "Park", "Museum"];

/// Segmentation window used when generating and re-segmenting the corpus.
pub const SYNTH_GAP_HOURS: f64 = 72.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_locations: usize,
    pub n_anchor_per_user: usize,
    pub records_per_user: usize,
    pub anchor_return_prob: f64,
    pub transition_sharpness: f64,
    pub min_traj_len: usize,
    pub max_traj_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_locations: 500,
            n_anchor_per_user: 3,
            records_per_user: 100,
            anchor_return_prob: 0.6,
            transition_sharpness: 1.5,
            min_traj_len: 5,
            max_traj_len: 12,
            seed: 7,
        }
    }
}

impl SynthConfig {
    fn anchor_pool(&self) -> usize {
        (self.n_locations / 5).max(self.n_anchor_per_user)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.n_users == 0 || self.records_per_user == 0 {
            return bad("n_users and records_per_user must be positive");
        }
        if self.n_anchor_per_user == 0 || self.n_anchor_per_user >= self.n_locations {
            return bad("need 0 < n_anchor_per_user < n_locations");
        }
        if self.n_locations - self.anchor_pool() < 1 {
            return bad("no room for nonanchor locations");
        }
        if !(0.0..=1.0).contains(&self.anchor_return_prob) {
            return bad("anchor_return_prob must be in [0, 1]");
        }
        if self.transition_sharpness.is_nan() || self.transition_sharpness <= 0.0 {
            return bad("transition_sharpness must be > 0");
        }
        if self.min_traj_len == 0 || self.min_traj_len > self.max_traj_len {
            return bad("need 0 < min_traj_len <= max_traj_len");
        }
        Ok(())
    }
}

/// Generated dataset plus the planted ground truth.
#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub dataset: Dataset,
    /// Planted anchors per user index, as location indices of `dataset`.
    pub anchors: Vec<Vec<u32>>,
    /// Category names that only anchor-pool locations carry.
    pub anchor_categories: Vec<String>,
}

struct World {
    pool: usize,
    ring: usize,
    /// Ring position each location's nonanchor successors centre on.
    centre: Vec<usize>,
    /// Cumulative distribution over signed ring offsets `-r..=r`.
    offsets: Vec<(i64, f64)>,
}

impl World {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let pool = cfg.anchor_pool();
        let ring = cfg.n_locations - pool;
        let centre = (0..cfg.n_locations)
            .map(|_| rng.gen_range(0..ring))
            .collect();
        let r = (ring as i64 / 2).min(50);
        let mut offsets = Vec::new();
        if cfg.transition_sharpness.is_infinite() {
            offsets.push((0, 1.0));
        } else {
            let w: Vec<(i64, f64)> = (-r..=r)
                .map(|d| (d, (-cfg.transition_sharpness * d.abs() as f64).exp()))
                .collect();
            let total: f64 = w.iter().map(|x| x.1).sum();
            let mut acc = 0.0;
            for (d, p) in w {
                acc += p / total;
                offsets.push((d, acc));
            }
        }
        Self {
            pool,
            ring,
            centre,
            offsets,
        }
    }

    fn nonanchor_after(&self, prev: usize, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        let d = self
            .offsets
            .iter()
            .find(|(_, c)| u < *c)
            .map_or(self.offsets.last().unwrap().0, |x| x.0);
        let pos = (self.centre[prev] as i64 + d).rem_euclid(self.ring as i64) as usize;
        self.pool + pos
    }

    fn category(&self, loc: usize) -> &'static str {
        if loc < self.pool {
            ANCHOR_CATEGORIES[loc % ANCHOR_CATEGORIES.len()]
        } else {
            NONANCHOR_CATEGORIES[(loc - self.pool) % NONANCHOR_CATEGORIES.len()]
        }
    }
}

fn schedule(anchors: &[usize], hour: i64) -> usize {
    anchors[(hour as usize * anchors.len()) / 24]
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let world = World::new(cfg, &mut rng);
    let mut records = Vec::with_capacity(cfg.n_users * cfg.records_per_user);
    let mut planted: Vec<(String, Vec<usize>)> = Vec::with_capacity(cfg.n_users);

    for u in 0..cfg.n_users {
        let user = format!("user{u:05}");
        let anchors =
            rand::seq::index::sample(&mut rng, world.pool, cfg.n_anchor_per_user).into_vec();
        let mut ts: i64 = rng.gen_range(0..30) * 86_400 + rng.gen_range(6..10) * 3_600;
        let mut prev = schedule(&anchors, (ts / 3600).rem_euclid(24));
        let mut left = cfg.records_per_user;
        let mut first = true;
        while left > 0 {
            let mut len = rng.gen_range(cfg.min_traj_len..=cfg.max_traj_len).min(left);
            if left - len < cfg.min_traj_len {
                len = left;
            }
            for k in 0..len {
                let loc = if first {
                    first = false;
                    prev
                } else {
                    ts += if k == 0 {
                        rng.gen_range(73..=120) * 3_600
                    } else {
                        rng.gen_range(1..=8) * 3_600
                    };
                    if rng.gen::<f64>() < cfg.anchor_return_prob {
                        schedule(&anchors, (ts / 3600).rem_euclid(24))
                    } else {
                        world.nonanchor_after(prev, &mut rng)
                    }
                };
                records.push(CheckinRecord {
                    user_raw: user.clone(),
                    venue_raw: format!("loc{loc:05}"),
                    category: world.category(loc).to_string(),
                    lat: 0.0,
                    lon: 0.0,
                    timestamp: ts,
                });
                prev = loc;
            }
            left -= len;
        }
        planted.push((user, anchors));
    }

    let trajs = segment_trajectories(records, SYNTH_GAP_HOURS);
    let (trajs, _) = filter_trajectories(trajs, cfg.min_traj_len.min(5), 5)?;
    let mut dataset = build_vocab(&trajs);
    split_dataset(&mut dataset, &SplitRatios::default())?;

    let mut anchors = vec![Vec::new(); dataset.n_users()];
    for (user, locs) in planted {
        if let Some(ui) = dataset.users.index(&user) {
            anchors[ui as usize] = locs
                .iter()
                .filter_map(|&l| dataset.locations.index(&format!("loc{l:05}")))
                .collect();
        }
    }
    Ok(SynthCorpus {
        dataset,
        anchors,
        anchor_categories: ANCHOR_CATEGORIES.iter().map(|s| s.to_string()).collect(),
    })
}
