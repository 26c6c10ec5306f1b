use std::collections::{BTreeSet, HashMap};

use super::segment::RawTrajectory;
use super::{hour_of, Dataset, Record, Split, Trajectory};

/// Bijection between raw string ids and dense indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocab {
    raw: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Indices follow lexicographic order of the raw ids.
    pub fn from_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        let sorted: BTreeSet<&str> = ids.into_iter().collect();
        Self::from_ordered(sorted.into_iter().map(str::to_string).collect())
    }

    /// Keeps the given order; duplicates are a caller error.
    pub fn from_ordered(raw: Vec<String>) -> Self {
        let index = raw
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i as u32))
            .collect();
        Self { raw, index }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn index(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, index: u32) -> Option<&str> {
        self.raw.get(index as usize).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.raw
            .iter()
            .enumerate()
            .map(|(i, r)| (i as u32, r.as_str()))
    }
}

/// Assigns dense indices to users, venues and categories and converts the
/// filtered trajectories. All trajectories start tagged `Train`; see
/// [`split_dataset`](super::split_dataset).
pub fn build_vocab(trajs: &[RawTrajectory]) -> Dataset {
    let users = Vocab::from_ids(trajs.iter().map(|t| t.user.as_str()));
    let locations = Vocab::from_ids(
        trajs
            .iter()
            .flat_map(|t| t.records.iter().map(|r| r.venue_raw.as_str())),
    );
    let categories = Vocab::from_ids(
        trajs
            .iter()
            .flat_map(|t| t.records.iter().map(|r| r.category.as_str()))
            .filter(|c| !c.is_empty()),
    );

    let mut indexed: Vec<Trajectory> = trajs
        .iter()
        .map(|t| {
            let user = users.index(&t.user).expect("user in vocab");
            Trajectory {
                user,
                ordinal: 0,
                records: t
                    .records
                    .iter()
                    .map(|r| Record {
                        user,
                        location: locations.index(&r.venue_raw).expect("venue in vocab"),
                        hour: hour_of(r.timestamp),
                        category: categories.index(&r.category),
                        ts: r.timestamp,
                    })
                    .collect(),
            }
        })
        .collect();
    indexed.sort_by_key(|t| (t.user, t.records.first().map(|r| r.ts)));
    let mut last_user = None;
    let mut ordinal = 0;
    for t in indexed.iter_mut() {
        if last_user != Some(t.user) {
            ordinal = 0;
            last_user = Some(t.user);
        }
        t.ordinal = ordinal;
        ordinal += 1;
    }
    let splits = vec![Split::Train; indexed.len()];
    Dataset {
        trajectories: indexed,
        splits,
        users,
        locations,
        categories,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CheckinRecord;

    fn rec(user: &str, venue: &str, ts: i64) -> CheckinRecord {
        CheckinRecord {
            user_raw: user.into(),
            venue_raw: venue.into(),
            category: "Cafe".into(),
            lat: 0.0,
            lon: 0.0,
            timestamp: ts,
        }
    }

    #[test]
    fn lexicographic_and_deterministic() {
        let trajs = vec![RawTrajectory {
            user: "u".into(),
            records: vec![rec("u", "B", 0), rec("u", "A", 3600)],
        }];
        let ds = build_vocab(&trajs);
        assert_eq!(ds.locations.index("A"), Some(0));
        assert_eq!(ds.locations.index("B"), Some(1));
        assert_eq!(build_vocab(&trajs), ds);
        assert_eq!(ds.trajectories[0].records[1].hour, 1);
    }

    #[test]
    fn index_raw_round_trip() {
        let v = Vocab::from_ids(["z", "a", "m", "a"]);
        assert_eq!(v.len(), 3);
        for (i, r) in v.iter() {
            assert_eq!(v.index(r), Some(i));
            assert_eq!(v.raw(i), Some(r));
        }
    }
}
