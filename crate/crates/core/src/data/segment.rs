use std::collections::BTreeMap;

use super::checkin::CheckinRecord;
use crate::error::{Error, Result};

/// A user's trajectory before indexing.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTrajectory {
    pub user: String,
    pub records: Vec<CheckinRecord>,
}

/// Splits a time-ordered sequence wherever consecutive timestamps are more
/// than `gap_secs` apart.
pub fn segment_by_gap<R>(records: Vec<R>, gap_secs: i64, ts: impl Fn(&R) -> i64) -> Vec<Vec<R>> {
    let mut out: Vec<Vec<R>> = Vec::new();
    let mut last: Option<i64> = None;
    for r in records {
        let t = ts(&r);
        match (last, out.last_mut()) {
            (Some(prev), Some(cur)) if t - prev <= gap_secs => cur.push(r),
            _ => out.push(vec![r]),
        }
        last = Some(t);
    }
    out
}

/// Groups check-ins by user (sorted by time, stable on ties) and segments
/// each user's history with a gap threshold in hours.
pub fn segment_trajectories(records: Vec<CheckinRecord>, gap_hours: f64) -> Vec<RawTrajectory> {
    let gap_secs = (gap_hours * 3600.0).round() as i64;
    let mut by_user: BTreeMap<String, Vec<CheckinRecord>> = BTreeMap::new();
    for r in records {
        by_user.entry(r.user_raw.clone()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (user, mut recs) in by_user {
        recs.sort_by_key(|r| r.timestamp);
        for seg in segment_by_gap(recs, gap_secs, |r| r.timestamp) {
            out.push(RawTrajectory {
                user: user.clone(),
                records: seg,
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FilterStats {
    pub passes: usize,
    pub dropped_trajectories: usize,
    pub dropped_users: usize,
}

/// Drops trajectories shorter than `min_records`, then users left with fewer
/// than `min_trajs` trajectories, repeating until nothing changes.
pub fn filter_trajectories(
    trajs: Vec<RawTrajectory>,
    min_records: usize,
    min_trajs: usize,
) -> Result<(Vec<RawTrajectory>, FilterStats)> {
    let (n_in, users_in) = (trajs.len(), count_users(&trajs));
    let mut stats = FilterStats::default();
    let mut cur = trajs;
    loop {
        stats.passes += 1;
        let before = cur.len();
        cur.retain(|t| t.records.len() >= min_records);
        let mut per_user: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &cur {
            *per_user.entry(t.user.as_str()).or_default() += 1;
        }
        let keep: std::collections::BTreeSet<String> = per_user
            .into_iter()
            .filter(|&(_, n)| n >= min_trajs)
            .map(|(u, _)| u.to_string())
            .collect();
        cur.retain(|t| keep.contains(&t.user));
        if cur.len() == before {
            break;
        }
    }
    stats.dropped_trajectories = n_in - cur.len();
    stats.dropped_users = users_in - count_users(&cur);
    if cur.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "all {n_in} trajectories of {users_in} users removed by filtering \
             (min {min_records} records, min {min_trajs} trajectories)"
        )));
    }
    Ok((cur, stats))
}

fn count_users(trajs: &[RawTrajectory]) -> usize {
    trajs
        .iter()
        .map(|t| t.user.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(user: &str, hour: i64) -> CheckinRecord {
        CheckinRecord {
            user_raw: user.into(),
            venue_raw: format!("v{hour}"),
            category: "c".into(),
            lat: 0.0,
            lon: 0.0,
            timestamp: hour * 3600,
        }
    }

    fn traj(user: &str, n: usize) -> RawTrajectory {
        RawTrajectory {
            user: user.into(),
            records: (0..n as i64).map(|h| rec(user, h)).collect(),
        }
    }

    #[test]
    fn gap_splits_long_pauses() {
        let segs = segment_by_gap(vec![0i64, 10, 100], 72 * 3600, |h| h * 3600);
        assert_eq!(segs, vec![vec![0, 10], vec![100]]);
        let one = segment_by_gap(vec![5i64], 72 * 3600, |h| h * 3600);
        assert_eq!(one, vec![vec![5]]);
        let all = segment_by_gap(vec![0i64, 50, 100, 170], 72 * 3600, |h| h * 3600);
        assert_eq!(all.len(), 1);
    }

    #[test]
    fn exactly_the_gap_does_not_split() {
        let segs = segment_by_gap(vec![0i64, 72], 72 * 3600, |h| h * 3600);
        assert_eq!(segs.len(), 1);
    }

    #[test]
    fn segmentation_groups_users_and_sorts() {
        let recs = vec![rec("b", 200), rec("a", 5), rec("b", 1), rec("a", 0)];
        let t = segment_trajectories(recs, 72.0);
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].user, "a");
        assert_eq!(t[0].records.len(), 2);
        assert_eq!(t[1].records[0].timestamp, 3600);
    }

    #[test]
    fn complete_user_is_kept() {
        let trajs: Vec<_> = (0..5).map(|_| traj("u", 6)).collect();
        let (out, stats) = filter_trajectories(trajs, 5, 5).unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(stats.passes, 1);
    }

    #[test]
    fn short_trajectory_cascades_to_user() {
        let mut trajs: Vec<_> = (0..4).map(|_| traj("u", 6)).collect();
        trajs.push(traj("u", 3));
        trajs.extend((0..5).map(|_| traj("w", 5)));
        let (out, stats) = filter_trajectories(trajs, 5, 5).unwrap();
        assert!(out.iter().all(|t| t.user == "w"));
        assert_eq!(out.len(), 5);
        assert!(stats.passes <= 2);
        assert_eq!(stats.dropped_users, 1);
    }

    #[test]
    fn everything_removed_is_error() {
        let trajs: Vec<_> = (0..2).map(|_| traj("u", 6)).collect();
        assert!(matches!(
            filter_trajectories(trajs, 5, 5),
            Err(Error::EmptyDataset(_))
        ));
    }
}
