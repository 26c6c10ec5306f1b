//! How much does knowing the previous location help predict the next one?
//!
//! Two count-based predictors are fitted on consecutive transitions of the
//! train split: one conditioned on the hour of the next visit, one on the
//! previous location and that hour (backing off to the first for unseen
//! contexts). Both are scored on the eval split, grouped by the category
//! and hour of the destination.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::csv_err;
use crate::data::{Dataset, Split, HOURS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainMeasure {
    /// Hit rate of the modal next location (ties to the smaller index).
    #[default]
    Top1,
    /// Mean fitted probability of the true next location.
    Likelihood,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainConfig {
    pub min_support: usize,
    pub measure: GainMeasure,
    /// Fit one pair of predictors per user instead of one for the population.
    pub per_user: bool,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            min_support: 20,
            measure: GainMeasure::Top1,
            per_user: false,
        }
    }
}

/// A consecutive pair of visits inside one trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub user: u32,
    pub prev: u32,
    pub next: u32,
    pub hour: u8,
    pub category: Option<u32>,
}

pub fn transitions(ds: &Dataset, split: Split) -> Vec<Transition> {
    ds.in_split(split)
        .flat_map(|t| {
            t.records.windows(2).map(|w| Transition {
                user: w[0].user,
                prev: w[0].location,
                next: w[1].location,
                hour: w[1].hour,
                category: w[1].category,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainCell {
    pub category: String,
    pub hour: u8,
    pub acc_without_prev: f64,
    pub acc_with_prev: f64,
    pub support: usize,
    pub reliable: bool,
}

impl GainCell {
    pub fn gain(&self) -> f64 {
        self.acc_with_prev - self.acc_without_prev
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub config: GainConfig,
    pub cells: Vec<GainCell>,
}

impl GainReport {
    /// Support-weighted `(without, with, support)` over the cells whose
    /// category passes `keep`.
    pub fn pooled(&self, keep: impl Fn(&str) -> bool) -> (f64, f64, usize) {
        let mut without = 0.0;
        let mut with = 0.0;
        let mut n = 0;
        for c in self.cells.iter().filter(|c| keep(&c.category)) {
            without += c.acc_without_prev * c.support as f64;
            with += c.acc_with_prev * c.support as f64;
            n += c.support;
        }
        if n == 0 {
            return (0.0, 0.0, 0);
        }
        (without / n as f64, with / n as f64, n)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "category",
            "hour",
            "acc_without_prev",
            "acc_with_prev",
            "support",
            "reliable",
        ])
        .map_err(csv_err)?;
        for c in &self.cells {
            w.write_record(&[
                c.category.clone(),
                c.hour.to_string(),
                format!("{:.6}", c.acc_without_prev),
                format!("{:.6}", c.acc_with_prev),
                c.support.to_string(),
                c.reliable.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Default)]
struct Counts {
    by_loc: HashMap<u32, u32>,
    total: u32,
    /// Modal location, smallest index on ties.
    mode: u32,
}

impl Counts {
    fn add(&mut self, loc: u32) {
        let n = {
            let c = self.by_loc.entry(loc).or_insert(0);
            *c += 1;
            *c
        };
        self.total += 1;
        let best = self.by_loc.get(&self.mode).copied().unwrap_or(0);
        if self.total == 1 || n > best || (n == best && loc < self.mode) {
            self.mode = loc;
        }
    }

    fn score(&self, next: u32, measure: GainMeasure) -> f64 {
        match measure {
            GainMeasure::Top1 => f64::from(u8::from(self.mode == next)),
            GainMeasure::Likelihood => {
                f64::from(self.by_loc.get(&next).copied().unwrap_or(0)) / f64::from(self.total)
            }
        }
    }
}

pub fn prev_location_gain(
    ds: &Dataset,
    train: Split,
    eval: Split,
    cfg: &GainConfig,
) -> Result<GainReport> {
    let fit = transitions(ds, train);
    let test = transitions(ds, eval);
    if fit.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "need transitions in both splits ({train:?}: {}, {eval:?}: {})",
            fit.len(),
            test.len()
        )));
    }
    let who = |t: &Transition| if cfg.per_user { t.user } else { u32::MAX };

    let mut by_hour: HashMap<(u32, u8), Counts> = HashMap::new();
    let mut by_prev: HashMap<(u32, u32, u8), Counts> = HashMap::new();
    for t in &fit {
        by_hour.entry((who(t), t.hour)).or_default().add(t.next);
        by_prev
            .entry((who(t), t.prev, t.hour))
            .or_default()
            .add(t.next);
    }

    let mut acc: BTreeMap<(String, u8), (f64, f64, usize)> = BTreeMap::new();
    for (_, name) in ds.categories.iter() {
        for h in 0..HOURS as u8 {
            acc.insert((name.to_string(), h), (0.0, 0.0, 0));
        }
    }
    for t in &test {
        let without = by_hour
            .get(&(who(t), t.hour))
            .map_or(0.0, |c| c.score(t.next, cfg.measure));
        let with = by_prev
            .get(&(who(t), t.prev, t.hour))
            .map_or(without, |c| c.score(t.next, cfg.measure));
        let cell = acc
            .entry((ds.category_name(t.category).to_string(), t.hour))
            .or_insert((0.0, 0.0, 0));
        cell.0 += without;
        cell.1 += with;
        cell.2 += 1;
    }

    let cells = acc
        .into_iter()
        .map(|((category, hour), (without, with, n))| {
            let d = n.max(1) as f64;
            GainCell {
                category,
                hour,
                acc_without_prev: without / d,
                acc_with_prev: with / d,
                support: n,
                reliable: n > 0 && n >= cfg.min_support,
            }
        })
        .collect();
    Ok(GainReport {
        config: *cfg,
        cells,
    })
}
