//! Dataset directory layout:
//!
//! * `records.bin`: little-endian `u:u32, l:u32, t:u8, ts:i64, cat:u32` per
//!   record (`cat = u32::MAX` when absent), trajectories back to back
//! * `users.tsv`, `locations.tsv`, `categories.tsv`: `index<TAB>raw id`
//! * `splits.json`: trajectory boundaries and split tags

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Record, Split, Trajectory, Vocab};
use crate::error::{Error, Result};

pub const RECORDS_FILE: &str = "records.bin";
pub const SPLITS_FILE: &str = "splits.json";
const RECORD_BYTES: usize = 4 + 4 + 1 + 8 + 4;
const NO_CATEGORY: u32 = u32::MAX;

#[derive(Serialize, Deserialize)]
struct SplitManifest {
    version: u32,
    n_records: usize,
    trajectories: Vec<TrajEntry>,
}

#[derive(Serialize, Deserialize)]
struct TrajEntry {
    user: u32,
    ordinal: u32,
    offset: usize,
    len: usize,
    split: Split,
}

pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::with_capacity(ds.n_records() * RECORD_BYTES);
    let mut entries = Vec::with_capacity(ds.trajectories.len());
    let mut offset = 0;
    for (t, split) in ds.trajectories.iter().zip(&ds.splits) {
        for r in &t.records {
            blob.extend_from_slice(&r.user.to_le_bytes());
            blob.extend_from_slice(&r.location.to_le_bytes());
            blob.push(r.hour);
            blob.extend_from_slice(&r.ts.to_le_bytes());
            blob.extend_from_slice(&r.category.unwrap_or(NO_CATEGORY).to_le_bytes());
        }
        entries.push(TrajEntry {
            user: t.user,
            ordinal: t.ordinal,
            offset,
            len: t.len(),
            split: *split,
        });
        offset += t.len();
    }
    write(dir, RECORDS_FILE, &blob)?;
    for (name, vocab) in [
        ("users.tsv", &ds.users),
        ("locations.tsv", &ds.locations),
        ("categories.tsv", &ds.categories),
    ] {
        let mut text = String::new();
        for (i, raw) in vocab.iter() {
            text.push_str(&format!("{i}\t{raw}\n"));
        }
        write(dir, name, text.as_bytes())?;
    }
    let manifest = SplitManifest {
        version: 1,
        n_records: offset,
        trajectories: entries,
    };
    write(
        dir,
        SPLITS_FILE,
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
}

fn read_vocab(path: &Path) -> Result<Vocab> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let (idx, id) = line.split_once('\t').ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            msg: format!("line {}: expected index<TAB>id", line_no + 1),
        })?;
        if idx.parse::<usize>().ok() != Some(raw.len()) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("line {}: indices must be dense and ordered", line_no + 1),
            });
        }
        raw.push(id.to_string());
    }
    Ok(Vocab::from_ordered(raw))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let rec_path = dir.join(RECORDS_FILE);
    let blob = fs::read(&rec_path).map_err(|e| Error::io(&rec_path, e))?;
    let man_path = dir.join(SPLITS_FILE);
    let text = fs::read_to_string(&man_path).map_err(|e| Error::io(&man_path, e))?;
    let manifest: SplitManifest = serde_json::from_str(&text)?;
    if blob.len() != manifest.n_records * RECORD_BYTES {
        return Err(Error::Format {
            path: rec_path,
            msg: format!(
                "{} bytes for {} records of {RECORD_BYTES} bytes",
                blob.len(),
                manifest.n_records
            ),
        });
    }
    let users = read_vocab(&dir.join("users.tsv"))?;
    let locations = read_vocab(&dir.join("locations.tsv"))?;
    let categories = read_vocab(&dir.join("categories.tsv"))?;

    let decode = |i: usize| -> Record {
        let b = &blob[i * RECORD_BYTES..(i + 1) * RECORD_BYTES];
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let cat = u32_at(17);
        Record {
            user: u32_at(0),
            location: u32_at(4),
            hour: b[8],
            ts: i64::from_le_bytes(b[9..17].try_into().unwrap()),
            category: (cat != NO_CATEGORY).then_some(cat),
        }
    };

    let mut trajectories = Vec::with_capacity(manifest.trajectories.len());
    let mut splits = Vec::with_capacity(manifest.trajectories.len());
    for e in &manifest.trajectories {
        if e.offset + e.len > manifest.n_records {
            return Err(Error::Format {
                path: man_path.clone(),
                msg: format!("trajectory ({}, {}) out of bounds", e.user, e.ordinal),
            });
        }
        let records: Vec<Record> = (e.offset..e.offset + e.len).map(decode).collect();
        let valid = records.iter().all(|r| {
            r.user == e.user
                && (r.user as usize) < users.len()
                && (r.location as usize) < locations.len()
                && r.hour < 24
                && r.category.is_none_or(|c| (c as usize) < categories.len())
        });
        if !valid {
            return Err(Error::Format {
                path: rec_path.clone(),
                msg: format!(
                    "trajectory ({}, {}) has out-of-range fields",
                    e.user, e.ordinal
                ),
            });
        }
        trajectories.push(Trajectory {
            user: e.user,
            ordinal: e.ordinal,
            records,
        });
        splits.push(e.split);
    }
    Ok(Dataset {
        trajectories,
        splits,
        users,
        locations,
        categories,
    })
}
