use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Cohort, Group, RawRecording, Task, RAW_RATE_HZ};
use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::{BILATERAL_CHANNELS, CHANNELS};

/// Header of every per-task CSV: six left-wrist then six right-wrist channels.
pub const CSV_HEADER: [&str; BILATERAL_CHANNELS] = [
    "ax_l", "ay_l", "az_l", "gx_l", "gy_l", "gz_l", "ax_r", "ay_r", "az_r", "gx_r", "gy_r", "gz_r",
];

const META_FILE: &str = "meta.json";

#[derive(Debug, Serialize, Deserialize)]
struct SubjectMeta {
    subject_id: String,
    group: Group,
}

/// Loads a cohort from `root/<subject>/{meta.json, task_<Name>.csv}`.
///
/// Subject directories are visited in name order and the result is merged in
/// `subject_id` order, so parallel loading stays deterministic.
pub fn load_pads(root: &Path) -> Result<Cohort> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MalformedDataset(format!(
            "{} contains no subject directories",
            root.display()
        )));
    }

    let mut loaded: Vec<(SubjectMeta, Vec<RawRecording>)> =
        dirs.par_iter().map(|d| load_subject(d)).collect::<Result<_>>()?;
    loaded.sort_by(|a, b| a.0.subject_id.cmp(&b.0.subject_id));

    let mut cohort = Cohort::default();
    for (meta, recs) in loaded {
        if cohort.subjects.insert(meta.subject_id.clone(), meta.group).is_some() {
            return Err(Error::MalformedDataset(format!(
                "duplicate subject id {}",
                meta.subject_id
            )));
        }
        cohort.recordings.extend(recs);
    }
    cohort.sort_canonical();
    for (subject, missing) in cohort.missing_tasks() {
        log::warn!("subject {subject} is missing {} task(s): {missing:?}", missing.len());
    }
    Ok(cohort)
}

fn load_subject(dir: &Path) -> Result<(SubjectMeta, Vec<RawRecording>)> {
    let meta_path = dir.join(META_FILE);
    if !meta_path.is_file() {
        return Err(Error::MalformedDataset(format!("missing {}", meta_path.display())));
    }
    let meta: SubjectMeta = serde_json::from_slice(&fs::read(&meta_path)?).map_err(|e| {
        Error::MalformedDataset(format!("{}: {e}", meta_path.display()))
    })?;

    let mut files: Vec<(Task, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(task_name) = name.strip_prefix("task_").and_then(|n| n.strip_suffix(".csv"))
        else {
            continue;
        };
        let task: Task = task_name.parse().map_err(|_| {
            Error::MalformedDataset(format!("{}: unknown task `{task_name}`", path.display()))
        })?;
        files.push((task, path));
    }
    files.sort();

    let recordings = files
        .into_iter()
        .map(|(task, path)| {
            let (left, right) = read_task_csv(&path)?;
            let rec = RawRecording {
                subject_id: meta.subject_id.clone(),
                group: meta.group,
                task,
                sample_rate_hz: RAW_RATE_HZ,
                left,
                right,
            };
            rec.validate()?;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((meta, recordings))
}

/// Reads one 12-column task file. Row numbers in errors are 1-based file
/// lines, the header being line 1.
fn read_task_csv(path: &Path) -> Result<(Signal, Signal)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::MalformedDataset(format!("{}: {e}", path.display())))?;
    let header_len = reader
        .headers()
        .map_err(|e| Error::MalformedDataset(format!("{}: {e}", path.display())))?
        .len();
    if header_len != BILATERAL_CHANNELS {
        return Err(Error::MalformedDataset(format!(
            "{}: header has {header_len} columns, expected {BILATERAL_CHANNELS}",
            path.display()
        )));
    }

    let mut left = Vec::new();
    let mut right = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            row: line,
            msg: e.to_string(),
        })?;
        if record.len() != BILATERAL_CHANNELS {
            return Err(Error::MalformedDataset(format!(
                "{}: line {line} has {} columns, expected {BILATERAL_CHANNELS}",
                path.display(),
                record.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                file: path.to_path_buf(),
                row: line,
                msg: format!("column {} is not a number: `{cell}`", CSV_HEADER[c]),
            })?;
            if c < CHANNELS {
                left.push(v);
            } else {
                right.push(v);
            }
        }
    }
    let rows = left.len() / CHANNELS;
    Ok((Signal::new(rows, CHANNELS, left)?, Signal::new(rows, CHANNELS, right)?))
}

/// Writes a cohort in the layout `load_pads` reads. Values use Rust's
/// shortest round-trip float formatting, so reloading is exact.
pub fn save_cohort(cohort: &Cohort, root: &Path) -> Result<()> {
    fs::create_dir_all(root)?;
    let mut by_subject: BTreeMap<&str, Vec<&RawRecording>> = BTreeMap::new();
    for r in &cohort.recordings {
        by_subject.entry(r.subject_id.as_str()).or_default().push(r);
    }
    for (subject, group) in &cohort.subjects {
        let dir = root.join(subject);
        fs::create_dir_all(&dir)?;
        let meta = SubjectMeta { subject_id: subject.clone(), group: *group };
        fs::write(dir.join(META_FILE), serde_json::to_vec_pretty(&meta)?)?;
        for rec in by_subject.get(subject.as_str()).into_iter().flatten() {
            let file = fs::File::create(dir.join(format!("task_{}.csv", rec.task)))?;
            let mut out = std::io::BufWriter::new(file);
            writeln!(out, "{}", CSV_HEADER.join(","))?;
            for r in 0..rec.rows() {
                let cells: Vec<String> = rec
                    .left
                    .row(r)
                    .iter()
                    .chain(rec.right.row(r))
                    .map(|v| format!("{v}"))
                    .collect();
                writeln!(out, "{}", cells.join(","))?;
            }
            out.flush()?;
        }
    }
    Ok(())
}
