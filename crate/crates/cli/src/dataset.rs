//! Dataset directories: `index.csv` plus `<clip_id>.toml` and
//! `<clip_id>.csv` per clip, and optionally `<clip_id>.detections.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use cutin_core::features::side_of;
use cutin_core::trackdata::{
    parse_clip, serialize_manifest, serialize_observations, serialize_rows, DatasetSplit,
    LabeledClip,
};
use cutin_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const INDEX_FILE: &str = "index.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub clip_id: String,
    pub label: String,
    pub class_set: String,
    pub side: String,
    pub manifest: String,
    pub observations: String,
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", dir.display()),
        ))
    })
}

/// Writes every clip and the index. `detections` holds optional per-frame
/// detection tables, parallel to `clips`.
pub fn write_dataset(
    dir: &Path,
    clips: &[LabeledClip],
    detections: Option<&[String]>,
) -> Result<()> {
    create_dir(dir)?;
    let mut index = csv::Writer::from_writer(vec![]);
    for (i, clip) in clips.iter().enumerate() {
        let manifest = format!("{}.toml", clip.clip_id);
        let observations = format!("{}.csv", clip.clip_id);
        write_text(&dir.join(&manifest), &serialize_manifest(clip))?;
        write_text(
            &dir.join(&observations),
            &serialize_observations(&clip.track),
        )?;
        if let Some(d) = detections {
            write_text(&dir.join(format!("{}.detections.csv", clip.clip_id)), &d[i])?;
        }
        index
            .serialize(IndexRow {
                clip_id: clip.clip_id.clone(),
                label: clip.label.name().into(),
                class_set: clip.class_set.name().into(),
                side: side_of(&clip.track, &clip.scene).name().into(),
                manifest,
                observations,
            })
            .map_err(|e| Error::Serde(e.to_string()))?;
    }
    let bytes = index
        .into_inner()
        .map_err(|e| Error::Serde(e.to_string()))?;
    write_text(
        &dir.join(INDEX_FILE),
        &String::from_utf8(bytes).expect("utf-8"),
    )
}

/// Accepts a dataset directory or the path of its index file.
pub fn index_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(INDEX_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn read_dataset(path: &Path) -> Result<Vec<LabeledClip>> {
    let index = index_path(path);
    let dir = index.parent().unwrap_or(Path::new("."));
    let text = read_text(&index)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut clips = vec![];
    for (i, row) in rdr.deserialize::<IndexRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: i as u64 + 2,
            msg: format!("{}: {e}", index.display()),
        })?;
        let clip = read_clip(&dir.join(&row.manifest), Some(&dir.join(&row.observations)))?;
        if clip.clip_id != row.clip_id {
            return Err(Error::Validation(format!(
                "{}: index lists {} but the manifest says {}",
                index.display(),
                row.clip_id,
                clip.clip_id
            )));
        }
        clips.push(clip);
    }
    if clips.is_empty() {
        log::warn!("{} lists no clips", index.display());
    }
    Ok(clips)
}

/// Reads a clip from its manifest; the observation table defaults to the
/// manifest path with a `.csv` extension.
pub fn read_clip(manifest: &Path, observations: Option<&Path>) -> Result<LabeledClip> {
    let obs = observations
        .map(Path::to_path_buf)
        .unwrap_or_else(|| manifest.with_extension("csv"));
    parse_clip(&read_text(manifest)?, &read_text(&obs)?).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", manifest.display()),
        },
        e => e,
    })
}

/// Which part of a split a command works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Part {
    Train,
    Val,
    Test,
    All,
}

pub fn select<'a>(
    split: &DatasetSplit,
    part: Part,
    clips: &'a [LabeledClip],
) -> Vec<&'a LabeledClip> {
    match part {
        Part::Train => split.select(&split.train, clips),
        Part::Val => split.select(&split.val, clips),
        Part::Test => split.select(&split.test, clips),
        Part::All => clips.iter().collect(),
    }
}

pub fn split_csv(split: &DatasetSplit) -> String {
    let mut s = String::from("clip_id,part\n");
    for (part, ids) in [
        ("train", &split.train),
        ("val", &split.val),
        ("test", &split.test),
    ] {
        for id in ids {
            s.push_str(&format!("{id},{part}\n"));
        }
    }
    s
}

/// Detection table of one clip with its distractors, header included.
pub fn detection_table(rows: &[(u64, cutin_core::trackdata::Detection)]) -> String {
    serialize_rows(rows.iter().map(|(id, d)| (*id, d)))
}
