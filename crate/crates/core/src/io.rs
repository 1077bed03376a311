//! Line-delimited JSON reading and atomic writing.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ParaphraseSet, ScoreState};

/// Reads one JSON object per non-blank line. Syntax problems are reported as
/// [`Error::Parse`], type or missing-field problems as [`Error::Schema`], both
/// with 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let value: T = serde_json::from_str(&line).map_err(|e| {
            let message = e.to_string();
            match e.classify() {
                serde_json::error::Category::Data => Error::Schema {
                    line: lineno,
                    message,
                },
                _ => Error::Parse {
                    line: lineno,
                    message,
                },
            }
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Writes `items` as JSON lines through a temporary file in the destination
/// directory, then renames it into place.
pub fn write_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, item).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn write_atomic(
    path: impl AsRef<Path>,
    body: impl FnOnce(&mut BufWriter<&mut File>) -> std::io::Result<()>,
) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_sets(path: impl AsRef<Path>) -> Result<Vec<ParaphraseSet>> {
    read_jsonl(path)
}

pub fn save_sets(sets: &[ParaphraseSet], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(sets, path)
}

/// Loads sets and requires every member of every set to carry a score.
pub fn load_scored_sets(path: impl AsRef<Path>) -> Result<Vec<ParaphraseSet>> {
    let sets = load_sets(path)?;
    require_scored(&sets)?;
    Ok(sets)
}

pub fn require_scored(sets: &[ParaphraseSet]) -> Result<()> {
    for set in sets {
        match set.score_state() {
            ScoreState::Scored => {}
            ScoreState::Partial => return Err(Error::PartialScores { id: set.id.clone() }),
            ScoreState::Unscored => return Err(Error::Unscored { id: set.id.clone() }),
        }
    }
    Ok(())
}
