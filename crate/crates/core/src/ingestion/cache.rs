//! Write-once JSON-lines store. One file per entity kind; the line formats
//! are the same ones used for offline fixtures.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::TrackRecord;
use crate::error::{Error, Result};
use crate::types::{AudioFeatures, RawAudioFeatures, Scrobble, TagAssignment, TagSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Scrobbles,
    Tags,
    Features,
}

impl EntityKind {
    pub const ALL: [EntityKind; 3] = [EntityKind::Scrobbles, EntityKind::Tags, EntityKind::Features];

    pub fn file_name(self) -> &'static str {
        match self {
            EntityKind::Scrobbles => "scrobbles.jsonl",
            EntityKind::Tags => "tags.jsonl",
            EntityKind::Features => "features.jsonl",
        }
    }
}

/// `{ts, artist, track, mbid?}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrobbleLine {
    pub ts: i64,
    pub artist: String,
    pub track: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbid: Option<String>,
}

impl ScrobbleLine {
    pub fn from_scrobble(s: &Scrobble) -> Self {
        Self {
            ts: s.played_at,
            artist: s.artist_name.clone(),
            track: s.track_name.clone(),
            mbid: s.mbid.clone(),
        }
    }

    pub fn to_scrobble(&self) -> Result<Scrobble> {
        Scrobble::new(self.ts, &self.artist, &self.track, self.mbid.as_deref())
    }
}

/// Tag entry as it appears in fixture files; `source` defaults to track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagLineEntry {
    pub tag: String,
    pub count: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<TagSource>,
}

/// `{track_key, tags: [{tag, count, source}]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagsLine {
    pub track_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbid: Option<String>,
    pub tags: Vec<TagLineEntry>,
}

/// `{track_key, features: {...12 fields} | null}`; null records a known miss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesLine {
    pub track_key: String,
    pub features: Option<RawAudioFeatures>,
}

#[derive(Default)]
struct Inner {
    scrobbles: Vec<Scrobble>,
    scrobble_keys: HashSet<(i64, String)>,
    tags: HashMap<String, (Option<String>, Vec<TagAssignment>)>,
    features: HashMap<String, Option<AudioFeatures>>,
    writers: HashMap<EntityKind, BufWriter<File>>,
}

/// Persistent cache rooted at a directory. Writes are serialized through an
/// internal lock; the first record stored under a key wins.
pub struct Cache {
    dir: PathBuf,
    corrupt_lines: usize,
    inner: Mutex<Inner>,
}

impl Cache {
    /// Opens (creating if needed) the cache at `dir` and indexes existing
    /// records. Corrupt lines are skipped with a warning.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut inner = Inner::default();
        let mut corrupt = 0;

        for_each_line(&dir.join(EntityKind::Scrobbles.file_name()), &mut corrupt, |line| {
            let rec: ScrobbleLine = serde_json::from_str(line)?;
            let s = rec.to_scrobble()?;
            if inner.scrobble_keys.insert((s.played_at, s.track_key.clone())) {
                inner.scrobbles.push(s);
            }
            Ok(())
        })?;
        for_each_line(&dir.join(EntityKind::Tags.file_name()), &mut corrupt, |line| {
            let rec: TagsLine = serde_json::from_str(line)?;
            let tags = rec
                .tags
                .iter()
                .map(|t| TagAssignment::new(&t.tag, t.count, t.source.unwrap_or(TagSource::Track)))
                .collect::<Result<Vec<_>>>()?;
            inner.tags.entry(rec.track_key).or_insert((rec.mbid, tags));
            Ok(())
        })?;
        for_each_line(&dir.join(EntityKind::Features.file_name()), &mut corrupt, |line| {
            let rec: FeaturesLine = serde_json::from_str(line)?;
            let features = rec.features.map(AudioFeatures::try_from).transpose()?;
            inner.features.entry(rec.track_key).or_insert(features);
            Ok(())
        })?;

        Ok(Self { dir, corrupt_lines: corrupt, inner: Mutex::new(inner) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Lines skipped while opening.
    pub fn corrupt_lines(&self) -> usize {
        self.corrupt_lines
    }

    pub fn store_scrobble(&self, scrobble: &Scrobble) -> Result<bool> {
        let mut inner = self.inner.lock().unwrap();
        if !inner.scrobble_keys.insert((scrobble.played_at, scrobble.track_key.clone())) {
            return Ok(false);
        }
        inner.scrobbles.push(scrobble.clone());
        self.append(&mut inner, EntityKind::Scrobbles, &ScrobbleLine::from_scrobble(scrobble))?;
        Ok(true)
    }

    /// Scrobbles in insertion order.
    pub fn scrobbles(&self) -> Vec<Scrobble> {
        self.inner.lock().unwrap().scrobbles.clone()
    }

    pub fn store_tags(&self, track_key: &str, mbid: Option<&str>, tags: &[TagAssignment]) -> Result<bool> {
        let mut inner = self.inner.lock().unwrap();
        if inner.tags.contains_key(track_key) {
            return Ok(false);
        }
        inner.tags.insert(track_key.to_owned(), (mbid.map(str::to_owned), tags.to_vec()));
        let line = TagsLine {
            track_key: track_key.to_owned(),
            mbid: mbid.map(str::to_owned),
            tags: tags
                .iter()
                .map(|t| TagLineEntry {
                    tag: t.tag.clone(),
                    count: i64::from(t.count),
                    source: Some(t.source),
                })
                .collect(),
        };
        self.append(&mut inner, EntityKind::Tags, &line)?;
        Ok(true)
    }

    pub fn tags(&self, track_key: &str) -> Option<Vec<TagAssignment>> {
        self.inner.lock().unwrap().tags.get(track_key).map(|(_, t)| t.clone())
    }

    pub fn store_features(&self, track_key: &str, features: Option<&AudioFeatures>) -> Result<bool> {
        let mut inner = self.inner.lock().unwrap();
        if inner.features.contains_key(track_key) {
            return Ok(false);
        }
        inner.features.insert(track_key.to_owned(), features.copied());
        let line = FeaturesLine { track_key: track_key.to_owned(), features: features.map(raw_features) };
        self.append(&mut inner, EntityKind::Features, &line)?;
        Ok(true)
    }

    /// `None`: never looked up. `Some(None)`: known to have no features.
    pub fn features(&self, track_key: &str) -> Option<Option<AudioFeatures>> {
        self.inner.lock().unwrap().features.get(track_key).copied()
    }

    pub fn store_track(&self, record: &TrackRecord) -> Result<()> {
        self.store_tags(&record.track_key, record.mbid.as_deref(), &record.tags)?;
        self.store_features(&record.track_key, record.features.as_ref())?;
        Ok(())
    }

    /// Track record joined from the tag and feature entries. Absent unless
    /// tags were stored for the key.
    pub fn load_track(&self, track_key: &str) -> Option<TrackRecord> {
        let inner = self.inner.lock().unwrap();
        let (mbid, tags) = inner.tags.get(track_key)?;
        Some(TrackRecord {
            track_key: track_key.to_owned(),
            mbid: mbid.clone(),
            tags: tags.clone(),
            features: inner.features.get(track_key).copied().flatten(),
        })
    }

    /// Every stored track, ordered by key.
    pub fn tracks(&self) -> Vec<TrackRecord> {
        let keys: Vec<String> = {
            let inner = self.inner.lock().unwrap();
            inner.tags.keys().cloned().collect()
        };
        let mut out: BTreeMap<String, TrackRecord> = BTreeMap::new();
        for key in keys {
            if let Some(rec) = self.load_track(&key) {
                out.insert(key, rec);
            }
        }
        out.into_values().collect()
    }

    pub fn flush(&self) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        for (kind, w) in inner.writers.iter_mut() {
            w.flush().map_err(|e| Error::io(self.dir.join(kind.file_name()), e))?;
        }
        Ok(())
    }

    fn append<T: Serialize>(&self, inner: &mut Inner, kind: EntityKind, value: &T) -> Result<()> {
        let path = self.dir.join(kind.file_name());
        let w = match inner.writers.entry(kind) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| Error::io(&path, e))?;
                e.insert(BufWriter::new(file))
            }
        };
        serde_json::to_writer(&mut *w, value)?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))
    }
}

impl Drop for Cache {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            tracing::warn!(error = %e, "failed to flush cache");
        }
    }
}

pub(crate) fn raw_features(f: &AudioFeatures) -> RawAudioFeatures {
    let row = f.to_row().0;
    RawAudioFeatures {
        acousticness: row[0],
        danceability: row[1],
        duration_ms: row[2],
        energy: row[3],
        instrumentalness: row[4],
        key: row[5],
        liveness: row[6],
        loudness: row[7],
        mode: row[8],
        speechiness: row[9],
        tempo: row[10],
        valence: row[11],
    }
}

/// Calls `f` for every non-blank line of `path` (a missing file is empty).
/// Lines for which `f` fails are logged and counted in `corrupt`.
pub(crate) fn for_each_line(
    path: &Path,
    corrupt: &mut usize,
    mut f: impl FnMut(&str) -> Result<()>,
) -> Result<()> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(path, e)),
    };
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if let Err(e) = f(&line) {
            tracing::warn!(path = %path.display(), line = n + 1, error = %e, "skipping corrupt line");
            *corrupt += 1;
        }
    }
    Ok(())
}
