//! The candidate track collection for ranking: every played track with
//! known audio features, plus its play count.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::cache::for_each_line;
use crate::ingestion::Cache;
use crate::types::{AudioFeatures, Scrobble};

pub const LIBRARY_FILE: &str = "library.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryTrack {
    pub track_key: String,
    #[serde(rename = "track")]
    pub track_name: String,
    #[serde(rename = "artist")]
    pub artist_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbid: Option<String>,
    pub plays: u64,
    pub features: AudioFeatures,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Library {
    /// Ascending by `track_key`, keys unique.
    pub tracks: Vec<LibraryTrack>,
}

impl Library {
    pub fn new(mut tracks: Vec<LibraryTrack>) -> Result<Self> {
        tracks.sort_by(|a, b| a.track_key.cmp(&b.track_key));
        if let Some(w) = tracks.windows(2).find(|w| w[0].track_key == w[1].track_key) {
            return Err(Error::invalid("library", format!("duplicate track {:?}", w[0].track_key)));
        }
        Ok(Self { tracks })
    }

    /// Joins playbacks with per-track features. Display names and MBID come
    /// from the first playback of each track.
    pub fn from_playbacks(scrobbles: &[Scrobble], features: impl Fn(&str) -> Option<AudioFeatures>) -> Self {
        let mut by_key: BTreeMap<&str, (&Scrobble, u64)> = BTreeMap::new();
        for s in scrobbles {
            by_key.entry(&s.track_key).or_insert((s, 0)).1 += 1;
        }
        let tracks = by_key
            .into_iter()
            .filter_map(|(key, (first, plays))| {
                Some(LibraryTrack {
                    track_key: key.to_owned(),
                    track_name: first.track_name.clone(),
                    artist_name: first.artist_name.clone(),
                    mbid: first.mbid.clone(),
                    plays,
                    features: features(key)?,
                })
            })
            .collect();
        Self { tracks }
    }

    pub fn from_cache(cache: &Cache) -> Self {
        Self::from_playbacks(&cache.scrobbles(), |key| cache.features(key).flatten())
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn play_counts(&self) -> HashMap<String, u64> {
        self.tracks.iter().map(|t| (t.track_key.clone(), t.plays)).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for t in &self.tracks {
            serde_json::to_writer(&mut out, t)?;
            out.push(b'\n');
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&out).map_err(|e| Error::io(path, e))
    }

    /// Reads a library file; malformed lines are an error, not skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "library file not found"),
            ));
        }
        let mut tracks = Vec::new();
        let mut corrupt = 0;
        for_each_line(path, &mut corrupt, |line| {
            tracks.push(serde_json::from_str(line)?);
            Ok(())
        })?;
        if corrupt > 0 {
            return Err(Error::DatasetFormat {
                path: path.to_path_buf(),
                reason: format!("{corrupt} malformed line(s)"),
            });
        }
        Self::new(tracks)
    }

    /// Loads `path`, or `dir/library.jsonl` when `path` is a directory.
    pub fn load_from(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.is_dir() {
            Self::load(path.join(LIBRARY_FILE))
        } else {
            Self::load(path)
        }
    }
}
