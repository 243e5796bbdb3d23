//! Offline source backed by a directory of JSON-lines fixtures.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cache::{for_each_line, FeaturesLine, ScrobbleLine, TagsLine};
use super::{RawScrobbles, Source, TagCount, TrackRef};
use crate::error::{Error, Result};
use crate::types::{normalize_name, RawAudioFeatures, Scrobble};

pub const ARTIST_TAGS_FILE: &str = "artist_tags.jsonl";

/// `{artist, tags: [{tag, count}]}`: artist-level tags used when a track
/// has none of its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtistTagsLine {
    pub artist: String,
    pub tags: Vec<ArtistTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtistTag {
    pub tag: String,
    pub count: i64,
}

pub struct FixtureSource {
    dir: PathBuf,
    scrobble_lines: Vec<Option<Scrobble>>,
    track_tags: HashMap<String, Vec<TagCount>>,
    artist_tags: HashMap<String, Vec<TagCount>>,
    features: HashMap<String, Option<RawAudioFeatures>>,
}

impl FixtureSource {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        if !dir.is_dir() {
            return Err(Error::io(
                &dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "fixture directory not found"),
            ));
        }
        let mut ignored = 0;

        // Malformed scrobble lines are kept as `None` so each fetch can
        // report them.
        let mut scrobble_lines = Vec::new();
        for_each_line(&dir.join("scrobbles.jsonl"), &mut ignored, |line| {
            let parsed =
                serde_json::from_str::<ScrobbleLine>(line).map_err(Error::from).and_then(|l| l.to_scrobble());
            scrobble_lines.push(parsed.ok());
            Ok(())
        })?;

        let mut track_tags = HashMap::new();
        for_each_line(&dir.join("tags.jsonl"), &mut ignored, |line| {
            let rec: TagsLine = serde_json::from_str(line)?;
            let tags = rec.tags.into_iter().map(|t| TagCount { name: t.tag, count: t.count }).collect();
            track_tags.entry(rec.track_key).or_insert(tags);
            Ok(())
        })?;

        let mut artist_tags = HashMap::new();
        for_each_line(&dir.join(ARTIST_TAGS_FILE), &mut ignored, |line| {
            let rec: ArtistTagsLine = serde_json::from_str(line)?;
            let tags = rec.tags.into_iter().map(|t| TagCount { name: t.tag, count: t.count }).collect();
            artist_tags.entry(artist_key(&rec.artist)).or_insert(tags);
            Ok(())
        })?;

        let mut features = HashMap::new();
        for_each_line(&dir.join("features.jsonl"), &mut ignored, |line| {
            let rec: FeaturesLine = serde_json::from_str(line)?;
            features.entry(rec.track_key).or_insert(rec.features);
            Ok(())
        })?;

        if ignored > 0 {
            tracing::warn!(dir = %dir.display(), ignored, "ignored malformed fixture lines");
        }
        Ok(Self { dir, scrobble_lines, track_tags, artist_tags, features })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

fn artist_key(artist: &str) -> String {
    normalize_name(artist)
}

impl Source for FixtureSource {
    fn scrobbles(&self, since: i64, until: i64) -> Result<RawScrobbles> {
        let mut out = RawScrobbles::default();
        for line in &self.scrobble_lines {
            match line {
                Some(s) if s.played_at >= since && s.played_at < until => out.records.push(s.clone()),
                Some(_) => {}
                None => out.malformed += 1,
            }
        }
        Ok(out)
    }

    fn track_tags(&self, track: &TrackRef) -> Result<Vec<TagCount>> {
        Ok(self.track_tags.get(&track.track_key).cloned().unwrap_or_default())
    }

    fn artist_tags(&self, artist: &str) -> Result<Vec<TagCount>> {
        Ok(self.artist_tags.get(&artist_key(artist)).cloned().unwrap_or_default())
    }

    fn audio_features(&self, tracks: &[TrackRef]) -> Result<Vec<Option<RawAudioFeatures>>> {
        Ok(tracks.iter().map(|t| self.features.get(&t.track_key).copied().flatten()).collect())
    }
}
