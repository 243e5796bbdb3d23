//! Collecting playback history, tags and audio features.
//!
//! An [`Ingestor`] wraps a [`Source`] (offline fixtures or the live web
//! APIs) and a [`Cache`]. Every lookup is normalized here, independently of
//! where it came from: tags are lowercased and deduplicated, scrobbles are
//! deduplicated and sorted, and out-of-range features are rejected.

pub mod cache;
pub mod fixture;
pub mod http;
pub mod live;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use cache::{Cache, EntityKind};
pub use fixture::FixtureSource;
pub use live::LiveSource;

use crate::error::{Error, Result};
use crate::types::{AudioFeatures, RawAudioFeatures, Scrobble, TagAssignment, TagSource, MAX_INSTANT};

pub const DEFAULT_RATE_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Offline,
}

#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub lastfm_api_key: String,
    pub lastfm_user: String,
    pub spotify_client_id: String,
    pub spotify_client_secret: String,
    pub rate_limit_per_sec: f64,
    pub cache_dir: PathBuf,
    pub mode: Mode,
    /// Offline mode only.
    pub fixtures_dir: Option<PathBuf>,
}

impl ApiConfig {
    pub fn offline(fixtures_dir: impl Into<PathBuf>, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            lastfm_api_key: String::new(),
            lastfm_user: String::new(),
            spotify_client_id: String::new(),
            spotify_client_secret: String::new(),
            rate_limit_per_sec: DEFAULT_RATE_LIMIT,
            cache_dir: cache_dir.into(),
            mode: Mode::Offline,
            fixtures_dir: Some(fixtures_dir.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_limit_per_sec.is_finite() && self.rate_limit_per_sec > 0.0) {
            return Err(Error::invalid("rate_limit_per_sec", "must be > 0"));
        }
        match self.mode {
            Mode::Offline if self.fixtures_dir.is_none() => {
                Err(Error::invalid("fixtures_dir", "required in offline mode"))
            }
            Mode::Live => {
                for (name, v) in [
                    ("lastfm_api_key", &self.lastfm_api_key),
                    ("lastfm_user", &self.lastfm_user),
                    ("spotify_client_id", &self.spotify_client_id),
                    ("spotify_client_secret", &self.spotify_client_secret),
                ] {
                    if v.is_empty() {
                        return Err(Error::invalid(name, "required in live mode"));
                    }
                }
                Ok(())
            }
            Mode::Offline => Ok(()),
        }
    }
}

/// Everything known about one track after ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub track_key: String,
    pub mbid: Option<String>,
    pub tags: Vec<TagAssignment>,
    pub features: Option<AudioFeatures>,
}

/// What a source needs to look a track up.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrackRef {
    pub track_key: String,
    pub artist: String,
    pub track: String,
    pub mbid: Option<String>,
}

impl From<&Scrobble> for TrackRef {
    fn from(s: &Scrobble) -> Self {
        Self {
            track_key: s.track_key.clone(),
            artist: s.artist_name.clone(),
            track: s.track_name.clone(),
            mbid: s.mbid.clone(),
        }
    }
}

/// Unnormalized tag as returned by a source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagCount {
    pub name: String,
    pub count: i64,
}

#[derive(Debug, Clone, Default)]
pub struct RawScrobbles {
    pub records: Vec<Scrobble>,
    pub malformed: usize,
}

/// A provider of raw listening data.
pub trait Source: Send + Sync {
    /// Playbacks with `since <= played_at < until`, in any order, possibly
    /// with duplicates.
    fn scrobbles(&self, since: i64, until: i64) -> Result<RawScrobbles>;
    fn track_tags(&self, track: &TrackRef) -> Result<Vec<TagCount>>;
    fn artist_tags(&self, artist: &str) -> Result<Vec<TagCount>>;
    /// One entry per input track, same order; `None` when unmatched.
    fn audio_features(&self, tracks: &[TrackRef]) -> Result<Vec<Option<RawAudioFeatures>>>;
}

/// Counters for one ingest run. Scrobble totals satisfy
/// `fetched == kept + skipped_malformed + filtered_no_features`;
/// `fetched` counts records after duplicate removal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub fetched: usize,
    pub kept: usize,
    pub skipped_malformed: usize,
    pub filtered_no_features: usize,
    pub duplicates_removed: usize,
    pub tracks: usize,
    pub tracks_with_features: usize,
    pub tracks_artist_fallback: usize,
    pub features_rejected: usize,
}

impl IngestReport {
    pub fn is_consistent(&self) -> bool {
        self.fetched == self.kept + self.skipped_malformed + self.filtered_no_features
    }
}

pub struct Ingestor {
    source: Box<dyn Source>,
    cache: Option<Cache>,
    consult_cache: bool,
    report: Mutex<IngestReport>,
}

impl Ingestor {
    /// Builds the source described by `config` and opens its cache.
    pub fn from_config(config: &ApiConfig) -> Result<Self> {
        config.validate()?;
        let cache = Cache::open(&config.cache_dir)?;
        match config.mode {
            Mode::Offline => {
                let dir = config.fixtures_dir.as_ref().expect("validated");
                Ok(Self::new(Box::new(FixtureSource::open(dir)?), Some(cache), false))
            }
            Mode::Live => {
                let http = http::HttpClient::new(
                    Box::new(http::UreqTransport::default()),
                    Box::new(http::SystemClock::default()),
                    config.rate_limit_per_sec,
                )?;
                let source = LiveSource::new(
                    http,
                    &config.lastfm_api_key,
                    &config.lastfm_user,
                    &config.spotify_client_id,
                    &config.spotify_client_secret,
                );
                Ok(Self::new(Box::new(source), Some(cache), true))
            }
        }
    }

    /// `consult_cache`: answer tag/feature lookups from the cache when it
    /// already holds them.
    pub fn new(source: Box<dyn Source>, cache: Option<Cache>, consult_cache: bool) -> Self {
        Self { source, cache, consult_cache, report: Mutex::new(IngestReport::default()) }
    }

    pub fn report(&self) -> IngestReport {
        self.report.lock().unwrap().clone()
    }

    pub fn cache(&self) -> Option<&Cache> {
        self.cache.as_ref()
    }

    /// Playbacks in `[since, until)`, ascending by time, without duplicate
    /// `(instant, track)` pairs.
    pub fn fetch_scrobbles(&self, since: i64, until: i64) -> Result<Vec<Scrobble>> {
        if since >= until {
            return Err(Error::invalid("since", format!("{since} is not before {until}")));
        }
        let raw = self.source.scrobbles(since, until)?;
        let total = raw.records.len();
        let unique: BTreeMap<(i64, String), Scrobble> =
            raw.records.into_iter().map(|s| ((s.played_at, s.track_key.clone()), s)).collect();
        let mut report = self.report.lock().unwrap();
        report.duplicates_removed += total - unique.len();
        report.skipped_malformed += raw.malformed;
        report.fetched += unique.len() + raw.malformed;
        Ok(unique.into_values().collect())
    }

    /// Track-level tags, or the artist's tags when the track has none.
    pub fn fetch_track_tags(&self, track: &TrackRef) -> Result<Vec<TagAssignment>> {
        if self.consult_cache {
            if let Some(tags) = self.cache.as_ref().and_then(|c| c.tags(&track.track_key)) {
                return Ok(tags);
            }
        }
        let tags = normalize_tags(self.source.track_tags(track)?, TagSource::Track);
        if !tags.is_empty() {
            return Ok(tags);
        }
        let fallback = normalize_tags(self.source.artist_tags(&track.artist)?, TagSource::Artist);
        if !fallback.is_empty() {
            self.report.lock().unwrap().tracks_artist_fallback += 1;
        }
        Ok(fallback)
    }

    /// Validated features keyed by track key; unmatched or rejected tracks
    /// map to `None`.
    pub fn fetch_audio_features(
        &self,
        tracks: &[TrackRef],
    ) -> Result<BTreeMap<String, Option<AudioFeatures>>> {
        if tracks.is_empty() {
            return Err(Error::invalid("track_keys", "empty list"));
        }
        let mut out = BTreeMap::new();
        let mut pending = Vec::new();
        for t in tracks {
            let cached = self
                .consult_cache
                .then(|| self.cache.as_ref().and_then(|c| c.features(&t.track_key)))
                .flatten();
            match cached {
                Some(f) => {
                    out.insert(t.track_key.clone(), f);
                }
                None => pending.push(t.clone()),
            }
        }
        if !pending.is_empty() {
            let fetched = self.source.audio_features(&pending)?;
            if fetched.len() != pending.len() {
                return Err(Error::Protocol(format!(
                    "asked for {} feature records, got {}",
                    pending.len(),
                    fetched.len()
                )));
            }
            let mut rejected = 0;
            for (t, raw) in pending.iter().zip(fetched) {
                let features = match raw.map(AudioFeatures::try_from) {
                    Some(Ok(f)) => Some(f),
                    Some(Err(e)) => {
                        tracing::warn!(track = %t.track_key, error = %e, "rejecting audio features");
                        rejected += 1;
                        None
                    }
                    None => None,
                };
                out.insert(t.track_key.clone(), features);
            }
            self.report.lock().unwrap().features_rejected += rejected;
        }
        Ok(out)
    }

    /// Full ingest into the cache: scrobbles, then tags and features for
    /// every distinct track, in key order.
    pub fn run(&self, since: i64, until: i64) -> Result<IngestReport> {
        let cache = self.cache.as_ref().ok_or_else(|| Error::invalid("cache", "ingest run needs a cache"))?;
        let scrobbles = self.fetch_scrobbles(since, until)?;

        let mut tracks: BTreeMap<String, TrackRef> = BTreeMap::new();
        let mut plays: HashMap<String, usize> = HashMap::new();
        for s in &scrobbles {
            cache.store_scrobble(s)?;
            tracks.entry(s.track_key.clone()).or_insert_with(|| s.into());
            *plays.entry(s.track_key.clone()).or_default() += 1;
        }

        let refs: Vec<TrackRef> = tracks.values().cloned().collect();
        let features = if refs.is_empty() { BTreeMap::new() } else { self.fetch_audio_features(&refs)? };
        let mut with_features = 0;
        let mut kept = 0;
        for t in &refs {
            let tags = self.fetch_track_tags(t)?;
            let f = features.get(&t.track_key).copied().flatten();
            if f.is_some() {
                with_features += 1;
                kept += plays[&t.track_key];
            }
            cache.store_track(&TrackRecord {
                track_key: t.track_key.clone(),
                mbid: t.mbid.clone(),
                tags,
                features: f,
            })?;
        }
        cache.flush()?;

        let mut report = self.report.lock().unwrap();
        report.tracks += refs.len();
        report.tracks_with_features += with_features;
        report.kept += kept;
        report.filtered_no_features += scrobbles.len() - kept;
        Ok(report.clone())
    }

    /// [`Ingestor::run`] over the whole timeline.
    pub fn run_all(&self) -> Result<IngestReport> {
        self.run(1, MAX_INSTANT + 1)
    }
}

/// Lowercases and trims tag names, drops invalid entries and keeps the
/// highest count per tag. Output is sorted by count descending, then name.
pub fn normalize_tags(raw: Vec<TagCount>, source: TagSource) -> Vec<TagAssignment> {
    let mut best: HashMap<String, TagAssignment> = HashMap::new();
    for t in raw {
        let Ok(tag) = TagAssignment::new(&t.name, t.count, source) else {
            tracing::debug!(tag = %t.name, count = t.count, "dropping invalid tag");
            continue;
        };
        match best.get(&tag.tag) {
            Some(existing) if existing.count >= tag.count => {}
            _ => {
                best.insert(tag.tag.clone(), tag);
            }
        }
    }
    let mut out: Vec<_> = best.into_values().collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.tag.cmp(&b.tag)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tc(name: &str, count: i64) -> TagCount {
        TagCount { name: name.into(), count }
    }

    #[test]
    fn duplicate_tags_keep_max_count() {
        let tags = normalize_tags(vec![tc("pop", 40), tc("Pop ", 70), tc("rock", 10)], TagSource::Track);
        assert_eq!(tags[0], TagAssignment::new("pop", 70, TagSource::Track).unwrap());
        assert_eq!(tags.len(), 2);
    }

    #[test]
    fn invalid_tags_are_dropped() {
        let tags = normalize_tags(vec![tc("", 40), tc("x", 300), tc("ok", 0)], TagSource::Artist);
        assert_eq!(tags, vec![TagAssignment::new("ok", 0, TagSource::Artist).unwrap()]);
    }

    #[test]
    fn config_validation() {
        let mut c = ApiConfig::offline("f", "c");
        assert!(c.validate().is_ok());
        c.rate_limit_per_sec = 0.0;
        assert!(c.validate().is_err());
        c.rate_limit_per_sec = 5.0;
        c.mode = Mode::Live;
        assert!(c.validate().is_err());
    }
}
