#![allow(dead_code)]

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use tempfile::TempDir;

use musical_moments::dataset::{
    build_dataset, split_dataset, write_dataset, DEFAULT_TRAIN_FRACTION, DEFAULT_VOCABULARY_SIZE,
};
use musical_moments::ingestion::http::{Request, Response, Transport};
use musical_moments::ingestion::{ApiConfig, Cache, Ingestor};
use musical_moments::models::{save_model, train, ModelKind, TrainConfig};
use musical_moments::pipeline::{Library, LIBRARY_FILE};
use musical_moments::types::{track_key, TzOffset};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/fixture")
}

pub fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden").join(name)
}

/// Compares against a checked-in golden file. `UPDATE_GOLDEN=1` rewrites it.
pub fn golden_text(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let line = expected
        .lines()
        .zip(actual.lines())
        .position(|(a, b)| a != b)
        .unwrap_or(expected.lines().count().min(actual.lines().count()));
    Err(format!(
        "{name} differs at line {}: expected {:?}, got {:?}",
        line + 1,
        expected.lines().nth(line),
        actual.lines().nth(line)
    ))
}

/// Structural JSON comparison; numbers may differ by `tol`.
pub fn json_close(expected: &Value, actual: &Value, tol: f64, at: &str) -> Result<(), String> {
    match (expected, actual) {
        (Value::Number(a), Value::Number(b)) => {
            let (a, b) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            if (a - b).abs() <= tol {
                Ok(())
            } else {
                Err(format!("{at}: {a} != {b}"))
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            if a.len() != b.len() {
                return Err(format!("{at}: length {} != {}", a.len(), b.len()));
            }
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                json_close(x, y, tol, &format!("{at}[{i}]"))?;
            }
            Ok(())
        }
        (Value::Object(a), Value::Object(b)) => {
            let mut ka: Vec<_> = a.keys().collect();
            let mut kb: Vec<_> = b.keys().collect();
            ka.sort();
            kb.sort();
            if ka != kb {
                return Err(format!("{at}: keys {ka:?} != {kb:?}"));
            }
            for k in ka {
                json_close(&a[k], &b[k], tol, &format!("{at}.{k}"))?;
            }
            Ok(())
        }
        (a, b) if a == b => Ok(()),
        (a, b) => Err(format!("{at}: {a} != {b}")),
    }
}

pub fn golden_json(name: &str, actual: &Value) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let text = serde_json::to_string_pretty(actual).unwrap() + "\n";
        fs::write(&path, text).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let expected: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    json_close(&expected, actual, 1e-9, "$")
}

/// Offline ingest, dataset, library and a gbt model (seed 0, default
/// split) from the checked-in fixture, the same steps the CLI performs.
pub struct FixtureArtifacts {
    pub dir: TempDir,
}

impl FixtureArtifacts {
    pub fn build() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let cache_dir = dir.path().join("cache");
        let ingestor = Ingestor::from_config(&ApiConfig::offline(fixture_dir(), &cache_dir)).unwrap();
        ingestor.run_all().unwrap();
        drop(ingestor);

        let cache = Cache::open(&cache_dir).unwrap();
        let dataset = build_dataset(&cache, DEFAULT_VOCABULARY_SIZE, TzOffset::minutes(0).unwrap()).unwrap();
        let ds_dir = dir.path().join("dataset");
        write_dataset(&dataset, &ds_dir).unwrap();
        Library::from_cache(&cache).save(ds_dir.join(LIBRARY_FILE)).unwrap();

        let (train_set, _) = split_dataset(&dataset, DEFAULT_TRAIN_FRACTION, 0).unwrap();
        let model = train(&train_set, ModelKind::Gbt, &TrainConfig::default()).unwrap();
        save_model(&model, dir.path().join("model.json")).unwrap();
        Self { dir }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.dir.path().join("cache")
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dir.path().join("dataset")
    }

    pub fn model_path(&self) -> PathBuf {
        self.dir.path().join("model.json")
    }
}

/// Answers Last.fm and Spotify requests from the fixture files, in the
/// shapes the real services use.
pub struct FixtureWeb {
    scrobbles: Vec<Value>,
    track_tags: HashMap<String, Value>,
    artist_tags: HashMap<String, Value>,
    features: HashMap<String, Value>,
    /// Opaque Spotify ids for the tracks that have features.
    ids: HashMap<String, String>,
}

fn read_lines(path: &Path) -> Vec<String> {
    match fs::read_to_string(path) {
        Ok(text) => text.lines().filter(|l| !l.trim().is_empty()).map(str::to_owned).collect(),
        Err(_) => Vec::new(),
    }
}

impl FixtureWeb {
    pub fn new(dir: &Path) -> Self {
        let scrobbles = read_lines(&dir.join("scrobbles.jsonl"))
            .iter()
            .map(|l| match serde_json::from_str::<Value>(l) {
                Ok(v) if v["ts"].is_i64() && v["artist"].is_string() && v["track"].is_string() => json!({
                    "artist": {"#text": v["artist"], "mbid": ""},
                    "name": v["track"],
                    "mbid": "",
                    "date": {"uts": v["ts"].as_i64().unwrap().to_string(), "#text": ""},
                }),
                _ => json!({"name": "unparseable"}),
            })
            .collect();
        let by_key = |file: &str, key: &str, field: &str| -> HashMap<String, Value> {
            read_lines(&dir.join(file))
                .iter()
                .filter_map(|l| serde_json::from_str::<Value>(l).ok())
                .map(|v| {
                    let k = v[key].as_str().unwrap().to_lowercase();
                    (k, v[field].clone())
                })
                .collect()
        };
        let features = by_key("features.jsonl", "track_key", "features");
        let mut keys: Vec<&String> = features.keys().collect();
        keys.sort();
        let ids = keys.into_iter().enumerate().map(|(i, k)| (format!("{i:022}"), k.clone())).collect();
        Self {
            scrobbles,
            track_tags: by_key("tags.jsonl", "track_key", "tags"),
            artist_tags: by_key("artist_tags.jsonl", "artist", "tags"),
            features,
            ids,
        }
    }

    fn toptags(tags: Option<&Value>) -> Value {
        let list: Vec<Value> = tags
            .and_then(Value::as_array)
            .map(|a| a.iter().map(|t| json!({"name": t["tag"], "count": t["count"], "url": ""})).collect())
            .unwrap_or_default();
        json!({"toptags": {"tag": list, "@attr": {}}})
    }

    fn lastfm(&self, q: &HashMap<String, String>) -> Value {
        match q["method"].as_str() {
            "user.getrecenttracks" => {
                let from: i64 = q["from"].parse().unwrap();
                let to: i64 = q["to"].parse().unwrap();
                let limit: usize = q["limit"].parse().unwrap();
                let page: usize = q["page"].parse().unwrap();
                let window: Vec<&Value> = self
                    .scrobbles
                    .iter()
                    .filter(|s| match s.pointer("/date/uts").and_then(Value::as_str) {
                        Some(ts) => {
                            let ts: i64 = ts.parse().unwrap();
                            ts >= from && ts <= to
                        }
                        None => true,
                    })
                    .collect();
                let pages = window.len().div_ceil(limit).max(1);
                let items: Vec<&Value> =
                    window.iter().skip((page - 1) * limit).take(limit).copied().collect();
                json!({"recenttracks": {
                    "track": items,
                    "@attr": {"page": page.to_string(), "totalPages": pages.to_string(),
                              "total": window.len().to_string()},
                }})
            }
            "track.gettoptags" => {
                let key = track_key(&q["artist"], &q["track"]);
                Self::toptags(self.track_tags.get(&key))
            }
            "artist.gettoptags" => {
                let key = q["artist"].to_lowercase();
                match self.artist_tags.get(&key) {
                    Some(tags) => Self::toptags(Some(tags)),
                    None => json!({"error": 6, "message": "The artist you supplied could not be found"}),
                }
            }
            other => panic!("unexpected Last.fm method {other}"),
        }
    }

    fn spotify_id(&self, key: &str) -> String {
        self.ids.iter().find(|(_, k)| *k == key).unwrap().0.clone()
    }

    fn spotify(&self, path: &str, q: &HashMap<String, String>) -> Value {
        match path {
            "/v1/search" => {
                let query = &q["q"];
                let (track, artist) =
                    query.strip_prefix("track:").and_then(|r| r.split_once(" artist:")).unwrap();
                let key = track_key(artist, track);
                let items: Vec<Value> = match self.features.get(&key) {
                    Some(f) if !f.is_null() => vec![json!({"id": self.spotify_id(&key), "name": track})],
                    _ => Vec::new(),
                };
                json!({"tracks": {"items": items}})
            }
            "/v1/audio-features" => {
                let list: Vec<Value> = q["ids"]
                    .split(',')
                    .map(|id| {
                        self.ids
                            .get(id)
                            .and_then(|key| self.features.get(key))
                            .cloned()
                            .unwrap_or(Value::Null)
                    })
                    .collect();
                json!({"audio_features": list})
            }
            other => panic!("unexpected Spotify path {other}"),
        }
    }
}

impl Transport for FixtureWeb {
    fn execute(&self, request: &Request) -> Result<Response, String> {
        let url = url::Url::parse(&request.url).map_err(|e| e.to_string())?;
        let q: HashMap<String, String> = url.query_pairs().into_owned().collect();
        let body = match (url.host_str(), url.path()) {
            (Some("lastfm.test"), _) => self.lastfm(&q),
            (Some("spotify.test"), "/token") => {
                json!({"access_token": "t", "token_type": "Bearer", "expires_in": 3600})
            }
            (Some("spotify.test"), path) => {
                let authorized = request.headers.iter().any(|(k, v)| k == "Authorization" && v == "Bearer t");
                if !authorized {
                    return Ok(Response { status: 401, body: "{}".into() });
                }
                self.spotify(path, &q)
            }
            _ => return Err(format!("no route to {}", request.url)),
        };
        Ok(Response { status: 200, body: body.to_string() })
    }
}

pub const LASTFM_TEST_ROOT: &str = "http://lastfm.test/2.0/";
pub const SPOTIFY_TEST_API: &str = "http://spotify.test/v1";
pub const SPOTIFY_TEST_TOKEN: &str = "http://spotify.test/token";
