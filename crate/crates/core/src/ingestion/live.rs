//! Live source: Last.fm for scrobbles and tags, Spotify for audio features.

use std::sync::Mutex;

use serde::Deserialize;
use serde_json::Value;

use super::http::{encode, HttpClient, Request};
use super::{RawScrobbles, Source, TagCount, TrackRef};
use crate::error::{Error, Result};
use crate::types::{RawAudioFeatures, Scrobble};

pub const LASTFM_ROOT: &str = "https://ws.audioscrobbler.com/2.0/";
pub const SPOTIFY_API: &str = "https://api.spotify.com/v1";
pub const SPOTIFY_TOKEN_URL: &str = "https://accounts.spotify.com/api/token";

/// Spotify's audio-features endpoint accepts at most this many ids.
pub const FEATURES_BATCH: usize = 100;
const RECENT_PAGE_SIZE: usize = 200;

pub struct LiveSource {
    http: HttpClient,
    lastfm_root: String,
    spotify_api: String,
    spotify_token_url: String,
    api_key: String,
    user: String,
    client_id: String,
    client_secret: String,
    token: Mutex<Option<String>>,
}

impl LiveSource {
    pub fn new(http: HttpClient, api_key: &str, user: &str, client_id: &str, client_secret: &str) -> Self {
        Self {
            http,
            lastfm_root: LASTFM_ROOT.to_owned(),
            spotify_api: SPOTIFY_API.to_owned(),
            spotify_token_url: SPOTIFY_TOKEN_URL.to_owned(),
            api_key: api_key.to_owned(),
            user: user.to_owned(),
            client_id: client_id.to_owned(),
            client_secret: client_secret.to_owned(),
            token: Mutex::new(None),
        }
    }

    /// Points the client at different endpoints (tests, proxies).
    pub fn with_endpoints(mut self, lastfm_root: &str, spotify_api: &str, token_url: &str) -> Self {
        self.lastfm_root = lastfm_root.to_owned();
        self.spotify_api = spotify_api.to_owned();
        self.spotify_token_url = token_url.to_owned();
        self
    }

    fn lastfm(&self, method: &str, params: &[(&str, &str)]) -> Result<Value> {
        let mut url =
            format!("{}?method={}&api_key={}&format=json", self.lastfm_root, method, encode(&self.api_key));
        for (k, v) in params {
            url.push('&');
            url.push_str(k);
            url.push('=');
            url.push_str(&encode(v));
        }
        let resp = self.http.send(&Request::get(url))?;
        Ok(serde_json::from_str(&resp.body)?)
    }

    fn spotify_token(&self) -> Result<String> {
        let mut token = self.token.lock().unwrap();
        if let Some(t) = token.as_ref() {
            return Ok(t.clone());
        }
        #[derive(Deserialize)]
        struct TokenResponse {
            access_token: String,
        }
        let req = Request::post_form(
            &self.spotify_token_url,
            vec![
                ("grant_type".into(), "client_credentials".into()),
                ("client_id".into(), self.client_id.clone()),
                ("client_secret".into(), self.client_secret.clone()),
            ],
        );
        let resp: TokenResponse = serde_json::from_str(&self.http.send(&req)?.body)?;
        *token = Some(resp.access_token.clone());
        Ok(resp.access_token)
    }

    fn spotify_get(&self, path_and_query: &str) -> Result<Value> {
        let token = self.spotify_token()?;
        let req = Request::get(format!("{}{}", self.spotify_api, path_and_query))
            .header("Authorization", format!("Bearer {token}"));
        Ok(serde_json::from_str(&self.http.send(&req)?.body)?)
    }

    fn spotify_id(&self, track: &TrackRef) -> Result<Option<String>> {
        let q = format!("track:{} artist:{}", track.track, track.artist);
        let v = self.spotify_get(&format!("/search?type=track&limit=1&q={}", encode(&q)))?;
        Ok(v.pointer("/tracks/items/0/id").and_then(Value::as_str).map(str::to_owned))
    }

    fn toptags(&self, method: &str, params: &[(&str, &str)]) -> Result<Vec<TagCount>> {
        let v = self.lastfm(method, params)?;
        if v.get("error").is_some() {
            // "not found" style errors mean no tags
            return Ok(Vec::new());
        }
        let Some(tags) = v.pointer("/toptags/tag") else {
            return Err(Error::Protocol(format!("{method}: missing toptags")));
        };
        Ok(one_or_many(tags)
            .iter()
            .filter_map(|t| {
                Some(TagCount { name: t.get("name")?.as_str()?.to_owned(), count: as_i64(t.get("count")?)? })
            })
            .collect())
    }
}

fn one_or_many(v: &Value) -> Vec<Value> {
    match v {
        Value::Array(items) => items.clone(),
        Value::Null => Vec::new(),
        other => vec![other.clone()],
    }
}

fn as_i64(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64(),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

/// Parses one `recenttracks.track` entry. `Ok(None)` for the now-playing
/// entry, which carries no timestamp.
fn parse_recent(entry: &Value) -> std::result::Result<Option<Scrobble>, ()> {
    if entry.pointer("/@attr/nowplaying").is_some() {
        return Ok(None);
    }
    let ts = entry.pointer("/date/uts").and_then(as_i64).ok_or(())?;
    let artist = entry
        .pointer("/artist/#text")
        .or_else(|| entry.pointer("/artist/name"))
        .and_then(Value::as_str)
        .ok_or(())?;
    let track = entry.get("name").and_then(Value::as_str).ok_or(())?;
    let mbid = entry.get("mbid").and_then(Value::as_str);
    Scrobble::new(ts, artist, track, mbid).map(Some).map_err(|_| ())
}

impl Source for LiveSource {
    fn scrobbles(&self, since: i64, until: i64) -> Result<RawScrobbles> {
        let mut out = RawScrobbles::default();
        let from = since.to_string();
        let to = (until - 1).to_string();
        let limit = RECENT_PAGE_SIZE.to_string();
        let mut page = 1u64;
        loop {
            let page_s = page.to_string();
            let v = self.lastfm(
                "user.getrecenttracks",
                &[("user", &self.user), ("from", &from), ("to", &to), ("limit", &limit), ("page", &page_s)],
            )?;
            let recent =
                v.get("recenttracks").ok_or_else(|| Error::Protocol("missing recenttracks".into()))?;
            for entry in one_or_many(recent.get("track").unwrap_or(&Value::Null)) {
                match parse_recent(&entry) {
                    Ok(Some(s)) if s.played_at >= since && s.played_at < until => out.records.push(s),
                    Ok(_) => {}
                    Err(()) => out.malformed += 1,
                }
            }
            let total_pages = recent.pointer("/@attr/totalPages").and_then(as_i64).unwrap_or(1).max(1) as u64;
            if page >= total_pages {
                break;
            }
            page += 1;
        }
        Ok(out)
    }

    fn track_tags(&self, track: &TrackRef) -> Result<Vec<TagCount>> {
        match &track.mbid {
            Some(mbid) => {
                let tags = self.toptags("track.gettoptags", &[("mbid", mbid)])?;
                if !tags.is_empty() {
                    return Ok(tags);
                }
                self.toptags("track.gettoptags", &[("artist", &track.artist), ("track", &track.track)])
            }
            None => self.toptags("track.gettoptags", &[("artist", &track.artist), ("track", &track.track)]),
        }
    }

    fn artist_tags(&self, artist: &str) -> Result<Vec<TagCount>> {
        self.toptags("artist.gettoptags", &[("artist", artist)])
    }

    fn audio_features(&self, tracks: &[TrackRef]) -> Result<Vec<Option<RawAudioFeatures>>> {
        let ids = tracks.iter().map(|t| self.spotify_id(t)).collect::<Result<Vec<_>>>()?;
        let mut out = vec![None; tracks.len()];
        let found: Vec<(usize, &String)> =
            ids.iter().enumerate().filter_map(|(i, id)| id.as_ref().map(|id| (i, id))).collect();
        for chunk in found.chunks(FEATURES_BATCH) {
            let joined = chunk.iter().map(|(_, id)| id.as_str()).collect::<Vec<_>>().join(",");
            let v = self.spotify_get(&format!("/audio-features?ids={}", encode(&joined)))?;
            let items = v
                .get("audio_features")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Protocol("missing audio_features".into()))?;
            for ((slot, _), item) in chunk.iter().zip(items) {
                if item.is_null() {
                    continue;
                }
                match serde_json::from_value::<RawAudioFeatures>(item.clone()) {
                    Ok(raw) => out[*slot] = Some(raw),
                    Err(e) => tracing::warn!(error = %e, "unparseable audio features"),
                }
            }
        }
        Ok(out)
    }
}
