//! Blocking HTTP plumbing shared by the Last.fm and Spotify clients:
//! a swappable transport, an injectable clock, a token-bucket limiter and
//! the retry policy.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

pub const MAX_ATTEMPTS: u32 = 3;
pub const BACKOFF_BASE: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    Get,
    PostForm(Vec<(String, String)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
}

impl Request {
    pub fn get(url: impl Into<String>) -> Self {
        Self { method: Method::Get, url: url.into(), headers: Vec::new() }
    }

    pub fn post_form(url: impl Into<String>, form: Vec<(String, String)>) -> Self {
        Self { method: Method::PostForm(form), url: url.into(), headers: Vec::new() }
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push((name.to_owned(), value.into()));
        self
    }
}

#[derive(Debug, Clone)]
pub struct Response {
    pub status: u16,
    pub body: String,
}

/// Something that can execute a request. Connection-level failures are
/// returned as `Err(message)`; HTTP error statuses come back as `Ok`.
pub trait Transport: Send + Sync {
    fn execute(&self, request: &Request) -> std::result::Result<Response, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .user_agent(concat!("musical-moments/", env!("CARGO_PKG_VERSION")))
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn execute(&self, request: &Request) -> std::result::Result<Response, String> {
        let result = match &request.method {
            Method::Get => {
                let mut req = self.agent.get(&request.url);
                for (k, v) in &request.headers {
                    req = req.header(k.as_str(), v.as_str());
                }
                req.call()
            }
            Method::PostForm(form) => {
                let mut req = self.agent.post(&request.url);
                for (k, v) in &request.headers {
                    req = req.header(k.as_str(), v.as_str());
                }
                req.send_form(form.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            }
        };
        let mut resp = result.map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(Response { status, body })
    }
}

/// Monotonic time source. Tests substitute [`FakeClock`].
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, duration: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Clock that only moves when slept on. Records every sleep.
#[derive(Default)]
pub struct FakeClock {
    state: Mutex<(Duration, Vec<Duration>)>,
}

impl FakeClock {
    pub fn advance(&self, d: Duration) {
        self.state.lock().unwrap().0 += d;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.state.lock().unwrap().1.clone()
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        self.state.lock().unwrap().0
    }

    fn sleep(&self, duration: Duration) {
        let mut state = self.state.lock().unwrap();
        state.0 += duration;
        state.1.push(duration);
    }
}

/// Token bucket of capacity one: consecutive permits are spaced at least
/// `1 / rate` seconds apart, so no one-second window holds more than
/// `rate` requests.
#[derive(Debug)]
pub struct TokenBucket {
    interval: Duration,
    next_free: Option<Duration>,
}

impl TokenBucket {
    pub fn new(rate_per_sec: f64) -> Result<Self> {
        if !(rate_per_sec.is_finite() && rate_per_sec > 0.0) {
            return Err(Error::invalid("rate_limit_per_sec", format!("{rate_per_sec} must be > 0")));
        }
        Ok(Self { interval: Duration::from_secs_f64(1.0 / rate_per_sec), next_free: None })
    }

    /// Blocks on `clock` until a permit is available and returns the
    /// instant the permit was granted.
    pub fn acquire(&mut self, clock: &dyn Clock) -> Duration {
        let now = clock.now();
        if let Some(next) = self.next_free {
            if next > now {
                clock.sleep(next - now);
            }
        }
        let granted = clock.now();
        self.next_free = Some(granted + self.interval);
        granted
    }
}

/// Rate-limited, retrying request executor.
pub struct HttpClient {
    transport: Box<dyn Transport>,
    clock: Box<dyn Clock>,
    bucket: Mutex<TokenBucket>,
}

impl HttpClient {
    pub fn new(transport: Box<dyn Transport>, clock: Box<dyn Clock>, rate_per_sec: f64) -> Result<Self> {
        Ok(Self { transport, clock, bucket: Mutex::new(TokenBucket::new(rate_per_sec)?) })
    }

    /// Executes `request`, retrying connection failures, 429 and 5xx up to
    /// [`MAX_ATTEMPTS`] times with exponential backoff. Other non-2xx
    /// statuses fail immediately.
    pub fn send(&self, request: &Request) -> Result<Response> {
        let mut last_error = String::new();
        for attempt in 1..=MAX_ATTEMPTS {
            self.bucket.lock().unwrap().acquire(self.clock.as_ref());
            match self.transport.execute(request) {
                Ok(resp) if (200..300).contains(&resp.status) => return Ok(resp),
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    last_error = format!("HTTP {} from {}", resp.status, redact(&request.url));
                }
                Ok(resp) => {
                    return Err(Error::Protocol(format!(
                        "HTTP {} from {}: {}",
                        resp.status,
                        redact(&request.url),
                        resp.body.chars().take(200).collect::<String>()
                    )))
                }
                Err(e) => last_error = e,
            }
            if attempt < MAX_ATTEMPTS {
                let backoff = BACKOFF_BASE * 2u32.pow(attempt - 1);
                tracing::debug!(attempt, ?backoff, error = %last_error, "retrying request");
                self.clock.sleep(backoff);
            }
        }
        Err(Error::Transport { attempts: MAX_ATTEMPTS, message: last_error })
    }
}

fn redact(url: &str) -> String {
    match url.find("api_key=") {
        Some(i) => {
            let end = url[i..].find('&').map_or(url.len(), |j| i + j);
            format!("{}api_key=***{}", &url[..i], &url[end..])
        }
        None => url.to_owned(),
    }
}

pub fn encode(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes()).collect()
}
