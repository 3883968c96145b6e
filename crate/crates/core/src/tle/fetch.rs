//! Client for a space-track-style REST catalog.
//!
//! Every query response is cached on disk under a digest of its URL, so a
//! re-run with the same id set and epoch range is served entirely offline.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::load::{build_series, parse_tle_text, IngestReport, SeriesMap};
use crate::error::Result;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("HTTP {status} from {url} after {attempts} attempt(s)")]
    Http {
        status: u16,
        url: String,
        attempts: u32,
    },
    #[error("transport failure for {url} after {attempts} attempt(s): {message}")]
    Transport {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("malformed payload from {url}: {message}")]
    Malformed { url: String, message: String },
    #[error("cache I/O at {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("client configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// The HTTP layer. Errors returned here are network-level failures; HTTP
/// status codes come back inside [`HttpResponse`].
pub trait Transport: Send + Sync {
    fn login(&self, url: &str, identity: &str, secret: &str) -> std::result::Result<HttpResponse, String>;
    fn get(&self, url: &str) -> std::result::Result<HttpResponse, String>;
}

pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Blocking HTTP transport with a cookie-holding session.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        UreqTransport { agent }
    }
}

const MAX_BODY_BYTES: u64 = 512 * 1024 * 1024;

fn read_response(resp: ureq::http::Response<ureq::Body>) -> std::result::Result<HttpResponse, String> {
    let status = resp.status().as_u16();
    let body = resp
        .into_body()
        .into_with_config()
        .limit(MAX_BODY_BYTES)
        .read_to_string()
        .map_err(|e| e.to_string())?;
    Ok(HttpResponse { status, body })
}

impl Transport for UreqTransport {
    fn login(&self, url: &str, identity: &str, secret: &str) -> std::result::Result<HttpResponse, String> {
        let resp = self
            .agent
            .post(url)
            .send_form([("identity", identity), ("password", secret)])
            .map_err(|e| e.to_string())?;
        read_response(resp)
    }

    fn get(&self, url: &str) -> std::result::Result<HttpResponse, String> {
        let resp = self.agent.get(url).call().map_err(|e| e.to_string())?;
        read_response(resp)
    }
}

/// Client configuration as read from the config file. The secret is an
/// environment variable reference of the form `env:NAME`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientConfig {
    pub base_url: String,
    pub identity: String,
    pub secret: String,
    pub rate_limit_per_min: u32,
    pub cache_dir: PathBuf,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_secs: f64,
    #[serde(default = "default_page")]
    pub ids_per_page: usize,
}

fn default_retries() -> u32 {
    3
}
fn default_backoff() -> f64 {
    5.0
}
fn default_page() -> usize {
    100
}

impl ClientConfig {
    pub fn validate(&self) -> std::result::Result<(), FetchError> {
        if self.rate_limit_per_min == 0 {
            return Err(FetchError::Config("rate_limit_per_min must be positive".into()));
        }
        if self.ids_per_page == 0 {
            return Err(FetchError::Config("ids_per_page must be positive".into()));
        }
        if !(self.retry_backoff_secs.is_finite() && self.retry_backoff_secs >= 0.0) {
            return Err(FetchError::Config("retry_backoff_secs must be non-negative".into()));
        }
        self.secret_var()?;
        Ok(())
    }

    fn secret_var(&self) -> std::result::Result<&str, FetchError> {
        match self.secret.strip_prefix("env:") {
            Some(name) if !name.is_empty() => Ok(name),
            _ => Err(FetchError::Config(
                "secret must reference an environment variable as \"env:NAME\"".into(),
            )),
        }
    }

    pub fn resolve_secret(&self) -> std::result::Result<String, FetchError> {
        let var = self.secret_var()?;
        std::env::var(var).map_err(|_| FetchError::Config(format!("environment variable {var} is not set")))
    }
}

struct ClientState {
    sent: VecDeque<Duration>,
    logged_in: bool,
}

pub struct CatalogClient<T: Transport, C: Clock = SystemClock> {
    config: ClientConfig,
    transport: T,
    clock: C,
    state: Mutex<ClientState>,
}

impl<T: Transport> CatalogClient<T, SystemClock> {
    pub fn new(config: ClientConfig, transport: T) -> std::result::Result<Self, FetchError> {
        Self::with_clock(config, transport, SystemClock::default())
    }
}

impl<T: Transport, C: Clock> CatalogClient<T, C> {
    pub fn with_clock(config: ClientConfig, transport: T, clock: C) -> std::result::Result<Self, FetchError> {
        config.validate()?;
        Ok(CatalogClient {
            config,
            transport,
            clock,
            state: Mutex::new(ClientState {
                sent: VecDeque::new(),
                logged_in: false,
            }),
        })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    /// Blocks until one more request fits in the trailing 60-second window.
    fn throttle(&self, state: &mut ClientState) {
        let window = Duration::from_secs(60);
        let limit = self.config.rate_limit_per_min as usize;
        let now = self.clock.now();
        while state.sent.front().is_some_and(|t| now.saturating_sub(*t) >= window) {
            state.sent.pop_front();
        }
        if state.sent.len() >= limit {
            let ready_at = state.sent[state.sent.len() - limit] + window;
            let wait = ready_at.saturating_sub(now);
            if !wait.is_zero() {
                debug!("rate limit: waiting {:.1}s", wait.as_secs_f64());
                self.clock.sleep(wait);
            }
        }
        state.sent.push_back(self.clock.now());
    }

    fn base(&self) -> &str {
        self.config.base_url.trim_end_matches('/')
    }

    fn ensure_login(&self, state: &mut ClientState) -> std::result::Result<(), FetchError> {
        if state.logged_in {
            return Ok(());
        }
        let secret = self.config.resolve_secret()?;
        let url = format!("{}/ajaxauth/login", self.base());
        let resp = self.with_retries(state, &url, |t| t.login(&url, &self.config.identity, &secret))?;
        if resp.body.contains("\"Login\":\"Failed\"") {
            return Err(FetchError::Auth("login rejected".into()));
        }
        state.logged_in = true;
        Ok(())
    }

    fn with_retries(
        &self,
        state: &mut ClientState,
        url: &str,
        call: impl Fn(&T) -> std::result::Result<HttpResponse, String>,
    ) -> std::result::Result<HttpResponse, FetchError> {
        let attempts_allowed = self.config.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.throttle(state);
            let retryable = match call(&self.transport) {
                Ok(resp) if (200..300).contains(&resp.status) => return Ok(resp),
                Ok(resp) if resp.status == 401 || resp.status == 403 => {
                    return Err(FetchError::Auth(format!("HTTP {} from {url}", resp.status)))
                }
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    Err(FetchError::Http {
                        status: resp.status,
                        url: url.to_string(),
                        attempts: attempt,
                    })
                }
                Ok(resp) => {
                    return Err(FetchError::Http {
                        status: resp.status,
                        url: url.to_string(),
                        attempts: attempt,
                    })
                }
                Err(message) => Err(FetchError::Transport {
                    url: url.to_string(),
                    attempts: attempt,
                    message,
                }),
            };
            if attempt >= attempts_allowed {
                return retryable;
            }
            let backoff = self.config.retry_backoff_secs * 2f64.powi(attempt as i32 - 1);
            warn!("{url}: attempt {attempt} failed, retrying in {backoff:.1}s");
            self.clock.sleep(Duration::from_secs_f64(backoff));
        }
    }

    pub fn query_url(&self, ids: &[u32], start: DateTime<Utc>, end: DateTime<Utc>) -> String {
        let ids: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
        format!(
            "{}/basicspacedata/query/class/gp_history/NORAD_CAT_ID/{}/EPOCH/{}--{}/orderby/NORAD_CAT_ID%20asc,EPOCH%20asc/format/tle",
            self.base(),
            ids.join(","),
            start.format("%Y-%m-%dT%H:%M:%S"),
            end.format("%Y-%m-%dT%H:%M:%S"),
        )
    }

    fn cache_path(&self, url: &str) -> PathBuf {
        let digest = Sha256::digest(url.as_bytes());
        self.config.cache_dir.join(format!("{}.tle", hex::encode(digest)))
    }

    fn fetch_page(&self, url: &str) -> std::result::Result<String, FetchError> {
        let path = self.cache_path(url);
        if path.exists() {
            debug!("cache hit {}", path.display());
            return std::fs::read_to_string(&path).map_err(|source| FetchError::Cache { path, source });
        }
        let mut state = self.state.lock().expect("client state poisoned");
        self.ensure_login(&mut state)?;
        let resp = self.with_retries(&mut state, url, |t| t.get(url))?;
        drop(state);
        validate_payload(url, &resp.body)?;
        write_atomic(&self.config.cache_dir, &path, &resp.body)?;
        Ok(resp.body)
    }

    /// Retrieves all element sets for `ids` with epochs in `[start, end)`,
    /// one request per page of `ids_per_page` catalog numbers.
    pub fn fetch_window(
        &self,
        ids: &[u32],
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    ) -> Result<(SeriesMap, IngestReport)> {
        if start >= end {
            return Err(FetchError::Config("epoch range start must precede end".into()).into());
        }
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let mut text = String::new();
        for page in ids.chunks(self.config.ids_per_page) {
            let url = self.query_url(page, start, end);
            let body = self.fetch_page(&url)?;
            text.push_str(&body);
            if !body.ends_with('\n') {
                text.push('\n');
            }
        }
        info!("fetched {} ids in {} page(s)", ids.len(), ids.len().div_ceil(self.config.ids_per_page));
        let (mut map, report) = build_series(&text, "fetch")?;
        // The server's epoch filter is inclusive at both ends.
        for series in map.values_mut() {
            series.observations.retain(|r| r.epoch >= start && r.epoch < end);
        }
        map.retain(|_, s| !s.is_empty());
        Ok((map, report))
    }
}

fn validate_payload(url: &str, body: &str) -> std::result::Result<(), FetchError> {
    if body.trim().is_empty() {
        return Ok(());
    }
    let (records, rejected) = parse_tle_text(body);
    if records.is_empty() {
        let message = rejected
            .first()
            .map(|r| r.reason.clone())
            .unwrap_or_else(|| "no TLE records in response".into());
        return Err(FetchError::Malformed {
            url: url.to_string(),
            message,
        });
    }
    Ok(())
}

fn write_atomic(dir: &Path, path: &Path, body: &str) -> std::result::Result<(), FetchError> {
    use std::io::Write;
    let cache_err = |source| FetchError::Cache {
        path: path.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(cache_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(cache_err)?;
    tmp.write_all(body.as_bytes()).map_err(cache_err)?;
    tmp.persist(path).map_err(|e| cache_err(e.error))?;
    Ok(())
}
