//! Chat-completions HTTP client with deterministic decoding, a durable
//! content-addressed response cache, and bounded retries.
//!
//! Decoding is pinned to temperature zero and is not configurable. The cache
//! key is the digest of the canonical request serialization (messages plus
//! decoding parameters), so any strategy that renders identical bytes shares
//! the same cache entry — in particular the no-persona baseline.

use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prompt::MessageSequence;

/// Generation length default; large enough for worked math solutions.
pub const DEFAULT_MAX_TOKENS: u32 = 2048;
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;
pub const DEFAULT_MAX_RETRIES: u32 = 3;
pub const DEFAULT_PARALLELISM: usize = 4;

const BACKOFF_BASE_SECS: f64 = 1.0;
const BACKOFF_CAP_SECS: f64 = 60.0;

/// A resolved endpoint: URL, model, decoding limits, and retry policy.
/// Temperature is fixed at zero.
#[derive(Clone, Serialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub parallelism_cap: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_size_b: Option<f64>,
}

impl std::fmt::Debug for EndpointConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EndpointConfig")
            .field("base_url", &self.base_url)
            .field("model_name", &self.model_name)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("max_tokens", &self.max_tokens)
            .field("timeout_secs", &self.timeout_secs)
            .field("max_retries", &self.max_retries)
            .field("parallelism_cap", &self.parallelism_cap)
            .finish()
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key: None,
            max_tokens: DEFAULT_MAX_TOKENS,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
            max_retries: DEFAULT_MAX_RETRIES,
            parallelism_cap: DEFAULT_PARALLELISM,
            model_family: None,
            model_size_b: None,
        }
    }
}

/// On-disk form of an endpoint configuration. The API key is injected via
/// the environment variable named by `api_key_env`; nothing secret lives in
/// the file. An optional `[generator]` table points dynamic-expert
/// generation at a different endpoint.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointFile {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
    #[serde(default)]
    pub max_retries: Option<u32>,
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub size_b: Option<f64>,
    #[serde(default)]
    pub generator: Option<Box<EndpointFile>>,
}

impl EndpointFile {
    pub fn load(path: impl AsRef<Path>) -> Result<EndpointFile> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    pub fn resolve(&self) -> EndpointConfig {
        let mut config = EndpointConfig::new(&self.base_url, &self.model);
        if let Some(v) = self.max_tokens {
            config.max_tokens = v;
        }
        if let Some(v) = self.timeout_secs {
            config.timeout_secs = v;
        }
        if let Some(v) = self.max_retries {
            config.max_retries = v;
        }
        if let Some(v) = self.parallelism {
            config.parallelism_cap = v.max(1);
        }
        if let Some(var) = &self.api_key_env {
            config.api_key = std::env::var(var).ok();
        }
        config.model_family = self.family.clone();
        config.model_size_b = self.size_b;
        config
    }
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Debug, Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireResponseMessage {
    content: String,
}

fn canonical_request(config: &EndpointConfig, messages: &MessageSequence) -> String {
    let request = WireRequest {
        model: &config.model_name,
        messages: messages
            .messages()
            .iter()
            .map(|m| WireMessage {
                role: m.role.as_str(),
                content: &m.content,
            })
            .collect(),
        temperature: 0.0,
        max_tokens: config.max_tokens,
    };
    serde_json::to_string(&request).expect("request serializes")
}

/// Digest of the canonical request serialization: the cache key and the
/// `prompt_hash` recorded on run records.
pub fn prompt_hash(config: &EndpointConfig, messages: &MessageSequence) -> String {
    hex::encode(Sha256::digest(canonical_request(config, messages).as_bytes()))
}

/// Filesystem-safe name for a model or task id.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

/// One cached response, stored at
/// `cache/<model>/<hash[0..2]>/<hash>.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request_digest: String,
    pub response: String,
    pub truncated: bool,
    pub timestamp: u64,
}

/// Append-only content-addressed response store. Concurrent readers are
/// safe; writers go through a temp file and an atomic rename per key.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResponseCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, model: &str, hash: &str) -> PathBuf {
        self.root.join(slug(model)).join(&hash[0..2]).join(format!("{hash}.json"))
    }

    pub fn get(&self, model: &str, hash: &str) -> Result<Option<CacheEntry>> {
        let path = self.entry_path(model, hash);
        match std::fs::read_to_string(&path) {
            Ok(text) => {
                let entry = serde_json::from_str(&text)
                    .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
                Ok(Some(entry))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path.display().to_string(), e)),
        }
    }

    pub fn put(&self, model: &str, hash: &str, entry: &CacheEntry) -> Result<()> {
        let path = self.entry_path(model, hash);
        let dir = path.parent().expect("entry path has a parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let tmp = dir.join(format!(".{hash}.tmp.{}", std::process::id()));
        let body = serde_json::to_string(entry)?;
        std::fs::write(&tmp, body).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

/// A completed request: the response text and whether generation stopped at
/// the token limit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub truncated: bool,
    pub from_cache: bool,
    pub prompt_hash: String,
}

/// Cache-backed blocking client. Requests hit the network at most once per
/// unique prompt; transient failures retry with jittered exponential
/// backoff.
pub struct Client {
    http: reqwest::blocking::Client,
    cache: ResponseCache,
}

impl Client {
    pub fn new(cache: ResponseCache) -> Result<Client> {
        let http = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| Error::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Client { http, cache })
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Return the cached response for the prompt, or issue the request,
    /// persist the response, and return it.
    pub fn complete(
        &self,
        config: &EndpointConfig,
        messages: &MessageSequence,
    ) -> Result<Completion> {
        if messages.messages().is_empty() {
            return Err(Error::PreconditionViolation("message sequence is empty".into()));
        }
        let body = canonical_request(config, messages);
        let hash = hex::encode(Sha256::digest(body.as_bytes()));
        if let Some(entry) = self.cache.get(&config.model_name, &hash)? {
            return Ok(Completion {
                text: entry.response,
                truncated: entry.truncated,
                from_cache: true,
                prompt_hash: hash,
            });
        }

        let (text, truncated) = self.request_with_retries(config, &body)?;
        let entry = CacheEntry {
            request_digest: hash.clone(),
            response: text.clone(),
            truncated,
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        self.cache.put(&config.model_name, &hash, &entry)?;
        Ok(Completion {
            text,
            truncated,
            from_cache: false,
            prompt_hash: hash,
        })
    }

    fn request_with_retries(&self, config: &EndpointConfig, body: &str) -> Result<(String, bool)> {
        let mut attempts = 0u32;
        let mut last_message;
        loop {
            attempts += 1;
            match self.request_once(config, body) {
                Ok(result) => return Ok(result),
                Err(RequestFailure::Fatal(e)) => return Err(e),
                Err(RequestFailure::Transient(message)) => {
                    last_message = message;
                }
            }
            if attempts > config.max_retries {
                return Err(Error::Transport {
                    attempts,
                    message: last_message,
                });
            }
            let backoff = (BACKOFF_BASE_SECS * 2f64.powi(attempts as i32 - 1))
                .min(BACKOFF_CAP_SECS)
                * rand::thread_rng().gen_range(0.5..1.5);
            std::thread::sleep(Duration::from_secs_f64(backoff));
        }
    }

    fn request_once(
        &self,
        config: &EndpointConfig,
        body: &str,
    ) -> std::result::Result<(String, bool), RequestFailure> {
        let mut request = self
            .http
            .post(&config.base_url)
            .timeout(Duration::from_secs(config.timeout_secs))
            .header("Content-Type", "application/json")
            .body(body.to_string());
        if let Some(key) = &config.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let response = request
            .send()
            .map_err(|e| RequestFailure::Transient(e.to_string()))?;
        let status = response.status();
        if status.is_success() {
            let wire: WireResponse = response
                .json()
                .map_err(|e| RequestFailure::Transient(format!("malformed response body: {e}")))?;
            let choice = wire.choices.into_iter().next().ok_or_else(|| {
                RequestFailure::Transient("response carried no choices".to_string())
            })?;
            let truncated = choice.finish_reason.as_deref() == Some("length");
            Ok((choice.message.content, truncated))
        } else if status.as_u16() == 429 || status.is_server_error() {
            RequestFailure::transient_status(status.as_u16())
        } else {
            Err(RequestFailure::Fatal(Error::EndpointRejection {
                status: status.as_u16(),
                message: format!("{status}"),
            }))
        }
    }
}

enum RequestFailure {
    Transient(String),
    Fatal(Error),
}

impl RequestFailure {
    fn transient_status(code: u16) -> std::result::Result<(String, bool), RequestFailure> {
        Err(RequestFailure::Transient(format!("status {code}")))
    }
}
