//! Model backends: an echo stub, a gold-table oracle and an HTTP client for a
//! remote inference service (`POST /predict` with `{"source"}` returning
//! `{"target"}`, `GET /health`).

use std::collections::HashMap;
use std::io::{self, BufRead};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taskgen::{read_samples, SampleFileError};
use crate::types::split_source;

pub mod stub;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("no oracle entry for `{0}`")]
    UnknownKey(String),
    #[error("response body larger than {limit} bytes")]
    Oversize { limit: u64 },
    #[error("service answered HTTP {0}")]
    Status(u16),
    #[error("malformed service response: {0}")]
    Protocol(String),
    #[error(transparent)]
    SampleFile(#[from] SampleFileError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl BackendError {
    fn is_connection(&self) -> bool {
        matches!(self, BackendError::Connection(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRequest {
    pub source: String,
    pub max_output_chars: usize,
    /// How many earlier requests in the same batch had this source. Lets
    /// the oracle return the right gold target for repeated sources.
    #[serde(default)]
    pub occurrence: usize,
}

impl PredictionRequest {
    pub fn new(source: impl Into<String>) -> Result<Self, BackendError> {
        let source = source.into();
        if source.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty source".into()));
        }
        if split_source(&source).is_none() {
            return Err(BackendError::InvalidRequest(format!("no task prefix in `{source}`")));
        }
        let max_output_chars = 2 * source.chars().count() + 64;
        Ok(PredictionRequest { source, max_output_chars, occurrence: 0 })
    }

    /// Requests for a batch of sources with occurrence ordinals filled in.
    pub fn batch<S: AsRef<str>>(sources: &[S]) -> Result<Vec<Self>, BackendError> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        sources
            .iter()
            .map(|s| {
                let mut r = Self::new(s.as_ref())?;
                let n = seen.entry(s.as_ref()).or_default();
                r.occurrence = *n;
                *n += 1;
                Ok(r)
            })
            .collect()
    }
}

pub trait Backend: Send + Sync {
    fn predict(&self, req: &PredictionRequest) -> Result<String, BackendError>;

    fn health(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

/// Returns the source text without flag and prefix.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoBackend;

impl Backend for EchoBackend {
    fn predict(&self, req: &PredictionRequest) -> Result<String, BackendError> {
        let (_, _, text) = split_source(&req.source).ok_or_else(|| BackendError::InvalidRequest(req.source.clone()))?;
        Ok(text.to_string())
    }
}

/// Gold lookup table.
#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    table: HashMap<String, Vec<String>>,
}

impl OracleBackend {
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: HashMap<String, Vec<String>> = HashMap::new();
        for (s, t) in pairs {
            table.entry(s).or_default().push(t);
        }
        OracleBackend { table }
    }

    pub fn from_reader<R: BufRead>(input: R) -> Result<Self, BackendError> {
        Ok(Self::from_pairs(read_samples(input)?))
    }

    pub fn from_path(path: &Path) -> Result<Self, BackendError> {
        Self::from_reader(io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn len(&self) -> usize {
        self.table.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Backend for OracleBackend {
    fn predict(&self, req: &PredictionRequest) -> Result<String, BackendError> {
        let targets = self.table.get(&req.source).ok_or_else(|| BackendError::UnknownKey(req.source.clone()))?;
        Ok(targets[req.occurrence.min(targets.len() - 1)].clone())
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    source: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    target: String,
}

/// Client for the inference service.
pub struct RemoteBackend {
    agent: ureq::Agent,
    endpoint: String,
    retries: u32,
    backoff: Duration,
}

impl RemoteBackend {
    pub fn new(endpoint: &str, timeout: Duration, retries: u32, backoff: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().new_agent();
        let endpoint = endpoint.trim_end_matches('/');
        let endpoint = if endpoint.contains("://") { endpoint.to_string() } else { format!("http://{endpoint}") };
        RemoteBackend { agent, endpoint, retries, backoff }
    }

    fn with_retries<T>(&self, mut f: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
        let mut attempt = 0;
        loop {
            match f() {
                Err(e) if e.is_connection() && attempt < self.retries => {
                    log::debug!("retrying after {e}");
                    thread::sleep(self.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn call(&self, req: &PredictionRequest) -> Result<String, BackendError> {
        let mut resp = self.agent.post(format!("{}/predict", self.endpoint)).send_json(WireRequest { source: &req.source }).map_err(map_err)?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(BackendError::Status(status));
        }
        // Targets are at most max_output_chars characters after truncation;
        // allow generous room for escapes and a runaway decoder.
        let limit = 8 * req.max_output_chars as u64 + 4096;
        let body = resp.body_mut().with_config().limit(limit).read_to_string().map_err(|e| match e {
            ureq::Error::BodyExceedsLimit(_) => BackendError::Oversize { limit },
            other => map_err(other),
        })?;
        let wire: WireResponse = serde_json::from_str(&body).map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(match wire.target.char_indices().nth(req.max_output_chars) {
            Some((cut, _)) => wire.target[..cut].to_string(),
            None => wire.target,
        })
    }
}

fn map_err(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::Io(io) if io.kind() == io::ErrorKind::TimedOut => BackendError::Timeout,
        ureq::Error::Io(io) => BackendError::Connection(io.to_string()),
        ureq::Error::ConnectionFailed => BackendError::Connection("connection failed".into()),
        ureq::Error::HostNotFound => BackendError::Connection("host not found".into()),
        ureq::Error::StatusCode(c) => BackendError::Status(c),
        ureq::Error::BodyExceedsLimit(l) => BackendError::Oversize { limit: l },
        other => BackendError::Protocol(other.to_string()),
    }
}

impl Backend for RemoteBackend {
    fn predict(&self, req: &PredictionRequest) -> Result<String, BackendError> {
        self.with_retries(|| self.call(req))
    }

    fn health(&self) -> Result<(), BackendError> {
        self.with_retries(|| {
            let resp = self.agent.get(format!("{}/health", self.endpoint)).call().map_err(map_err)?;
            match resp.status().as_u16() {
                200 => Ok(()),
                s => Err(BackendError::Status(s)),
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Echo,
    Oracle,
    Remote,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "echo" => Ok(BackendKind::Echo),
            "oracle" => Ok(BackendKind::Oracle),
            "remote" => Ok(BackendKind::Remote),
            other => Err(format!("unknown backend `{other}` (echo, oracle, remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub oracle_table: Option<PathBuf>,
    #[serde(with = "millis")]
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub retries: u32,
    #[serde(with = "millis")]
    pub backoff: Duration,
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Echo,
            endpoint: None,
            oracle_table: None,
            timeout: Duration::from_secs(30),
            max_in_flight: 4,
            retries: 2,
            backoff: Duration::from_millis(200),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        match self.kind {
            BackendKind::Remote if self.endpoint.is_none() => Err(BackendError::Config("remote backend needs an endpoint".into())),
            BackendKind::Oracle if self.oracle_table.is_none() => Err(BackendError::Config("oracle backend needs a table".into())),
            _ if self.max_in_flight == 0 => Err(BackendError::Config("max_in_flight must be at least 1".into())),
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Backend>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Echo => Box::new(EchoBackend),
            BackendKind::Oracle => Box::new(OracleBackend::from_path(self.oracle_table.as_deref().expect("validated"))?),
            BackendKind::Remote => Box::new(RemoteBackend::new(self.endpoint.as_deref().expect("validated"), self.timeout, self.retries, self.backoff)),
        })
    }
}

pub fn predict(req: &PredictionRequest, backend: &dyn Backend) -> Result<String, BackendError> {
    backend.predict(req)
}

/// Runs requests on up to `max_in_flight` workers. Results line up with the
/// requests; a failing item does not stop the others.
pub fn predict_batch(requests: &[PredictionRequest], backend: &dyn Backend, max_in_flight: usize) -> Vec<Result<String, BackendError>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<String, BackendError>>>> = Mutex::new((0..requests.len()).map(|_| None).collect());
    let workers = max_in_flight.max(1).min(requests.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(req) = requests.get(i) else { break };
                let r = backend.predict(req);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("result slots poisoned").into_iter().map(|r| r.expect("every slot filled")).collect()
}
