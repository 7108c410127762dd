use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use friendnet_core::model::{validate_dataset, ModelError};
use friendnet_core::{AccountId, CommunityDataset, EndpointPolicy, FriendEdge, UserRecord};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::mpsc;

use crate::{FriendList, ListingPage, RateLimiter, SESSION_COOKIE};

/// Connection and politeness settings for one crawl.
#[derive(Debug, Clone)]
pub struct CrawlSession {
    pub base_url: String,
    /// Value of the `session` cookie.
    pub cookie: String,
    /// Requests per second, retries included.
    pub rate_limit: u32,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    /// Requests in flight at once.
    pub concurrency: usize,
    /// JSON-lines record of finished pages and profiles; an existing file
    /// is resumed from.
    pub checkpoint: Option<PathBuf>,
    /// Give up after issuing this many requests, leaving the checkpoint as a
    /// killed crawl would.
    pub request_budget: Option<usize>,
}

impl CrawlSession {
    pub fn new(base_url: impl Into<String>, cookie: impl Into<String>, rate_limit: u32) -> Self {
        CrawlSession {
            base_url: base_url.into(),
            cookie: cookie.into(),
            rate_limit,
            max_retries: 3,
            initial_backoff: Duration::from_millis(250),
            concurrency: 4,
            checkpoint: None,
            request_budget: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("invalid session: {0}")]
    InvalidSession(String),
    #[error("session cookie rejected at {path}")]
    Auth { path: String },
    #[error("listing page {page} failed after {attempts} attempt(s): {reason}")]
    PageFailed { page: usize, attempts: u32, reason: String },
    #[error("profile {id} failed after {attempts} attempt(s): {reason}")]
    ProfileFailed { id: AccountId, attempts: u32, reason: String },
    #[error("crawl stopped after {requests} request(s); resume from the checkpoint")]
    Interrupted { requests: usize },
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One request as issued by the crawler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestRecord {
    /// Time the rate limiter granted the request, since the crawl started.
    pub at: Duration,
    pub path: String,
    /// `None` when no response arrived.
    pub status: Option<u16>,
}

#[derive(Debug, Clone)]
pub struct CrawlOutcome {
    pub dataset: CommunityDataset,
    pub requests: Vec<RequestRecord>,
    pub resumed_pages: usize,
    pub resumed_profiles: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum CheckpointEntry {
    Page(ListingPage),
    Profile(FriendList),
}

#[derive(Default)]
struct Progress {
    pages: BTreeMap<usize, ListingPage>,
    profiles: HashMap<AccountId, Vec<AccountId>>,
}

impl Progress {
    fn load(path: &Path) -> Result<Self, CrawlError> {
        let mut progress = Progress::default();
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(progress),
            Err(e) => return Err(checkpoint_error(path, e)),
        };
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        for (i, line) in lines.iter().enumerate() {
            match serde_json::from_str::<CheckpointEntry>(line) {
                Ok(entry) => progress.insert(entry),
                // a torn final line is what a kill mid-write leaves behind
                Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {}
                Err(e) => return Err(checkpoint_error(path, format!("line {}: {e}", i + 1))),
            }
        }
        Ok(progress)
    }

    fn insert(&mut self, entry: CheckpointEntry) {
        match entry {
            CheckpointEntry::Page(p) => {
                self.pages.insert(p.page, p);
            }
            CheckpointEntry::Profile(f) => {
                self.profiles.insert(f.account_id, f.friends);
            }
        }
    }
}

fn checkpoint_error(path: &Path, reason: impl ToString) -> CrawlError {
    CrawlError::Checkpoint { path: path.to_path_buf(), reason: reason.to_string() }
}

struct CheckpointWriter {
    path: PathBuf,
    file: Option<fs::File>,
}

impl CheckpointWriter {
    fn open(path: Option<&Path>) -> Result<Self, CrawlError> {
        let Some(path) = path else {
            return Ok(CheckpointWriter { path: PathBuf::new(), file: None });
        };
        // drop a torn tail so appended lines start cleanly
        if let Ok(text) = fs::read_to_string(path) {
            if !text.is_empty() && !text.ends_with('\n') {
                let keep = text.rfind('\n').map_or(0, |i| i + 1);
                fs::write(path, &text[..keep]).map_err(|e| checkpoint_error(path, e))?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| checkpoint_error(path, e))?;
        Ok(CheckpointWriter { path: path.to_path_buf(), file: Some(file) })
    }

    fn append(&mut self, entry: &CheckpointEntry) -> Result<(), CrawlError> {
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_string(entry).expect("checkpoint entry serializes");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(|e| checkpoint_error(&self.path, e))?;
        }
        Ok(())
    }
}

enum Failure {
    Auth,
    NotFound,
    Exhausted { attempts: u32, reason: String },
    Interrupted,
}

struct Fetcher {
    client: reqwest::Client,
    base: String,
    cookie: String,
    max_retries: u32,
    backoff: Duration,
    limiter: RateLimiter,
    budget: Option<usize>,
    issued: AtomicUsize,
    started: Instant,
    log: Mutex<Vec<RequestRecord>>,
}

impl Fetcher {
    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, Failure> {
        let url = format!("{}{path}", self.base);
        let mut reason = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                tokio::time::sleep(self.backoff * 2u32.saturating_pow(attempt - 1)).await;
            }
            let n = self.issued.fetch_add(1, Ordering::SeqCst);
            if self.budget.is_some_and(|b| n >= b) {
                return Err(Failure::Interrupted);
            }
            let granted = self.limiter.acquire().await;
            let result = self
                .client
                .get(&url)
                .header(reqwest::header::COOKIE, format!("{SESSION_COOKIE}={}", self.cookie))
                .send()
                .await;
            let status = result.as_ref().ok().map(|r| r.status().as_u16());
            self.log.lock().expect("log lock").push(RequestRecord {
                at: granted.duration_since(self.started),
                path: path.to_string(),
                status,
            });
            match result {
                Ok(r) if r.status().is_success() => match r.json::<T>().await {
                    Ok(v) => return Ok(v),
                    Err(e) => reason = format!("bad body: {e}"),
                },
                Ok(r) if r.status() == StatusCode::UNAUTHORIZED || r.status() == StatusCode::FORBIDDEN => {
                    return Err(Failure::Auth)
                }
                Ok(r) if r.status() == StatusCode::NOT_FOUND => return Err(Failure::NotFound),
                Ok(r) => reason = format!("status {}", r.status()),
                Err(e) => reason = e.to_string(),
            }
        }
        Err(Failure::Exhausted { attempts: self.max_retries + 1, reason })
    }

    fn issued(&self) -> usize {
        self.issued.load(Ordering::SeqCst)
    }

    async fn page(&self, page: usize) -> Result<ListingPage, CrawlError> {
        let path = format!("/search?page={page}");
        self.get(&path).await.map_err(|f| match f {
            Failure::Auth => CrawlError::Auth { path },
            Failure::NotFound => CrawlError::PageFailed { page, attempts: 1, reason: "not found".into() },
            Failure::Exhausted { attempts, reason } => CrawlError::PageFailed { page, attempts, reason },
            Failure::Interrupted => CrawlError::Interrupted { requests: self.issued() },
        })
    }

    async fn profile(&self, id: AccountId) -> Result<FriendList, CrawlError> {
        let path = format!("/user/{id}/friends");
        self.get(&path).await.map_err(|f| match f {
            Failure::Auth => CrawlError::Auth { path },
            Failure::NotFound => CrawlError::ProfileFailed { id, attempts: 1, reason: "not found".into() },
            Failure::Exhausted { attempts, reason } => CrawlError::ProfileFailed { id, attempts, reason },
            Failure::Interrupted => CrawlError::Interrupted { requests: self.issued() },
        })
    }
}

#[derive(Clone, Copy)]
enum Job {
    Page(usize),
    Profile(AccountId),
}

/// Runs `jobs` on `workers` tasks. Every finished job is checkpointed and
/// recorded; the first error stops new jobs from starting.
async fn run_jobs(
    fetcher: &Arc<Fetcher>,
    jobs: Vec<Job>,
    workers: usize,
    progress: &mut Progress,
    writer: &mut CheckpointWriter,
) -> Result<(), CrawlError> {
    let queue = Arc::new(Mutex::new(VecDeque::from(jobs)));
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, mut rx) = mpsc::unbounded_channel::<Result<CheckpointEntry, CrawlError>>();
    for _ in 0..workers {
        let (queue, stop, tx, fetcher) = (queue.clone(), stop.clone(), tx.clone(), fetcher.clone());
        tokio::spawn(async move {
            while !stop.load(Ordering::SeqCst) {
                let Some(job) = queue.lock().expect("queue lock").pop_front() else { break };
                let done = match job {
                    Job::Page(k) => fetcher.page(k).await.map(CheckpointEntry::Page),
                    Job::Profile(id) => fetcher.profile(id).await.map(CheckpointEntry::Profile),
                };
                if done.is_err() {
                    stop.store(true, Ordering::SeqCst);
                }
                if tx.send(done).is_err() {
                    break;
                }
            }
        });
    }
    drop(tx);

    let mut first_error = None;
    while let Some(done) = rx.recv().await {
        match done {
            Ok(entry) => {
                writer.append(&entry)?;
                progress.insert(entry);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

/// Walks every listing page, then every listed profile, and assembles the
/// dataset. Friends that never appear in the listing are kept as stubs under
/// [`EndpointPolicy::Stub`] and rejected under [`EndpointPolicy::Strict`].
pub async fn crawl(session: &CrawlSession, policy: EndpointPolicy) -> Result<CrawlOutcome, CrawlError> {
    if session.rate_limit == 0 {
        return Err(CrawlError::InvalidSession("rate limit must be positive".into()));
    }
    if session.concurrency == 0 {
        return Err(CrawlError::InvalidSession("concurrency must be positive".into()));
    }
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .map_err(|e| CrawlError::InvalidSession(e.to_string()))?;
    let fetcher = Arc::new(Fetcher {
        client,
        base: session.base_url.trim_end_matches('/').to_string(),
        cookie: session.cookie.clone(),
        max_retries: session.max_retries,
        backoff: session.initial_backoff,
        limiter: RateLimiter::new(session.rate_limit),
        budget: session.request_budget,
        issued: AtomicUsize::new(0),
        started: Instant::now(),
        log: Mutex::new(Vec::new()),
    });

    let mut progress = match &session.checkpoint {
        Some(path) => Progress::load(path)?,
        None => Progress::default(),
    };
    let resumed_pages = progress.pages.len();
    let resumed_profiles = progress.profiles.len();
    let mut writer = CheckpointWriter::open(session.checkpoint.as_deref())?;

    let pages = match progress.pages.get(&0) {
        Some(first) => first.pages,
        None => match fetcher.page(0).await {
            Ok(first) => {
                let pages = first.pages;
                let entry = CheckpointEntry::Page(first);
                writer.append(&entry)?;
                progress.insert(entry);
                pages
            }
            // an empty listing has no page 0
            Err(CrawlError::PageFailed { page: 0, attempts: 1, .. }) => 0,
            Err(e) => return Err(e),
        },
    };
    let page_jobs = (1..pages).filter(|k| !progress.pages.contains_key(k)).map(Job::Page).collect();
    run_jobs(&fetcher, page_jobs, session.concurrency, &mut progress, &mut writer).await?;

    let mut users: BTreeMap<AccountId, UserRecord> = BTreeMap::new();
    for page in progress.pages.values() {
        for account in &page.accounts {
            users.entry(account.account_id).or_insert_with(|| account.clone());
        }
    }
    let profile_jobs = users.keys().filter(|id| !progress.profiles.contains_key(id)).map(|&id| Job::Profile(id)).collect();
    run_jobs(&fetcher, profile_jobs, session.concurrency, &mut progress, &mut writer).await?;

    let edges = users
        .keys()
        .flat_map(|&id| progress.profiles[&id].iter().filter_map(move |&f| FriendEdge::new(id, f)))
        .collect();
    let dataset = validate_dataset(users.into_values().collect(), edges, policy)?;
    let mut requests = std::mem::take(&mut *fetcher.log.lock().expect("log lock"));
    requests.sort_by_key(|r| r.at);
    Ok(CrawlOutcome { dataset, requests, resumed_pages, resumed_profiles })
}
