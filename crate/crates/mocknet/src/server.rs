use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use friendnet_core::{AccountId, CommunityDataset, UserRecord};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::{paginate, FriendList, ListingPage, PageError, PageIndex, SESSION_COOKIE};

/// Injected failures, answered with 503.
#[derive(Debug, Clone, Default)]
pub struct FaultPlan {
    /// The first this-many requests to each distinct path and query fail.
    pub transient_per_path: u32,
    /// Paths (with query) that always fail, e.g. `/search?page=3`.
    pub always_fail: HashSet<String>,
}

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub page_size: usize,
    pub token: String,
    pub faults: FaultPlan,
}

impl MockConfig {
    pub fn new(token: impl Into<String>) -> Self {
        MockConfig { page_size: crate::DEFAULT_PAGE_SIZE, token: token.into(), faults: FaultPlan::default() }
    }
}

/// One request as seen by the service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServedRequest {
    /// Arrival time since the service started.
    pub at: Duration,
    pub path: String,
    pub status: u16,
}

struct Service {
    index: PageIndex,
    listing: Vec<UserRecord>,
    friends: HashMap<AccountId, Vec<AccountId>>,
    token: String,
    faults: FaultPlan,
    hits: Mutex<HashMap<String, u32>>,
    log: Mutex<Vec<ServedRequest>>,
    started: Instant,
}

impl Service {
    fn new(dataset: &CommunityDataset, config: MockConfig) -> Result<Self, PageError> {
        let listing = dataset.users().to_vec();
        let mut friends: HashMap<AccountId, Vec<AccountId>> =
            listing.iter().map(|u| (u.account_id, Vec::new())).collect();
        for edge in dataset.edges() {
            let (a, b) = edge.endpoints();
            if let Some(list) = friends.get_mut(&a) {
                list.push(b);
            }
            if let Some(list) = friends.get_mut(&b) {
                list.push(a);
            }
        }
        for list in friends.values_mut() {
            list.sort_unstable();
        }
        Ok(Service {
            index: paginate(listing.len(), config.page_size)?,
            listing,
            friends,
            token: config.token,
            faults: config.faults,
            hits: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
            started: Instant::now(),
        })
    }

    fn authorized(&self, headers: &HeaderMap) -> bool {
        headers
            .get_all(axum::http::header::COOKIE)
            .iter()
            .filter_map(|v| v.to_str().ok())
            .flat_map(|v| v.split(';'))
            .filter_map(|pair| pair.trim().split_once('='))
            .any(|(name, value)| name == SESSION_COOKIE && value == self.token)
    }

    fn injected_fault(&self, key: &str) -> bool {
        if self.faults.always_fail.contains(key) {
            return true;
        }
        let mut hits = self.hits.lock().expect("hits lock");
        let n = hits.entry(key.to_string()).or_insert(0);
        *n += 1;
        *n <= self.faults.transient_per_path
    }

    /// Common gate for every endpoint; `Err` carries the early response.
    fn admit(&self, uri: &Uri, headers: &HeaderMap) -> Result<String, StatusCode> {
        let key = uri.path_and_query().map_or_else(|| uri.path().to_string(), |pq| pq.as_str().to_string());
        if !self.authorized(headers) {
            return Err(StatusCode::UNAUTHORIZED);
        }
        if self.injected_fault(&key) {
            return Err(StatusCode::SERVICE_UNAVAILABLE);
        }
        Ok(key)
    }

    fn record(&self, uri: &Uri, arrived: Instant, status: StatusCode) {
        let path = uri.path_and_query().map_or_else(|| uri.path().to_string(), |pq| pq.as_str().to_string());
        self.log.lock().expect("log lock").push(ServedRequest {
            at: arrived.duration_since(self.started),
            path,
            status: status.as_u16(),
        });
    }
}

#[derive(Deserialize)]
struct PageQuery {
    page: usize,
}

async fn search(
    State(svc): State<Arc<Service>>,
    uri: Uri,
    headers: HeaderMap,
    query: Result<Query<PageQuery>, QueryRejection>,
) -> Response {
    let arrived = Instant::now();
    let response = match svc.admit(&uri, &headers) {
        Err(status) => status.into_response(),
        Ok(_) => match query.ok().and_then(|Query(q)| svc.index.range(q.page).map(|r| (q.page, r))) {
            None => StatusCode::NOT_FOUND.into_response(),
            Some((page, range)) => Json(ListingPage {
                page,
                pages: svc.index.pages,
                total: svc.index.total,
                accounts: svc.listing[range].to_vec(),
            })
            .into_response(),
        },
    };
    svc.record(&uri, arrived, response.status());
    response
}

async fn friends(State(svc): State<Arc<Service>>, uri: Uri, headers: HeaderMap, Path(id): Path<String>) -> Response {
    let arrived = Instant::now();
    let response = match svc.admit(&uri, &headers) {
        Err(status) => status.into_response(),
        Ok(_) => match id.parse::<AccountId>().ok().and_then(|id| svc.friends.get(&id).map(|f| (id, f))) {
            None => StatusCode::NOT_FOUND.into_response(),
            Some((account_id, list)) => Json(FriendList { account_id, friends: list.clone() }).into_response(),
        },
    };
    svc.record(&uri, arrived, response.status());
    response
}

/// Handle to a running mock service. Dropping it stops the service.
pub struct MockServer {
    addr: SocketAddr,
    service: Arc<Service>,
    stop: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<std::io::Result<()>>>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn page_index(&self) -> PageIndex {
        self.service.index
    }

    /// Every request served so far, in arrival order.
    pub fn request_log(&self) -> Vec<ServedRequest> {
        let mut log = self.service.log.lock().expect("log lock").clone();
        log.sort_by_key(|r| r.at);
        log
    }

    pub fn clear_log(&self) {
        self.service.log.lock().expect("log lock").clear();
    }

    /// Serves until `signal` resolves, then shuts down.
    pub async fn run_until(mut self, signal: impl std::future::Future<Output = ()>) -> std::io::Result<()> {
        signal.await;
        self.stop().await
    }

    pub async fn shutdown(mut self) -> std::io::Result<()> {
        self.stop().await
    }

    async fn stop(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.task.take() {
            Some(task) => task.await.map_err(std::io::Error::other)?,
            None => Ok(()),
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }
}

/// Starts the service on `addr` (port 0 picks a free port).
pub async fn serve_mock(dataset: &CommunityDataset, config: MockConfig, addr: SocketAddr) -> std::io::Result<MockServer> {
    let service = Arc::new(
        Service::new(dataset, config).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?,
    );
    let app = Router::new()
        .route("/search", get(search))
        .route("/user/{id}/friends", get(friends))
        .with_state(service.clone());
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    Ok(MockServer { addr, service, stop: Some(stop), task: Some(task) })
}
