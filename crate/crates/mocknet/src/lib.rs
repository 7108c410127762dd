//! A mock paginated profile service and a polite crawler that rebuilds a
//! [`CommunityDataset`](friendnet_core::CommunityDataset) from it.
//!
//! The service exposes `GET /search?page=<k>` (account summaries, one page at
//! a time) and `GET /user/<id>/friends`, both behind a `session` cookie.

mod crawler;
mod limiter;
mod server;

use std::ops::Range;

use friendnet_core::{AccountId, UserRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crawler::{crawl, CrawlError, CrawlOutcome, CrawlSession, RequestRecord};
pub use limiter::{max_in_window, RateLimiter};
pub use server::{serve_mock, FaultPlan, MockConfig, MockServer, ServedRequest};

pub const DEFAULT_PAGE_SIZE: usize = 10;
pub const SESSION_COOKIE: &str = "session";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PageError {
    #[error("page size must be at least 1")]
    ZeroPageSize,
}

/// Layout of the search listing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageIndex {
    pub page_size: usize,
    pub total: usize,
    pub pages: usize,
}

impl PageIndex {
    /// Entries on page `k`, or `None` past the end.
    pub fn page_len(&self, k: usize) -> Option<usize> {
        self.range(k).map(|r| r.len())
    }

    /// Positions in the listing covered by page `k`.
    pub fn range(&self, k: usize) -> Option<Range<usize>> {
        (k < self.pages).then(|| k * self.page_size..((k + 1) * self.page_size).min(self.total))
    }
}

pub fn paginate(total: usize, page_size: usize) -> Result<PageIndex, PageError> {
    if page_size == 0 {
        return Err(PageError::ZeroPageSize);
    }
    Ok(PageIndex { page_size, total, pages: total.div_ceil(page_size) })
}

/// Body of `GET /search?page=<k>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListingPage {
    pub page: usize,
    pub pages: usize,
    pub total: usize,
    pub accounts: Vec<UserRecord>,
}

/// Body of `GET /user/<id>/friends`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FriendList {
    pub account_id: AccountId,
    pub friends: Vec<AccountId>,
}
