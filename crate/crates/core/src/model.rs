//! User and friendship tables, their file realization, and the validated
//! [`CommunityDataset`] every analysis runs on.
//!
//! The users file has the header `account_id,name,age,gender,relationship_status`
//! and the edges file `account_id,friend_account_id`. Both are comma separated,
//! UTF-8, LF terminated.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type AccountId = u64;

pub const MIN_AGE: u16 = 8;
pub const MAX_AGE: u16 = 120;

pub const USERS_HEADER: [&str; 5] = ["account_id", "name", "age", "gender", "relationship_status"];
pub const EDGES_HEADER: [&str; 2] = ["account_id", "friend_account_id"];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unreadable table: {0}")]
    Unreadable(String),
    #[error("unexpected header {found:?}, expected {expected:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    #[error("duplicate account id {0}")]
    DuplicateAccount(AccountId),
    #[error("invalid user {id}: {reason}")]
    InvalidUser { id: AccountId, reason: String },
    #[error("edges reference unknown account ids: {}", join_ids(.0))]
    UnknownEndpoints(Vec<AccountId>),
}

fn join_ids(ids: &[AccountId]) -> String {
    ids.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "F")]
    Female,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Male, Gender::Female];

    pub fn token(self) -> &'static str {
        match self {
            Gender::Male => "M",
            Gender::Female => "F",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Some(Gender::Male),
            "f" | "female" => Some(Gender::Female),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Relationship status as listed on a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "single")]
    Single,
    #[serde(rename = "married")]
    Married,
    #[serde(rename = "iar")]
    InARelationship,
    #[serde(rename = "unknown")]
    Unknown,
}

impl Status {
    pub const ALL: [Status; 4] = [
        Status::Single,
        Status::Married,
        Status::InARelationship,
        Status::Unknown,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Status::Single => "single",
            Status::Married => "married",
            Status::InARelationship => "iar",
            Status::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" => Some(Status::Single),
            "married" => Some(Status::Married),
            "iar" | "in a relationship" | "inarelationship" => Some(Status::InARelationship),
            "unknown" | "unk" => Some(Status::Unknown),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One row of the users table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UserRecord {
    pub account_id: AccountId,
    pub name: String,
    pub age: u16,
    pub gender: Gender,
    pub status: Status,
}

impl UserRecord {
    pub fn new(
        account_id: AccountId,
        name: impl Into<String>,
        age: u16,
        gender: Gender,
        status: Status,
    ) -> Self {
        UserRecord { account_id, name: name.into(), age, gender, status }
    }

    fn check(&self) -> Result<(), ModelError> {
        if self.account_id == 0 {
            return Err(ModelError::InvalidUser {
                id: 0,
                reason: "account id must be positive".into(),
            });
        }
        if !(MIN_AGE..=MAX_AGE).contains(&self.age) {
            return Err(ModelError::InvalidUser {
                id: self.account_id,
                reason: format!("age {} outside [{MIN_AGE}, {MAX_AGE}]", self.age),
            });
        }
        Ok(())
    }
}

/// An undirected friendship, stored as `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FriendEdge {
    a: AccountId,
    b: AccountId,
}

impl FriendEdge {
    /// Returns `None` for a self-friendship.
    pub fn new(x: AccountId, y: AccountId) -> Option<Self> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Some(FriendEdge { a: x, b: y }),
            std::cmp::Ordering::Greater => Some(FriendEdge { a: y, b: x }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn a(&self) -> AccountId {
        self.a
    }

    pub fn b(&self) -> AccountId {
        self.b
    }

    pub fn endpoints(&self) -> (AccountId, AccountId) {
        (self.a, self.b)
    }

    pub fn canonical(self) -> Self {
        FriendEdge::new(self.a, self.b).expect("stored edges are never self-loops")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    MalformedRow,
    BadField,
    DuplicateAccount,
    SelfLoop,
}

/// A problem with one input row. Row numbers are 1-based file lines, so the
/// header is row 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub row: u64,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub diagnostics: Vec<Diagnostic>,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed { records: Vec::new(), diagnostics: Vec::new() }
    }
}

fn table_reader<R: Read>(reader: R, expected: &[&str]) -> Result<csv::Reader<R>, ModelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found: Vec<String> = rdr.headers().map_err(fatal)?.iter().map(str::to_owned).collect();
    if found.len() != expected.len() || found.iter().zip(expected).any(|(f, e)| f != e) {
        return Err(ModelError::Header {
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    Ok(rdr)
}

fn fatal(err: csv::Error) -> ModelError {
    match err.into_kind() {
        csv::ErrorKind::Io(e) => ModelError::Io(e),
        other => ModelError::Unreadable(format!("{other:?}")),
    }
}

/// Reads records, turning row-level csv errors into diagnostics and keeping
/// i/o failures fatal.
fn for_each_row<R: Read>(
    rdr: &mut csv::Reader<R>,
    diagnostics: &mut Vec<Diagnostic>,
    mut f: impl FnMut(u64, &csv::StringRecord),
) -> Result<(), ModelError> {
    for result in rdr.records() {
        match result {
            Ok(record) => {
                let row = record.position().map_or(0, |p| p.line());
                f(row, &record);
            }
            Err(err) => {
                let row = err.position().map_or(0, |p| p.line());
                if matches!(err.kind(), csv::ErrorKind::Io(_)) {
                    return Err(fatal(err));
                }
                diagnostics.push(Diagnostic {
                    row,
                    kind: DiagnosticKind::MalformedRow,
                    message: format!("malformed row ({err})"),
                });
            }
        }
    }
    Ok(())
}

fn parse_account_id(field: &str) -> Option<AccountId> {
    field.parse::<AccountId>().ok().filter(|&id| id > 0)
}

/// Parses a users table. Duplicate account ids keep the first row.
pub fn parse_users<R: Read>(reader: R) -> Result<Parsed<UserRecord>, ModelError> {
    let mut rdr = table_reader(reader, &USERS_HEADER)?;
    let mut out = Parsed::default();
    let mut seen = BTreeSet::new();
    let mut diagnostics = Vec::new();
    for_each_row(&mut rdr, &mut diagnostics, |row, rec| {
        let bad = |message: String| Diagnostic { row, kind: DiagnosticKind::BadField, message };
        if rec.len() != USERS_HEADER.len() {
            out.diagnostics.push(Diagnostic {
                row,
                kind: DiagnosticKind::MalformedRow,
                message: format!("expected {} fields, found {}", USERS_HEADER.len(), rec.len()),
            });
            return;
        }
        let Some(account_id) = parse_account_id(&rec[0]) else {
            out.diagnostics.push(bad("unparseable account id".into()));
            return;
        };
        let Ok(age) = rec[2].parse::<u16>() else {
            out.diagnostics.push(bad("unparseable age".into()));
            return;
        };
        if !(MIN_AGE..=MAX_AGE).contains(&age) {
            out.diagnostics.push(bad(format!("age {age} outside [{MIN_AGE}, {MAX_AGE}]")));
            return;
        }
        let Some(gender) = Gender::parse(&rec[3]) else {
            out.diagnostics.push(bad(format!("unknown gender {:?}", &rec[3])));
            return;
        };
        let Some(status) = Status::parse(&rec[4]) else {
            out.diagnostics.push(bad(format!("unknown relationship status {:?}", &rec[4])));
            return;
        };
        if !seen.insert(account_id) {
            out.diagnostics.push(Diagnostic {
                row,
                kind: DiagnosticKind::DuplicateAccount,
                message: format!("duplicate account id {account_id}, first row kept"),
            });
            return;
        }
        out.records.push(UserRecord::new(account_id, &rec[1], age, gender, status));
    })?;
    out.diagnostics.extend(diagnostics);
    out.diagnostics.sort_by_key(|d| d.row);
    Ok(out)
}

/// Parses an edges table into canonical, deduplicated edges (sorted).
pub fn parse_edges<R: Read>(reader: R) -> Result<Parsed<FriendEdge>, ModelError> {
    let mut rdr = table_reader(reader, &EDGES_HEADER)?;
    let mut edges = BTreeSet::new();
    let mut out: Parsed<FriendEdge> = Parsed::default();
    let mut diagnostics = Vec::new();
    for_each_row(&mut rdr, &mut diagnostics, |row, rec| {
        if rec.len() != EDGES_HEADER.len() {
            out.diagnostics.push(Diagnostic {
                row,
                kind: DiagnosticKind::MalformedRow,
                message: format!("expected {} fields, found {}", EDGES_HEADER.len(), rec.len()),
            });
            return;
        }
        let (Some(x), Some(y)) = (parse_account_id(&rec[0]), parse_account_id(&rec[1])) else {
            out.diagnostics.push(Diagnostic {
                row,
                kind: DiagnosticKind::BadField,
                message: "unparseable account id".into(),
            });
            return;
        };
        match FriendEdge::new(x, y) {
            Some(edge) => {
                edges.insert(edge);
            }
            None => out.diagnostics.push(Diagnostic {
                row,
                kind: DiagnosticKind::SelfLoop,
                message: format!("self-loop on {x}, edge dropped"),
            }),
        }
    })?;
    out.diagnostics.extend(diagnostics);
    out.diagnostics.sort_by_key(|d| d.row);
    out.records = edges.into_iter().collect();
    Ok(out)
}

/// What to do with edge endpoints that have no user row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointPolicy {
    /// Reject the dataset.
    #[default]
    Strict,
    /// Keep the endpoint as a stub node: part of the graph, absent from demography.
    Stub,
}

impl std::str::FromStr for EndpointPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(EndpointPolicy::Strict),
            "stub" => Ok(EndpointPolicy::Stub),
            other => Err(format!("unknown endpoint policy {other:?} (strict|stub)")),
        }
    }
}

/// Hex SHA-256 over the canonical users and edges files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetDigest(pub String);

impl fmt::Display for DatasetDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Validated users and friendships. Users, stubs and edges are kept sorted,
/// so two datasets holding the same sets compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunityDataset {
    users: Vec<UserRecord>,
    stubs: Vec<AccountId>,
    edges: Vec<FriendEdge>,
}

impl CommunityDataset {
    pub fn empty() -> Self {
        CommunityDataset { users: Vec::new(), stubs: Vec::new(), edges: Vec::new() }
    }

    /// Crawled users, sorted by account id. Stubs are not included.
    pub fn users(&self) -> &[UserRecord] {
        &self.users
    }

    pub fn stubs(&self) -> &[AccountId] {
        &self.stubs
    }

    pub fn edges(&self) -> &[FriendEdge] {
        &self.edges
    }

    /// Node count N, stubs included.
    pub fn n_users(&self) -> usize {
        self.users.len() + self.stubs.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn user(&self, id: AccountId) -> Option<&UserRecord> {
        self.users
            .binary_search_by_key(&id, |u| u.account_id)
            .ok()
            .map(|i| &self.users[i])
    }

    pub fn is_stub(&self, id: AccountId) -> bool {
        self.stubs.binary_search(&id).is_ok()
    }

    /// Every node id (users and stubs) in ascending order.
    pub fn node_ids(&self) -> Vec<AccountId> {
        let mut ids: Vec<AccountId> = self.users.iter().map(|u| u.account_id).collect();
        ids.extend_from_slice(&self.stubs);
        ids.sort_unstable();
        ids
    }

    pub fn write_users<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        wtr.write_record(USERS_HEADER).map_err(fatal)?;
        for u in &self.users {
            let id = u.account_id.to_string();
            let age = u.age.to_string();
            wtr.write_record([id.as_str(), u.name.as_str(), age.as_str(), u.gender.token(), u.status.token()])
                .map_err(fatal)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_edges<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        wtr.write_record(EDGES_HEADER).map_err(fatal)?;
        for e in &self.edges {
            wtr.write_record([e.a.to_string(), e.b.to_string()]).map_err(fatal)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn users_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_users(&mut buf).expect("writing to memory");
        buf
    }

    pub fn edges_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_edges(&mut buf).expect("writing to memory");
        buf
    }

    pub fn digest(&self) -> DatasetDigest {
        let mut hasher = Sha256::new();
        hasher.update(self.users_bytes());
        hasher.update(b"\x00");
        hasher.update(self.edges_bytes());
        DatasetDigest(hex::encode(hasher.finalize()))
    }

    /// Writes `users.csv` and `edges.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        std::fs::create_dir_all(dir)?;
        self.write_users(BufWriter::new(File::create(dir.join("users.csv"))?))?;
        self.write_edges(BufWriter::new(File::create(dir.join("edges.csv"))?))?;
        Ok(())
    }
}

/// A dataset loaded from files, with the row diagnostics of both tables.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: CommunityDataset,
    pub user_diagnostics: Vec<Diagnostic>,
    pub edge_diagnostics: Vec<Diagnostic>,
}

pub fn load_dataset(users: &Path, edges: &Path, policy: EndpointPolicy) -> Result<Loaded, ModelError> {
    let users = parse_users(BufReader::new(File::open(users)?))?;
    let edges = parse_edges(BufReader::new(File::open(edges)?))?;
    let dataset = validate_dataset(users.records, edges.records, policy)?;
    Ok(Loaded {
        dataset,
        user_diagnostics: users.diagnostics,
        edge_diagnostics: edges.diagnostics,
    })
}

/// Checks referential integrity and assembles a [`CommunityDataset`].
pub fn validate_dataset(
    mut users: Vec<UserRecord>,
    mut edges: Vec<FriendEdge>,
    policy: EndpointPolicy,
) -> Result<CommunityDataset, ModelError> {
    users.sort_by_key(|u| u.account_id);
    for pair in users.windows(2) {
        if pair[0].account_id == pair[1].account_id {
            return Err(ModelError::DuplicateAccount(pair[0].account_id));
        }
    }
    for u in &users {
        u.check()?;
    }
    edges.sort_unstable();
    edges.dedup();

    let known = |id: AccountId| users.binary_search_by_key(&id, |u| u.account_id).is_ok();
    let unknown: BTreeSet<AccountId> = edges
        .iter()
        .flat_map(|e| [e.a, e.b])
        .filter(|&id| !known(id))
        .collect();
    if !unknown.is_empty() && policy == EndpointPolicy::Strict {
        return Err(ModelError::UnknownEndpoints(unknown.into_iter().collect()));
    }
    Ok(CommunityDataset { users, stubs: unknown.into_iter().collect(), edges })
}
