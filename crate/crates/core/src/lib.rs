//! Analysis toolkit for crawled social communities: user demography,
//! friendship preference patterns and friendship-graph topology, plus a
//! seeded generator of synthetic communities.

pub mod demog;
pub mod model;
pub mod par;
pub mod prefs;
pub mod report;
pub mod synth;
pub mod topo;

pub use model::{AccountId, CommunityDataset, EndpointPolicy, FriendEdge, Gender, Status, UserRecord};
pub use par::Execution;
