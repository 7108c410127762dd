#![allow(dead_code)]

use friendnet_core::model::validate_dataset;
use friendnet_core::{AccountId, CommunityDataset, EndpointPolicy, FriendEdge, Gender, Status, UserRecord};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random users with ages across the whole valid range, random edges, and
/// `stubs` extra endpoints that have no user row.
pub fn random_dataset(seed: u64, n_users: usize, n_edges: usize, stubs: usize) -> CommunityDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<AccountId> = (1..=(n_users + stubs) as AccountId * 3).collect();
    ids.shuffle(&mut rng);
    let (user_ids, rest) = ids.split_at(n_users);
    let stub_ids = &rest[..stubs];
    let users = user_ids
        .iter()
        .map(|&id| {
            UserRecord::new(
                id,
                format!("user {id}"),
                rng.random_range(8..=120),
                Gender::ALL[rng.random_range(0..2)],
                Status::ALL[rng.random_range(0..4)],
            )
        })
        .collect();
    let mut edges: Vec<FriendEdge> =
        stub_ids.iter().map(|&s| FriendEdge::new(s, user_ids[rng.random_range(0..n_users)]).unwrap()).collect();
    let all: Vec<AccountId> = user_ids.iter().chain(stub_ids).copied().collect();
    while edges.len() < n_edges && all.len() > 1 {
        let a = *all.choose(&mut rng).unwrap();
        let b = user_ids[rng.random_range(0..n_users)];
        if let Some(e) = FriendEdge::new(a, b) {
            edges.push(e);
        }
    }
    validate_dataset(users, edges, EndpointPolicy::Stub).unwrap()
}

/// Erdős–Rényi edge list on `n` nodes.
pub fn gnp(seed: u64, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Largest component after deleting `removed`, by union–find.
pub fn giant_by_union_find(n: usize, edges: &[(usize, usize)], removed: &[bool]) -> usize {
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in edges {
        if removed[a] || removed[b] {
            continue;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut sizes = vec![0; n];
    for v in 0..n {
        if !removed[v] {
            let r = find(&mut parent, v);
            sizes[r] += 1;
        }
    }
    sizes.into_iter().max().unwrap_or(0)
}
