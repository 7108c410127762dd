use friendnet_core::model::{load_dataset, parse_edges, parse_users, validate_dataset};
use friendnet_core::{CommunityDataset, EndpointPolicy, FriendEdge, Gender, Status, UserRecord};
use proptest::prelude::*;

fn user() -> impl Strategy<Value = UserRecord> {
    (1u64..400, "[A-Za-z][A-Za-z ,.'\"]{0,10}[A-Za-z]", 8u16..=120, 0usize..2, 0usize..4)
        .prop_map(|(id, name, age, g, s)| UserRecord::new(id, name, age, Gender::ALL[g], Status::ALL[s]))
}

fn dataset() -> impl Strategy<Value = CommunityDataset> {
    (proptest::collection::vec(user(), 0..40), proptest::collection::vec((1u64..450, 1u64..450), 0..80)).prop_map(
        |(mut users, pairs)| {
            users.sort_by_key(|u| u.account_id);
            users.dedup_by_key(|u| u.account_id);
            let edges = pairs.into_iter().filter_map(|(a, b)| FriendEdge::new(a, b)).collect();
            validate_dataset(users, edges, EndpointPolicy::Stub).unwrap()
        },
    )
}

proptest! {
    #[test]
    fn edge_canonicalization_is_idempotent(x in 1u64..1000, y in 1u64..1000) {
        match (FriendEdge::new(x, y), FriendEdge::new(y, x)) {
            (Some(e), Some(f)) => {
                prop_assert_eq!(e, f);
                prop_assert_eq!(e.canonical(), e);
                prop_assert_eq!(e.canonical().canonical(), e.canonical());
                prop_assert!(e.a() < e.b());
                prop_assert_eq!(e.endpoints(), (x.min(y), x.max(y)));
            }
            (None, None) => prop_assert_eq!(x, y),
            _ => prop_assert!(false, "asymmetric"),
        }
    }

    #[test]
    fn emit_then_parse_round_trips(data in dataset()) {
        let users = parse_users(&data.users_bytes()[..]).unwrap();
        let edges = parse_edges(&data.edges_bytes()[..]).unwrap();
        prop_assert!(users.diagnostics.is_empty());
        prop_assert!(edges.diagnostics.is_empty());
        let back = validate_dataset(users.records, edges.records, EndpointPolicy::Stub).unwrap();
        prop_assert_eq!(back.digest(), data.digest());
        prop_assert_eq!(back, data);
    }

    #[test]
    fn row_order_does_not_matter(data in dataset(), seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut users = data.users().to_vec();
        let mut edges: Vec<FriendEdge> = data.edges().iter().map(|e| FriendEdge::new(e.b(), e.a()).unwrap()).collect();
        users.shuffle(&mut rng);
        edges.shuffle(&mut rng);
        let again = validate_dataset(users, edges, EndpointPolicy::Stub).unwrap();
        prop_assert_eq!(again, data);
    }
}

#[test]
fn saved_files_load_back() {
    let users = vec![
        UserRecord::new(7, "Reyes, Ana", 19, Gender::Female, Status::InARelationship),
        UserRecord::new(3, "Ben \"B\" Cruz", 44, Gender::Male, Status::Married),
    ];
    let edges = vec![FriendEdge::new(7, 3).unwrap(), FriendEdge::new(3, 90).unwrap()];
    let data = validate_dataset(users, edges, EndpointPolicy::Stub).unwrap();
    let dir = tempfile::tempdir().unwrap();
    data.save(dir.path()).unwrap();
    let loaded = load_dataset(&dir.path().join("users.csv"), &dir.path().join("edges.csv"), EndpointPolicy::Stub).unwrap();
    assert_eq!(loaded.dataset, data);
    assert!(loaded.user_diagnostics.is_empty() && loaded.edge_diagnostics.is_empty());
    let strict = load_dataset(&dir.path().join("users.csv"), &dir.path().join("edges.csv"), EndpointPolicy::Strict);
    assert!(strict.is_err());
}
