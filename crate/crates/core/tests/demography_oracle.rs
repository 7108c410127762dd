mod common;

use friendnet_core::demog::{count_partition, demography_report, demography_report_with, AgeGroup, Attribute};
use friendnet_core::{CommunityDataset, Execution, Gender, Status, UserRecord};

fn in_band(u: &UserRecord) -> bool {
    u.age <= 80
}

/// Counts by scanning every user for every combination of values.
fn oracle(data: &CommunityDataset, g: Option<Gender>, a: Option<AgeGroup>, s: Option<Status>) -> u64 {
    let mut n = 0;
    for u in data.users() {
        if g.is_some_and(|g| u.gender != g) || s.is_some_and(|s| u.status != s) {
            continue;
        }
        if let Some(a) = a {
            let ok = match a {
                AgeGroup::G8To25 => (8..=25).contains(&u.age),
                AgeGroup::G26To40 => (26..=40).contains(&u.age),
                AgeGroup::G41To64 => (41..=64).contains(&u.age),
                AgeGroup::G65To80 => (65..=80).contains(&u.age),
            };
            if !ok {
                continue;
            }
        }
        n += 1;
    }
    n
}

fn options<T: Copy>(all: &[T], used: bool) -> Vec<Option<T>> {
    if used {
        all.iter().copied().map(Some).collect()
    } else {
        vec![None]
    }
}

#[test]
fn every_family_matches_nested_loop_oracle() {
    for seed in 0..5 {
        let data = common::random_dataset(seed, 500, 900, 25);
        let report = demography_report(&data);
        let in_band_users = data.users().iter().filter(|u| in_band(u)).count() as u64;
        assert_eq!(report.n_total, 500);
        assert_eq!(report.stubs_excluded, 25);
        assert_eq!(report.out_of_band_ages, 500 - in_band_users);

        for family in report.families() {
            let has = |a| family.attributes.contains(&a);
            let expected_den = if has(Attribute::AgeGroup) { in_band_users } else { 500 };
            assert_eq!(family.denominator, expected_den, "{}", family.name());
            let mut cells = 0;
            for g in options(&Gender::ALL, has(Attribute::Gender)) {
                for a in options(&AgeGroup::ALL, has(Attribute::AgeGroup)) {
                    for s in options(&Status::ALL, has(Attribute::Status)) {
                        let mut key = Vec::new();
                        key.extend(g.map(|g| g.token()));
                        key.extend(a.map(|a| a.label()));
                        key.extend(s.map(|s| s.token()));
                        let expected = oracle(&data, g, a, s);
                        assert_eq!(family.count(&key), Some(expected), "{key:?}");
                        let exact = 100.0 * expected as f64 / expected_den as f64;
                        assert!((family.percent(&key).unwrap() - exact).abs() < 0.01 + 1e-9);
                        cells += 1;
                    }
                }
            }
            assert_eq!(family.cells.len(), cells);
            let sum: f64 = family.cells.iter().map(|c| c.percent.unwrap()).sum();
            assert!((sum - 100.0).abs() <= 0.05 + 1e-9, "{} sums to {sum}", family.name());
        }
    }
}

#[test]
fn marginals_are_consistent() {
    let data = common::random_dataset(9, 800, 0, 0);
    let full = count_partition(&data, &[Attribute::Status, Attribute::Gender, Attribute::AgeGroup]).unwrap();
    let ga = count_partition(&data, &[Attribute::Gender, Attribute::AgeGroup]).unwrap();
    for (key, &count) in &ga.cells {
        let summed: u64 = full.cells.iter().filter(|(k, _)| k[..2] == key[..]).map(|(_, c)| c).sum();
        assert_eq!(summed, count);
    }
    assert_eq!(full.covered, ga.covered);
    assert_eq!(full.out_of_band, ga.out_of_band);
    assert_eq!(full.covered + full.out_of_band, 800);
}

#[test]
fn age_profile_matches_rows() {
    let data = common::random_dataset(3, 300, 0, 0);
    let report = demography_report(&data);
    let total: u64 = report.age_profile.iter().map(|r| r.count).sum();
    assert_eq!(total, 300);
    for row in &report.age_profile {
        let here: Vec<_> = data.users().iter().filter(|u| u.age == row.age).collect();
        assert_eq!(row.count, here.len() as u64);
        for (gi, g) in Gender::ALL.iter().enumerate() {
            for (si, s) in Status::ALL.iter().enumerate() {
                let n = here.iter().filter(|u| u.gender == *g && u.status == *s).count() as u64;
                assert_eq!(row.by_gender_status[gi][si], n);
            }
        }
    }
}

#[test]
fn sequential_and_parallel_agree() {
    let data = common::random_dataset(4, 2000, 0, 0);
    assert_eq!(demography_report_with(Execution::Sequential, &data), demography_report_with(Execution::Parallel, &data));
}
