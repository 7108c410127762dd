//! Friendship preference patterns: mixing matrices over endpoint attributes,
//! the age-difference histogram, and the random-mixing baseline.
//!
//! Every undirected edge is counted once. Edges with a stub endpoint carry no
//! attributes and are tallied in `excluded_edges` instead.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demog::AgeGroup;
use crate::model::{CommunityDataset, Gender, Status, UserRecord};
use crate::par::{self, Execution};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrefsError {
    #[error("expected {expected} marginals, got {found}")]
    MarginalLength { expected: usize, found: usize },
}

/// Symmetric table of undirected edge counts by endpoint attribute pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixingMatrix {
    pub labels: Vec<String>,
    /// `cells[u][v] == cells[v][u]` is the number of edges joining a `u` to a `v`.
    pub cells: Vec<Vec<u64>>,
    /// Edges counted, each once.
    pub total: u64,
    pub excluded_edges: u64,
}

impl MixingMatrix {
    fn from_upper(labels: &[&str], flat: &[u64], excluded_edges: u64) -> Self {
        let k = labels.len();
        let mut cells = vec![vec![0; k]; k];
        let mut total = 0;
        for u in 0..k {
            for v in u..k {
                let c = flat[u * k + v];
                cells[u][v] = c;
                cells[v][u] = c;
                total += c;
            }
        }
        MixingMatrix { labels: labels.iter().map(|s| s.to_string()).collect(), cells, total, excluded_edges }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Count for the unordered label pair.
    pub fn pair(&self, a: &str, b: &str) -> u64 {
        match (self.index_of(a), self.index_of(b)) {
            (Some(u), Some(v)) => self.cells[u][v],
            _ => 0,
        }
    }

    /// Edge endpoints carrying each label; sums to `2 * total`.
    pub fn endpoint_counts(&self) -> Vec<u64> {
        (0..self.labels.len())
            .map(|u| (0..self.labels.len()).map(|v| if u == v { 2 * self.cells[u][u] } else { self.cells[u][v] }).sum())
            .collect()
    }

    /// Unordered pairs `(u <= v)` with their counts.
    pub fn upper_pairs(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        let k = self.labels.len();
        (0..k).flat_map(move |u| (u..k).map(move |v| (u, v, self.cells[u][v])))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("#pair\tcount\n");
        for (u, v, c) in self.upper_pairs() {
            let _ = writeln!(out, "{}-{}\t{c}", self.labels[u], self.labels[v]);
        }
        out
    }
}

fn mixing(
    exec: Execution,
    dataset: &CommunityDataset,
    labels: &[&str],
    key: impl Fn(&UserRecord) -> Option<usize> + Sync + Send,
) -> MixingMatrix {
    let k = labels.len();
    // flat[k * k] counts excluded edges
    let flat = par::fold(
        exec,
        dataset.edges(),
        || (),
        || vec![0u64; k * k + 1],
        |mut acc, _, edge| {
            let class = |id| dataset.user(id).and_then(&key);
            match (class(edge.a()), class(edge.b())) {
                (Some(x), Some(y)) => acc[x.min(y) * k + x.max(y)] += 1,
                _ => acc[k * k] += 1,
            }
            acc
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    );
    MixingMatrix::from_upper(labels, &flat[..k * k], flat[k * k])
}

pub fn gender_mixing(dataset: &CommunityDataset) -> MixingMatrix {
    gender_mixing_with(Execution::default(), dataset)
}

pub fn gender_mixing_with(exec: Execution, dataset: &CommunityDataset) -> MixingMatrix {
    let labels: Vec<&str> = Gender::ALL.iter().map(|g| g.token()).collect();
    mixing(exec, dataset, &labels, |u| Some(u.gender.index()))
}

pub fn status_mixing(dataset: &CommunityDataset) -> MixingMatrix {
    status_mixing_with(Execution::default(), dataset)
}

pub fn status_mixing_with(exec: Execution, dataset: &CommunityDataset) -> MixingMatrix {
    let labels: Vec<&str> = Status::ALL.iter().map(|s| s.token()).collect();
    mixing(exec, dataset, &labels, |u| Some(u.status.index()))
}

/// Mixing by age group; edges with an endpoint older than 80 are excluded.
pub fn age_group_mixing(dataset: &CommunityDataset) -> MixingMatrix {
    let labels: Vec<&str> = AgeGroup::ALL.iter().map(|a| a.label()).collect();
    mixing(Execution::default(), dataset, &labels, |u| AgeGroup::from_age(u.age).map(AgeGroup::index))
}

/// Edge counts by absolute age difference in whole years.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeDiffHistogram {
    /// `bins[k]` counts edges whose endpoint ages differ by `k`; runs to the
    /// largest observed difference and is empty when no edge was counted.
    pub bins: Vec<u64>,
    pub total: u64,
    pub excluded_edges: u64,
}

impl AgeDiffHistogram {
    /// Edges with an age difference of at most `years`.
    pub fn within(&self, years: usize) -> u64 {
        self.bins.iter().take(years + 1).sum()
    }

    pub fn beyond(&self, years: usize) -> u64 {
        self.total - self.within(years)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("#age_difference\tcount\n");
        for (k, c) in self.bins.iter().enumerate() {
            let _ = writeln!(out, "{k}\t{c}");
        }
        out
    }
}

pub fn age_difference_histogram(dataset: &CommunityDataset) -> AgeDiffHistogram {
    let mut bins: Vec<u64> = Vec::new();
    let mut excluded_edges = 0;
    for edge in dataset.edges() {
        match (dataset.user(edge.a()), dataset.user(edge.b())) {
            (Some(x), Some(y)) => {
                let d = usize::from(x.age.abs_diff(y.age));
                if bins.len() <= d {
                    bins.resize(d + 1, 0);
                }
                bins[d] += 1;
            }
            _ => excluded_edges += 1,
        }
    }
    AgeDiffHistogram { total: bins.iter().sum(), bins, excluded_edges }
}

/// Expected counts under random mixing and observed/expected ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingBaseline {
    pub labels: Vec<String>,
    /// Expected count of each unordered pair; symmetric.
    pub expected: Vec<Vec<f64>>,
    /// `None` where the expected count is zero.
    pub ratios: Vec<Vec<Option<f64>>>,
}

impl MixingBaseline {
    pub fn ratio(&self, a: &str, b: &str) -> Option<f64> {
        let u = self.labels.iter().position(|l| l == a)?;
        let v = self.labels.iter().position(|l| l == b)?;
        self.ratios[u][v]
    }

    pub fn expected_pair(&self, a: &str, b: &str) -> Option<f64> {
        let u = self.labels.iter().position(|l| l == a)?;
        let v = self.labels.iter().position(|l| l == b)?;
        Some(self.expected[u][v])
    }
}

/// Random-mixing null model: with `p_x` the share of edge endpoints labelled
/// `x`, a same-label pair expects `E * p_u^2` edges and a mixed pair
/// `E * 2 * p_u * p_v`.
pub fn random_mixing_baseline(matrix: &MixingMatrix, marginals: &[u64]) -> Result<MixingBaseline, PrefsError> {
    let k = matrix.labels.len();
    if marginals.len() != k {
        return Err(PrefsError::MarginalLength { expected: k, found: marginals.len() });
    }
    let endpoints: u64 = marginals.iter().sum();
    let edges = matrix.total as f64;
    let share = |x: usize| if endpoints == 0 { 0.0 } else { marginals[x] as f64 / endpoints as f64 };
    let mut expected = vec![vec![0.0; k]; k];
    let mut ratios = vec![vec![None; k]; k];
    for u in 0..k {
        for v in 0..k {
            let e = if u == v { edges * share(u) * share(u) } else { edges * 2.0 * share(u) * share(v) };
            expected[u][v] = e;
            ratios[u][v] = (e > 0.0).then(|| matrix.cells[u][v] as f64 / e);
        }
    }
    Ok(MixingBaseline { labels: matrix.labels.clone(), expected, ratios })
}

/// Share of single–single edges among edges with at least one single endpoint.
pub fn single_single_share(status: &MixingMatrix) -> Option<f64> {
    let s = status.index_of(Status::Single.token())?;
    let touching: u64 = status.cells[s].iter().sum();
    (touching > 0).then(|| status.cells[s][s] as f64 / touching as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingResult {
    pub matrix: MixingMatrix,
    pub baseline: MixingBaseline,
}

impl MixingResult {
    fn new(matrix: MixingMatrix) -> Self {
        let marginals = matrix.endpoint_counts();
        let baseline = random_mixing_baseline(&matrix, &marginals).expect("marginals match labels");
        MixingResult { matrix, baseline }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceReport {
    pub gender: MixingResult,
    pub status: MixingResult,
    pub age_group: MixingResult,
    pub age_difference: AgeDiffHistogram,
    pub single_single_share: Option<f64>,
}

pub fn preference_report(dataset: &CommunityDataset) -> PreferenceReport {
    let status = status_mixing(dataset);
    PreferenceReport {
        gender: MixingResult::new(gender_mixing(dataset)),
        single_single_share: single_single_share(&status),
        status: MixingResult::new(status),
        age_group: MixingResult::new(age_group_mixing(dataset)),
        age_difference: age_difference_histogram(dataset),
    }
}
