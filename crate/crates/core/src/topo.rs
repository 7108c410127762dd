//! Friendship graph and its topology metrics.
//!
//! The adjacency structure is sparse (compressed neighbor lists); node `i`
//! is adjacent to `j` exactly when `j` appears in `neighbors(i)`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AccountId, CommunityDataset};
use crate::par::{self, Execution};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopoError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("no connected pairs")]
    NoConnectedPairs,
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("need at least 2 points with degree >= 1 and frequency >= 1, found {0}")]
    TooFewPoints(usize),
    #[error("removal fractions must lie in [0, 1) and be ascending: {0:?}")]
    BadFractions(Vec<String>),
    #[error("edge endpoint {0} is not a node")]
    UnknownNode(usize),
}

/// Immutable undirected graph over dense node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    ids: Vec<AccountId>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl AdjacencyGraph {
    /// Graph over all dataset nodes, stubs included; node indices follow
    /// ascending account id.
    pub fn from_dataset(dataset: &CommunityDataset) -> Self {
        let ids = dataset.node_ids();
        let index = |id| ids.binary_search(&id).expect("validated endpoint");
        let pairs: Vec<(usize, usize)> = dataset.edges().iter().map(|e| (index(e.a()), index(e.b()))).collect();
        Self::build(ids, &pairs)
    }

    /// Graph on `n` nodes with account ids `1..=n`. Self-loops and repeated
    /// pairs are dropped.
    pub fn from_index_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, TopoError> {
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n) {
            return Err(TopoError::UnknownNode(a.max(b)));
        }
        Ok(Self::build((1..=n as AccountId).collect(), edges))
    }

    fn build(ids: Vec<AccountId>, edges: &[(usize, usize)]) -> Self {
        let n = ids.len();
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b {
                lists[a].push(b as u32);
                lists[b].push(a as u32);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(2 * edges.len());
        offsets.push(0);
        for mut list in lists {
            list.sort_unstable();
            list.dedup();
            targets.extend(list);
            offsets.push(targets.len());
        }
        AdjacencyGraph { ids, offsets, targets }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn m(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn index_of(&self, id: AccountId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn account_id(&self, i: usize) -> AccountId {
        self.ids[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    /// Each edge once as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.neighbors(i).iter().map(|&j| j as usize).filter(move |&j| i < j).map(move |j| (i, j))
        })
    }
}

pub fn build_graph(dataset: &CommunityDataset) -> AdjacencyGraph {
    AdjacencyGraph::from_dataset(dataset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub min: usize,
    pub max: usize,
    /// `degree_sum / nodes`.
    pub avg: f64,
    /// Twice the edge count.
    pub degree_sum: u64,
    pub nodes: u64,
}

pub fn degree_stats(graph: &AdjacencyGraph) -> Result<DegreeStats, TopoError> {
    let n = graph.n();
    if n == 0 {
        return Err(TopoError::EmptyGraph);
    }
    let degrees = (0..n).map(|i| graph.degree(i));
    let degree_sum = 2 * graph.m() as u64;
    Ok(DegreeStats {
        min: degrees.clone().min().unwrap_or(0),
        max: degrees.max().unwrap_or(0),
        avg: degree_sum as f64 / n as f64,
        degree_sum,
        nodes: n as u64,
    })
}

/// Labels every node with its component, numbered in order of smallest
/// member index.
fn component_labels(graph: &AdjacencyGraph, removed: Option<&[bool]>) -> (Vec<usize>, Vec<usize>) {
    let n = graph.n();
    let gone = |i: usize| removed.is_some_and(|r| r[i]);
    let mut label = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if gone(start) || label[start] != usize::MAX {
            continue;
        }
        let c = sizes.len();
        label[start] = c;
        queue.push_back(start);
        let mut size = 0;
        while let Some(v) = queue.pop_front() {
            size += 1;
            for &w in graph.neighbors(v) {
                let w = w as usize;
                if !gone(w) && label[w] == usize::MAX {
                    label[w] = c;
                    queue.push_back(w);
                }
            }
        }
        sizes.push(size);
    }
    (label, sizes)
}

/// Component sizes, largest first (ties by smallest member index).
pub fn connected_components(graph: &AdjacencyGraph) -> Vec<usize> {
    let (_, mut sizes) = component_labels(graph, None);
    // stable: equal sizes keep discovery order
    sizes.sort_by(|a, b| b.cmp(a));
    sizes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PathMode {
    /// Traversal from every node; pairs are unordered.
    Exact,
    /// Traversal from a seeded uniform sample of sources; pairs are
    /// (source, target) and the maximum is a lower bound on the diameter.
    Sampled { sources: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLengthSummary {
    pub min: u32,
    pub avg: f64,
    pub max: u32,
    pub connected_pairs: u64,
    pub distance_sum: u64,
    /// `histogram[d]` pairs at distance `d`; `histogram[0]` is always 0.
    pub histogram: Vec<u64>,
    pub mode: PathMode,
}

fn merge_histograms(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    if a.len() < b.len() {
        return merge_histograms(b, a);
    }
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    a
}

struct BfsScratch {
    dist: Vec<u32>,
    queue: Vec<u32>,
}

/// Distances from `source`; when `only_above` is set only targets with a
/// larger index are tallied, so each unordered pair is seen once overall.
fn bfs_tally(graph: &AdjacencyGraph, source: usize, only_above: bool, s: &mut BfsScratch, hist: &mut Vec<u64>) {
    s.queue.clear();
    s.queue.push(source as u32);
    s.dist[source] = 0;
    let mut head = 0;
    while head < s.queue.len() {
        let v = s.queue[head] as usize;
        head += 1;
        let next = s.dist[v] + 1;
        for &w in graph.neighbors(v) {
            if s.dist[w as usize] == u32::MAX {
                s.dist[w as usize] = next;
                s.queue.push(w);
                if !only_above || w as usize > source {
                    let d = next as usize;
                    if hist.len() <= d {
                        hist.resize(d + 1, 0);
                    }
                    hist[d] += 1;
                }
            }
        }
    }
    for &v in &s.queue {
        s.dist[v as usize] = u32::MAX;
    }
}

pub fn path_length_summary(graph: &AdjacencyGraph, mode: PathMode) -> Result<PathLengthSummary, TopoError> {
    path_length_summary_with(Execution::default(), graph, mode)
}

pub fn path_length_summary_with(
    exec: Execution,
    graph: &AdjacencyGraph,
    mode: PathMode,
) -> Result<PathLengthSummary, TopoError> {
    let n = graph.n();
    if graph.m() == 0 {
        return Err(TopoError::NoConnectedPairs);
    }
    let (sources, only_above): (Vec<usize>, bool) = match mode {
        PathMode::Exact => ((0..n).collect(), true),
        PathMode::Sampled { sources, seed } => {
            if sources == 0 {
                return Err(TopoError::EmptySample);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = index::sample(&mut rng, n, sources.min(n)).into_vec();
            picked.sort_unstable();
            (picked, false)
        }
    };

    let histogram = par::fold(
        exec,
        &sources,
        || BfsScratch { dist: vec![u32::MAX; n], queue: Vec::with_capacity(n) },
        Vec::new,
        |mut hist, scratch, &src| {
            bfs_tally(graph, src, only_above, scratch, &mut hist);
            hist
        },
        merge_histograms,
    );
    summarize(histogram, mode)
}

fn summarize(histogram: Vec<u64>, mode: PathMode) -> Result<PathLengthSummary, TopoError> {
    let connected_pairs: u64 = histogram.iter().sum();
    if connected_pairs == 0 {
        return Err(TopoError::NoConnectedPairs);
    }
    let distance_sum: u64 = histogram.iter().enumerate().map(|(d, &c)| d as u64 * c).sum();
    let min = histogram.iter().position(|&c| c > 0).expect("non-empty") as u32;
    let max = histogram.iter().rposition(|&c| c > 0).expect("non-empty") as u32;
    Ok(PathLengthSummary {
        min,
        max,
        avg: distance_sum as f64 / connected_pairs as f64,
        connected_pairs,
        distance_sum,
        histogram,
        mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreePoint {
    pub degree: u64,
    pub frequency: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeDistribution {
    /// One point per observed degree, ascending.
    pub points: Vec<DegreePoint>,
}

impl DegreeDistribution {
    pub fn from_points(points: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut points: Vec<DegreePoint> =
            points.into_iter().map(|(degree, frequency)| DegreePoint { degree, frequency }).collect();
        points.sort_by_key(|p| p.degree);
        DegreeDistribution { points }
    }

    pub fn total(&self) -> u64 {
        self.points.iter().map(|p| p.frequency).sum()
    }

    /// Points usable on a log-log plot.
    pub fn loggable(&self) -> impl Iterator<Item = &DegreePoint> {
        self.points.iter().filter(|p| p.degree >= 1 && p.frequency >= 1)
    }
}

pub fn degree_distribution(graph: &AdjacencyGraph) -> DegreeDistribution {
    let mut counts = std::collections::BTreeMap::new();
    for i in 0..graph.n() {
        *counts.entry(graph.degree(i) as u64).or_insert(0u64) += 1;
    }
    DegreeDistribution::from_points(counts)
}

/// Least-squares line through `(log10 degree, log10 frequency)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Slope of the fitted line.
    pub lambda: f64,
    /// Intercept on the log10 frequency axis.
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

impl PowerLawFit {
    /// Fitted frequency `10^intercept * k^lambda`.
    pub fn predict(&self, degree: f64) -> f64 {
        10f64.powf(self.intercept) * degree.powf(self.lambda)
    }
}

pub fn fit_power_law(dist: &DegreeDistribution) -> Result<PowerLawFit, TopoError> {
    let pts: Vec<(f64, f64)> =
        dist.loggable().map(|p| ((p.degree as f64).log10(), (p.frequency as f64).log10())).collect();
    let n = pts.len();
    if n < 2 {
        return Err(TopoError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let lambda = sxy / sxx;
    let intercept = mean_y - lambda * mean_x;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - (intercept + lambda * p.0)).powi(2)).sum();
    // a flat line through identical frequencies fits perfectly
    let r_squared = if syy <= f64::EPSILON * nf { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(PowerLawFit { lambda, intercept, r_squared, points_used: n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RemovalStrategy {
    Random { seed: u64 },
    /// Highest current degree first, degrees recomputed once per step.
    HubFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub fraction: f64,
    pub removed: usize,
    pub remaining: usize,
    pub giant_size: usize,
    /// `giant_size / remaining`, or 0 when nothing remains.
    pub giant_share: f64,
}

fn check_fractions(fractions: &[f64]) -> Result<(), TopoError> {
    let in_range = fractions.iter().all(|f| (0.0..1.0).contains(f));
    let ascending = fractions.windows(2).all(|w| w[0] <= w[1]);
    if in_range && ascending {
        Ok(())
    } else {
        Err(TopoError::BadFractions(fractions.iter().map(|f| f.to_string()).collect()))
    }
}

/// Removes nodes cumulatively and reports the giant component after each
/// step. Step `f` brings the removed count to `round(f * n)`.
pub fn robustness_curve(
    graph: &AdjacencyGraph,
    strategy: RemovalStrategy,
    fractions: &[f64],
) -> Result<Vec<RobustnessPoint>, TopoError> {
    let n = graph.n();
    if n == 0 {
        return Err(TopoError::EmptyGraph);
    }
    check_fractions(fractions)?;
    let mut removed = vec![false; n];
    let mut removed_count = 0;
    let random_order = match strategy {
        RemovalStrategy::Random { seed } => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            Some(order)
        }
        RemovalStrategy::HubFirst => None,
    };

    let mut out = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let target = ((fraction * n as f64).round() as usize).min(n);
        if target > removed_count {
            let batch = target - removed_count;
            match &random_order {
                Some(order) => {
                    for &v in &order[removed_count..target] {
                        removed[v] = true;
                    }
                }
                None => {
                    let mut alive: Vec<(usize, usize)> = (0..n)
                        .filter(|&v| !removed[v])
                        .map(|v| (graph.neighbors(v).iter().filter(|&&w| !removed[w as usize]).count(), v))
                        .collect();
                    alive.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                    for &(_, v) in alive.iter().take(batch) {
                        removed[v] = true;
                    }
                }
            }
            removed_count = target;
        }
        let (_, sizes) = component_labels(graph, Some(&removed));
        let giant_size = sizes.into_iter().max().unwrap_or(0);
        let remaining = n - removed_count;
        out.push(RobustnessPoint {
            fraction,
            removed: removed_count,
            remaining,
            giant_size,
            giant_share: if remaining == 0 { 0.0 } else { giant_size as f64 / remaining as f64 },
        });
    }
    Ok(out)
}

/// Hub-first curve next to the random-removal curve averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurves {
    pub fractions: Vec<f64>,
    pub hub_first: Vec<RobustnessPoint>,
    pub random_seeds: Vec<u64>,
    /// Mean giant share over the random seeds at each fraction.
    pub random_mean_share: Vec<f64>,
}

impl RobustnessCurves {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("#fraction_removed\thub_first_giant_share\trandom_mean_giant_share\n");
        for (i, f) in self.fractions.iter().enumerate() {
            let _ = writeln!(out, "{f}\t{}\t{}", self.hub_first[i].giant_share, self.random_mean_share[i]);
        }
        out
    }
}

pub fn robustness_experiment(
    exec: Execution,
    graph: &AdjacencyGraph,
    fractions: &[f64],
    seeds: &[u64],
) -> Result<RobustnessCurves, TopoError> {
    let hub_first = robustness_curve(graph, RemovalStrategy::HubFirst, fractions)?;
    let random = par::map(exec, seeds, |&seed| robustness_curve(graph, RemovalStrategy::Random { seed }, fractions))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let random_mean_share = (0..fractions.len())
        .map(|i| {
            if random.is_empty() {
                0.0
            } else {
                random.iter().map(|c| c[i].giant_share).sum::<f64>() / random.len() as f64
            }
        })
        .collect();
    Ok(RobustnessCurves {
        fractions: fractions.to_vec(),
        hub_first,
        random_seeds: seeds.to_vec(),
        random_mean_share,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyOptions {
    pub path_mode: PathMode,
    pub robustness_fractions: Vec<f64>,
    pub robustness_seeds: Vec<u64>,
}

impl Default for TopologyOptions {
    fn default() -> Self {
        TopologyOptions {
            path_mode: PathMode::Exact,
            robustness_fractions: vec![0.01, 0.05, 0.1, 0.2],
            robustness_seeds: (0..10).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub nodes: u64,
    pub edges: u64,
    pub degree: DegreeStats,
    pub component_sizes: Vec<usize>,
    /// `None` when the graph has no edges.
    pub paths: Option<PathLengthSummary>,
    pub degree_distribution: DegreeDistribution,
    /// `None` when fewer than two loggable points exist.
    pub power_law: Option<PowerLawFit>,
    pub robustness: RobustnessCurves,
}

pub fn topology_report(dataset: &CommunityDataset, options: &TopologyOptions) -> Result<TopologyReport, TopoError> {
    let exec = Execution::default();
    let graph = build_graph(dataset);
    let distribution = degree_distribution(&graph);
    let paths = match path_length_summary_with(exec, &graph, options.path_mode) {
        Ok(p) => Some(p),
        Err(TopoError::NoConnectedPairs) => None,
        Err(e) => return Err(e),
    };
    Ok(TopologyReport {
        nodes: graph.n() as u64,
        edges: graph.m() as u64,
        degree: degree_stats(&graph)?,
        component_sizes: connected_components(&graph),
        paths,
        power_law: fit_power_law(&distribution).ok(),
        degree_distribution: distribution,
        robustness: robustness_experiment(exec, &graph, &options.robustness_fractions, &options.robustness_seeds)?,
    })
}
