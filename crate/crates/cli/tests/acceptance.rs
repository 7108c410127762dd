//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use friendnet_core::demog::{demography_report, AgeGroup, Attribute};
use friendnet_core::model::validate_dataset;
use friendnet_core::prefs::{age_difference_histogram, gender_mixing};
use friendnet_core::synth::{generate_community, GeneratorConfig};
use friendnet_core::topo::{
    build_graph, fit_power_law, path_length_summary, robustness_experiment, AdjacencyGraph, DegreeDistribution,
    PathMode,
};
use friendnet_core::{CommunityDataset, EndpointPolicy, Execution, Gender, Status, UserRecord};
use friendnet_mocknet::{crawl, max_in_window, serve_mock, CrawlError, CrawlSession, MockConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

const PRESET_SEEDS: std::ops::Range<u64> = 0..10;
const ROBUSTNESS_FRACTIONS: [f64; 3] = [0.01, 0.05, 0.10];
const RANDOM_GIANT_FLOOR: f64 = 0.9;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1 -------------------------------------------------------------------------

fn random_users(seed: u64, n: usize) -> CommunityDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = (1..=n as u64)
        .map(|id| {
            UserRecord::new(
                id * 7,
                format!("u{id}"),
                rng.random_range(8..=95),
                Gender::ALL[rng.random_range(0..2)],
                Status::ALL[rng.random_range(0..4)],
            )
        })
        .collect();
    validate_dataset(users, Vec::new(), EndpointPolicy::Strict).unwrap()
}

fn demography_oracle() -> Check {
    let data = random_users(500, 500);
    let report = demography_report(&data);
    let mut cells = 0;
    let mut worst_sum: f64 = 0.0;
    for family in report.families() {
        let uses = |a| family.attributes.contains(&a);
        for cell in &family.cells {
            let mut n = 0u64;
            for u in data.users() {
                let mut key = Vec::new();
                if uses(Attribute::Gender) {
                    key.push(u.gender.token().to_string());
                }
                if uses(Attribute::AgeGroup) {
                    let label = match u.age {
                        8..=25 => "8-25",
                        26..=40 => "26-40",
                        41..=64 => "41-64",
                        65..=80 => "65-80",
                        _ => continue,
                    };
                    key.push(label.to_string());
                }
                if uses(Attribute::Status) {
                    key.push(u.status.token().to_string());
                }
                if key == cell.key {
                    n += 1;
                }
            }
            ensure(n == cell.count, || format!("{} {:?}: {} vs oracle {n}", family.name(), cell.key, cell.count))?;
            cells += 1;
        }
        let sum: f64 = family.cells.iter().filter_map(|c| c.percent).sum();
        worst_sum = worst_sum.max((sum - 100.0).abs());
        ensure((sum - 100.0).abs() <= 0.05 + 1e-9, || format!("{} percentages sum to {sum}", family.name()))?;
    }
    let _ = AgeGroup::ALL;
    Ok(format!("{cells} cells equal the oracle; worst percent-sum deviation {worst_sum:.2e}"))
}

// 2 -------------------------------------------------------------------------

fn floyd_warshall_oracle() -> Check {
    const N: usize = 200;
    const INF: u32 = u32::MAX / 2;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = if seed % 5 == 0 { 0.008 } else { 0.02 };
        let edges: Vec<(usize, usize)> =
            (0..N).flat_map(|i| (i + 1..N).map(move |j| (i, j))).filter(|_| rng.random_bool(p)).collect();
        let mut d = vec![vec![INF; N]; N];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for &(a, b) in &edges {
            d[a][b] = 1;
            d[b][a] = 1;
        }
        for k in 0..N {
            for i in 0..N {
                for j in 0..N {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        let (mut pairs, mut sum, mut max) = (0u64, 0u64, 0u32);
        for i in 0..N {
            for j in i + 1..N {
                if d[i][j] < INF {
                    pairs += 1;
                    sum += u64::from(d[i][j]);
                    max = max.max(d[i][j]);
                }
            }
        }
        let graph = AdjacencyGraph::from_index_edges(N, &edges).unwrap();
        let s = path_length_summary(&graph, PathMode::Exact).map_err(|e| e.to_string())?;
        let avg = sum as f64 / pairs as f64;
        ensure(s.avg == avg && s.max == max, || {
            format!("seed {seed}: avg {} max {} vs oracle {avg} {max}", s.avg, s.max)
        })?;
    }
    Ok("20 graphs, avg and max identical to the oracle".into())
}

// 3 -------------------------------------------------------------------------

fn power_law_recovery() -> Check {
    let dist = DegreeDistribution::from_points((1..=100u64).map(|k| (k, (1e6 * (k as f64).powf(-1.02)).round() as u64)));
    let fit = fit_power_law(&dist).map_err(|e| e.to_string())?;
    ensure((fit.lambda + 1.02).abs() <= 0.02 && fit.r_squared >= 0.995, || {
        format!("lambda {} r2 {}", fit.lambda, fit.r_squared)
    })?;
    Ok(format!("lambda {:.5}, R^2 {:.6}", fit.lambda, fit.r_squared))
}

// 4 -------------------------------------------------------------------------

fn preset_marginals(datasets: &[CommunityDataset]) -> Check {
    let targets = [56.07, 14.26, 13.98, 15.69];
    let mut female = Vec::new();
    let mut status = vec![Vec::new(); 4];
    for data in datasets {
        let n = data.users().len() as f64;
        ensure(n == 7172.0, || format!("{n} users"))?;
        female.push(100.0 * data.users().iter().filter(|u| u.gender == Gender::Female).count() as f64 / n);
        for (i, s) in Status::ALL.iter().enumerate() {
            status[i].push(100.0 * data.users().iter().filter(|u| u.status == *s).count() as f64 / n);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let worst = |v: &[f64], t: f64| v.iter().map(|x| (x - t).abs()).fold(0.0, f64::max);
    ensure((mean(&female) - 52.34).abs() <= 1.5, || format!("female mean {:.2}", mean(&female)))?;
    for (i, t) in targets.iter().enumerate() {
        ensure((mean(&status[i]) - t).abs() <= 1.5, || format!("{} mean {:.2}", Status::ALL[i].token(), mean(&status[i])))?;
    }
    Ok(format!(
        "female {:.2} (max seed dev {:.2}); status {:.2}/{:.2}/{:.2}/{:.2} (max seed dev {:.2})",
        mean(&female),
        worst(&female, 52.34),
        mean(&status[0]),
        mean(&status[1]),
        mean(&status[2]),
        mean(&status[3]),
        (0..4).map(|i| worst(&status[i], targets[i])).fold(0.0, f64::max),
    ))
}

// 5 -------------------------------------------------------------------------

fn preset_topology(graphs: &[AdjacencyGraph]) -> Check {
    let mut lines = Vec::new();
    let (mut avgs, mut diameters, mut lambdas) = (Vec::new(), Vec::new(), Vec::new());
    for (seed, graph) in PRESET_SEEDS.zip(graphs) {
        let s = path_length_summary(graph, PathMode::Exact).map_err(|e| e.to_string())?;
        let fit = fit_power_law(&friendnet_core::topo::degree_distribution(graph)).map_err(|e| e.to_string())?;
        ensure((3.5..=5.5).contains(&s.avg) && s.max <= 14 && (-1.3..=-0.8).contains(&fit.lambda), || {
            format!("seed {seed}: avg {:.3} diameter {} lambda {:.3}", s.avg, s.max, fit.lambda)
        })?;
        avgs.push(s.avg);
        diameters.push(s.max);
        lambdas.push(fit.lambda);
    }
    let range = |v: &[f64]| (v.iter().copied().fold(f64::MAX, f64::min), v.iter().copied().fold(f64::MIN, f64::max));
    let (a0, a1) = range(&avgs);
    let (l0, l1) = range(&lambdas);
    lines.push(format!(
        "avg path [{a0:.2}, {a1:.2}], diameter [{}, {}], lambda [{l0:.3}, {l1:.3}]",
        diameters.iter().min().unwrap(),
        diameters.iter().max().unwrap()
    ));
    Ok(lines.join("; "))
}

// 6 -------------------------------------------------------------------------

const TOKEN: &str = "acceptance";
const RATE: u32 = 200;

async fn crawl_case(seed: u64, kill: Option<&str>, dir: &Path) -> Result<String, String> {
    let config = GeneratorConfig::preset("losbanos2008").unwrap().with_users(1000).with_seed(100 + seed);
    let data = generate_community(&config).map_err(|e| e.to_string())?;
    let server = serve_mock(&data, MockConfig::new(TOKEN), "127.0.0.1:0".parse().unwrap()).await.map_err(|e| e.to_string())?;
    let mut session = CrawlSession::new(server.base_url(), TOKEN, RATE);
    session.checkpoint = Some(dir.join(format!("crawl-{seed}.jsonl")));
    let mut grant_windows = Vec::new();

    match kill {
        Some("budget") => {
            session.request_budget = Some(550);
            match crawl(&session, EndpointPolicy::Strict).await {
                Err(CrawlError::Interrupted { .. }) => {}
                other => return Err(format!("expected interruption, got {:?}", other.map(|_| ()))),
            }
            session.request_budget = None;
        }
        Some("abort") => {
            // drop the crawl future midway, as a killed process would
            let run = crawl(&session, EndpointPolicy::Strict);
            if tokio::time::timeout(Duration::from_millis(2500), run).await.is_ok() {
                return Err("crawl finished before it could be killed".into());
            }
        }
        _ => {}
    }
    let before = server.request_log().len();
    let out = crawl(&session, EndpointPolicy::Strict).await.map_err(|e| e.to_string())?;
    ensure(out.dataset == data, || format!("seed {seed}: crawled dataset differs"))?;
    let times: Vec<Duration> = out.requests.iter().map(|r| r.at).collect();
    grant_windows.push(max_in_window(&times, Duration::from_secs(1)));
    let served = server.request_log();
    let total = served.len();
    let server_times: Vec<Duration> = served[before..].iter().map(|r| r.at).collect();
    let server_window = max_in_window(&server_times, Duration::from_secs(1));
    ensure(grant_windows.iter().all(|&w| w <= RATE as usize), || format!("seed {seed}: {grant_windows:?} per second"))?;
    ensure(total <= 100 + 1000 + 2 * 4, || format!("seed {seed}: {total} requests"))?;
    Ok(format!(
        "{}:{}req/max{}/s(server {})",
        kill.unwrap_or("clean"),
        total,
        grant_windows[0],
        server_window
    ))
}

fn crawl_losslessness() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| e.to_string())?;
    let kills = [None, None, None, Some("budget"), Some("abort")];
    let mut notes = Vec::new();
    for (seed, kill) in kills.into_iter().enumerate() {
        notes.push(rt.block_on(crawl_case(seed as u64, kill, dir.path()))?);
    }
    Ok(format!("5 datasets identical; {}", notes.join(" ")))
}

// 7 -------------------------------------------------------------------------

fn mixing_direction(datasets: &[CommunityDataset]) -> Check {
    let mut gender_ok = 0;
    let mut age_ok = 0;
    for data in datasets {
        let m = gender_mixing(data);
        let mf = m.pair("M", "F");
        if mf > m.pair("M", "M") && mf > m.pair("F", "F") {
            gender_ok += 1;
        }
        let h = age_difference_histogram(data);
        if h.within(10) > h.beyond(10) {
            age_ok += 1;
        }
    }
    ensure(gender_ok >= 9 && age_ok >= 9, || format!("gender {gender_ok}/10, age {age_ok}/10"))?;
    Ok(format!("MF > MM, FF in {gender_ok}/10 seeds; within-10-years majority in {age_ok}/10 seeds"))
}

// 8 -------------------------------------------------------------------------

/// Giant component after removal, by union–find over the edge list.
fn giant(n: usize, edges: &[(usize, usize)], removed: &[bool]) -> usize {
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in edges {
        if !removed[a] && !removed[b] {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
    }
    let mut size = HashMap::new();
    for v in (0..n).filter(|&v| !removed[v]) {
        *size.entry(find(&mut parent, v)).or_insert(0) += 1;
    }
    size.into_values().max().unwrap_or(0)
}

/// Hub-first shares from the definition: per step, rank alive nodes by
/// current degree (ties to the smaller index) and remove the top ones.
fn hub_first_oracle(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut removed = vec![false; n];
    let mut count = 0;
    let mut out = Vec::new();
    for f in ROBUSTNESS_FRACTIONS {
        let target = (f * n as f64).round() as usize;
        let mut degree = vec![0usize; n];
        for &(a, b) in edges {
            if !removed[a] && !removed[b] {
                degree[a] += 1;
                degree[b] += 1;
            }
        }
        let mut alive: Vec<usize> = (0..n).filter(|&v| !removed[v]).collect();
        alive.sort_by_key(|&v| (std::cmp::Reverse(degree[v]), v));
        for &v in alive.iter().take(target - count) {
            removed[v] = true;
        }
        count = target;
        out.push(giant(n, edges, &removed) as f64 / (n - count) as f64);
    }
    out
}

fn random_oracle(n: usize, edges: &[(usize, usize)], seed: u64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ROBUSTNESS_FRACTIONS
        .iter()
        .map(|f| {
            let k = (f * n as f64).round() as usize;
            let mut removed = vec![false; n];
            order[..k].iter().for_each(|&v| removed[v] = true);
            giant(n, edges, &removed) as f64 / (n - k) as f64
        })
        .collect()
}

fn robustness(graphs: &[AdjacencyGraph]) -> Check {
    let k = ROBUSTNESS_FRACTIONS.len();
    let (mut hub, mut random) = (vec![0.0; k], vec![0.0; k]);
    let seeds: Vec<u64> = (0..10).collect();
    for graph in graphs {
        let n = graph.n();
        let edges: Vec<(usize, usize)> = graph.edges().collect();
        let curves = robustness_experiment(Execution::default(), graph, &ROBUSTNESS_FRACTIONS, &seeds)
            .map_err(|e| e.to_string())?;
        let hub_oracle = hub_first_oracle(n, &edges);
        let mut random_mean = vec![0.0; k];
        for &s in &seeds {
            for (i, share) in random_oracle(n, &edges, s).into_iter().enumerate() {
                random_mean[i] += share / seeds.len() as f64;
            }
        }
        for i in 0..k {
            ensure(curves.hub_first[i].giant_share == hub_oracle[i], || {
                format!("hub-first share {} vs oracle {}", curves.hub_first[i].giant_share, hub_oracle[i])
            })?;
            ensure((curves.random_mean_share[i] - random_mean[i]).abs() < 1e-12, || {
                format!("random share {} vs oracle {}", curves.random_mean_share[i], random_mean[i])
            })?;
            hub[i] += hub_oracle[i] / graphs.len() as f64;
            random[i] += random_mean[i] / graphs.len() as f64;
        }
    }
    for i in 0..k {
        ensure(hub[i] <= random[i], || format!("at {}: hub-first {} > random {}", ROBUSTNESS_FRACTIONS[i], hub[i], random[i]))?;
    }
    ensure(random[1] >= RANDOM_GIANT_FLOOR, || format!("random 5% share {}", random[1]))?;
    Ok(format!(
        "hub-first {:.3}/{:.3}/{:.3} vs random {:.4}/{:.4}/{:.4} at 1/5/10%; library equals union-find oracle",
        hub[0], hub[1], hub[2], random[0], random[1], random[2]
    ))
}

// 9 -------------------------------------------------------------------------

fn friendnet(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_friendnet")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn without_timestamp(text: &str) -> String {
    text.lines().filter(|l| !l.trim_start().starts_with("\"timestamp\"")).collect::<Vec<_>>().join("\n")
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| dir.path().join(s).display().to_string();
    for run in ["d1", "d2"] {
        friendnet(&["generate", "--seed", "42", "--users", "1500", "--out", &p(run)])?;
    }
    for f in ["users.csv", "edges.csv"] {
        let a = std::fs::read(dir.path().join("d1").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("d2").join(f)).unwrap();
        ensure(a == b, || format!("generated {f} differs"))?;
    }
    let (users, edges) = (p("d1/users.csv"), p("d1/edges.csv"));
    for run in ["r1", "r2"] {
        friendnet(&["report", "--users", &users, "--edges", &edges, "--seed", "5", "--out", &p(run)])?;
    }
    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("r1"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for name in &names {
        let a = std::fs::read_to_string(dir.path().join("r1").join(name)).unwrap();
        let b = std::fs::read_to_string(dir.path().join("r2").join(name)).map_err(|e| format!("{name}: {e}"))?;
        let same = if name == "report.json" { without_timestamp(&a) == without_timestamp(&b) } else { a == b };
        ensure(same, || format!("{name} differs between runs"))?;
    }
    Ok(format!("generate and report outputs identical across runs ({} report files)", names.len()))
}

// ---------------------------------------------------------------------------

struct Runner {
    failed: Vec<u32>,
}

impl Runner {
    fn run(&mut self, id: u32, name: &str, budget: Duration, check: impl FnOnce() -> Check) {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (status, detail) = match result {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {elapsed:.1?}, budget {budget:?}")),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            self.failed.push(id);
        }
        println!("criterion {id} {name:<28} {status} [{:.2}s] {detail}", elapsed.as_secs_f64());
    }
}

fn main() {
    let mut r = Runner { failed: Vec::new() };
    r.run(1, "demography oracle", Duration::from_secs(1), demography_oracle);
    r.run(2, "path-length oracle", Duration::from_secs(10), floyd_warshall_oracle);
    r.run(3, "power-law recovery", Duration::from_secs(1), power_law_recovery);

    let mut datasets = Vec::new();
    r.run(4, "preset marginals", Duration::from_secs(30), || {
        for seed in PRESET_SEEDS {
            let config = GeneratorConfig::preset("losbanos2008").unwrap().with_seed(seed);
            datasets.push(generate_community(&config).map_err(|e| e.to_string())?);
        }
        preset_marginals(&datasets)
    });
    if datasets.len() != PRESET_SEEDS.count() {
        println!("preset generation failed; criteria 5, 7 and 8 cannot run");
        std::process::exit(1);
    }
    let graphs: Vec<AdjacencyGraph> = datasets.iter().map(build_graph).collect();
    r.run(5, "preset topology", Duration::from_secs(120), || preset_topology(&graphs));
    r.run(6, "crawl losslessness", Duration::from_secs(120), crawl_losslessness);
    r.run(7, "mixing direction", Duration::from_secs(60), || mixing_direction(&datasets));
    r.run(8, "robustness", Duration::from_secs(120), || robustness(&graphs));
    r.run(9, "determinism", Duration::from_secs(120), determinism);

    if r.failed.is_empty() {
        println!("acceptance: all 9 criteria passed");
    } else {
        println!("acceptance: failed criteria {:?}", r.failed);
        std::process::exit(1);
    }
}
