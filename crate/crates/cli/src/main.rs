use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use friendnet_core::demog::demography_report;
use friendnet_core::model::load_dataset;
use friendnet_core::prefs::preference_report;
use friendnet_core::report::{
    analyze, demography_files, emit_plot_data, file_sha256, preference_files, topology_files, InputSource,
};
use friendnet_core::synth::{generate_community, GeneratorConfig};
use friendnet_core::topo::{topology_report, PathMode, TopologyOptions};
use friendnet_core::{CommunityDataset, EndpointPolicy};
use friendnet_mocknet::{crawl, serve_mock, CrawlSession, MockConfig};

/// Above this many nodes the path mode must be chosen explicitly.
const EXACT_DEFAULT_LIMIT: usize = 50_000;

#[derive(Parser)]
#[command(name = "friendnet", version, about = "Crawl, generate and analyse friendship networks")]
struct Cli {
    /// Seed for generation, path sampling and random-removal runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Strict,
    Stub,
}

impl From<Policy> for EndpointPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Strict => EndpointPolicy::Strict,
            Policy::Stub => EndpointPolicy::Stub,
        }
    }
}

#[derive(Args)]
struct Input {
    #[arg(long)]
    users: PathBuf,
    #[arg(long)]
    edges: PathBuf,
    /// How friends without a user row are treated.
    #[arg(long, value_enum, default_value_t = Policy::Stub)]
    policy: Policy,
}

#[derive(Args)]
struct PathChoice {
    /// Traverse from every node.
    #[arg(long, conflicts_with = "sample")]
    exact: bool,
    /// Traverse from K sampled sources instead.
    #[arg(long, value_name = "K")]
    sample: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic community into --out.
    Generate {
        #[arg(long, default_value = "losbanos2008", conflicts_with = "config")]
        preset: String,
        /// Generator config file (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the number of users.
        #[arg(long, value_name = "N")]
        users: Option<usize>,
    },
    /// Serve a dataset through the mock profile service.
    ServeMock {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        token: String,
        #[arg(long, default_value_t = friendnet_mocknet::DEFAULT_PAGE_SIZE)]
        page_size: usize,
    },
    /// Crawl a profile service into users.csv and edges.csv under --out.
    Crawl {
        #[arg(long)]
        url: String,
        #[arg(long)]
        token: String,
        /// Requests per second.
        #[arg(long, default_value_t = 5)]
        rate: u32,
        #[arg(long, default_value_t = 3)]
        max_retries: u32,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        /// Defaults to crawl.checkpoint.jsonl under --out.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Policy::Stub)]
        policy: Policy,
    },
    /// Demographic counts and percentages.
    Demography {
        #[command(flatten)]
        input: Input,
    },
    /// Mixing matrices, baselines and age differences.
    Preferences {
        #[command(flatten)]
        input: Input,
    },
    /// Degrees, path lengths, power-law fit and robustness.
    Topology {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        paths: PathChoice,
    },
    /// Every analysis: report.json plus plot files under --out.
    Report {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        paths: PathChoice,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Generate { preset, config, users } => generate(&cli, preset, config.as_deref(), *users),
        Command::ServeMock { input, port, token, page_size } => serve(input, *port, token, *page_size),
        Command::Crawl { url, token, rate, max_retries, concurrency, checkpoint, policy } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let mut session = CrawlSession::new(url.clone(), token.clone(), *rate);
            session.max_retries = *max_retries;
            session.concurrency = *concurrency;
            session.checkpoint = Some(checkpoint.clone().unwrap_or_else(|| out.join("crawl.checkpoint.jsonl")));
            run_crawl(session, (*policy).into(), &out)
        }
        Command::Demography { input } => {
            let data = load(input)?;
            let report = demography_report(&data);
            emit(&cli, "demography", &report, demography_files(&report))
        }
        Command::Preferences { input } => {
            let data = load(input)?;
            let report = preference_report(&data);
            emit(&cli, "preferences", &report, preference_files(&report))
        }
        Command::Topology { input, paths } => {
            let data = load(input)?;
            let report = topology_report(&data, &topology_options(&cli, paths, data.n_users())?)?;
            emit(&cli, "topology", &report, topology_files(&report))
        }
        Command::Report { input, paths } => full_report(&cli, input, paths),
    }
}

fn load(input: &Input) -> Result<CommunityDataset> {
    let loaded = load_dataset(&input.users, &input.edges, input.policy.into())
        .with_context(|| format!("loading {} and {}", input.users.display(), input.edges.display()))?;
    for d in loaded.user_diagnostics.iter().chain(&loaded.edge_diagnostics) {
        eprintln!("warning: {d}");
    }
    Ok(loaded.dataset)
}

fn topology_options(cli: &Cli, paths: &PathChoice, n: usize) -> Result<TopologyOptions> {
    let seed = cli.seed.unwrap_or(0);
    let path_mode = match paths.sample {
        Some(sources) => PathMode::Sampled { sources, seed },
        None if paths.exact || n <= EXACT_DEFAULT_LIMIT => PathMode::Exact,
        None => bail!("{n} nodes: pass --exact or --sample K to choose how path lengths are measured"),
    };
    Ok(TopologyOptions { path_mode, robustness_seeds: (seed..seed + 10).collect(), ..TopologyOptions::default() })
}

fn write_files(dir: &Path, files: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, body) in files {
        fs::write(dir.join(name), body).with_context(|| format!("writing {name}"))?;
    }
    Ok(())
}

fn emit<T: serde::Serialize>(cli: &Cli, name: &str, value: &T, tsv: Vec<(String, String)>) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    match (cli.format, &cli.out) {
        (Format::Json, Some(dir)) => write_files(dir, &[(format!("{name}.json"), json)]),
        (Format::Json, None) => {
            print!("{json}");
            Ok(())
        }
        (Format::Tsv, Some(dir)) => write_files(dir, &tsv),
        (Format::Tsv, None) => {
            for (_, body) in tsv {
                print!("{body}");
            }
            Ok(())
        }
    }
}

fn generate(cli: &Cli, preset: &str, config: Option<&Path>, users: Option<usize>) -> Result<()> {
    let mut config = match config {
        Some(path) => GeneratorConfig::from_file(path)?,
        None => GeneratorConfig::preset(preset)?,
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    if let Some(n) = users {
        config = config.with_users(n);
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let data = generate_community(&config)?;
    data.save(&out)?;
    eprintln!(
        "generated {} users and {} edges (seed {}) into {}",
        data.users().len(),
        data.n_edges(),
        config.seed,
        out.display()
    );
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn serve(input: &Input, port: u16, token: &str, page_size: usize) -> Result<()> {
    let data = load(input)?;
    runtime()?.block_on(async {
        let config = MockConfig { page_size, ..MockConfig::new(token) };
        let server = serve_mock(&data, config, SocketAddr::from(([127, 0, 0, 1], port))).await?;
        eprintln!("serving {} profiles at {} (ctrl-c to stop)", data.users().len(), server.base_url());
        server
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn run_crawl(session: CrawlSession, policy: EndpointPolicy, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let outcome = runtime()?.block_on(crawl(&session, policy))?;
    outcome.dataset.save(out)?;
    eprintln!(
        "crawled {} users, {} edges, {} stubs with {} requests ({} pages and {} profiles resumed)",
        outcome.dataset.users().len(),
        outcome.dataset.n_edges(),
        outcome.dataset.stubs().len(),
        outcome.requests.len(),
        outcome.resumed_pages,
        outcome.resumed_profiles,
    );
    Ok(())
}

fn full_report(cli: &Cli, input: &Input, paths: &PathChoice) -> Result<()> {
    let data = load(input)?;
    let source = InputSource::Files {
        users_path: input.users.display().to_string(),
        edges_path: input.edges.display().to_string(),
        users_sha256: file_sha256(&input.users)?,
        edges_sha256: file_sha256(&input.edges)?,
    };
    let report = analyze(&data, source, &topology_options(cli, paths, data.n_users())?)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out)?;
    fs::write(out.join("report.json"), report.to_json())?;
    emit_plot_data(&report, &out)?;
    eprintln!(
        "report for {} users, digest {}, written to {}",
        report.dataset.n_users,
        &report.provenance.dataset_digest.0[..12],
        out.display()
    );
    Ok(())
}
