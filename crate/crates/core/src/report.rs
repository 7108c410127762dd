//! The combined analysis document and its plot-ready TSV files.
//!
//! Every section is tagged with the digest of the dataset it was computed
//! from; assembling sections from different datasets is an error. Apart from
//! `provenance.timestamp`, the JSON output is a pure function of the inputs
//! and seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::demog::{demography_report, DemographyReport};
use crate::model::{CommunityDataset, DatasetDigest};
use crate::prefs::{preference_report, PreferenceReport};
use crate::topo::{topology_report, PathMode, TopoError, TopologyOptions, TopologyReport};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// JSON schema the report document conforms to.
pub const REPORT_SCHEMA: &str = include_str!("../../../schema/report.schema.json");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("section {section} was computed from dataset {found}, expected {expected}")]
    DigestMismatch { section: &'static str, expected: DatasetDigest, found: DatasetDigest },
    #[error(transparent)]
    Topology(#[from] TopoError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A result together with the digest of the dataset that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Digested<T> {
    pub digest: DatasetDigest,
    pub value: T,
}

impl<T> Digested<T> {
    pub fn compute(dataset: &CommunityDataset, f: impl FnOnce(&CommunityDataset) -> T) -> Self {
        Digested { digest: dataset.digest(), value: f(dataset) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    /// All nodes, stubs included.
    pub n_users: u64,
    pub n_profiles: u64,
    pub n_stubs: u64,
    pub n_edges: u64,
}

impl DatasetSummary {
    pub fn of(dataset: &CommunityDataset) -> Self {
        DatasetSummary {
            n_users: dataset.n_users() as u64,
            n_profiles: dataset.users().len() as u64,
            n_stubs: dataset.stubs().len() as u64,
            n_edges: dataset.n_edges() as u64,
        }
    }
}

/// Where the input came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputSource {
    Files { users_path: String, edges_path: String, users_sha256: String, edges_sha256: String },
    Generated { config_name: Option<String>, seed: u64, users_sha256: String, edges_sha256: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input: InputSource,
    pub dataset_digest: DatasetDigest,
    pub path_mode: PathMode,
    pub robustness_seeds: Vec<u64>,
    pub tool_version: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub dataset: DatasetSummary,
    pub demography: DemographyReport,
    pub preferences: PreferenceReport,
    pub topology: TopologyReport,
    pub provenance: Provenance,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String, std::io::Error> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Sections to assemble into a report.
#[derive(Debug, Clone)]
pub struct ReportParts {
    pub dataset: Digested<DatasetSummary>,
    pub demography: Digested<DemographyReport>,
    pub preferences: Digested<PreferenceReport>,
    pub topology: Digested<TopologyReport>,
    pub input: InputSource,
    pub topology_options: TopologyOptions,
    pub timestamp: String,
}

/// Assembles a report, refusing sections computed from different datasets.
pub fn emit_report(parts: ReportParts) -> Result<AnalysisReport, ReportError> {
    let expected = parts.dataset.digest.clone();
    let check = |section: &'static str, found: &DatasetDigest| {
        if *found == expected {
            Ok(())
        } else {
            Err(ReportError::DigestMismatch { section, expected: expected.clone(), found: found.clone() })
        }
    };
    check("demography", &parts.demography.digest)?;
    check("preferences", &parts.preferences.digest)?;
    check("topology", &parts.topology.digest)?;
    Ok(AnalysisReport {
        dataset: parts.dataset.value,
        demography: parts.demography.value,
        preferences: parts.preferences.value,
        topology: parts.topology.value,
        provenance: Provenance {
            input: parts.input,
            dataset_digest: expected,
            path_mode: parts.topology_options.path_mode,
            robustness_seeds: parts.topology_options.robustness_seeds,
            tool_version: TOOL_VERSION.to_string(),
            timestamp: parts.timestamp,
        },
    })
}

pub fn now_timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Runs every analysis over one dataset and assembles the report.
pub fn analyze(
    dataset: &CommunityDataset,
    input: InputSource,
    options: &TopologyOptions,
) -> Result<AnalysisReport, ReportError> {
    let digest = dataset.digest();
    emit_report(ReportParts {
        dataset: Digested { digest: digest.clone(), value: DatasetSummary::of(dataset) },
        demography: Digested { digest: digest.clone(), value: demography_report(dataset) },
        preferences: Digested { digest: digest.clone(), value: preference_report(dataset) },
        topology: Digested { digest: digest.clone(), value: topology_report(dataset, options)? },
        input,
        topology_options: options.clone(),
        timestamp: now_timestamp(),
    })
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Writes one TSV per figure family into `dir`, derived from the report
/// alone. Returns the written paths in a fixed order.
pub fn emit_plot_data(report: &AnalysisReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, body) in plot_files(report) {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// File name and contents of every plot file.
pub fn plot_files(report: &AnalysisReport) -> Vec<(String, String)> {
    let mut files = demography_files(&report.demography);
    files.extend(preference_files(&report.preferences));
    files.extend(topology_files(&report.topology));
    files
}

pub fn demography_files(demography: &DemographyReport) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = demography
        .families()
        .iter()
        .map(|family| (format!("demography_{}.tsv", family.name()), family.to_tsv()))
        .collect();
    files.push(("age_curves.tsv".into(), age_curves_tsv(demography)));
    files
}

pub fn preference_files(prefs: &PreferenceReport) -> Vec<(String, String)> {
    vec![
        ("gender_mixing.tsv".into(), prefs.gender.matrix.to_tsv()),
        ("status_mixing.tsv".into(), prefs.status.matrix.to_tsv()),
        ("age_group_mixing.tsv".into(), prefs.age_group.matrix.to_tsv()),
        ("age_difference.tsv".into(), prefs.age_difference.to_tsv()),
    ]
}

pub fn topology_files(topo: &TopologyReport) -> Vec<(String, String)> {
    let mut files = Vec::new();
    let mut degree = String::from("#degree\tfrequency\n");
    for p in topo.degree_distribution.loggable() {
        let _ = writeln!(degree, "{}\t{}", p.degree, p.frequency);
    }
    files.push(("degree_distribution.tsv".into(), degree));

    let mut fit = String::from("#degree\tfitted_frequency\n");
    if let Some(pl) = &topo.power_law {
        for p in topo.degree_distribution.loggable() {
            let _ = writeln!(fit, "{}\t{}", p.degree, pl.predict(p.degree as f64));
        }
    }
    files.push(("degree_fit.tsv".into(), fit));

    let mut paths = String::from("#distance\tpairs\n");
    if let Some(summary) = &topo.paths {
        for (d, c) in summary.histogram.iter().enumerate().skip(1) {
            let _ = writeln!(paths, "{d}\t{c}");
        }
    }
    files.push(("path_lengths.tsv".into(), paths));
    files.push(("robustness.tsv".into(), topo.robustness.to_tsv()));
    files
}

fn age_curves_tsv(demography: &DemographyReport) -> String {
    let mut out = String::from(
        "#age\tcount\tmale\tfemale\tsingle\tmarried\tiar\tunknown\t\
         male_single\tmale_married\tmale_iar\tmale_unknown\t\
         female_single\tfemale_married\tfemale_iar\tfemale_unknown\n",
    );
    for row in &demography.age_profile {
        let _ = write!(out, "{}\t{}\t{}\t{}", row.age, row.count, row.by_gender[0], row.by_gender[1]);
        for c in row.by_status.iter().chain(row.by_gender_status.iter().flatten()) {
            let _ = write!(out, "\t{c}");
        }
        out.push('\n');
    }
    out
}
