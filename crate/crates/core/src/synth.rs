//! Seeded generator of synthetic communities.
//!
//! Users get a gender, an age drawn from a normal mixture and a status drawn
//! conditionally on age. Friendships grow by preferential attachment from an
//! initial clique: every arriving user links to `m` distinct earlier users,
//! each candidate weighted by
//! `(degree + 1)^degree_exponent * exp(-|age gap| / age_kernel_scale) * gender_factor * status_affinity`
//! (`degree_exponent` defaults to 1).

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    validate_dataset, AccountId, CommunityDataset, EndpointPolicy, FriendEdge, Gender, Status, UserRecord,
    MAX_AGE, MIN_AGE,
};

const PROB_TOLERANCE: f64 = 1e-9;

const LOSBANOS2008: &str = include_str!("../../../presets/losbanos2008.toml");

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

/// One normal component of the age mixture, in years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeComponent {
    pub weight: f64,
    pub mean: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeModel {
    pub min: u16,
    pub max: u16,
    pub components: Vec<AgeComponent>,
}

/// Status probabilities for ages up to and including `up_to_age`, in the
/// order single, married, iar, unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusBand {
    pub up_to_age: u16,
    pub probs: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeModel {
    pub attachment_degree: usize,
    pub age_kernel_scale: f64,
    pub gender_heterophily_weight: f64,
    /// Exponent applied to `degree + 1`; 1 is linear preferential attachment.
    #[serde(default = "default_degree_exponent")]
    pub degree_exponent: f64,
    /// Multiplier indexed `[status of arriving user][status of candidate]`.
    pub status_affinity: [[f64; 4]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub n_users: usize,
    pub seed: u64,
    /// Probability that a user is female.
    pub gender_split: f64,
    #[serde(default = "default_first_id")]
    pub first_account_id: AccountId,
    pub age: AgeModel,
    pub status_given_age: Vec<StatusBand>,
    #[serde(default)]
    pub edge_model: Option<EdgeModel>,
}

fn default_first_id() -> AccountId {
    1
}

fn default_degree_exponent() -> f64 {
    1.0
}

impl GeneratorConfig {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let config: GeneratorConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, SynthError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// A preset shipped with the crate, by name.
    pub fn preset(name: &str) -> Result<Self, SynthError> {
        match name {
            "losbanos2008" => Self::from_toml(LOSBANOS2008),
            other => Err(SynthError::UnknownPreset(other.to_string())),
        }
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["losbanos2008"]
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_users(mut self, n_users: usize) -> Self {
        self.n_users = n_users;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid = |msg: String| Err(SynthError::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.gender_split) {
            return invalid(format!("gender_split {} outside [0, 1]", self.gender_split));
        }
        if self.first_account_id == 0 {
            return invalid("first_account_id must be positive".into());
        }
        let age = &self.age;
        if age.min < MIN_AGE || age.max > MAX_AGE || age.min > age.max {
            return invalid(format!("age range [{}, {}] not within [{MIN_AGE}, {MAX_AGE}]", age.min, age.max));
        }
        if age.components.is_empty() {
            return invalid("age mixture has no components".into());
        }
        if age.components.iter().any(|c| c.weight < 0.0 || c.spread <= 0.0 || !c.mean.is_finite()) {
            return invalid("age components need weight >= 0, spread > 0 and a finite mean".into());
        }
        let total: f64 = age.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return invalid(format!("age mixture weights sum to {total}, not 1"));
        }
        if self.status_given_age.is_empty() {
            return invalid("status_given_age is empty".into());
        }
        let mut prev = None;
        for band in &self.status_given_age {
            if prev.is_some_and(|p| band.up_to_age <= p) {
                return invalid("status bands must have increasing up_to_age".into());
            }
            prev = Some(band.up_to_age);
            if band.probs.iter().any(|&p| p < 0.0) {
                return invalid(format!("negative status probability in band up to {}", band.up_to_age));
            }
            let total: f64 = band.probs.iter().sum();
            if (total - 1.0).abs() > PROB_TOLERANCE {
                return invalid(format!("status band up to {} sums to {total}, not 1", band.up_to_age));
            }
        }
        if prev.is_some_and(|p| p < age.max) {
            return invalid(format!("status bands stop before the maximum age {}", age.max));
        }
        if let Some(edges) = &self.edge_model {
            let m = edges.attachment_degree;
            if m < 1 {
                return invalid("attachment_degree must be at least 1".into());
            }
            if self.n_users < m + 1 {
                return invalid(format!("n_users {} must exceed attachment_degree {m}", self.n_users));
            }
            if edges.age_kernel_scale.is_nan() || edges.age_kernel_scale <= 0.0 {
                return invalid("age_kernel_scale must be positive".into());
            }
            if edges.gender_heterophily_weight.is_nan() || edges.gender_heterophily_weight < 0.0 {
                return invalid("gender_heterophily_weight must be >= 0".into());
            }
            if !edges.degree_exponent.is_finite() || edges.degree_exponent < 0.0 {
                return invalid("degree_exponent must be finite and >= 0".into());
            }
            if edges.status_affinity.iter().flatten().any(|&w| w.is_nan() || w < 0.0) {
                return invalid("status_affinity entries must be >= 0".into());
            }
        }
        Ok(())
    }

    fn status_probs(&self, age: u16) -> &[f64; 4] {
        let band = self
            .status_given_age
            .iter()
            .find(|b| age <= b.up_to_age)
            .unwrap_or_else(|| self.status_given_age.last().expect("validated non-empty"));
        &band.probs
    }
}

fn pick_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding can leave u marginally above the last weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn sample_age(rng: &mut ChaCha8Rng, model: &AgeModel) -> u16 {
    let weights: Vec<f64> = model.components.iter().map(|c| c.weight).collect();
    for _ in 0..1000 {
        let c = &model.components[pick_index(rng, &weights)];
        let x = Normal::new(c.mean, c.spread).expect("validated spread").sample(rng).round();
        if x >= f64::from(model.min) && x <= f64::from(model.max) {
            return x as u16;
        }
    }
    // components far outside the range; clamp rather than loop forever
    let c = &model.components[pick_index(rng, &weights)];
    c.mean.round().clamp(f64::from(model.min), f64::from(model.max)) as u16
}

struct Member {
    age: u16,
    gender: Gender,
    status: Status,
}

/// Generates a community. The same config always yields the same dataset.
pub fn generate_community(config: &GeneratorConfig) -> Result<CommunityDataset, SynthError> {
    config.validate()?;
    let n = config.n_users;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let members: Vec<Member> = (0..n)
        .map(|_| {
            let gender = if rng.random::<f64>() < config.gender_split { Gender::Female } else { Gender::Male };
            let age = sample_age(&mut rng, &config.age);
            let status = Status::ALL[pick_index(&mut rng, config.status_probs(age))];
            Member { age, gender, status }
        })
        .collect();

    // arrival order must not leak into account ids
    let mut ids: Vec<AccountId> = (0..n as AccountId).map(|k| config.first_account_id + k).collect();
    ids.shuffle(&mut rng);

    let mut edges = Vec::new();
    if let Some(model) = &config.edge_model {
        for (i, j) in attach(&mut rng, &members, model, config.age.max - config.age.min) {
            edges.push(FriendEdge::new(ids[i], ids[j]).expect("distinct arrivals"));
        }
    }

    let users = members
        .iter()
        .zip(&ids)
        .map(|(m, &id)| UserRecord::new(id, format!("user{id}"), m.age, m.gender, m.status))
        .collect();
    validate_dataset(users, edges, EndpointPolicy::Strict)
        .map_err(|e| SynthError::InvalidConfig(format!("generated dataset failed validation: {e}")))
}

/// Preferential attachment over arrival indices; returns `(new, existing)` pairs.
fn attach(rng: &mut ChaCha8Rng, members: &[Member], model: &EdgeModel, age_span: u16) -> Vec<(usize, usize)> {
    let n = members.len();
    let m = model.attachment_degree;
    let kernel: Vec<f64> = (0..=age_span).map(|d| (-f64::from(d) / model.age_kernel_scale).exp()).collect();
    let mut degree = vec![0usize; n];
    // (degree + 1)^exponent, refreshed whenever a degree changes
    let mut pref = vec![1.0f64; n];
    let bump = |degree: &mut [usize], pref: &mut [f64], v: usize| {
        degree[v] += 1;
        pref[v] = ((degree[v] + 1) as f64).powf(model.degree_exponent);
    };
    let mut out = Vec::with_capacity(m * n.saturating_sub(m) + m * m.saturating_sub(1) / 2);

    for i in 0..m {
        for j in 0..i {
            out.push((i, j));
            bump(&mut degree, &mut pref, i);
            bump(&mut degree, &mut pref, j);
        }
    }

    let mut cumulative = Vec::with_capacity(n);
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    for i in m..n {
        let me = &members[i];
        cumulative.clear();
        let mut total = 0.0;
        let mut positive = 0usize;
        for (j, other) in members[..i].iter().enumerate() {
            let gap = me.age.abs_diff(other.age) as usize;
            let gender = if me.gender == other.gender { 1.0 } else { model.gender_heterophily_weight };
            let w = pref[j]
                * kernel[gap]
                * gender
                * model.status_affinity[me.status.index()][other.status.index()];
            if w > 0.0 {
                positive += 1;
            }
            total += w;
            cumulative.push(total);
        }

        chosen.clear();
        if positive <= m {
            // not enough weighted candidates: take them all, fill uniformly
            chosen.extend((0..i).filter(|&j| weight_at(&cumulative, j) > 0.0));
            while chosen.len() < m {
                let j = rng.random_range(0..i);
                if !chosen.contains(&j) {
                    chosen.push(j);
                }
            }
            chosen.truncate(m);
        } else {
            let mut draws = 0;
            while chosen.len() < m && draws < MAX_DRAWS * m {
                draws += 1;
                let u = rng.random::<f64>() * total;
                let j = cumulative.partition_point(|&c| c <= u).min(i - 1);
                if weight_at(&cumulative, j) > 0.0 && !chosen.contains(&j) {
                    chosen.push(j);
                }
            }
            // a hub can dwarf the rest below float resolution; take the heaviest left
            while chosen.len() < m {
                let j = (0..i)
                    .filter(|j| !chosen.contains(j))
                    .max_by(|&a, &b| weight_at(&cumulative, a).total_cmp(&weight_at(&cumulative, b)))
                    .unwrap();
                chosen.push(j);
            }
        }
        for &j in &chosen {
            out.push((i, j));
            bump(&mut degree, &mut pref, i);
            bump(&mut degree, &mut pref, j);
        }
    }
    out
}

/// Rejected draws per edge before falling back to a deterministic pick.
const MAX_DRAWS: usize = 64;

fn weight_at(cumulative: &[f64], j: usize) -> f64 {
    if j == 0 {
        cumulative[0]
    } else {
        cumulative[j] - cumulative[j - 1]
    }
}
