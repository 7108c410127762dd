//! Frequency and percentage statistics over users: by gender, age group and
//! relationship status, plus every compound intersection of the three.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CommunityDataset, Gender, Status, UserRecord};
use crate::par::{self, Execution};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DemogError {
    #[error("attribute set is empty")]
    EmptyAttributes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeGroup {
    #[serde(rename = "8-25")]
    G8To25,
    #[serde(rename = "26-40")]
    G26To40,
    #[serde(rename = "41-64")]
    G41To64,
    #[serde(rename = "65-80")]
    G65To80,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 4] = [AgeGroup::G8To25, AgeGroup::G26To40, AgeGroup::G41To64, AgeGroup::G65To80];

    /// `None` for ages outside [8, 80].
    pub fn from_age(age: u16) -> Option<Self> {
        match age {
            8..=25 => Some(AgeGroup::G8To25),
            26..=40 => Some(AgeGroup::G26To40),
            41..=64 => Some(AgeGroup::G41To64),
            65..=80 => Some(AgeGroup::G65To80),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeGroup::G8To25 => "8-25",
            AgeGroup::G26To40 => "26-40",
            AgeGroup::G41To64 => "41-64",
            AgeGroup::G65To80 => "65-80",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Gender,
    AgeGroup,
    Status,
}

impl Attribute {
    fn cardinality(self) -> usize {
        match self {
            Attribute::Gender => Gender::ALL.len(),
            Attribute::AgeGroup => AgeGroup::ALL.len(),
            Attribute::Status => Status::ALL.len(),
        }
    }

    fn value_of(self, user: &UserRecord) -> Option<usize> {
        match self {
            Attribute::Gender => Some(user.gender.index()),
            Attribute::AgeGroup => AgeGroup::from_age(user.age).map(AgeGroup::index),
            Attribute::Status => Some(user.status.index()),
        }
    }

    fn value(self, index: usize) -> AttrValue {
        match self {
            Attribute::Gender => AttrValue::Gender(Gender::ALL[index]),
            Attribute::AgeGroup => AttrValue::AgeGroup(AgeGroup::ALL[index]),
            Attribute::Status => AttrValue::Status(Status::ALL[index]),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Gender => "gender",
            Attribute::AgeGroup => "age_group",
            Attribute::Status => "status",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttrValue {
    Gender(Gender),
    AgeGroup(AgeGroup),
    Status(Status),
}

impl AttrValue {
    pub fn label(self) -> &'static str {
        match self {
            AttrValue::Gender(g) => g.token(),
            AttrValue::AgeGroup(a) => a.label(),
            AttrValue::Status(s) => s.token(),
        }
    }
}

/// Counts over the cross partition of a set of attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionCounts {
    /// Attributes in canonical order (gender, age group, status).
    pub attributes: Vec<Attribute>,
    /// Every cell of the cross product, zero cells included.
    pub cells: BTreeMap<Vec<AttrValue>, u64>,
    /// Users that fall in some cell.
    pub covered: u64,
    /// Users left out because their age is outside every age group.
    pub out_of_band: u64,
}

impl PartitionCounts {
    pub fn get(&self, key: &[AttrValue]) -> u64 {
        self.cells.get(key).copied().unwrap_or(0)
    }
}

fn canonical_attributes(attributes: &[Attribute]) -> Result<Vec<Attribute>, DemogError> {
    let mut attrs = attributes.to_vec();
    attrs.sort_unstable();
    attrs.dedup();
    if attrs.is_empty() {
        return Err(DemogError::EmptyAttributes);
    }
    Ok(attrs)
}

/// Tallies crawled (non-stub) users by the given attributes.
pub fn count_partition(dataset: &CommunityDataset, attributes: &[Attribute]) -> Result<PartitionCounts, DemogError> {
    count_partition_with(Execution::default(), dataset, attributes)
}

pub fn count_partition_with(
    exec: Execution,
    dataset: &CommunityDataset,
    attributes: &[Attribute],
) -> Result<PartitionCounts, DemogError> {
    let attrs = canonical_attributes(attributes)?;
    let dims: Vec<usize> = attrs.iter().map(|a| a.cardinality()).collect();
    let size: usize = dims.iter().product();

    // flat[..size] are cells, flat[size] counts out-of-band users
    let flat = par::fold(
        exec,
        dataset.users(),
        || (),
        || vec![0u64; size + 1],
        |mut acc, _, user| {
            let mut idx = 0;
            for (attr, &dim) in attrs.iter().zip(&dims) {
                match attr.value_of(user) {
                    Some(v) => idx = idx * dim + v,
                    None => {
                        acc[size] += 1;
                        return acc;
                    }
                }
            }
            acc[idx] += 1;
            acc
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    );

    let mut cells = BTreeMap::new();
    for (flat_index, &count) in flat[..size].iter().enumerate() {
        let mut rest = flat_index;
        let mut key = vec![AttrValue::Gender(Gender::Male); attrs.len()];
        for (slot, (attr, &dim)) in attrs.iter().zip(&dims).enumerate().rev() {
            key[slot] = attr.value(rest % dim);
            rest /= dim;
        }
        cells.insert(key, count);
    }
    Ok(PartitionCounts {
        attributes: attrs,
        covered: flat[..size].iter().sum(),
        out_of_band: flat[size],
        cells,
    })
}

/// Percentage `100 * count / denominator` rounded half-up to two decimals,
/// computed in integers so the rounding is exact.
pub fn percent_2dp(count: u64, denominator: u64) -> Option<f64> {
    if denominator == 0 {
        return None;
    }
    let scaled = u128::from(count) * 10_000;
    let den = u128::from(denominator);
    let hundredths = (2 * scaled + den) / (2 * den);
    Some(hundredths as f64 / 100.0)
}

/// Two-decimal percentages of `counts` that sum to exactly 100 when the
/// counts add up to `denominator`. Every cell is its exact value rounded down
/// or up to the hundredth; the hundredths left over after rounding down go to
/// the largest remainders, earlier cells first on ties.
pub fn apportion_2dp(counts: &[u64], denominator: u64) -> Vec<Option<f64>> {
    if denominator == 0 {
        return vec![None; counts.len()];
    }
    let den = u128::from(denominator);
    let scaled: Vec<(u128, u128)> = counts.iter().map(|&c| (u128::from(c) * 10_000 / den, u128::from(c) * 10_000 % den)).collect();
    let mut hundredths: Vec<u128> = scaled.iter().map(|s| s.0).collect();
    let total: u128 = counts.iter().map(|&c| u128::from(c)).sum();
    if total == den {
        let leftover = 10_000 - hundredths.iter().sum::<u128>();
        let mut order: Vec<usize> = (0..counts.len()).filter(|&i| scaled[i].1 > 0).collect();
        order.sort_by(|&a, &b| scaled[b].1.cmp(&scaled[a].1).then(a.cmp(&b)));
        for &i in order.iter().take(leftover as usize) {
            hundredths[i] += 1;
        }
    } else {
        for (h, s) in hundredths.iter_mut().zip(&scaled) {
            if 2 * s.1 >= den {
                *h += 1;
            }
        }
    }
    hundredths.into_iter().map(|h| Some(h as f64 / 100.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub key: Vec<String>,
    pub count: u64,
    /// Two decimals, see [`apportion_2dp`]; `None` when the denominator is zero.
    pub percent: Option<f64>,
}

/// One statistic family (for example gender × status) with its percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyTable {
    pub attributes: Vec<Attribute>,
    /// Users the percentages are taken over.
    pub denominator: u64,
    pub cells: Vec<CellStat>,
}

impl FamilyTable {
    fn from_counts(counts: &PartitionCounts) -> Self {
        let denominator = counts.covered;
        let counts_only: Vec<u64> = counts.cells.values().copied().collect();
        let percents = apportion_2dp(&counts_only, denominator);
        let cells = counts
            .cells
            .iter()
            .zip(percents)
            .map(|((key, &count), percent)| CellStat {
                key: key.iter().map(|v| v.label().to_string()).collect(),
                count,
                percent,
            })
            .collect();
        FamilyTable { attributes: counts.attributes.clone(), denominator, cells }
    }

    pub fn name(&self) -> String {
        self.attributes.iter().map(|a| a.name()).collect::<Vec<_>>().join("_x_")
    }

    pub fn count(&self, key: &[&str]) -> Option<u64> {
        self.cells.iter().find(|c| c.key.iter().map(String::as_str).eq(key.iter().copied())).map(|c| c.count)
    }

    pub fn percent(&self, key: &[&str]) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.key.iter().map(String::as_str).eq(key.iter().copied()))
            .and_then(|c| c.percent)
    }

    /// Exact (unrounded) percentage of a cell.
    pub fn exact_percent(&self, key: &[&str]) -> Option<f64> {
        let count = self.count(key)?;
        (self.denominator > 0).then(|| 100.0 * count as f64 / self.denominator as f64)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("#");
        for a in &self.attributes {
            out.push_str(a.name());
            out.push('\t');
        }
        out.push_str("count\tpercent\n");
        for c in &self.cells {
            for k in &c.key {
                out.push_str(k);
                out.push('\t');
            }
            let pct = c.percent.map_or_else(|| "NA".to_string(), |p| format!("{p:.2}"));
            let _ = writeln!(out, "{}\t{pct}", c.count);
        }
        out
    }
}

/// Per-year counts backing the age curves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeRow {
    pub age: u16,
    pub count: u64,
    /// Indexed male, female.
    pub by_gender: [u64; 2],
    /// Indexed single, married, iar, unknown.
    pub by_status: [u64; 4],
    pub by_gender_status: [[u64; 4]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderGap {
    /// Female minus male users.
    pub users: i64,
    /// Female minus male share, in percentage points, unrounded.
    pub percent_points: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographyReport {
    /// Crawled users N (stubs excluded).
    pub n_total: u64,
    pub stubs_excluded: u64,
    /// Users older than 80, left out of every age-group tally.
    pub out_of_band_ages: u64,
    pub gender_gap: GenderGap,
    pub gender: FamilyTable,
    pub age_group: FamilyTable,
    pub status: FamilyTable,
    pub gender_x_age_group: FamilyTable,
    pub gender_x_status: FamilyTable,
    pub age_group_x_status: FamilyTable,
    pub gender_x_age_group_x_status: FamilyTable,
    pub age_profile: Vec<AgeRow>,
}

impl DemographyReport {
    pub fn families(&self) -> [&FamilyTable; 7] {
        [
            &self.gender,
            &self.age_group,
            &self.status,
            &self.gender_x_age_group,
            &self.gender_x_status,
            &self.age_group_x_status,
            &self.gender_x_age_group_x_status,
        ]
    }
}

pub fn demography_report(dataset: &CommunityDataset) -> DemographyReport {
    demography_report_with(Execution::default(), dataset)
}

pub fn demography_report_with(exec: Execution, dataset: &CommunityDataset) -> DemographyReport {
    use Attribute::*;
    let family = |attrs: &[Attribute]| {
        let counts = count_partition_with(exec, dataset, attrs).expect("non-empty attribute set");
        FamilyTable::from_counts(&counts)
    };
    let gender = family(&[Gender]);
    let age_group = family(&[AgeGroup]);
    let n_total = dataset.users().len() as u64;
    let female = gender.count(&["F"]).unwrap_or(0) as i64;
    let male = gender.count(&["M"]).unwrap_or(0) as i64;

    DemographyReport {
        n_total,
        stubs_excluded: dataset.stubs().len() as u64,
        out_of_band_ages: n_total - age_group.denominator,
        gender_gap: GenderGap {
            users: female - male,
            percent_points: (n_total > 0).then(|| 100.0 * (female - male) as f64 / n_total as f64),
        },
        status: family(&[Status]),
        gender_x_age_group: family(&[Gender, AgeGroup]),
        gender_x_status: family(&[Gender, Status]),
        age_group_x_status: family(&[AgeGroup, Status]),
        gender_x_age_group_x_status: family(&[Gender, AgeGroup, Status]),
        age_profile: age_profile(dataset),
        gender,
        age_group,
    }
}

fn age_profile(dataset: &CommunityDataset) -> Vec<AgeRow> {
    let mut rows: BTreeMap<u16, AgeRow> = BTreeMap::new();
    for u in dataset.users() {
        let row = rows.entry(u.age).or_insert_with(|| AgeRow {
            age: u.age,
            count: 0,
            by_gender: [0; 2],
            by_status: [0; 4],
            by_gender_status: [[0; 4]; 2],
        });
        row.count += 1;
        row.by_gender[u.gender.index()] += 1;
        row.by_status[u.status.index()] += 1;
        row.by_gender_status[u.gender.index()][u.status.index()] += 1;
    }
    rows.into_values().collect()
}
