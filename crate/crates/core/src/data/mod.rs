//! Shared domain types: ratings, feature tables, labels, groups and the
//! assembled [`Dataset`], plus the standardization and quartile helpers
//! used throughout the pipeline.

mod io;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub(crate) use io::{csv_err, open_csv, parse_real};
pub use io::{
    load_dataset, read_feature_csv, read_groups_csv, read_labels_csv, read_traits_csv,
    write_dataset, write_feature_csv, write_groups_csv, write_labels_csv, write_traits_csv,
    FeatureSource, FeatureSources, Manifest,
};

/// Default number of participants per interaction group.
pub const DEFAULT_GROUP_SIZE: usize = 3;

/// Names of the five trait columns in a traits CSV.
pub const TRAIT_NAMES: [&str; 5] = [
    "neuroticism",
    "extraversion",
    "openness",
    "agreeableness",
    "conscientiousness",
];

/// Standardizes to zero mean and unit population SD (divides by `n`).
pub fn zscore(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: values.len(),
        });
    }
    let m = stats::mean(values);
    let sd = stats::population_variance(values).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::ZeroVariance("zscore input".into()));
    }
    Ok(values.iter().map(|v| (v - m) / sd).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuartileBins {
    /// Bin index in `0..4` per input position.
    pub bins: Vec<u8>,
    /// Set when every value was identical; all positions are then in bin 0.
    pub degenerate: bool,
}

/// Quartile bins by rank. Ties are broken by input position.
pub fn quartile_bins(values: &[f64]) -> Result<QuartileBins> {
    let order: Vec<usize> = (0..values.len()).collect();
    quartile_bins_ordered(values, order)
}

/// Quartile bins by rank with ties broken by `(value, id)`.
pub fn quartile_bins_with_ids(values: &[f64], ids: &[String]) -> Result<QuartileBins> {
    if ids.len() != values.len() {
        return Err(Error::LengthMismatch(values.len(), ids.len()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    quartile_bins_ordered(values, order)
}

fn quartile_bins_ordered(values: &[f64], mut order: Vec<usize>) -> Result<QuartileBins> {
    let n = values.len();
    if n < 4 {
        return Err(Error::TooShort { needed: 4, got: n });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            row: i,
            column: "label".into(),
        });
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        warn!("DegenerateLabels: all {n} labels are identical; every position placed in bin 0");
        return Ok(QuartileBins {
            bins: vec![0; n],
            degenerate: true,
        });
    }
    // stable: the incoming order is the tie-break
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut bins = vec![0u8; n];
    for (rank, &idx) in order.iter().enumerate() {
        bins[idx] = (4 * rank / n) as u8;
    }
    Ok(QuartileBins {
        bins,
        degenerate: false,
    })
}

/// Subjects × raters scores for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingMatrix {
    pub question_id: String,
    pub subject_ids: Vec<String>,
    pub rater_ids: Vec<String>,
    /// Row-major, `scores[subject][rater]`.
    scores: Vec<Vec<f64>>,
}

/// Inclusive bounds of the rating scale.
pub const RATING_SCALE: (f64, f64) = (0.0, 4.0);

impl RatingMatrix {
    pub fn new(
        question_id: impl Into<String>,
        subject_ids: Vec<String>,
        rater_ids: Vec<String>,
        scores: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::with_scale(question_id, subject_ids, rater_ids, scores, RATING_SCALE)
    }

    pub fn with_scale(
        question_id: impl Into<String>,
        subject_ids: Vec<String>,
        rater_ids: Vec<String>,
        scores: Vec<Vec<f64>>,
        scale: (f64, f64),
    ) -> Result<Self> {
        let n = subject_ids.len();
        let k = rater_ids.len();
        if n < 2 {
            return Err(Error::TooShort { needed: 2, got: n });
        }
        if k < 2 {
            return Err(Error::TooShort { needed: 2, got: k });
        }
        if scores.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: scores.len(),
            });
        }
        for (i, row) in scores.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue {
                        row: i,
                        column: rater_ids[j].clone(),
                    });
                }
                if v < scale.0 || v > scale.1 {
                    return Err(Error::OutOfRange(v));
                }
            }
        }
        ensure_unique(&subject_ids, "subject ids")?;
        ensure_unique(&rater_ids, "rater ids")?;
        Ok(Self {
            question_id: question_id.into(),
            subject_ids,
            rater_ids,
            scores,
        })
    }

    /// Builds a matrix from a bare grid, naming subjects `s0..` and raters `r0..`.
    pub fn from_grid(question_id: impl Into<String>, scores: Vec<Vec<f64>>) -> Result<Self> {
        let n = scores.len();
        let k = scores.first().map_or(0, Vec::len);
        Self::with_scale(
            question_id,
            (0..n).map(|i| format!("s{i}")).collect(),
            (0..k).map(|j| format!("r{j}")).collect(),
            scores,
            (f64::NEG_INFINITY, f64::INFINITY),
        )
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_raters(&self) -> usize {
        self.rater_ids.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn get(&self, subject: usize, rater: usize) -> f64 {
        self.scores[subject][rater]
    }
}

fn ensure_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Invalid(format!("duplicate entry `{id}` in {what}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Linguistic,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Linguistic => "linguistic",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "visual" => Ok(Modality::Visual),
            "linguistic" => Ok(Modality::Linguistic),
            other => Err(Error::Invalid(format!("unknown modality `{other}`"))),
        }
    }
}

/// Which feature columns a model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalitySelection {
    Visual,
    Linguistic,
    Multimodal,
}

impl ModalitySelection {
    pub const ALL: [ModalitySelection; 3] = [
        ModalitySelection::Visual,
        ModalitySelection::Linguistic,
        ModalitySelection::Multimodal,
    ];

    pub fn includes(self, m: Modality) -> bool {
        match self {
            ModalitySelection::Visual => m == Modality::Visual,
            ModalitySelection::Linguistic => m == Modality::Linguistic,
            ModalitySelection::Multimodal => true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModalitySelection::Visual => "visual",
            ModalitySelection::Linguistic => "linguistic",
            ModalitySelection::Multimodal => "multimodal",
        }
    }
}

impl fmt::Display for ModalitySelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModalitySelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "visual" => Ok(ModalitySelection::Visual),
            "linguistic" => Ok(ModalitySelection::Linguistic),
            "multimodal" | "all" => Ok(ModalitySelection::Multimodal),
            other => Err(Error::Invalid(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub modality: Modality,
}

impl FeatureColumn {
    pub fn new(name: impl Into<String>, modality: Modality) -> Self {
        Self {
            name: name.into(),
            modality,
        }
    }

    /// Header form used in feature CSVs: `<modality>:<name>`.
    pub fn tagged_name(&self) -> String {
        format!("{}:{}", self.modality, self.name)
    }
}

/// Participants × named behavioral signals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    participant_ids: Vec<String>,
    columns: Vec<FeatureColumn>,
    values: DMatrix<f64>,
}

impl FeatureTable {
    pub fn new(
        participant_ids: Vec<String>,
        columns: Vec<FeatureColumn>,
        values: DMatrix<f64>,
    ) -> Result<Self> {
        if values.nrows() != participant_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: participant_ids.len(),
                got: values.nrows(),
            });
        }
        if values.ncols() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                got: values.ncols(),
            });
        }
        ensure_unique(&participant_ids, "participant ids")?;
        let names: Vec<String> = columns.iter().map(|c| c.name.clone()).collect();
        ensure_unique(&names, "feature names")?;
        for i in 0..values.nrows() {
            for j in 0..values.ncols() {
                if !values[(i, j)].is_finite() {
                    return Err(Error::NonFiniteValue {
                        row: i,
                        column: columns[j].name.clone(),
                    });
                }
            }
        }
        Ok(Self {
            participant_ids,
            columns,
            values,
        })
    }

    /// Builds a table from per-participant rows.
    pub fn from_rows(
        participant_ids: Vec<String>,
        columns: Vec<FeatureColumn>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let p = columns.len();
        for r in rows {
            if r.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: r.len(),
                });
            }
        }
        let values = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(participant_ids, columns, values)
    }

    pub fn participant_ids(&self) -> &[String] {
        &self.participant_ids
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.participant_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Restricts the table to the columns of the selected modality.
    pub fn select(&self, selection: ModalitySelection) -> FeatureTable {
        let keep: Vec<usize> = (0..self.columns.len())
            .filter(|&j| selection.includes(self.columns[j].modality))
            .collect();
        let values = DMatrix::from_fn(self.n_rows(), keep.len(), |i, j| self.values[(i, keep[j])]);
        FeatureTable {
            participant_ids: self.participant_ids.clone(),
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            values,
        }
    }

    /// Column-wise concatenation of two tables over the same participants.
    /// Rows of `other` are matched by participant id.
    pub fn hstack(&self, other: &FeatureTable) -> Result<FeatureTable> {
        let other = other.reorder(&self.participant_ids)?;
        let p1 = self.n_features();
        let p2 = other.n_features();
        let values = DMatrix::from_fn(self.n_rows(), p1 + p2, |i, j| {
            if j < p1 {
                self.values[(i, j)]
            } else {
                other.values[(i, j - p1)]
            }
        });
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        FeatureTable::new(self.participant_ids.clone(), columns, values)
    }

    /// Rows rearranged to follow `ids`, which must name exactly this table's participants.
    pub fn reorder(&self, ids: &[String]) -> Result<FeatureTable> {
        let index: HashMap<&str, usize> = self
            .participant_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        check_same_participants(ids, &self.participant_ids, "feature table")?;
        let rows: Vec<usize> = ids.iter().map(|id| index[id.as_str()]).collect();
        let values = DMatrix::from_fn(ids.len(), self.n_features(), |i, j| {
            self.values[(rows[i], j)]
        });
        Ok(FeatureTable {
            participant_ids: ids.to_vec(),
            columns: self.columns.clone(),
            values,
        })
    }
}

/// One real label per participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVector {
    pub participant_ids: Vec<String>,
    pub values: Vec<f64>,
}

impl LabelVector {
    pub fn new(participant_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if participant_ids.len() != values.len() {
            return Err(Error::LengthMismatch(participant_ids.len(), values.len()));
        }
        ensure_unique(&participant_ids, "label participant ids")?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: i,
                column: "label".into(),
            });
        }
        Ok(Self {
            participant_ids,
            values,
        })
    }

    pub fn standardized(&self) -> Result<LabelVector> {
        Ok(LabelVector {
            participant_ids: self.participant_ids.clone(),
            values: zscore(&self.values)?,
        })
    }

    pub fn reorder(&self, ids: &[String]) -> Result<LabelVector> {
        check_same_participants(ids, &self.participant_ids, "labels")?;
        let map: HashMap<&str, f64> = self
            .participant_ids
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
            .collect();
        Ok(LabelVector {
            participant_ids: ids.to_vec(),
            values: ids.iter().map(|id| map[id.as_str()]).collect(),
        })
    }
}

/// Participant → interaction-group map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAssignment {
    participant_ids: Vec<String>,
    group_ids: Vec<String>,
    group_size: usize,
}

impl GroupAssignment {
    pub fn new(
        participant_ids: Vec<String>,
        group_ids: Vec<String>,
        group_size: usize,
    ) -> Result<Self> {
        if participant_ids.len() != group_ids.len() {
            return Err(Error::LengthMismatch(
                participant_ids.len(),
                group_ids.len(),
            ));
        }
        if group_size == 0 {
            return Err(Error::Config("group size must be positive".into()));
        }
        ensure_unique(&participant_ids, "group participant ids")?;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for g in &group_ids {
            *counts.entry(g.as_str()).or_default() += 1;
        }
        for (g, c) in &counts {
            if *c != group_size {
                return Err(Error::Invalid(format!(
                    "group `{g}` has {c} members, expected {group_size}"
                )));
            }
        }
        Ok(Self {
            participant_ids,
            group_ids,
            group_size,
        })
    }

    pub fn participant_ids(&self) -> &[String] {
        &self.participant_ids
    }

    pub fn group_ids(&self) -> &[String] {
        &self.group_ids
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn group_of(&self, participant: &str) -> Option<&str> {
        self.participant_ids
            .iter()
            .position(|p| p == participant)
            .map(|i| self.group_ids[i].as_str())
    }

    pub fn reorder(&self, ids: &[String]) -> Result<GroupAssignment> {
        check_same_participants(ids, &self.participant_ids, "groups")?;
        let map: HashMap<&str, &str> = self
            .participant_ids
            .iter()
            .map(String::as_str)
            .zip(self.group_ids.iter().map(String::as_str))
            .collect();
        Ok(GroupAssignment {
            participant_ids: ids.to_vec(),
            group_ids: ids.iter().map(|id| map[id.as_str()].to_string()).collect(),
            group_size: self.group_size,
        })
    }
}

/// Per-participant named real scores (self-reported traits).
#[derive(Debug, Clone, PartialEq)]
pub struct TraitTable {
    pub participant_ids: Vec<String>,
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl TraitTable {
    pub fn new(
        participant_ids: Vec<String>,
        names: Vec<String>,
        values: DMatrix<f64>,
    ) -> Result<Self> {
        if values.nrows() != participant_ids.len() || values.ncols() != names.len() {
            return Err(Error::DimensionMismatch {
                expected: participant_ids.len() * names.len(),
                got: values.len(),
            });
        }
        ensure_unique(&participant_ids, "trait participant ids")?;
        Ok(Self {
            participant_ids,
            names,
            values,
        })
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    pub fn reorder(&self, ids: &[String]) -> Result<TraitTable> {
        check_same_participants(ids, &self.participant_ids, "traits")?;
        let index: HashMap<&str, usize> = self
            .participant_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let rows: Vec<usize> = ids.iter().map(|id| index[id.as_str()]).collect();
        let values = DMatrix::from_fn(ids.len(), self.names.len(), |i, j| {
            self.values[(rows[i], j)]
        });
        Ok(TraitTable {
            participant_ids: ids.to_vec(),
            names: self.names.clone(),
            values,
        })
    }
}

/// Features, labels, groups and optional traits over one participant set,
/// all stored in the feature table's row order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureTable,
    pub labels: LabelVector,
    pub groups: GroupAssignment,
    pub traits: Option<TraitTable>,
}

impl Dataset {
    pub fn new(
        features: FeatureTable,
        labels: LabelVector,
        groups: GroupAssignment,
        traits: Option<TraitTable>,
    ) -> Result<Self> {
        let ids = features.participant_ids().to_vec();
        let labels = labels.reorder(&ids)?;
        let groups = groups.reorder(&ids)?;
        let traits = traits.map(|t| t.reorder(&ids)).transpose()?;
        Ok(Self {
            features,
            labels,
            groups,
            traits,
        })
    }

    pub fn participant_ids(&self) -> &[String] {
        self.features.participant_ids()
    }

    pub fn len(&self) -> usize {
        self.features.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Errors with `MissingParticipant` naming the first id present on one side only.
fn check_same_participants(
    expected: &[String],
    actual: &[String],
    source_name: &str,
) -> Result<()> {
    let a: HashSet<&str> = actual.iter().map(String::as_str).collect();
    for id in expected {
        if !a.contains(id.as_str()) {
            return Err(Error::MissingParticipant {
                id: id.clone(),
                source_name: source_name.to_string(),
            });
        }
    }
    let e: HashSet<&str> = expected.iter().map(String::as_str).collect();
    for id in actual {
        if !e.contains(id.as_str()) {
            return Err(Error::MissingParticipant {
                id: id.clone(),
                source_name: "feature table".to_string(),
            });
        }
    }
    if expected.len() != actual.len() {
        return Err(Error::Invalid(format!(
            "{source_name}: participant count {} differs from {}",
            actual.len(),
            expected.len()
        )));
    }
    Ok(())
}
