use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    Dataset, FeatureColumn, FeatureTable, GroupAssignment, LabelVector, Modality, TraitTable,
    DEFAULT_GROUP_SIZE,
};
use crate::error::{Error, Result};

/// A feature CSV reference. Column headers may carry a `<modality>:` prefix;
/// unprefixed columns take the entry's `modality`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureSource {
    Path(PathBuf),
    Tagged {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        modality: Option<Modality>,
    },
}

impl FeatureSource {
    fn path(&self) -> &Path {
        match self {
            FeatureSource::Path(p) => p,
            FeatureSource::Tagged { path, .. } => path,
        }
    }

    fn modality(&self) -> Option<Modality> {
        match self {
            FeatureSource::Path(_) => None,
            FeatureSource::Tagged { modality, .. } => *modality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureSources {
    One(FeatureSource),
    Many(Vec<FeatureSource>),
}

impl FeatureSources {
    fn as_slice(&self) -> &[FeatureSource] {
        match self {
            FeatureSources::One(s) => std::slice::from_ref(s),
            FeatureSources::Many(v) => v,
        }
    }
}

/// Dataset manifest. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub features: FeatureSources,
    pub labels: PathBuf,
    pub groups: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traits: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_size: Option<usize>,
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::parse(manifest_path, e.line(), e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut features: Option<FeatureTable> = None;
    for source in manifest.features.as_slice() {
        let table = read_feature_csv(resolve(source.path()), source.modality())?;
        features = Some(match features {
            None => table,
            Some(acc) => acc.hstack(&table).map_err(|e| match e {
                Error::MissingParticipant { id, .. } => Error::MissingParticipant {
                    id,
                    source_name: source.path().display().to_string(),
                },
                other => other,
            })?,
        });
    }
    let features =
        features.ok_or_else(|| Error::Config("manifest lists no feature files".into()))?;

    let labels_path = resolve(&manifest.labels);
    let labels = read_labels_csv(&labels_path)?;
    let groups_path = resolve(&manifest.groups);
    let groups = read_groups_csv(
        &groups_path,
        manifest.group_size.unwrap_or(DEFAULT_GROUP_SIZE),
    )?;
    let traits = match &manifest.traits {
        Some(p) => Some((resolve(p), read_traits_csv(resolve(p))?)),
        None => None,
    };

    let ids = features.participant_ids().to_vec();
    let labels = labels
        .reorder(&ids)
        .map_err(|e| rename_source(e, &labels_path))?;
    let groups = groups
        .reorder(&ids)
        .map_err(|e| rename_source(e, &groups_path))?;
    let traits = match traits {
        Some((path, t)) => Some(t.reorder(&ids).map_err(|e| rename_source(e, &path))?),
        None => None,
    };
    Dataset::new(features, labels, groups, traits)
}

fn rename_source(e: Error, path: &Path) -> Error {
    match e {
        Error::MissingParticipant { id, source_name } if source_name != "feature table" => {
            Error::MissingParticipant {
                id,
                source_name: path.display().to_string(),
            }
        }
        other => other,
    }
}

/// Writes the dataset as `features.csv`, `labels.csv`, `groups.csv`,
/// optional `traits.csv` and a `manifest.json` tying them together.
/// Returns the manifest path.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_feature_csv(&dataset.features, dir.join("features.csv"))?;
    write_labels_csv(&dataset.labels, "label", dir.join("labels.csv"))?;
    write_groups_csv(&dataset.groups, dir.join("groups.csv"))?;
    if let Some(t) = &dataset.traits {
        write_traits_csv(t, dir.join("traits.csv"))?;
    }
    let manifest = Manifest {
        features: FeatureSources::One(FeatureSource::Path("features.csv".into())),
        labels: "labels.csv".into(),
        groups: "groups.csv".into(),
        traits: dataset.traits.as_ref().map(|_| "traits.csv".into()),
        group_size: Some(dataset.groups.group_size()),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub(crate) fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(file))
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(path, line, e.to_string())
}

fn headers(path: &Path, rdr: &mut csv::Reader<fs::File>) -> Result<Vec<String>> {
    Ok(rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect())
}

fn require_header(path: &Path, headers: &[String], index: usize, name: &str) -> Result<()> {
    match headers.get(index) {
        Some(h) if h == name => Ok(()),
        _ => Err(Error::parse(
            path,
            1,
            format!("expected column {} to be `{name}`", index + 1),
        )),
    }
}

pub(crate) fn parse_real(path: &Path, line: usize, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| {
        Error::parse(
            path,
            line,
            format!("`{cell}` in column `{column}` is not a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(Error::NonFiniteValue {
            row: line,
            column: column.to_string(),
        });
    }
    Ok(v)
}

/// Reads `participant_id,<feature>,...`. `NonFiniteValue` rows are file line numbers.
pub fn read_feature_csv(
    path: impl AsRef<Path>,
    default_modality: Option<Modality>,
) -> Result<FeatureTable> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let headers = headers(path, &mut rdr)?;
    require_header(path, &headers, 0, "participant_id")?;
    let mut columns = Vec::with_capacity(headers.len() - 1);
    for h in &headers[1..] {
        let column = match h.split_once(':') {
            Some((tag, name)) if tag.parse::<Modality>().is_ok() => {
                FeatureColumn::new(name, tag.parse::<Modality>()?)
            }
            _ => match default_modality {
                Some(m) => FeatureColumn::new(h.clone(), m),
                None => {
                    return Err(Error::parse(
                        path,
                        1,
                        format!("column `{h}` has no modality prefix and none was given"),
                    ))
                }
            },
        };
        columns.push(column);
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        ids.push(rec[0].to_string());
        let row = rec
            .iter()
            .skip(1)
            .zip(&columns)
            .map(|(cell, c)| parse_real(path, line, &c.name, cell))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    FeatureTable::from_rows(ids, columns, &rows)
}

pub fn write_feature_csv(table: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["participant_id".to_string()];
    header.extend(table.columns().iter().map(FeatureColumn::tagged_name));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, id) in table.participant_ids().iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend((0..table.n_features()).map(|j| table.values()[(i, j)].to_string()));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let headers = headers(path, &mut rdr)?;
    require_header(path, &headers, 0, "participant_id")?;
    if headers.len() != 2 {
        return Err(Error::parse(
            path,
            1,
            "labels CSV must have exactly two columns",
        ));
    }
    let column = headers[1].clone();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        ids.push(rec[0].to_string());
        values.push(parse_real(path, line, &column, &rec[1])?);
    }
    LabelVector::new(ids, values)
}

pub fn write_labels_csv(labels: &LabelVector, column: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["participant_id", column])
        .map_err(|e| csv_err(path, e))?;
    for (id, v) in labels.participant_ids.iter().zip(&labels.values) {
        w.write_record([id.clone(), v.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_groups_csv(path: impl AsRef<Path>, group_size: usize) -> Result<GroupAssignment> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let headers = headers(path, &mut rdr)?;
    require_header(path, &headers, 0, "participant_id")?;
    require_header(path, &headers, 1, "group_id")?;
    let mut ids = Vec::new();
    let mut groups = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        ids.push(rec[0].to_string());
        groups.push(rec[1].to_string());
    }
    GroupAssignment::new(ids, groups, group_size)
}

pub fn write_groups_csv(groups: &GroupAssignment, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["participant_id", "group_id"])
        .map_err(|e| csv_err(path, e))?;
    for (id, g) in groups.participant_ids().iter().zip(groups.group_ids()) {
        w.write_record([id, g]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_traits_csv(path: impl AsRef<Path>) -> Result<TraitTable> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let headers = headers(path, &mut rdr)?;
    require_header(path, &headers, 0, "participant_id")?;
    let names: Vec<String> = headers[1..].to_vec();
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        ids.push(rec[0].to_string());
        for (cell, name) in rec.iter().skip(1).zip(&names) {
            flat.push(parse_real(path, line, name, cell)?);
        }
    }
    let values = DMatrix::from_row_slice(ids.len(), names.len(), &flat);
    TraitTable::new(ids, names, values)
}

pub fn write_traits_csv(traits: &TraitTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["participant_id".to_string()];
    header.extend(traits.names.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, id) in traits.participant_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend((0..traits.names.len()).map(|j| traits.values[(i, j)].to_string()));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
