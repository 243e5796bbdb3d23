//! CSV persistence. Two files joined on the `timestamp` column:
//!
//! * `moments_tags.csv`: `timestamp` plus one column per vocabulary tag,
//!   in vocabulary order.
//! * `moments_features.csv`: `timestamp` plus the twelve audio features.
//!
//! Header cells are always quoted (tag names contain spaces and commas);
//! data cells are written unquoted with the shortest round-tripping float
//! representation.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::MomentsDataset;
use crate::error::{Error, Result};
use crate::types::{Feature, FeatureRow, MomentKey, MomentSample, TagVocabulary};

pub const TAGS_FILE: &str = "moments_tags.csv";
pub const FEATURES_FILE: &str = "moments_features.csv";

pub fn write_dataset(dataset: &MomentsDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut tags = Vec::new();
    write_header(&mut tags, dataset.vocabulary.tags().iter().map(String::as_str));
    for s in &dataset.samples {
        write_row(&mut tags, &s.key, &s.tag_strengths);
    }

    let mut features = Vec::new();
    write_header(&mut features, Feature::ALL.iter().map(|f| f.name()));
    for s in &dataset.samples {
        write_row(&mut features, &s.key, &s.features.0);
    }

    for (name, bytes) in [(TAGS_FILE, tags), (FEATURES_FILE, features)] {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn quote(cell: &str) -> String {
    format!("\"{}\"", cell.replace('"', "\"\""))
}

fn write_header<'a>(out: &mut Vec<u8>, columns: impl Iterator<Item = &'a str>) {
    let mut line = quote("timestamp");
    for c in columns {
        line.push(',');
        line.push_str(&quote(c));
    }
    line.push('\n');
    out.extend_from_slice(line.as_bytes());
}

fn write_row(out: &mut Vec<u8>, key: &MomentKey, values: &[f64]) {
    write!(out, "{key}").expect("write to Vec");
    for v in values {
        write!(out, ",{v}").expect("write to Vec");
    }
    out.push(b'\n');
}

type Table = (Vec<String>, BTreeMap<MomentKey, Vec<f64>>);

fn read_table(path: &Path) -> Result<Table> {
    let bad = |reason: String| Error::DatasetFormat { path: path.to_path_buf(), reason };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("timestamp") {
        return Err(bad("first column must be \"timestamp\"".into()));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut rows = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let key: MomentKey =
            record.get(0).unwrap_or_default().parse().map_err(|e: Error| bad(e.to_string()))?;
        if record.len() != columns.len() + 1 {
            return Err(bad(format!("{key}: {} cells, expected {}", record.len(), columns.len() + 1)));
        }
        let values = record
            .iter()
            .skip(1)
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("{key}: {e}")))?;
        if rows.insert(key, values).is_some() {
            return Err(bad(format!("duplicate timestamp {key}")));
        }
    }
    Ok((columns, rows))
}

/// Reads and joins the two dataset files in `dir`. Timestamps present in
/// only one file are reported together in a [`Error::JoinMismatch`].
pub fn read_dataset(dir: impl AsRef<Path>, target: Feature) -> Result<MomentsDataset> {
    let dir = dir.as_ref();
    let tags_path = dir.join(TAGS_FILE);
    let features_path = dir.join(FEATURES_FILE);
    let (tag_names, tag_rows) = read_table(&tags_path)?;
    let (feature_names, mut feature_rows) = read_table(&features_path)?;

    let expected: Vec<&str> = Feature::ALL.iter().map(|f| f.name()).collect();
    if feature_names != expected {
        return Err(Error::DatasetFormat {
            path: features_path,
            reason: format!("feature columns must be {}", expected.join(",")),
        });
    }
    let vocabulary = TagVocabulary::new(tag_names)
        .map_err(|e| Error::DatasetFormat { path: tags_path.clone(), reason: e.to_string() })?;

    let mut unmatched: Vec<MomentKey> = tag_rows
        .keys()
        .filter(|k| !feature_rows.contains_key(k))
        .chain(feature_rows.keys().filter(|k| !tag_rows.contains_key(k)))
        .copied()
        .collect();
    if !unmatched.is_empty() {
        unmatched.sort();
        return Err(Error::JoinMismatch(unmatched));
    }

    let mut samples = Vec::with_capacity(tag_rows.len());
    for (key, strengths) in tag_rows {
        if strengths.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::DatasetFormat {
                path: tags_path.clone(),
                reason: format!("{key}: negative or non-finite strength"),
            });
        }
        let values = feature_rows.remove(&key).expect("joined above");
        let degenerate = strengths.iter().all(|&v| v == 0.0);
        samples.push(MomentSample {
            key,
            tag_strengths: strengths,
            features: FeatureRow(values.try_into().expect("width checked")),
            degenerate,
        });
    }
    let dataset = MomentsDataset { vocabulary, samples, target_feature: target };
    dataset.validate()?;
    Ok(dataset)
}
