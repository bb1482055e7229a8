//! File formats: CSV matrices, JSON model files, atomic writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linmod::{LinearModel, LossKind};
use crate::quantiles::TargetQuantile;
use crate::suquan::Variant;

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Formats a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// A numeric table read from CSV, with an optional label column split off.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Option<Vec<String>>,
    pub p: usize,
    /// Row-major feature values.
    pub features: Vec<f64>,
    pub labels: Option<Vec<f64>>,
}

impl CsvTable {
    pub fn n(&self) -> usize {
        if self.p == 0 {
            0
        } else {
            self.features.len() / self.p
        }
    }

    /// Labeled dataset; fails if the table has no label column.
    pub fn into_dataset(self, name: &str) -> Result<Dataset> {
        let labels = self
            .labels
            .ok_or_else(|| Error::invalid("input has no label column"))?;
        Dataset::new(name, self.p, self.features, labels)
    }

    /// Dataset whose labels are the table's labels, or zeros if absent.
    pub fn into_dataset_unlabeled(self, name: &str) -> Result<Dataset> {
        let n = self.n();
        let labels = self.labels.unwrap_or_else(|| vec![0.0; n]);
        Dataset::new(name, self.p, self.features, labels)
    }
}

fn parse_real(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok()
}

/// Parses CSV text. The first row is a header if any of its cells is not a
/// number. `label_col` names the label column (or gives its 0-based index);
/// otherwise a header column called `label` is used if present.
pub fn parse_csv(text: &str, label_col: Option<&str>) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        records.push(rec?);
    }
    if records.is_empty() {
        return Err(Error::invalid("empty CSV input"));
    }
    let header = if records[0].iter().any(|c| parse_real(c).is_none()) {
        Some(records.remove(0).iter().map(str::to_owned).collect::<Vec<_>>())
    } else {
        None
    };
    if records.is_empty() {
        return Err(Error::invalid("CSV input has no data rows"));
    }
    let width = header.as_ref().map_or(records[0].len(), Vec::len);

    let label_idx = match (label_col, &header) {
        (Some(name), Some(h)) => match h.iter().position(|c| c == name) {
            Some(i) => Some(i),
            None => Some(
                name.parse::<usize>()
                    .map_err(|_| Error::invalid(format!("no column named `{name}`")))?,
            ),
        },
        (Some(name), None) => Some(
            name.parse::<usize>()
                .map_err(|_| Error::invalid(format!("no header row, so `{name}` must be a column index")))?,
        ),
        (None, Some(h)) => h.iter().position(|c| c == "label"),
        (None, None) => None,
    };
    if let Some(i) = label_idx {
        if i >= width {
            return Err(Error::invalid(format!("label column {i} out of range")));
        }
    }

    let p = width - usize::from(label_idx.is_some());
    if p == 0 {
        return Err(Error::invalid("CSV input has no feature columns"));
    }
    let mut features = Vec::with_capacity(records.len() * p);
    let mut labels = label_idx.map(|_| Vec::with_capacity(records.len()));
    for (r, rec) in records.iter().enumerate() {
        let line = r + 1 + usize::from(header.is_some());
        if rec.len() != width {
            return Err(Error::invalid(format!(
                "line {line}: expected {width} fields, found {}",
                rec.len()
            )));
        }
        for (c, cell) in rec.iter().enumerate() {
            let value = parse_real(cell)
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::invalid(format!("line {line}, column {}: `{cell}` is not a finite number", c + 1)))?;
            if Some(c) == label_idx {
                labels.as_mut().expect("label column present").push(value);
            } else {
                features.push(value);
            }
        }
    }
    let header = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_idx)
            .map(|(_, c)| c)
            .collect()
    });
    Ok(CsvTable {
        header,
        p,
        features,
        labels,
    })
}

pub fn read_csv(path: &Path, label_col: Option<&str>) -> Result<CsvTable> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, label_col)
}

/// Renders rows (and an optional trailing `label` column) as CSV with a
/// header. Feature columns are named from `names` or `x0, x1, ...`.
pub fn render_csv(
    names: Option<&[String]>,
    p: usize,
    features: &[f64],
    labels: Option<&[f64]>,
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head: Vec<String> = match names {
        Some(n) if n.len() == p => n.to_vec(),
        _ => (0..p).map(|j| format!("x{j}")).collect(),
    };
    if labels.is_some() {
        head.push("label".into());
    }
    w.write_record(&head)?;
    for (i, row) in features.chunks_exact(p).enumerate() {
        let mut rec: Vec<String> = row.iter().map(|&x| fmt_real(x)).collect();
        if let Some(l) = labels {
            rec.push(fmt_real(l[i]));
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    let text = render_csv(None, data.p(), data.features(), Some(data.labels()))?;
    write_atomic(path, text.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// What produced a model file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Linear model on data normalized to a fixed quantile.
    Logistic,
    SuquanSvd,
    SuquanBnd,
    SuquanSpav,
}

impl ModelKind {
    pub fn from_variant(v: Variant) -> Self {
        match v {
            Variant::Svd => ModelKind::SuquanSvd,
            Variant::Bnd => ModelKind::SuquanBnd,
            Variant::Spav => ModelKind::SuquanSpav,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub dataset_sha256: String,
    pub n_train: usize,
    pub rounds: usize,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

/// A trained model as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub variant: ModelKind,
    pub quantile: Vec<f64>,
    pub w: Vec<f64>,
    pub b: f64,
    pub loss: LossKind,
    pub lambda: f64,
    pub gamma: f64,
    pub metadata: TrainingMetadata,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let m: ModelFile = read_json(path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model schema version {} (expected {MODEL_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.quantile.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.quantile.len(),
                found: self.w.len(),
            });
        }
        if self.quantile.is_empty() {
            return Err(Error::invalid("model has no features"));
        }
        Ok(())
    }

    pub fn target_quantile(&self) -> Result<TargetQuantile> {
        TargetQuantile::new(self.quantile.clone())
    }

    pub fn linear_model(&self) -> LinearModel {
        LinearModel {
            w: self.w.clone(),
            b: self.b,
            loss: self.loss,
            lambda: self.lambda,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_detection_and_label_column() {
        let t = parse_csv("a,label,b\n1,1,2\n3,-1,4\n", None).unwrap();
        assert_eq!(t.header, Some(vec!["a".to_string(), "b".to_string()]));
        assert_eq!(t.features, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.labels, Some(vec![1.0, -1.0]));

        let t = parse_csv("1,2,3\n4,5,6\n", None).unwrap();
        assert!(t.header.is_none() && t.labels.is_none());
        assert_eq!(t.p, 3);

        let t = parse_csv("1,2,3\n4,5,6\n", Some("0")).unwrap();
        assert_eq!(t.labels, Some(vec![1.0, 4.0]));
        assert_eq!(t.features, vec![2.0, 3.0, 5.0, 6.0]);

        let t = parse_csv("y,a\n1,2\n", Some("y")).unwrap();
        assert_eq!(t.labels, Some(vec![1.0]));
    }

    #[test]
    fn malformed_input() {
        assert!(parse_csv("", None).is_err());
        assert!(parse_csv("a,b\n", None).is_err());
        assert!(parse_csv("1,2\n3\n", None).is_err());
        assert!(parse_csv("a,b\n1,x\n", None).is_err());
        assert!(parse_csv("a,b\n1,inf\n", None).is_err());
        assert!(parse_csv("1,2\n", Some("label")).is_err());
        assert!(parse_csv("1,2\n", Some("5")).is_err());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let values = vec![0.1, 1.0 / 3.0, -2.5e-300, 123456.789, f64::MIN_POSITIVE, -0.0];
        let text = render_csv(None, 3, &values, Some(&[1.0, -1.0])).unwrap();
        let t = parse_csv(&text, None).unwrap();
        assert_eq!(t.features, values);
        assert_eq!(t.labels, Some(vec![1.0, -1.0]));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("f.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
