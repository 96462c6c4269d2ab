//! Observation sets and CSV ingestion.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major covariate matrix.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |r| self.get(r, col))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows selected by `index`, in that order.
    pub fn select_rows(&self, index: &[usize]) -> Self {
        let mut values = Vec::with_capacity(index.len() * self.cols);
        for &i in index {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: index.len(),
            cols: self.cols,
            values,
        }
    }

    /// Stacks `other` under `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.cols && self.rows > 0 && other.rows > 0 {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack {} columns on {}",
                other.cols, self.cols
            )));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Self {
            rows: self.rows + other.rows,
            cols: self.cols.max(other.cols),
            values,
        })
    }
}

/// Covariates with a binary treatment `G` and a binary outcome `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub covariate_names: Vec<String>,
    pub x: Matrix,
    pub treatment: Vec<u8>,
    pub outcome: Vec<u8>,
    pub labels: Option<Vec<String>>,
    /// Number of values imputed through a paired missing-indicator column.
    pub imputed: usize,
}

impl ObservationSet {
    pub fn new(x: Matrix, treatment: Vec<u8>, outcome: Vec<u8>) -> Result<Self> {
        let names = (0..x.cols()).map(|j| format!("x{}", j + 1)).collect();
        let set = Self {
            covariate_names: names,
            x,
            treatment,
            outcome,
            labels: None,
            imputed: 0,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.rows();
        if self.treatment.len() != n || self.outcome.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} covariate rows but {} treatments and {} outcomes",
                self.treatment.len(),
                self.outcome.len()
            )));
        }
        if self.covariate_names.len() != self.x.cols() {
            return Err(Error::DimensionMismatch("covariate name count".into()));
        }
        if let Some(i) = self.x.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::Schema(format!(
                "non-finite covariate at row {}",
                i / self.x.cols().max(1) + 1
            )));
        }
        for (name, col) in [("treatment", &self.treatment), ("outcome", &self.outcome)] {
            if let Some(i) = col.iter().position(|&v| v > 1) {
                return Err(Error::Schema(format!("{name} at row {} is not binary", i + 1)));
            }
        }
        Ok(())
    }

    pub fn treated_count(&self) -> usize {
        self.treatment.iter().filter(|&&g| g == 1).count()
    }
}

/// Column roles for [`ingest_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub treatment: String,
    pub outcome: String,
    /// Covariate columns; `None` means every column not otherwise claimed.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    #[serde(default)]
    pub label: Option<String>,
    /// Suffix naming the missing-indicator partner of a covariate.
    #[serde(default = "default_missing_suffix")]
    pub missing_suffix: String,
}

fn default_missing_suffix() -> String {
    "_missing".into()
}

impl CsvSchema {
    pub fn new(treatment: &str, outcome: &str) -> Self {
        Self {
            treatment: treatment.into(),
            outcome: outcome.into(),
            covariates: None,
            label: None,
            missing_suffix: default_missing_suffix(),
        }
    }
}

fn parse_binary(raw: &str, column: &str, row: usize) -> Result<u8> {
    match raw.trim() {
        "0" | "0.0" => Ok(0),
        "1" | "1.0" => Ok(1),
        other => Err(Error::Schema(format!(
            "column `{column}` row {row}: expected 0 or 1, got `{other}`"
        ))),
    }
}

fn is_missing(raw: &str) -> bool {
    matches!(raw.trim(), "" | "NA" | "NaN" | "nan" | "null")
}

/// Reads an observation set from a headed CSV file.
///
/// A blank or `NA` covariate is imputed as 0 only when the file also has a
/// `<name><missing_suffix>` column whose value on that row is 1.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<ObservationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let find = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("missing required column `{name}`")))
    };
    let g_col = find(&schema.treatment)?;
    let b_col = find(&schema.outcome)?;
    let label_col = schema.label.as_deref().map(find).transpose()?;
    let covariate_names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != g_col && *i != b_col && Some(*i) != label_col)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let cov_cols: Vec<usize> = covariate_names.iter().map(|n| find(n)).collect::<Result<_>>()?;
    let indicator_cols: Vec<Option<usize>> = covariate_names
        .iter()
        .map(|n| index.get(format!("{n}{}", schema.missing_suffix).as_str()).copied())
        .collect();

    let mut values = Vec::new();
    let mut treatment = Vec::new();
    let mut outcome = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    let mut imputed = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        treatment.push(parse_binary(&record[g_col], &schema.treatment, row)?);
        outcome.push(parse_binary(&record[b_col], &schema.outcome, row)?);
        if let (Some(labels), Some(c)) = (labels.as_mut(), label_col) {
            labels.push(record[c].to_owned());
        }
        for (k, &c) in cov_cols.iter().enumerate() {
            let raw = &record[c];
            let name = &covariate_names[k];
            if is_missing(raw) {
                let flagged = indicator_cols[k]
                    .map(|ic| parse_binary(&record[ic], name, row))
                    .transpose()?
                    == Some(1);
                if !flagged {
                    return Err(Error::Schema(format!(
                        "column `{name}` row {row} is missing without a `{name}{}` indicator set to 1",
                        schema.missing_suffix
                    )));
                }
                imputed += 1;
                values.push(0.0);
            } else {
                let v: f64 = raw.trim().parse().map_err(|_| {
                    Error::Schema(format!("column `{name}` row {row}: cannot parse `{raw}`"))
                })?;
                if !v.is_finite() {
                    return Err(Error::Schema(format!("column `{name}` row {row} is not finite")));
                }
                values.push(v);
            }
        }
    }
    let n = treatment.len();
    let set = ObservationSet {
        x: Matrix::new(n, covariate_names.len(), values)?,
        covariate_names,
        treatment,
        outcome,
        labels,
        imputed,
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_well_formed_file() {
        let f = write("firm,lev,size,G,B\na,0.1,3,0,0\nb,0.5,2,1,1\nc,0.9,1,1,0\n");
        let mut schema = CsvSchema::new("G", "B");
        schema.label = Some("firm".into());
        let set = ingest_csv(f.path(), &schema).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.covariate_names, vec!["lev", "size"]);
        assert_eq!(set.treatment, vec![0, 1, 1]);
        assert_eq!(set.x.get(1, 0), 0.5);
        assert_eq!(set.labels.unwrap()[2], "c");
    }

    #[test]
    fn rejects_non_binary_treatment() {
        let f = write("x,G,B\n1,0,0\n2,2,1\n");
        let err = ingest_csv(f.path(), &CsvSchema::new("G", "B")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains('G'));
    }

    #[test]
    fn rejects_missing_column() {
        let f = write("x,G\n1,0\n");
        assert!(matches!(ingest_csv(f.path(), &CsvSchema::new("G", "B")), Err(Error::Schema(_))));
    }

    #[test]
    fn imputes_flagged_missing_values() {
        let f = write("rd,rd_missing,G,B\n0.4,0,0,1\n,1,1,0\n0.2,0,0,0\n");
        let mut schema = CsvSchema::new("G", "B");
        schema.covariates = Some(vec!["rd".into(), "rd_missing".into()]);
        let set = ingest_csv(f.path(), &schema).unwrap();
        assert_eq!(set.imputed, 1);
        assert_eq!(set.x.get(1, 0), 0.0);
        assert_eq!(set.x.get(1, 1), 1.0);

        let unflagged = write("rd,G,B\n,1,0\n");
        assert!(ingest_csv(unflagged.path(), &CsvSchema::new("G", "B")).is_err());
    }

    #[test]
    fn rejects_unparseable_numbers() {
        let f = write("x,G,B\nabc,0,0\n");
        assert!(ingest_csv(f.path(), &CsvSchema::new("G", "B")).is_err());
    }
}
