//! Paired two-sensor sample tables and their on-disk layout.
//!
//! A dataset directory contains `S1.csv`, `S2.csv`, optionally `truth.csv`,
//! and `provenance.json` (generator settings, seeds, scrambler matrices and
//! the split labels of every row).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Named ground-truth columns (intrinsic coordinates of the generating systems).
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub names: Vec<String>,
    pub values: Matrix,
}

impl Truth {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.values.column(j))
    }
}

/// Which truth column parametrizes each latent block, when known.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AngleRoles {
    pub common: Option<String>,
    pub uncommon1: Option<String>,
    pub uncommon2: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScramblerRecord {
    pub matrix: Vec<Vec<f64>>,
    pub inverse: Vec<Vec<f64>>,
    pub condition_number: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: String,
    pub seed: u64,
    pub n_samples: usize,
    #[serde(default)]
    pub systems: Vec<serde_json::Value>,
    #[serde(default)]
    pub scrambler_s1: Option<ScramblerRecord>,
    #[serde(default)]
    pub scrambler_s2: Option<ScramblerRecord>,
    /// Per-column `(mean, std)` removed from raw system coordinates before mixing.
    #[serde(default)]
    pub standardization: Option<Vec<(f64, f64)>>,
    /// Minimum and maximum over both sensor tables.
    pub value_range: (f64, f64),
    #[serde(default)]
    pub roles: AngleRoles,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
    #[serde(default)]
    pub split: Option<Vec<Split>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset {
    pub s1: Matrix,
    pub s2: Matrix,
    pub truth: Option<Truth>,
    pub split: Option<Vec<Split>>,
    pub provenance: Provenance,
}

impl PairedDataset {
    pub fn new(s1: Matrix, s2: Matrix, truth: Option<Truth>, provenance: Provenance) -> Result<Self> {
        check_dim("sensor 2 rows", s1.rows(), s2.rows())?;
        if let Some(t) = &truth {
            check_dim("truth rows", s1.rows(), t.values.rows())?;
            check_dim("truth names", t.values.cols(), t.names.len())?;
        }
        Ok(PairedDataset {
            s1,
            s2,
            truth,
            split: None,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.s1.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_split(mut self, split: Vec<Split>) -> Result<Self> {
        check_dim("split labels", self.len(), split.len())?;
        self.provenance.split = Some(split.clone());
        self.split = Some(split);
        Ok(self)
    }

    /// Row indices carrying `label`, in ascending order.
    pub fn indices(&self, label: Split) -> Result<Vec<usize>> {
        let split = self
            .split
            .as_ref()
            .ok_or_else(|| Error::Staging("dataset has no split assignment".into()))?;
        Ok(split
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == label)
            .map(|(i, _)| i)
            .collect())
    }

    /// Apply one row permutation to both sensors, the truth table and the labels.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        check_dim("permutation length", self.len(), perm.len())?;
        let mut out = self.clone();
        out.s1 = self.s1.select_rows(perm);
        out.s2 = self.s2.select_rows(perm);
        if let Some(t) = &self.truth {
            out.truth = Some(Truth {
                names: t.names.clone(),
                values: t.values.select_rows(perm),
            });
        }
        if let Some(s) = &self.split {
            let s: Vec<Split> = perm.iter().map(|&i| s[i]).collect();
            out.provenance.split = Some(s.clone());
            out.split = Some(s);
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv(&dir.join("S1.csv"), &column_names("s1", self.s1.cols()), &self.s1)?;
        write_csv(&dir.join("S2.csv"), &column_names("s2", self.s2.cols()), &self.s2)?;
        if let Some(t) = &self.truth {
            write_csv(&dir.join("truth.csv"), &t.names, &t.values)?;
        }
        let mut prov = self.provenance.clone();
        prov.split = self.split.clone();
        let path = dir.join("provenance.json");
        let json = serde_json::to_string_pretty(&prov)?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (_, s1) = read_csv(&dir.join("S1.csv"))?;
        let (_, s2) = read_csv(&dir.join("S2.csv"))?;
        let truth_path = dir.join("truth.csv");
        let truth = if truth_path.exists() {
            let (names, values) = read_csv(&truth_path)?;
            Some(Truth { names, values })
        } else {
            None
        };
        let path = dir.join("provenance.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let provenance: Provenance = serde_json::from_str(&text)?;
        let split = provenance.split.clone();
        let mut ds = PairedDataset::new(s1, s2, truth, provenance)?;
        if let Some(s) = split {
            ds = ds.with_split(s)?;
        }
        Ok(ds)
    }
}

pub fn column_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|j| format!("{prefix}_{j}")).collect()
}

/// Headered numeric CSV in shortest round-trip float formatting.
pub fn write_csv(path: &Path, header: &[String], m: &Matrix) -> Result<()> {
    check_dim("csv header", m.cols(), header.len())?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    let mut buf: Vec<String> = Vec::with_capacity(m.cols());
    for row in m.iter_rows() {
        buf.clear();
        buf.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&buf).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != header.len() {
            return Err(Error::format("csv", path, format!("row {} has {} fields", rows + 1, rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| Error::format("csv", path, format!("row {}: {e}", rows + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = header.len();
    Ok((header, Matrix::from_vec(rows, cols, data)?))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format("csv", path, e.to_string())
    }
}
