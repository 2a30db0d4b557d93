//! Labeled graph datasets and their on-disk directory layout:
//!
//! ```text
//! meta.json     {"name": ..., "n_nodes": N, "n_features": D}
//! edges.tsv     one undirected edge per line: "u<TAB>v", 0-based
//! features.csv  N lines of D comma-separated numbers, no header
//! labels.txt    optional, N lines of 0 or 1
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ArcError, Result};
use crate::graph::EdgeList;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Tensor,
    pub edges: EdgeList,
    pub labels: Option<Vec<u8>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    name: String,
    n_nodes: usize,
    n_features: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Tensor,
        edges: EdgeList,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            features,
            edges,
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        if self.edges.n_nodes() != n {
            return Err(ArcError::invalid(format!(
                "{}: {} feature rows but the graph has {} nodes",
                self.name,
                n,
                self.edges.n_nodes()
            )));
        }
        if let Some(y) = &self.labels {
            if y.len() != n {
                return Err(ArcError::invalid(format!(
                    "{}: {} labels for {n} nodes",
                    self.name,
                    y.len()
                )));
            }
            if let Some(bad) = y.iter().find(|&&v| v > 1) {
                return Err(ArcError::invalid(format!("{}: label {bad} is not 0/1", self.name)));
            }
        }
        Ok(())
    }

    /// Anomalies must be a strict minority. Checked for datasets read from
    /// disk and for training data, not for in-memory injection output.
    pub fn check_anomaly_fraction(&self) -> Result<()> {
        let n = self.n_nodes();
        let anomalies = self.anomalies().len();
        if 2 * anomalies >= n && anomalies > 0 {
            return Err(ArcError::invalid(format!(
                "{}: {anomalies} of {n} nodes anomalous, must be under half",
                self.name
            )));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn anomalies(&self) -> Vec<usize> {
        self.nodes_with_label(1)
    }

    pub fn normals(&self) -> Vec<usize> {
        self.nodes_with_label(0)
    }

    fn nodes_with_label(&self, want: u8) -> Vec<usize> {
        match &self.labels {
            Some(y) => (0..y.len()).filter(|&i| y[i] == want).collect(),
            None if want == 0 => (0..self.n_nodes()).collect(),
            None => Vec::new(),
        }
    }

    pub fn label_flags(&self) -> Option<Vec<bool>> {
        self.labels.as_ref().map(|y| y.iter().map(|&v| v == 1).collect())
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| ArcError::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> ArcError {
    ArcError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read(&meta_path)?)
        .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
    let n = meta.n_nodes;

    let feat_path = dir.join("features.csv");
    let text = read(&feat_path)?;
    let mut data = Vec::with_capacity(n * meta.n_features);
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| parse_err(&feat_path, i + 1, format!("bad number {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(&feat_path, i + 1, "non-finite feature value"));
            }
            data.push(v);
        }
        if data.len() - before != meta.n_features {
            return Err(parse_err(
                &feat_path,
                i + 1,
                format!("{} values, expected {}", data.len() - before, meta.n_features),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(
            &feat_path,
            rows,
            format!("{rows} feature rows, meta.json declares {n}"),
        ));
    }
    let features = Tensor::from_vec(n, meta.n_features, data)?;

    let edge_path = dir.join("edges.tsv");
    let text = read(&edge_path)?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(&edge_path, i + 1, format!("expected 2 node ids, got {line:?}")));
        }
        let mut ids = [0usize; 2];
        for (slot, tok) in ids.iter_mut().zip(&toks) {
            *slot = tok
                .parse()
                .map_err(|_| parse_err(&edge_path, i + 1, format!("bad node id {tok:?}")))?;
            if *slot >= n {
                return Err(parse_err(
                    &edge_path,
                    i + 1,
                    format!("node id {slot} out of range for {n} nodes"),
                ));
            }
        }
        pairs.push((ids[0], ids[1]));
    }
    let edges = EdgeList::new(n, pairs)?;

    let label_path = dir.join("labels.txt");
    let labels = if label_path.exists() {
        let text = read(&label_path)?;
        let mut y = Vec::with_capacity(n);
        for (i, line) in text.lines().enumerate() {
            match line.trim() {
                "" => continue,
                "0" => y.push(0),
                "1" => y.push(1),
                other => return Err(parse_err(&label_path, i + 1, format!("label {other:?} is not 0/1"))),
            }
        }
        if y.len() != n {
            return Err(parse_err(&label_path, y.len(), format!("{} labels for {n} nodes", y.len())));
        }
        Some(y)
    } else {
        None
    };

    let ds = Dataset::new(meta.name, features, edges, labels)?;
    ds.check_anomaly_fraction()?;
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| ArcError::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<PathBuf> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| ArcError::io(&p, e))?;
        Ok(p)
    };

    let meta = Meta {
        name: ds.name.clone(),
        n_nodes: ds.n_nodes(),
        n_features: ds.n_features(),
    };
    let meta = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write("meta.json", meta + "\n")?;

    let mut edges = String::new();
    for &(u, v) in ds.edges.pairs() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write("edges.tsv", edges)?;

    let mut feats = String::new();
    for r in 0..ds.n_nodes() {
        let row: Vec<String> = ds.features.row(r).iter().map(|v| v.to_string()).collect();
        feats.push_str(&row.join(","));
        feats.push('\n');
    }
    write("features.csv", feats)?;

    let label_path = dir.join("labels.txt");
    match &ds.labels {
        Some(y) => {
            let body: String = y.iter().map(|v| format!("{v}\n")).collect();
            write("labels.txt", body)?;
        }
        None if label_path.exists() => {
            fs::remove_file(&label_path).map_err(|e| ArcError::io(&label_path, e))?;
        }
        None => {}
    }
    Ok(())
}
