//! Undirected attributed graphs, the on-disk dataset format, GCN
//! normalization and the planted-partition generator.
//!
//! A dataset directory holds:
//!
//! - `meta.json`: `{"num_nodes": N, "num_features": d0, "num_classes": C}`
//! - `edges.tsv`: one whitespace-separated `u v` pair per line, 0-indexed
//! - `features.tsv`: `N` lines of `d0` reals, line `i` is node `i`
//! - `labels.tsv` (optional): `N` integer class ids, one per line
//! - `splits.json` (optional): `{"train": [...], "val": [...], "test": [...]}`
//!
//! Blank lines and lines starting with `#` are ignored in the `.tsv` files.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::{seeded_rng, streams};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Random disjoint split of `0..n` with the given train / val fractions;
    /// the remainder is the test set. Each set is sorted.
    pub fn random(n: usize, train_frac: f64, val_frac: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_frac)
            || !(0.0..=1.0).contains(&val_frac)
            || train_frac + val_frac > 1.0
        {
            return Err(Error::InvalidArgument(format!(
                "split fractions {train_frac}/{val_frac} do not fit in [0, 1]"
            )));
        }
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut seeded_rng(seed, streams::SPLITS));
        let n_train = (train_frac * n as f64).round() as usize;
        let n_val = ((val_frac * n as f64).round() as usize).min(n - n_train);
        let mut train = ids[..n_train].to_vec();
        let mut val = ids[n_train..n_train + n_val].to_vec();
        let mut test = ids[n_train + n_val..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Ok(Self { train, val, test })
    }

    fn validate(&self, n: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::InconsistentDimensions(format!(
                    "split index {i} out of range for {n} nodes"
                )));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidArgument(format!(
                    "node {i} appears in more than one split slot"
                )));
            }
        }
        Ok(())
    }
}

/// An undirected graph with node features stored column-per-node.
///
/// Edges are kept as sorted `(u, v)` pairs with `u < v`; self-loops are never
/// stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    features: DenseMatrix,
    labels: Option<Vec<usize>>,
    splits: Option<Splits>,
}

impl Graph {
    /// Builds a graph, deduplicating edges (in either orientation) and
    /// dropping self-loops. `features` must be `d0 × num_nodes`.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: DenseMatrix,
        labels: Option<Vec<usize>>,
        splits: Option<Splits>,
    ) -> Result<Self> {
        let mut canon = BTreeSet::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InconsistentDimensions(format!(
                    "edge ({u}, {v}) has an endpoint >= {num_nodes}"
                )));
            }
            if u != v {
                canon.insert((u.min(v), u.max(v)));
            }
        }
        if features.cols() != num_nodes {
            return Err(Error::InconsistentDimensions(format!(
                "features have {} columns for {num_nodes} nodes",
                features.cols()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != num_nodes {
                return Err(Error::InconsistentDimensions(format!(
                    "{} labels for {num_nodes} nodes",
                    l.len()
                )));
            }
        }
        if let Some(s) = &splits {
            s.validate(num_nodes)?;
        }
        let edges: Vec<(usize, usize)> = canon.into_iter().collect();
        let mut neighbors = vec![Vec::new(); num_nodes];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(Self {
            num_nodes,
            edges,
            neighbors,
            features,
            labels,
            splits,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbour list of `node` (never contains `node` itself).
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].binary_search(&v).is_ok()
    }

    /// `d0 × N`
    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.rows()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn splits(&self) -> Option<&Splits> {
        self.splits.as_ref()
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |m| m + 1)
    }

    pub fn with_splits(mut self, splits: Splits) -> Result<Self> {
        splits.validate(self.num_nodes)?;
        self.splits = Some(splits);
        Ok(self)
    }

    /// Dense 0/1 adjacency matrix (no self-loops).
    pub fn adjacency(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.num_nodes, self.num_nodes);
        for &(u, v) in &self.edges {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeStats {
    pub degrees: Vec<usize>,
    pub avg_degree: f64,
}

pub fn degree_stats(g: &Graph, include_self: bool) -> DegreeStats {
    let extra = usize::from(include_self);
    let degrees: Vec<usize> = (0..g.num_nodes()).map(|i| g.neighbors(i).len() + extra).collect();
    let avg_degree = if degrees.is_empty() {
        0.0
    } else {
        degrees.iter().sum::<usize>() as f64 / degrees.len() as f64
    };
    DegreeStats { degrees, avg_degree }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn gcn_normalize(g: &Graph) -> DenseMatrix {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / ((g.neighbors(i).len() + 1) as f64).sqrt())
        .collect();
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = inv_sqrt[i] * inv_sqrt[i];
    }
    for &(u, v) in g.edges() {
        let w = inv_sqrt[u] * inv_sqrt[v];
        a[(u, v)] = w;
        a[(v, u)] = w;
    }
    a
}

/// Planted-partition generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_communities: usize,
    pub nodes_per_community: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_communities: 3,
            nodes_per_community: 100,
            p_in: 0.5,
            p_out: 0.01,
            feature_dim: 32,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_communities == 0 || self.nodes_per_community == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidArgument("synthetic graph counts must be positive".into()));
        }
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= p_out <= p_in <= 1, got p_in = {}, p_out = {}",
                self.p_in, self.p_out
            )));
        }
        Ok(())
    }
}

/// Communities of equal size; every node pair is joined independently with
/// probability `p_in` (same community) or `p_out`. Features are i.i.d.
/// standard normal, identical in law across communities, so only the edges
/// carry class information. Labels are the community ids.
///
/// Pairs are visited in `(i, j), i < j` lexicographic order, one uniform draw
/// per pair; features are drawn node by node from a separate stream.
pub fn gen_gaussian_partition(cfg: &SyntheticConfig) -> Result<Graph> {
    cfg.validate()?;
    let n = cfg.num_communities * cfg.nodes_per_community;
    let labels: Vec<usize> = (0..n).map(|i| i / cfg.nodes_per_community).collect();

    let mut edge_rng = seeded_rng(cfg.seed, streams::GRAPH_EDGES);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { cfg.p_in } else { cfg.p_out };
            let u: f64 = edge_rng.random();
            if u < p {
                edges.push((i, j));
            }
        }
    }

    let mut feat_rng = seeded_rng(cfg.seed, streams::GRAPH_FEATURES);
    let mut features = DenseMatrix::zeros(cfg.feature_dim, n);
    for node in 0..n {
        for r in 0..cfg.feature_dim {
            features[(r, node)] = feat_rng.sample(StandardNormal);
        }
    }
    Graph::new(n, edges, features, Some(labels), None)
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
}

fn read_text(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_token<T: std::str::FromStr>(path: &Path, line: usize, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {tok:?}")))
}

/// Reads a dataset directory (see the module docs for the layout).
pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read_text(&meta_path)?).map_err(|source| Error::Json {
        path: meta_path.clone(),
        source,
    })?;
    let n = meta.num_nodes;

    let edges_path = dir.join("edges.tsv");
    let mut edges = Vec::new();
    for (line, text) in data_lines(&read_text(&edges_path)?) {
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(&edges_path, line, "expected two node ids"));
        }
        let u: usize = parse_token(&edges_path, line, toks[0])?;
        let v: usize = parse_token(&edges_path, line, toks[1])?;
        if u >= n || v >= n {
            return Err(Error::InconsistentDimensions(format!(
                "{}:{line}: endpoint >= num_nodes ({n})",
                edges_path.display()
            )));
        }
        edges.push((u, v));
    }

    let feat_path = dir.join("features.tsv");
    let mut features = DenseMatrix::zeros(meta.num_features, n);
    let mut count = 0;
    for (line, text) in data_lines(&read_text(&feat_path)?) {
        if count >= n {
            return Err(Error::InconsistentDimensions(format!(
                "{}: more than {n} feature rows",
                feat_path.display()
            )));
        }
        let mut width = 0;
        for (r, tok) in text.split_whitespace().enumerate() {
            if r >= meta.num_features {
                width = r + 1;
                continue;
            }
            let v: f64 = parse_token(&feat_path, line, tok)?;
            if !v.is_finite() {
                return Err(parse_err(&feat_path, line, "non-finite feature"));
            }
            features[(r, count)] = v;
            width = r + 1;
        }
        if width != meta.num_features {
            return Err(Error::InconsistentDimensions(format!(
                "{}:{line}: {width} values, expected {}",
                feat_path.display(),
                meta.num_features
            )));
        }
        count += 1;
    }
    if count != n {
        return Err(Error::InconsistentDimensions(format!(
            "{}: {count} feature rows for {n} nodes",
            feat_path.display()
        )));
    }

    let labels_path = dir.join("labels.tsv");
    let labels = if labels_path.exists() {
        let mut labels = Vec::with_capacity(n);
        for (line, text) in data_lines(&read_text(&labels_path)?) {
            let c: usize = parse_token(&labels_path, line, text)?;
            if meta.num_classes > 0 && c >= meta.num_classes {
                return Err(Error::InconsistentDimensions(format!(
                    "{}:{line}: class {c} >= num_classes ({})",
                    labels_path.display(),
                    meta.num_classes
                )));
            }
            labels.push(c);
        }
        Some(labels)
    } else {
        None
    };

    let splits_path = dir.join("splits.json");
    let splits = if splits_path.exists() {
        let s: Splits = serde_json::from_str(&read_text(&splits_path)?).map_err(|source| Error::Json {
            path: splits_path.clone(),
            source,
        })?;
        Some(s)
    } else {
        None
    };

    Graph::new(n, edges, features, labels, splits)
}

fn write_file(path: PathBuf, contents: &[u8]) -> Result<()> {
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(contents).map_err(|e| Error::io(&path, e))
}

/// Writes `g` in the dataset directory format, creating `dir` if needed.
/// Reals are written in shortest round-trip form, so loading gives back the
/// same graph.
pub fn save_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta = Meta {
        num_nodes: g.num_nodes(),
        num_features: g.feature_dim(),
        num_classes: g.num_classes(),
    };
    let mut meta_json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    meta_json.push('\n');
    write_file(dir.join("meta.json"), meta_json.as_bytes())?;

    let mut edges = String::new();
    for &(u, v) in g.edges() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write_file(dir.join("edges.tsv"), edges.as_bytes())?;

    let mut feats = String::new();
    for node in 0..g.num_nodes() {
        let row: Vec<String> = (0..g.feature_dim())
            .map(|r| format!("{}", g.features()[(r, node)]))
            .collect();
        feats.push_str(&row.join("\t"));
        feats.push('\n');
    }
    write_file(dir.join("features.tsv"), feats.as_bytes())?;

    if let Some(labels) = g.labels() {
        let text: String = labels.iter().map(|c| format!("{c}\n")).collect();
        write_file(dir.join("labels.tsv"), text.as_bytes())?;
    }
    if let Some(splits) = g.splits() {
        let mut text = serde_json::to_string(splits).expect("splits serialize");
        text.push('\n');
        write_file(dir.join("splits.json"), text.as_bytes())?;
    }
    Ok(())
}
