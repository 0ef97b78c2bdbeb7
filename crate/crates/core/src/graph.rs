//! Undirected simple graphs, labeled graph datasets, and their text formats.
//!
//! Two on-disk layouts are understood:
//!
//! * **edge list**: one `i j` pair per line (0-based), `#` comments, and an
//!   optional `#features` sentinel followed by one whitespace-separated row of
//!   reals per node. Two directive comments are recognised when present:
//!   `#nodes N` fixes the node count (so trailing isolated nodes survive a
//!   round trip) and `#label K` attaches a class label.
//! * **TU batch**: `<name>_A.txt` (global 1-based edge pairs),
//!   `<name>_graph_indicator.txt`, `<name>_graph_labels.txt` and optionally
//!   `<name>_node_attributes.txt`, comma or whitespace separated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// An undirected graph without self-loops or parallel edges.
///
/// Edges are stored normalized as `(i, j)` with `i < j`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    features: Option<Array2<f64>>,
    label: Option<usize>,
}

impl Graph {
    /// Builds a graph from an edge iterator. `(i, j)` and `(j, i)` denote the
    /// same edge and repeats collapse to one.
    pub fn new<I>(n: usize, edges: I, features: Option<Array2<f64>>) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(Error::InvalidGraph("node count must be at least 1".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop on node {i}")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        if let Some(x) = &features {
            if x.nrows() != n {
                return Err(Error::shape("feature rows", n, x.nrows()));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidGraph("features must be finite".into()));
            }
        }
        Ok(Graph {
            n,
            edges: set.into_iter().collect(),
            features,
            label: None,
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    /// Replaces the node features, keeping structure and label.
    pub fn with_features(self, features: Option<Array2<f64>>) -> Result<Self> {
        let label = self.label;
        let mut g = Graph::new(self.n, self.edges, features)?;
        g.label = label;
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(|x| x.ncols())
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    /// Dense 0/1 adjacency matrix.
    pub fn adjacency(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for &(i, j) in &self.edges {
            a[[i, j]] = 1.0;
            a[[j, i]] = 1.0;
        }
        a
    }

    /// Number of neighbours of every node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Sizes of the connected components, in order of their smallest node.
    pub fn component_sizes(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(i, j) in &self.edges {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
        let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
        for v in 0..self.n {
            *sizes.entry(find(&mut parent, v)).or_default() += 1;
        }
        sizes.into_values().collect()
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::shape("permutation length", self.n, perm.len()));
        }
        let features = self.features.as_ref().map(|x| {
            let mut y = Array2::zeros(x.raw_dim());
            for (old, &new) in perm.iter().enumerate() {
                y.row_mut(new).assign(&x.row(old));
            }
            y
        });
        let mut g = Graph::new(
            self.n,
            self.edges.iter().map(|&(i, j)| (perm[i], perm[j])),
            features,
        )?;
        g.label = self.label;
        Ok(g)
    }

    /// Serializes to the edge-list format, always emitting the `#nodes`
    /// directive and, when set, `#label`.
    pub fn to_edge_list(&self) -> String {
        self.to_edge_list_with_label(self.label.map(|l| l as i64))
    }

    fn to_edge_list_with_label(&self, label: Option<i64>) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#nodes {}", self.n);
        if let Some(l) = label {
            let _ = writeln!(out, "#label {l}");
        }
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        if let Some(x) = &self.features {
            out.push_str("#features\n");
            for row in x.rows() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(out, "{}", cells.join(" "));
            }
        }
        out
    }
}

struct RawEdgeList {
    nodes: Option<usize>,
    label: Option<i64>,
    edges: Vec<(usize, usize, usize)>,
    features: Option<Vec<(usize, Vec<f64>)>>,
}

fn parse_raw(text: &str) -> Result<RawEdgeList> {
    let mut raw = RawEdgeList {
        nodes: None,
        label: None,
        edges: Vec::new(),
        features: None,
    };
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            let mut words = rest.split_whitespace();
            match words.next() {
                Some("features") if words.next().is_none() => {
                    if raw.features.is_some() {
                        return Err(Error::parse(lineno, "repeated #features section"));
                    }
                    raw.features = Some(Vec::new());
                }
                Some("nodes") => {
                    let n = words
                        .next()
                        .and_then(|w| w.parse().ok())
                        .ok_or_else(|| Error::parse(lineno, "malformed #nodes directive"))?;
                    raw.nodes = Some(n);
                }
                Some("label") => {
                    let l = words
                        .next()
                        .and_then(|w| w.parse().ok())
                        .ok_or_else(|| Error::parse(lineno, "malformed #label directive"))?;
                    raw.label = Some(l);
                }
                _ => {}
            }
            continue;
        }
        if let Some(rows) = raw.features.as_mut() {
            let row = line
                .split_whitespace()
                .map(f64::from_str)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(lineno, format!("bad feature value: {e}")))?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(lineno, "feature values must be finite"));
            }
            rows.push((lineno, row));
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::parse(
                lineno,
                format!("expected \"i j\", got {line:?}"),
            ));
        };
        let i = a
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad node index {a:?}")))?;
        let j = b
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad node index {b:?}")))?;
        if i == j {
            return Err(Error::parse(lineno, format!("self-loop on node {i}")));
        }
        raw.edges.push((i, j, lineno));
    }
    Ok(raw)
}

fn resolve(raw: RawEdgeList, n: usize, d: Option<usize>) -> Result<Graph> {
    for &(i, j, line) in &raw.edges {
        if i >= n || j >= n {
            return Err(Error::parse(
                line,
                format!("edge ({i}, {j}) out of range for {n} nodes"),
            ));
        }
    }
    let features = match raw.features {
        None => None,
        Some(rows) => {
            if rows.len() != n {
                return Err(Error::Parse {
                    line: rows.last().map_or(0, |r| r.0),
                    msg: format!("expected {n} feature rows, found {}", rows.len()),
                });
            }
            let d = match d {
                Some(d) => d,
                None => rows.first().map_or(0, |r| r.1.len()),
            };
            let mut x = Array2::zeros((n, d));
            for (r, (line, row)) in rows.into_iter().enumerate() {
                if row.len() != d {
                    return Err(Error::parse(
                        line,
                        format!("expected {d} feature values, found {}", row.len()),
                    ));
                }
                for (c, v) in row.into_iter().enumerate() {
                    x[[r, c]] = v;
                }
            }
            Some(x)
        }
    };
    Graph::new(n, raw.edges.into_iter().map(|(i, j, _)| (i, j)), features)
}

/// Parses an edge list for a graph with a known node count `n` and feature
/// dimension `d`.
pub fn parse_edge_list(text: &str, n: usize, d: usize) -> Result<Graph> {
    let raw = parse_raw(text)?;
    if let Some(m) = raw.nodes {
        if m != n {
            return Err(Error::parse(
                0,
                format!("#nodes {m} conflicts with n = {n}"),
            ));
        }
    }
    let label = raw.label;
    let g = resolve(raw, n, Some(d))?;
    Ok(match label {
        Some(l) if l >= 0 => g.with_label(l as usize),
        _ => g,
    })
}

/// Parses an edge list, inferring the node count from `#nodes`, the feature
/// rows, or the largest endpoint (in that order of precedence). The raw
/// `#label` value is returned alongside.
pub fn parse_edge_list_auto(text: &str) -> Result<(Graph, Option<i64>)> {
    let raw = parse_raw(text)?;
    let n = match (raw.nodes, &raw.features) {
        (Some(n), _) => n,
        (None, Some(rows)) => rows.len(),
        (None, None) => raw
            .edges
            .iter()
            .map(|&(i, j, _)| i.max(j) + 1)
            .max()
            .unwrap_or(1),
    };
    let label = raw.label;
    Ok((resolve(raw, n, None)?, label))
}

/// Reads a single graph from an edge-list file.
pub fn read_graph(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (g, label) = parse_edge_list_auto(&text)?;
    Ok(match label {
        Some(l) if l >= 0 => g.with_label(l as usize),
        _ => g,
    })
}

/// Train/validation/test partition of dataset indices.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// 80/10/10 partition of `0..len` after a seeded shuffle.
    pub fn seeded(len: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (0.8 * len as f64).round() as usize;
        let n_val = ((0.1 * len as f64).round() as usize).min(len - n_train);
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        Split {
            train: idx,
            val,
            test,
        }
    }

    fn validate(&self, len: usize) -> Result<()> {
        let mut seen = vec![false; len];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= len {
                return Err(Error::Dataset(format!("split index {i} out of bounds")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Dataset(format!("split index {i} appears twice")));
            }
        }
        Ok(())
    }
}

/// Seed used for the split assigned by the file loaders.
pub const DEFAULT_SPLIT_SEED: u64 = 0;

/// An ordered collection of labeled graphs with a fixed split.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    graphs: Vec<Graph>,
    num_classes: usize,
    /// Original label value of each class id.
    label_values: Vec<i64>,
    split: Split,
}

impl GraphDataset {
    /// Every graph must carry a label `< num_classes`; all graphs must agree on
    /// whether they have features and on the feature dimension.
    pub fn new(graphs: Vec<Graph>, num_classes: usize, split: Split) -> Result<Self> {
        let label_values = (0..num_classes as i64).collect();
        Self::with_label_values(graphs, label_values, split)
    }

    fn with_label_values(graphs: Vec<Graph>, label_values: Vec<i64>, split: Split) -> Result<Self> {
        let num_classes = label_values.len();
        for (k, g) in graphs.iter().enumerate() {
            match g.label {
                Some(l) if l < num_classes => {}
                Some(l) => {
                    return Err(Error::Dataset(format!(
                        "graph {k} has label {l} but only {num_classes} classes"
                    )))
                }
                None => return Err(Error::Dataset(format!("graph {k} has no label"))),
            }
        }
        if let Some(first) = graphs.first() {
            let d = first.feature_dim();
            if let Some(k) = graphs.iter().position(|g| g.feature_dim() != d) {
                return Err(Error::Dataset(format!(
                    "graph {k} has feature dimension {:?}, graph 0 has {d:?}",
                    graphs[k].feature_dim()
                )));
            }
        }
        split.validate(graphs.len())?;
        Ok(GraphDataset {
            graphs,
            num_classes,
            label_values,
            split,
        })
    }

    /// Builds a dataset from raw integer labels, mapping the distinct values
    /// in ascending order onto class ids `0..C`.
    pub fn from_raw_labels(graphs: Vec<Graph>, raw_labels: &[i64], split: Split) -> Result<Self> {
        if graphs.len() != raw_labels.len() {
            return Err(Error::Dataset(format!(
                "{} graphs but {} labels",
                graphs.len(),
                raw_labels.len()
            )));
        }
        let values: Vec<i64> = raw_labels
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let graphs = graphs
            .into_iter()
            .zip(raw_labels)
            .map(|(g, l)| {
                let class = values.binary_search(l).expect("label collected above");
                g.with_label(class)
            })
            .collect();
        Self::with_label_values(graphs, values, split)
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn label_values(&self) -> &[i64] {
        &self.label_values
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.graphs.first().and_then(Graph::feature_dim)
    }

    fn raw_label(&self, g: &Graph) -> i64 {
        self.label_values[g.label.expect("dataset graphs are labeled")]
    }

    /// Writes the dataset in TU batch layout as `<dir>/<name>_*.txt`.
    pub fn write_tu_batch(&self, dir: impl AsRef<Path>, name: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (mut a, mut indicator, mut labels, mut attrs) =
            (String::new(), String::new(), String::new(), String::new());
        let mut offset = 0;
        for (k, g) in self.graphs.iter().enumerate() {
            for &(i, j) in g.edges() {
                let _ = writeln!(a, "{}, {}", offset + i + 1, offset + j + 1);
                let _ = writeln!(a, "{}, {}", offset + j + 1, offset + i + 1);
            }
            for _ in 0..g.node_count() {
                let _ = writeln!(indicator, "{}", k + 1);
            }
            let _ = writeln!(labels, "{}", self.raw_label(g));
            if let Some(x) = g.features() {
                for row in x.rows() {
                    let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                    let _ = writeln!(attrs, "{}", cells.join(", "));
                }
            }
            offset += g.node_count();
        }
        let write = |suffix: &str, body: &str| -> Result<()> {
            let path = dir.join(format!("{name}_{suffix}.txt"));
            fs::write(&path, body).map_err(|e| Error::io(path, e))
        };
        write("A", &a)?;
        write("graph_indicator", &indicator)?;
        write("graph_labels", &labels)?;
        if self.feature_dim().is_some() {
            write("node_attributes", &attrs)?;
        }
        Ok(())
    }

    /// Writes one edge-list file per graph (`graph_00000.txt`, ...) carrying
    /// `#label` directives.
    pub fn write_edge_list_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (k, g) in self.graphs.iter().enumerate() {
            let path = dir.join(format!("graph_{k:05}.txt"));
            fs::write(&path, g.to_edge_list_with_label(Some(self.raw_label(g))))
                .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// On-disk dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    EdgeListDir,
    TuBatch,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge-list-dir" => Ok(DatasetFormat::EdgeListDir),
            "tu-batch" => Ok(DatasetFormat::TuBatch),
            other => Err(Error::InvalidConfig(format!(
                "unknown dataset format {other:?} (expected edge-list-dir or tu-batch)"
            ))),
        }
    }
}

/// Guesses the layout of `path`: a directory holding a `*_A.txt` file, or a
/// `<dir>/<name>` prefix, is a TU batch; any other directory is an edge-list
/// directory.
pub fn detect_format(path: &Path) -> DatasetFormat {
    if path.is_dir() {
        if find_tu_prefix(path).is_ok() {
            DatasetFormat::TuBatch
        } else {
            DatasetFormat::EdgeListDir
        }
    } else {
        DatasetFormat::TuBatch
    }
}

fn find_tu_prefix(path: &Path) -> Result<PathBuf> {
    if !path.is_dir() {
        return Ok(path.to_path_buf());
    }
    let mut found = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        if let Some(name) = entry.file_name().to_str() {
            if let Some(stem) = name.strip_suffix("_A.txt") {
                found.push(path.join(stem));
            }
        }
    }
    match found.len() {
        1 => Ok(found.pop().unwrap()),
        0 => Err(Error::Dataset(format!(
            "{}: no <name>_A.txt file found",
            path.display()
        ))),
        _ => Err(Error::Dataset(format!(
            "{}: more than one <name>_A.txt file",
            path.display()
        ))),
    }
}

/// Loads a labeled dataset. The split is the seeded 80/10/10 partition from
/// [`Split::seeded`] with [`DEFAULT_SPLIT_SEED`].
pub fn parse_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<GraphDataset> {
    let path = path.as_ref();
    match format {
        DatasetFormat::TuBatch => parse_tu_batch(&find_tu_prefix(path)?),
        DatasetFormat::EdgeListDir => parse_edge_list_dir(path),
    }
}

fn parse_edge_list_dir(dir: &Path) -> Result<GraphDataset> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "txt" || e == "edges") {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset(format!(
            "{}: no edge-list files",
            dir.display()
        )));
    }
    let mut graphs = Vec::with_capacity(files.len());
    let mut labels = Vec::with_capacity(files.len());
    for p in &files {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let (g, label) = parse_edge_list_auto(&text)
            .map_err(|e| Error::Dataset(format!("{}: {e}", p.display())))?;
        let label = label
            .ok_or_else(|| Error::Dataset(format!("{}: missing #label directive", p.display())))?;
        graphs.push(g);
        labels.push(label);
    }
    let split = Split::seeded(graphs.len(), DEFAULT_SPLIT_SEED);
    GraphDataset::from_raw_labels(graphs, &labels, split)
}

fn read_table<T: FromStr>(path: &Path) -> Result<Vec<(usize, Vec<T>)>>
where
    T::Err: std::fmt::Display,
{
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<T>().map_err(|e| {
                    Error::Dataset(format!("{}:{}: {t:?}: {e}", path.display(), idx + 1))
                })
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push((idx + 1, row));
    }
    Ok(rows)
}

fn tu_file(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().unwrap_or_default().to_os_string();
    name.push(format!("_{suffix}.txt"));
    prefix.with_file_name(name)
}

fn single_column<T: Copy>(rows: Vec<(usize, Vec<T>)>, path: &Path) -> Result<Vec<T>> {
    rows.into_iter()
        .map(|(line, r)| match r.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Dataset(format!(
                "{}:{line}: expected a single value",
                path.display()
            ))),
        })
        .collect()
}

fn parse_tu_batch(prefix: &Path) -> Result<GraphDataset> {
    let ind_path = tu_file(prefix, "graph_indicator");
    let indicator: Vec<usize> = single_column(read_table(&ind_path)?, &ind_path)?;
    let lab_path = tu_file(prefix, "graph_labels");
    let labels: Vec<i64> = single_column(read_table(&lab_path)?, &lab_path)?;

    let num_graphs = indicator.iter().copied().max().unwrap_or(0);
    let present: BTreeSet<usize> = indicator.iter().copied().collect();
    if indicator.contains(&0) || present.len() != num_graphs {
        return Err(Error::Dataset(format!(
            "{}: graph ids must be contiguous starting at 1",
            ind_path.display()
        )));
    }
    if labels.len() != num_graphs {
        return Err(Error::Dataset(format!(
            "{} graphs in indicator but {} labels",
            num_graphs,
            labels.len()
        )));
    }

    // Global node -> (graph index, local id), local ids in file order.
    let mut local = Vec::with_capacity(indicator.len());
    let mut sizes = vec![0usize; num_graphs];
    for &gid in &indicator {
        local.push((gid - 1, sizes[gid - 1]));
        sizes[gid - 1] += 1;
    }

    let a_path = tu_file(prefix, "A");
    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (line, row) in read_table::<usize>(&a_path)? {
        let [u, v] = row[..] else {
            return Err(Error::Dataset(format!(
                "{}:{line}: expected an edge pair",
                a_path.display()
            )));
        };
        let lookup = |node: usize| {
            node.checked_sub(1)
                .and_then(|k| local.get(k).copied())
                .ok_or_else(|| {
                    Error::Dataset(format!(
                        "{}:{line}: node {node} out of range",
                        a_path.display()
                    ))
                })
        };
        let ((gu, lu), (gv, lv)) = (lookup(u)?, lookup(v)?);
        if gu != gv {
            return Err(Error::Dataset(format!(
                "{}:{line}: edge joins graphs {} and {}",
                a_path.display(),
                gu + 1,
                gv + 1
            )));
        }
        if lu == lv {
            return Err(Error::Dataset(format!(
                "{}:{line}: self-loop on node {u}",
                a_path.display()
            )));
        }
        edges[gu].push((lu, lv));
    }

    let attr_path = tu_file(prefix, "node_attributes");
    let mut features: Vec<Option<Array2<f64>>> = vec![None; num_graphs];
    if attr_path.exists() {
        let rows = read_table::<f64>(&attr_path)?;
        if rows.len() != indicator.len() {
            return Err(Error::Dataset(format!(
                "{} attribute rows for {} nodes",
                rows.len(),
                indicator.len()
            )));
        }
        let d = rows.first().map_or(0, |r| r.1.len());
        let mut mats: Vec<Array2<f64>> = sizes.iter().map(|&s| Array2::zeros((s, d))).collect();
        for ((line, row), &(g, l)) in rows.into_iter().zip(&local) {
            if row.len() != d {
                return Err(Error::Dataset(format!(
                    "{}:{line}: expected {d} attributes",
                    attr_path.display()
                )));
            }
            for (c, v) in row.into_iter().enumerate() {
                mats[g][[l, c]] = v;
            }
        }
        features = mats.into_iter().map(Some).collect();
    }

    let mut graphs = Vec::with_capacity(num_graphs);
    for (k, (e, x)) in edges.into_iter().zip(features).enumerate() {
        let g = Graph::new(sizes[k], e, x)
            .map_err(|err| Error::Dataset(format!("graph {}: {err}", k + 1)))?;
        graphs.push(g);
    }
    let split = Split::seeded(num_graphs, DEFAULT_SPLIT_SEED);
    GraphDataset::from_raw_labels(graphs, &labels, split)
}
