//! Plain-text dataset directory: `meta.json` plus CSV tables.
//!
//! | file           | node tasks                 | graph-level tasks                      |
//! |----------------|----------------------------|----------------------------------------|
//! | `edges.csv`    | `src,dst,weight`           | `graph_id,src,dst,weight`¹             |
//! | `features.csv` | `node_id,f0,..` (dense) or `node_id,feature,value` (sparse) | same with a leading `graph_id` |
//! | `targets.csv`  | `node_id,label` or `node_id,y0,..` | `graph_id,label` or `graph_id,y0,..` |
//! | `masks.csv`    | `node_id,split`            | `graph_id,split`                       |
//! | `graphs.csv`   | absent                     | `graph_id,n_nodes`                     |
//!
//! ¹ When every graph shares one adjacency (`shared_graph: true`) edges are
//! stored once without `graph_id`.
//!
//! Each undirected edge is written once with `src ≤ dst`. Reals use Rust's
//! shortest round-trip formatting, so `load(save(d)) == d` exactly.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DataError, Graph, GraphDataset, Split, Splits, Targets, TaskKind};
use crate::linalg::{build_csr, DenseMatrix, SparseMatrix};

pub const FORMAT_VERSION: u32 = 1;

const EDGES: &str = "edges.csv";
const FEATURES: &str = "features.csv";
const TARGETS: &str = "targets.csv";
const MASKS: &str = "masks.csv";
const GRAPHS: &str = "graphs.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FeatureFormat {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SplitSizes {
    train: usize,
    val: usize,
    test: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    format_version: u32,
    name: String,
    task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_graphs: Option<usize>,
    n_features: usize,
    n_classes: usize,
    n_targets: usize,
    #[serde(default)]
    shared_graph: bool,
    feature_format: FeatureFormat,
    split_sizes: SplitSizes,
    files: BTreeMap<String, String>,
    sha256: BTreeMap<String, String>,
    directed: bool,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    extra: BTreeMap<String, serde_json::Value>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn push_real(out: &mut String, v: f64) {
    write!(out, "{v:?}").expect("writing to a String cannot fail");
}

fn write_edges(out: &mut String, graph_id: Option<usize>, a: &SparseMatrix) {
    for (i, j, w) in a.triplets().filter(|&(i, j, _)| i <= j) {
        if let Some(g) = graph_id {
            write!(out, "{g},").unwrap();
        }
        write!(out, "{i},{j},").unwrap();
        push_real(out, w);
        out.push('\n');
    }
}

fn sparse_features_pay_off(graphs: &[Graph]) -> bool {
    let (mut nnz, mut total) = (0usize, 0usize);
    for g in graphs {
        nnz += g.features.values().iter().filter(|&&v| v != 0.0).count();
        total += g.features.len();
    }
    3 * nnz < total
}

fn write_features(
    out: &mut String,
    graph_id: Option<usize>,
    x: &DenseMatrix,
    format: FeatureFormat,
) {
    let prefix = graph_id.map(|g| format!("{g},")).unwrap_or_default();
    for i in 0..x.n_rows() {
        match format {
            FeatureFormat::Dense => {
                write!(out, "{prefix}{i}").unwrap();
                for &v in x.row(i) {
                    out.push(',');
                    push_real(out, v);
                }
                out.push('\n');
            }
            FeatureFormat::Sparse => {
                for (f, &v) in x.row(i).iter().enumerate().filter(|(_, &v)| v != 0.0) {
                    write!(out, "{prefix}{i},{f},").unwrap();
                    push_real(out, v);
                    out.push('\n');
                }
            }
        }
    }
}

/// Writes `dataset` to `dir` (created if missing) in the canonical format.
pub fn save_canonical(dataset: &GraphDataset, dir: impl AsRef<Path>) -> Result<(), DataError> {
    let dir = dir.as_ref();
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let node_level = dataset.task.is_node_level();
    let id_col = if node_level { "node_id" } else { "graph_id" };
    let shared = !node_level && dataset.shared_graph();
    let feature_format = if sparse_features_pay_off(&dataset.graphs) {
        FeatureFormat::Sparse
    } else {
        FeatureFormat::Dense
    };
    let f = dataset.n_features();

    let mut files: BTreeMap<&str, String> = BTreeMap::new();

    let mut edges = String::new();
    if node_level || shared {
        edges.push_str("src,dst,weight\n");
        write_edges(&mut edges, None, &dataset.graphs[0].adjacency);
    } else {
        edges.push_str("graph_id,src,dst,weight\n");
        for (g, graph) in dataset.graphs.iter().enumerate() {
            write_edges(&mut edges, Some(g), &graph.adjacency);
        }
    }
    files.insert(EDGES, edges);

    let mut feats = String::new();
    if !node_level {
        feats.push_str("graph_id,");
    }
    match feature_format {
        FeatureFormat::Dense => {
            feats.push_str("node_id");
            for k in 0..f {
                write!(feats, ",f{k}").unwrap();
            }
            feats.push('\n');
        }
        FeatureFormat::Sparse => feats.push_str("node_id,feature,value\n"),
    }
    for (g, graph) in dataset.graphs.iter().enumerate() {
        write_features(
            &mut feats,
            (!node_level).then_some(g),
            &graph.features,
            feature_format,
        );
    }
    files.insert(FEATURES, feats);

    let mut targets = String::new();
    match &dataset.targets {
        Targets::Classes(c) => {
            writeln!(targets, "{id_col},label").unwrap();
            for (i, y) in c.iter().enumerate() {
                writeln!(targets, "{i},{y}").unwrap();
            }
        }
        Targets::Values(v) => {
            targets.push_str(id_col);
            for k in 0..v.n_cols() {
                write!(targets, ",y{k}").unwrap();
            }
            targets.push('\n');
            for i in 0..v.n_rows() {
                write!(targets, "{i}").unwrap();
                for &y in v.row(i) {
                    targets.push(',');
                    push_real(&mut targets, y);
                }
                targets.push('\n');
            }
        }
    }
    files.insert(TARGETS, targets);

    let mut masks = format!("{id_col},split\n");
    let mut rows: Vec<(usize, Split)> = [Split::Train, Split::Val, Split::Test]
        .into_iter()
        .flat_map(|s| dataset.splits.get(s).iter().map(move |&i| (i, s)))
        .collect();
    rows.sort_unstable_by_key(|&(i, _)| i);
    for (i, s) in rows {
        writeln!(masks, "{i},{}", s.as_str()).unwrap();
    }
    files.insert(MASKS, masks);

    if !node_level {
        let mut graphs = String::from("graph_id,n_nodes\n");
        for (g, graph) in dataset.graphs.iter().enumerate() {
            writeln!(graphs, "{g},{}", graph.n_nodes()).unwrap();
        }
        files.insert(GRAPHS, graphs);
    }

    let mut sha256 = BTreeMap::new();
    let mut names = BTreeMap::new();
    for (name, content) in &files {
        let path = dir.join(name);
        fs::write(&path, content).map_err(|e| DataError::io(&path, e))?;
        let key = name.trim_end_matches(".csv").to_string();
        sha256.insert(key.clone(), sha256_hex(content.as_bytes()));
        names.insert(key, name.to_string());
    }

    let meta = Meta {
        format_version: FORMAT_VERSION,
        name: dataset.name.clone(),
        task: dataset.task,
        n_nodes: node_level.then(|| dataset.n_entities()),
        n_graphs: (!node_level).then_some(dataset.graphs.len()),
        n_features: f,
        n_classes: dataset.n_classes,
        n_targets: dataset.n_targets(),
        shared_graph: shared,
        feature_format,
        split_sizes: SplitSizes {
            train: dataset.splits.train.len(),
            val: dataset.splits.val.len(),
            test: dataset.splits.test.len(),
        },
        files: names,
        sha256,
        directed: false,
        seed: dataset.seed,
        extra: dataset.extra.clone(),
    };
    let path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&path, json + "\n").map_err(|e| DataError::io(&path, e))
}

/// A parsed CSV table with its header and 1-based line numbers.
struct Table {
    file: String,
    header: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn parse(file: &str, bytes: &[u8]) -> Result<Self, DataError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(bytes);
        let header = reader
            .headers()
            .map_err(|e| DataError::schema(file, Some(1), e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line());
                DataError::schema(file, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self {
            file: file.to_string(),
            header,
            rows,
        })
    }

    fn expect_header(&self, want: &[&str]) -> Result<(), DataError> {
        if self.header.len() != want.len() || self.header.iter().zip(want).any(|(a, b)| a != b) {
            return Err(DataError::schema(
                &self.file,
                Some(1),
                format!("header {:?}, expected {:?}", self.header, want),
            ));
        }
        Ok(())
    }

    fn expect_prefix(&self, want: &[&str], total: usize) -> Result<(), DataError> {
        if self.header.len() != total || self.header.iter().zip(want).any(|(a, b)| a != b) {
            return Err(DataError::schema(
                &self.file,
                Some(1),
                format!(
                    "header {:?} must start with {want:?} and have {total} columns",
                    self.header
                ),
            ));
        }
        Ok(())
    }

    fn index(&self, line: u64, field: &str, bound: usize) -> Result<usize, DataError> {
        let i: usize = field.trim().parse().map_err(|_| {
            DataError::schema(&self.file, Some(line), format!("`{field}` is not an index"))
        })?;
        if i >= bound {
            return Err(DataError::DanglingIndex {
                file: self.file.clone(),
                line,
                index: i,
                bound,
            });
        }
        Ok(i)
    }

    fn real(&self, line: u64, field: &str) -> Result<f64, DataError> {
        let v: f64 = field.trim().parse().map_err(|_| {
            DataError::schema(&self.file, Some(line), format!("`{field}` is not a number"))
        })?;
        if !v.is_finite() {
            return Err(DataError::schema(
                &self.file,
                Some(line),
                "non-finite value",
            ));
        }
        Ok(v)
    }
}

fn read_verified(dir: &Path, meta: &Meta, key: &str) -> Result<Table, DataError> {
    let name = meta
        .files
        .get(key)
        .ok_or_else(|| DataError::schema("meta.json", None, format!("files.{key} missing")))?;
    let expected = meta
        .sha256
        .get(key)
        .ok_or_else(|| DataError::schema("meta.json", None, format!("sha256.{key} missing")))?;
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| DataError::io(&path, e))?;
    let actual = sha256_hex(&bytes);
    if !actual.eq_ignore_ascii_case(expected) {
        return Err(DataError::Checksum {
            file: name.clone(),
            expected: expected.clone(),
            actual,
        });
    }
    Table::parse(name, &bytes)
}

type EdgeList = Vec<(usize, usize, f64)>;

fn parse_edges(t: &Table, sizes: &[usize], graph_col: bool) -> Result<Vec<EdgeList>, DataError> {
    let mut per_graph = vec![Vec::new(); if graph_col { sizes.len() } else { 1 }];
    for (line, rec) in &t.rows {
        let (g, off) = if graph_col {
            (t.index(*line, &rec[0], sizes.len())?, 1)
        } else {
            (0, 0)
        };
        let i = t.index(*line, &rec[off], sizes[g])?;
        let j = t.index(*line, &rec[off + 1], sizes[g])?;
        let w = t.real(*line, &rec[off + 2])?;
        if w < 0.0 {
            return Err(DataError::schema(
                &t.file,
                Some(*line),
                "negative edge weight",
            ));
        }
        if i > j {
            return Err(DataError::schema(
                &t.file,
                Some(*line),
                "edges must be stored with src <= dst",
            ));
        }
        per_graph[g].push((i, j, w));
    }
    Ok(per_graph)
}

fn adjacency_from(
    t: &Table,
    n: usize,
    edges: &[(usize, usize, f64)],
) -> Result<Arc<SparseMatrix>, DataError> {
    build_csr(n, edges)
        .map(Arc::new)
        .map_err(|e| DataError::schema(&t.file, None, e.to_string()))
}

/// Loads and validates a canonical dataset directory.
pub fn load_canonical(dir: impl AsRef<Path>) -> Result<GraphDataset, DataError> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta_bytes = fs::read(&meta_path).map_err(|e| DataError::io(&meta_path, e))?;
    let meta: Meta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| DataError::schema("meta.json", Some(e.line() as u64), e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(DataError::schema(
            "meta.json",
            None,
            format!(
                "format_version {} unsupported (expected {FORMAT_VERSION})",
                meta.format_version
            ),
        ));
    }
    if meta.directed {
        return Err(DataError::schema(
            "meta.json",
            None,
            "directed datasets are not supported",
        ));
    }
    let node_level = meta.task.is_node_level();
    let id_col = if node_level { "node_id" } else { "graph_id" };
    let f = meta.n_features;

    // Per-graph node counts.
    let sizes: Vec<usize> = if node_level {
        let n = meta.n_nodes.ok_or_else(|| {
            DataError::schema("meta.json", None, "n_nodes required for node tasks")
        })?;
        vec![n]
    } else {
        let n_graphs = meta.n_graphs.ok_or_else(|| {
            DataError::schema("meta.json", None, "n_graphs required for graph-level tasks")
        })?;
        let t = read_verified(dir, &meta, "graphs")?;
        t.expect_header(&["graph_id", "n_nodes"])?;
        if t.rows.len() != n_graphs {
            return Err(DataError::schema(
                &t.file,
                None,
                format!(
                    "{} rows, meta.json declares {n_graphs} graphs",
                    t.rows.len()
                ),
            ));
        }
        let mut sizes = vec![None; n_graphs];
        for (line, rec) in &t.rows {
            let g = t.index(*line, &rec[0], n_graphs)?;
            let n: usize = rec[1]
                .trim()
                .parse()
                .map_err(|_| DataError::schema(&t.file, Some(*line), "n_nodes is not a count"))?;
            if sizes[g].replace(n).is_some() {
                return Err(DataError::schema(
                    &t.file,
                    Some(*line),
                    format!("graph {g} listed twice"),
                ));
            }
        }
        sizes
            .into_iter()
            .map(|s| s.expect("every id in range seen once"))
            .collect()
    };

    let edges_t = read_verified(dir, &meta, "edges")?;
    let adjacency: Vec<Arc<SparseMatrix>> = if node_level || meta.shared_graph {
        edges_t.expect_header(&["src", "dst", "weight"])?;
        if meta.shared_graph && sizes.windows(2).any(|w| w[0] != w[1]) {
            return Err(DataError::schema(
                "graphs.csv",
                None,
                "shared_graph requires equal graph sizes",
            ));
        }
        let n = sizes.first().copied().unwrap_or(0);
        let edges = parse_edges(&edges_t, &[n], false)?;
        let a = adjacency_from(&edges_t, n, &edges[0])?;
        vec![a; sizes.len()]
    } else {
        edges_t.expect_header(&["graph_id", "src", "dst", "weight"])?;
        let per_graph = parse_edges(&edges_t, &sizes, true)?;
        sizes
            .iter()
            .zip(&per_graph)
            .map(|(&n, e)| adjacency_from(&edges_t, n, e))
            .collect::<Result<_, _>>()?
    };

    let feats_t = read_verified(dir, &meta, "features")?;
    let lead: Vec<&str> = if node_level {
        vec!["node_id"]
    } else {
        vec!["graph_id", "node_id"]
    };
    let off = lead.len();
    let mut features: Vec<DenseMatrix> = sizes.iter().map(|&n| DenseMatrix::zeros(n, f)).collect();
    match meta.feature_format {
        FeatureFormat::Dense => {
            let mut want: Vec<String> = lead.iter().map(|s| s.to_string()).collect();
            want.extend((0..f).map(|k| format!("f{k}")));
            let want: Vec<&str> = want.iter().map(String::as_str).collect();
            feats_t.expect_header(&want)?;
            let mut seen: Vec<Vec<bool>> = sizes.iter().map(|&n| vec![false; n]).collect();
            for (line, rec) in &feats_t.rows {
                let g = if node_level {
                    0
                } else {
                    feats_t.index(*line, &rec[0], sizes.len())?
                };
                let i = feats_t.index(*line, &rec[off - 1], sizes[g])?;
                if std::mem::replace(&mut seen[g][i], true) {
                    return Err(DataError::schema(
                        &feats_t.file,
                        Some(*line),
                        format!("node {i} listed twice"),
                    ));
                }
                let row = features[g].row_mut(i);
                for k in 0..f {
                    row[k] = feats_t.real(*line, &rec[off + k])?;
                }
            }
            let total: usize = sizes.iter().sum();
            if feats_t.rows.len() != total {
                return Err(DataError::schema(
                    &feats_t.file,
                    None,
                    format!("{} feature rows for {total} nodes", feats_t.rows.len()),
                ));
            }
        }
        FeatureFormat::Sparse => {
            let mut want = lead.clone();
            want.extend(["feature", "value"]);
            feats_t.expect_header(&want)?;
            for (line, rec) in &feats_t.rows {
                let g = if node_level {
                    0
                } else {
                    feats_t.index(*line, &rec[0], sizes.len())?
                };
                let i = feats_t.index(*line, &rec[off - 1], sizes[g])?;
                let k = feats_t.index(*line, &rec[off], f)?;
                features[g].set(i, k, feats_t.real(*line, &rec[off + 1])?);
            }
        }
    }

    let n_entities = if node_level { sizes[0] } else { sizes.len() };
    let targets_t = read_verified(dir, &meta, "targets")?;
    if targets_t.rows.len() != n_entities {
        return Err(DataError::schema(
            &targets_t.file,
            None,
            format!(
                "{} target rows for {n_entities} entities",
                targets_t.rows.len()
            ),
        ));
    }
    let targets = if meta.task.is_classification() {
        targets_t.expect_header(&[id_col, "label"])?;
        let mut labels = vec![None; n_entities];
        for (line, rec) in &targets_t.rows {
            let i = targets_t.index(*line, &rec[0], n_entities)?;
            let y = targets_t.index(*line, &rec[1], meta.n_classes)?;
            if labels[i].replace(y).is_some() {
                return Err(DataError::schema(
                    &targets_t.file,
                    Some(*line),
                    format!("entity {i} listed twice"),
                ));
            }
        }
        Targets::Classes(
            labels
                .into_iter()
                .map(|y| y.expect("row count equals entity count"))
                .collect(),
        )
    } else {
        let k = meta.n_targets;
        targets_t.expect_prefix(&[id_col], k + 1)?;
        let mut values = DenseMatrix::zeros(n_entities, k);
        let mut seen = vec![false; n_entities];
        for (line, rec) in &targets_t.rows {
            let i = targets_t.index(*line, &rec[0], n_entities)?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(DataError::schema(
                    &targets_t.file,
                    Some(*line),
                    format!("entity {i} listed twice"),
                ));
            }
            for c in 0..k {
                values.set(i, c, targets_t.real(*line, &rec[c + 1])?);
            }
        }
        Targets::Values(values)
    };

    let masks_t = read_verified(dir, &meta, "masks")?;
    masks_t.expect_header(&[id_col, "split"])?;
    let mut splits = Splits::default();
    let mut assigned: HashMap<usize, u64> = HashMap::new();
    for (line, rec) in &masks_t.rows {
        let i = masks_t.index(*line, &rec[0], n_entities)?;
        if let Some(prev) = assigned.insert(i, *line) {
            return Err(DataError::schema(
                &masks_t.file,
                Some(*line),
                format!("entity {i} already assigned on line {prev}"),
            ));
        }
        match rec[1].trim() {
            "train" => splits.train.push(i),
            "val" => splits.val.push(i),
            "test" => splits.test.push(i),
            other => {
                return Err(DataError::schema(
                    &masks_t.file,
                    Some(*line),
                    format!("unknown split `{other}`"),
                ))
            }
        }
    }
    let got = SplitSizes {
        train: splits.train.len(),
        val: splits.val.len(),
        test: splits.test.len(),
    };
    if got != meta.split_sizes {
        return Err(DataError::schema(
            &masks_t.file,
            None,
            format!(
                "split sizes {got:?} differ from meta.json {:?}",
                meta.split_sizes
            ),
        ));
    }

    let dataset = GraphDataset {
        name: meta.name,
        task: meta.task,
        n_classes: meta.n_classes,
        graphs: adjacency
            .into_iter()
            .zip(features)
            .map(|(adjacency, features)| Graph {
                adjacency,
                features,
            })
            .collect(),
        targets,
        splits: splits.sorted(),
        seed: meta.seed,
        extra: meta.extra,
    };
    dataset.validate()?;
    Ok(dataset)
}
