//! Propagation graphs, diffusion-tree merging, and dataset ingestion.
//!
//! A propagation graph is a directed tree rooted at the news node (index 0).
//! Each diffusion tree hangs off the news node through its root publication.
//! Nodes are stored in pre-order, so a parent always precedes its children.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("duplicate node id `{0}`")]
    DuplicateNodeId(String),
    #[error("diffusion tree node `{0}` has kind news; only v0 may be a news node")]
    NewsNodeInTree(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("graph `{graph_id}` is invalid: {}", join_violations(.violations))]
    InvalidGraph {
        graph_id: String,
        violations: Vec<Violation>,
    },
    #[error("duplicate graph id `{0}`")]
    DuplicateGraphId(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    News,
    Tweet,
    Retweet,
    Reply,
}

impl NodeKind {
    pub const ALL: [NodeKind; 4] = [
        NodeKind::News,
        NodeKind::Tweet,
        NodeKind::Retweet,
        NodeKind::Reply,
    ];

    pub fn index(self) -> usize {
        match self {
            NodeKind::News => 0,
            NodeKind::Tweet => 1,
            NodeKind::Retweet => 2,
            NodeKind::Reply => 3,
        }
    }
}

/// Graph class. `Fake` is the positive class everywhere in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fake,
    True,
}

impl Label {
    /// 1 for fake, 0 for true.
    pub fn target(self) -> u8 {
        match self {
            Label::Fake => 1,
            Label::True => 0,
        }
    }

    pub fn from_target(y: u8) -> Self {
        if y == 1 {
            Label::Fake
        } else {
            Label::True
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Fake => "fake",
            Label::True => "true",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawNode {
    #[serde(rename = "id")]
    pub node_id: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub profile_text: String,
    #[serde(default)]
    pub post_text: String,
    #[serde(rename = "followers", default)]
    pub follower_count: u64,
    #[serde(rename = "followees", default)]
    pub followee_count: u64,
    #[serde(rename = "statuses", default)]
    pub status_count: u64,
    #[serde(default)]
    pub verified: bool,
    /// Seconds since epoch; `None` for the news node.
    #[serde(default)]
    pub timestamp: Option<i64>,
}

impl RawNode {
    /// The news node v0: no user fields, no timestamp.
    pub fn news(node_id: impl Into<String>) -> Self {
        RawNode {
            node_id: node_id.into(),
            kind: NodeKind::News,
            profile_text: String::new(),
            post_text: String::new(),
            follower_count: 0,
            followee_count: 0,
            status_count: 0,
            verified: false,
            timestamp: None,
        }
    }

    pub fn post(node_id: impl Into<String>, kind: NodeKind, timestamp: i64) -> Self {
        RawNode {
            node_id: node_id.into(),
            kind,
            timestamp: Some(timestamp),
            ..RawNode::news("")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionTree {
    pub root: RawNode,
    pub children: Vec<DiffusionTree>,
}

impl DiffusionTree {
    pub fn leaf(root: RawNode) -> Self {
        DiffusionTree {
            root,
            children: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationGraph {
    pub graph_id: String,
    pub label: Label,
    pub nodes: Vec<RawNode>,
    pub edges: Vec<(usize, usize)>,
}

impl PropagationGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Parent index of every node (`None` for the root). Assumes a valid tree;
    /// on invalid graphs the last listed parent wins.
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.nodes.len()];
        for &(p, c) in &self.edges {
            if c < parents.len() {
                parents[c] = Some(p);
            }
        }
        parents
    }

    /// Depth of every node below v0 (v0 has depth 0).
    pub fn depths(&self) -> Vec<usize> {
        let children = self.children();
        let mut depth = vec![0usize; self.nodes.len()];
        let mut stack = vec![0usize];
        let mut seen = vec![false; self.nodes.len()];
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            for &c in &children[v] {
                depth[c] = depth[v] + 1;
                stack.push(c);
            }
        }
        depth
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.nodes.len()];
        for &(p, c) in &self.edges {
            if p < children.len() {
                children[p].push(c);
            }
        }
        children
    }
}

/// Merges diffusion trees under a fresh news node.
///
/// Nodes are laid out in pre-order (tree by tree), so every parent precedes its
/// children. Child timestamps earlier than their parent's are logged and left
/// in place; feature extraction clamps the delay to zero.
pub fn merge_diffusion_trees(
    news_id: &str,
    label: Label,
    trees: &[DiffusionTree],
) -> Result<PropagationGraph, DataError> {
    let mut nodes = vec![RawNode::news(news_id)];
    let mut edges = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(news_id.to_string());

    for tree in trees {
        // (subtree, parent index)
        let mut stack: Vec<(&DiffusionTree, usize)> = vec![(tree, 0)];
        while let Some((t, parent)) = stack.pop() {
            if t.root.kind == NodeKind::News {
                return Err(DataError::NewsNodeInTree(t.root.node_id.clone()));
            }
            if !seen.insert(t.root.node_id.clone()) {
                return Err(DataError::DuplicateNodeId(t.root.node_id.clone()));
            }
            if parent != 0 {
                if let (Some(pt), Some(ct)) = (nodes[parent].timestamp, t.root.timestamp) {
                    if ct < pt {
                        log::warn!(
                            "node `{}` predates its parent `{}` by {}s; delay clamped to 0",
                            t.root.node_id,
                            nodes[parent].node_id,
                            pt - ct
                        );
                    }
                }
            }
            let idx = nodes.len();
            nodes.push(t.root.clone());
            edges.push((parent, idx));
            for child in t.children.iter().rev() {
                stack.push((child, idx));
            }
        }
    }

    Ok(PropagationGraph {
        graph_id: news_id.to_string(),
        label,
        nodes,
        edges,
    })
}

/// A violated graph invariant, with coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyGraph,
    RootNotNews { kind: NodeKind },
    ExtraNewsNode { index: usize },
    DuplicateNodeId { id: String, indices: Vec<usize> },
    EdgeOutOfRange { edge: (usize, usize) },
    SelfLoop { index: usize },
    RootHasParent { parent: usize },
    MultipleParents { child: usize, parents: Vec<usize> },
    Unreachable { index: usize },
    Cycle { nodes: Vec<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyGraph => write!(f, "graph has no nodes"),
            Violation::RootNotNews { kind } => {
                write!(f, "node 0 must be the news node, found {kind:?}")
            }
            Violation::ExtraNewsNode { index } => write!(f, "extra news node at index {index}"),
            Violation::DuplicateNodeId { id, indices } => {
                write!(f, "duplicate node id `{id}` at indices {indices:?}")
            }
            Violation::EdgeOutOfRange { edge } => write!(f, "edge {edge:?} out of range"),
            Violation::SelfLoop { index } => write!(f, "self loop at node {index}"),
            Violation::RootHasParent { parent } => write!(f, "root has parent {parent}"),
            Violation::MultipleParents { child, parents } => {
                write!(f, "multiple parents for node {child}: {parents:?}")
            }
            Violation::Unreachable { index } => {
                write!(f, "node {index} is not reachable from the root")
            }
            Violation::Cycle { nodes } => write!(f, "cycle through nodes {nodes:?}"),
        }
    }
}

/// Returns every violated invariant of `g` (empty when valid).
pub fn validate_graph(g: &PropagationGraph) -> Vec<Violation> {
    let n = g.nodes.len();
    let mut out = Vec::new();
    if n == 0 {
        out.push(Violation::EmptyGraph);
        return out;
    }
    if g.nodes[0].kind != NodeKind::News {
        out.push(Violation::RootNotNews {
            kind: g.nodes[0].kind,
        });
    }
    for (i, node) in g.nodes.iter().enumerate().skip(1) {
        if node.kind == NodeKind::News {
            out.push(Violation::ExtraNewsNode { index: i });
        }
    }

    let mut by_id: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, node) in g.nodes.iter().enumerate() {
        by_id.entry(node.node_id.as_str()).or_default().push(i);
    }
    let mut dups: Vec<_> = by_id
        .into_iter()
        .filter(|(_, v)| v.len() > 1)
        .map(|(id, indices)| Violation::DuplicateNodeId {
            id: id.to_string(),
            indices,
        })
        .collect();
    dups.sort_by_key(|v| match v {
        Violation::DuplicateNodeId { indices, .. } => indices[0],
        _ => 0,
    });
    out.extend(dups);

    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(p, c) in &g.edges {
        if p >= n || c >= n {
            out.push(Violation::EdgeOutOfRange { edge: (p, c) });
            continue;
        }
        if p == c {
            out.push(Violation::SelfLoop { index: p });
            continue;
        }
        parents[c].push(p);
        adj[p].push(c);
    }
    for &p in &parents[0] {
        out.push(Violation::RootHasParent { parent: p });
    }
    for (c, ps) in parents.iter().enumerate().skip(1) {
        if ps.len() > 1 {
            out.push(Violation::MultipleParents {
                child: c,
                parents: ps.clone(),
            });
        }
    }

    // reachability from the root
    let mut reach = vec![false; n];
    let mut stack = vec![0usize];
    while let Some(v) = stack.pop() {
        if std::mem::replace(&mut reach[v], true) {
            continue;
        }
        stack.extend(adj[v].iter().copied().filter(|&c| !reach[c]));
    }
    for (i, r) in reach.iter().enumerate() {
        if !r {
            out.push(Violation::Unreachable { index: i });
        }
    }

    if let Some(cycle) = find_cycle(&adj) {
        out.push(Violation::Cycle { nodes: cycle });
    }
    out
}

/// Iterative three-colour DFS; returns the first cycle found.
fn find_cycle(adj: &[Vec<usize>]) -> Option<Vec<usize>> {
    const WHITE: u8 = 0;
    const GREY: u8 = 1;
    const BLACK: u8 = 2;
    let n = adj.len();
    let mut colour = vec![WHITE; n];
    for start in 0..n {
        if colour[start] != WHITE {
            continue;
        }
        // (node, next child position)
        let mut path: Vec<(usize, usize)> = vec![(start, 0)];
        colour[start] = GREY;
        while let Some(&mut (v, ref mut pos)) = path.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                match colour[w] {
                    WHITE => {
                        colour[w] = GREY;
                        path.push((w, 0));
                    }
                    GREY => {
                        let from = path.iter().position(|&(x, _)| x == w).unwrap_or(0);
                        return Some(path[from..].iter().map(|&(x, _)| x).collect());
                    }
                    _ => {}
                }
            } else {
                colour[v] = BLACK;
                path.pop();
            }
        }
    }
    None
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub graphs: Vec<PropagationGraph>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(graphs: Vec<PropagationGraph>) -> Result<Self, DataError> {
        let mut ids = HashSet::new();
        for g in &graphs {
            if !ids.insert(g.graph_id.as_str()) {
                return Err(DataError::DuplicateGraphId(g.graph_id.clone()));
            }
        }
        Ok(Dataset {
            graphs,
            provenance: Provenance::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.graphs.iter().map(|g| g.label).collect()
    }
}

/// Parses a line-delimited graph dataset from any reader.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<Dataset, DataError> {
    let mut graphs = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| DataError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let g: PropagationGraph = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let violations = validate_graph(&g);
        if !violations.is_empty() {
            return Err(DataError::InvalidGraph {
                graph_id: g.graph_id,
                violations,
            });
        }
        if !ids.insert(g.graph_id.clone()) {
            return Err(DataError::DuplicateGraphId(g.graph_id));
        }
        graphs.push(g);
    }
    Ok(Dataset {
        graphs,
        provenance: Provenance::default(),
    })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut ds = read_dataset(BufReader::new(file))?;
    ds.provenance.source = Some(path.display().to_string());
    Ok(ds)
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> std::io::Result<()> {
    for g in &ds.graphs {
        serde_json::to_writer(&mut w, g)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_dataset(ds, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountSummary {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub median: f64,
}

impl CountSummary {
    fn of(mut xs: Vec<usize>) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        xs.sort_unstable();
        let n = xs.len();
        let median = if n % 2 == 1 {
            xs[n / 2] as f64
        } else {
            (xs[n / 2 - 1] + xs[n / 2]) as f64 / 2.0
        };
        Some(CountSummary {
            min: xs[0],
            max: xs[n - 1],
            mean: xs.iter().sum::<usize>() as f64 / n as f64,
            median,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n_fake: usize,
    pub n_true: usize,
    /// `n_fake / n_true`; `None` when there are no true graphs.
    pub imbalance_ratio: Option<f64>,
    pub nodes: Option<CountSummary>,
    pub edges: Option<CountSummary>,
    pub warnings: Vec<String>,
}

impl DatasetStats {
    /// Ratio rendered to three decimals ("n/a" when undefined).
    pub fn ratio_display(&self) -> String {
        match self.imbalance_ratio {
            Some(r) => format!("{r:.3}"),
            None => "n/a".to_string(),
        }
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "graphs: {} fake, {} true", self.n_fake, self.n_true)?;
        writeln!(f, "imbalance ratio (fake/true): {}", self.ratio_display())?;
        if let (Some(n), Some(e)) = (&self.nodes, &self.edges) {
            writeln!(
                f,
                "nodes per graph: min {} / median {:.1} / mean {:.2} / max {}",
                n.min, n.median, n.mean, n.max
            )?;
            writeln!(
                f,
                "edges per graph: min {} / median {:.1} / mean {:.2} / max {}",
                e.min, e.median, e.mean, e.max
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let n_fake = ds.graphs.iter().filter(|g| g.label == Label::Fake).count();
    let n_true = ds.graphs.len() - n_fake;
    let mut warnings = Vec::new();
    if n_fake == 0 || n_true == 0 {
        warnings.push(format!(
            "degenerate class balance: {n_fake} fake / {n_true} true"
        ));
    }
    let imbalance_ratio = (n_true > 0).then(|| n_fake as f64 / n_true as f64);
    DatasetStats {
        n_fake,
        n_true,
        imbalance_ratio,
        nodes: CountSummary::of(ds.graphs.iter().map(|g| g.nodes.len()).collect()),
        edges: CountSummary::of(ds.graphs.iter().map(|g| g.edges.len()).collect()),
        warnings,
    }
}
