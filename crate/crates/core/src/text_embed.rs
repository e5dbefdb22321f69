//! Text segments of the node features: mean-of-word-vectors from a static
//! table, or lookups into a store of precomputed contextual vectors.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data_model::RawNode;

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} values, found {found}")]
    Arity {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("embedding file is empty")]
    Empty,
    #[error("duplicate contextual key ({node_id}, {text_source})")]
    DuplicateKey {
        node_id: String,
        text_source: TextSource,
    },
    #[error("the {0} encoder is selected but no {0} embedding source was supplied")]
    MissingSource(Encoder),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoder {
    Static,
    Contextual,
}

impl Encoder {
    pub const ALL: [Encoder; 2] = [Encoder::Static, Encoder::Contextual];

    /// Text dimension of the reference encoders (100-d word vectors, 768-d
    /// contextual sentence vectors).
    pub fn nominal_dim(self) -> usize {
        match self {
            Encoder::Static => 100,
            Encoder::Contextual => 768,
        }
    }
}

impl fmt::Display for Encoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Encoder::Static => "static",
            Encoder::Contextual => "contextual",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextSource {
    Profile = 0,
    Post = 1,
}

impl fmt::Display for TextSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextSource::Profile => "profile",
            TextSource::Post => "post",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TextConfig {
    pub encoder: Encoder,
    pub use_profiles: bool,
    pub use_retweets: bool,
}

impl TextConfig {
    pub fn new(encoder: Encoder, use_profiles: bool, use_retweets: bool) -> Self {
        TextConfig {
            encoder,
            use_profiles,
            use_retweets,
        }
    }

    /// All eight (encoder, profiles, retweets) combinations in table order.
    pub fn all() -> Vec<TextConfig> {
        let mut out = Vec::with_capacity(8);
        for encoder in Encoder::ALL {
            for use_profiles in [false, true] {
                for use_retweets in [false, true] {
                    out.push(TextConfig::new(encoder, use_profiles, use_retweets));
                }
            }
        }
        out
    }

    pub fn has_text(&self) -> bool {
        self.use_profiles || self.use_retweets
    }

    /// Text dimension of the reference encoder for this config.
    pub fn d_text(&self) -> usize {
        self.encoder.nominal_dim()
    }
}

/// Word → vector table (whitespace-separated `word v1 … vd` lines).
#[derive(Debug, Clone, PartialEq)]
pub struct StaticTable {
    dimension: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl StaticTable {
    pub fn new(dimension: usize) -> Self {
        StaticTable {
            dimension,
            entries: HashMap::new(),
        }
    }

    /// Inserts or replaces a word vector. Panics on a dimension mismatch.
    pub fn insert(&mut self, word: impl Into<String>, vec: Vec<f64>) {
        assert_eq!(vec.len(), self.dimension, "static vector arity");
        self.entries.insert(word.into(), vec);
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    /// Entries sorted by word, for deterministic serialization.
    pub fn sorted_entries(&self) -> Vec<(&str, &[f64])> {
        let mut v: Vec<_> = self
            .entries
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
            .collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    /// One `word v1 v2 ...` line per entry, sorted by word.
    pub fn write<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for (word, vec) in self.sorted_entries() {
            let cells: Vec<String> = vec.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{word} {}", cells.join(" "))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, TextError> {
        let mut table: Option<StaticTable> = None;
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| TextError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let vec = parts
                .map(|p| p.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TextError::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?;
            let t = table.get_or_insert_with(|| StaticTable::new(vec.len()));
            if vec.len() != t.dimension || vec.is_empty() {
                return Err(TextError::Arity {
                    line: lineno,
                    expected: t.dimension,
                    found: vec.len(),
                });
            }
            t.entries.insert(word.to_string(), vec);
        }
        table.ok_or(TextError::Empty)
    }
}

pub fn load_static_table(path: impl AsRef<Path>) -> Result<StaticTable, TextError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|source| TextError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    StaticTable::read(BufReader::new(f))
}

/// Lowercases, splits on whitespace, maps URLs to `httpurl` and mentions to
/// `@user`, strips edge punctuation, and drops empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let lower = raw.to_lowercase();
        let t = lower
            .trim_start_matches(|c: char| !c.is_alphanumeric() && c != '@')
            .trim_end_matches(|c: char| !c.is_alphanumeric());
        if t.starts_with("http://") || t.starts_with("https://") || t.starts_with("www.") {
            out.push("httpurl".to_string());
        } else if t.len() > 1 && t.starts_with('@') {
            out.push("@user".to_string());
        } else {
            let t = t.trim_matches(|c: char| !c.is_alphanumeric());
            if !t.is_empty() {
                out.push(t.to_string());
            }
        }
    }
    out
}

/// Mean of the in-vocabulary token vectors; the zero vector when none match.
pub fn embed_text_static(table: &StaticTable, text: &str) -> Vec<f64> {
    let mut acc = vec![0.0; table.dimension];
    let mut hits = 0usize;
    for tok in tokenize(text) {
        if let Some(v) = table.get(&tok) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            hits += 1;
        }
    }
    if hits > 0 {
        let n = hits as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ContextualRecord {
    node_id: String,
    source: TextSource,
    vec: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct ContextualHeader {
    dimension: usize,
}

/// Precomputed per-node vectors keyed by `(node_id, source)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualStore {
    dimension: usize,
    /// Indexed by `TextSource as usize`.
    entries: [HashMap<String, Vec<f64>>; 2],
}

impl ContextualStore {
    pub fn new(dimension: usize) -> Self {
        ContextualStore {
            dimension,
            entries: [HashMap::new(), HashMap::new()],
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.iter().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(
        &mut self,
        node_id: impl Into<String>,
        source: TextSource,
        vec: Vec<f64>,
    ) -> Result<(), TextError> {
        if vec.len() != self.dimension {
            return Err(TextError::Arity {
                line: 0,
                expected: self.dimension,
                found: vec.len(),
            });
        }
        let node_id = node_id.into();
        let map = &mut self.entries[source as usize];
        if map.contains_key(&node_id) {
            return Err(TextError::DuplicateKey {
                node_id,
                text_source: source,
            });
        }
        map.insert(node_id, vec);
        Ok(())
    }

    pub fn get(&self, node_id: &str, source: TextSource) -> Option<&[f64]> {
        self.entries[source as usize].get(node_id).map(Vec::as_slice)
    }

    /// Lookup with the miss rule applied: absent keys map to zeros.
    pub fn lookup_or_zero(&self, node_id: &str, source: TextSource) -> Vec<f64> {
        self.get(node_id, source)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.dimension])
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, TextError> {
        let mut store: Option<ContextualStore> = None;
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| TextError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            if store.is_none() {
                if let Ok(h) = serde_json::from_str::<ContextualHeader>(&line) {
                    store = Some(ContextualStore::new(h.dimension));
                    continue;
                }
            }
            let rec: ContextualRecord =
                serde_json::from_str(&line).map_err(|e| TextError::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?;
            let s = store.get_or_insert_with(|| ContextualStore::new(rec.vec.len()));
            if rec.vec.len() != s.dimension {
                return Err(TextError::Arity {
                    line: lineno,
                    expected: s.dimension,
                    found: rec.vec.len(),
                });
            }
            s.insert(rec.node_id, rec.source, rec.vec)?;
        }
        store.ok_or(TextError::Empty)
    }

    /// Writes the header line followed by records sorted by key.
    pub fn write<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{{\"dimension\":{}}}", self.dimension)?;
        let mut keys: Vec<(&String, TextSource)> = [TextSource::Profile, TextSource::Post]
            .into_iter()
            .flat_map(|s| self.entries[s as usize].keys().map(move |k| (k, s)))
            .collect();
        keys.sort();
        for (node_id, source) in keys {
            let rec = ContextualRecord {
                node_id: node_id.clone(),
                source,
                vec: self.entries[source as usize][node_id].clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn load_contextual_store(path: impl AsRef<Path>) -> Result<ContextualStore, TextError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|source| TextError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ContextualStore::read(BufReader::new(f))
}

/// Embedding sources available to feature assembly.
#[derive(Debug, Clone, Copy, Default)]
pub struct TextSources<'a> {
    pub table: Option<&'a StaticTable>,
    pub store: Option<&'a ContextualStore>,
}

impl<'a> TextSources<'a> {
    /// Dimension of the source backing `encoder`, if supplied.
    pub fn dimension(&self, encoder: Encoder) -> Option<usize> {
        match encoder {
            Encoder::Static => self.table.map(StaticTable::dimension),
            Encoder::Contextual => self.store.map(ContextualStore::dimension),
        }
    }
}

pub type Segments = (Option<Vec<f64>>, Option<Vec<f64>>);

/// `(x2, x3)` for one node: profile and post segments, each present iff its
/// flag is set.
pub fn text_segments(
    cfg: &TextConfig,
    node: &RawNode,
    sources: &TextSources<'_>,
) -> Result<Segments, TextError> {
    if !cfg.has_text() {
        return Ok((None, None));
    }
    let embed = |source: TextSource| -> Result<Vec<f64>, TextError> {
        match cfg.encoder {
            Encoder::Static => {
                let table = sources.table.ok_or(TextError::MissingSource(Encoder::Static))?;
                let text = match source {
                    TextSource::Profile => &node.profile_text,
                    TextSource::Post => &node.post_text,
                };
                Ok(embed_text_static(table, text))
            }
            Encoder::Contextual => {
                let store = sources
                    .store
                    .ok_or(TextError::MissingSource(Encoder::Contextual))?;
                Ok(store.lookup_or_zero(&node.node_id, source))
            }
        }
    };
    let x2 = cfg
        .use_profiles
        .then(|| embed(TextSource::Profile))
        .transpose()?;
    let x3 = cfg
        .use_retweets
        .then(|| embed(TextSource::Post))
        .transpose()?;
    Ok((x2, x3))
}
