//! Synthetic propagation graphs with tunable class signal.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::data_model::{
    merge_diffusion_trees, Dataset, DiffusionTree, Label, NodeKind, Provenance, RawNode,
};
use crate::rng::{stream, Purpose, StreamRng};
use crate::text_embed::{ContextualStore, StaticTable, TextSource};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("{name} = {value} must lie in [0, 1]")]
    Strength { name: &'static str, value: f64 },
    #[error("invalid spec: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_fake: usize,
    pub n_true: usize,
    /// Root publications per graph, drawn uniformly from the inclusive range.
    pub trees_min: usize,
    pub trees_max: usize,
    /// Mean children per post for true graphs.
    pub branching: f64,
    pub max_children: usize,
    pub max_depth: usize,
    pub max_nodes: usize,
    /// Mean reaction delay in seconds (exponential).
    pub delay_mean_secs: f64,
    pub text_signal: f64,
    pub structure_signal: f64,
    /// Profile shift relative to the post shift.
    pub profile_factor: f64,
    /// Length of the planted class-mean offset at full text signal.
    pub shift: f64,
    pub text_noise: f64,
    pub static_dim: usize,
    pub contextual_dim: usize,
    pub vocab_size: usize,
    pub lexicon_size: usize,
    pub post_tokens: usize,
    pub profile_tokens: usize,
    /// Probability that a user has no profile text.
    pub empty_profile_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_fake: 60,
            n_true: 540,
            trees_min: 1,
            trees_max: 4,
            branching: 0.8,
            max_children: 3,
            max_depth: 4,
            max_nodes: 30,
            delay_mean_secs: 3600.0,
            text_signal: 0.8,
            structure_signal: 0.2,
            profile_factor: 0.5,
            shift: 1.0,
            text_noise: 1.0,
            static_dim: 16,
            contextual_dim: 16,
            vocab_size: 200,
            lexicon_size: 20,
            post_tokens: 12,
            profile_tokens: 8,
            empty_profile_rate: 0.2,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, value) in [
            ("text_signal", self.text_signal),
            ("structure_signal", self.structure_signal),
            ("profile_factor", self.profile_factor),
            ("empty_profile_rate", self.empty_profile_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SynthError::Strength { name, value });
            }
        }
        if self.trees_min == 0 || self.trees_min > self.trees_max {
            return Err(SynthError::Invalid("need 1 <= trees_min <= trees_max".into()));
        }
        if self.static_dim == 0 || self.contextual_dim == 0 {
            return Err(SynthError::Invalid("embedding dimensions must be positive".into()));
        }
        if self.n_fake + self.n_true == 0 {
            return Err(SynthError::Invalid("no graphs requested".into()));
        }
        if !(self.branching >= 0.0 && self.delay_mean_secs > 0.0 && self.text_noise >= 0.0) {
            return Err(SynthError::Invalid("branching, delay and noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Generated dataset together with both embedding sources.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub store: ContextualStore,
    pub table: StaticTable,
}

fn unit_vector(rng: &mut StreamRng, d: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v: Vec<f64> = (0..d).map(|_| n.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn sign(label: Label) -> f64 {
    match label {
        Label::Fake => 1.0,
        Label::True => -1.0,
    }
}

struct Lexicon {
    neutral: Vec<String>,
    fake: Vec<String>,
    real: Vec<String>,
}

fn build_table(spec: &SynthSpec, rng: &mut StreamRng) -> (StaticTable, Lexicon) {
    let d = spec.static_dim;
    let n = Normal::new(0.0, spec.text_noise.max(1e-3)).unwrap();
    let u = unit_vector(rng, d);
    let mut table = StaticTable::new(d);
    let mut lex = Lexicon {
        neutral: Vec::new(),
        fake: Vec::new(),
        real: Vec::new(),
    };
    let mut neutral: Vec<String> = (0..spec.vocab_size).map(|i| format!("w{i}")).collect();
    neutral.push("httpurl".into());
    neutral.push("@user".into());
    for w in neutral {
        table.insert(w.clone(), (0..d).map(|_| n.sample(rng)).collect());
        lex.neutral.push(w);
    }
    for (prefix, s) in [("fk", 1.0), ("tr", -1.0)] {
        for i in 0..spec.lexicon_size {
            let w = format!("{prefix}{i}");
            let v = u
                .iter()
                .map(|ui| 2.0 * s * spec.shift * ui + 0.25 * n.sample(rng))
                .collect();
            table.insert(w.clone(), v);
            if s > 0.0 {
                lex.fake.push(w);
            } else {
                lex.real.push(w);
            }
        }
    }
    (table, lex)
}

fn sentence(rng: &mut StreamRng, lex: &Lexicon, label: Label, p_class: f64, len: usize) -> String {
    let class_words = match label {
        Label::Fake => &lex.fake,
        Label::True => &lex.real,
    };
    let mut words = Vec::with_capacity(len);
    for _ in 0..len {
        let r: f64 = rng.random();
        let w = if !class_words.is_empty() && r < p_class {
            class_words[rng.random_range(0..class_words.len())].clone()
        } else if r > 0.97 {
            "https://t.co/x".to_string()
        } else if r > 0.94 {
            format!("@acct{}", rng.random_range(0..1000))
        } else {
            lex.neutral[rng.random_range(0..lex.neutral.len())].clone()
        };
        words.push(w);
    }
    if !words.is_empty() && rng.random::<f64>() < 0.3 {
        words[0] = words[0].to_uppercase() + ",";
    }
    words.join(" ")
}

struct GraphGen<'a> {
    spec: &'a SynthSpec,
    label: Label,
    lex: &'a Lexicon,
    rng: StreamRng,
    gid: String,
    made: usize,
}

impl GraphGen<'_> {
    fn user_node(&mut self, kind: NodeKind, ts: i64) -> RawNode {
        let ss = self.spec.structure_signal;
        let fake = self.label == Label::Fake;
        let shift = if fake { ss } else { 0.0 };
        let mut node = RawNode::post(format!("{}-n{}", self.gid, self.made), kind, ts);
        self.made += 1;
        let followers = LogNormal::new(5.3 - 1.5 * shift, 1.5).unwrap();
        let followees = LogNormal::new(5.8 + 0.5 * shift, 1.0).unwrap();
        let statuses = LogNormal::new(8.0 - 1.0 * shift, 1.5).unwrap();
        node.follower_count = followers.sample(&mut self.rng).floor() as u64;
        node.followee_count = followees.sample(&mut self.rng).floor() as u64;
        node.status_count = statuses.sample(&mut self.rng).floor() as u64;
        node.verified = self.rng.random::<f64>() < 0.08 * (1.0 - 0.9 * shift);

        let ts_sig = self.spec.text_signal;
        let p_post = 0.5 * ts_sig;
        let p_prof = 0.5 * ts_sig * self.spec.profile_factor;
        node.post_text = sentence(&mut self.rng, self.lex, self.label, p_post, self.spec.post_tokens);
        if self.rng.random::<f64>() >= self.spec.empty_profile_rate {
            node.profile_text =
                sentence(&mut self.rng, self.lex, self.label, p_prof, self.spec.profile_tokens);
        }
        node
    }

    fn delay(&mut self, scale: f64) -> i64 {
        let ss = self.spec.structure_signal;
        let mut mean = self.spec.delay_mean_secs * scale;
        if self.label == Label::Fake {
            mean /= 1.0 + 2.0 * ss;
        }
        Exp::new(1.0 / mean).unwrap().sample(&mut self.rng).round() as i64 + 1
    }

    fn grow(&mut self, node: RawNode, depth: usize, budget: &mut usize) -> DiffusionTree {
        let mut tree = DiffusionTree::leaf(node);
        if depth >= self.spec.max_depth {
            return tree;
        }
        let ss = self.spec.structure_signal;
        let mean = if self.label == Label::Fake {
            self.spec.branching * (1.0 + 0.6 * ss)
        } else {
            self.spec.branching
        };
        let max_c = self.spec.max_children.max(1);
        let p = (mean / max_c as f64).clamp(0.0, 1.0);
        let n_children = (0..max_c).filter(|_| self.rng.random::<f64>() < p).count();
        let parent_ts = tree.root.timestamp.unwrap_or(0);
        for _ in 0..n_children {
            if *budget == 0 {
                break;
            }
            *budget -= 1;
            let kind = if self.rng.random::<f64>() < 0.8 {
                NodeKind::Retweet
            } else {
                NodeKind::Reply
            };
            let ts = parent_ts + self.delay(1.0);
            let child = self.user_node(kind, ts);
            tree.children.push(self.grow(child, depth + 1, budget));
        }
        tree
    }
}

/// Draws a dataset, a contextual store keyed by node id, and a static word
/// table. Deterministic in `spec`.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let mut table_rng = stream(spec.seed, Purpose::Synth, &[0]);
    let (table, lex) = build_table(spec, &mut table_rng);
    let u_post = unit_vector(&mut table_rng, spec.contextual_dim);
    let u_prof = unit_vector(&mut table_rng, spec.contextual_dim);

    let mut labels: Vec<Label> = std::iter::repeat_n(Label::Fake, spec.n_fake)
        .chain(std::iter::repeat_n(Label::True, spec.n_true))
        .collect();
    labels.shuffle(&mut table_rng);

    let mut store = ContextualStore::new(spec.contextual_dim);
    let noise = Normal::new(0.0, spec.text_noise.max(0.0)).unwrap();
    let mut graphs = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        let gid = format!("synth-{i:05}");
        let mut g = GraphGen {
            spec,
            label,
            lex: &lex,
            rng: stream(spec.seed, Purpose::Synth, &[1, i as u64]),
            gid: gid.clone(),
            made: 1,
        };
        let n_trees = g.rng.random_range(spec.trees_min..=spec.trees_max);
        let t0 = 1_500_000_000 + 10_000 * i as i64;
        let mut budget = spec.max_nodes.saturating_sub(1 + n_trees);
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let ts = t0 + g.delay(3.0);
            let root = g.user_node(NodeKind::Tweet, ts);
            trees.push(g.grow(root, 1, &mut budget));
        }
        let graph = merge_diffusion_trees(&gid, label, &trees)
            .map_err(|e| SynthError::Invalid(e.to_string()))?;

        let s = sign(label) * spec.text_signal * spec.shift;
        let mut vec_rng = stream(spec.seed, Purpose::Synth, &[2, i as u64]);
        for node in graph.nodes.iter().skip(1) {
            let post: Vec<f64> = u_post
                .iter()
                .map(|u| s * u + noise.sample(&mut vec_rng))
                .collect();
            store
                .insert(&node.node_id, TextSource::Post, post)
                .map_err(|e| SynthError::Invalid(e.to_string()))?;
            if !node.profile_text.is_empty() {
                let prof: Vec<f64> = u_prof
                    .iter()
                    .map(|u| s * spec.profile_factor * u + noise.sample(&mut vec_rng))
                    .collect();
                store
                    .insert(&node.node_id, TextSource::Profile, prof)
                    .map_err(|e| SynthError::Invalid(e.to_string()))?;
            }
        }
        graphs.push(graph);
    }

    let mut dataset = Dataset::new(graphs).map_err(|e| SynthError::Invalid(e.to_string()))?;
    dataset.provenance = Provenance {
        source: Some("synthetic".into()),
        seed: Some(spec.seed),
        notes: vec![serde_json::to_string(spec).unwrap_or_default()],
    };
    Ok(SynthOutput {
        dataset,
        store,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{dataset_stats, validate_graph};

    fn small() -> SynthSpec {
        SynthSpec {
            n_fake: 30,
            n_true: 270,
            seed: 11,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn counts_and_validity() {
        let out = synth_generate(&small()).unwrap();
        let st = dataset_stats(&out.dataset);
        assert_eq!((st.n_fake, st.n_true), (30, 270));
        assert_eq!(st.ratio_display(), "0.111");
        for g in &out.dataset.graphs {
            assert!(validate_graph(g).is_empty(), "{}", g.graph_id);
            assert!(g.nodes.len() <= small().max_nodes);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_generate(&small()).unwrap();
        let b = synth_generate(&small()).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        a.store.write(&mut wa).unwrap();
        b.store.write(&mut wb).unwrap();
        assert_eq!(wa, wb);
        let c = synth_generate(&SynthSpec { seed: 12, ..small() }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn rejects_bad_strength() {
        let spec = SynthSpec {
            text_signal: 1.5,
            ..small()
        };
        assert!(matches!(synth_generate(&spec), Err(SynthError::Strength { .. })));
    }

    #[test]
    fn post_shift_stronger_than_profile_shift() {
        let spec = SynthSpec {
            n_fake: 200,
            n_true: 200,
            ..small()
        };
        let out = synth_generate(&spec).unwrap();
        let d = spec.contextual_dim;
        let mut means = [[vec![0.0; d], vec![0.0; d]], [vec![0.0; d], vec![0.0; d]]];
        let mut counts = [[0usize; 2]; 2];
        for g in &out.dataset.graphs {
            let c = usize::from(g.label == Label::True);
            for n in g.nodes.iter().skip(1) {
                for (s, src) in [TextSource::Profile, TextSource::Post].into_iter().enumerate() {
                    if let Some(v) = out.store.get(&n.node_id, src) {
                        counts[c][s] += 1;
                        for (m, x) in means[c][s].iter_mut().zip(v) {
                            *m += x;
                        }
                    }
                }
            }
        }
        let gap = |s: usize| -> f64 {
            (0..d)
                .map(|j| {
                    let a = means[0][s][j] / counts[0][s] as f64;
                    let b = means[1][s][j] / counts[1][s] as f64;
                    (a - b) * (a - b)
                })
                .sum::<f64>()
                .sqrt()
        };
        let (prof, post) = (gap(0), gap(1));
        // planted gaps: 2 * 0.8 = 1.6 for posts, 0.8 for profiles
        assert!((post - 1.6).abs() < 0.15, "{post}");
        assert!((prof - 0.8).abs() < 0.15, "{prof}");
    }

    #[test]
    fn structure_signal_changes_shape() {
        let spec = SynthSpec {
            n_fake: 300,
            n_true: 300,
            structure_signal: 1.0,
            ..small()
        };
        let out = synth_generate(&spec).unwrap();
        let mean_size = |l: Label| {
            let gs: Vec<_> = out.dataset.graphs.iter().filter(|g| g.label == l).collect();
            gs.iter().map(|g| g.nodes.len() as f64).sum::<f64>() / gs.len() as f64
        };
        assert!(mean_size(Label::Fake) > mean_size(Label::True));
    }
}
