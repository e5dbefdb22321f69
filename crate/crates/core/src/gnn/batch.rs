use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data_model::PropagationGraph;

/// Which way messages travel along diffusion edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageDirection {
    /// A node aggregates its parent and itself (root → leaves).
    #[default]
    Downstream,
    /// A node aggregates its children and itself (leaves → root).
    Upstream,
}

/// Per-node aggregation lists (local indices), self loop first.
pub fn neighbor_lists(g: &PropagationGraph, direction: MessageDirection) -> Vec<Vec<usize>> {
    let mut lists: Vec<Vec<usize>> = (0..g.nodes.len()).map(|i| vec![i]).collect();
    for &(p, c) in &g.edges {
        match direction {
            MessageDirection::Downstream => lists[c].push(p),
            MessageDirection::Upstream => lists[p].push(c),
        }
    }
    lists
}

/// One graph ready for the model.
#[derive(Debug, Clone, Copy)]
pub struct GraphRef<'a> {
    pub x: ArrayView2<'a, f64>,
    pub neighbors: &'a [Vec<usize>],
}

/// Several graphs stacked block-diagonally: one feature matrix, one CSR
/// aggregation structure over global node indices, and per-graph row ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    pub x: Array2<f64>,
    /// `sources[offsets[i]..offsets[i+1]]` are the nodes `i` aggregates.
    pub offsets: Vec<usize>,
    pub sources: Vec<usize>,
    pub graphs: Vec<Range<usize>>,
}

impl GraphBatch {
    pub fn new(items: &[GraphRef<'_>]) -> Self {
        let n: usize = items.iter().map(|g| g.x.nrows()).sum();
        let d = items.first().map_or(0, |g| g.x.ncols());
        let mut x = Array2::zeros((n, d));
        let mut offsets = Vec::with_capacity(n + 1);
        let mut sources = Vec::new();
        let mut graphs = Vec::with_capacity(items.len());
        offsets.push(0);
        let mut base = 0;
        for g in items {
            let rows = g.x.nrows();
            assert_eq!(g.x.ncols(), d, "feature width differs inside a batch");
            assert_eq!(g.neighbors.len(), rows, "one aggregation list per node");
            x.slice_mut(s![base..base + rows, ..]).assign(&g.x);
            for list in g.neighbors {
                sources.extend(list.iter().map(|&j| base + j));
                offsets.push(sources.len());
            }
            graphs.push(base..base + rows);
            base += rows;
        }
        GraphBatch {
            x,
            offsets,
            sources,
            graphs,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_graphs(&self) -> usize {
        self.graphs.len()
    }

    pub fn edges_of(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}
