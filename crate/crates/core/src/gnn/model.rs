//! Forward and reverse-mode passes of the two-layer GAT classifier.
//!
//! ```text
//! X ─GAT(4 heads, concat)─ ELU ─GAT(1 head)─ mean-pool ─ W1,b1 ─ ELU ─ w2,b2 ─ sigmoid
//! ```
//!
//! Everything runs on a [`GraphBatch`]: graphs are stacked block-diagonally so
//! each weight multiply is a single matrix product over all nodes.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::batch::{GraphBatch, GraphRef};
use super::params::{GatLayerParams, ModelParams};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGradient(&'static str),
    #[error("batch holds {graphs} graphs but {labels} labels")]
    LabelCount { graphs: usize, labels: usize },
    #[error("a graph in the batch has no nodes")]
    EmptyGraph,
}

pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Identity,
}

#[inline]
fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy with the probability clamped to `[1e-7, 1 - 1e-7]`.
pub fn loss(prob: f64, label: u8) -> f64 {
    let p = prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Intermediate values of one GAT layer, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GatCache {
    /// `input · W`, N × (heads·d_head).
    pub z: Array2<f64>,
    /// Pre-LeakyReLU logits, edge-major then head.
    pub u: Vec<f64>,
    /// Attention coefficients, same layout as `u`.
    pub att: Vec<f64>,
    /// Attention-weighted sums, before the layer activation.
    pub out: Array2<f64>,
}

fn gat_forward(layer: &GatLayerParams, input: ArrayView2<'_, f64>, batch: &GraphBatch) -> GatCache {
    let heads = layer.heads;
    let dh = layer.d_head;
    let n = input.nrows();
    let z = input.dot(&layer.w);

    let mut s_self = vec![0.0; n * heads];
    let mut s_neigh = vec![0.0; n * heads];
    for i in 0..n {
        let zi = z.row(i);
        let zi = zi.as_slice().expect("row-major");
        for h in 0..heads {
            let blk = &zi[h * dh..(h + 1) * dh];
            s_self[i * heads + h] = dot(blk, layer.att_self.row(h).as_slice().unwrap());
            s_neigh[i * heads + h] = dot(blk, layer.att_neigh.row(h).as_slice().unwrap());
        }
    }

    let n_edges = batch.sources.len();
    let mut u = vec![0.0; n_edges * heads];
    let mut att = vec![0.0; n_edges * heads];
    let mut out = Array2::<f64>::zeros((n, heads * dh));
    let slope = layer.leaky_slope;
    for i in 0..n {
        let edges = batch.edges_of(i);
        for h in 0..heads {
            let mut max = f64::NEG_INFINITY;
            for e in edges.clone() {
                let j = batch.sources[e];
                let v = s_self[i * heads + h] + s_neigh[j * heads + h];
                u[e * heads + h] = v;
                let l = if v > 0.0 { v } else { slope * v };
                att[e * heads + h] = l;
                max = max.max(l);
            }
            let mut sum = 0.0;
            for e in edges.clone() {
                let a = (att[e * heads + h] - max).exp();
                att[e * heads + h] = a;
                sum += a;
            }
            for e in edges.clone() {
                att[e * heads + h] /= sum;
            }
        }
        let mut oi = out.row_mut(i);
        let oi = oi.as_slice_mut().unwrap();
        for e in edges {
            let j = batch.sources[e];
            let zj = z.row(j);
            let zj = zj.as_slice().unwrap();
            for h in 0..heads {
                let a = att[e * heads + h];
                for k in h * dh..(h + 1) * dh {
                    oi[k] += a * zj[k];
                }
            }
        }
    }
    GatCache { z, u, att, out }
}

struct GatGrads {
    w: Array2<f64>,
    att_self: Array2<f64>,
    att_neigh: Array2<f64>,
    input: Option<Array2<f64>>,
}

fn gat_backward(
    layer: &GatLayerParams,
    input: ArrayView2<'_, f64>,
    cache: &GatCache,
    batch: &GraphBatch,
    d_out: &Array2<f64>,
    want_input_grad: bool,
) -> GatGrads {
    let heads = layer.heads;
    let dh = layer.d_head;
    let n = input.nrows();
    let z = &cache.z;
    let mut dz = Array2::<f64>::zeros(z.dim());
    let mut ds_self = vec![0.0; n * heads];
    let mut ds_neigh = vec![0.0; n * heads];
    let slope = layer.leaky_slope;
    let mut datt = Vec::new();

    for i in 0..n {
        let edges = batch.edges_of(i);
        let doi = d_out.row(i);
        let doi = doi.as_slice().unwrap();
        for h in 0..heads {
            let blk = h * dh..(h + 1) * dh;
            datt.clear();
            let mut weighted = 0.0;
            for e in edges.clone() {
                let j = batch.sources[e];
                let a = cache.att[e * heads + h];
                let da = {
                    let zj = z.row(j);
                    dot(&doi[blk.clone()], &zj.as_slice().unwrap()[blk.clone()])
                };
                let mut dzj = dz.row_mut(j);
                let dzj = dzj.as_slice_mut().unwrap();
                for k in blk.clone() {
                    dzj[k] += a * doi[k];
                }
                weighted += a * da;
                datt.push(da);
            }
            for (idx, e) in edges.clone().enumerate() {
                let j = batch.sources[e];
                let a = cache.att[e * heads + h];
                let de = a * (datt[idx] - weighted);
                let du = if cache.u[e * heads + h] > 0.0 { de } else { slope * de };
                ds_self[i * heads + h] += du;
                ds_neigh[j * heads + h] += du;
            }
        }
    }

    let mut g_self = Array2::<f64>::zeros((heads, dh));
    let mut g_neigh = Array2::<f64>::zeros((heads, dh));
    for i in 0..n {
        let zi = z.row(i);
        let zi = zi.as_slice().unwrap();
        let mut dzi = dz.row_mut(i);
        let dzi = dzi.as_slice_mut().unwrap();
        for h in 0..heads {
            let ss = ds_self[i * heads + h];
            let sn = ds_neigh[i * heads + h];
            if ss == 0.0 && sn == 0.0 {
                continue;
            }
            let a_s = layer.att_self.row(h);
            let a_n = layer.att_neigh.row(h);
            let (a_s, a_n) = (a_s.as_slice().unwrap(), a_n.as_slice().unwrap());
            let mut gs = g_self.row_mut(h);
            let gs = gs.as_slice_mut().unwrap();
            for k in 0..dh {
                gs[k] += ss * zi[h * dh + k];
            }
            let mut gn = g_neigh.row_mut(h);
            let gn = gn.as_slice_mut().unwrap();
            for k in 0..dh {
                gn[k] += sn * zi[h * dh + k];
                dzi[h * dh + k] += ss * a_s[k] + sn * a_n[k];
            }
        }
    }

    let w = input.t().dot(&dz);
    let input_grad = want_input_grad.then(|| dz.dot(&layer.w.t()));
    GatGrads {
        w,
        att_self: g_self,
        att_neigh: g_neigh,
        input: input_grad,
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Attention coefficients of one layer, `[node][head][position in list]`.
pub type Attention = Vec<Vec<Vec<f64>>>;

fn unpack_attention(cache: &GatCache, batch: &GraphBatch, heads: usize) -> Attention {
    (0..batch.num_nodes())
        .map(|i| {
            (0..heads)
                .map(|h| batch.edges_of(i).map(|e| cache.att[e * heads + h]).collect())
                .collect()
        })
        .collect()
}

/// One GAT layer on a single graph. `neighbors[i]` must contain `i` itself.
pub fn gat_layer_forward(
    layer: &GatLayerParams,
    h: ArrayView2<'_, f64>,
    neighbors: &[Vec<usize>],
    activation: Activation,
) -> Result<(Array2<f64>, Attention), ModelError> {
    if h.ncols() != layer.d_in() {
        return Err(ModelError::DimensionMismatch {
            what: "layer input",
            expected: layer.d_in(),
            found: h.ncols(),
        });
    }
    if neighbors.len() != h.nrows() {
        return Err(ModelError::DimensionMismatch {
            what: "aggregation lists",
            expected: h.nrows(),
            found: neighbors.len(),
        });
    }
    let batch = GraphBatch::new(&[GraphRef { x: h, neighbors }]);
    let cache = gat_forward(layer, batch.x.view(), &batch);
    let att = unpack_attention(&cache, &batch, layer.heads);
    let out = match activation {
        Activation::Elu => cache.out.mapv(elu),
        Activation::Identity => cache.out,
    };
    Ok((out, att))
}

pub fn mean_pool(h: ArrayView2<'_, f64>) -> Array1<f64> {
    assert!(h.nrows() > 0, "mean pool of an empty graph");
    h.mean_axis(Axis(0)).expect("non-empty")
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub gat1: GatCache,
    pub h1: Array2<f64>,
    pub gat2: GatCache,
    pub pooled: Array2<f64>,
    pub hid_pre: Array2<f64>,
    pub hid: Array2<f64>,
    pub logits: Vec<f64>,
}

impl ForwardCache {
    pub fn probs(&self) -> Vec<f64> {
        self.logits.iter().map(|&l| sigmoid(l)).collect()
    }

    pub fn attention1(&self, batch: &GraphBatch) -> Attention {
        unpack_attention(&self.gat1, batch, self.gat1.att.len() / batch.sources.len().max(1))
    }

    pub fn attention2(&self, batch: &GraphBatch) -> Attention {
        unpack_attention(&self.gat2, batch, 1)
    }
}

fn check_batch(params: &ModelParams, batch: &GraphBatch) -> Result<(), ModelError> {
    if batch.x.ncols() != params.gat1.d_in() {
        return Err(ModelError::DimensionMismatch {
            what: "feature columns",
            expected: params.gat1.d_in(),
            found: batch.x.ncols(),
        });
    }
    if batch.graphs.iter().any(|r| r.is_empty()) {
        return Err(ModelError::EmptyGraph);
    }
    Ok(())
}

pub fn forward_batch(params: &ModelParams, batch: &GraphBatch) -> Result<ForwardCache, ModelError> {
    check_batch(params, batch)?;
    let gat1 = gat_forward(&params.gat1, batch.x.view(), batch);
    let h1 = gat1.out.mapv(elu);
    let gat2 = gat_forward(&params.gat2, h1.view(), batch);
    let d2 = params.gat2.d_out();
    let mut pooled = Array2::<f64>::zeros((batch.num_graphs(), d2));
    for (g, range) in batch.graphs.iter().enumerate() {
        pooled
            .row_mut(g)
            .assign(&mean_pool(gat2.out.slice(s![range.clone(), ..])));
    }
    let hid_pre = pooled.dot(&params.mlp.w1) + &params.mlp.b1;
    let hid = hid_pre.mapv(elu);
    let b2 = params.mlp.b2[0];
    let logits = hid.dot(&params.mlp.w2).iter().map(|l| l + b2).collect();
    Ok(ForwardCache {
        gat1,
        h1,
        gat2,
        pooled,
        hid_pre,
        hid,
        logits,
    })
}

/// Probability of the fake class for every graph in the batch.
pub fn predict(params: &ModelParams, batch: &GraphBatch) -> Result<Vec<f64>, ModelError> {
    Ok(forward_batch(params, batch)?.probs())
}

/// Probability of the fake class for one graph.
pub fn forward(
    params: &ModelParams,
    x: ArrayView2<'_, f64>,
    neighbors: &[Vec<usize>],
) -> Result<f64, ModelError> {
    if neighbors.len() != x.nrows() {
        return Err(ModelError::DimensionMismatch {
            what: "aggregation lists",
            expected: x.nrows(),
            found: neighbors.len(),
        });
    }
    let batch = GraphBatch::new(&[GraphRef { x, neighbors }]);
    Ok(predict(params, &batch)?[0])
}

/// Mean clamped cross-entropy over the batch.
pub fn batch_loss(params: &ModelParams, batch: &GraphBatch, labels: &[u8]) -> Result<f64, ModelError> {
    check_labels(batch, labels)?;
    let probs = predict(params, batch)?;
    Ok(mean_loss(&probs, labels))
}

pub fn mean_loss(probs: &[f64], labels: &[u8]) -> f64 {
    probs.iter().zip(labels).map(|(&p, &y)| loss(p, y)).sum::<f64>() / probs.len().max(1) as f64
}

fn check_labels(batch: &GraphBatch, labels: &[u8]) -> Result<(), ModelError> {
    if labels.len() != batch.num_graphs() {
        return Err(ModelError::LabelCount {
            graphs: batch.num_graphs(),
            labels: labels.len(),
        });
    }
    Ok(())
}

/// Gradients of the mean batch loss with respect to every parameter, plus
/// the loss itself.
pub fn backward(
    params: &ModelParams,
    batch: &GraphBatch,
    labels: &[u8],
) -> Result<(f64, ModelParams), ModelError> {
    check_labels(batch, labels)?;
    let cache = forward_batch(params, batch)?;
    let probs = cache.probs();
    let n_graphs = batch.num_graphs() as f64;
    let loss_value = mean_loss(&probs, labels);

    // d loss / d logit; zero where the clamp is active
    let dlogit: Array1<f64> = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                0.0
            } else {
                (p - f64::from(y)) / n_graphs
            }
        })
        .collect();

    let mut grads = params.zeros_like();
    grads.mlp.b2[0] = dlogit.sum();
    grads.mlp.w2 = cache.hid.t().dot(&dlogit);
    // G × m
    let dhid = dlogit
        .view()
        .insert_axis(Axis(1))
        .dot(&params.mlp.w2.view().insert_axis(Axis(0)));
    let dhid_pre = &dhid * &cache.hid_pre.mapv(elu_grad);
    grads.mlp.b1 = dhid_pre.sum_axis(Axis(0));
    grads.mlp.w1 = cache.pooled.t().dot(&dhid_pre);
    let dpooled = dhid_pre.dot(&params.mlp.w1.t());

    let mut dh2 = Array2::<f64>::zeros(cache.gat2.out.dim());
    for (g, range) in batch.graphs.iter().enumerate() {
        let scale = 1.0 / range.len() as f64;
        let dp = dpooled.row(g).mapv(|v| v * scale);
        for i in range.clone() {
            dh2.row_mut(i).assign(&dp);
        }
    }

    let g2 = gat_backward(&params.gat2, cache.h1.view(), &cache.gat2, batch, &dh2, true);
    grads.gat2.w = g2.w;
    grads.gat2.att_self = g2.att_self;
    grads.gat2.att_neigh = g2.att_neigh;

    let dh1 = g2.input.expect("requested");
    let dout1 = &dh1 * &cache.gat1.out.mapv(elu_grad);
    let g1 = gat_backward(&params.gat1, batch.x.view(), &cache.gat1, batch, &dout1, false);
    grads.gat1.w = g1.w;
    grads.gat1.att_self = g1.att_self;
    grads.gat1.att_neigh = g1.att_neigh;

    if let Some(name) = grads.first_non_finite() {
        return Err(ModelError::NonFiniteGradient(name));
    }
    Ok((loss_value, grads))
}
