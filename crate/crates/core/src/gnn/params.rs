use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMerge {
    Concat,
    Single,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub d_in: usize,
    pub heads1: usize,
    pub d_head1: usize,
    pub d_head2: usize,
    pub mlp_hidden: usize,
}

impl ModelShape {
    /// Layer 1: 4 heads × 32 units (concat, 128 wide); layer 2: one 32-unit
    /// head; MLP 32 → 16 → 1.
    pub fn standard(d_in: usize) -> Self {
        ModelShape {
            d_in,
            heads1: 4,
            d_head1: 32,
            d_head2: 32,
            mlp_hidden: 16,
        }
    }
}

/// One graph-attention layer. Head `h` owns columns `h*d_head..(h+1)*d_head`
/// of `w`; its attention vector is `[att_self[h] ‖ att_neigh[h]]`, applied to
/// `[W h_i ‖ W h_j]` for target `i` and neighbour `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatLayerParams {
    pub w: Array2<f64>,
    pub att_self: Array2<f64>,
    pub att_neigh: Array2<f64>,
    pub heads: usize,
    pub d_head: usize,
    pub merge: HeadMerge,
    pub leaky_slope: f64,
}

impl GatLayerParams {
    pub fn zeros(d_in: usize, heads: usize, d_head: usize, merge: HeadMerge) -> Self {
        assert!(merge == HeadMerge::Concat || heads == 1, "single merge needs one head");
        GatLayerParams {
            w: Array2::zeros((d_in, heads * d_head)),
            att_self: Array2::zeros((heads, d_head)),
            att_neigh: Array2::zeros((heads, d_head)),
            heads,
            d_head,
            merge,
            leaky_slope: LEAKY_SLOPE,
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.heads * self.d_head
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub shape: ModelShape,
    pub gat1: GatLayerParams,
    pub gat2: GatLayerParams,
    pub mlp: MlpParams,
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
}

impl ModelParams {
    pub fn zeros(shape: ModelShape) -> Self {
        let d1 = shape.heads1 * shape.d_head1;
        ModelParams {
            shape,
            gat1: GatLayerParams::zeros(shape.d_in, shape.heads1, shape.d_head1, HeadMerge::Concat),
            gat2: GatLayerParams::zeros(d1, 1, shape.d_head2, HeadMerge::Single),
            mlp: MlpParams {
                w1: Array2::zeros((shape.d_head2, shape.mlp_hidden)),
                b1: Array1::zeros(shape.mlp_hidden),
                w2: Array1::zeros(shape.mlp_hidden),
                b2: Array1::zeros(1),
            },
        }
    }

    /// Glorot-uniform weights; attention vectors and biases start at zero.
    pub fn init<R: Rng + ?Sized>(shape: ModelShape, rng: &mut R) -> Self {
        let mut p = ModelParams::zeros(shape);
        let d1 = shape.heads1 * shape.d_head1;
        p.gat1.w = glorot(shape.d_in, d1, shape.d_in, d1, rng);
        p.gat2.w = glorot(d1, shape.d_head2, d1, shape.d_head2, rng);
        p.mlp.w1 = glorot(shape.d_head2, shape.mlp_hidden, shape.d_head2, shape.mlp_hidden, rng);
        p.mlp.w2 = glorot(shape.mlp_hidden, 1, shape.mlp_hidden, 1, rng).into_shape_with_order(shape.mlp_hidden).expect("column");
        p
    }

    /// Same shapes, all zeros; used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(self.shape)
    }

    pub const TENSOR_NAMES: [&'static str; 10] = [
        "gat1.w",
        "gat1.att_self",
        "gat1.att_neigh",
        "gat2.w",
        "gat2.att_self",
        "gat2.att_neigh",
        "mlp.w1",
        "mlp.b1",
        "mlp.w2",
        "mlp.b2",
    ];

    /// Every tensor as a flat slice, in [`Self::TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 10] {
        let n = Self::TENSOR_NAMES;
        fn sl(a: Option<&[f64]>) -> &[f64] {
            a.expect("standard layout")
        }
        [
            (n[0], sl(self.gat1.w.as_slice())),
            (n[1], sl(self.gat1.att_self.as_slice())),
            (n[2], sl(self.gat1.att_neigh.as_slice())),
            (n[3], sl(self.gat2.w.as_slice())),
            (n[4], sl(self.gat2.att_self.as_slice())),
            (n[5], sl(self.gat2.att_neigh.as_slice())),
            (n[6], sl(self.mlp.w1.as_slice())),
            (n[7], sl(self.mlp.b1.as_slice())),
            (n[8], sl(self.mlp.w2.as_slice())),
            (n[9], sl(self.mlp.b2.as_slice())),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 10] {
        let n = Self::TENSOR_NAMES;
        fn sl(a: Option<&mut [f64]>) -> &mut [f64] {
            a.expect("standard layout")
        }
        [
            (n[0], sl(self.gat1.w.as_slice_mut())),
            (n[1], sl(self.gat1.att_self.as_slice_mut())),
            (n[2], sl(self.gat1.att_neigh.as_slice_mut())),
            (n[3], sl(self.gat2.w.as_slice_mut())),
            (n[4], sl(self.gat2.att_self.as_slice_mut())),
            (n[5], sl(self.gat2.att_neigh.as_slice_mut())),
            (n[6], sl(self.mlp.w1.as_slice_mut())),
            (n[7], sl(self.mlp.b1.as_slice_mut())),
            (n[8], sl(self.mlp.w2.as_slice_mut())),
            (n[9], sl(self.mlp.b2.as_slice_mut())),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| n)
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn axpy(&mut self, scale: f64, other: &ModelParams) {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn standard_shapes() {
        let p = ModelParams::zeros(ModelShape::standard(42));
        assert_eq!(p.gat1.w.dim(), (42, 128));
        assert_eq!(p.gat1.att_self.dim(), (4, 32));
        assert_eq!(p.gat2.w.dim(), (128, 32));
        assert_eq!(p.gat2.heads, 1);
        assert_eq!(p.mlp.w1.dim(), (32, 16));
        assert_eq!(p.num_params(), 42 * 128 + 2 * 128 + 128 * 32 + 2 * 32 + 32 * 16 + 16 + 16 + 1);
    }

    #[test]
    fn init_zeroes_attention_and_biases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let p = ModelParams::init(ModelShape::standard(10), &mut rng);
        assert!(p.gat1.att_self.iter().all(|&v| v == 0.0));
        assert!(p.mlp.b1.iter().all(|&v| v == 0.0));
        let limit = (6.0f64 / (10.0 + 128.0)).sqrt();
        assert!(p.gat1.w.iter().all(|v| v.abs() <= limit));
        assert!(p.gat1.w.iter().any(|&v| v != 0.0));
    }
}
