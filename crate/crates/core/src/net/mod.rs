//! Template-induced structured classifier.
//!
//! The input is the subject matrix masked by the global template. The
//! default encoder is a cross-shaped edge-to-edge filter bank followed by
//! edge-to-node and node-to-graph pooling; an MLP over the upper triangle
//! is available for comparison. A linear head produces class logits.

mod train;

pub use train::{predict_proba, train, EpochRecord, TrainSplit, TrainedModel};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Array3, ArrayD, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Cnn,
    Mlp,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderKind::Cnn => write!(f, "cnn"),
            EncoderKind::Mlp => write!(f, "mlp"),
        }
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(EncoderKind::Cnn),
            "mlp" => Ok(EncoderKind::Mlp),
            other => Err(Error::InvalidArgument(format!("unknown encoder {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkHyperParams {
    /// Edge-to-edge filters.
    pub f1: usize,
    /// Edge-to-node maps.
    pub f2: usize,
    /// Node-to-graph (hidden) width; also the MLP hidden width.
    pub f3: usize,
    pub leaky_slope: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub encoder_kind: EncoderKind,
}

impl Default for NetworkHyperParams {
    fn default() -> Self {
        Self {
            f1: 8,
            f2: 16,
            f3: 32,
            leaky_slope: 0.33,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 16,
            epochs: 100,
            seed: 0,
            encoder_kind: EncoderKind::Cnn,
        }
    }
}

impl NetworkHyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.f1 == 0 || self.f2 == 0 || self.f3 == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "layer widths and batch size must be positive".into(),
            ));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "leaky slope must lie in (0,1), got {}",
                self.leaky_slope
            )));
        }
        if !self.learning_rate.is_finite() || !self.momentum.is_finite() {
            return Err(Error::InvalidArgument(
                "optimizer settings must be finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Encoder {
    Cnn {
        /// `(f1, M)` row weights of each cross filter.
        e2e_row: Array2<f64>,
        /// `(f1, M)` column weights of each cross filter.
        e2e_col: Array2<f64>,
        e2e_bias: Array1<f64>,
        /// `(f2, f1, M)`.
        e2n_weight: Array3<f64>,
        e2n_bias: Array1<f64>,
        /// `(f3, f2, M)`.
        n2g_weight: Array3<f64>,
        n2g_bias: Array1<f64>,
    },
    Mlp {
        /// `(f3, M(M−1)/2)` over the row-major strict upper triangle.
        hidden_weight: Array2<f64>,
        hidden_bias: Array1<f64>,
    },
}

/// All trainable weights. Gradients and momentum buffers use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    pub num_rois: usize,
    pub num_classes: usize,
    pub leaky_slope: f64,
    pub encoder: Encoder,
    /// `(C, f3)`.
    pub out_weight: Array2<f64>,
    pub out_bias: Array1<f64>,
}

impl NetworkParameters {
    pub fn encoder_kind(&self) -> EncoderKind {
        match self.encoder {
            Encoder::Cnn { .. } => EncoderKind::Cnn,
            Encoder::Mlp { .. } => EncoderKind::Mlp,
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.out_weight.ncols()
    }

    /// Named views of every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        let mut out = match &self.encoder {
            Encoder::Cnn {
                e2e_row,
                e2e_col,
                e2e_bias,
                e2n_weight,
                e2n_bias,
                n2g_weight,
                n2g_bias,
            } => vec![
                ("e2e_row", e2e_row.view().into_dyn()),
                ("e2e_col", e2e_col.view().into_dyn()),
                ("e2e_bias", e2e_bias.view().into_dyn()),
                ("e2n_weight", e2n_weight.view().into_dyn()),
                ("e2n_bias", e2n_bias.view().into_dyn()),
                ("n2g_weight", n2g_weight.view().into_dyn()),
                ("n2g_bias", n2g_bias.view().into_dyn()),
            ],
            Encoder::Mlp {
                hidden_weight,
                hidden_bias,
            } => vec![
                ("hidden_weight", hidden_weight.view().into_dyn()),
                ("hidden_bias", hidden_bias.view().into_dyn()),
            ],
        };
        out.push(("out_weight", self.out_weight.view().into_dyn()));
        out.push(("out_bias", self.out_bias.view().into_dyn()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        let mut out = match &mut self.encoder {
            Encoder::Cnn {
                e2e_row,
                e2e_col,
                e2e_bias,
                e2n_weight,
                e2n_bias,
                n2g_weight,
                n2g_bias,
            } => vec![
                ("e2e_row", e2e_row.view_mut().into_dyn()),
                ("e2e_col", e2e_col.view_mut().into_dyn()),
                ("e2e_bias", e2e_bias.view_mut().into_dyn()),
                ("e2n_weight", e2n_weight.view_mut().into_dyn()),
                ("e2n_bias", e2n_bias.view_mut().into_dyn()),
                ("n2g_weight", n2g_weight.view_mut().into_dyn()),
                ("n2g_bias", n2g_bias.view_mut().into_dyn()),
            ],
            Encoder::Mlp {
                hidden_weight,
                hidden_bias,
            } => vec![
                ("hidden_weight", hidden_weight.view_mut().into_dyn()),
                ("hidden_bias", hidden_bias.view_mut().into_dyn()),
            ],
        };
        out.push(("out_weight", self.out_weight.view_mut().into_dyn()));
        out.push(("out_bias", self.out_bias.view_mut().into_dyn()));
        out
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, mut t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Rebuilds parameters from named tensors, e.g. after deserialization.
    pub fn from_tensors(
        num_rois: usize,
        num_classes: usize,
        leaky_slope: f64,
        kind: EncoderKind,
        mut get: impl FnMut(&str) -> Result<ArrayD<f64>>,
    ) -> Result<Self> {
        fn dim<D: ndarray::Dimension>(
            a: ArrayD<f64>,
            name: &str,
        ) -> Result<ndarray::Array<f64, D>> {
            a.into_dimensionality::<D>()
                .map_err(|e| Error::InvalidArgument(format!("tensor {name}: {e}")))
        }
        let encoder = match kind {
            EncoderKind::Cnn => Encoder::Cnn {
                e2e_row: dim(get("e2e_row")?, "e2e_row")?,
                e2e_col: dim(get("e2e_col")?, "e2e_col")?,
                e2e_bias: dim(get("e2e_bias")?, "e2e_bias")?,
                e2n_weight: dim(get("e2n_weight")?, "e2n_weight")?,
                e2n_bias: dim(get("e2n_bias")?, "e2n_bias")?,
                n2g_weight: dim(get("n2g_weight")?, "n2g_weight")?,
                n2g_bias: dim(get("n2g_bias")?, "n2g_bias")?,
            },
            EncoderKind::Mlp => Encoder::Mlp {
                hidden_weight: dim(get("hidden_weight")?, "hidden_weight")?,
                hidden_bias: dim(get("hidden_bias")?, "hidden_bias")?,
            },
        };
        let p = Self {
            num_rois,
            num_classes,
            leaky_slope,
            encoder,
            out_weight: dim(get("out_weight")?, "out_weight")?,
            out_bias: dim(get("out_bias")?, "out_bias")?,
        };
        p.check_shapes()?;
        Ok(p)
    }

    fn check_shapes(&self) -> Result<()> {
        let m = self.num_rois;
        let c = self.num_classes;
        let f3 = self.out_weight.ncols();
        check_dims(c, self.out_weight.nrows())?;
        check_dims(c, self.out_bias.len())?;
        match &self.encoder {
            Encoder::Cnn {
                e2e_row,
                e2e_col,
                e2e_bias,
                e2n_weight,
                e2n_bias,
                n2g_weight,
                n2g_bias,
            } => {
                let f1 = e2e_row.nrows();
                let f2 = e2n_weight.shape()[0];
                check_dims(m, e2e_row.ncols())?;
                check_dims(f1, e2e_col.nrows())?;
                check_dims(m, e2e_col.ncols())?;
                check_dims(f1, e2e_bias.len())?;
                check_dims(f1, e2n_weight.shape()[1])?;
                check_dims(m, e2n_weight.shape()[2])?;
                check_dims(f2, e2n_bias.len())?;
                check_dims(f3, n2g_weight.shape()[0])?;
                check_dims(f2, n2g_weight.shape()[1])?;
                check_dims(m, n2g_weight.shape()[2])?;
                check_dims(f3, n2g_bias.len())?;
            }
            Encoder::Mlp {
                hidden_weight,
                hidden_bias,
            } => {
                check_dims(f3, hidden_weight.nrows())?;
                check_dims(m * (m - 1) / 2, hidden_weight.ncols())?;
                check_dims(f3, hidden_bias.len())?;
            }
        }
        Ok(())
    }
}

fn uniform_array<D: ndarray::Dimension, Sh: ndarray::ShapeBuilder<Dim = D>>(
    rng: &mut ChaCha8Rng,
    shape: Sh,
    fan_in: usize,
    fan_out: usize,
) -> ndarray::Array<f64, D> {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut a = ndarray::Array::<f64, D>::zeros(shape);
    for v in a.iter_mut() {
        *v = rng.random_range(-s..=s);
    }
    a
}

/// Glorot-uniform weights and zero biases, fully determined by `hyper.seed`.
///
/// Fan counts follow the convolution convention (channels × kernel size):
/// the cross filter has kernel `2M`, the pooling layers kernel `M`.
pub fn init_network(m: usize, c: usize, hyper: &NetworkHyperParams) -> Result<NetworkParameters> {
    if m < 2 || c < 2 {
        return Err(Error::InvalidArgument(format!(
            "network needs at least 2 ROIs and 2 classes, got M={m}, C={c}"
        )));
    }
    hyper.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let (f1, f2, f3) = (hyper.f1, hyper.f2, hyper.f3);
    let encoder = match hyper.encoder_kind {
        EncoderKind::Cnn => Encoder::Cnn {
            e2e_row: uniform_array(&mut rng, (f1, m), 2 * m, 2 * m * f1),
            e2e_col: uniform_array(&mut rng, (f1, m), 2 * m, 2 * m * f1),
            e2e_bias: Array1::zeros(f1),
            e2n_weight: uniform_array(&mut rng, (f2, f1, m), f1 * m, f2 * m),
            e2n_bias: Array1::zeros(f2),
            n2g_weight: uniform_array(&mut rng, (f3, f2, m), f2 * m, f3 * m),
            n2g_bias: Array1::zeros(f3),
        },
        EncoderKind::Mlp => {
            let p = m * (m - 1) / 2;
            Encoder::Mlp {
                hidden_weight: uniform_array(&mut rng, (f3, p), p, f3),
                hidden_bias: Array1::zeros(f3),
            }
        }
    };
    Ok(NetworkParameters {
        num_rois: m,
        num_classes: c,
        leaky_slope: hyper.leaky_slope,
        encoder,
        out_weight: uniform_array(&mut rng, (c, f3), f3, c),
        out_bias: Array1::zeros(c),
    })
}

fn leaky(v: f64, slope: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        slope * v
    }
}

fn leaky_grad(v: f64, slope: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        slope
    }
}

/// Row-major strict upper triangle of a square matrix.
pub fn upper_triangle(x: &Array2<f64>) -> Array1<f64> {
    let m = x.nrows();
    let mut out = Vec::with_capacity(m * (m.saturating_sub(1)) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            out.push(x[[i, j]]);
        }
    }
    Array1::from(out)
}

#[derive(Debug, Clone)]
pub enum EncoderCache {
    Cnn {
        /// `(f1, M, M)` edge-to-edge pre-activations.
        e2e_pre: Array3<f64>,
        /// `(f2, M)` edge-to-node pre-activations.
        e2n_pre: Array2<f64>,
    },
    Mlp {
        input: Array1<f64>,
    },
}

/// Intermediates of one forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Array2<f64>,
    pub encoder: EncoderCache,
    pub hidden_pre: Array1<f64>,
    pub logits: Array1<f64>,
}

pub fn forward(params: &NetworkParameters, x: &Array2<f64>) -> Result<(Array1<f64>, ForwardCache)> {
    let m = params.num_rois;
    check_dims(m, x.nrows())?;
    check_dims(m, x.ncols())?;
    let slope = params.leaky_slope;

    let (hidden_pre, enc_cache) = match &params.encoder {
        Encoder::Cnn {
            e2e_row,
            e2e_col,
            e2e_bias,
            e2n_weight,
            e2n_bias,
            n2g_weight,
            n2g_bias,
        } => {
            let f1 = e2e_row.nrows();
            let f2 = e2n_weight.shape()[0];
            let f3 = n2g_weight.shape()[0];

            // Y_f(i,j) = (X row_f)(i) + (Xᵀ col_f)(j) + b_f
            let mut e2e_pre = Array3::<f64>::zeros((f1, m, m));
            for f in 0..f1 {
                let r = x.dot(&e2e_row.row(f));
                let c = x.t().dot(&e2e_col.row(f));
                let b = e2e_bias[f];
                for ((i, j), y) in e2e_pre.index_axis_mut(Axis(0), f).indexed_iter_mut() {
                    *y = r[i] + c[j] + b;
                }
            }
            let e2e_act = e2e_pre.mapv(|v| leaky(v, slope));

            let mut e2n_pre = Array2::<f64>::zeros((f2, m));
            for g in 0..f2 {
                let mut acc = Array1::<f64>::from_elem(m, e2n_bias[g]);
                for f in 0..f1 {
                    let y = e2e_act.index_axis(Axis(0), f);
                    acc += &y.dot(&e2n_weight.slice(ndarray::s![g, f, ..]));
                }
                e2n_pre.row_mut(g).assign(&acc);
            }
            let e2n_act = e2n_pre.mapv(|v| leaky(v, slope));

            let mut hidden = Array1::<f64>::zeros(f3);
            for u in 0..f3 {
                let w = n2g_weight.index_axis(Axis(0), u);
                hidden[u] = (&w * &e2n_act).sum() + n2g_bias[u];
            }
            (hidden, EncoderCache::Cnn { e2e_pre, e2n_pre })
        }
        Encoder::Mlp {
            hidden_weight,
            hidden_bias,
        } => {
            let input = upper_triangle(x);
            let hidden = hidden_weight.dot(&input) + hidden_bias;
            (hidden, EncoderCache::Mlp { input })
        }
    };

    let hidden_act = hidden_pre.mapv(|v| leaky(v, slope));
    let logits = params.out_weight.dot(&hidden_act) + &params.out_bias;
    let cache = ForwardCache {
        input: x.clone(),
        encoder: enc_cache,
        hidden_pre,
        logits: logits.clone(),
    };
    Ok((logits, cache))
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|v| (v - max).exp());
    let z = exps.sum();
    exps / z
}

/// `−log softmax(logits)[label]` via log-sum-exp with max subtraction.
pub fn cross_entropy(logits: &Array1<f64>, label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    lse - logits[label]
}

/// Exact gradient of `cross_entropy(forward(params, x), label)`.
pub fn backward(
    params: &NetworkParameters,
    cache: &ForwardCache,
    label: usize,
) -> Result<NetworkParameters> {
    let m = params.num_rois;
    let c = params.num_classes;
    let f3 = params.hidden_width();
    if cache.logits.len() != c
        || cache.hidden_pre.len() != f3
        || cache.input.dim() != (m, m)
        || label >= c
    {
        return Err(Error::StaleCache);
    }
    let slope = params.leaky_slope;
    let mut grads = params.zeros_like();

    let mut dlogits = softmax(&cache.logits);
    dlogits[label] -= 1.0;
    let hidden_act = cache.hidden_pre.mapv(|v| leaky(v, slope));
    grads.out_weight = outer(&dlogits, &hidden_act);
    grads.out_bias = dlogits.clone();
    let dhidden_act = params.out_weight.t().dot(&dlogits);
    let mut dhidden = dhidden_act;
    Zip::from(&mut dhidden)
        .and(&cache.hidden_pre)
        .for_each(|d, &p| *d *= leaky_grad(p, slope));

    match (&params.encoder, &cache.encoder, &mut grads.encoder) {
        (
            Encoder::Cnn {
                e2n_weight,
                n2g_weight,
                ..
            },
            EncoderCache::Cnn { e2e_pre, e2n_pre },
            Encoder::Cnn {
                e2e_row: g_row,
                e2e_col: g_col,
                e2e_bias: g_e2e_b,
                e2n_weight: g_e2n_w,
                e2n_bias: g_e2n_b,
                n2g_weight: g_n2g_w,
                n2g_bias: g_n2g_b,
            },
        ) => {
            let f1 = e2e_pre.shape()[0];
            let f2 = e2n_pre.nrows();
            if e2e_pre.shape() != [g_row.nrows(), m, m] || f2 != e2n_weight.shape()[0] {
                return Err(Error::StaleCache);
            }
            let x = &cache.input;

            // node-to-graph
            let e2n_act = e2n_pre.mapv(|v| leaky(v, slope));
            let mut de2n_act = Array2::<f64>::zeros((f2, m));
            for u in 0..f3 {
                let du = dhidden[u];
                g_n2g_w.index_axis_mut(Axis(0), u).assign(&(&e2n_act * du));
                de2n_act.scaled_add(du, &n2g_weight.index_axis(Axis(0), u));
            }
            g_n2g_b.assign(&dhidden);
            let mut de2n = de2n_act;
            Zip::from(&mut de2n)
                .and(e2n_pre)
                .for_each(|d, &p| *d *= leaky_grad(p, slope));

            // edge-to-node
            let e2e_act = e2e_pre.mapv(|v| leaky(v, slope));
            let mut de2e = Array3::<f64>::zeros((f1, m, m));
            for g in 0..f2 {
                let dn = de2n.row(g);
                for f in 0..f1 {
                    let y = e2e_act.index_axis(Axis(0), f);
                    // dW[g,f,j] = Σ_i dN[g,i] · Y[f,i,j]
                    g_e2n_w
                        .slice_mut(ndarray::s![g, f, ..])
                        .assign(&y.t().dot(&dn));
                    // dY[f,i,j] += dN[g,i] · W[g,f,j]
                    let w = e2n_weight.slice(ndarray::s![g, f, ..]);
                    let mut dy = de2e.index_axis_mut(Axis(0), f);
                    for (i, mut row) in dy.rows_mut().into_iter().enumerate() {
                        row.scaled_add(dn[i], &w);
                    }
                }
            }
            g_e2n_b.assign(&de2n.sum_axis(Axis(1)));
            Zip::from(&mut de2e)
                .and(e2e_pre)
                .for_each(|d, &p| *d *= leaky_grad(p, slope));

            // edge-to-edge
            for f in 0..f1 {
                let dy = de2e.index_axis(Axis(0), f);
                let row_sums = dy.sum_axis(Axis(1));
                let col_sums = dy.sum_axis(Axis(0));
                // d row_f(k) = Σ_i R(i) x(i,k);  d col_f(k) = Σ_j C(j) x(k,j)
                g_row.row_mut(f).assign(&x.t().dot(&row_sums));
                g_col.row_mut(f).assign(&x.dot(&col_sums));
                g_e2e_b[f] = row_sums.sum();
            }
        }
        (
            Encoder::Mlp { .. },
            EncoderCache::Mlp { input },
            Encoder::Mlp {
                hidden_weight: g_w,
                hidden_bias: g_b,
            },
        ) => {
            if input.len() != g_w.ncols() {
                return Err(Error::StaleCache);
            }
            *g_w = outer(&dhidden, input);
            g_b.assign(&dhidden);
        }
        _ => return Err(Error::StaleCache),
    }
    Ok(grads)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((a.len(), b.len()));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        row.assign(&(b * a[i]));
    }
    out
}

/// Momentum SGD: `v ← μ·v − lr·g`, `θ ← θ + v`.
pub fn sgd_step(
    params: &mut NetworkParameters,
    grads: &NetworkParameters,
    velocity: &mut NetworkParameters,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let gs = grads.tensors();
    let mut vs = velocity.tensors_mut();
    let mut ps = params.tensors_mut();
    if gs.len() != ps.len() || vs.len() != ps.len() {
        return Err(Error::InvalidArgument("parameter layouts differ".into()));
    }
    for ((p, g), v) in ps.iter_mut().zip(&gs).zip(vs.iter_mut()) {
        if p.1.shape() != g.1.shape() || p.1.shape() != v.1.shape() {
            return Err(Error::InvalidArgument(format!("shape mismatch in {}", p.0)));
        }
        Zip::from(&mut p.1)
            .and(&mut v.1)
            .and(&g.1)
            .for_each(|pv, vv, &gv| {
                *vv = momentum * *vv - lr * gv;
                *pv += *vv;
            });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_hyper(kind: EncoderKind) -> NetworkHyperParams {
        NetworkHyperParams {
            f1: 2,
            f2: 3,
            f3: 4,
            encoder_kind: kind,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let h = small_hyper(EncoderKind::Cnn);
        let a = init_network(8, 2, &h).unwrap();
        let b = init_network(8, 2, &h).unwrap();
        assert_eq!(a, b);
        assert!(a.out_bias.iter().all(|v| *v == 0.0));
        let Encoder::Cnn {
            e2e_row,
            e2e_col,
            e2e_bias,
            ..
        } = &a.encoder
        else {
            panic!("expected cnn");
        };
        assert_eq!(e2e_row.len() + e2e_col.len() + e2e_bias.len(), 34);
        let s = (6.0f64 / (16.0 + 32.0)).sqrt();
        assert!(e2e_row.iter().all(|v| v.abs() <= s));
        assert!(init_network(1, 2, &h).is_err());
        assert!(init_network(8, 1, &h).is_err());
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let p = init_network(8, 2, &small_hyper(EncoderKind::Cnn))
            .unwrap()
            .zeros_like();
        let x = Array2::from_elem((8, 8), 0.3);
        let (logits, cache) = forward(&p, &x).unwrap();
        assert_eq!(logits, Array1::<f64>::zeros(2));
        let EncoderCache::Cnn { e2e_pre, .. } = &cache.encoder else {
            panic!()
        };
        assert_eq!(e2e_pre.shape(), &[2, 8, 8]);
    }

    #[test]
    fn constant_input_cross_filter() {
        let m = 5;
        let mut p = init_network(
            m,
            2,
            &NetworkHyperParams {
                f1: 1,
                ..small_hyper(EncoderKind::Cnn)
            },
        )
        .unwrap();
        if let Encoder::Cnn {
            e2e_row, e2e_col, ..
        } = &mut p.encoder
        {
            e2e_row.fill(1.0 / m as f64);
            e2e_col.fill(1.0 / m as f64);
        }
        let (_, cache) = forward(&p, &Array2::from_elem((m, m), 1.0)).unwrap();
        let EncoderCache::Cnn { e2e_pre, .. } = &cache.encoder else {
            panic!()
        };
        assert!(e2e_pre.iter().all(|v| (v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn forward_rejects_wrong_size() {
        let p = init_network(6, 2, &small_hyper(EncoderKind::Mlp)).unwrap();
        assert!(matches!(
            forward(&p, &Array2::zeros((5, 5))),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cross_entropy_cases() {
        let ln2 = cross_entropy(&Array1::from(vec![0.3, 0.3]), 0);
        assert!((ln2 - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(cross_entropy(&Array1::from(vec![50.0, 0.0, 0.0]), 0) < 1e-20);
        let expect = -(1.0f64 / (1.0f64.exp() + 1.0)).ln();
        assert!((cross_entropy(&Array1::from(vec![1.0, 0.0]), 1) - expect).abs() < 1e-15);
        assert!((expect - 1.3133).abs() < 1e-4);
    }

    #[test]
    fn output_bias_gradient_closed_form() {
        let p = init_network(6, 3, &small_hyper(EncoderKind::Cnn)).unwrap();
        let x = Array2::from_shape_fn((6, 6), |(i, j)| ((i * 7 + j * 3) % 5) as f64 / 5.0);
        let (logits, cache) = forward(&p, &x).unwrap();
        let g = backward(&p, &cache, 2).unwrap();
        let mut expect = softmax(&logits);
        expect[2] -= 1.0;
        assert_eq!(g.out_bias, expect);
    }

    #[test]
    fn saturated_prediction_has_flat_gradient() {
        let mut p = init_network(6, 2, &small_hyper(EncoderKind::Mlp)).unwrap();
        p.out_bias[0] = 100.0;
        let (_, cache) = forward(&p, &Array2::from_elem((6, 6), 0.1)).unwrap();
        let g = backward(&p, &cache, 0).unwrap();
        for (name, t) in g.tensors() {
            assert!(t.iter().all(|v| v.abs() < 1e-12), "{name}");
        }
    }

    #[test]
    fn backward_detects_stale_cache() {
        let p = init_network(6, 2, &small_hyper(EncoderKind::Cnn)).unwrap();
        let q = init_network(7, 2, &small_hyper(EncoderKind::Cnn)).unwrap();
        let (_, cache) = forward(&q, &Array2::zeros((7, 7))).unwrap();
        assert!(matches!(backward(&p, &cache, 0), Err(Error::StaleCache)));
        let r = init_network(6, 2, &small_hyper(EncoderKind::Mlp)).unwrap();
        let (_, cache) = forward(&r, &Array2::zeros((6, 6))).unwrap();
        assert!(matches!(backward(&p, &cache, 0), Err(Error::StaleCache)));
    }

    #[test]
    fn sgd_recurrence() {
        let p0 = init_network(4, 2, &small_hyper(EncoderKind::Mlp)).unwrap();
        let mut g = p0.zeros_like();
        g.out_bias[0] = 0.5;

        let mut p = p0.clone();
        let mut v = p0.zeros_like();
        sgd_step(&mut p, &g, &mut v, 1.0, 0.0).unwrap();
        assert_eq!(p.out_bias[0], p0.out_bias[0] - 0.5);

        let mut p = p0.clone();
        let mut v = p0.zeros_like();
        sgd_step(&mut p, &p0.zeros_like(), &mut v, 0.1, 0.9).unwrap();
        assert_eq!(p, p0);

        let mut p = p0.clone();
        let mut v = p0.zeros_like();
        sgd_step(&mut p, &g, &mut v, 0.1, 0.9).unwrap();
        let after_first = p.out_bias[0];
        sgd_step(&mut p, &g, &mut v, 0.1, 0.9).unwrap();
        let second_delta = p.out_bias[0] - after_first;
        assert!((second_delta - (-0.1 * 0.5 * 1.9)).abs() < 1e-15);
    }
}
