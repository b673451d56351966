//! Forward pass: proxy extraction, transformer encoding, and projection to
//! predicted points. Every stage records the intermediate values the
//! backward pass needs, including which branch won each max-pool and the
//! attention weights of each head.

use ndarray::{s, Array1, Array2};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{Point3, PointCloud};
use crate::model::{ModelConfig, ModelParams};
use crate::sampling::{furthest_point_sample, KdIndex};
use crate::{Error, Result};

/// A downsampled center point with its learned neighborhood feature.
#[derive(Debug, Clone, PartialEq)]
pub struct PointProxy {
    pub coordinate: Point3,
    pub feature: Vec<f64>,
}

/// The two downsampling stages draw their seeds from one stream so a single
/// seed determines the whole forward pass.
pub(crate) fn derive_fps_seeds(seed: u64) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (rng.next_u64(), rng.next_u64())
}

fn relu(x: Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Proxy-extraction intermediates.
pub(crate) struct ProxyTrace {
    /// Points kept by the first downsampling, in selection order.
    pub retained: Vec<[f64; 3]>,
    /// Neighborhood size actually used (k_edge clamped to the retained count).
    pub k: usize,
    /// Edge inputs, one row per (point, neighbor) pair: [x_i ; x_j - x_i].
    pub e: Array2<f64>,
    /// First and second edge-layer outputs, post-activation.
    pub h1: Array2<f64>,
    pub h2: Array2<f64>,
    /// Winning row of `h2` for each (point, channel).
    pub edge_argmax: Vec<usize>,
    /// Winning retained point for each (proxy, channel) of the feature pool.
    pub pool_argmax: Vec<usize>,
    pub proxy_coords: Array2<f64>,
    pub proxy_feats: Array2<f64>,
}

pub(crate) fn extract_proxies_traced(
    points: &[[f64; 3]],
    params: &ModelParams,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<ProxyTrace> {
    cfg.validate()?;
    if points.len() < cfg.n_proxy {
        return Err(Error::InputTooSmall { needed: cfg.n_proxy, got: points.len() });
    }
    let (seed_fps1, seed_fps2) = derive_fps_seeds(seed);

    let fps1 = furthest_point_sample(points, cfg.n_fps, seed_fps1)?;
    let retained: Vec<[f64; 3]> = fps1.indices.iter().map(|&i| points[i]).collect();
    let n1 = retained.len();
    let index = KdIndex::from_points(&retained);
    let k = cfg.k_edge.min(n1);
    let d = cfg.d_model;

    // Edge features over each point's neighborhood (the point itself is its
    // own nearest neighbor, giving a zero difference half).
    let mut e = Array2::zeros((n1 * k, 6));
    for (i, &p) in retained.iter().enumerate() {
        let neighbors = index.knn(p, k)?;
        for (a, nb) in neighbors.iter().enumerate() {
            let row = i * k + a;
            let other = retained[nb.index];
            for axis in 0..3 {
                e[[row, axis]] = p[axis];
                e[[row, 3 + axis]] = other[axis] - p[axis];
            }
        }
    }
    let h1 = relu(params.edge1.apply(&e));
    let h2 = relu(params.edge2.apply(&h1));

    // Channel-wise max over each neighborhood.
    let mut point_feats = Array2::zeros((n1, d));
    let mut edge_argmax = vec![0usize; n1 * d];
    for i in 0..n1 {
        for c in 0..d {
            let (mut best_row, mut best) = (i * k, f64::NEG_INFINITY);
            for a in 0..k {
                let row = i * k + a;
                if h2[[row, c]] > best {
                    best = h2[[row, c]];
                    best_row = row;
                }
            }
            point_feats[[i, c]] = best;
            edge_argmax[i * d + c] = best_row;
        }
    }

    // Second downsampling picks the proxy centers; each proxy pools the
    // features of its nearest retained points.
    let fps2 = furthest_point_sample(&retained, cfg.n_proxy, seed_fps2)?;
    let proxy_of = fps2.indices;
    let mut proxy_coords = Array2::zeros((cfg.n_proxy, 3));
    let mut proxy_feats = Array2::zeros((cfg.n_proxy, d));
    let mut pool_argmax = vec![0usize; cfg.n_proxy * d];
    for (pi, &ri) in proxy_of.iter().enumerate() {
        let center = retained[ri];
        for axis in 0..3 {
            proxy_coords[[pi, axis]] = center[axis];
        }
        let neighbors = index.knn(center, k)?;
        for c in 0..d {
            let (mut best_idx, mut best) = (ri, f64::NEG_INFINITY);
            for nb in &neighbors {
                if point_feats[[nb.index, c]] > best {
                    best = point_feats[[nb.index, c]];
                    best_idx = nb.index;
                }
            }
            proxy_feats[[pi, c]] = best;
            pool_argmax[pi * d + c] = best_idx;
        }
    }

    Ok(ProxyTrace {
        retained,
        k,
        e,
        h1,
        h2,
        edge_argmax,
        pool_argmax,
        proxy_coords,
        proxy_feats,
    })
}

/// Normalization intermediates for one application of layer norm.
pub(crate) struct LnTrace {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub out: Array2<f64>,
}

pub(crate) const LN_EPS: f64 = 1e-5;

fn layer_norm(x: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> LnTrace {
    let (n, d) = x.dim();
    let mut xhat = Array2::zeros((n, d));
    let mut inv_std = Array1::zeros(n);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = is;
        for c in 0..d {
            xhat[[i, c]] = (x[[i, c]] - mean) * is;
        }
    }
    let out = &xhat * gamma + beta;
    LnTrace { xhat, inv_std, out }
}

/// One encoder block's intermediates.
pub(crate) struct LayerTrace {
    pub ln1: LnTrace,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Attention weights per head, each row a probability vector.
    pub attn: Vec<Array2<f64>>,
    /// Concatenated per-head contexts.
    pub ctx: Array2<f64>,
    pub ln2: LnTrace,
    /// Feed-forward hidden activations, post-activation.
    pub f1: Array2<f64>,
}

pub(crate) struct EncodeTrace {
    pub pos1: Array2<f64>,
    pub pos2: Array2<f64>,
    pub layers: Vec<LayerTrace>,
    /// Final per-proxy tokens, before slot duplication.
    pub encoded: Array2<f64>,
}

pub(crate) fn encode_traced(
    proxy_coords: &Array2<f64>,
    proxy_feats: &Array2<f64>,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<EncodeTrace> {
    let n = cfg.n_proxy;
    let d = cfg.d_model;
    if proxy_coords.dim() != (n, 3) || proxy_feats.dim() != (n, d) {
        return Err(Error::Config(format!(
            "encode expects {n} proxies with {d}-wide features, got {:?} and {:?}",
            proxy_coords.dim(),
            proxy_feats.dim()
        )));
    }
    if params.layers.len() != cfg.n_layers {
        return Err(Error::Config(format!(
            "parameters hold {} encoder layers, config wants {}",
            params.layers.len(),
            cfg.n_layers
        )));
    }

    // Positional encoding lifts the raw coordinates to feature width.
    let pos1 = relu(params.pos1.apply(proxy_coords));
    let pos2 = relu(params.pos2.apply(&pos1));
    let mut x = proxy_feats + &pos2;

    let heads = cfg.n_heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for layer in &params.layers {
        let ln1 = layer_norm(&x, &layer.ln1.gamma, &layer.ln1.beta);
        let q = layer.wq.apply(&ln1.out);
        let k = layer.wk.apply(&ln1.out);
        let v = layer.wv.apply(&ln1.out);

        let mut attn = Vec::with_capacity(heads);
        let mut ctx = Array2::zeros((n, d));
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let mut scores = qh.dot(&kh.t());
            scores.mapv_inplace(|v| v * scale);
            // Row-wise softmax with the max subtracted for stability.
            for mut row in scores.rows_mut() {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row.mapv_inplace(|v| v / sum);
            }
            ctx.slice_mut(cols).assign(&scores.dot(&vh));
            attn.push(scores);
        }
        let o = layer.wo.apply(&ctx);
        x = &x + &o;

        let ln2 = layer_norm(&x, &layer.ln2.gamma, &layer.ln2.beta);
        let f1 = relu(layer.ff1.apply(&ln2.out));
        let f2 = layer.ff2.apply(&f1);
        x = &x + &f2;

        layers.push(LayerTrace { ln1, q, k, v, attn, ctx, ln2, f1 });
    }

    Ok(EncodeTrace { pos1, pos2, layers, encoded: x })
}

/// Repeats each encoded proxy token into its `q` output slots.
pub(crate) fn duplicate_tokens(encoded: &Array2<f64>, cfg: &ModelConfig) -> Array2<f64> {
    let d = cfg.d_model;
    let mut tokens = Array2::zeros((cfg.m(), d));
    for m in 0..cfg.m() {
        tokens.row_mut(m).assign(&encoded.row(m / cfg.q));
    }
    tokens
}

/// Maps tokens to predicted points: the head emits `q` 3-vector offsets per
/// proxy and slot `s` of token `m = p*q + s` is added to proxy `p`'s
/// coordinate.
pub(crate) fn project_traced(
    tokens: &Array2<f64>,
    proxy_coords: &Array2<f64>,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<Vec<[f64; 3]>> {
    if tokens.dim() != (cfg.m(), cfg.d_model) {
        return Err(Error::Config(format!(
            "projection expects {} tokens of width {}, got {:?}",
            cfg.m(),
            cfg.d_model,
            tokens.dim()
        )));
    }
    let offsets = params.head.apply(tokens);
    let mut predictions = Vec::with_capacity(cfg.m());
    for m in 0..cfg.m() {
        let (p, slot) = (m / cfg.q, m % cfg.q);
        let mut point = [0.0f64; 3];
        for axis in 0..3 {
            point[axis] = proxy_coords[[p, axis]] + offsets[[m, slot * 3 + axis]];
        }
        if point.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite prediction for token {m}")));
        }
        predictions.push(point);
    }
    Ok(predictions)
}

/// Everything the backward pass needs from one forward evaluation.
pub(crate) struct ForwardTrace {
    pub proxy: ProxyTrace,
    pub enc: EncodeTrace,
    pub tokens: Array2<f64>,
    pub predictions: Vec<[f64; 3]>,
}

pub(crate) fn forward_traced(
    points: &[[f64; 3]],
    params: &ModelParams,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<ForwardTrace> {
    let proxy = extract_proxies_traced(points, params, cfg, seed)?;
    let enc = encode_traced(&proxy.proxy_coords, &proxy.proxy_feats, params, cfg)?;
    let tokens = duplicate_tokens(&enc.encoded, cfg);
    let predictions = project_traced(&tokens, &proxy.proxy_coords, params, cfg)?;
    Ok(ForwardTrace { proxy, enc, tokens, predictions })
}

/// Downsamples the input and builds one feature-carrying proxy per center.
pub fn extract_proxies(
    x: &PointCloud,
    params: &ModelParams,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<Vec<PointProxy>> {
    let trace = extract_proxies_traced(&x.to_f64_points(), params, cfg, seed)?;
    Ok((0..cfg.n_proxy)
        .map(|pi| PointProxy {
            coordinate: Point3::new(
                trace.proxy_coords[[pi, 0]] as f32,
                trace.proxy_coords[[pi, 1]] as f32,
                trace.proxy_coords[[pi, 2]] as f32,
            ),
            feature: trace.proxy_feats.row(pi).to_vec(),
        })
        .collect())
}

/// Runs the transformer over the proxies and returns the M output tokens.
pub fn encode(
    proxies: &[PointProxy],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<Array2<f64>> {
    let (coords, feats) = proxies_to_arrays(proxies, cfg)?;
    let trace = encode_traced(&coords, &feats, params, cfg)?;
    Ok(duplicate_tokens(&trace.encoded, cfg))
}

/// Projects M tokens into the predicted point set.
pub fn project(
    tokens: &Array2<f64>,
    params: &ModelParams,
    cfg: &ModelConfig,
    proxies: &[PointProxy],
) -> Result<PointCloud> {
    let (coords, _) = proxies_to_arrays(proxies, cfg)?;
    let predictions = project_traced(tokens, &coords, params, cfg)?;
    points_to_cloud(&predictions)
}

fn proxies_to_arrays(
    proxies: &[PointProxy],
    cfg: &ModelConfig,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if proxies.len() != cfg.n_proxy {
        return Err(Error::Config(format!(
            "expected {} proxies, got {}",
            cfg.n_proxy,
            proxies.len()
        )));
    }
    let mut coords = Array2::zeros((proxies.len(), 3));
    let mut feats = Array2::zeros((proxies.len(), cfg.d_model));
    for (i, proxy) in proxies.iter().enumerate() {
        if proxy.feature.len() != cfg.d_model {
            return Err(Error::Config(format!(
                "proxy {i} has feature width {}, expected {}",
                proxy.feature.len(),
                cfg.d_model
            )));
        }
        let p = proxy.coordinate.to_f64();
        for axis in 0..3 {
            coords[[i, axis]] = p[axis];
        }
        for c in 0..cfg.d_model {
            feats[[i, c]] = proxy.feature[c];
        }
    }
    Ok((coords, feats))
}

fn points_to_cloud(points: &[[f64; 3]]) -> Result<PointCloud> {
    PointCloud::new(
        points
            .iter()
            .map(|p| Point3::new(p[0] as f32, p[1] as f32, p[2] as f32))
            .collect(),
    )
}

/// Full prediction pass: proxies, encoder, projection.
pub fn forward(
    x: &PointCloud,
    params: &ModelParams,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<PointCloud> {
    let trace = forward_traced(&x.to_f64_points(), params, cfg, seed)?;
    points_to_cloud(&trace.predictions)
}
