//! Reverse-mode differentiation of the forward pass. Downsampling choices,
//! neighbor assignments, and max-pool winners recorded in the trace are
//! treated as constants, so the gradients are exact for the differentiable
//! subgraph of the evaluation.

use ndarray::{s, Array1, Array2, Axis};

use crate::dataset::TrainingSample;
use crate::model::forward::{forward_traced, ForwardTrace};
use crate::model::{ModelConfig, ModelParams};
use crate::objective::{loss_with_grad, LossConfig};
use crate::Result;

/// Gradient of a layer-norm application. `dout` is the gradient at the
/// output; gain/bias gradients accumulate into `dgamma`/`dbeta`.
fn layer_norm_backward(
    dout: &Array2<f64>,
    xhat: &Array2<f64>,
    inv_std: &Array1<f64>,
    gamma: &Array1<f64>,
    dgamma: &mut Array1<f64>,
    dbeta: &mut Array1<f64>,
) -> Array2<f64> {
    let (n, d) = dout.dim();
    let mut dx = Array2::zeros((n, d));
    for i in 0..n {
        let dout_row = dout.row(i);
        let xhat_row = xhat.row(i);
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for c in 0..d {
            let dxh = dout_row[c] * gamma[c];
            m1 += dxh;
            m2 += dxh * xhat_row[c];
            dgamma[c] += dout_row[c] * xhat_row[c];
            dbeta[c] += dout_row[c];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        for c in 0..d {
            let dxh = dout_row[c] * gamma[c];
            dx[[i, c]] = inv_std[i] * (dxh - m1 - xhat_row[c] * m2);
        }
    }
    dx
}

/// Masks `grad` by the activation pattern of the post-activation value
/// `post` (zero where the unit was clamped).
fn relu_backward(grad: &Array2<f64>, post: &Array2<f64>) -> Array2<f64> {
    let mut out = grad.clone();
    out.zip_mut_with(post, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    out
}

/// Accumulates the gradients of `y = x W + b` given `dy`, returning `dx`.
fn affine_backward(
    x: &Array2<f64>,
    w: &Array2<f64>,
    dy: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dw += &x.t().dot(dy);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

/// Differentiates the traced forward pass with respect to every parameter,
/// given the loss gradient at each predicted point.
pub(crate) fn backward_traced(
    trace: &ForwardTrace,
    params: &ModelParams,
    cfg: &ModelConfig,
    d_pred: &[[f64; 3]],
) -> Result<ModelParams> {
    let mut grads = ModelParams::zeros(cfg);
    let n = cfg.n_proxy;
    let d = cfg.d_model;

    // Projection head: token m writes only its own slot of the head output.
    let mut d_head_out = Array2::zeros((cfg.m(), cfg.q * 3));
    for (m, g) in d_pred.iter().enumerate() {
        let slot = m % cfg.q;
        for axis in 0..3 {
            d_head_out[[m, slot * 3 + axis]] = g[axis];
        }
    }
    let d_tokens = affine_backward(
        &trace.tokens,
        &params.head.w,
        &d_head_out,
        &mut grads.head.w,
        &mut grads.head.b,
    );

    // Collapse the slot duplicates back onto their proxy token.
    let mut dx = Array2::zeros((n, d));
    for m in 0..cfg.m() {
        let p = m / cfg.q;
        for c in 0..d {
            dx[[p, c]] += d_tokens[[m, c]];
        }
    }

    // Encoder blocks in reverse.
    let heads = cfg.n_heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    for li in (0..cfg.n_layers).rev() {
        let layer = &params.layers[li];
        let lt = &trace.enc.layers[li];
        let gl = &mut grads.layers[li];
        // Feed-forward sublayer: x_out = x_in + ff2(relu(ff1(ln2(x_in)))).
        let df2 = &dx;
        let df1_post =
            affine_backward(&lt.f1, &layer.ff2.w, df2, &mut gl.ff2.w, &mut gl.ff2.b);
        let df1 = relu_backward(&df1_post, &lt.f1);
        let db =
            affine_backward(&lt.ln2.out, &layer.ff1.w, &df1, &mut gl.ff1.w, &mut gl.ff1.b);
        let dx_ffn = layer_norm_backward(
            &db,
            &lt.ln2.xhat,
            &lt.ln2.inv_std,
            &layer.ln2.gamma,
            &mut gl.ln2.gamma,
            &mut gl.ln2.beta,
        );
        dx = &dx + &dx_ffn;

        // Attention sublayer: x_mid = x_in + wo(attend(ln1(x_in))).
        let do_ = &dx;
        let dctx = affine_backward(&lt.ctx, &layer.wo.w, do_, &mut gl.wo.w, &mut gl.wo.b);
        let mut dq = Array2::zeros((n, d));
        let mut dk = Array2::zeros((n, d));
        let mut dv = Array2::zeros((n, d));
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let qh = lt.q.slice(cols);
            let kh = lt.k.slice(cols);
            let vh = lt.v.slice(cols);
            let a = &lt.attn[h];
            let dctx_h = dctx.slice(cols);

            let da = dctx_h.dot(&vh.t());
            dv.slice_mut(cols).assign(&a.t().dot(&dctx_h));
            // Softmax backward, row-wise.
            let mut ds: Array2<f64> = Array2::zeros((n, n));
            for i in 0..n {
                let a_row = a.row(i);
                let da_row = da.row(i);
                let dot: f64 = da_row.iter().zip(a_row.iter()).map(|(x, y)| x * y).sum();
                for j in 0..n {
                    ds[[i, j]] = a_row[j] * (da_row[j] - dot);
                }
            }
            ds.mapv_inplace(|v| v * scale);
            dq.slice_mut(cols).assign(&ds.dot(&kh));
            dk.slice_mut(cols).assign(&ds.t().dot(&qh));
        }
        let mut da_in = affine_backward(&lt.ln1.out, &layer.wq.w, &dq, &mut gl.wq.w, &mut gl.wq.b);
        da_in =
            da_in + affine_backward(&lt.ln1.out, &layer.wk.w, &dk, &mut gl.wk.w, &mut gl.wk.b);
        da_in =
            da_in + affine_backward(&lt.ln1.out, &layer.wv.w, &dv, &mut gl.wv.w, &mut gl.wv.b);
        let dx_attn = layer_norm_backward(
            &da_in,
            &lt.ln1.xhat,
            &lt.ln1.inv_std,
            &layer.ln1.gamma,
            &mut gl.ln1.gamma,
            &mut gl.ln1.beta,
        );
        dx = &dx + &dx_attn;
    }

    // Input tokens were proxy features plus the positional encoding.
    let d_proxy_feats = dx.clone();
    let dpre2 = relu_backward(&dx, &trace.enc.pos2);
    let dpos1_post = affine_backward(
        &trace.enc.pos1,
        &params.pos2.w,
        &dpre2,
        &mut grads.pos2.w,
        &mut grads.pos2.b,
    );
    let dpre1 = relu_backward(&dpos1_post, &trace.enc.pos1);
    affine_backward(
        &trace.proxy.proxy_coords,
        &params.pos1.w,
        &dpre1,
        &mut grads.pos1.w,
        &mut grads.pos1.b,
    );

    // Proxy feature pool routes each channel to the winning retained point.
    let n1 = trace.proxy.retained.len();
    let mut d_point_feats: Array2<f64> = Array2::zeros((n1, d));
    for pi in 0..n {
        for c in 0..d {
            let winner = trace.proxy.pool_argmax[pi * d + c];
            d_point_feats[[winner, c]] += d_proxy_feats[[pi, c]];
        }
    }

    // Neighborhood max-pool routes each channel to the winning edge row.
    let mut dh2: Array2<f64> = Array2::zeros((n1 * trace.proxy.k, d));
    for i in 0..n1 {
        for c in 0..d {
            let row = trace.proxy.edge_argmax[i * d + c];
            dh2[[row, c]] += d_point_feats[[i, c]];
        }
    }

    // Edge feature layers.
    let dpre2e = relu_backward(&dh2, &trace.proxy.h2);
    let dh1 = affine_backward(
        &trace.proxy.h1,
        &params.edge2.w,
        &dpre2e,
        &mut grads.edge2.w,
        &mut grads.edge2.b,
    );
    let dpre1e = relu_backward(&dh1, &trace.proxy.h1);
    affine_backward(
        &trace.proxy.e,
        &params.edge1.w,
        &dpre1e,
        &mut grads.edge1.w,
        &mut grads.edge1.b,
    );

    Ok(grads)
}

/// Loss, gradients, and the predictions they were evaluated at, for one
/// training sample.
#[derive(Debug, Clone)]
pub struct BackwardResult {
    pub loss: f64,
    pub grads: ModelParams,
    pub predictions: Vec<[f64; 3]>,
}

/// Runs the forward pass on the sample's input, evaluates the loss against
/// its target and masks, and backpropagates into every parameter.
pub fn backward(
    sample: &TrainingSample,
    params: &ModelParams,
    cfg: &ModelConfig,
    loss_cfg: &LossConfig,
    seed: u64,
) -> Result<BackwardResult> {
    let trace = forward_traced(&sample.input.to_f64_points(), params, cfg, seed)?;
    let target = sample.target.to_f64_points();
    let lg = loss_with_grad(&trace.predictions, &target, &sample.masks, loss_cfg)?;
    let grads = backward_traced(&trace, params, cfg, &lg.d_pred)?;
    Ok(BackwardResult { loss: lg.value, grads, predictions: trace.predictions })
}
