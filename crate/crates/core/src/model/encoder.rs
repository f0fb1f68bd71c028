//! Post-norm transformer encoder: forward pass with a cached trace and the
//! matching reverse pass.

use rand::Rng as _;

use super::linalg::{self, affine, gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, LnCache, Mat};
use super::params::{pair_mut, LayerSpans, Parameters, Span};
use super::ModelError;
use crate::rng;
use crate::tokenizer::{TokenId, PAD};

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Final-layer state per position.
    pub hidden_states: Mat,
    /// Vocabulary scores per position.
    pub mlm_logits: Mat,
    /// Relation scores read from the `[CLS]` state.
    pub erp_logits: [f64; 3],
}

struct LayerTrace {
    x: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Per head, `len × len` attention weights.
    probs: Vec<Mat>,
    ctx: Mat,
    drop_attn: Option<Vec<f64>>,
    ln1: LnCache,
    y1: Mat,
    f1: Mat,
    g: Mat,
    drop_ffn: Option<Vec<f64>>,
    ln2: LnCache,
}

pub(crate) struct Trace {
    ids: Vec<usize>,
    layers: Vec<LayerTrace>,
    pub(crate) hidden: Mat,
}

pub(crate) fn check_ids(params: &Parameters, ids: &[TokenId]) -> Result<(), ModelError> {
    let c = &params.config;
    if ids.is_empty() {
        return Err(ModelError::Shape("empty input".into()));
    }
    if ids.len() > c.max_len {
        return Err(ModelError::Shape(format!("length {} exceeds max_len {}", ids.len(), c.max_len)));
    }
    if let Some(bad) = ids.iter().find(|&&id| id as usize >= c.vocab_size) {
        return Err(ModelError::Shape(format!("token id {bad} outside vocabulary of {}", c.vocab_size)));
    }
    Ok(())
}

fn dropout_mask(n: usize, p: f64, rng: &mut rng::Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..n)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

fn apply_mask(x: &mut Mat, mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        x.data.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
    }
}

fn add(a: &Mat, b: &Mat) -> Mat {
    let mut out = a.clone();
    out.add_assign(b);
    out
}

/// Runs the encoder, keeping everything the reverse pass needs. Dropout is
/// active only when a generator is supplied and the configured rate is
/// positive.
pub(crate) fn encode(params: &Parameters, ids: &[TokenId], mut dropout: Option<&mut rng::Rng>) -> Trace {
    let c = &params.config;
    let l = &params.layout;
    let (t_len, d) = (ids.len(), c.hidden_dim);
    let ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let tok = params.get(l.tok_emb);
    let pos = params.get(l.pos_emb);
    let mut x = Mat::zeros(t_len, d);
    for (t, &id) in ids.iter().enumerate() {
        let row = x.row_mut(t);
        for i in 0..d {
            row[i] = tok[id * d + i] + pos[t * d + i];
        }
    }
    let key_ok: Vec<bool> = ids.iter().map(|&i| i != PAD as usize).collect();
    let mut layers = Vec::with_capacity(l.layers.len());
    for ls in &l.layers {
        let (lt, next) = layer_forward(params, ls, x, &key_ok, dropout.as_deref_mut());
        layers.push(lt);
        x = next;
    }
    Trace { ids, layers, hidden: x }
}

fn layer_forward(
    params: &Parameters,
    ls: &LayerSpans,
    x: Mat,
    key_ok: &[bool],
    mut dropout: Option<&mut rng::Rng>,
) -> (LayerTrace, Mat) {
    let c = &params.config;
    let (t_len, d, dh) = (x.rows, c.hidden_dim, c.head_dim());
    let p = |s: Span| params.get(s);
    let q = linear(&x, p(ls.wq), p(ls.bq));
    let k = linear(&x, p(ls.wk), p(ls.bk));
    let v = linear(&x, p(ls.wv), p(ls.bv));
    let scale = 1.0 / (dh as f64).sqrt();
    let mut probs = Vec::with_capacity(c.heads);
    let mut ctx = Mat::zeros(t_len, d);
    for h in 0..c.heads {
        let cols = h * dh..(h + 1) * dh;
        let mut a = Mat::zeros(t_len, t_len);
        for t in 0..t_len {
            let qt = &q.row(t)[cols.clone()];
            let scores: Vec<f64> = (0..t_len)
                .filter(|&s| key_ok[s])
                .map(|s| linalg::dot(qt, &k.row(s)[cols.clone()]) * scale)
                .collect();
            if scores.is_empty() {
                continue;
            }
            let mut sm = linalg::softmax(&scores).into_iter();
            let row = a.row_mut(t);
            for s in 0..t_len {
                if key_ok[s] {
                    row[s] = sm.next().expect("one weight per visible key");
                }
            }
            let out = &mut ctx.row_mut(t)[cols.clone()];
            for s in 0..t_len {
                let w = a.row(t)[s];
                if w != 0.0 {
                    for (o, vv) in out.iter_mut().zip(&v.row(s)[cols.clone()]) {
                        *o += w * vv;
                    }
                }
            }
        }
        probs.push(a);
    }
    let rate = c.dropout;
    let mut mask = |n: usize| match dropout.as_deref_mut() {
        Some(r) if rate > 0.0 => Some(dropout_mask(n, rate, r)),
        _ => None,
    };
    let mut attn_out = linear(&ctx, p(ls.wo), p(ls.bo));
    let drop_attn = mask(attn_out.data.len());
    apply_mask(&mut attn_out, &drop_attn);
    let (y1, ln1) = layer_norm(&add(&x, &attn_out), p(ls.ln1_g), p(ls.ln1_b));
    let f1 = linear(&y1, p(ls.w1), p(ls.b1));
    let mut g = f1.clone();
    g.data.iter_mut().for_each(|z| *z = gelu(*z));
    let mut f2 = linear(&g, p(ls.w2), p(ls.b2));
    let drop_ffn = mask(f2.data.len());
    apply_mask(&mut f2, &drop_ffn);
    let (out, ln2) = layer_norm(&add(&y1, &f2), p(ls.ln2_g), p(ls.ln2_b));
    let trace = LayerTrace {
        x,
        q,
        k,
        v,
        probs,
        ctx,
        drop_attn,
        ln1,
        y1,
        f1,
        g,
        drop_ffn,
        ln2,
    };
    (trace, out)
}

/// Accumulates parameter gradients of the encoder given `dhidden`, the
/// gradient with respect to the final hidden states.
pub(crate) fn backward(params: &Parameters, trace: &Trace, dhidden: Mat, grads: &mut [f64]) {
    let c = &params.config;
    let l = &params.layout;
    let mut dx = dhidden;
    for (ls, lt) in l.layers.iter().zip(&trace.layers).rev() {
        dx = layer_backward(params, ls, lt, dx, grads);
    }
    let d = c.hidden_dim;
    for (t, &id) in trace.ids.iter().enumerate() {
        let row = dx.row(t);
        let (dtok, dpos) = pair_mut(grads, l.tok_emb, l.pos_emb);
        for i in 0..d {
            dtok[id * d + i] += row[i];
            dpos[t * d + i] += row[i];
        }
    }
}

fn layer_backward(params: &Parameters, ls: &LayerSpans, lt: &LayerTrace, dout: Mat, grads: &mut [f64]) -> Mat {
    let c = &params.config;
    let (t_len, dh) = (lt.x.rows, c.head_dim());
    let p = |s: Span| params.get(s);

    let dr2 = {
        let (dg, db) = pair_mut(grads, ls.ln2_g, ls.ln2_b);
        layer_norm_backward(&dout, &lt.ln2, p(ls.ln2_g), dg, db)
    };
    let mut df2 = dr2.clone();
    apply_mask(&mut df2, &lt.drop_ffn);
    let mut dg_act = {
        let (dw, db) = pair_mut(grads, ls.w2, ls.b2);
        linear_backward(&lt.g, p(ls.w2), &df2, dw, db)
    };
    dg_act.data.iter_mut().zip(&lt.f1.data).for_each(|(g, z)| *g *= gelu_grad(*z));
    let mut dy1 = {
        let (dw, db) = pair_mut(grads, ls.w1, ls.b1);
        linear_backward(&lt.y1, p(ls.w1), &dg_act, dw, db)
    };
    dy1.add_assign(&dr2);

    let dr1 = {
        let (dg, db) = pair_mut(grads, ls.ln1_g, ls.ln1_b);
        layer_norm_backward(&dy1, &lt.ln1, p(ls.ln1_g), dg, db)
    };
    let mut dattn = dr1.clone();
    apply_mask(&mut dattn, &lt.drop_attn);
    let dctx = {
        let (dw, db) = pair_mut(grads, ls.wo, ls.bo);
        linear_backward(&lt.ctx, p(ls.wo), &dattn, dw, db)
    };

    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Mat::zeros(t_len, c.hidden_dim);
    let mut dk = Mat::zeros(t_len, c.hidden_dim);
    let mut dv = Mat::zeros(t_len, c.hidden_dim);
    for (h, a) in lt.probs.iter().enumerate() {
        let cols = h * dh..(h + 1) * dh;
        for t in 0..t_len {
            let dct = &dctx.row(t)[cols.clone()];
            let at = a.row(t);
            let da: Vec<f64> = (0..t_len)
                .map(|s| if at[s] == 0.0 { 0.0 } else { linalg::dot(dct, &lt.v.row(s)[cols.clone()]) })
                .collect();
            let inner = linalg::dot(at, &da);
            for s in 0..t_len {
                if at[s] == 0.0 {
                    continue;
                }
                for (o, g) in dv.row_mut(s)[cols.clone()].iter_mut().zip(dct) {
                    *o += at[s] * g;
                }
                let ds = at[s] * (da[s] - inner) * scale;
                for (o, kk) in dq.row_mut(t)[cols.clone()].iter_mut().zip(&lt.k.row(s)[cols.clone()]) {
                    *o += ds * kk;
                }
                for (o, qq) in dk.row_mut(s)[cols.clone()].iter_mut().zip(&lt.q.row(t)[cols.clone()]) {
                    *o += ds * qq;
                }
            }
        }
    }
    let mut dx = dr1;
    for (w, b, dy) in [(ls.wq, ls.bq, &dq), (ls.wk, ls.bk, &dk), (ls.wv, ls.bv, &dv)] {
        let (dw, db) = pair_mut(grads, w, b);
        dx.add_assign(&linear_backward(&lt.x, p(w), dy, dw, db));
    }
    dx
}

/// Vocabulary scores for one final hidden state.
pub(crate) fn mlm_logits_at(params: &Parameters, h: &[f64]) -> Vec<f64> {
    let l = &params.layout;
    affine(h, params.get(l.mlm_w), params.get(l.mlm_b))
}

pub(crate) fn erp_logits_of(params: &Parameters, hidden: &Mat) -> [f64; 3] {
    let l = &params.layout;
    let z = affine(hidden.row(0), params.get(l.erp_w), params.get(l.erp_b));
    [z[0], z[1], z[2]]
}

/// Deterministic forward pass over one sequence. `PAD` positions are excluded
/// as attention keys.
pub fn forward(params: &Parameters, ids: &[TokenId]) -> Result<ForwardOutput, ModelError> {
    check_ids(params, ids)?;
    let trace = encode(params, ids, None);
    let hidden = trace.hidden;
    let v = params.config.vocab_size;
    let mut mlm_logits = Mat::zeros(hidden.rows, v);
    for t in 0..hidden.rows {
        mlm_logits.row_mut(t).copy_from_slice(&mlm_logits_at(params, hidden.row(t)));
    }
    let erp_logits = erp_logits_of(params, &hidden);
    Ok(ForwardOutput {
        hidden_states: hidden,
        mlm_logits,
        erp_logits,
    })
}

pub fn forward_batch(
    params: &Parameters,
    batch: &[Vec<TokenId>],
    exec: crate::par::Exec,
) -> Result<Vec<ForwardOutput>, ModelError> {
    exec.try_map_range(batch.len(), |i| forward(params, &batch[i]))
}
