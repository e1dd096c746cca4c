//! Conditional noise predictor over feature vectors.
//!
//! ```text
//! h0  = W_in x + b_in + MLP_t(sinusoid(t))
//! h1  = h0 + W_o attn(q = W_q h0; k_j, v_j = per-token projections of cond) + b_o
//! h   = h + W_2 silu(W_1 h + b_1) + b_2          (depth residual blocks)
//! eps = W_out h + b_out
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::ConditionVector;
use crate::error::{Error, Result};
use crate::nn::{self, ParamLayout};

/// Anything that predicts the injected noise from `(x_t, t, cond)`.
pub trait NoisePredictor: Sync {
    fn visual_width(&self) -> usize;

    fn predict(&self, x_t: &[f64], t: usize, cond: &ConditionVector) -> Result<Vec<f64>>;

    /// Refuses to sample from unusable parameters.
    fn check_ready(&self) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub visual_width: usize,
    pub hidden: usize,
    pub attn_width: usize,
    pub depth: usize,
    /// Hidden width of each residual block.
    pub ffn_width: usize,
    /// Widths of the condition tokens (text first, then hardness if used).
    pub token_widths: Vec<usize>,
}

impl DenoiserConfig {
    pub fn new(visual_width: usize, hidden: usize, token_widths: Vec<usize>) -> Self {
        Self {
            visual_width,
            hidden,
            attn_width: hidden / 2,
            depth: 2,
            ffn_width: 2 * hidden,
            token_widths,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.visual_width == 0 || self.hidden < 2 || self.attn_width == 0 || self.ffn_width == 0 {
            return Err(Error::invalid("denoiser widths must be positive (hidden >= 2)"));
        }
        if self.token_widths.is_empty() || self.token_widths.contains(&0) {
            return Err(Error::invalid("denoiser needs at least one non-empty condition token"));
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        let (v, h, a, f) = (self.visual_width, self.hidden, self.attn_width, self.ffn_width);
        let mut l = ParamLayout::default();
        l.push("in.w", h, v);
        l.push("in.b", h, 1);
        l.push("time1.w", h, h);
        l.push("time1.b", h, 1);
        l.push("time2.w", h, h);
        l.push("time2.b", h, 1);
        l.push("attn.q.w", a, h);
        for (j, &w) in self.token_widths.iter().enumerate() {
            l.push(format!("attn.k{j}.w"), a, w);
            l.push(format!("attn.k{j}.b"), a, 1);
            l.push(format!("attn.v{j}.w"), a, w);
            l.push(format!("attn.v{j}.b"), a, 1);
        }
        l.push("attn.o.w", h, a);
        l.push("attn.o.b", h, 1);
        for b in 0..self.depth {
            l.push(format!("block{b}.fc1.w"), f, h);
            l.push(format!("block{b}.fc1.b"), f, 1);
            l.push(format!("block{b}.fc2.w"), h, f);
            l.push(format!("block{b}.fc2.b"), h, 1);
        }
        l.push("out.w", v, h);
        l.push("out.b", v, 1);
        l
    }
}

/// Resolved parameter offsets, so the hot path avoids name lookups.
#[derive(Clone, Debug)]
struct Offsets {
    in_w: usize,
    in_b: usize,
    t1_w: usize,
    t1_b: usize,
    t2_w: usize,
    t2_b: usize,
    q_w: usize,
    /// Per token: (k.w, k.b, v.w, v.b).
    kv: Vec<(usize, usize, usize, usize)>,
    o_w: usize,
    o_b: usize,
    /// Per block: (fc1.w, fc1.b, fc2.w, fc2.b).
    blocks: Vec<(usize, usize, usize, usize)>,
    out_w: usize,
    out_b: usize,
}

impl Offsets {
    fn new(cfg: &DenoiserConfig, layout: &ParamLayout) -> Self {
        let at = |n: &str| layout.get(n).expect("layout entry").offset;
        Self {
            in_w: at("in.w"),
            in_b: at("in.b"),
            t1_w: at("time1.w"),
            t1_b: at("time1.b"),
            t2_w: at("time2.w"),
            t2_b: at("time2.b"),
            q_w: at("attn.q.w"),
            kv: (0..cfg.token_widths.len())
                .map(|j| {
                    (
                        at(&format!("attn.k{j}.w")),
                        at(&format!("attn.k{j}.b")),
                        at(&format!("attn.v{j}.w")),
                        at(&format!("attn.v{j}.b")),
                    )
                })
                .collect(),
            o_w: at("attn.o.w"),
            o_b: at("attn.o.b"),
            blocks: (0..cfg.depth)
                .map(|b| {
                    (
                        at(&format!("block{b}.fc1.w")),
                        at(&format!("block{b}.fc1.b")),
                        at(&format!("block{b}.fc2.w")),
                        at(&format!("block{b}.fc2.b")),
                    )
                })
                .collect(),
            out_w: at("out.w"),
            out_b: at("out.b"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DenoiserNetwork {
    config: DenoiserConfig,
    layout: ParamLayout,
    off: Offsets,
    pub params: Vec<f64>,
}

impl PartialEq for DenoiserNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

/// Intermediate activations of one forward pass.
struct Cache {
    x: Vec<f64>,
    t_in: Vec<f64>,
    t_pre: Vec<f64>,
    t_act: Vec<f64>,
    h0: Vec<f64>,
    q: Vec<f64>,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    attn: Vec<f64>,
    ctx: Vec<f64>,
    /// Per block: input, pre-activation, activation.
    blocks: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    h_last: Vec<f64>,
}

/// Sinusoidal embedding of an integer step.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out[i] = arg.sin();
        out[i + half] = arg.cos();
    }
    out
}

impl DenoiserNetwork {
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let params = nn::init_params(&layout, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self::from_params(config, params))
    }

    pub fn from_params(config: DenoiserConfig, params: Vec<f64>) -> Self {
        let layout = config.layout();
        assert_eq!(params.len(), layout.total(), "parameter count does not match layout");
        let off = Offsets::new(&config, &layout);
        Self {
            config,
            layout,
            off,
            params,
        }
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn p(&self, offset: usize, len: usize) -> &[f64] {
        &self.params[offset..offset + len]
    }

    fn check_inputs(&self, x: &[f64], cond: &ConditionVector) -> Result<()> {
        if x.len() != self.config.visual_width {
            return Err(Error::WidthMismatch {
                expected: self.config.visual_width,
                actual: x.len(),
            });
        }
        if cond.tokens.len() != self.config.token_widths.len() {
            return Err(Error::invalid(format!(
                "denoiser expects {} condition tokens, got {}",
                self.config.token_widths.len(),
                cond.tokens.len()
            )));
        }
        for (tok, &w) in cond.tokens.iter().zip(&self.config.token_widths) {
            if tok.len() != w {
                return Err(Error::WidthMismatch {
                    expected: w,
                    actual: tok.len(),
                });
            }
        }
        Ok(())
    }

    fn forward_cached(&self, x: &[f64], t: usize, cond: &ConditionVector) -> (Vec<f64>, Cache) {
        let c = &self.config;
        let o = &self.off;
        let (v, h, a, f) = (c.visual_width, c.hidden, c.attn_width, c.ffn_width);

        let t_in = timestep_embedding(t, h);
        let mut t_pre = vec![0.0; h];
        nn::affine(self.p(o.t1_w, h * h), self.p(o.t1_b, h), &t_in, &mut t_pre);
        let t_act: Vec<f64> = t_pre.iter().map(|&z| nn::silu(z)).collect();
        let mut temb = vec![0.0; h];
        nn::affine(self.p(o.t2_w, h * h), self.p(o.t2_b, h), &t_act, &mut temb);

        let mut h0 = vec![0.0; h];
        nn::affine(self.p(o.in_w, h * v), self.p(o.in_b, h), x, &mut h0);
        for (z, e) in h0.iter_mut().zip(&temb) {
            *z += e;
        }

        let mut q = vec![0.0; a];
        nn::matvec(self.p(o.q_w, a * h), &h0, &mut q);
        let mut keys = Vec::with_capacity(cond.tokens.len());
        let mut values = Vec::with_capacity(cond.tokens.len());
        for (tok, &(kw, kb, vw, vb)) in cond.tokens.iter().zip(&o.kv) {
            let w = tok.len();
            let mut k = vec![0.0; a];
            nn::affine(self.p(kw, a * w), self.p(kb, a), tok, &mut k);
            let mut val = vec![0.0; a];
            nn::affine(self.p(vw, a * w), self.p(vb, a), tok, &mut val);
            keys.push(k);
            values.push(val);
        }
        let scale = 1.0 / (a as f64).sqrt();
        let scores: Vec<f64> = keys.iter().map(|k| nn::dot(&q, k) * scale).collect();
        let attn = nn::softmax(&scores);
        let mut ctx = vec![0.0; a];
        for (w, val) in attn.iter().zip(&values) {
            for (c, x) in ctx.iter_mut().zip(val) {
                *c += w * x;
            }
        }
        let mut hcur = vec![0.0; h];
        nn::affine(self.p(o.o_w, h * a), self.p(o.o_b, h), &ctx, &mut hcur);
        for (z, r) in hcur.iter_mut().zip(&h0) {
            *z += r;
        }

        let mut blocks = Vec::with_capacity(c.depth);
        for &(w1, b1, w2, b2) in &o.blocks {
            let mut pre = vec![0.0; f];
            nn::affine(self.p(w1, f * h), self.p(b1, f), &hcur, &mut pre);
            let act: Vec<f64> = pre.iter().map(|&z| nn::silu(z)).collect();
            let mut delta = vec![0.0; h];
            nn::affine(self.p(w2, h * f), self.p(b2, h), &act, &mut delta);
            let next: Vec<f64> = hcur.iter().zip(&delta).map(|(x, d)| x + d).collect();
            blocks.push((std::mem::replace(&mut hcur, next), pre, act));
        }

        let mut out = vec![0.0; v];
        nn::affine(self.p(o.out_w, v * h), self.p(o.out_b, v), &hcur, &mut out);
        let cache = Cache {
            x: x.to_vec(),
            t_in,
            t_pre,
            t_act,
            h0,
            q,
            keys,
            values,
            attn,
            ctx,
            blocks,
            h_last: hcur,
        };
        (out, cache)
    }

    /// Accumulates `d(loss)/d(params)` into `grad` given `d(loss)/d(output)`.
    fn backward(&self, cache: &Cache, cond: &ConditionVector, dout: &[f64], grad: &mut [f64]) {
        let c = &self.config;
        let o = &self.off;
        let (v, h, a, f) = (c.visual_width, c.hidden, c.attn_width, c.ffn_width);
        let params = &self.params;

        let mut dh = vec![0.0; h];
        {
            let (gw, gb) = split_pair(grad, o.out_w, v * h, o.out_b, v);
            nn::affine_backward(&params[o.out_w..o.out_w + v * h], &cache.h_last, dout, gw, Some(gb), Some(&mut dh));
        }

        for (bi, &(w1, b1, w2, b2)) in o.blocks.iter().enumerate().rev() {
            let (h_in, pre, act) = &cache.blocks[bi];
            let mut dact = vec![0.0; f];
            {
                let (gw, gb) = split_pair(grad, w2, h * f, b2, h);
                nn::affine_backward(&params[w2..w2 + h * f], act, &dh, gw, Some(gb), Some(&mut dact));
            }
            let dpre: Vec<f64> = dact.iter().zip(pre).map(|(d, &z)| d * nn::silu_grad(z)).collect();
            let mut dh_in = dh.clone();
            {
                let (gw, gb) = split_pair(grad, w1, f * h, b1, f);
                nn::affine_backward(&params[w1..w1 + f * h], h_in, &dpre, gw, Some(gb), Some(&mut dh_in));
            }
            dh = dh_in;
        }

        // Attention block; the residual passes dh straight to h0.
        let mut dctx = vec![0.0; a];
        {
            let (gw, gb) = split_pair(grad, o.o_w, h * a, o.o_b, h);
            nn::affine_backward(&params[o.o_w..o.o_w + h * a], &cache.ctx, &dh, gw, Some(gb), Some(&mut dctx));
        }
        let mut dh0 = dh;
        let n_tok = cache.values.len();
        let dattn: Vec<f64> = cache.values.iter().map(|val| nn::dot(&dctx, val)).collect();
        let weighted: f64 = cache.attn.iter().zip(&dattn).map(|(p, d)| p * d).sum();
        let scale = 1.0 / (a as f64).sqrt();
        let mut dq = vec![0.0; a];
        for j in 0..n_tok {
            let ds = cache.attn[j] * (dattn[j] - weighted) * scale;
            let (kw, kb, vw, vb) = o.kv[j];
            let tok = &cond.tokens[j];
            let w = tok.len();
            let dv: Vec<f64> = dctx.iter().map(|d| cache.attn[j] * d).collect();
            {
                let (gw, gb) = split_pair(grad, vw, a * w, vb, a);
                nn::affine_backward(&params[vw..vw + a * w], tok, &dv, gw, Some(gb), None);
            }
            let dk: Vec<f64> = cache.q.iter().map(|qi| ds * qi).collect();
            {
                let (gw, gb) = split_pair(grad, kw, a * w, kb, a);
                nn::affine_backward(&params[kw..kw + a * w], tok, &dk, gw, Some(gb), None);
            }
            for (d, k) in dq.iter_mut().zip(&cache.keys[j]) {
                *d += ds * k;
            }
        }
        nn::affine_backward(
            &params[o.q_w..o.q_w + a * h],
            &cache.h0,
            &dq,
            &mut grad[o.q_w..o.q_w + a * h],
            None,
            Some(&mut dh0),
        );

        {
            let (gw, gb) = split_pair(grad, o.in_w, h * v, o.in_b, h);
            nn::affine_backward(&params[o.in_w..o.in_w + h * v], &cache.x, &dh0, gw, Some(gb), None);
        }
        let mut dt_act = vec![0.0; h];
        {
            let (gw, gb) = split_pair(grad, o.t2_w, h * h, o.t2_b, h);
            nn::affine_backward(&params[o.t2_w..o.t2_w + h * h], &cache.t_act, &dh0, gw, Some(gb), Some(&mut dt_act));
        }
        let dt_pre: Vec<f64> = dt_act
            .iter()
            .zip(&cache.t_pre)
            .map(|(d, &z)| d * nn::silu_grad(z))
            .collect();
        let (gw, gb) = split_pair(grad, o.t1_w, h * h, o.t1_b, h);
        nn::affine_backward(&params[o.t1_w..o.t1_w + h * h], &cache.t_in, &dt_pre, gw, Some(gb), None);
    }

    /// Per-sample noise-prediction loss; when `grad` is given, its gradient is
    /// added into it.
    pub fn loss_and_grad(
        &self,
        x_t: &[f64],
        t: usize,
        cond: &ConditionVector,
        noise: &[f64],
        grad: Option<&mut [f64]>,
    ) -> Result<f64> {
        self.check_inputs(x_t, cond)?;
        if noise.len() != x_t.len() {
            return Err(Error::WidthMismatch {
                expected: x_t.len(),
                actual: noise.len(),
            });
        }
        let (eps, cache) = self.forward_cached(x_t, t, cond);
        let n = eps.len() as f64;
        let loss = eps.iter().zip(noise).map(|(e, z)| (z - e) * (z - e)).sum::<f64>() / n;
        if let Some(grad) = grad {
            let dout: Vec<f64> = eps.iter().zip(noise).map(|(e, z)| 2.0 * (e - z) / n).collect();
            self.backward(&cache, cond, &dout, grad);
        }
        Ok(loss)
    }
}

/// Two disjoint mutable windows into one gradient buffer (weight block
/// before its bias).
fn split_pair(
    grad: &mut [f64],
    w_off: usize,
    w_len: usize,
    b_off: usize,
    b_len: usize,
) -> (&mut [f64], &mut [f64]) {
    debug_assert!(w_off + w_len <= b_off);
    let (left, right) = grad.split_at_mut(b_off);
    (&mut left[w_off..w_off + w_len], &mut right[..b_len])
}

impl NoisePredictor for DenoiserNetwork {
    fn visual_width(&self) -> usize {
        self.config.visual_width
    }

    fn predict(&self, x_t: &[f64], t: usize, cond: &ConditionVector) -> Result<Vec<f64>> {
        self.check_inputs(x_t, cond)?;
        Ok(self.forward_cached(x_t, t, cond).0)
    }

    fn check_ready(&self) -> Result<()> {
        match self.params.iter().position(|p| !p.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!("denoiser parameter {i}"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(tokens: Vec<usize>) -> DenoiserNetwork {
        let mut cfg = DenoiserConfig::new(5, 8, tokens);
        cfg.attn_width = 4;
        cfg.ffn_width = 6;
        DenoiserNetwork::new(cfg, 7).unwrap()
    }

    fn cond(widths: &[usize]) -> ConditionVector {
        ConditionVector {
            tokens: widths
                .iter()
                .enumerate()
                .map(|(j, &w)| (0..w).map(|i| ((i + 3 * j) as f64 * 0.37).sin()).collect())
                .collect(),
        }
    }

    #[test]
    fn output_matches_input_width_and_is_deterministic() {
        let net = toy(vec![6, 3]);
        let c = cond(&[6, 3]);
        let x = [0.1, -0.2, 0.3, 0.0, 1.0];
        let a = net.predict(&x, 4, &c).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, net.predict(&x, 4, &c).unwrap());
        assert!(net.predict(&x[..4], 4, &c).is_err());
        assert!(net.predict(&x, 4, &cond(&[6])).is_err());
        assert!(net.predict(&x, 4, &cond(&[6, 4])).is_err());
    }

    #[test]
    fn layout_biases_start_at_zero() {
        let net = toy(vec![6]);
        for e in net.layout().entries() {
            let block = &net.params[e.range()];
            if e.name.ends_with(".b") {
                assert!(block.iter().all(|&p| p == 0.0));
            } else {
                assert!(block.iter().any(|&p| p != 0.0));
            }
        }
    }

    #[test]
    fn timestep_embedding_is_bounded() {
        let e = timestep_embedding(37, 8);
        assert_eq!(e.len(), 8);
        assert!(e.iter().all(|x| x.abs() <= 1.0));
        assert_eq!(timestep_embedding(0, 4), vec![0.0, 0.0, 1.0, 1.0]);
    }
}
