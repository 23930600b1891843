//! Learned drift `b_θ(x_τ, history, τ)`: a periodic residual conv net with a
//! pseudo-time embedding injected as per-channel biases.
//!
//! ```text
//! input  = [x_τ, x_{n−l}, …, x_n]          (2(l+2) channels)
//! h      = stem(input)
//! t      = gelu(W_t · embed(τ) + b_t)
//! h     += conv_b(gelu(conv_a(gelu(h)) + P_i t))   for each block i
//! output = head(h)                          (2 channels, zero-initialized)
//! ```

mod conv;
mod embedding;

pub use embedding::{gelu, gelu_grad, TimeEmbedding};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::StateShape;
use crate::rng::substream;
use conv::{conv_backward, conv_forward, ConvShape};

/// Hyperparameters of the drift network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftArch {
    pub channels: usize,
    pub depth: usize,
    pub kernel: usize,
    pub embed_dim: usize,
    /// Number of past states beyond the current one used as conditioning.
    pub history_len: usize,
}

impl Default for DriftArch {
    fn default() -> Self {
        Self {
            channels: 32,
            depth: 4,
            kernel: 3,
            embed_dim: 32,
            history_len: 1,
        }
    }
}

impl DriftArch {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("drift channels must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel size must be odd, got {}",
                self.kernel
            )));
        }
        if self.embed_dim < 2 || self.embed_dim % 2 == 1 {
            return Err(Error::Config(format!(
                "embedding dimension must be even and >= 2, got {}",
                self.embed_dim
            )));
        }
        Ok(())
    }

    /// States in the conditioning window, `l + 1`.
    pub fn window(&self) -> usize {
        self.history_len + 1
    }

    pub fn input_channels(&self) -> usize {
        StateShape::CHANNELS * (self.history_len + 2)
    }
}

#[derive(Debug, Clone, Copy)]
struct BlockLayout {
    wa: usize,
    ba: usize,
    proj: usize,
    wb: usize,
    bb: usize,
}

/// Offsets of each parameter group in the flat vector.
#[derive(Debug, Clone)]
struct Layout {
    stem: ConvShape,
    inner: ConvShape,
    head: ConvShape,
    stem_w: usize,
    stem_b: usize,
    emb_w: usize,
    emb_b: usize,
    blocks: Vec<BlockLayout>,
    head_w: usize,
    head_b: usize,
    total: usize,
}

impl Layout {
    fn new(arch: &DriftArch, shape: StateShape) -> Self {
        let (c, e, k) = (arch.channels, arch.embed_dim, arch.kernel);
        let conv = |cin, cout| ConvShape {
            cin,
            cout,
            kernel: k,
            height: shape.height,
            width: shape.width,
        };
        let (stem, inner, head) = (
            conv(arch.input_channels(), c),
            conv(c, c),
            conv(c, StateShape::CHANNELS),
        );
        let mut next = 0;
        let mut take = |len: usize| {
            let at = next;
            next += len;
            at
        };
        let stem_w = take(stem.weight_len());
        let stem_b = take(c);
        let emb_w = take(e * e);
        let emb_b = take(e);
        let blocks = (0..arch.depth)
            .map(|_| BlockLayout {
                wa: take(inner.weight_len()),
                ba: take(c),
                proj: take(c * e),
                wb: take(inner.weight_len()),
                bb: take(c),
            })
            .collect();
        let head_w = take(head.weight_len());
        let head_b = take(StateShape::CHANNELS);
        Self {
            stem,
            inner,
            head,
            stem_w,
            stem_b,
            emb_w,
            emb_b,
            blocks,
            head_w,
            head_b,
            total: next,
        }
    }
}

/// Named parameter groups, for diagnostics and tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub range: std::ops::Range<usize>,
}

/// Activations kept for the backward pass.
struct Tape {
    input: Vec<f64>,
    emb: Vec<f64>,
    t_pre: Vec<f64>,
    t: Vec<f64>,
    /// Residual stream before each block, plus the final one.
    h: Vec<Vec<f64>>,
    /// `conv_a(gelu(h)) + b_a + P t` for each block.
    u: Vec<Vec<f64>>,
    out: Vec<f64>,
}

/// The drift network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftNet {
    arch: DriftArch,
    shape: StateShape,
    embedding: TimeEmbedding,
    params: Vec<f64>,
}

fn add_bias(buf: &mut [f64], bias: &[f64], pixels: usize) {
    for (chunk, b) in buf.chunks_mut(pixels).zip(bias) {
        chunk.iter_mut().for_each(|x| *x += b);
    }
}

fn channel_sums(buf: &[f64], pixels: usize) -> Vec<f64> {
    buf.chunks(pixels).map(|c| c.iter().sum()).collect()
}

impl DriftNet {
    /// He-scaled random convolutions, zero biases and a zero head.
    pub fn init(arch: DriftArch, shape: StateShape, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch, shape)?;
        let layout = net.layout();
        let mut rng = substream(seed, "drift-init", 0);
        let mut fill = |params: &mut [f64], fan_in: usize| {
            let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            params.iter_mut().for_each(|p| *p = dist.sample(&mut rng));
        };
        let k2 = arch.kernel * arch.kernel;
        let p = &mut net.params;
        fill(
            &mut p[layout.stem_w..layout.stem_w + layout.stem.weight_len()],
            arch.input_channels() * k2,
        );
        fill(
            &mut p[layout.emb_w..layout.emb_w + arch.embed_dim * arch.embed_dim],
            arch.embed_dim,
        );
        for b in &layout.blocks {
            fill(
                &mut p[b.wa..b.wa + layout.inner.weight_len()],
                arch.channels * k2,
            );
            fill(
                &mut p[b.proj..b.proj + arch.channels * arch.embed_dim],
                arch.embed_dim,
            );
            fill(
                &mut p[b.wb..b.wb + layout.inner.weight_len()],
                arch.channels * k2,
            );
        }
        Ok(net)
    }

    pub fn zeros(arch: DriftArch, shape: StateShape) -> Result<Self> {
        arch.validate()?;
        if shape.is_empty() {
            return Err(Error::Config("state shape must be non-empty".into()));
        }
        let total = Layout::new(&arch, shape).total;
        Ok(Self {
            arch,
            shape,
            embedding: TimeEmbedding::new(arch.embed_dim),
            params: vec![0.0; total],
        })
    }

    pub fn from_params(arch: DriftArch, shape: StateShape, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(arch, shape)?;
        if params.len() != net.params.len() {
            return Err(Error::shape(
                format!("{} parameters", net.params.len()),
                format!("{}", params.len()),
            ));
        }
        net.params = params;
        Ok(net)
    }

    pub fn arch(&self) -> &DriftArch {
        &self.arch
    }

    pub fn shape(&self) -> StateShape {
        self.shape
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.arch, self.shape)
    }

    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let l = self.layout();
        let (c, e) = (self.arch.channels, self.arch.embed_dim);
        let g = |name: String, start: usize, len: usize| ParamGroup {
            name,
            range: start..start + len,
        };
        let mut groups = vec![
            g("stem.weight".into(), l.stem_w, l.stem.weight_len()),
            g("stem.bias".into(), l.stem_b, c),
            g("time.weight".into(), l.emb_w, e * e),
            g("time.bias".into(), l.emb_b, e),
        ];
        for (i, b) in l.blocks.iter().enumerate() {
            groups.push(g(
                format!("block{i}.conv_a.weight"),
                b.wa,
                l.inner.weight_len(),
            ));
            groups.push(g(format!("block{i}.conv_a.bias"), b.ba, c));
            groups.push(g(format!("block{i}.time_proj"), b.proj, c * e));
            groups.push(g(
                format!("block{i}.conv_b.weight"),
                b.wb,
                l.inner.weight_len(),
            ));
            groups.push(g(format!("block{i}.conv_b.bias"), b.bb, c));
        }
        groups.push(g("head.weight".into(), l.head_w, l.head.weight_len()));
        groups.push(g("head.bias".into(), l.head_b, StateShape::CHANNELS));
        groups
    }

    fn check_inputs(&self, x_tau: &[f64], history: &[&[f64]], tau: f64) -> Result<()> {
        self.shape.check(x_tau)?;
        if history.len() != self.arch.window() {
            return Err(Error::shape(
                format!("{} history states", self.arch.window()),
                format!("{}", history.len()),
            ));
        }
        for h in history {
            self.shape.check(h)?;
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Config(format!("pseudo-time {tau} outside [0, 1]")));
        }
        Ok(())
    }

    fn run(&self, x_tau: &[f64], history: &[&[f64]], tau: f64) -> Tape {
        let l = self.layout();
        let p = &self.params;
        let (c, e) = (self.arch.channels, self.arch.embed_dim);
        let px = self.shape.pixels();

        let mut input = Vec::with_capacity(self.arch.input_channels() * px);
        input.extend_from_slice(x_tau);
        for h in history {
            input.extend_from_slice(h);
        }

        let emb = self.embedding.embed(tau);
        let t_pre: Vec<f64> = (0..e)
            .map(|j| p[l.emb_b + j] + (0..e).map(|k| p[l.emb_w + j * e + k] * emb[k]).sum::<f64>())
            .collect();
        let t: Vec<f64> = t_pre.iter().map(|&x| gelu(x)).collect();

        let mut h = vec![0.0; c * px];
        conv_forward(&l.stem, &p[l.stem_w..], &input, &mut h);
        add_bias(&mut h, &p[l.stem_b..l.stem_b + c], px);

        let mut hs = Vec::with_capacity(l.blocks.len() + 1);
        let mut us = Vec::with_capacity(l.blocks.len());
        for b in &l.blocks {
            let a: Vec<f64> = h.iter().map(|&x| gelu(x)).collect();
            let mut u = vec![0.0; c * px];
            conv_forward(&l.inner, &p[b.wa..], &a, &mut u);
            let bias: Vec<f64> = (0..c)
                .map(|o| p[b.ba + o] + (0..e).map(|k| p[b.proj + o * e + k] * t[k]).sum::<f64>())
                .collect();
            add_bias(&mut u, &bias, px);
            let v: Vec<f64> = u.iter().map(|&x| gelu(x)).collect();
            let mut next = h.clone();
            conv_forward(&l.inner, &p[b.wb..], &v, &mut next);
            add_bias(&mut next, &p[b.bb..b.bb + c], px);
            hs.push(std::mem::replace(&mut h, next));
            us.push(u);
        }

        let mut out = vec![0.0; StateShape::CHANNELS * px];
        conv_forward(&l.head, &p[l.head_w..], &h, &mut out);
        add_bias(&mut out, &p[l.head_b..l.head_b + StateShape::CHANNELS], px);
        hs.push(h);
        Tape {
            input,
            emb,
            t_pre,
            t,
            h: hs,
            u: us,
            out,
        }
    }

    /// Evaluates the drift. `history` holds `l + 1` states, oldest first.
    pub fn forward(&self, x_tau: &[f64], history: &[&[f64]], tau: f64) -> Result<Vec<f64>> {
        self.check_inputs(x_tau, history, tau)?;
        let out = self.run(x_tau, history, tau).out;
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::non_finite("drift network output"));
        }
        Ok(out)
    }

    /// `‖b_θ − target‖² / d` and its gradient with respect to the parameters.
    pub fn loss_and_grad(
        &self,
        x_tau: &[f64],
        history: &[&[f64]],
        tau: f64,
        target: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.accumulate_loss_grad(x_tau, history, tau, target, 1.0, &mut grad)?;
        Ok((loss, grad))
    }

    /// Adds `scale · ∇loss` to `grad` and returns the unscaled loss.
    pub fn accumulate_loss_grad(
        &self,
        x_tau: &[f64],
        history: &[&[f64]],
        tau: f64,
        target: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.check_inputs(x_tau, history, tau)?;
        self.shape.check(target)?;
        if grad.len() != self.params.len() {
            return Err(Error::shape(
                format!("gradient of length {}", self.params.len()),
                format!("{}", grad.len()),
            ));
        }
        let tape = self.run(x_tau, history, tau);
        let d = target.len() as f64;
        let resid: Vec<f64> = tape.out.iter().zip(target).map(|(o, r)| o - r).collect();
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / d;
        let dout: Vec<f64> = resid.iter().map(|r| 2.0 * scale * r / d).collect();
        self.backward(&tape, &dout, grad);
        Ok(loss)
    }

    fn backward(&self, tape: &Tape, dout: &[f64], grad: &mut [f64]) {
        let l = self.layout();
        let p = &self.params;
        let (c, e) = (self.arch.channels, self.arch.embed_dim);
        let px = self.shape.pixels();
        let depth = l.blocks.len();

        for (o, s) in channel_sums(dout, px).into_iter().enumerate() {
            grad[l.head_b + o] += s;
        }
        let mut dh = vec![0.0; c * px];
        let hw = l.head_w..l.head_w + l.head.weight_len();
        conv_backward(
            &l.head,
            &p[hw.clone()],
            &tape.h[depth],
            dout,
            &mut grad[hw],
            Some(&mut dh),
        );

        let mut dt = vec![0.0; e];
        for (i, b) in l.blocks.iter().enumerate().rev() {
            let h_in = &tape.h[i];
            let u = &tape.u[i];
            for (o, s) in channel_sums(&dh, px).into_iter().enumerate() {
                grad[b.bb + o] += s;
            }
            let v: Vec<f64> = u.iter().map(|&x| gelu(x)).collect();
            let mut dv = vec![0.0; c * px];
            let wb = b.wb..b.wb + l.inner.weight_len();
            conv_backward(
                &l.inner,
                &p[wb.clone()],
                &v,
                &dh,
                &mut grad[wb],
                Some(&mut dv),
            );
            let du: Vec<f64> = dv.iter().zip(u).map(|(g, &x)| g * gelu_grad(x)).collect();
            let du_sum = channel_sums(&du, px);
            for o in 0..c {
                grad[b.ba + o] += du_sum[o];
                for k in 0..e {
                    grad[b.proj + o * e + k] += du_sum[o] * tape.t[k];
                    dt[k] += p[b.proj + o * e + k] * du_sum[o];
                }
            }
            let a: Vec<f64> = h_in.iter().map(|&x| gelu(x)).collect();
            let mut da = vec![0.0; c * px];
            let wa = b.wa..b.wa + l.inner.weight_len();
            conv_backward(
                &l.inner,
                &p[wa.clone()],
                &a,
                &du,
                &mut grad[wa],
                Some(&mut da),
            );
            for ((g, d), &x) in dh.iter_mut().zip(&da).zip(h_in) {
                *g += d * gelu_grad(x);
            }
        }

        for (o, s) in channel_sums(&dh, px).into_iter().enumerate() {
            grad[l.stem_b + o] += s;
        }
        let sw = l.stem_w..l.stem_w + l.stem.weight_len();
        conv_backward(
            &l.stem,
            &p[sw.clone()],
            &tape.input,
            &dh,
            &mut grad[sw],
            None,
        );

        for j in 0..e {
            let g = dt[j] * gelu_grad(tape.t_pre[j]);
            grad[l.emb_b + j] += g;
            for k in 0..e {
                grad[l.emb_w + j * e + k] += g * tape.emb[k];
            }
        }
    }
}
