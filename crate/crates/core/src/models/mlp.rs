//! Stage-conditioned log-ratio network.
//!
//! Layout (`H` = hidden width, `E` = [`EMBEDDING_DIM`]):
//!
//! ```text
//! input  z (d)  -> Linear(d,H) -> LReLU -> Linear(H,H)              = e_z
//! stage  k      -> SinEmb(E) -> Linear(E,H) -> LReLU -> Linear(H,H) = e_k
//! [e_z, e_k] (2H) -> LReLU -> Linear(2H,H)                          = u_0
//! u_{j+1} = u_j + Linear(H,H)(LReLU(u_j))        for j = 0..N
//! f(z, k) = Linear(H,1)(LReLU(u_N))
//! ```
//!
//! Gradients are hand-derived for this one architecture. All evaluation is
//! batched over rows of `z` with a single stage per call.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RatioModel;
use crate::error::check_dim;
use crate::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const EMBEDDING_DIM: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_dim: usize,
    #[serde(default = "default_width")]
    pub hidden_width: usize,
    #[serde(default = "default_blocks")]
    pub num_resblocks: usize,
    /// `K + 1`: valid stage indices are `0..num_stages`.
    #[serde(default = "default_stages")]
    pub num_stages: usize,
}

fn default_width() -> usize {
    128
}
fn default_blocks() -> usize {
    3
}
fn default_stages() -> usize {
    1
}

impl MlpConfig {
    pub fn new(input_dim: usize, num_stages: usize) -> Self {
        Self { input_dim, hidden_width: 128, num_resblocks: 3, num_stages }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_width == 0 || self.num_resblocks == 0 || self.num_stages == 0 {
            return Err(Error::invalid(format!("all MLP sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        Layout::new(self).total
    }
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
struct Layout {
    d: usize,
    h: usize,
    w_in1: usize,
    b_in1: usize,
    w_in2: usize,
    b_in2: usize,
    w_st1: usize,
    b_st1: usize,
    w_st2: usize,
    b_st2: usize,
    w_join: usize,
    b_join: usize,
    blocks: Vec<(usize, usize)>,
    w_out: usize,
    b_out: usize,
    total: usize,
}

impl Layout {
    fn new(c: &MlpConfig) -> Self {
        let (d, h, e) = (c.input_dim, c.hidden_width, EMBEDDING_DIM);
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let w_in1 = take(h * d);
        let b_in1 = take(h);
        let w_in2 = take(h * h);
        let b_in2 = take(h);
        let w_st1 = take(h * e);
        let b_st1 = take(h);
        let w_st2 = take(h * h);
        let b_st2 = take(h);
        let w_join = take(h * 2 * h);
        let b_join = take(h);
        let blocks = (0..c.num_resblocks).map(|_| (take(h * h), take(h))).collect();
        let w_out = take(h);
        let b_out = take(1);
        Self { d, h, w_in1, b_in1, w_in2, b_in2, w_st1, b_st1, w_st2, b_st2, w_join, b_join, blocks, w_out, b_out, total: off }
    }

    /// `(weight offset, bias offset, fan_in, fan_out)` for every affine map.
    fn affine_maps(&self) -> Vec<(usize, usize, usize, usize)> {
        let (d, h) = (self.d, self.h);
        let mut v = vec![
            (self.w_in1, self.b_in1, d, h),
            (self.w_in2, self.b_in2, h, h),
            (self.w_st1, self.b_st1, EMBEDDING_DIM, h),
            (self.w_st2, self.b_st2, h, h),
            (self.w_join, self.b_join, 2 * h, h),
        ];
        v.extend(self.blocks.iter().map(|&(w, b)| (w, b, h, h)));
        v.push((self.w_out, self.b_out, h, 1));
        v
    }
}

/// Transformer-style sinusoidal embedding of a stage index: the first half
/// holds `sin(k ω_j)`, the second half `cos(k ω_j)`, `ω_j = 10000^(−j/(E/2))`.
pub fn sinusoidal_embedding(stage: usize) -> Array1<f64> {
    let half = EMBEDDING_DIM / 2;
    let k = stage as f64;
    let mut out = Array1::zeros(EMBEDDING_DIM);
    for j in 0..half {
        let w = (-(10_000f64).ln() * j as f64 / half as f64).exp();
        out[j] = (k * w).sin();
        out[half + j] = (k * w).cos();
    }
    out
}

#[inline]
fn lrelu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

#[inline]
fn lrelu_slope(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Intermediate activations kept for the backward pass.
struct Tape {
    z: Array2<f64>,
    h1: Array2<f64>,
    a1: Array2<f64>,
    emb: Array1<f64>,
    h3: Array1<f64>,
    a3: Array1<f64>,
    /// Pre-activation of the join layer, `[e_z, e_k]`.
    joined: Array2<f64>,
    /// `u_0 ..= u_N`.
    residual: Vec<Array2<f64>>,
    out: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpRatioModel {
    config: MlpConfig,
    layout_total: usize,
    params: Array1<f64>,
}

impl MlpRatioModel {
    /// All-zero parameters; the output is identically zero.
    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let n = config.num_params();
        Ok(Self { config, layout_total: n, params: Array1::zeros(n) })
    }

    /// Fan-in scaled uniform initialization, `U(−1/√fan_in, 1/√fan_in)` for
    /// weights and biases alike.
    pub fn init<R: Rng + ?Sized>(config: MlpConfig, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let layout = Layout::new(&config);
        for (w, b, fan_in, fan_out) in layout.affine_maps() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in m.params.slice_mut(s![w..w + fan_in * fan_out]).iter_mut() {
                *p = rng.random_range(-bound..bound);
            }
            for p in m.params.slice_mut(s![b..b + fan_out]).iter_mut() {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(m)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.layout_total
    }

    pub fn params(&self) -> ArrayView1<'_, f64> {
        self.params.view()
    }

    pub fn params_mut(&mut self) -> ndarray::ArrayViewMut1<'_, f64> {
        self.params.view_mut()
    }

    pub fn set_params(&mut self, params: Array1<f64>) -> Result<()> {
        check_dim(self.layout_total, params.len())?;
        self.params = params;
        Ok(())
    }

    /// Adapter exposing one stage as a [`RatioModel`].
    pub fn at_stage(&self, stage: usize) -> Result<StagedMlp<'_>> {
        self.check_stage(stage)?;
        Ok(StagedMlp { model: self, stage })
    }

    fn check_stage(&self, stage: usize) -> Result<()> {
        if stage >= self.config.num_stages {
            return Err(Error::invalid(format!(
                "stage {stage} out of range 0..{}",
                self.config.num_stages
            )));
        }
        Ok(())
    }

    fn check_input(&self, zs: &ArrayView2<'_, f64>, stage: usize) -> Result<()> {
        check_dim(self.config.input_dim, zs.ncols())?;
        self.check_stage(stage)
    }

    fn mat(&self, off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        self.params.slice(s![off..off + rows * cols]).into_shape_with_order((rows, cols)).expect("layout")
    }

    fn vec(&self, off: usize, len: usize) -> ArrayView1<'_, f64> {
        self.params.slice(s![off..off + len])
    }

    fn forward_tape(&self, zs: ArrayView2<'_, f64>, stage: usize) -> Tape {
        let l = Layout::new(&self.config);
        let (d, h) = (l.d, l.h);

        let h1 = zs.dot(&self.mat(l.w_in1, h, d).t()) + self.vec(l.b_in1, h);
        let a1 = h1.mapv(lrelu);
        let e_z = a1.dot(&self.mat(l.w_in2, h, h).t()) + self.vec(l.b_in2, h);

        let emb = sinusoidal_embedding(stage);
        let h3 = self.mat(l.w_st1, h, EMBEDDING_DIM).dot(&emb) + self.vec(l.b_st1, h);
        let a3 = h3.mapv(lrelu);
        let e_k = self.mat(l.w_st2, h, h).dot(&a3) + self.vec(l.b_st2, h);

        let n = zs.nrows();
        let mut joined = Array2::zeros((n, 2 * h));
        joined.slice_mut(s![.., ..h]).assign(&e_z);
        joined.slice_mut(s![.., h..]).assign(&e_k);

        let u0 = joined.mapv(lrelu).dot(&self.mat(l.w_join, h, 2 * h).t()) + self.vec(l.b_join, h);
        let mut residual = Vec::with_capacity(l.blocks.len() + 1);
        residual.push(u0);
        for &(w, b) in &l.blocks {
            let u = residual.last().expect("nonempty");
            let next = u + &(u.mapv(lrelu).dot(&self.mat(w, h, h).t()) + self.vec(b, h));
            residual.push(next);
        }
        let last = residual.last().expect("nonempty");
        let out = last.mapv(lrelu).dot(&self.vec(l.w_out, h)) + self.params[l.b_out];

        Tape { z: zs.to_owned(), h1, a1, emb, h3, a3, joined, residual, out }
    }

    /// Reverse pass for upstream coefficients `g_i` on each output. Returns
    /// `Σ_i g_i ∇_θ f(z_i)` and, if requested, the per-row input gradients
    /// `g_i ∇_z f(z_i)`.
    fn backward(&self, tape: &Tape, upstream: ArrayView1<'_, f64>, want_input: bool) -> (Array1<f64>, Option<Array2<f64>>) {
        let l = Layout::new(&self.config);
        let h = l.h;
        let mut grad = Array1::<f64>::zeros(self.layout_total);

        // output layer
        let u_last = tape.residual.last().expect("nonempty");
        let act_last = u_last.mapv(lrelu);
        grad.slice_mut(s![l.w_out..l.w_out + h]).assign(&act_last.t().dot(&upstream));
        grad[l.b_out] = upstream.sum();
        let w_out = self.vec(l.w_out, h);
        let mut du = Array2::<f64>::zeros((tape.z.nrows(), h));
        for ((mut row, &g), urow) in du.rows_mut().into_iter().zip(upstream.iter()).zip(u_last.rows()) {
            for ((dst, &w), &u) in row.iter_mut().zip(w_out.iter()).zip(urow.iter()) {
                *dst = g * w * lrelu_slope(u);
            }
        }

        // residual blocks, last to first
        for (j, &(w, b)) in l.blocks.iter().enumerate().rev() {
            let u_in = &tape.residual[j];
            let act = u_in.mapv(lrelu);
            grad.slice_mut(s![w..w + h * h])
                .assign(&du.t().dot(&act).flatten());
            grad.slice_mut(s![b..b + h]).assign(&du.sum_axis(Axis(0)));
            let mut through = du.dot(&self.mat(w, h, h));
            through.zip_mut_with(u_in, |t, &u| *t *= lrelu_slope(u));
            du += &through;
        }

        // join layer
        let joined_act = tape.joined.mapv(lrelu);
        grad.slice_mut(s![l.w_join..l.w_join + 2 * h * h])
            .assign(&du.t().dot(&joined_act).flatten());
        grad.slice_mut(s![l.b_join..l.b_join + h]).assign(&du.sum_axis(Axis(0)));
        let mut d_joined = du.dot(&self.mat(l.w_join, h, 2 * h));
        d_joined.zip_mut_with(&tape.joined, |t, &c| *t *= lrelu_slope(c));
        let d_ez = d_joined.slice(s![.., ..h]);
        let d_ek = d_joined.slice(s![.., h..]).sum_axis(Axis(0));

        // stage branch (shared across the batch)
        grad.slice_mut(s![l.w_st2..l.w_st2 + h * h]).assign(
            &outer(&d_ek, &tape.a3).flatten(),
        );
        grad.slice_mut(s![l.b_st2..l.b_st2 + h]).assign(&d_ek);
        let mut d_h3 = self.mat(l.w_st2, h, h).t().dot(&d_ek);
        d_h3.zip_mut_with(&tape.h3, |t, &x| *t *= lrelu_slope(x));
        grad.slice_mut(s![l.w_st1..l.w_st1 + h * EMBEDDING_DIM]).assign(
            &outer(&d_h3, &tape.emb).flatten(),
        );
        grad.slice_mut(s![l.b_st1..l.b_st1 + h]).assign(&d_h3);

        // input branch
        grad.slice_mut(s![l.w_in2..l.w_in2 + h * h])
            .assign(&d_ez.t().dot(&tape.a1).flatten());
        grad.slice_mut(s![l.b_in2..l.b_in2 + h]).assign(&d_ez.sum_axis(Axis(0)));
        let mut d_h1 = d_ez.dot(&self.mat(l.w_in2, h, h));
        d_h1.zip_mut_with(&tape.h1, |t, &x| *t *= lrelu_slope(x));
        grad.slice_mut(s![l.w_in1..l.w_in1 + h * l.d])
            .assign(&d_h1.t().dot(&tape.z).flatten());
        grad.slice_mut(s![l.b_in1..l.b_in1 + h]).assign(&d_h1.sum_axis(Axis(0)));

        let input = want_input.then(|| d_h1.dot(&self.mat(l.w_in1, h, l.d)));
        (grad, input)
    }

    /// `f̃(z, stage)` for each row of `zs`.
    pub fn forward_batch(&self, zs: ArrayView2<'_, f64>, stage: usize) -> Result<Array1<f64>> {
        self.check_input(&zs, stage)?;
        Ok(self.forward_tape(zs, stage).out)
    }

    pub fn forward(&self, z: ArrayView1<'_, f64>, stage: usize) -> Result<f64> {
        let zs = z.insert_axis(Axis(0));
        Ok(self.forward_batch(zs, stage)?[0])
    }

    /// `∂f̃(z, stage)/∂θ`, aligned with [`MlpRatioModel::params`].
    pub fn param_grad(&self, z: ArrayView1<'_, f64>, stage: usize) -> Result<Array1<f64>> {
        let zs = z.insert_axis(Axis(0));
        self.pullback_batch(zs, stage, ndarray::aview1(&[1.0]))
    }

    /// `Σ_i upstream[i] ∇_θ f̃(z_i, stage)`.
    pub fn pullback_batch(&self, zs: ArrayView2<'_, f64>, stage: usize, upstream: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_input(&zs, stage)?;
        check_dim(zs.nrows(), upstream.len())?;
        let tape = self.forward_tape(zs, stage);
        Ok(self.backward(&tape, upstream, false).0)
    }

    /// `(f̃, Σ_i c_i ∇_θ f̃)` with the coefficients computed from `f̃` itself,
    /// using a single forward pass.
    pub fn forward_with_pullback(
        &self,
        zs: ArrayView2<'_, f64>,
        stage: usize,
        weights_of: &mut dyn FnMut(ArrayView1<'_, f64>) -> Array1<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        self.check_input(&zs, stage)?;
        let tape = self.forward_tape(zs, stage);
        let w = weights_of(tape.out.view());
        check_dim(zs.nrows(), w.len())?;
        let (g, _) = self.backward(&tape, w.view(), false);
        Ok((tape.out, g))
    }

    /// Per-row input gradients `∇_z f̃(z_i, stage)` together with the outputs.
    pub fn input_grad_batch(&self, zs: ArrayView2<'_, f64>, stage: usize) -> Result<(Array1<f64>, Array2<f64>)> {
        self.check_input(&zs, stage)?;
        let tape = self.forward_tape(zs, stage);
        let ones = Array1::ones(zs.nrows());
        let (_, input) = self.backward(&tape, ones.view(), true);
        Ok((tape.out, input.expect("requested")))
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

/// One stage of an [`MlpRatioModel`] viewed as a [`RatioModel`].
#[derive(Debug, Clone, Copy)]
pub struct StagedMlp<'a> {
    pub model: &'a MlpRatioModel,
    pub stage: usize,
}

impl RatioModel for StagedMlp<'_> {
    fn num_params(&self) -> usize {
        self.model.num_params()
    }

    fn input_dim(&self) -> usize {
        self.model.config.input_dim
    }

    fn log_ratio(&self, xs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.model.forward_batch(xs, self.stage)
    }

    fn pullback(&self, xs: ArrayView2<'_, f64>, weights: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.model.pullback_batch(xs, self.stage, weights)
    }

    fn log_ratio_with_pullback(
        &self,
        xs: ArrayView2<'_, f64>,
        weights_of: &mut dyn FnMut(ArrayView1<'_, f64>) -> Array1<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        self.model.forward_with_pullback(xs, self.stage, weights_of)
    }
}
