//! FNO parameters, batched forward pass and exact reverse-mode gradients.
//!
//! Pipeline per sample: `v0 = P a`, then for each layer
//! `u = W v + b + K(v)`, `v' = act(u)` (the last layer skips `act`), then
//! `out = Q2 act(Q1 v + c1) + c2`. All parameters live in one flat `Vec<f64>`
//! whose block order is given by [`ParamLayout`]; gradients share it.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spectral::{ModeSet, SpectralPlan, Spectrum, Workspace};
use crate::error::{Error, Result};
use crate::grid::Dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Identity,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// `tanh` through `exp_m1`, accurate near zero and a good deal cheaper than
/// the libm routine. Beyond |z| = 20 the result is ±1 in double precision.
#[inline]
fn tanh(z: f64) -> f64 {
    let e = (2.0 * z.clamp(-20.0, 20.0)).exp_m1();
    e / (e + 2.0)
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + tanh(GELU_C * (x + GELU_A * x * x * x))),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let t = tanh(GELU_C * (x + GELU_A * x * x * x));
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
            }
            Activation::Identity => 1.0,
        }
    }

    /// `(apply(x), derivative(x))` from a single `tanh`.
    #[inline]
    pub fn apply_with_derivative(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Gelu => {
                let t = tanh(GELU_C * (x + GELU_A * x * x * x));
                let f = 0.5 * x * (1.0 + t);
                let d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                (f, d)
            }
            Activation::Identity => (x, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FnoConfig {
    pub in_channels: usize,
    pub width: usize,
    pub out_channels: usize,
    pub depth: usize,
    pub modes: ModeSet,
    /// Hidden width of the two-stage projection.
    pub proj_hidden: usize,
    pub activation: Activation,
}

impl Default for FnoConfig {
    fn default() -> Self {
        FnoConfig {
            in_channels: 8,
            width: 32,
            out_channels: 1,
            depth: 4,
            modes: ModeSet { mx: 6, my: 6, mz: 6 },
            proj_hidden: 64,
            activation: Activation::Gelu,
        }
    }
}

impl FnoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.in_channels == 0 || self.width == 0 || self.out_channels == 0 || self.proj_hidden == 0 {
            return bad("channel counts must be positive");
        }
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        ModeSet::new(self.modes.mx, self.modes.my, self.modes.mz)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRanges {
    pub r_re: Range<usize>,
    pub r_im: Range<usize>,
    pub w: Range<usize>,
    pub b: Range<usize>,
}

/// Offsets of every parameter block, in checkpoint order:
/// `P.w, P.b, [R.re, R.im, W.w, W.b] * depth, Q1.w, Q1.b, Q2.w, Q2.b`.
/// Matrices are row-major `[out][in]`; `R` is `[mode][out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub p_w: Range<usize>,
    pub p_b: Range<usize>,
    pub layers: Vec<LayerRanges>,
    pub q1_w: Range<usize>,
    pub q1_b: Range<usize>,
    pub q2_w: Range<usize>,
    pub q2_b: Range<usize>,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &FnoConfig) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let (da, dv, du, dh) = (cfg.in_channels, cfg.width, cfg.out_channels, cfg.proj_hidden);
        let m = cfg.modes.count();
        let p_w = take(dv * da);
        let p_b = take(dv);
        let layers = (0..cfg.depth)
            .map(|_| LayerRanges { r_re: take(m * dv * dv), r_im: take(m * dv * dv), w: take(dv * dv), b: take(dv) })
            .collect();
        let q1_w = take(dh * dv);
        let q1_b = take(dh);
        let q2_w = take(du * dh);
        let q2_b = take(du);
        ParamLayout { p_w, p_b, layers, q1_w, q1_b, q2_w, q2_b, total: at }
    }

    /// Named blocks, handy for reporting and gradient checks.
    pub fn groups(&self) -> Vec<(String, Range<usize>)> {
        let mut g = vec![("P.w".to_string(), self.p_w.clone()), ("P.b".to_string(), self.p_b.clone())];
        for (l, r) in self.layers.iter().enumerate() {
            g.push((format!("R{l}.re"), r.r_re.clone()));
            g.push((format!("R{l}.im"), r.r_im.clone()));
            g.push((format!("W{l}.w"), r.w.clone()));
            g.push((format!("W{l}.b"), r.b.clone()));
        }
        g.push(("Q1.w".into(), self.q1_w.clone()));
        g.push(("Q1.b".into(), self.q1_b.clone()));
        g.push(("Q2.w".into(), self.q2_w.clone()));
        g.push(("Q2.b".into(), self.q2_b.clone()));
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnoModel {
    pub config: FnoConfig,
    pub layout: ParamLayout,
    pub params: Vec<f64>,
}

/// Activations kept from a batched forward pass for [`FnoModel::backward`].
pub struct ForwardCache {
    grid: Dims,
    batch: usize,
    param_count: usize,
    inputs: Vec<f64>,
    /// `v[l]` for `l` in `0..=depth`, each `[batch][width][N]`.
    v: Vec<Vec<f64>>,
    /// `act'(u[l])`, `[batch][width][N]`; empty for the last layer.
    dact: Vec<Vec<f64>>,
    /// Spectra of `v[l]`, one per sample.
    vhat: Vec<Vec<Spectrum>>,
    /// `act'` at the hidden projection pre-activation.
    dh: Vec<f64>,
    h: Vec<f64>,
    output: Vec<f64>,
}

impl ForwardCache {
    /// `[batch][out_channels][N]`.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn grid(&self) -> Dims {
        self.grid
    }
}

/// `out[co][n] = sum_ci w[co][ci] in[ci][n] + b[co]`.
fn affine(w: &[f64], b: &[f64], input: &[f64], ci: usize, co: usize, n: usize, out: &mut [f64]) {
    for (o, row) in out.chunks_exact_mut(n).enumerate() {
        row.fill(b[o]);
    }
    unsafe {
        matrixmultiply::dgemm(
            co, ci, n, 1.0,
            w.as_ptr(), ci as isize, 1,
            input.as_ptr(), n as isize, 1,
            1.0,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `gw[co][ci] += sum_n g[co][n] x[ci][n]`, `gb[co] += sum_n g[co][n]`.
fn affine_param_grad(g: &[f64], x: &[f64], ci: usize, co: usize, n: usize, gw: &mut [f64], gb: &mut [f64]) {
    unsafe {
        matrixmultiply::dgemm(
            co, n, ci, 1.0,
            g.as_ptr(), n as isize, 1,
            x.as_ptr(), 1, n as isize,
            1.0,
            gw.as_mut_ptr(), ci as isize, 1,
        );
    }
    for (o, row) in g.chunks_exact(n).enumerate() {
        gb[o] += row.iter().sum::<f64>();
    }
}

/// `gx[ci][n] (+)= sum_co w[co][ci] g[co][n]`.
fn affine_input_grad(w: &[f64], g: &[f64], ci: usize, co: usize, n: usize, gx: &mut [f64], accumulate: bool) {
    unsafe {
        matrixmultiply::dgemm(
            ci, co, n, 1.0,
            w.as_ptr(), 1, ci as isize,
            g.as_ptr(), n as isize, 1,
            if accumulate { 1.0 } else { 0.0 },
            gx.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Samples per parallel task in [`mix_batch`]; fixed so results never depend
/// on the thread count.
const MIX_CHUNK: usize = 8;

fn reset(s: &mut Spectrum, modes: usize, dv: usize) {
    s.channels = dv;
    s.re.clear();
    s.re.resize(modes * dv, 0.0);
    s.im.clear();
    s.im.resize(modes * dv, 0.0);
}

/// `Y_b[m] = R[m] X_b[m]` over a batch, mode-outer within each chunk of
/// samples so `R[m]` stays hot.
fn mix_batch(r_re: &[f64], r_im: &[f64], xs: &[Spectrum], ys: &mut [Spectrum], dv: usize) {
    let modes = xs[0].modes();
    xs.par_chunks(MIX_CHUNK).zip(ys.par_chunks_mut(MIX_CHUNK)).for_each(|(xs, ys)| {
        for y in ys.iter_mut() {
            reset(y, modes, dv);
        }
        for m in 0..modes {
            let rr = &r_re[m * dv * dv..(m + 1) * dv * dv];
            let ri = &r_im[m * dv * dv..(m + 1) * dv * dv];
            for (x, y) in xs.iter().zip(ys.iter_mut()) {
                let xr = &x.re[m * dv..(m + 1) * dv];
                let xi = &x.im[m * dv..(m + 1) * dv];
                for o in 0..dv {
                    let (a, b) = (&rr[o * dv..(o + 1) * dv], &ri[o * dv..(o + 1) * dv]);
                    let mut sr = 0.0;
                    let mut si = 0.0;
                    for c in 0..dv {
                        sr += a[c] * xr[c] - b[c] * xi[c];
                        si += a[c] * xi[c] + b[c] * xr[c];
                    }
                    y.re[m * dv + o] = sr;
                    y.im[m * dv + o] = si;
                }
            }
        }
    });
}

/// Adjoint of [`mix_batch`]: `GX_b[m] = R[m]^H GY_b[m]` and
/// `GR[m] += sum_b GY_b[m] X_b[m]^H`, summed in sample order per mode.
#[allow(clippy::too_many_arguments)]
fn mix_batch_adjoint(
    r_re: &[f64],
    r_im: &[f64],
    xs: &[Spectrum],
    gys: &[Spectrum],
    gxs: &mut [Spectrum],
    gr_re: &mut [f64],
    gr_im: &mut [f64],
    dv: usize,
) {
    let modes = xs[0].modes();
    gxs.par_chunks_mut(MIX_CHUNK).zip(gys.par_chunks(MIX_CHUNK)).for_each(|(gxs, gys)| {
        for gx in gxs.iter_mut() {
            reset(gx, modes, dv);
        }
        for m in 0..modes {
            let rr = &r_re[m * dv * dv..(m + 1) * dv * dv];
            let ri = &r_im[m * dv * dv..(m + 1) * dv * dv];
            for (gy, gx) in gys.iter().zip(gxs.iter_mut()) {
                let gxr = &mut gx.re[m * dv..(m + 1) * dv];
                let gxi = &mut gx.im[m * dv..(m + 1) * dv];
                for o in 0..dv {
                    let (yr, yi) = (gy.re[m * dv + o], gy.im[m * dv + o]);
                    let (a, b) = (&rr[o * dv..(o + 1) * dv], &ri[o * dv..(o + 1) * dv]);
                    for c in 0..dv {
                        gxr[c] += a[c] * yr + b[c] * yi;
                        gxi[c] += a[c] * yi - b[c] * yr;
                    }
                }
            }
        }
    });
    gr_re
        .par_chunks_mut(dv * dv)
        .zip(gr_im.par_chunks_mut(dv * dv))
        .enumerate()
        .for_each(|(m, (grr, gri))| {
            for (x, gy) in xs.iter().zip(gys) {
                let xr = &x.re[m * dv..(m + 1) * dv];
                let xi = &x.im[m * dv..(m + 1) * dv];
                for o in 0..dv {
                    let (yr, yi) = (gy.re[m * dv + o], gy.im[m * dv + o]);
                    let (ga, gb) = (&mut grr[o * dv..(o + 1) * dv], &mut gri[o * dv..(o + 1) * dv]);
                    for c in 0..dv {
                        ga[c] += yr * xr[c] + yi * xi[c];
                        gb[c] += yi * xr[c] - yr * xi[c];
                    }
                }
            }
        });
}

impl FnoModel {
    /// Seeded initialization: `R` entries `(U[0,1) + i U[0,1)) / width^2`,
    /// affine maps `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    pub fn new(config: FnoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fill_uniform = |p: &mut [f64], r: Range<usize>, bound: f64, rng: &mut ChaCha8Rng| {
            for v in &mut p[r] {
                *v = rng.gen_range(-bound..bound);
            }
        };
        let (da, dv, dh) = (config.in_channels, config.width, config.proj_hidden);
        fill_uniform(&mut params, layout.p_w.clone(), 1.0 / (da as f64).sqrt(), &mut rng);
        fill_uniform(&mut params, layout.p_b.clone(), 1.0 / (da as f64).sqrt(), &mut rng);
        let r_scale = 1.0 / (dv * dv) as f64;
        for l in &layout.layers {
            for v in &mut params[l.r_re.clone()] {
                *v = r_scale * rng.gen::<f64>();
            }
            for v in &mut params[l.r_im.clone()] {
                *v = r_scale * rng.gen::<f64>();
            }
            fill_uniform(&mut params, l.w.clone(), 1.0 / (dv as f64).sqrt(), &mut rng);
            fill_uniform(&mut params, l.b.clone(), 1.0 / (dv as f64).sqrt(), &mut rng);
        }
        fill_uniform(&mut params, layout.q1_w.clone(), 1.0 / (dv as f64).sqrt(), &mut rng);
        fill_uniform(&mut params, layout.q1_b.clone(), 1.0 / (dv as f64).sqrt(), &mut rng);
        fill_uniform(&mut params, layout.q2_w.clone(), 1.0 / (dh as f64).sqrt(), &mut rng);
        fill_uniform(&mut params, layout.q2_b.clone(), 1.0 / (dh as f64).sqrt(), &mut rng);
        Ok(FnoModel { config, layout, params })
    }

    pub fn from_params(config: FnoConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Shape(format!("{} parameters given, config needs {}", params.len(), layout.total)));
        }
        Ok(FnoModel { config, layout, params })
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    fn check_inputs(&self, inputs: &[f64], batch: usize, grid: Dims) -> Result<SpectralPlan> {
        let need = batch * self.config.in_channels * grid.len();
        if batch == 0 || inputs.len() != need {
            return Err(Error::Shape(format!("input has {} values, expected {need}", inputs.len())));
        }
        if let Some(pos) = inputs.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite input value at flat index {pos}")));
        }
        SpectralPlan::new(grid, self.config.modes)
    }

    /// One sample, `[in_channels][N]` in, `[out_channels][N]` out. Works on
    /// any grid at least `2*modes-1` per axis.
    pub fn forward(&self, input: &[f64], grid: Dims) -> Result<Vec<f64>> {
        self.predict(input, 1, grid)
    }

    /// Batched inference without keeping activations. Samples run in
    /// parallel; each is evaluated exactly as in a batch of one.
    pub fn predict(&self, inputs: &[f64], batch: usize, grid: Dims) -> Result<Vec<f64>> {
        let plan = self.check_inputs(inputs, batch, grid)?;
        let cfg = &self.config;
        let (da, dv, du, dh) = (cfg.in_channels, cfg.width, cfg.out_channels, cfg.proj_hidden);
        let n = grid.len();
        let p = &self.params;
        let lay = &self.layout;
        let kzw = plan.inverse_weights();
        let mut out = vec![0.0; batch * du * n];
        let scratch = || {
            (
                Workspace::default(),
                vec![0.0; dv * n],
                vec![0.0; dv * n],
                vec![0.0; dh * n],
                Spectrum::zeros(0, 0),
                Spectrum::zeros(0, 0),
            )
        };
        out.par_chunks_mut(du * n).zip(inputs.par_chunks(da * n)).for_each_init(
            scratch,
            |(ws, v, u, h, vhat, yhat), (o, a)| {
                affine(&p[lay.p_w.clone()], &p[lay.p_b.clone()], a, da, dv, n, v);
                for (l, lr) in lay.layers.iter().enumerate() {
                    plan.analyze(v, dv, vhat, ws);
                    super::spectral::mix_modes(&p[lr.r_re.clone()], &p[lr.r_im.clone()], vhat, dv, yhat);
                    affine(&p[lr.w.clone()], &p[lr.b.clone()], v, dv, dv, n, u);
                    plan.synthesize_add(yhat, &kzw, u, ws);
                    let act = if l + 1 < cfg.depth { cfg.activation } else { Activation::Identity };
                    for (dst, &src) in v.iter_mut().zip(u.iter()) {
                        *dst = act.apply(src);
                    }
                }
                affine(&p[lay.q1_w.clone()], &p[lay.q1_b.clone()], v, dv, dh, n, h);
                h.iter_mut().for_each(|x| *x = cfg.activation.apply(*x));
                affine(&p[lay.q2_w.clone()], &p[lay.q2_b.clone()], h, dh, du, n, o);
            },
        );
        Ok(out)
    }

    /// Batched forward pass keeping everything [`Self::backward`] needs.
    pub fn forward_cached(&self, inputs: &[f64], batch: usize, grid: Dims) -> Result<ForwardCache> {
        let plan = self.check_inputs(inputs, batch, grid)?;
        let cfg = &self.config;
        let (da, dv, du, dh) = (cfg.in_channels, cfg.width, cfg.out_channels, cfg.proj_hidden);
        let n = grid.len();
        let p = &self.params;
        let lay = &self.layout;
        let kzw = plan.inverse_weights();
        let sv = dv * n;

        let mut v0 = vec![0.0; batch * sv];
        v0.par_chunks_mut(sv).zip(inputs.par_chunks(da * n)).for_each(|(o, a)| {
            affine(&p[lay.p_w.clone()], &p[lay.p_b.clone()], a, da, dv, n, o);
        });
        let mut vs = vec![v0];
        let mut dacts = Vec::with_capacity(cfg.depth);
        let mut vhats = Vec::with_capacity(cfg.depth);
        let mut yhats: Vec<Spectrum> = (0..batch).map(|_| Spectrum::zeros(0, 0)).collect();
        for (l, lr) in lay.layers.iter().enumerate() {
            let v = vs.last().unwrap();
            let mut vhat: Vec<Spectrum> = (0..batch).map(|_| Spectrum::zeros(0, 0)).collect();
            vhat.par_iter_mut()
                .zip(v.par_chunks(sv))
                .for_each_init(Workspace::default, |ws, (s, vb)| plan.analyze(vb, dv, s, ws));
            mix_batch(&p[lr.r_re.clone()], &p[lr.r_im.clone()], &vhat, &mut yhats, dv);
            let mut u = vec![0.0; batch * sv];
            u.par_chunks_mut(sv).zip(v.par_chunks(sv)).zip(yhats.par_iter()).for_each_init(
                Workspace::default,
                |ws, ((ub, vb), yb)| {
                    affine(&p[lr.w.clone()], &p[lr.b.clone()], vb, dv, dv, n, ub);
                    plan.synthesize_add(yb, &kzw, ub, ws);
                },
            );
            if l + 1 < cfg.depth {
                let mut d = vec![0.0; batch * sv];
                activate(cfg.activation, &mut u, &mut d);
                dacts.push(d);
            } else {
                dacts.push(Vec::new());
            }
            vhats.push(vhat);
            vs.push(u);
        }
        let v_last = vs.last().unwrap();
        let mut h = vec![0.0; batch * dh * n];
        h.par_chunks_mut(dh * n).zip(v_last.par_chunks(sv)).for_each(|(hb, vb)| {
            affine(&p[lay.q1_w.clone()], &p[lay.q1_b.clone()], vb, dv, dh, n, hb);
        });
        let mut dh_act = vec![0.0; batch * dh * n];
        activate(cfg.activation, &mut h, &mut dh_act);
        let mut output = vec![0.0; batch * du * n];
        output.par_chunks_mut(du * n).zip(h.par_chunks(dh * n)).for_each(|(ob, hb)| {
            affine(&p[lay.q2_w.clone()], &p[lay.q2_b.clone()], hb, dh, du, n, ob);
        });
        Ok(ForwardCache {
            grid,
            batch,
            param_count: lay.total,
            inputs: inputs.to_vec(),
            v: vs,
            dact: dacts,
            vhat: vhats,
            dh: dh_act,
            h,
            output,
        })
    }

    /// Gradient of `sum(upstream * output)` with respect to every parameter,
    /// in [`ParamLayout`] order. Per-sample work runs in parallel; parameter
    /// gradients are always summed in sample order, so the result is
    /// bit-identical for any thread count.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let (da, dv, du, dh) = (cfg.in_channels, cfg.width, cfg.out_channels, cfg.proj_hidden);
        let (batch, grid) = (cache.batch, cache.grid);
        let n = grid.len();
        if cache.param_count != self.layout.total || cache.v.len() != cfg.depth + 1 {
            return Err(Error::Shape("forward cache was produced by a different model".into()));
        }
        if upstream.len() != batch * du * n {
            return Err(Error::Shape(format!(
                "upstream gradient has {} values, expected {}",
                upstream.len(),
                batch * du * n
            )));
        }
        let plan = SpectralPlan::new(grid, cfg.modes)?;
        let kzw = plan.inverse_weights();
        let ones = vec![1.0; cfg.modes.mz];
        let p = &self.params;
        let lay = &self.layout;
        let mut grad = vec![0.0; lay.total];
        let sv = dv * n;
        let sh = dh * n;

        // projection
        for b in 0..batch {
            let (gw, gb) = split_two(&mut grad, lay.q2_w.clone(), lay.q2_b.clone());
            affine_param_grad(&upstream[b * du * n..(b + 1) * du * n], &cache.h[b * sh..(b + 1) * sh], dh, du, n, gw, gb);
        }
        let mut g_h = vec![0.0; batch * sh];
        g_h.par_chunks_mut(sh)
            .zip(upstream.par_chunks(du * n))
            .zip(cache.dh.par_chunks(sh))
            .for_each(|((gh, g_out), d)| {
                affine_input_grad(&p[lay.q2_w.clone()], g_out, dh, du, n, gh, false);
                gh.iter_mut().zip(d).for_each(|(g, &d)| *g *= d);
            });
        for b in 0..batch {
            let (gw, gb) = split_two(&mut grad, lay.q1_w.clone(), lay.q1_b.clone());
            affine_param_grad(&g_h[b * sh..(b + 1) * sh], &cache.v[cfg.depth][b * sv..(b + 1) * sv], dv, dh, n, gw, gb);
        }
        let mut g_v = vec![0.0; batch * sv];
        g_v.par_chunks_mut(sv).zip(g_h.par_chunks(sh)).for_each(|(gv, gh)| {
            affine_input_grad(&p[lay.q1_w.clone()], gh, dv, dh, n, gv, false);
        });

        // spectral layers, last to first
        let mut gys: Vec<Spectrum> = (0..batch).map(|_| Spectrum::zeros(0, 0)).collect();
        let mut gxs: Vec<Spectrum> = (0..batch).map(|_| Spectrum::zeros(0, 0)).collect();
        for l in (0..cfg.depth).rev() {
            let lr = &lay.layers[l];
            if l + 1 < cfg.depth {
                g_v.par_chunks_mut(sv).zip(cache.dact[l].par_chunks(sv)).for_each(|(g, d)| {
                    g.iter_mut().zip(d).for_each(|(g, &d)| *g *= d);
                });
            }
            let g_u = g_v;
            let v = &cache.v[l];
            for b in 0..batch {
                let (gw, gb) = split_two(&mut grad, lr.w.clone(), lr.b.clone());
                affine_param_grad(&g_u[b * sv..(b + 1) * sv], &v[b * sv..(b + 1) * sv], dv, dv, n, gw, gb);
            }
            gys.par_iter_mut()
                .zip(g_u.par_chunks(sv))
                .for_each_init(Workspace::default, |ws, (gy, gub)| {
                    plan.analyze(gub, dv, gy, ws);
                    for m in 0..cfg.modes.count() {
                        let w = kzw[cfg.modes.frequency(m).2 as usize];
                        gy.re[m * dv..(m + 1) * dv].iter_mut().for_each(|x| *x *= w);
                        gy.im[m * dv..(m + 1) * dv].iter_mut().for_each(|x| *x *= w);
                    }
                });
            {
                let (gr_re, gr_im) = split_two(&mut grad, lr.r_re.clone(), lr.r_im.clone());
                mix_batch_adjoint(&p[lr.r_re.clone()], &p[lr.r_im.clone()], &cache.vhat[l], &gys, &mut gxs, gr_re, gr_im, dv);
            }
            let mut g_prev = vec![0.0; batch * sv];
            g_prev
                .par_chunks_mut(sv)
                .zip(g_u.par_chunks(sv))
                .zip(gxs.par_iter())
                .for_each_init(Workspace::default, |ws, ((gp, gub), gx)| {
                    affine_input_grad(&p[lr.w.clone()], gub, dv, dv, n, gp, false);
                    plan.synthesize_add(gx, &ones, gp, ws);
                });
            g_v = g_prev;
        }

        // lift
        for b in 0..batch {
            let (gw, gb) = split_two(&mut grad, lay.p_w.clone(), lay.p_b.clone());
            affine_param_grad(
                &g_v[b * sv..(b + 1) * sv],
                &cache.inputs[b * da * n..(b + 1) * da * n],
                da,
                dv,
                n,
                gw,
                gb,
            );
        }
        Ok(grad)
    }
}

/// Applies `act` in place and stores its derivative at the old values in `d`.
fn activate(act: Activation, x: &mut [f64], d: &mut [f64]) {
    x.par_chunks_mut(4096).zip(d.par_chunks_mut(4096)).for_each(|(x, d)| {
        for (x, d) in x.iter_mut().zip(d.iter_mut()) {
            let (f, df) = act.apply_with_derivative(*x);
            *x = f;
            *d = df;
        }
    });
}

/// Two disjoint mutable blocks of one buffer; `a` must precede `b`.
fn split_two(buf: &mut [f64], a: Range<usize>, b: Range<usize>) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = buf.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.end - b.start])
}
