//! Truncated spectral transforms and the spectral convolution.
//!
//! Retained modes are the signed frequencies `|kx| < mx`, `|ky| < my` and the
//! non-negative `kz < mz` (the real-input half spectrum). Mode index is
//! `((kz * (2my-1)) + (ky + my-1)) * (2mx-1) + (kx + mx-1)`, which does not
//! depend on the grid, so the same weights apply at any resolution.
//!
//! Spectra are stored as split real/imaginary arrays laid out `[mode][channel]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSet {
    pub mx: usize,
    pub my: usize,
    pub mz: usize,
}

impl ModeSet {
    pub fn new(mx: usize, my: usize, mz: usize) -> Result<Self> {
        if mx == 0 || my == 0 || mz == 0 {
            return Err(Error::InvalidArgument("mode counts must be positive".into()));
        }
        Ok(ModeSet { mx, my, mz })
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.mx, self.my, self.mz]
    }

    pub fn width_x(&self) -> usize {
        2 * self.mx - 1
    }

    pub fn width_y(&self) -> usize {
        2 * self.my - 1
    }

    pub fn count(&self) -> usize {
        self.width_x() * self.width_y() * self.mz
    }

    /// Index of a signed frequency triple, or `None` if it is not retained.
    pub fn index(&self, kx: i64, ky: i64, kz: i64) -> Option<usize> {
        let (mx, my, mz) = (self.mx as i64, self.my as i64, self.mz as i64);
        if kx.abs() >= mx || ky.abs() >= my || !(0..mz).contains(&kz) {
            return None;
        }
        let xi = (kx + mx - 1) as usize;
        let yi = (ky + my - 1) as usize;
        Some((kz as usize * self.width_y() + yi) * self.width_x() + xi)
    }

    pub fn frequency(&self, m: usize) -> (i64, i64, i64) {
        let xi = m % self.width_x();
        let rest = m / self.width_x();
        let yi = rest % self.width_y();
        let kz = rest / self.width_y();
        (xi as i64 - (self.mx as i64 - 1), yi as i64 - (self.my as i64 - 1), kz as i64)
    }

    /// Smallest grid edge per axis able to carry these modes without aliasing.
    pub fn min_grid(&self) -> [usize; 3] {
        [self.width_x(), self.width_y(), 2 * self.mz - 1]
    }
}

/// Split-complex spectrum, `[mode][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub channels: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Spectrum {
    pub fn zeros(modes: usize, channels: usize) -> Self {
        Spectrum { channels, re: vec![0.0; modes * channels], im: vec![0.0; modes * channels] }
    }

    pub fn modes(&self) -> usize {
        if self.channels == 0 {
            0
        } else {
            self.re.len() / self.channels
        }
    }
}

struct Twiddles {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Twiddles {
    /// `e^{-2 pi i k t / n}` for each signed `k` in `freqs` and `t` in `0..n`.
    fn new(freqs: impl Iterator<Item = i64>, n: usize) -> Self {
        let mut cos = Vec::new();
        let mut sin = Vec::new();
        for k in freqs {
            for t in 0..n {
                let r = (k * t as i64).rem_euclid(n as i64) as f64;
                let a = -2.0 * PI * r / n as f64;
                cos.push(a.cos());
                sin.push(a.sin());
            }
        }
        Twiddles { cos, sin }
    }
}

/// Reusable intermediate buffers; one per thread.
#[derive(Default)]
pub struct Workspace {
    a_re: Vec<f64>,
    a_im: Vec<f64>,
    b_re: Vec<f64>,
    b_im: Vec<f64>,
}

fn zeroed(buf: &mut Vec<f64>, len: usize) -> &mut [f64] {
    buf.clear();
    buf.resize(len, 0.0);
    buf.as_mut_slice()
}

/// Truncated forward transform and weighted synthesis for one grid.
pub struct SpectralPlan {
    dims: Dims,
    modes: ModeSet,
    tx: Twiddles,
    ty: Twiddles,
    tz: Twiddles,
}

impl SpectralPlan {
    pub fn new(dims: Dims, modes: ModeSet) -> Result<Self> {
        let need = modes.min_grid();
        let have = dims.as_array();
        if (0..3).any(|a| have[a] < need[a]) {
            return Err(Error::Shape(format!(
                "grid {have:?} too small for modes {:?}, need at least {need:?}",
                modes.as_array()
            )));
        }
        let (mx, my) = (modes.mx as i64, modes.my as i64);
        Ok(SpectralPlan {
            dims,
            modes,
            tx: Twiddles::new(-(mx - 1)..mx, dims.nx),
            ty: Twiddles::new(-(my - 1)..my, dims.ny),
            tz: Twiddles::new(0..modes.mz as i64, dims.nz),
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn modes(&self) -> ModeSet {
        self.modes
    }

    /// Weights that make synthesis the adjoint-free inverse of the half
    /// spectrum: `1/N` for `kz == 0`, `2/N` otherwise.
    pub fn inverse_weights(&self) -> Vec<f64> {
        let n = self.dims.len() as f64;
        (0..self.modes.mz).map(|kz| if kz == 0 { 1.0 / n } else { 2.0 / n }).collect()
    }

    /// Retained DFT coefficients of `channels` real fields (each `N` long,
    /// channel-major) into `out`.
    pub fn analyze(&self, fields: &[f64], channels: usize, out: &mut Spectrum, ws: &mut Workspace) {
        let (nx, ny, nz) = (self.dims.nx, self.dims.ny, self.dims.nz);
        let nxy = nx * ny;
        let n = nxy * nz;
        let (wx, wy, mz) = (self.modes.width_x(), self.modes.width_y(), self.modes.mz);
        assert_eq!(fields.len(), channels * n);
        out.channels = channels;
        out.re.clear();
        out.re.resize(self.modes.count() * channels, 0.0);
        out.im.clear();
        out.im.resize(self.modes.count() * channels, 0.0);

        // z: a[c][kz][y][x]
        let a_re = zeroed(&mut ws.a_re, channels * mz * nxy);
        let a_im = zeroed(&mut ws.a_im, channels * mz * nxy);
        for c in 0..channels {
            let f = &fields[c * n..(c + 1) * n];
            for kz in 0..mz {
                let o = (c * mz + kz) * nxy;
                let (ore, oim) = (&mut a_re[o..o + nxy], &mut a_im[o..o + nxy]);
                for z in 0..nz {
                    let (wc, ws_) = (self.tz.cos[kz * nz + z], self.tz.sin[kz * nz + z]);
                    let plane = &f[z * nxy..(z + 1) * nxy];
                    for ((r, i), &v) in ore.iter_mut().zip(oim.iter_mut()).zip(plane) {
                        *r += v * wc;
                        *i += v * ws_;
                    }
                }
            }
        }

        // y: b[c][kz][ky][x]
        let b_re = zeroed(&mut ws.b_re, channels * mz * wy * nx);
        let b_im = zeroed(&mut ws.b_im, channels * mz * wy * nx);
        for cz in 0..channels * mz {
            for yi in 0..wy {
                let o = (cz * wy + yi) * nx;
                let (ore, oim) = (&mut b_re[o..o + nx], &mut b_im[o..o + nx]);
                for y in 0..ny {
                    let (wc, ws_) = (self.ty.cos[yi * ny + y], self.ty.sin[yi * ny + y]);
                    let s = cz * nxy + y * nx;
                    let (sre, sim) = (&a_re[s..s + nx], &a_im[s..s + nx]);
                    for x in 0..nx {
                        ore[x] += sre[x] * wc - sim[x] * ws_;
                        oim[x] += sre[x] * ws_ + sim[x] * wc;
                    }
                }
            }
        }

        // x: out[m][c]
        for c in 0..channels {
            for kz in 0..mz {
                for yi in 0..wy {
                    let s = ((c * mz + kz) * wy + yi) * nx;
                    let (sre, sim) = (&b_re[s..s + nx], &b_im[s..s + nx]);
                    for xi in 0..wx {
                        let (tc, ts) = (&self.tx.cos[xi * nx..(xi + 1) * nx], &self.tx.sin[xi * nx..(xi + 1) * nx]);
                        let mut re = 0.0;
                        let mut im = 0.0;
                        for x in 0..nx {
                            re += sre[x] * tc[x] - sim[x] * ts[x];
                            im += sre[x] * ts[x] + sim[x] * tc[x];
                        }
                        let m = (kz * wy + yi) * wx + xi;
                        out.re[m * channels + c] = re;
                        out.im[m * channels + c] = im;
                    }
                }
            }
        }
    }

    /// Adds `sum_kz w[kz] Re(sum_{kx,ky} S e^{+i theta})` for each channel
    /// of `spec` into `out` (channel-major, `N` per channel).
    pub fn synthesize_add(&self, spec: &Spectrum, kz_weights: &[f64], out: &mut [f64], ws: &mut Workspace) {
        let (nx, ny, nz) = (self.dims.nx, self.dims.ny, self.dims.nz);
        let nxy = nx * ny;
        let n = nxy * nz;
        let (wx, wy, mz) = (self.modes.width_x(), self.modes.width_y(), self.modes.mz);
        let channels = spec.channels;
        assert_eq!(out.len(), channels * n);
        assert_eq!(kz_weights.len(), mz);

        // x: b[c][kz][ky][x]
        let b_re = zeroed(&mut ws.b_re, channels * mz * wy * nx);
        let b_im = zeroed(&mut ws.b_im, channels * mz * wy * nx);
        for c in 0..channels {
            for kz in 0..mz {
                for yi in 0..wy {
                    let o = ((c * mz + kz) * wy + yi) * nx;
                    let (ore, oim) = (&mut b_re[o..o + nx], &mut b_im[o..o + nx]);
                    for xi in 0..wx {
                        let m = (kz * wy + yi) * wx + xi;
                        let (sr, si) = (spec.re[m * channels + c], spec.im[m * channels + c]);
                        let (tc, ts) = (&self.tx.cos[xi * nx..(xi + 1) * nx], &self.tx.sin[xi * nx..(xi + 1) * nx]);
                        // conjugate twiddle: e^{+i theta} = cos - i sin of the stored e^{-i theta}
                        for x in 0..nx {
                            ore[x] += sr * tc[x] + si * ts[x];
                            oim[x] += si * tc[x] - sr * ts[x];
                        }
                    }
                }
            }
        }

        // y: a[c][kz][y][x]
        let a_re = zeroed(&mut ws.a_re, channels * mz * nxy);
        let a_im = zeroed(&mut ws.a_im, channels * mz * nxy);
        for cz in 0..channels * mz {
            for y in 0..ny {
                let o = cz * nxy + y * nx;
                let (ore, oim) = (&mut a_re[o..o + nx], &mut a_im[o..o + nx]);
                for yi in 0..wy {
                    let (wc, ws_) = (self.ty.cos[yi * ny + y], self.ty.sin[yi * ny + y]);
                    let s = (cz * wy + yi) * nx;
                    let (sre, sim) = (&b_re[s..s + nx], &b_im[s..s + nx]);
                    for x in 0..nx {
                        ore[x] += sre[x] * wc + sim[x] * ws_;
                        oim[x] += sim[x] * wc - sre[x] * ws_;
                    }
                }
            }
        }

        // z: real part only
        for c in 0..channels {
            let f = &mut out[c * n..(c + 1) * n];
            for z in 0..nz {
                let plane = &mut f[z * nxy..(z + 1) * nxy];
                for kz in 0..mz {
                    let w = kz_weights[kz];
                    let (wc, ws_) = (w * self.tz.cos[kz * nz + z], w * self.tz.sin[kz * nz + z]);
                    let s = (c * mz + kz) * nxy;
                    let (sre, sim) = (&a_re[s..s + nxy], &a_im[s..s + nxy]);
                    for ((o, &r), &i) in plane.iter_mut().zip(sre).zip(sim) {
                        *o += r * wc + i * ws_;
                    }
                }
            }
        }
    }
}

/// Per-mode complex channel mixing `Y[m] = R[m] X[m]`. `r_re`/`r_im` are
/// `[mode][out][in]`.
pub fn mix_modes(r_re: &[f64], r_im: &[f64], input: &Spectrum, out_channels: usize, out: &mut Spectrum) {
    let ci = input.channels;
    let modes = input.modes();
    assert_eq!(r_re.len(), modes * out_channels * ci);
    out.channels = out_channels;
    out.re.clear();
    out.re.resize(modes * out_channels, 0.0);
    out.im.clear();
    out.im.resize(modes * out_channels, 0.0);
    for m in 0..modes {
        let (xr, xi) = (&input.re[m * ci..(m + 1) * ci], &input.im[m * ci..(m + 1) * ci]);
        for o in 0..out_channels {
            let base = (m * out_channels + o) * ci;
            let (rr, ri) = (&r_re[base..base + ci], &r_im[base..base + ci]);
            let mut yr = 0.0;
            let mut yi = 0.0;
            for c in 0..ci {
                yr += rr[c] * xr[c] - ri[c] * xi[c];
                yi += rr[c] * xi[c] + ri[c] * xr[c];
            }
            out.re[m * out_channels + o] = yr;
            out.im[m * out_channels + o] = yi;
        }
    }
}

/// Single-sample spectral convolution `K(v)`: truncate, mix, synthesize.
/// `v` is `[channel][N]` with `r_re.len() / (modes * out)` input channels.
pub fn spectral_conv(
    plan: &SpectralPlan,
    v: &[f64],
    in_channels: usize,
    out_channels: usize,
    r_re: &[f64],
    r_im: &[f64],
) -> Result<Vec<f64>> {
    let n = plan.dims().len();
    if v.len() != in_channels * n {
        return Err(Error::Shape(format!("input has {} values, expected {}", v.len(), in_channels * n)));
    }
    let m = plan.modes().count();
    if r_re.len() != m * out_channels * in_channels || r_im.len() != r_re.len() {
        return Err(Error::Shape("spectral weight shape mismatch".into()));
    }
    let mut ws = Workspace::default();
    let mut vhat = Spectrum::zeros(m, in_channels);
    plan.analyze(v, in_channels, &mut vhat, &mut ws);
    let mut yhat = Spectrum::zeros(m, out_channels);
    mix_modes(r_re, r_im, &vhat, out_channels, &mut yhat);
    let mut out = vec![0.0; out_channels * n];
    plan.synthesize_add(&yhat, &plan.inverse_weights(), &mut out, &mut ws);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fno::dft::{dft3_real, oracle::direct_dft3, Direction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rustfft::num_complex::Complex64;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn bin(k: i64, n: usize) -> usize {
        k.rem_euclid(n as i64) as usize
    }

    #[test]
    fn mode_indexing_round_trips() {
        let ms = ModeSet::new(3, 2, 4).unwrap();
        assert_eq!(ms.count(), 5 * 3 * 4);
        for m in 0..ms.count() {
            let (kx, ky, kz) = ms.frequency(m);
            assert_eq!(ms.index(kx, ky, kz), Some(m));
        }
        assert_eq!(ms.index(3, 0, 0), None);
        assert_eq!(ms.index(0, 0, -1), None);
    }

    #[test]
    fn analyze_matches_full_transform_on_retained_modes() {
        let d = Dims::new(7, 6, 9);
        let ms = ModeSet::new(3, 3, 4).unwrap();
        let plan = SpectralPlan::new(d, ms).unwrap();
        let channels = 2;
        let f = random(channels * d.len(), 3);
        let mut spec = Spectrum::zeros(0, 0);
        plan.analyze(&f, channels, &mut spec, &mut Workspace::default());
        for c in 0..channels {
            let field: Vec<Complex64> =
                f[c * d.len()..(c + 1) * d.len()].iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let full = direct_dft3(&field, d, Direction::Forward);
            for m in 0..ms.count() {
                let (kx, ky, kz) = ms.frequency(m);
                let want = full[d.index(crate::Coord::new(bin(kx, d.nx), bin(ky, d.ny), kz as usize))];
                let got = Complex64::new(spec.re[m * channels + c], spec.im[m * channels + c]);
                assert!((got - want).norm() < 1e-10, "mode {m}: {got} vs {want}");
            }
        }
    }

    /// A field built from retained modes only is reproduced exactly.
    #[test]
    fn synthesis_inverts_band_limited_fields() {
        let d = Dims::new(9, 8, 7);
        let ms = ModeSet::new(3, 2, 3).unwrap();
        let plan = SpectralPlan::new(d, ms).unwrap();
        let f = random(d.len(), 5);
        // band-limit through the full transform
        let full = dft3_real(&f, d).unwrap();
        let mut kept = vec![Complex64::default(); d.len()];
        for idx in 0..d.len() {
            let c = d.coord(idx);
            let signed = |k: usize, n: usize| if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
            let (kx, ky, kz) = (signed(c.i, d.nx), signed(c.j, d.ny), signed(c.k, d.nz));
            if kx.abs() < 3 && ky.abs() < 2 && kz.abs() < 3 {
                kept[idx] = full[idx];
            }
        }
        let band: Vec<f64> = crate::fno::dft::dft3(&kept, d, Direction::Inverse)
            .unwrap()
            .iter()
            .map(|v| v.re)
            .collect();
        let mut ws = Workspace::default();
        let mut spec = Spectrum::zeros(0, 0);
        plan.analyze(&band, 1, &mut spec, &mut ws);
        let mut back = vec![0.0; d.len()];
        plan.synthesize_add(&spec, &plan.inverse_weights(), &mut back, &mut ws);
        for (a, b) in back.iter().zip(&band) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// With all modes kept and identity weights, the spectral convolution
    /// with per-mode scalar weights equals circular convolution by the
    /// kernel whose spectrum those weights are.
    #[test]
    fn matches_circular_convolution() {
        let d = Dims::new(5, 5, 5);
        let ms = ModeSet::new(3, 3, 3).unwrap();
        let plan = SpectralPlan::new(d, ms).unwrap();
        let v = random(d.len(), 7);
        let kernel = random(d.len(), 8);
        let khat = dft3_real(&kernel, d).unwrap();
        let mut r_re = vec![0.0; ms.count()];
        let mut r_im = vec![0.0; ms.count()];
        for m in 0..ms.count() {
            let (kx, ky, kz) = ms.frequency(m);
            let k = khat[d.index(crate::Coord::new(bin(kx, 5), bin(ky, 5), kz as usize))];
            r_re[m] = k.re;
            r_im[m] = k.im;
        }
        let got = spectral_conv(&plan, &v, 1, 1, &r_re, &r_im).unwrap();
        for x in 0..d.len() {
            let cx = d.coord(x);
            let mut want = 0.0;
            for y in 0..d.len() {
                let cy = d.coord(y);
                let s = crate::Coord::new((cx.i + 5 - cy.i) % 5, (cx.j + 5 - cy.j) % 5, (cx.k + 5 - cy.k) % 5);
                want += kernel[d.index(s)] * v[y];
            }
            assert!((got[x] - want).abs() < 1e-10, "{x}: {} vs {want}", got[x]);
        }
    }

    #[test]
    fn output_has_no_content_beyond_retained_modes() {
        let d = Dims::cube(11);
        let ms = ModeSet::new(3, 3, 3).unwrap();
        let plan = SpectralPlan::new(d, ms).unwrap();
        let m = ms.count();
        let r_re = random(m * 4, 11);
        let r_im = random(m * 4, 12);
        let out = spectral_conv(&plan, &random(2 * d.len(), 13), 2, 2, &r_re, &r_im).unwrap();
        for c in 0..2 {
            let spec = dft3_real(&out[c * d.len()..(c + 1) * d.len()], d).unwrap();
            for idx in 0..d.len() {
                let k = d.coord(idx);
                let signed = |k: usize| if k <= 5 { k as i64 } else { k as i64 - 11 };
                let inside = signed(k.i).abs() < 3 && signed(k.j).abs() < 3 && signed(k.k).abs() < 3;
                if !inside {
                    assert!(spec[idx].norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn undersized_grid_is_rejected() {
        let ms = ModeSet::new(6, 6, 6).unwrap();
        assert!(SpectralPlan::new(Dims::cube(11), ms).is_ok());
        assert!(SpectralPlan::new(Dims::new(11, 10, 11), ms).is_err());
        assert!(ModeSet::new(0, 1, 1).is_err());
    }
}
