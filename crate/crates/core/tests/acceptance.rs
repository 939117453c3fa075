//! Acceptance checks, one PASS/FAIL line per criterion. Runs as a plain
//! binary (no libtest harness) so every line is printed on every run; the
//! process exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use thermoforge::fno::{
    dft3, encode_input, spectral_conv, train, Activation, Direction, FnoConfig, FnoModel, ModeSet, SpectralPlan,
    TrainConfig,
};
use thermoforge::geometry::{attach_substrate, generate_shape, BuildDomain, ShapeFamily, VoxelPart};
use thermoforge::harness::{build_datasets, crossval, GeometrySpec, RunConfig};
use thermoforge::metrics::{nl2, nrmse, r2};
use thermoforge::thermal::{MaterialModel, PiecewiseLinear, ThermalSolver, ThermalState};
use thermoforge::toolpath::plan_zigzag;
use thermoforge::windowing::{characteristic_radius, window_count, WindowDataset, INPUT_CHANNELS};
use thermoforge::Dims;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, lumped_cooling),
        (2, adiabatic_conservation),
        (3, spectral_oracle),
        (4, gradient_check),
        (5, metric_suite),
        (6, desk_training),
        (7, window_count_range),
        (8, super_resolution),
        (9, crossval_harness),
        (10, dt_derivation),
    ];
    let only: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|c| c.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (id, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {id}: PASS ({secs:.1}s) {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id}: FAIL ({secs:.1}s) {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn all_active(domain: &BuildDomain, temperature: Vec<f64>) -> ThermalState {
    let n = domain.dims().len();
    let active: Vec<bool> = (0..n).map(|i| domain.is_occupied(i)).collect();
    ThermalState { temperature, solidified: active.clone(), active, time: 0.0 }
}

/// One 2 mm cube, convection only: `T(t) = T_inf + (T0 - T_inf) exp(-h A t / (rho c V))`.
fn lumped_cooling() -> Outcome {
    let start = Instant::now();
    let model = MaterialModel { emissivity: 0.0, h_inf: 15.0, ..MaterialModel::default() };
    let part = VoxelPart::new(Dims::cube(1), vec![true], 2.0).unwrap();
    let dom = BuildDomain::without_substrate(&part);
    let mut st = all_active(&dom, vec![1000.0]);
    ThermalSolver::new(&dom, &model).step(&mut st, 5.0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let dx = 0.002_f64;
    let tau = 7850.0 * 600.0 * dx.powi(3) / (15.0 * 6.0 * dx * dx);
    let exact = 25.0 + 975.0 * (-5.0 / tau).exp();
    let rel = (st.temperature[0] - exact).abs() / exact;
    check(
        rel < 0.01 && secs < 1.0,
        format!("T(5s) = {:.6} C, exact {exact:.6} C, relative error {rel:.2e}, runtime {secs:.3}s", st.temperature[0]),
    )
}

/// Insulated part with temperature-dependent conductivity and a random
/// initial field.
fn adiabatic_conservation() -> Outcome {
    let model = MaterialModel {
        emissivity: 0.0,
        h_inf: 0.0,
        conductivity: PiecewiseLinear::new(vec![(0.0, 50.0), (1500.0, 30.0)]).unwrap(),
        ..MaterialModel::default()
    };
    let part = generate_shape(7, ShapeFamily::Holed, Dims::new(6, 6, 4)).unwrap();
    let part = VoxelPart::new(part.dims(), part.occupancy().to_vec(), 2.0).unwrap();
    let dom = BuildDomain::without_substrate(&part);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t0: Vec<f64> = (0..dom.dims().len()).map(|_| rng.gen_range(25.0..1500.0)).collect();
    let mut st = all_active(&dom, t0);
    let mut solver = ThermalSolver::new(&dom, &model);
    let e0 = st.enthalpy(&dom, &model);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        solver.step(&mut st, 0.4).unwrap();
        worst = worst.max(((st.enthalpy(&dom, &model) - e0) / e0).abs());
    }
    check(
        worst < 1e-6,
        format!("{} voxels, 1000 steps of 0.4 s, max relative enthalpy drift {worst:.2e}", part.voxel_count()),
    )
}

/// Single DFT coefficient by direct summation.
fn direct_mode(field: &[f64], d: Dims, k: [i64; 3]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for idx in 0..d.len() {
        let c = d.coord(idx);
        let ph = -2.0
            * PI
            * (k[0] as f64 * c.i as f64 / d.nx as f64
                + k[1] as f64 * c.j as f64 / d.ny as f64
                + k[2] as f64 * c.k as f64 / d.nz as f64);
        acc += field[idx] * Complex64::from_polar(1.0, ph);
    }
    acc
}

fn signed(k: usize, n: usize) -> i64 {
    if 2 * k > n {
        k as i64 - n as i64
    } else {
        k as i64
    }
}

/// Full-spectrum reference: every retained `k` with `kz >= 0` is mixed by its
/// own `R`, the mirrored `kz < 0` half gets the conjugate, and the real part
/// of the inverse transform is the output.
fn brute_force_conv(v: &[f64], d: Dims, ms: ModeSet, ci: usize, co: usize, rr: &[f64], ri: &[f64]) -> Vec<f64> {
    let n = d.len();
    let spectra: Vec<Vec<Complex64>> = (0..ci)
        .map(|c| {
            let f = &v[c * n..(c + 1) * n];
            (0..n)
                .map(|idx| {
                    let p = d.coord(idx);
                    direct_mode(f, d, [signed(p.i, d.nx), signed(p.j, d.ny), signed(p.k, d.nz)])
                })
                .collect()
        })
        .collect();
    let mut out = vec![0.0; co * n];
    for o in 0..co {
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for idx in 0..n {
            let p = d.coord(idx);
            let k = [signed(p.i, d.nx), signed(p.j, d.ny), signed(p.k, d.nz)];
            let (src, conj) = if k[2] >= 0 { (k, false) } else { ([-k[0], -k[1], -k[2]], true) };
            let Some(m) = ms.index(src[0], src[1], src[2]) else { continue };
            let pidx = d.index(thermoforge::Coord::new(
                src[0].rem_euclid(d.nx as i64) as usize,
                src[1].rem_euclid(d.ny as i64) as usize,
                src[2].rem_euclid(d.nz as i64) as usize,
            ));
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..ci {
                let r = Complex64::new(rr[(m * co + o) * ci + c], ri[(m * co + o) * ci + c]);
                acc += r * spectra[c][pidx];
            }
            y[idx] = if conj { acc.conj() } else { acc };
        }
        for idx in 0..n {
            let x = d.coord(idx);
            let mut s = Complex64::new(0.0, 0.0);
            for (kidx, yk) in y.iter().enumerate() {
                if yk.norm_sqr() == 0.0 {
                    continue;
                }
                let p = d.coord(kidx);
                let ph = 2.0
                    * PI
                    * (p.i as f64 * x.i as f64 / d.nx as f64
                        + p.j as f64 * x.j as f64 / d.ny as f64
                        + p.k as f64 * x.k as f64 / d.nz as f64);
                s += yk * Complex64::from_polar(1.0, ph);
            }
            out[o * n + idx] = s.re / n as f64;
        }
    }
    out
}

fn spectral_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases = [
        (Dims::cube(5), ModeSet::new(2, 3, 2).unwrap()),
        (Dims::cube(6), ModeSet::new(3, 2, 3).unwrap()),
        (Dims::cube(7), ModeSet::new(4, 3, 2).unwrap()),
        (Dims::new(5, 6, 7), ModeSet::new(3, 3, 4).unwrap()),
    ];
    let (ci, co) = (3, 2);
    let mut worst_conv: f64 = 0.0;
    for (d, ms) in cases {
        let plan = SpectralPlan::new(d, ms).unwrap();
        let v = uniform(&mut rng, ci * d.len(), 1.0);
        let rr = uniform(&mut rng, ms.count() * ci * co, 1.0);
        let ri = uniform(&mut rng, ms.count() * ci * co, 1.0);
        let got = spectral_conv(&plan, &v, ci, co, &rr, &ri).unwrap();
        let want = brute_force_conv(&v, d, ms, ci, co, &rr, &ri);
        let scale = want.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        let err = got.iter().zip(&want).fold(0.0_f64, |a, (g, w)| a.max((g - w).abs()));
        worst_conv = worst_conv.max(err / scale);
    }
    let mut worst_trip: f64 = 0.0;
    let mut worst_parseval: f64 = 0.0;
    for d in [Dims::cube(5), Dims::cube(6), Dims::cube(7), Dims::new(5, 7, 6)] {
        let f: Vec<Complex64> =
            (0..d.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let fwd = dft3(&f, d, Direction::Forward).unwrap();
        let back = dft3(&fwd, d, Direction::Inverse).unwrap();
        let norm = f.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let trip = f.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        worst_trip = worst_trip.max(trip / norm);
        let e_x: f64 = f.iter().map(|z| z.norm_sqr()).sum();
        let e_k: f64 = fwd.iter().map(|z| z.norm_sqr()).sum::<f64>() / d.len() as f64;
        worst_parseval = worst_parseval.max((e_x - e_k).abs() / e_x);
    }
    check(
        worst_conv < 1e-10 && worst_trip < 1e-10 && worst_parseval < 1e-10,
        format!(
            "spectral_conv vs direct summation {worst_conv:.1e}, dft3 round trip {worst_trip:.1e}, Parseval {worst_parseval:.1e}"
        ),
    )
}

fn gradient_check() -> Outcome {
    let cfg = FnoConfig {
        in_channels: INPUT_CHANNELS,
        width: 4,
        out_channels: 1,
        depth: 2,
        modes: ModeSet::new(2, 2, 2).unwrap(),
        proj_hidden: 6,
        activation: Activation::Gelu,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let base = FnoModel::new(cfg.clone(), 5).unwrap();
    let params = uniform(&mut rng, base.param_count(), 0.6);
    let model = FnoModel::from_params(cfg.clone(), params).unwrap();
    let d = Dims::cube(5);
    let batch = 2;
    let x = uniform(&mut rng, batch * INPUT_CHANNELS * d.len(), 1.0);
    let up = uniform(&mut rng, batch * d.len(), 1.0);
    let loss = |p: &[f64]| -> f64 {
        let m = FnoModel::from_params(cfg.clone(), p.to_vec()).unwrap();
        m.predict(&x, batch, d).unwrap().iter().zip(&up).map(|(o, g)| o * g).sum()
    };
    let cache = model.forward_cached(&x, batch, d).unwrap();
    let grad = model.backward(&cache, &up).unwrap();
    let groups = model.layout.groups();
    let per_group = 120usize.div_ceil(groups.len());
    let (mut checked, mut worst) = (0, 0.0_f64);
    for (_, r) in &groups {
        for _ in 0..per_group {
            let i = rng.gen_range(r.clone());
            let h = 1e-5;
            let mut p = model.params.clone();
            p[i] += h;
            let lp = loss(&p);
            p[i] -= 2.0 * h;
            let lm = loss(&p);
            let fd = (lp - lm) / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6));
            checked += 1;
        }
    }
    check(
        checked >= 100 && worst < 1e-4,
        format!("{checked} coordinates over {} parameter blocks, max relative error {worst:.2e}", groups.len()),
    )
}

fn metric_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 1331;
    let truth: Vec<f64> = (0..n).map(|_| rng.gen_range(25.0..1750.0)).collect();
    let pred: Vec<f64> = truth.iter().map(|t| t + rng.gen_range(-40.0..40.0)).collect();
    let mask: Vec<bool> = (0..n).map(|i| i % 7 != 0).collect();
    let scored: Vec<f64> = truth.iter().zip(&mask).filter(|(_, m)| **m).map(|(t, _)| *t).collect();
    let mean = scored.iter().sum::<f64>() / scored.len() as f64;
    let baseline = vec![mean; n];
    let r2v = |p: &[f64], t: &[f64]| r2(p, t, &mask).unwrap().value().unwrap();

    let mut errs = Vec::new();
    errs.push(("r2 exact", (r2v(&truth, &truth) - 1.0).abs()));
    errs.push(("r2 mean baseline", r2v(&baseline, &truth).abs()));
    let base = r2v(&pred, &truth);
    let shift = |v: &[f64], c: f64| v.iter().map(|x| x + c).collect::<Vec<_>>();
    let scale = |v: &[f64], s: f64| v.iter().map(|x| x * s).collect::<Vec<_>>();
    let r2_shift = r2v(&shift(&pred, 321.5), &shift(&truth, 321.5));
    errs.push(("r2 shift", (r2_shift - base).abs()));
    let r2_scale = r2v(&scale(&pred, 3.7), &scale(&truth, 3.7));
    errs.push(("r2 scale", (r2_scale - base).abs()));
    let nl2_base = nl2(&pred, &truth, &mask).unwrap();
    let nl2_scaled = nl2(&scale(&pred, 3.7), &scale(&truth, 3.7), &mask).unwrap();
    errs.push(("nl2 scale", (nl2_scaled - nl2_base).abs() / nl2_base));
    let nrmse_base = nrmse(&pred, &truth, &mask).unwrap();
    let nrmse_scaled = nrmse(&scale(&pred, 0.25), &scale(&truth, 0.25), &mask).unwrap();
    errs.push(("nrmse scale", (nrmse_scaled - nrmse_base).abs() / nrmse_base));
    let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let detail = errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    check(worst <= 1e-12, detail)
}

/// Two 12^3 geometries with the shipped training defaults.
fn desk_config() -> RunConfig {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json");
    RunConfig::load(&path).unwrap()
}

fn desk_training() -> Outcome {
    let cfg = desk_config();
    let t = cfg.training.clone();
    if t.epochs != 50 || t.adam.lr != 1e-3 || t.adam.weight_decay != 1e-4 || t.batch_size != 64 {
        return Err(format!("training defaults drifted: {t:?}"));
    }
    let start = Instant::now();
    let ds = WindowDataset::merge(build_datasets(&cfg).unwrap()).unwrap();
    let model = FnoModel::new(cfg.model.clone(), cfg.seed).unwrap();
    let out = train(model, &ds, &cfg.training).unwrap();
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let last = out.history.last().unwrap();
    let r2 = last.test.r2.unwrap_or(f64::NEG_INFINITY);
    // smoothed trend: means over consecutive blocks of ten epochs
    let blocks: Vec<f64> =
        out.history.chunks(10).map(|c| c.iter().map(|r| r.test.nl2).sum::<f64>() / c.len() as f64).collect();
    let monotone = blocks.windows(2).all(|w| w[1] < w[0]);
    let trend = blocks.iter().map(|b| format!("{b:.2}")).collect::<Vec<_>>().join(" > ");
    check(
        ds.len() >= 2000 && r2 >= 0.95 && monotone,
        format!(
            "{} windows, width {} modes {:?}, test R2 {r2:.4}, test NL2 by 10-epoch blocks {trend}, {minutes:.1} min",
            ds.len(),
            cfg.model.width,
            cfg.model.modes.as_array()
        ),
    )
}

fn window_count_range() -> Outcome {
    let d = Dims::cube(20);
    let part = VoxelPart::new(d, vec![true; d.len()], 2.0).unwrap();
    let dom = attach_substrate(&part, 2).unwrap();
    let sched = plan_zigzag(&dom, 5.0).unwrap();
    let windows = window_count(sched.events.len(), 10);
    check(
        (9400..=10100).contains(&windows),
        format!("{} activation events give {windows} windows, required range [9400, 10100]", sched.events.len()),
    )
}

/// Band-limited interpolation of an odd-sized field onto a larger grid by
/// zero-padding its spectrum.
fn upsample(field: &[f64], from: usize, to: usize) -> Vec<f64> {
    let (a, b) = (Dims::cube(from), Dims::cube(to));
    let c: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let spec = dft3(&c, a, Direction::Forward).unwrap();
    let mut big = vec![Complex64::new(0.0, 0.0); b.len()];
    let ratio = b.len() as f64 / a.len() as f64;
    for idx in 0..a.len() {
        let p = a.coord(idx);
        let k = [signed(p.i, from), signed(p.j, from), signed(p.k, from)];
        let q = k.map(|v| v.rem_euclid(to as i64) as usize);
        big[b.index(thermoforge::Coord::new(q[0], q[1], q[2]))] = spec[idx] * ratio;
    }
    dft3(&big, b, Direction::Inverse).unwrap().iter().map(|z| z.re).collect()
}

fn super_resolution() -> Outcome {
    let mut cfg = RunConfig::with_geometries(vec![GeometrySpec {
        seed: 5,
        family: ShapeFamily::Stacked,
        dims: [8, 8, 8],
    }]);
    cfg.windows.max_per_geometry = Some(128);
    cfg.training = TrainConfig { epochs: 3, batch_size: 16, ..TrainConfig::default() };
    let ds = WindowDataset::merge(build_datasets(&cfg).unwrap()).unwrap();
    let (edge, fine) = (ds.edge, 21);
    let small = |activation| FnoConfig { width: 8, modes: ModeSet::new(3, 3, 3).unwrap(), activation, ..FnoConfig::default() };

    let mut input = vec![0.0; INPUT_CHANNELS * edge.pow(3)];
    encode_input(&ds.samples[ds.len() / 2], &ds.normalization, &mut input);
    let n11 = edge.pow(3);
    let input21: Vec<f64> =
        (0..INPUT_CHANNELS).flat_map(|c| upsample(&input[c * n11..(c + 1) * n11], edge, fine)).collect();

    let gelu = train(FnoModel::new(small(Activation::Gelu), 1).unwrap(), &ds, &cfg.training).unwrap().model;
    let out_gelu = gelu.forward(&input21, Dims::cube(fine)).unwrap();
    let finite = out_gelu.len() == fine.pow(3) && out_gelu.iter().all(|v| v.is_finite());

    let linear = train(FnoModel::new(small(Activation::Identity), 1).unwrap(), &ds, &cfg.training).unwrap().model;
    let coarse = linear.forward(&input, Dims::cube(edge)).unwrap();
    let dense = linear.forward(&input21, Dims::cube(fine)).unwrap();
    let ms = linear.config.modes;
    let (mut worst, mut scale) = (0.0_f64, 0.0_f64);
    for m in 0..ms.count() {
        let (kx, ky, kz) = ms.frequency(m);
        let a = direct_mode(&coarse, Dims::cube(edge), [kx, ky, kz]) / n11 as f64;
        let b = direct_mode(&dense, Dims::cube(fine), [kx, ky, kz]) / fine.pow(3) as f64;
        worst = worst.max((a - b).norm());
        scale = scale.max(a.norm());
    }
    let rel = worst / scale;
    check(
        finite && rel < 1e-6,
        format!(
            "{edge}^3-trained models on {fine}^3 input: GELU outputs finite = {finite}, linear model retained-mode mismatch {rel:.1e} over {} modes",
            ms.count()
        ),
    )
}

fn crossval_harness() -> Outcome {
    let mut cfg = RunConfig::with_geometries(vec![
        GeometrySpec { seed: 1, family: ShapeFamily::Carved, dims: [7, 7, 6] },
        GeometrySpec { seed: 2, family: ShapeFamily::Stacked, dims: [7, 7, 6] },
        GeometrySpec { seed: 3, family: ShapeFamily::Holed, dims: [7, 7, 6] },
    ]);
    cfg.windows.max_per_geometry = Some(96);
    cfg.model = FnoConfig { width: 6, depth: 2, modes: ModeSet::new(3, 3, 3).unwrap(), proj_hidden: 12, ..FnoConfig::default() };
    cfg.training = TrainConfig { epochs: 3, batch_size: 16, ..TrainConfig::default() };
    cfg.reseed(42);
    let a = crossval(&cfg, true).unwrap();
    let b = crossval(&cfg, true).unwrap();
    let (ja, jb) = (a.to_json().unwrap(), b.to_json().unwrap());
    let folds_ok = a.folds.len() == 3 && a.failed_folds.is_empty() && a.folds.iter().all(|f| f.ok);
    let leaked: usize = a.folds.iter().filter_map(|f| f.audit.as_ref()).map(|x| x.leaked + x.foreign_in_validation).sum();
    let audited = a.folds.iter().all(|f| f.audit.as_ref().is_some_and(|x| x.clean() && x.validation_windows_checked > 0));
    check(
        folds_ok && audited && leaked == 0 && ja == jb,
        format!(
            "{} folds, leaked windows {leaked}, reports byte-identical = {} ({} bytes)",
            a.folds.len(),
            ja == jb,
            ja.len()
        ),
    )
}

fn dt_derivation() -> Outcome {
    let d = Dims::new(4, 3, 2);
    let part = VoxelPart::new(d, vec![true; d.len()], 2.0).unwrap();
    let sched = plan_zigzag(&attach_substrate(&part, 2).unwrap(), 5.0).unwrap();
    let rc = characteristic_radius(12.0, 0.4).unwrap();
    let span = 10.0 * rc / 2.0;
    check(
        sched.dt == 0.4 && (rc - 4.8_f64.sqrt()).abs() <= 1e-15 && span.round() == 11.0,
        format!("dt = {} s, r_c = {rc} mm (sqrt 4.8 = {}), 10 r_c = {span:.3} elements", sched.dt, 4.8_f64.sqrt()),
    )
}
