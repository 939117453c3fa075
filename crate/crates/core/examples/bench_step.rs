//! Times one batched forward + backward pass on 11^3 windows.
//! Usage: `bench_step WIDTH MODES BATCH [linear]`.

use std::time::Instant;

use thermoforge::fno::{Activation, FnoConfig, FnoModel, ModeSet};
use thermoforge::Dims;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let num = |i: usize| -> usize { args[i].parse().expect("numeric argument") };
    let (width, modes, batch) = (num(0), num(1), num(2));
    let activation = if args.get(3).map(String::as_str) == Some("linear") { Activation::Identity } else { Activation::Gelu };
    let cfg = FnoConfig { width, modes: ModeSet::new(modes, modes, modes).unwrap(), activation, ..FnoConfig::default() };
    let model = FnoModel::new(cfg.clone(), 0).unwrap();
    let grid = Dims::cube(11);
    let x: Vec<f64> = (0..batch * cfg.in_channels * grid.len()).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
    let upstream = vec![1.0; batch * grid.len()];

    let (mut fwd, mut total) = (f64::MAX, f64::MAX);
    for _ in 0..5 {
        let t = Instant::now();
        let cache = model.forward_cached(&x, batch, grid).unwrap();
        fwd = fwd.min(t.elapsed().as_secs_f64());
        model.backward(&cache, &upstream).unwrap();
        total = total.min(t.elapsed().as_secs_f64());
    }
    let per = |s: f64| 1e3 * s / batch as f64;
    println!(
        "{} parameters: forward {:.1} ms/sample, forward+backward {:.1} ms/sample (best of 5)",
        model.param_count(),
        per(fwd),
        per(total)
    );
}
