//! Trains one model on the two-geometry desk dataset and prints the epoch
//! history. Usage: `train_probe WIDTH MODES EPOCHS WINDOWS_PER_GEOMETRY`.

use std::time::Instant;

use thermoforge::fno::{train, FnoConfig, ModeSet, FnoModel};
use thermoforge::geometry::ShapeFamily;
use thermoforge::harness::{build_datasets, GeometrySpec, RunConfig};
use thermoforge::windowing::WindowDataset;

fn main() {
    let a: Vec<usize> = std::env::args().skip(1).map(|s| s.parse().expect("numeric argument")).collect();
    let (width, modes, epochs, per_geom) = (a[0], a[1], a[2], a[3]);
    let mut cfg = RunConfig::with_geometries(vec![
        GeometrySpec { seed: 100, family: ShapeFamily::Carved, dims: [12, 12, 12] },
        GeometrySpec { seed: 101, family: ShapeFamily::Stacked, dims: [12, 12, 12] },
    ]);
    cfg.windows.max_per_geometry = Some(per_geom);
    cfg.model = FnoConfig { width, modes: ModeSet { mx: modes, my: modes, mz: modes }, ..FnoConfig::default() };
    cfg.training.epochs = epochs;
    let t = Instant::now();
    let ds = WindowDataset::merge(build_datasets(&cfg).unwrap()).unwrap();
    eprintln!("{} windows in {:.1}s", ds.len(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    let out = train(FnoModel::new(cfg.model.clone(), cfg.seed).unwrap(), &ds, &cfg.training).unwrap();
    for r in &out.history {
        println!(
            "{} loss {:.3} train r2 {:.4?} test nl2 {:.3} test r2 {:.4?} mse {:.1}",
            r.epoch, r.loss, r.train.r2, r.test.nl2, r.test.r2, r.test.mse
        );
    }
    println!("train time {:.0}s", t.elapsed().as_secs_f64());
}
