use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thermoforge::fno::{evaluate, load_checkpoint, save_checkpoint, train, FnoModel};
use thermoforge::geometry::{attach_substrate, generate_shape, ShapeFamily, VoxelPart};
use thermoforge::harness::{crossval, curves_csv, extract_options, RunConfig};
use thermoforge::metrics::aggregate;
use thermoforge::thermal::{simulate, MaterialModel, TemperatureHistory};
use thermoforge::toolpath::{plan_zigzag, ActivationSchedule};
use thermoforge::windowing::{extract_windows, load_dataset, save_dataset, WindowDataset};
use thermoforge::{Dims, Error, Result};

#[derive(Parser)]
#[command(name = "thermoforge", version, about = "Voxel DED thermal pipeline and FNO surrogate")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (JSON, "schema": 1).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Leave wall-clock fields out of reports so reruns are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write per-epoch metric curves as CSV to this path (a directory for crossval).
    #[arg(long, global = true)]
    emit_plots: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural voxel part.
    Generate {
        /// Shape family: carved, stacked or holed.
        #[arg(long)]
        family: ShapeFamily,
        /// Grid size as NX,NY,NZ.
        #[arg(long, value_delimiter = ',', default_values_t = [12, 12, 12])]
        dims: Vec<usize>,
        /// Element edge length in mm.
        #[arg(long, default_value_t = 2.0)]
        element_size: f64,
    },
    /// Plan the zigzag deposition toolpath for a part.
    Path {
        #[command(flatten)]
        domain: DomainArgs,
        /// Tool speed in mm/s.
        #[arg(long, default_value_t = 5.0)]
        speed: f64,
    },
    /// Run the thermal simulation along a toolpath.
    Simulate {
        #[command(flatten)]
        domain: DomainArgs,
        /// Toolpath file written by `path`.
        #[arg(long)]
        toolpath: PathBuf,
    },
    /// Cut heat-affected windows from a simulated history.
    Extract {
        #[command(flatten)]
        domain: DomainArgs,
        /// Toolpath file written by `path`.
        #[arg(long)]
        toolpath: PathBuf,
        /// Temperature history written by `simulate`.
        #[arg(long)]
        history: PathBuf,
        /// Id recorded in each window's provenance.
        #[arg(long, default_value_t = 0)]
        geometry_id: u32,
    },
    /// Train the FNO surrogate on one or more window datasets.
    Train {
        /// Window dataset files, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        data: Vec<PathBuf>,
    },
    /// Score a checkpoint on a window dataset.
    Evaluate {
        /// Checkpoint written by `train` (its `.meta.json` sidecar must sit next to it).
        #[arg(long)]
        model: PathBuf,
        /// Window dataset to score.
        #[arg(long)]
        data: PathBuf,
        /// Number of lowest-R^2 windows to list.
        #[arg(long, default_value_t = 5)]
        worst_k: usize,
    },
    /// Leave-one-geometry-out cross-validation over the configured geometries.
    Crossval,
}

#[derive(Args)]
struct DomainArgs {
    /// Voxel part file written by `generate`.
    #[arg(long)]
    domain: PathBuf,
    /// Substrate layers placed under the part.
    #[arg(long, default_value_t = 2)]
    substrate_layers: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("THERMOFORGE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}

fn require_out(g: &Global) -> Result<&Path> {
    g.out.as_deref().ok_or_else(|| Error::InvalidArgument("--out is required".into()))
}

fn load_config(g: &Global) -> Result<Option<RunConfig>> {
    let Some(path) = &g.config else { return Ok(None) };
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = g.seed {
        cfg.reseed(s);
    }
    cfg.validate()?;
    Ok(Some(cfg))
}

fn read_part(args: &DomainArgs) -> Result<(VoxelPart, thermoforge::geometry::BuildDomain)> {
    let part = VoxelPart::read_from(BufReader::new(File::open(&args.domain)?))?;
    let domain = attach_substrate(&part, args.substrate_layers)?;
    Ok((part, domain))
}

fn read_schedule(path: &Path, element_size: f64) -> Result<ActivationSchedule> {
    ActivationSchedule::read_from(BufReader::new(File::open(path)?), element_size)
}

fn write_with<F: FnOnce(&mut BufWriter<File>) -> Result<()>>(path: &Path, f: F) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let cfg = load_config(g)?;
    match cli.command {
        Command::Generate { family, dims, element_size } => {
            let seed = g.seed.unwrap_or(0);
            if dims.len() != 3 {
                return Err(Error::InvalidArgument(format!("--dims takes NX,NY,NZ, got {} values", dims.len())));
            }
            let shape = generate_shape(seed, family, Dims::new(dims[0], dims[1], dims[2]))?;
            let part = VoxelPart::new(shape.dims(), shape.occupancy().to_vec(), element_size)?;
            write_with(require_out(g)?, |w| part.write_to(w))?;
            println!("{} voxels", part.voxel_count());
        }
        Command::Path { domain, speed } => {
            let (_, dom) = read_part(&domain)?;
            let sched = plan_zigzag(&dom, speed)?;
            write_with(require_out(g)?, |w| sched.write_to(w))?;
            let st = sched.stats();
            println!("{} events, dt {} s", sched.len(), sched.dt);
            log::info!("{st:?}");
        }
        Command::Simulate { domain, toolpath } => {
            let (_, mut dom) = read_part(&domain)?;
            let material = match &cfg {
                Some(c) => {
                    dom.ambient_c = c.process.ambient_c;
                    dom.dirichlet_c = c.process.ambient_c;
                    c.material_model()?
                }
                None => MaterialModel::default(),
            };
            let sched = read_schedule(&toolpath, dom.element_size_mm())?;
            let hist = simulate(&dom, &sched, &material)?;
            write_with(require_out(g)?, |w| hist.write_to(w))?;
            println!("{} snapshots, peak {:.1} C", hist.snapshots().len(), hist.max_temperature());
        }
        Command::Extract { domain, toolpath, history, geometry_id } => {
            let (_, dom) = read_part(&domain)?;
            let sched = read_schedule(&toolpath, dom.element_size_mm())?;
            let hist = TemperatureHistory::read_from(BufReader::new(File::open(&history)?))?;
            let base = cfg.unwrap_or_else(|| RunConfig::with_geometries(Vec::new()));
            let mut opts = extract_options(&base, geometry_id);
            if let Some(s) = g.seed {
                opts.sample_seed = s;
            }
            let ds = extract_windows(&hist, &dom, &sched, geometry_id, &opts)?;
            save_dataset(&ds, require_out(g)?)?;
            println!("{} windows", ds.len());
        }
        Command::Train { data } => {
            let cfg = cfg.unwrap_or_else(|| RunConfig::with_geometries(Vec::new()));
            let parts = data.iter().map(|p| load_dataset(p)).collect::<Result<Vec<_>>>()?;
            let ds = WindowDataset::merge(parts)?;
            let model = FnoModel::new(cfg.model.clone(), cfg.seed)?;
            let out = train(model, &ds, &cfg.training)?;
            let path = require_out(g)?;
            save_checkpoint(path, &out.model, out.normalization, ds.edge, Some(cfg.training.clone()))?;
            std::fs::write(path.with_extension("history.json"), serde_json::to_string_pretty(&out.history)?)?;
            if let Some(csv) = &g.emit_plots {
                std::fs::write(csv, curves_csv(&out.history))?;
            }
            if let Some(last) = out.history.last() {
                println!("test nl2 {:.4}, test r2 {:?}", last.test.nl2, last.test.r2);
            }
        }
        Command::Evaluate { model, data, worst_k } => {
            let (m, meta) = load_checkpoint(&model)?;
            let ds = load_dataset(&data)?;
            let ids: Vec<usize> = (0..ds.len()).collect();
            let scores = evaluate(&m, &ds, &ids, &meta.normalization, 64)?;
            let report = aggregate(&scores, worst_k)?;
            let text = serde_json::to_string_pretty(&report)?;
            match &g.out {
                Some(p) => std::fs::write(p, text + "\n")?,
                None => println!("{text}"),
            }
        }
        Command::Crossval => {
            let cfg = cfg.ok_or_else(|| Error::Config("crossval needs --config".into()))?;
            let report = crossval(&cfg, g.deterministic)?;
            std::fs::write(require_out(g)?, report.to_json()?)?;
            if let Some(dir) = &g.emit_plots {
                std::fs::create_dir_all(dir)?;
                for f in &report.folds {
                    std::fs::write(dir.join(format!("fold_{}.csv", f.fold)), curves_csv(&f.history))?;
                }
            }
            println!(
                "{} folds, {} failed, mean validation r2 {:?}",
                report.folds.len(),
                report.failed_folds.len(),
                report.mean_validation_r2
            );
        }
    }
    Ok(())
}
