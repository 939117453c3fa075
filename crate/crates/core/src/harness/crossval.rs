//! Leave-one-geometry-out cross-validation.
//!
//! Fold `f` holds out geometry `f`: the windows of every other geometry are
//! pooled, split by seeded shuffle and trained on, and the model is scored on
//! the held-out geometry's full window set. A failing fold is recorded in the
//! report and the remaining folds still run.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fno::{evaluate, train, EpochRecord, FnoModel};
use crate::metrics::aggregate;
use crate::windowing::WindowDataset;

use super::config::RunConfig;
use super::pipeline::build_datasets;

pub const REPORT_SCHEMA: u32 = 1;

/// Provenance check that no held-out window reached training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub training_windows_checked: usize,
    pub validation_windows_checked: usize,
    /// Training windows whose geometry id is the held-out one.
    pub leaked: usize,
    /// Validation windows from some other geometry.
    pub foreign_in_validation: usize,
}

impl LeakageAudit {
    pub fn clean(&self) -> bool {
        self.leaked == 0 && self.foreign_in_validation == 0
    }
}

pub fn audit_fold(pool: &WindowDataset, validation: &WindowDataset, held_out: u32) -> LeakageAudit {
    LeakageAudit {
        training_windows_checked: pool.samples.len(),
        validation_windows_checked: validation.samples.len(),
        leaked: pool.samples.iter().filter(|s| s.geometry_id == held_out).count()
            + pool.provenance.iter().filter(|p| p.geometry_id == held_out).count(),
        foreign_in_validation: validation.samples.iter().filter(|s| s.geometry_id != held_out).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub windows: usize,
    pub mse: f64,
    pub nrmse: f64,
    pub nl2: f64,
    /// Mean over windows with a defined R^2; `None` if there are none.
    pub r2: Option<f64>,
    pub degenerate_windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstWindowRow {
    pub rank: usize,
    pub geometry_id: u32,
    pub event: u32,
    pub anchor: [u16; 3],
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub held_out_geometry: u32,
    pub training_geometries: Vec<u32>,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub train_windows: usize,
    pub test_windows: usize,
    pub audit: Option<LeakageAudit>,
    pub validation: Option<ValidationMetrics>,
    pub worst_windows: Vec<WorstWindowRow>,
    pub history: Vec<EpochRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub schema: u32,
    /// SHA-256 of the canonical config JSON.
    pub config_sha256: String,
    pub folds: Vec<FoldReport>,
    pub failed_folds: Vec<usize>,
    /// Mean validation R^2 over successful folds.
    pub mean_validation_r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

impl CrossvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    Ok(format!("{:x}", Sha256::digest(cfg.to_json()?.as_bytes())))
}

/// Pools every dataset except `held_out`.
pub fn training_pool(datasets: &[WindowDataset], held_out: usize) -> Result<WindowDataset> {
    let parts: Vec<WindowDataset> = datasets
        .iter()
        .enumerate()
        .filter(|(g, _)| *g != held_out)
        .map(|(_, d)| d.clone())
        .collect();
    WindowDataset::merge(parts)
}

fn run_fold(cfg: &RunConfig, datasets: &[WindowDataset], fold: usize, timed: bool) -> FoldReport {
    let start = Instant::now();
    let held_out = fold as u32;
    let training_geometries: Vec<u32> = (0..datasets.len() as u32).filter(|&g| g != held_out).collect();
    let mut report = FoldReport {
        fold,
        held_out_geometry: held_out,
        training_geometries,
        ok: false,
        error: None,
        train_windows: 0,
        test_windows: 0,
        audit: None,
        validation: None,
        worst_windows: Vec::new(),
        history: Vec::new(),
        seconds: None,
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| fold_body(cfg, datasets, fold, &mut report)));
    match outcome {
        Ok(Ok(())) => report.ok = true,
        Ok(Err(e)) => report.error = Some(format!("{}: {e}", e.kind())),
        Err(_) => report.error = Some("panic: fold aborted".into()),
    }
    if !report.ok {
        log::warn!("fold {fold} failed: {}", report.error.as_deref().unwrap_or(""));
    }
    if timed {
        report.seconds = Some(start.elapsed().as_secs_f64());
    }
    report
}

fn fold_body(cfg: &RunConfig, datasets: &[WindowDataset], fold: usize, report: &mut FoldReport) -> Result<()> {
    let held_out = fold as u32;
    let pool = training_pool(datasets, fold)?;
    let validation = &datasets[fold];
    let audit = audit_fold(&pool, validation, held_out);
    let clean = audit.clean();
    report.audit = Some(audit);
    if !clean {
        return Err(Error::Training(format!("fold {fold} training pool contains held-out windows")));
    }
    let model = FnoModel::new(cfg.model.clone(), cfg.seed)?;
    let out = train(model, &pool, &cfg.training)?;
    report.train_windows = out.split.train.len();
    report.test_windows = out.split.test.len();
    report.history = out.history;
    let ids: Vec<usize> = (0..validation.len()).collect();
    let scores = evaluate(&out.model, validation, &ids, &out.normalization, cfg.training.batch_size)?;
    let agg = aggregate(&scores, cfg.worst_k)?;
    report.validation = Some(ValidationMetrics {
        windows: agg.windows,
        mse: agg.mse,
        nrmse: agg.nrmse,
        nl2: agg.nl2,
        r2: agg.r2.is_finite().then_some(agg.r2),
        degenerate_windows: agg.degenerate,
    });
    report.worst_windows = agg
        .worst
        .iter()
        .enumerate()
        .map(|(rank, w)| {
            let s = &validation.samples[w.window_id];
            WorstWindowRow { rank: rank + 1, geometry_id: s.geometry_id, event: s.event, anchor: s.anchor, r2: w.r2 }
        })
        .collect();
    Ok(())
}

/// Cross-validation over pre-built per-geometry datasets (index = geometry id).
pub fn crossval_datasets(cfg: &RunConfig, datasets: &[WindowDataset], deterministic: bool) -> Result<CrossvalReport> {
    if datasets.len() < 2 {
        return Err(Error::InvalidArgument("cross-validation needs at least two geometries".into()));
    }
    for (g, ds) in datasets.iter().enumerate() {
        if ds.samples.iter().any(|s| s.geometry_id != g as u32) {
            return Err(Error::InvalidArgument(format!("dataset {g} holds windows of another geometry")));
        }
    }
    let start = Instant::now();
    let folds: Vec<FoldReport> =
        (0..datasets.len()).into_par_iter().map(|f| run_fold(cfg, datasets, f, !deterministic)).collect();
    let failed_folds: Vec<usize> = folds.iter().filter(|f| !f.ok).map(|f| f.fold).collect();
    let r2s: Vec<f64> = folds.iter().filter_map(|f| f.validation.as_ref().and_then(|v| v.r2)).collect();
    Ok(CrossvalReport {
        schema: REPORT_SCHEMA,
        config_sha256: config_hash(cfg)?,
        folds,
        failed_folds,
        mean_validation_r2: (!r2s.is_empty()).then(|| r2s.iter().sum::<f64>() / r2s.len() as f64),
        seconds: (!deterministic).then(|| start.elapsed().as_secs_f64()),
    })
}

/// Builds every geometry's windows, then cross-validates.
pub fn crossval(cfg: &RunConfig, deterministic: bool) -> Result<CrossvalReport> {
    cfg.validate()?;
    if cfg.geometries.len() < 2 {
        return Err(Error::Config("cross-validation needs at least two geometries".into()));
    }
    let datasets = build_datasets(cfg)?;
    crossval_datasets(cfg, &datasets, deterministic)
}

/// Per-epoch curves as CSV: `epoch,train_mse,test_mse,train_nl2,test_nl2,train_r2,test_r2`.
pub fn curves_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_mse,test_mse,train_nl2,test_nl2,train_r2,test_r2\n");
    let r2 = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in history {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch,
            r.train.mse,
            r.test.mse,
            r.train.nl2,
            r.test.nl2,
            r2(r.train.r2),
            r2(r.test.r2)
        ));
    }
    s
}
