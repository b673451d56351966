//! Scoring predictions and verifying gradients.

use std::path::{Path, PathBuf};

use serde::Serialize;
use terrain_core::cloud::read_native_cloud;
use terrain_core::dataset::read_sample;
use terrain_core::model::{gradient_check, ModelConfig};
use terrain_core::objective::{
    assemble_report, metric_accuracy, metric_cd_histogram, metric_cd_pt, Membership, SceneMetrics,
    DEFAULT_HISTOGRAM_EDGES,
};
use terrain_core::{Error, Result};

use crate::config::FileConfig;
use crate::{EvalArgs, GradcheckArgs, MembershipArg};

/// Gradients are accepted when every element's relative error against the
/// finite difference stays below this.
const GRADCHECK_THRESHOLD: f64 = 1e-3;

/// A scene that could not be scored, kept alongside the successful rows.
#[derive(Debug, Serialize)]
struct SceneError {
    scene_id: String,
    error: String,
}

/// The JSON report: scored scenes (sorted by id) plus per-scene errors.
#[derive(Debug, Serialize)]
struct ReportDoc {
    scenes: Vec<SceneMetrics>,
    errors: Vec<SceneError>,
}

pub fn eval(args: &EvalArgs, _file_cfg: &FileConfig) -> Result<i32> {
    if !(args.rho > 0.0) || !args.rho.is_finite() {
        return Err(Error::Config(format!("rho must be positive, got {}", args.rho)));
    }
    let mut scene_ids = Vec::new();
    for entry in std::fs::read_dir(&args.samples)? {
        let path = entry?.path();
        if path.join("manifest.json").is_file() {
            if let Some(name) = path.file_name().and_then(|s| s.to_str()) {
                scene_ids.push(name.to_string());
            }
        }
    }
    scene_ids.sort();
    if scene_ids.is_empty() {
        return Err(Error::Validation(format!(
            "no sample directories under {}",
            args.samples.display()
        )));
    }

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for id in &scene_ids {
        match eval_scene(id, &args.samples.join(id), &args.predictions, args) {
            Ok(row) => rows.push(row),
            Err(e) => {
                eprintln!("warning: {id}: {e}");
                errors.push(SceneError { scene_id: id.clone(), error: e.to_string() });
            }
        }
    }

    let report = assemble_report(rows)?;
    let doc = ReportDoc { scenes: report.scenes.clone(), errors };
    let mut json = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    json.push('\n');

    let mut text = report.render_text();
    if !doc.errors.is_empty() {
        text.push('\n');
        for e in &doc.errors {
            text.push_str(&format!("{}: error: {}\n", e.scene_id, e.error));
        }
    }

    let json_path = with_suffix(&args.report, "json");
    let text_path = with_suffix(&args.report, "txt");
    if let Some(parent) = json_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&json_path, &json)?;
    std::fs::write(&text_path, &text)?;
    print!("{text}");

    Ok(if doc.errors.is_empty() { 0 } else { 2 })
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(ext);
    prefix.with_file_name(name)
}

fn eval_scene(id: &str, sample_dir: &Path, predictions: &Path, args: &EvalArgs) -> Result<SceneMetrics> {
    let sample = read_sample(sample_dir)?;

    let flat = predictions.join(format!("{id}.tepc"));
    let nested = predictions.join(id).join("predictions.tepc");
    let pred_path = if flat.is_file() {
        flat
    } else if nested.is_file() {
        nested
    } else {
        return Err(Error::Format(format!(
            "no prediction for scene {id} (looked for {} and {})",
            flat.display(),
            nested.display()
        )));
    };

    let p = read_native_cloud(&pred_path)?.to_f64_points();
    let y = sample.target.to_f64_points();
    let rule = match args.membership {
        MembershipArg::Mask => Membership::Mask(&sample.masks),
        MembershipArg::Proximity => Membership::Proximity { gt: &y, rho: args.rho },
        MembershipArg::Either => Membership::Either { gt: &y, rho: args.rho, masks: &sample.masks },
    };
    let acc = metric_accuracy(&p, &rule)?;
    let cd_pt = metric_cd_pt(&p, &y)?;
    let histogram = metric_cd_histogram(&y, &p, &DEFAULT_HISTOGRAM_EDGES)?;
    Ok(SceneMetrics { scene_id: id.to_string(), acc, cd_pt, histogram, n_pred: p.len(), n_gt: y.len() })
}

pub fn gradcheck(args: &GradcheckArgs, file_cfg: &FileConfig) -> Result<i32> {
    // Without an explicit [model] section the check runs on the small
    // architecture: finite differences over the full-size model would take
    // hours for no extra assurance.
    let model = file_cfg.model_or(ModelConfig::tiny());
    let report = gradient_check(
        &model,
        &file_cfg.loss,
        args.seed,
        args.draws,
        args.corrupt.as_deref(),
    )?;

    for tensor in &report.per_tensor {
        println!("{:<20} max rel err {:.3e}", tensor.name, tensor.max_rel_err);
    }
    println!(
        "{} draws, {} kink elements excused, max rel err {:.3e} in {}",
        report.draws, report.kinks_skipped, report.max_rel_err, report.worst_tensor
    );

    if report.passes(GRADCHECK_THRESHOLD) {
        println!("gradient check passed (threshold {GRADCHECK_THRESHOLD:.0e})");
        Ok(0)
    } else {
        eprintln!(
            "error: gradient check failed: {} at {:.3e} exceeds {GRADCHECK_THRESHOLD:.0e}",
            report.worst_tensor, report.max_rel_err
        );
        Ok(3)
    }
}
