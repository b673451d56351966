//! Training and prediction commands.

use std::path::Path;

use serde::Serialize;
use terrain_core::cloud::{read_native_cloud, write_native_cloud, write_ply, PlySection, PointCloud, Rgb};
use terrain_core::dataset::{read_sample, TrainingSample};
use terrain_core::model::{
    forward, init_state, load_checkpoint, save_checkpoint, ModelConfig, TrainState,
};
use terrain_core::{Error, Result};

use crate::config::FileConfig;
use crate::{PredictArgs, TrainArgs};

/// PLY colors: input scan blue, predicted terrain green, ground truth teal.
const COLOR_INPUT: Rgb = Rgb(0, 0, 255);
const COLOR_PREDICTION: Rgb = Rgb(0, 255, 0);
const COLOR_GROUND_TRUTH: Rgb = Rgb(0, 128, 128);

/// Loads either one sample directory or every sample subdirectory, sorted
/// by name so the dataset order is stable across file systems.
fn load_samples(dir: &Path) -> Result<Vec<TrainingSample>> {
    if dir.join("manifest.json").is_file() {
        return Ok(vec![read_sample(dir)?]);
    }
    if !dir.is_dir() {
        return Err(Error::Config(format!("data path {} is not a directory", dir.display())));
    }
    let mut sample_dirs = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.join("manifest.json").is_file() {
            sample_dirs.push(path);
        }
    }
    sample_dirs.sort();
    if sample_dirs.is_empty() {
        return Err(Error::Validation(format!(
            "no sample directories under {}",
            dir.display()
        )));
    }
    sample_dirs.iter().map(|p| read_sample(p)).collect()
}

/// Per-invocation training record: the loss at every completed step.
#[derive(Debug, Serialize)]
struct TraceDoc {
    /// Total optimizer steps in the checkpoint after this run.
    steps: u64,
    /// Step at which training stopped on a numeric failure, if it did.
    diverged_at: Option<u64>,
    /// Loss value per step of this invocation.
    loss: Vec<f64>,
}

pub fn train(args: &TrainArgs, file_cfg: &FileConfig) -> Result<i32> {
    let mut tc = file_cfg.train;
    if let Some(steps) = args.steps {
        tc.steps = steps;
    }
    if let Some(lr) = args.lr {
        tc.lr = lr;
    }
    if let Some(seed) = args.seed {
        tc.seed = seed;
    }
    tc.validate()?;

    let samples = load_samples(&args.data)?;
    let mut state: TrainState = match &args.resume {
        Some(path) => {
            let state = load_checkpoint(path)?;
            if args.seed.is_some() && state.seed != tc.seed {
                eprintln!(
                    "warning: resuming keeps the checkpoint's run seed {}; ignoring --seed",
                    state.seed
                );
            }
            if let Some(model) = file_cfg.model {
                if model != state.config {
                    eprintln!(
                        "warning: [model] in the config file differs from the checkpoint; \
                         the checkpoint's architecture is used"
                    );
                }
            }
            state
        }
        None => init_state(&file_cfg.model_or(ModelConfig::default()), tc.seed)?,
    };

    let run = terrain_core::model::train(&mut state, &samples, &file_cfg.loss, &tc)?;
    save_checkpoint(&state, &args.out)?;

    let trace_path = args
        .trace
        .clone()
        .unwrap_or_else(|| args.out.with_extension("trace.json"));
    let doc = TraceDoc { steps: state.step, diverged_at: run.diverged_at, loss: run.trace.clone() };
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Format(format!("trace serialization: {e}")))?;
    text.push('\n');
    std::fs::write(&trace_path, text)?;

    match (run.trace.first(), run.trace.last()) {
        (Some(first), Some(last)) => {
            println!("step {}: loss {first:.6} -> {last:.6}", state.step);
        }
        _ => println!("step {}: no optimization steps run", state.step),
    }
    println!("checkpoint {}", args.out.display());
    println!("trace {}", trace_path.display());

    if let Some(step) = run.diverged_at {
        eprintln!(
            "error: training diverged at step {step}; the checkpoint holds the last finite state"
        );
        return Ok(3);
    }
    Ok(0)
}

pub fn predict(args: &PredictArgs, file_cfg: &FileConfig) -> Result<i32> {
    let state = load_checkpoint(&args.checkpoint)?;
    if let Some(model) = file_cfg.model {
        if model != state.config {
            eprintln!(
                "warning: [model] in the config file differs from the checkpoint; \
                 the checkpoint's architecture is used"
            );
        }
    }

    // A sample directory carries its own downsampling seed and ground truth;
    // a bare cloud file defaults to seed 0 and no overlay.
    let (input, default_seed, sample_target) = if args.input.join("manifest.json").is_file() {
        let sample = read_sample(&args.input)?;
        (sample.input, sample.seed, Some(sample.target))
    } else {
        (read_native_cloud(&args.input)?, 0, None)
    };
    let seed = args.seed.unwrap_or(default_seed);
    let ground_truth: Option<PointCloud> = match &args.gt {
        Some(path) => Some(read_native_cloud(path)?),
        None => sample_target,
    };

    let predictions = forward(&input, &state.params, &state.config, seed)?;
    let extended = PointCloud::new(
        input.points().iter().chain(predictions.points()).copied().collect(),
    )?;

    std::fs::create_dir_all(&args.out)?;
    write_native_cloud(&args.out.join("predictions.tepc"), &predictions)?;
    write_native_cloud(&args.out.join("extended.tepc"), &extended)?;
    write_ply(
        &args.out.join("predictions.ply"),
        &[PlySection { points: predictions.points(), color: COLOR_PREDICTION }],
    )?;
    let mut sections = vec![
        PlySection { points: input.points(), color: COLOR_INPUT },
        PlySection { points: predictions.points(), color: COLOR_PREDICTION },
    ];
    if let Some(gt) = &ground_truth {
        sections.push(PlySection { points: gt.points(), color: COLOR_GROUND_TRUTH });
    }
    write_ply(&args.out.join("extended.ply"), &sections)?;

    println!(
        "wrote {} predictions, {} extended points to {}",
        predictions.len(),
        extended.len(),
        args.out.display()
    );
    Ok(0)
}
