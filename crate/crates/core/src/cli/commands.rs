use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{
    corrupt_tensor, load_image, make_mask, prepare_eval, resize_to, save_image, write_atomic,
    write_corpus, DatasetManifest, Image, Mask, MaskSpec, Split, Task,
};
use crate::error::{PceError, Result};
use crate::gradcheck::{run_suite, Tolerance};
use crate::model::composite;
use crate::tensor::Tensor4;
use crate::trainer::{
    evaluate, initial_state, train_loop, Checkpoint, EvalReport, EvalSettings, MeanFill,
    TrainConfig, TrainData, TrainState,
};

use super::{analyze_report, Command, ConfigArgs, ImageFormat, EXIT_NUMERIC, EXIT_OK};

/// Keys that may differ from the checkpoint snapshot when resuming.
const RESUMABLE_KEYS: &[&str] = &["max_steps", "checkpoint_every"];

pub fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Analyze {
            n_dilated,
            base_filters,
        } => {
            print!("{}", analyze_report(n_dilated, base_filters)?);
            Ok(EXIT_OK)
        }
        Command::Train {
            manifest,
            resume,
            config,
        } => train(&manifest, resume.as_deref(), &config),
        Command::Infer {
            checkpoint,
            image,
            mask_image,
            format,
            config,
        } => infer(&checkpoint, &image, mask_image.as_deref(), format, &config),
        Command::Extrapolate {
            checkpoint,
            image,
            format,
            config,
        } => extrapolate(&checkpoint, &image, format, &config),
        Command::Eval {
            checkpoint,
            manifest,
            split,
            baseline,
            config,
        } => eval(&checkpoint, &manifest, &split, baseline, &config),
        Command::Gradcheck { cases, seed } => {
            let report = run_suite::<f64>(cases, seed, Tolerance::F64)?;
            print!("{}", report.render());
            if report.passed() {
                println!("gradcheck: all checks passed");
                Ok(EXIT_OK)
            } else {
                println!("gradcheck: FAILED");
                Ok(EXIT_NUMERIC)
            }
        }
        Command::Synth {
            out_dir,
            count,
            holdout,
            size,
            seed,
        } => {
            let manifest = write_corpus(&out_dir, count, holdout, size, seed)?;
            println!("{}", manifest.display());
            Ok(EXIT_OK)
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PceError::io(dir, e))
}

fn load_state(path: &Path) -> Result<TrainState> {
    TrainState::from_checkpoint(&Checkpoint::load(path)?)
}

fn train(manifest: &Path, resume: Option<&Path>, args: &ConfigArgs) -> Result<i32> {
    let manifest = DatasetManifest::load(manifest)?;
    let paths = manifest.split(Split::Train);
    if paths.is_empty() {
        return Err(PceError::Config("manifest has no train entries".into()));
    }
    let (state, mut data) = match resume {
        Some(ckpt) => {
            let mut state = load_state(ckpt)?;
            let cfg = args.resolve(state.config.clone())?;
            let (old, new) = (state.config.to_text(), cfg.to_text());
            for (a, b) in old.lines().zip(new.lines()) {
                let key = a.split(" = ").next().unwrap_or("");
                if a != b && !RESUMABLE_KEYS.contains(&key) {
                    return Err(PceError::Config(format!(
                        "{key} cannot change when resuming ({a} -> {b})"
                    )));
                }
            }
            cfg.validate()?;
            state.config = cfg;
            let data = TrainData::load(&paths, state.config.image_size)?;
            (state, data)
        }
        None => {
            let cfg = args.resolve(TrainConfig::default())?;
            cfg.validate()?;
            let data = TrainData::load(&paths, cfg.image_size)?;
            (initial_state(cfg, &data)?, data)
        }
    };
    create_dir(&args.out_dir)?;
    write_atomic(
        &args.out_dir.join("config.txt"),
        state.config.to_text().as_bytes(),
    )?;
    log::info!(
        "training on {} images from step {} to at most {}",
        data.len(),
        state.step,
        state.config.max_steps
    );
    let outcome = train_loop(state, &mut data, &args.out_dir)?;
    if let Some(last) = outcome.reports.last() {
        println!("{last}");
    }
    println!(
        "stopped at step {} ({:?}); final checkpoint {}",
        outcome.state.step,
        outcome.stop,
        outcome
            .checkpoints
            .last()
            .map(|p| p.display().to_string())
            .unwrap_or_default()
    );
    Ok(EXIT_OK)
}

fn output_path(out_dir: &Path, stem: &str, suffix: &str, format: ImageFormat) -> PathBuf {
    out_dir.join(format!("{stem}_{suffix}.{}", format.extension()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn fill_values(cfg: &TrainConfig) -> [f64; 3] {
    cfg.fill.values(cfg.fill_mean.unwrap_or([0.5; 3]))
}

fn infer(
    checkpoint: &Path,
    image: &Path,
    mask_image: Option<&Path>,
    format: ImageFormat,
    args: &ConfigArgs,
) -> Result<i32> {
    let state = load_state(checkpoint)?;
    let cfg = args.resolve(state.config.clone())?;
    let img = load_image(image)?;
    let (truth, mask) = match mask_image {
        Some(p) => {
            let mask = Mask::from_image(&load_image(p)?);
            if (mask.width(), mask.height()) != (img.width(), img.height()) {
                return Err(PceError::Shape(format!(
                    "mask {}x{} does not match image {}x{}",
                    mask.width(),
                    mask.height(),
                    img.width(),
                    img.height()
                )));
            }
            (img, mask)
        }
        None => {
            let truth = if img.width() == img.height() {
                img
            } else {
                prepare_eval(&img, cfg.image_size)?
            };
            let spec = MaskSpec {
                image_size: truth.width(),
                ..cfg.mask_spec()
            };
            spec.validate()?;
            let mask = make_mask(&spec, cfg.seed)?;
            (truth, mask)
        }
    };
    let truth_t = truth.to_tensor::<f32>();
    let mask_t = mask.to_tensor::<f32>();
    let input_t = corrupt_tensor(&truth_t, &mask_t, fill_values(&cfg))?;
    let raw = state.generator.forward_eval(&input_t)?;
    if !raw.is_finite() {
        return Err(PceError::Numeric(
            "generator produced non-finite output".into(),
        ));
    }
    let output_t = composite(&raw, &truth_t, &mask_t)?;
    let input = Image::from_tensor(&input_t, 0)?;
    let output = Image::from_tensor(&output_t, 0)?;
    let raw = Image::from_tensor(&raw, 0)?;
    create_dir(&args.out_dir)?;
    let s = stem(image);
    let triptych = Image::hstack(&[&truth, &input, &output])?;
    for (suffix, img) in [
        ("truth", &truth),
        ("input", &input),
        ("output", &output),
        ("raw", &raw),
        ("triptych", &triptych),
    ] {
        let path = output_path(&args.out_dir, &s, suffix, format);
        save_image(img, &path)?;
        println!("{}", path.display());
    }
    Ok(EXIT_OK)
}

fn extrapolate(
    checkpoint: &Path,
    image: &Path,
    format: ImageFormat,
    args: &ConfigArgs,
) -> Result<i32> {
    let state = load_state(checkpoint)?;
    let mut cfg = args.resolve(state.config.clone())?;
    if state.config.task != Task::Extrapolate && args.region_size.is_none() {
        cfg.region_size = cfg.image_size * 3 / 4;
    }
    let spec = MaskSpec {
        task: Task::Extrapolate,
        image_size: cfg.image_size,
        region: cfg.region_size,
        overlap: 0,
    };
    spec.validate()?;
    let centre = resize_to(&load_image(image)?, spec.region, spec.region)?;
    let fill = fill_values(&cfg);
    let size = spec.image_size;
    let offset = (size - spec.region) / 2;
    let centre_t = centre.to_tensor::<f32>();
    let canvas = Tensor4::from_fn([1, 3, size, size], |[_, c, y, x]| {
        let inside = (offset..offset + spec.region).contains(&y)
            && (offset..offset + spec.region).contains(&x);
        if inside {
            centre_t.get(0, c, y - offset, x - offset)
        } else {
            fill[c] as f32
        }
    });
    let mask_t = make_mask(&spec, cfg.seed)?.to_tensor::<f32>();
    let input_t = corrupt_tensor(&canvas, &mask_t, fill)?;
    let raw = state.generator.forward_eval(&input_t)?;
    if !raw.is_finite() {
        return Err(PceError::Numeric(
            "generator produced non-finite output".into(),
        ));
    }
    let output = Image::from_tensor(&composite(&raw, &canvas, &mask_t)?, 0)?;
    let input = Image::from_tensor(&input_t, 0)?;
    create_dir(&args.out_dir)?;
    let s = stem(image);
    for (suffix, img) in [("input", &input), ("output", &output)] {
        let path = output_path(&args.out_dir, &s, suffix, format);
        save_image(img, &path)?;
        println!("{}", path.display());
    }
    Ok(EXIT_OK)
}

fn eval(
    checkpoint: &Path,
    manifest: &Path,
    split: &str,
    baseline: bool,
    args: &ConfigArgs,
) -> Result<i32> {
    let mut state = load_state(checkpoint)?;
    let cfg = args.resolve(state.config.clone())?;
    cfg.mask_spec().validate()?;
    let split: Split = split.parse()?;
    let paths = DatasetManifest::load(manifest)?.split(split);
    if paths.is_empty() {
        return Err(PceError::Config(format!("manifest has no {split} entries")));
    }
    let settings = EvalSettings {
        mask: cfg.mask_spec(),
        fill: fill_values(&cfg),
        seed: cfg.seed,
    };
    let mut reports = vec![evaluate(&mut state.generator, &paths, &settings)?];
    if baseline {
        reports.push(evaluate(&mut MeanFill, &paths, &settings)?);
    }
    create_dir(&args.out_dir)?;
    let refs: Vec<&EvalReport> = reports.iter().collect();
    let table = EvalReport::render_table(&refs);
    write_atomic(&args.out_dir.join("eval_table.md"), table.as_bytes())?;
    for r in &reports {
        let name = format!("eval_{}.tsv", r.method.to_lowercase());
        write_atomic(&args.out_dir.join(name), r.render_tsv().as_bytes())?;
    }
    print!("{table}");
    println!(
        "{} images scored, {} missing files skipped",
        reports[0].rows.len(),
        reports[0].skipped.len()
    );
    Ok(EXIT_OK)
}
