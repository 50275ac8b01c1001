use std::fmt::Write as _;
use std::path::PathBuf;

use crate::data::{
    corrupt_tensor, load_image, make_mask, prepare_eval, psnr, rmse, Image, Mask, MaskSpec, Task,
};
use crate::error::{PceError, Result};
use crate::model::{composite, Generator};
use crate::tensor::Tensor4;

use super::state::mix_seed;

/// One evaluation image as seen by an [`Inpainter`].
pub struct EvalItem<'a> {
    pub truth: &'a Tensor4<f32>,
    pub input: &'a Tensor4<f32>,
    pub mask: &'a Tensor4<f32>,
}

/// Anything that fills masked pixels; its output is composited with the
/// ground truth before scoring.
pub trait Inpainter {
    fn name(&self) -> &str;
    fn inpaint(&mut self, item: &EvalItem<'_>) -> Result<Tensor4<f32>>;
}

impl Inpainter for Generator<f32> {
    fn name(&self) -> &str {
        "PCE"
    }

    fn inpaint(&mut self, item: &EvalItem<'_>) -> Result<Tensor4<f32>> {
        self.forward_eval(item.input)
    }
}

/// Returns the corrupted input unchanged: the fill value is the prediction.
pub struct MeanFill;

impl Inpainter for MeanFill {
    fn name(&self) -> &str {
        "mean-fill"
    }

    fn inpaint(&mut self, item: &EvalItem<'_>) -> Result<Tensor4<f32>> {
        Ok(item.input.clone())
    }
}

/// Oracle that returns the ground truth.
pub struct Perfect;

impl Inpainter for Perfect {
    fn name(&self) -> &str {
        "perfect"
    }

    fn inpaint(&mut self, item: &EvalItem<'_>) -> Result<Tensor4<f32>> {
        Ok(item.truth.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub mask: MaskSpec,
    /// Values written into masked pixels on `[0, 1]`.
    pub fill: [f64; 3],
    /// Random-task masks use seed `(seed, image index)`.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub path: PathBuf,
    pub region_rmse: f64,
    pub region_psnr: f64,
    pub full_rmse: f64,
    pub full_psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub task: Task,
    pub rows: Vec<EvalRow>,
    pub skipped: Vec<PathBuf>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn fmt_metric(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.2}")
    }
}

impl EvalReport {
    pub fn mean_region_rmse(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.region_rmse))
    }

    pub fn mean_region_psnr(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.region_psnr))
    }

    pub fn mean_full_rmse(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.full_rmse))
    }

    pub fn mean_full_psnr(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.full_psnr))
    }

    /// Aggregate table: one row per method with RMSE and PSNR for the
    /// corrupted region and for the full image.
    pub fn render_table(reports: &[&EvalReport]) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "| {:<12} | {:<11} | {:>6} | {:>11} | {:>11} | {:>9} | {:>9} |",
            "Method", "Task", "Images", "RMSE region", "PSNR region", "RMSE full", "PSNR full"
        );
        let rule: Vec<String> = [12, 11, 6, 11, 11, 9, 9]
            .iter()
            .map(|&w| "-".repeat(w + 2))
            .collect();
        let _ = writeln!(s, "|{}|", rule.join("|"));
        for r in reports {
            let _ = writeln!(
                s,
                "| {:<12} | {:<11} | {:>6} | {:>11} | {:>11} | {:>9} | {:>9} |",
                r.method,
                r.task.to_string(),
                r.rows.len(),
                fmt_metric(r.mean_region_rmse()),
                fmt_metric(r.mean_region_psnr()),
                fmt_metric(r.mean_full_rmse()),
                fmt_metric(r.mean_full_psnr())
            );
        }
        s
    }

    /// Per-image metrics as tab-separated values with a header line.
    pub fn render_tsv(&self) -> String {
        let mut s = String::from("path\tregion_rmse\tregion_psnr\tfull_rmse\tfull_psnr\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{:.6}\t{}\t{:.6}\t{}",
                r.path.display(),
                r.region_rmse,
                fmt_metric(r.region_psnr),
                r.full_rmse,
                fmt_metric(r.full_psnr)
            );
        }
        s
    }
}

/// Scores one prepared image; returns the composited output and its metrics.
pub fn score_image(
    model: &mut dyn Inpainter,
    truth: &Image,
    mask: &Mask,
    fill: [f64; 3],
) -> Result<(Image, f64, f64)> {
    let truth_t = truth.to_tensor::<f32>();
    let mask_t = mask.to_tensor::<f32>();
    let input = corrupt_tensor(&truth_t, &mask_t, fill)?;
    let y = model.inpaint(&EvalItem {
        truth: &truth_t,
        input: &input,
        mask: &mask_t,
    })?;
    if !y.is_finite() {
        return Err(PceError::Numeric(format!(
            "{} produced non-finite output",
            model.name()
        )));
    }
    let out = Image::from_tensor(&composite(&y, &truth_t, &mask_t)?, 0)?;
    let region = rmse(truth, &out, Some(mask))?;
    let full = rmse(truth, &out, None)?;
    Ok((out, region, full))
}

/// Evaluates `model` on every image in `paths`. Missing files are skipped
/// and listed in the report; undecodable files are errors.
pub fn evaluate(
    model: &mut dyn Inpainter,
    paths: &[PathBuf],
    settings: &EvalSettings,
) -> Result<EvalReport> {
    if settings.mask.task == Task::Extrapolate {
        log::warn!("extrapolation has no ground truth outside the provided centre; metrics score the synthetic border");
    }
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        let img = match load_image(path) {
            Ok(img) => img,
            Err(PceError::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => {
                log::warn!("skipping missing {}", path.display());
                skipped.push(path.clone());
                continue;
            }
            Err(e) => return Err(e),
        };
        let truth = prepare_eval(&img, settings.mask.image_size)?;
        let mask = make_mask(&settings.mask, mix_seed(settings.seed, i as u64))?;
        let (_, region_rmse, full_rmse) = score_image(model, &truth, &mask, settings.fill)?;
        rows.push(EvalRow {
            path: path.clone(),
            region_rmse,
            region_psnr: psnr(region_rmse),
            full_rmse,
            full_psnr: psnr(full_rmse),
        });
    }
    Ok(EvalReport {
        method: model.name().to_string(),
        task: settings.mask.task,
        rows,
        skipped,
    })
}
