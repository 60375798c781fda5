//! Harmonization quality metrics on the `[0, 255]` scale.
//!
//! `mse` and `psnr` cover the whole frame; `fmse` and `fssim` only the
//! foreground.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ensure_same_dims, Frame, Mask};

pub mod ranking;

pub use ranking::plackett_luce_scores;

pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

pub fn mse(pred: &Frame, gt: &Frame) -> Result<f64> {
    ensure_same_dims("mse", pred.dims(), gt.dims())?;
    if pred.data().is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / pred.data().len() as f64)
}

pub fn fmse(pred: &Frame, gt: &Frame, mask: &Mask) -> Result<f64> {
    ensure_same_dims("fmse", pred.dims(), gt.dims())?;
    ensure_same_dims("fmse mask", pred.dims(), mask.dims())?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in mask.foreground_indices() {
        let (a, b) = (pred.at(i), gt.at(i));
        sum += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyForeground("fmse"));
    }
    Ok(sum / (3 * count) as f64)
}

/// PSNR in dB from an MSE value, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    let peak = 255.0 * 255.0;
    if mse < peak * 1e-10 {
        return PSNR_CAP;
    }
    (10.0 * (peak / mse).log10()).min(PSNR_CAP)
}

pub fn psnr(pred: &Frame, gt: &Frame) -> Result<f64> {
    Ok(psnr_from_mse(mse(pred, gt)?))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Gaussian blur with the window truncated at the borders and renormalized
/// over the in-bounds taps. Separable, so the 2D renormalization is exact.
fn blur(src: &[f64], width: usize, height: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let (mut acc, mut ws) = (0.0, 0.0);
            for (t, &w) in kernel.iter().enumerate() {
                let xx = x as isize + t as isize - r;
                if xx >= 0 && (xx as usize) < width {
                    acc += w * src[y * width + xx as usize];
                    ws += w;
                }
            }
            tmp[y * width + x] = acc / ws;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let (mut acc, mut ws) = (0.0, 0.0);
            for (t, &w) in kernel.iter().enumerate() {
                let yy = y as isize + t as isize - r;
                if yy >= 0 && (yy as usize) < height {
                    acc += w * tmp[yy as usize * width + x];
                    ws += w;
                }
            }
            out[y * width + x] = acc / ws;
        }
    }
    out
}

/// Per-pixel SSIM averaged over the three channels.
pub fn ssim_map(pred: &Frame, gt: &Frame) -> Result<Vec<f64>> {
    ensure_same_dims("ssim", pred.dims(), gt.dims())?;
    let (w, h) = pred.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let kernel = gaussian_kernel();
    let n = w * h;
    let mut map = vec![0.0; n];
    for ch in 0..3 {
        let x: Vec<f64> = (0..n).map(|i| pred.data()[i * 3 + ch]).collect();
        let y: Vec<f64> = (0..n).map(|i| gt.data()[i * 3 + ch]).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mu_x = blur(&x, w, h, &kernel);
        let mu_y = blur(&y, w, h, &kernel);
        let e_xx = blur(&xx, w, h, &kernel);
        let e_yy = blur(&yy, w, h, &kernel);
        let e_xy = blur(&xy, w, h, &kernel);
        for i in 0..n {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let sxx = e_xx[i] - mx * mx;
            let syy = e_yy[i] - my * my;
            let sxy = e_xy[i] - mx * my;
            let s = ((2.0 * mx * my + SSIM_C1) * (2.0 * sxy + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2));
            map[i] += s / 3.0;
        }
    }
    Ok(map)
}

pub fn fssim(pred: &Frame, gt: &Frame, mask: &Mask) -> Result<f64> {
    ensure_same_dims("fssim mask", pred.dims(), mask.dims())?;
    if mask.foreground_count() == 0 {
        return Err(Error::EmptyForeground("fssim"));
    }
    let map = ssim_map(pred, gt)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in mask.foreground_indices() {
        sum += map[i];
        count += 1;
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub index: usize,
    pub mse: f64,
    pub fmse: f64,
    pub psnr: f64,
    pub fssim: f64,
}

/// Per-frame metrics plus their means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frames: Vec<FrameMetrics>,
    pub mean: FrameMetrics,
}

pub fn frame_metrics(index: usize, pred: &Frame, gt: &Frame, mask: &Mask) -> Result<FrameMetrics> {
    let m = mse(pred, gt)?;
    Ok(FrameMetrics {
        index,
        mse: m,
        fmse: fmse(pred, gt, mask)?,
        psnr: psnr_from_mse(m),
        fssim: fssim(pred, gt, mask)?,
    })
}

impl MetricReport {
    pub fn from_frames(frames: Vec<FrameMetrics>) -> Self {
        let n = frames.len().max(1) as f64;
        let mut mean = FrameMetrics {
            index: frames.len(),
            mse: 0.0,
            fmse: 0.0,
            psnr: 0.0,
            fssim: 0.0,
        };
        for f in &frames {
            mean.mse += f.mse / n;
            mean.fmse += f.fmse / n;
            mean.psnr += f.psnr / n;
            mean.fssim += f.fssim / n;
        }
        Self { frames, mean }
    }

    /// Evaluates aligned prediction / ground-truth / mask sequences.
    pub fn evaluate(preds: &[Frame], gts: &[Frame], masks: &[Mask]) -> Result<Self> {
        if preds.len() != gts.len() || preds.len() != masks.len() {
            return Err(Error::InvalidParameter(format!(
                "evaluate needs aligned sequences, got {} / {} / {}",
                preds.len(),
                gts.len(),
                masks.len()
            )));
        }
        use rayon::prelude::*;
        let frames = (0..preds.len())
            .into_par_iter()
            .map(|i| frame_metrics(i, &preds[i], &gts[i], &masks[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_frames(frames))
    }

    /// Fixed-width text table, one line per frame and a closing mean row.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:>6} {:>12} {:>12} {:>10} {:>8}\n",
            "frame", "mse", "fmse", "psnr", "fssim"
        );
        for f in &self.frames {
            s.push_str(&format!(
                "{:>6} {:>12.4} {:>12.4} {:>10.4} {:>8.4}\n",
                f.index, f.mse, f.fmse, f.psnr, f.fssim
            ));
        }
        s.push_str(&format!(
            "{:>6} {:>12.4} {:>12.4} {:>10.4} {:>8.4}\n",
            "mean", self.mean.mse, self.mean.fmse, self.mean.psnr, self.mean.fssim
        ));
        s
    }
}
