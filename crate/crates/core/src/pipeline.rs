//! Per-frame harmonization refined by neighbor-fitted color mappings.
//!
//! Every frame is first passed through a [`Harmonizer`]. Then, for frame
//! `i`, the composite colors of its `2T` neighbors are paired with their
//! harmonized colors, a LUT is fit to those pairs, and the LUT is applied to
//! frame `i`. The LUT result and the harmonizer result are fused according
//! to a [`FusionPolicy`].

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ensure_same_dims, Frame, Mask, PixelPair, VideoSample};
use crate::lut::{apply_lut, fit_lut_heuristic, invalid_ratio};
use crate::metrics::{fmse, MetricReport};

pub const DEFAULT_NEIGHBORS: usize = 8;
pub const DEFAULT_BINS: usize = 32;

/// A deterministic per-frame harmonization transform.
///
/// Implementations must keep dimensions and leave background pixels
/// unchanged. `index` is the frame position within its sample.
pub trait Harmonizer: Sync {
    fn name(&self) -> &str;
    fn harmonize(&self, index: usize, frame: &Frame, mask: &Mask) -> Result<Frame>;
}

/// Returns the input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityHarmonizer;

impl Harmonizer for IdentityHarmonizer {
    fn name(&self) -> &str {
        "identity"
    }

    fn harmonize(&self, _index: usize, frame: &Frame, mask: &Mask) -> Result<Frame> {
        ensure_same_dims("identity harmonizer", frame.dims(), mask.dims())?;
        Ok(frame.clone())
    }
}

/// Matches foreground per-channel mean and standard deviation to the
/// background's. Outputs are clamped to `[0, 255]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChannelAffineHarmonizer;

fn channel_stats(frame: &Frame, mask: &Mask, fg: bool) -> Option<([f64; 3], [f64; 3])> {
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    let mut n = 0usize;
    for (i, &m) in mask.data().iter().enumerate() {
        if m == fg {
            let p = frame.at(i);
            for c in 0..3 {
                sum[c] += p[c];
                sq[c] += p[c] * p[c];
            }
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    let n = n as f64;
    let mean = sum.map(|s| s / n);
    let mut std = [0.0; 3];
    for c in 0..3 {
        std[c] = (sq[c] / n - mean[c] * mean[c]).max(0.0).sqrt();
    }
    Some((mean, std))
}

impl Harmonizer for ChannelAffineHarmonizer {
    fn name(&self) -> &str {
        "affine"
    }

    fn harmonize(&self, _index: usize, frame: &Frame, mask: &Mask) -> Result<Frame> {
        ensure_same_dims("affine harmonizer", frame.dims(), mask.dims())?;
        let (Some((fg_mean, fg_std)), Some((bg_mean, bg_std))) = (
            channel_stats(frame, mask, true),
            channel_stats(frame, mask, false),
        ) else {
            return Ok(frame.clone());
        };
        let mut scale = [1.0; 3];
        for c in 0..3 {
            if fg_std[c] > 1e-9 {
                scale[c] = bg_std[c] / fg_std[c];
            }
        }
        let mut out = frame.clone();
        for i in mask.foreground_indices() {
            let p = frame.at(i);
            let mut q = [0.0; 3];
            for c in 0..3 {
                q[c] = ((p[c] - fg_mean[c]) * scale[c] + bg_mean[c]).clamp(0.0, 255.0);
            }
            out.set_at(i, q);
        }
        Ok(out)
    }
}

/// Returns the stored ground-truth frame for each index.
#[derive(Debug, Clone)]
pub struct OracleHarmonizer {
    ground_truth: Vec<Frame>,
}

impl OracleHarmonizer {
    pub fn new(ground_truth: Vec<Frame>) -> Self {
        Self { ground_truth }
    }
}

impl Harmonizer for OracleHarmonizer {
    fn name(&self) -> &str {
        "oracle"
    }

    fn harmonize(&self, index: usize, frame: &Frame, mask: &Mask) -> Result<Frame> {
        let gt = self.ground_truth.get(index).ok_or_else(|| {
            Error::InvalidParameter(format!("oracle has no ground truth for frame {index}"))
        })?;
        ensure_same_dims("oracle harmonizer", frame.dims(), gt.dims())?;
        ensure_same_dims("oracle harmonizer mask", frame.dims(), mask.dims())?;
        let mut out = frame.clone();
        for i in mask.foreground_indices() {
            out.set_at(i, gt.at(i));
        }
        Ok(out)
    }
}

/// Adds seeded Gaussian noise to the foreground output of another
/// harmonizer. The noise for frame `i` depends only on `(seed, i)`.
#[derive(Debug, Clone)]
pub struct NoisyHarmonizer<H> {
    inner: H,
    sigma: f64,
    seed: u64,
    name: String,
}

impl<H: Harmonizer> NoisyHarmonizer<H> {
    pub fn new(inner: H, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise sigma {sigma}")));
        }
        let name = format!("noisy-{}", inner.name());
        Ok(Self {
            inner,
            sigma,
            seed,
            name,
        })
    }
}

impl<H: Harmonizer> Harmonizer for NoisyHarmonizer<H> {
    fn name(&self) -> &str {
        &self.name
    }

    fn harmonize(&self, index: usize, frame: &Frame, mask: &Mask) -> Result<Frame> {
        let mut out = self.inner.harmonize(index, frame, mask)?;
        if self.sigma == 0.0 {
            return Ok(out);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64);
        let normal = Normal::new(0.0, self.sigma).expect("finite sigma");
        for i in mask.foreground_indices() {
            let p = out.at(i);
            out.set_at(i, p.map(|v| (v + normal.sample(&mut rng)).clamp(0.0, 255.0)));
        }
        Ok(out)
    }
}

/// Looks up a built-in harmonizer. `oracle` needs ground-truth frames.
pub fn harmonizer_by_name(name: &str, ground_truth: Option<&[Frame]>) -> Result<Box<dyn Harmonizer>> {
    match name {
        "identity" => Ok(Box::new(IdentityHarmonizer)),
        "affine" | "channel_affine" => Ok(Box::new(ChannelAffineHarmonizer)),
        "oracle" => {
            let gt = ground_truth.ok_or_else(|| {
                Error::InvalidParameter("the oracle harmonizer needs ground-truth frames".into())
            })?;
            Ok(Box::new(OracleHarmonizer::new(gt.to_vec())))
        }
        other => Err(Error::InvalidParameter(format!(
            "unknown harmonizer '{other}' (expected identity, affine or oracle)"
        ))),
    }
}

/// How the LUT result and the harmonizer result become the refined frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FusionPolicy {
    LutOnly,
    HarmonizerOnly,
    /// `alpha * lut + (1 - alpha) * harmonizer` on the foreground.
    Blend(f64),
}

impl FusionPolicy {
    pub fn blend(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "blend weight must lie in [0, 1], got {alpha}"
            )));
        }
        Ok(FusionPolicy::Blend(alpha))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Neighbors on each side of the current frame.
    pub neighbors: usize,
    pub bins: usize,
    pub fusion: FusionPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            neighbors: DEFAULT_NEIGHBORS,
            bins: DEFAULT_BINS,
            fusion: FusionPolicy::LutOnly,
        }
    }
}

/// Indices `i-T..i-1, i+1..i+T`, with out-of-range positions replicated
/// from the first or last frame.
pub fn neighbor_window(i: usize, t: usize, n: usize) -> Vec<usize> {
    let last = n.saturating_sub(1) as isize;
    let i = i as isize;
    let t = t as isize;
    (i - t..i)
        .chain(i + 1..=i + t)
        .map(|j| j.clamp(0, last) as usize)
        .collect()
}

/// Composite/harmonized foreground pairs over the window, in window order
/// and row-major within each frame.
pub fn collect_pairs(sample: &VideoSample, harmonized: &[Frame], window: &[usize]) -> Result<Vec<PixelPair>> {
    if harmonized.len() != sample.frames.len() {
        return Err(Error::InvalidParameter(format!(
            "{} harmonized frames for a {}-frame sample",
            harmonized.len(),
            sample.frames.len()
        )));
    }
    let total: usize = window
        .iter()
        .map(|&j| sample.masks.get(j).map_or(0, Mask::foreground_count))
        .sum();
    let mut pairs = Vec::with_capacity(total);
    for &j in window {
        let (Some(frame), Some(mask)) = (sample.frames.get(j), sample.masks.get(j)) else {
            return Err(Error::InvalidParameter(format!(
                "window index {j} outside a {}-frame sample",
                sample.frames.len()
            )));
        };
        let harm = &harmonized[j];
        ensure_same_dims("collect_pairs", frame.dims(), harm.dims())?;
        pairs.extend(
            mask.foreground_indices()
                .map(|p| PixelPair::new(frame.at(p), harm.at(p))),
        );
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub refined: Frame,
    pub lut_result: Frame,
    pub harm_result: Frame,
    pub invalid: Mask,
    pub invalid_ratio: f64,
    /// Wall time spent fitting and applying the LUT.
    pub lut_seconds: f64,
}

fn fuse(
    policy: FusionPolicy,
    composite: &Frame,
    mask: &Mask,
    lut_result: &Frame,
    harm_result: &Frame,
    invalid: &Mask,
) -> Frame {
    match policy {
        FusionPolicy::LutOnly => lut_result.clone(),
        FusionPolicy::HarmonizerOnly => harm_result.clone(),
        FusionPolicy::Blend(alpha) => {
            let mut out = composite.clone();
            for i in mask.foreground_indices() {
                let h = harm_result.at(i);
                if invalid.data()[i] {
                    out.set_at(i, h);
                } else {
                    let l = lut_result.at(i);
                    out.set_at(
                        i,
                        [
                            alpha * l[0] + (1.0 - alpha) * h[0],
                            alpha * l[1] + (1.0 - alpha) * h[1],
                            alpha * l[2] + (1.0 - alpha) * h[2],
                        ],
                    );
                }
            }
            out
        }
    }
}

/// The LUT and fusion stage for frame `i`, given every frame's harmonizer
/// result.
pub fn refine_frame(
    sample: &VideoSample,
    i: usize,
    harmonized: &[Frame],
    config: &PipelineConfig,
) -> Result<FrameOutput> {
    let n = sample.frames.len();
    if i >= n {
        return Err(Error::InvalidParameter(format!("frame {i} outside a {n}-frame sample")));
    }
    let frame = &sample.frames[i];
    let mask = &sample.masks[i];
    let harm = &harmonized[i];
    let start = Instant::now();
    let window = neighbor_window(i, config.neighbors, n);
    let pairs = collect_pairs(sample, harmonized, &window)?;
    let lut = fit_lut_heuristic(&pairs, config.bins)?;
    let applied = apply_lut(&lut, frame, mask, Some(harm))?;
    let lut_seconds = start.elapsed().as_secs_f64();
    let ratio = invalid_ratio(&applied, mask)?;
    let refined = fuse(config.fusion, frame, mask, &applied.frame, harm, &applied.invalid);
    Ok(FrameOutput {
        refined,
        lut_result: applied.frame,
        harm_result: harm.clone(),
        invalid: applied.invalid,
        invalid_ratio: ratio,
        lut_seconds,
    })
}

/// Harmonizes frame `i` of `sample` on its own.
///
/// Runs the harmonizer on frame `i` and its window only.
pub fn harmonize_frame(
    sample: &VideoSample,
    i: usize,
    harmonizer: &dyn Harmonizer,
    config: &PipelineConfig,
) -> Result<FrameOutput> {
    sample.validate()?;
    let n = sample.frames.len();
    if i >= n {
        return Err(Error::InvalidParameter(format!("frame {i} outside a {n}-frame sample")));
    }
    let mut needed = neighbor_window(i, config.neighbors, n);
    needed.push(i);
    needed.sort_unstable();
    needed.dedup();
    let mut harmonized = sample.frames.clone();
    for j in needed {
        harmonized[j] = harmonizer.harmonize(j, &sample.frames[j], &sample.masks[j])?;
    }
    refine_frame(sample, i, &harmonized, config)
}

/// One training example for [`fit_blend_weight`].
#[derive(Debug, Clone, Copy)]
pub struct BlendExample<'a> {
    pub lut_result: &'a Frame,
    pub harm_result: &'a Frame,
    pub ground_truth: &'a Frame,
    pub mask: &'a Mask,
    /// Pixels to exclude (the LUT's invalid pixels).
    pub invalid: Option<&'a Mask>,
}

/// Closed-form blend weight minimizing the fused foreground squared error:
/// `clamp(sum <l - h, g - h> / sum |l - h|^2, 0, 1)`.
///
/// Returns 0 with a warning when the two results coincide everywhere.
pub fn fit_blend_weight(examples: &[BlendExample<'_>]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for ex in examples {
        let dims = ex.mask.dims();
        ensure_same_dims("blend lut result", dims, ex.lut_result.dims())?;
        ensure_same_dims("blend harmonizer result", dims, ex.harm_result.dims())?;
        ensure_same_dims("blend ground truth", dims, ex.ground_truth.dims())?;
        if let Some(inv) = ex.invalid {
            ensure_same_dims("blend invalid mask", dims, inv.dims())?;
        }
        for i in ex.mask.foreground_indices() {
            if ex.invalid.is_some_and(|m| m.data()[i]) {
                continue;
            }
            let (l, h, g) = (ex.lut_result.at(i), ex.harm_result.at(i), ex.ground_truth.at(i));
            for c in 0..3 {
                let d = l[c] - h[c];
                num += d * (g[c] - h[c]);
                den += d * d;
            }
        }
    }
    if den == 0.0 {
        log::warn!("lut and harmonizer results coincide; blend weight set to 0");
        return Ok(0.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Result of [`harmonize_video`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub sample_id: String,
    pub harmonizer: String,
    pub neighbors: usize,
    pub bins: usize,
    pub fusion: FusionPolicy,
    pub invalid_ratios: Vec<f64>,
    pub mean_invalid_ratio: f64,
    pub lut_seconds: Vec<f64>,
    pub mean_lut_seconds: f64,
    /// Metrics of the refined frames, when ground truth is available.
    pub report: Option<MetricReport>,
    /// Per-frame foreground MSE of the LUT results against ground truth.
    pub lut_fmse: Option<Vec<f64>>,
    /// Per-frame foreground MSE of the harmonizer results against ground truth.
    pub harm_fmse: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoOutput {
    pub frames: Vec<FrameOutput>,
    pub summary: VideoSummary,
}

impl VideoOutput {
    pub fn refined(&self) -> Vec<Frame> {
        self.frames.iter().map(|f| f.refined.clone()).collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Runs the whole pipeline over a sample.
///
/// All harmonizer passes finish before any LUT is fit, since each window
/// needs its neighbors' harmonized frames. Both phases run in parallel over
/// frames; outputs do not depend on the worker count.
pub fn harmonize_video(
    sample: &VideoSample,
    harmonizer: &dyn Harmonizer,
    config: &PipelineConfig,
) -> Result<VideoOutput> {
    sample.validate()?;
    let n = sample.frames.len();
    let harmonized = (0..n)
        .into_par_iter()
        .map(|i| harmonizer.harmonize(i, &sample.frames[i], &sample.masks[i]))
        .collect::<Result<Vec<_>>>()?;
    for h in &harmonized {
        ensure_same_dims("harmonizer output", sample.dims(), h.dims())?;
    }
    let frames = (0..n)
        .into_par_iter()
        .map(|i| refine_frame(sample, i, &harmonized, config))
        .collect::<Result<Vec<_>>>()?;

    let invalid_ratios: Vec<f64> = frames.iter().map(|f| f.invalid_ratio).collect();
    let lut_seconds: Vec<f64> = frames.iter().map(|f| f.lut_seconds).collect();
    let (report, lut_fmse, harm_fmse) = match &sample.ground_truth {
        Some(gt) => {
            let refined: Vec<Frame> = frames.iter().map(|f| f.refined.clone()).collect();
            let report = MetricReport::evaluate(&refined, gt, &sample.masks)?;
            let per = |pick: fn(&FrameOutput) -> &Frame| -> Result<Vec<f64>> {
                frames
                    .iter()
                    .zip(gt)
                    .zip(&sample.masks)
                    .map(|((f, g), m)| fmse(pick(f), g, m))
                    .collect()
            };
            (
                Some(report),
                Some(per(|f| &f.lut_result)?),
                Some(per(|f| &f.harm_result)?),
            )
        }
        None => (None, None, None),
    };
    let summary = VideoSummary {
        sample_id: sample.id.clone(),
        harmonizer: harmonizer.name().to_string(),
        neighbors: config.neighbors,
        bins: config.bins,
        fusion: config.fusion,
        mean_invalid_ratio: mean(&invalid_ratios),
        invalid_ratios,
        mean_lut_seconds: mean(&lut_seconds),
        lut_seconds,
        report,
        lut_fmse,
        harm_fmse,
    };
    Ok(VideoOutput { frames, summary })
}
