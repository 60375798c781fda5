//! Temporal consistency: flow warping, occlusion weighting, mask
//! propagation and the masked temporal loss.
//!
//! Flows are backward flows on the next frame's grid: the value at `p`
//! points to where `p` came from in the previous frame. Warping the previous
//! frame therefore samples it at `p + flow(p)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ensure_same_dims, FlowField, Frame, Mask};

pub const DEFAULT_LAMBDA: f64 = 50.0;
pub const DEFAULT_TL_THRESHOLD: f64 = 4.5;

/// A real-valued per-pixel weight in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl SoftMask {
    /// Builds a soft mask, clamping every value into `[0, 1]`.
    pub fn new(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::BadBufferLength {
                width,
                height,
                channels: 1,
                found: data.len(),
            });
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn from_mask(mask: &Mask) -> Self {
        Self {
            width: mask.width(),
            height: mask.height(),
            data: mask.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// L1 mass.
    pub fn mass(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Elementwise product.
    pub fn product(&self, other: &SoftMask) -> Result<SoftMask> {
        ensure_same_dims("soft mask product", self.dims(), other.dims())?;
        Ok(SoftMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        })
    }

    /// Scales every weight by `alpha`, clamping to `[0, 1]`.
    pub fn scaled(&self, alpha: f64) -> SoftMask {
        SoftMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| (v * alpha).clamp(0.0, 1.0)).collect(),
        }
    }
}

/// Sources that can be backward-warped by a flow field.
pub trait Warp {
    type Output;
    fn dims(&self) -> (usize, usize);
    fn channels(&self) -> usize;
    fn sample_source(&self) -> Vec<f64>;
    fn rebuild(width: usize, height: usize, data: Vec<f64>) -> Result<Self::Output>;
}

impl Warp for Frame {
    type Output = Frame;
    fn dims(&self) -> (usize, usize) {
        Frame::dims(self)
    }
    fn channels(&self) -> usize {
        3
    }
    fn sample_source(&self) -> Vec<f64> {
        self.data().to_vec()
    }
    fn rebuild(width: usize, height: usize, data: Vec<f64>) -> Result<Frame> {
        Frame::new(width, height, data)
    }
}

impl Warp for Mask {
    type Output = SoftMask;
    fn dims(&self) -> (usize, usize) {
        Mask::dims(self)
    }
    fn channels(&self) -> usize {
        1
    }
    fn sample_source(&self) -> Vec<f64> {
        SoftMask::from_mask(self).data
    }
    fn rebuild(width: usize, height: usize, data: Vec<f64>) -> Result<SoftMask> {
        SoftMask::new(width, height, data)
    }
}

impl Warp for SoftMask {
    type Output = SoftMask;
    fn dims(&self) -> (usize, usize) {
        SoftMask::dims(self)
    }
    fn channels(&self) -> usize {
        1
    }
    fn sample_source(&self) -> Vec<f64> {
        self.data.clone()
    }
    fn rebuild(width: usize, height: usize, data: Vec<f64>) -> Result<SoftMask> {
        SoftMask::new(width, height, data)
    }
}

/// Samples `source` at `p + flow(p)` with bilinear interpolation.
///
/// Positions outside the image are clamped to the border and get validity
/// 0; everything else gets validity 1.
pub fn backward_warp<T: Warp>(source: &T, flow: &FlowField) -> Result<(T::Output, SoftMask)> {
    let (w, h) = source.dims();
    ensure_same_dims("backward_warp", (w, h), flow.dims())?;
    let ch = source.channels();
    let src = source.sample_source();
    let mut out = vec![0.0; src.len()];
    let mut valid = vec![0.0; w * h];
    if w == 0 || h == 0 {
        return Ok((T::rebuild(w, h, out)?, SoftMask::new(w, h, valid)?));
    }
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    for y in 0..h {
        for x in 0..w {
            let [u, v] = flow.get(x, y);
            let sx = x as f64 + u as f64;
            let sy = y as f64 + v as f64;
            let inside = sx >= 0.0 && sx <= xmax && sy >= 0.0 && sy <= ymax;
            let sx = if sx.is_finite() { sx.clamp(0.0, xmax) } else { 0.0 };
            let sy = if sy.is_finite() { sy.clamp(0.0, ymax) } else { 0.0 };
            let x0 = (sx.floor() as usize).min(w.saturating_sub(2));
            let y0 = (sy.floor() as usize).min(h.saturating_sub(2));
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            let p = y * w + x;
            for c in 0..ch {
                let at = |xx: usize, yy: usize| src[(yy * w + xx) * ch + c];
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bot = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                out[p * ch + c] = top * (1.0 - fy) + bot * fy;
            }
            valid[p] = if inside { 1.0 } else { 0.0 };
        }
    }
    Ok((T::rebuild(w, h, out)?, SoftMask::new(w, h, valid)?))
}

/// `exp(-lambda * |next - warped|^2)` per pixel, with colors rescaled to
/// `[0, 1]` first.
pub fn occlusion_mask(gt_next: &Frame, warped_gt: &Frame, lambda: f64) -> Result<SoftMask> {
    ensure_same_dims("occlusion_mask", gt_next.dims(), warped_gt.dims())?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "occlusion lambda must be positive, got {lambda}"
        )));
    }
    let data = gt_next
        .pixels()
        .zip(warped_gt.pixels())
        .map(|(a, b)| {
            let d2: f64 = (0..3).map(|c| ((a[c] - b[c]) / 255.0).powi(2)).sum();
            (-lambda * d2).exp()
        })
        .collect();
    SoftMask::new(gt_next.width(), gt_next.height(), data)
}

/// Moves the previous frame's mask onto the next frame's grid and weights
/// it by the occlusion mask and the warp validity.
pub fn propagate_mask(mask: &Mask, flow: &FlowField, occlusion: &SoftMask) -> Result<SoftMask> {
    ensure_same_dims("propagate_mask", mask.dims(), occlusion.dims())?;
    let (warped, valid) = backward_warp(mask, flow)?;
    warped.product(&valid)?.product(occlusion)
}

/// Masked squared difference between the warped previous prediction and the
/// next prediction, normalized by three times the mask mass.
///
/// Pixels whose warp sample left the image are dropped from the mask.
pub fn temporal_loss(
    pred_prev: &Frame,
    pred_next: &Frame,
    flow: &FlowField,
    soft_mask: &SoftMask,
) -> Result<f64> {
    ensure_same_dims("temporal_loss", pred_prev.dims(), pred_next.dims())?;
    ensure_same_dims("temporal_loss mask", pred_next.dims(), soft_mask.dims())?;
    let (warped, valid) = backward_warp(pred_prev, flow)?;
    let mut num = 0.0;
    let mut mass = 0.0;
    for (i, (&m, &ok)) in soft_mask.data().iter().zip(valid.data()).enumerate() {
        let m = m * ok;
        if m == 0.0 {
            continue;
        }
        let (a, b) = (warped.at(i), pred_next.at(i));
        let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
        num += m * m * d2;
        mass += m;
    }
    if mass == 0.0 {
        return Err(Error::EmptyForeground("temporal_loss"));
    }
    Ok(num / (3.0 * mass))
}

/// Two adjacent frames with the flow between them and the earlier frame's
/// mask.
#[derive(Debug, Clone, Copy)]
pub struct FramePair<'a> {
    pub prev: &'a Frame,
    pub next: &'a Frame,
    pub prev_mask: &'a Mask,
    pub flow: &'a FlowField,
}

impl FramePair<'_> {
    /// The propagated next-frame mask built from ground-truth frames.
    pub fn propagated_mask(&self, lambda: f64) -> Result<SoftMask> {
        let (warped, _) = backward_warp(self.prev, self.flow)?;
        let occ = occlusion_mask(self.next, &warped, lambda)?;
        propagate_mask(self.prev_mask, self.flow, &occ)
    }

    /// Temporal loss of the pair itself under its propagated mask.
    pub fn ground_truth_loss(&self, lambda: f64) -> Result<f64> {
        let m = self.propagated_mask(lambda)?;
        temporal_loss(self.prev, self.next, self.flow, &m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedPair {
    /// Position in the input list.
    pub index: usize,
    pub ground_truth_loss: f64,
}

/// Keeps the pairs whose ground-truth temporal loss is at most `threshold`,
/// in input order.
///
/// Pairs whose propagated mask is empty are skipped with a warning.
pub fn select_eval_pairs(
    pairs: &[FramePair<'_>],
    threshold: f64,
    lambda: f64,
) -> Result<Vec<SelectedPair>> {
    let mut out = Vec::new();
    for (index, pair) in pairs.iter().enumerate() {
        let loss = match pair.ground_truth_loss(lambda) {
            Ok(l) => l,
            Err(Error::EmptyForeground(_)) => {
                log::warn!("pair {index}: propagated mask is empty; skipped");
                continue;
            }
            Err(e) => return Err(e),
        };
        if loss <= threshold {
            out.push(SelectedPair {
                index,
                ground_truth_loss: loss,
            });
        }
    }
    Ok(out)
}
