//! Pixel containers shared by every stage of the toolkit.
//!
//! Frames hold real-valued RGB on the `[0, 255]` scale. All buffers are
//! row-major, and every routine that walks pixels does so in row-major order
//! so accumulations are reproducible.

use crate::error::{Error, Result};

/// An RGB triple on the `[0, 255]` scale.
pub type Rgb = [f64; 3];

fn check_len(width: usize, height: usize, channels: usize, found: usize) -> Result<()> {
    if width.checked_mul(height).and_then(|n| n.checked_mul(channels)) != Some(found) {
        return Err(Error::BadBufferLength {
            width,
            height,
            channels,
            found,
        });
    }
    Ok(())
}

pub(crate) fn ensure_same_dims(
    context: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

/// An H×W×3 real-valued image.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_len(width, height, 3, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Pixel at linear (row-major) index.
    #[inline]
    pub fn at(&self, index: usize) -> Rgb {
        let o = index * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn set_at(&mut self, index: usize, rgb: Rgb) {
        let o = index * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.at(y * self.width + x)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: Rgb) {
        let i = y * self.width + x;
        self.set_at(i, rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = Rgb> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Elementwise `self - other`.
    pub fn difference(&self, other: &Frame) -> Result<Frame> {
        ensure_same_dims("frame difference", self.dims(), other.dims())?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Frame {
            width: self.width,
            height: self.height,
            data,
        })
    }

    /// Zeroes every background pixel.
    pub fn masked(&self, mask: &Mask) -> Result<Frame> {
        ensure_same_dims("masked frame", self.dims(), mask.dims())?;
        let mut out = self.clone();
        for (px, &fg) in out.data.chunks_exact_mut(3).zip(mask.data()) {
            if !fg {
                px.fill(0.0);
            }
        }
        Ok(out)
    }
}

/// A binary foreground map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_len(width, height, 1, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Foreground area over frame area; 0 for an empty frame.
    pub fn foreground_ratio(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.foreground_count() as f64 / self.data.len() as f64
    }

    /// Row-major linear indices of foreground pixels.
    pub fn foreground_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }
}

/// Backward optical flow: `(u, v)` at pixel `p` of the target grid points
/// at `p + (u, v)` in the source frame.
///
/// Components are stored as `f32`, the precision of the `.flo` format.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, data: Vec<[f32; 2]>) -> Result<Self> {
        check_len(width, height, 1, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self {
            width,
            height,
            data: vec![[u, v]; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[[f32; 2]] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.data[y * self.width + x]
    }
}

/// A (composite color, target color) correspondence used to fit a LUT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPair {
    pub input: Rgb,
    pub target: Rgb,
}

impl PixelPair {
    pub fn new(input: Rgb, target: Rgb) -> Self {
        Self { input, target }
    }
}

/// An ordered clip of frames with one foreground mask per frame.
///
/// `frames` are the frames the pipeline operates on (composites for a
/// synthesized sample); `ground_truth` optionally carries the real frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    pub id: String,
    pub frames: Vec<Frame>,
    pub masks: Vec<Mask>,
    pub flows: Option<Vec<FlowField>>,
    pub ground_truth: Option<Vec<Frame>>,
}

impl VideoSample {
    pub fn new(id: impl Into<String>, frames: Vec<Frame>, masks: Vec<Mask>) -> Result<Self> {
        let sample = Self {
            id: id.into(),
            frames,
            masks,
            flows: None,
            ground_truth: None,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn with_flows(mut self, flows: Vec<FlowField>) -> Result<Self> {
        self.flows = Some(flows);
        self.validate()?;
        Ok(self)
    }

    pub fn with_ground_truth(mut self, gt: Vec<Frame>) -> Result<Self> {
        self.ground_truth = Some(gt);
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    /// Checks count and dimension invariants.
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::MalformedSample(format!("{}: no frames", self.id)));
        }
        if self.frames.len() != self.masks.len() {
            return Err(Error::MalformedSample(format!(
                "{}: {} frames but {} masks",
                self.id,
                self.frames.len(),
                self.masks.len()
            )));
        }
        let dims = self.frames[0].dims();
        for f in &self.frames {
            ensure_same_dims("sample frame", dims, f.dims())?;
        }
        for m in &self.masks {
            ensure_same_dims("sample mask", dims, m.dims())?;
        }
        if let Some(flows) = &self.flows {
            if flows.len() + 1 != self.frames.len() {
                return Err(Error::MalformedSample(format!(
                    "{}: {} frames need {} flows, found {}",
                    self.id,
                    self.frames.len(),
                    self.frames.len() - 1,
                    flows.len()
                )));
            }
            for fl in flows {
                ensure_same_dims("sample flow", dims, fl.dims())?;
            }
        }
        if let Some(gt) = &self.ground_truth {
            if gt.len() != self.frames.len() {
                return Err(Error::MalformedSample(format!(
                    "{}: {} frames but {} ground-truth frames",
                    self.id,
                    self.frames.len(),
                    gt.len()
                )));
            }
            for f in gt {
                ensure_same_dims("ground-truth frame", dims, f.dims())?;
            }
        }
        Ok(())
    }
}

/// Foreground colors of `frame` in row-major order.
pub fn foreground_pixels(frame: &Frame, mask: &Mask) -> Result<Vec<Rgb>> {
    ensure_same_dims("foreground_pixels", frame.dims(), mask.dims())?;
    Ok(mask.foreground_indices().map(|i| frame.at(i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_has_no_pixels() {
        let f = Frame::filled(3, 2, [1.0, 2.0, 3.0]);
        let m = Mask::filled(3, 2, false);
        assert!(foreground_pixels(&f, &m).unwrap().is_empty());
    }

    #[test]
    fn full_mask_returns_all_pixels() {
        let f = Frame::new(2, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let m = Mask::filled(2, 1, true);
        assert_eq!(
            foreground_pixels(&f, &m).unwrap(),
            vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]
        );
    }

    #[test]
    fn row_major_order() {
        // (row, col) = (0,1) and (1,0) -> linear 1 and 2
        let f = Frame::from_fn(2, 2, |x, y| [(10 * y + x) as f64, 0.0, 0.0]);
        let m = Mask::new(2, 2, vec![false, true, true, false]).unwrap();
        let px = foreground_pixels(&f, &m).unwrap();
        assert_eq!(px, vec![[1.0, 0.0, 0.0], [10.0, 0.0, 0.0]]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let f = Frame::filled(2, 2, [0.0; 3]);
        let m = Mask::filled(3, 2, true);
        assert!(matches!(
            foreground_pixels(&f, &m),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bad_buffer_length() {
        assert!(Frame::new(2, 2, vec![0.0; 11]).is_err());
        assert!(Mask::new(2, 2, vec![true; 3]).is_err());
    }

    #[test]
    fn ratio_and_count() {
        let m = Mask::from_fn(4, 5, |x, _| x == 0);
        assert_eq!(m.foreground_count(), 5);
        assert!((m.foreground_ratio() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sample_flow_count_enforced() {
        let frames = vec![Frame::filled(2, 2, [0.0; 3]); 3];
        let masks = vec![Mask::filled(2, 2, true); 3];
        let s = VideoSample::new("s", frames, masks).unwrap();
        assert!(s.clone().with_flows(vec![FlowField::zeros(2, 2); 3]).is_err());
        assert!(s.with_flows(vec![FlowField::zeros(2, 2); 2]).is_ok());
    }

    #[test]
    fn difference_is_exact() {
        let a = Frame::filled(1, 1, [0.1, 200.0, 255.5]);
        let b = Frame::filled(1, 1, [0.2, 100.0, -3.0]);
        let d = a.difference(&b).unwrap();
        assert_eq!(d.at(0), [0.1 - 0.2, 100.0, 258.5]);
    }
}
