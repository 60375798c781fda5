//! 3D color lookup tables: the lattice, neighbor-pair fitting and trilinear
//! application.
//!
//! A table with `B` bins per axis has `B + 1` lattice points per axis at
//! spacing `d = 256 / B`, so lattice point `v` indexes the color `v * d`.
//! The top point sits at 256 and is only reached as an upper corner of
//! colors in `(256 - d, 255]`.
//!
//! Entries are stored red-fastest: `index = (b * n + g) * n + r` with
//! `n = B + 1`, the same order `.cube` files use.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{ensure_same_dims, Frame, Mask, PixelPair, Rgb};

/// Upper end of the lattice on the color scale.
pub const LATTICE_SPAN: f64 = 256.0;

/// Pairs per accumulation chunk when fitting. Chunk boundaries depend only
/// on the input so the merged sums are identical for any worker count.
const FIT_CHUNK_MIN: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Lut3D {
    bins: usize,
    entries: Vec<Rgb>,
    weights: Vec<f64>,
}

/// The eight lattice corners around a color and their trilinear weights.
#[derive(Debug, Clone, Copy)]
pub struct Footprint {
    pub corners: [usize; 8],
    pub weights: [f64; 8],
}

impl Lut3D {
    fn check_bins(bins: usize) -> Result<()> {
        if bins == 0 {
            return Err(Error::InvalidParameter("bin count must be at least 1".into()));
        }
        Ok(())
    }

    /// A table whose entries are all null.
    pub fn null(bins: usize) -> Result<Self> {
        Self::check_bins(bins)?;
        let n = (bins + 1).pow(3);
        Ok(Self {
            bins,
            entries: vec![[0.0; 3]; n],
            weights: vec![0.0; n],
        })
    }

    /// Dense table with every entry produced by `f(r, g, b)` from the lattice
    /// indices. All entries get unit weight.
    pub fn from_fn(bins: usize, mut f: impl FnMut(usize, usize, usize) -> Rgb) -> Result<Self> {
        Self::check_bins(bins)?;
        let n = bins + 1;
        let mut entries = Vec::with_capacity(n * n * n);
        for b in 0..n {
            for g in 0..n {
                for r in 0..n {
                    entries.push(f(r, g, b));
                }
            }
        }
        let weights = vec![1.0; entries.len()];
        Ok(Self {
            bins,
            entries,
            weights,
        })
    }

    /// The identity mapping: entry `v` outputs its own indexing color `v * d`.
    ///
    /// The top lattice point outputs 256 so that interpolation reproduces
    /// every color in `[0, 255]` exactly.
    pub fn identity(bins: usize) -> Result<Self> {
        let d = LATTICE_SPAN / bins.max(1) as f64;
        Self::from_fn(bins, |r, g, b| [r as f64 * d, g as f64 * d, b as f64 * d])
    }

    pub fn constant(bins: usize, color: Rgb) -> Result<Self> {
        Self::from_fn(bins, |_, _, _| color)
    }

    /// Assembles a table from raw parts. An entry is null iff its weight is 0.
    pub fn from_parts(bins: usize, entries: Vec<Rgb>, weights: Vec<f64>) -> Result<Self> {
        Self::check_bins(bins)?;
        let n = (bins + 1).pow(3);
        if entries.len() != n || weights.len() != n {
            return Err(Error::InvalidParameter(format!(
                "lut with {bins} bins needs {n} entries and weights, got {} and {}",
                entries.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidParameter(format!("invalid entry weight {w}")));
        }
        Ok(Self {
            bins,
            entries,
            weights,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Lattice points per axis, `B + 1`.
    pub fn size(&self) -> usize {
        self.bins + 1
    }

    pub fn bin_size(&self) -> f64 {
        LATTICE_SPAN / self.bins as f64
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn index(&self, r: usize, g: usize, b: usize) -> usize {
        let n = self.bins + 1;
        (b * n + g) * n + r
    }

    /// Lattice indices `(r, g, b)` of a linear entry index.
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let n = self.bins + 1;
        [index % n, (index / n) % n, index / (n * n)]
    }

    /// The color an entry indexes, `v * d` per channel.
    pub fn indexing_color(&self, index: usize) -> Rgb {
        let d = self.bin_size();
        self.coords(index).map(|v| v as f64 * d)
    }

    pub fn entries(&self) -> &[Rgb] {
        &self.entries
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn entry(&self, index: usize) -> Rgb {
        self.entries[index]
    }

    #[inline]
    pub fn weight(&self, index: usize) -> f64 {
        self.weights[index]
    }

    #[inline]
    pub fn is_null(&self, index: usize) -> bool {
        self.weights[index] == 0.0
    }

    pub fn null_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w == 0.0).count()
    }

    pub fn is_dense(&self) -> bool {
        self.null_count() == 0
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [Rgb] {
        &mut self.entries
    }

    /// Corners of the lattice cell containing `c` with their trilinear
    /// weights. Colors are clamped to the lattice extent first.
    #[inline]
    pub fn footprint(&self, c: Rgb) -> Footprint {
        footprint(c, self.bins)
    }

    /// Maps one color through the table.
    ///
    /// Null corners and corners with zero weight are dropped and the rest
    /// renormalized. Returns `None` when nothing survives (an invalid pixel).
    #[inline]
    pub fn eval(&self, c: Rgb) -> Option<Rgb> {
        let fp = self.footprint(c);
        let mut acc = [0.0; 3];
        let mut wsum = 0.0;
        for (&k, &w) in fp.corners.iter().zip(&fp.weights) {
            if w > 0.0 && self.weights[k] != 0.0 {
                let e = self.entries[k];
                acc[0] += w * e[0];
                acc[1] += w * e[1];
                acc[2] += w * e[2];
                wsum += w;
            }
        }
        if wsum > 0.0 {
            Some([acc[0] / wsum, acc[1] / wsum, acc[2] / wsum])
        } else {
            None
        }
    }
}

#[inline]
fn footprint(c: Rgb, bins: usize) -> Footprint {
    let scale = bins as f64 / LATTICE_SPAN;
    let top = (bins - 1) as f64;
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for ch in 0..3 {
        let t = c[ch].clamp(0.0, LATTICE_SPAN) * scale;
        let b = t.floor().min(top);
        base[ch] = b as usize;
        frac[ch] = t - b;
    }
    let n = bins + 1;
    let origin = (base[2] * n + base[1]) * n + base[0];
    let strides = [1, n, n * n];
    let mut corners = [0usize; 8];
    let mut weights = [0.0f64; 8];
    for o in 0..8 {
        let mut idx = origin;
        let mut w = 1.0;
        for ch in 0..3 {
            if (o >> ch) & 1 == 1 {
                idx += strides[ch];
                w *= frac[ch];
            } else {
                w *= 1.0 - frac[ch];
            }
        }
        corners[o] = idx;
        weights[o] = w;
    }
    Footprint { corners, weights }
}

/// Similarity between color `c` and lattice point `v`:
/// the product over channels of `max(0, 1 - |z - v_z * d| / d)`.
pub fn lattice_similarity(c: Rgb, v: [usize; 3], bins: usize) -> f64 {
    let d = LATTICE_SPAN / bins as f64;
    (0..3)
        .map(|ch| (1.0 - (c[ch] - v[ch] as f64 * d).abs() / d).max(0.0))
        .product()
}

struct Accumulator {
    sums: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self {
            sums: vec![[0.0; 3]; n],
            weights: vec![0.0; n],
        }
    }

    fn add_pairs(&mut self, pairs: &[PixelPair], bins: usize) {
        for p in pairs {
            let fp = footprint(p.input, bins);
            for (&k, &w) in fp.corners.iter().zip(&fp.weights) {
                let s = &mut self.sums[k];
                s[0] += w * p.target[0];
                s[1] += w * p.target[1];
                s[2] += w * p.target[2];
                self.weights[k] += w;
            }
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            a[0] += b[0];
            a[1] += b[1];
            a[2] += b[2];
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
    }
}

fn fit_chunk_len(n_entries: usize) -> usize {
    FIT_CHUNK_MIN.max(4 * n_entries)
}

/// Accumulated similarity per entry over `pairs` (the heuristic weights).
pub(crate) fn accumulate_weights(pairs: &[PixelPair], bins: usize) -> Vec<f64> {
    let n = (bins + 1).pow(3);
    let mut weights = vec![0.0; n];
    for p in pairs {
        let fp = footprint(p.input, bins);
        for (&k, &w) in fp.corners.iter().zip(&fp.weights) {
            weights[k] += w;
        }
    }
    weights
}

/// Fits a table where each entry is the similarity-weighted average of the
/// targets of every pair whose color falls in one of the entry's cells.
///
/// Entries no pair reaches stay null. Accumulation runs in fixed-size chunks
/// merged in input order, so the result does not depend on the thread pool.
pub fn fit_lut_heuristic(pairs: &[PixelPair], bins: usize) -> Result<Lut3D> {
    Lut3D::check_bins(bins)?;
    let n = (bins + 1).pow(3);
    let chunk = fit_chunk_len(n);
    let mut acc = if pairs.len() <= chunk {
        let mut acc = Accumulator::new(n);
        acc.add_pairs(pairs, bins);
        acc
    } else {
        let parts: Vec<Accumulator> = pairs
            .par_chunks(chunk)
            .map(|c| {
                let mut acc = Accumulator::new(n);
                acc.add_pairs(c, bins);
                acc
            })
            .collect();
        let mut iter = parts.into_iter();
        let mut first = iter.next().unwrap_or_else(|| Accumulator::new(n));
        for part in iter {
            first.merge(&part);
        }
        first
    };
    for (s, &w) in acc.sums.iter_mut().zip(&acc.weights) {
        if w != 0.0 {
            *s = [s[0] / w, s[1] / w, s[2] / w];
        } else {
            *s = [0.0; 3];
        }
    }
    Ok(Lut3D {
        bins,
        entries: acc.sums,
        weights: acc.weights,
    })
}

/// Output of [`apply_lut`].
#[derive(Debug, Clone, PartialEq)]
pub struct ApplyResult {
    pub frame: Frame,
    /// Foreground pixels whose surrounding entries were all null.
    pub invalid: Mask,
}

/// Transforms the foreground of `frame` through `lut`.
///
/// Background pixels are copied. Invalid pixels take the `fallback` value
/// when one is given and are left unchanged otherwise. Outputs are not
/// clamped.
pub fn apply_lut(
    lut: &Lut3D,
    frame: &Frame,
    mask: &Mask,
    fallback: Option<&Frame>,
) -> Result<ApplyResult> {
    ensure_same_dims("apply_lut mask", frame.dims(), mask.dims())?;
    if let Some(fb) = fallback {
        ensure_same_dims("apply_lut fallback", frame.dims(), fb.dims())?;
    }
    let width = frame.width();
    let mut out = frame.clone();
    let mut invalid = vec![false; frame.pixel_count()];
    if width > 0 {
        out.data_mut()
            .par_chunks_mut(width * 3)
            .zip(invalid.par_chunks_mut(width))
            .enumerate()
            .for_each(|(y, (row, inv_row))| {
                let row_start = y * width;
                for x in 0..width {
                    let i = row_start + x;
                    if !mask.data()[i] {
                        continue;
                    }
                    let px = &mut row[x * 3..x * 3 + 3];
                    match lut.eval([px[0], px[1], px[2]]) {
                        Some(c) => px.copy_from_slice(&c),
                        None => {
                            inv_row[x] = true;
                            if let Some(fb) = fallback {
                                px.copy_from_slice(&fb.at(i));
                            }
                        }
                    }
                }
            });
    }
    let invalid = Mask::new(frame.width(), frame.height(), invalid)?;
    Ok(ApplyResult {
        frame: out,
        invalid,
    })
}

/// Fraction of foreground pixels that were invalid; 0 for an empty foreground.
pub fn invalid_ratio(result: &ApplyResult, mask: &Mask) -> Result<f64> {
    ensure_same_dims("invalid_ratio", result.invalid.dims(), mask.dims())?;
    let fg = mask.foreground_count();
    if fg == 0 {
        return Ok(0.0);
    }
    let bad = result
        .invalid
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(&inv, &m)| inv && m)
        .count();
    Ok(bad as f64 / fg as f64)
}
