//! Sample directories:
//!
//! ```text
//! <sample>/real/00000.png ...        ground-truth frames
//! <sample>/composite/00000.png ...   frames to harmonize
//! <sample>/masks/00000.png ...
//! <sample>/flows/00000.flo ...       optional, one per consecutive pair
//! <sample>/harmonized/00000.png ...  optional stored harmonizer output
//! <sample>/manifest                  JSON: id, frames, lut_id, review
//! ```
//!
//! A directory without `composite/` is a plain real clip: its `real/`
//! frames become the sample frames and there is no ground truth.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::flo::{read_flo, write_flo};
use super::png::{read_frame, read_mask, resize_frame, resize_mask, write_frame, write_mask};
use crate::error::{Error, Result};
use crate::frame::{FlowField, Frame, Mask, VideoSample};

pub const REAL_DIR: &str = "real";
pub const COMPOSITE_DIR: &str = "composite";
pub const MASKS_DIR: &str = "masks";
pub const FLOWS_DIR: &str = "flows";
pub const HARMONIZED_DIR: &str = "harmonized";
pub const MANIFEST_FILE: &str = "manifest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub id: String,
    pub frames: usize,
    #[serde(default)]
    pub lut_id: Option<String>,
    #[serde(default)]
    pub review: String,
}

/// Load-time options.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Resize everything to `(width, height)`: frames bilinear, masks
    /// nearest, flows nearest with vectors rescaled.
    pub resize: Option<(usize, usize)>,
}

/// File name of frame `i` with the given extension, e.g. `00003.png`.
pub fn frame_file(i: usize, ext: &str) -> String {
    format!("{i:05}.{ext}")
}

/// Counts the `%05d.<ext>` files in `dir`, requiring them to be numbered
/// `0..n` without gaps.
fn count_sequence(dir: &Path, ext: &str) -> Result<usize> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut idx = Vec::new();
    for ent in rd {
        let ent = ent.map_err(|e| Error::io(dir, e))?;
        let p = ent.path();
        if p.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        if let Some(i) = p.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<usize>().ok()) {
            idx.push(i);
        }
    }
    idx.sort_unstable();
    for (want, got) in idx.iter().enumerate() {
        if *got != want {
            return Err(Error::MalformedSample(format!(
                "{}: missing frame {}",
                dir.display(),
                frame_file(want, ext)
            )));
        }
    }
    Ok(idx.len())
}

fn load_seq<T: Send>(
    dir: &Path,
    ext: &str,
    count: Option<usize>,
    load: impl Fn(&Path) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let n = match count {
        Some(n) => n,
        None => count_sequence(dir, ext)?,
    };
    (0..n)
        .into_par_iter()
        .map(|i| {
            let p = dir.join(frame_file(i, ext));
            if !p.is_file() {
                return Err(Error::MalformedSample(format!(
                    "missing frame {}",
                    p.display()
                )));
            }
            load(&p)
        })
        .collect()
}

/// Reads `dir/%05d.png` frames; `count` of `None` takes every contiguous file.
pub fn read_frame_seq(dir: impl AsRef<Path>, count: Option<usize>) -> Result<Vec<Frame>> {
    load_seq(dir.as_ref(), "png", count, |p| read_frame(p))
}

pub fn read_mask_seq(dir: impl AsRef<Path>, count: Option<usize>) -> Result<Vec<Mask>> {
    load_seq(dir.as_ref(), "png", count, |p| read_mask(p))
}

pub fn read_flow_seq(dir: impl AsRef<Path>, count: Option<usize>) -> Result<Vec<FlowField>> {
    load_seq(dir.as_ref(), "flo", count, |p| read_flo(p))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn store_seq<T: Sync>(dir: &Path, ext: &str, items: &[T], store: impl Fn(&Path, &T) -> Result<()> + Sync) -> Result<()> {
    ensure_dir(dir)?;
    items
        .par_iter()
        .enumerate()
        .try_for_each(|(i, it)| store(&dir.join(frame_file(i, ext)), it))
}

pub fn write_frame_seq(dir: impl AsRef<Path>, frames: &[Frame]) -> Result<()> {
    store_seq(dir.as_ref(), "png", frames, |p, f| write_frame(p, f))
}

pub fn write_mask_seq(dir: impl AsRef<Path>, masks: &[Mask]) -> Result<()> {
    store_seq(dir.as_ref(), "png", masks, |p, m| write_mask(p, m))
}

pub fn write_flow_seq(dir: impl AsRef<Path>, flows: &[FlowField]) -> Result<()> {
    store_seq(dir.as_ref(), "flo", flows, |p, f| write_flo(p, f))
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<SampleManifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path, source })
}

fn write_manifest(dir: &Path, manifest: &SampleManifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn resize_flow(flow: &FlowField, width: usize, height: usize) -> FlowField {
    let (sw, sh) = flow.dims();
    if (sw, sh) == (width, height) {
        return flow.clone();
    }
    let (kx, ky) = (width as f32 / sw as f32, height as f32 / sh as f32);
    let data = (0..height)
        .flat_map(|y| (0..width).map(move |x| (x, y)))
        .map(|(x, y)| {
            let sx = (((x as f64 + 0.5) * sw as f64 / width as f64) as usize).min(sw - 1);
            let sy = (((y as f64 + 0.5) * sh as f64 / height as f64) as usize).min(sh - 1);
            let [u, v] = flow.get(sx, sy);
            [u * kx, v * ky]
        })
        .collect();
    FlowField::new(width, height, data).expect("resized flow has matching length")
}

/// Everything found in a sample directory.
#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub sample: VideoSample,
    pub manifest: SampleManifest,
    /// Stored harmonizer output, when `harmonized/` exists.
    pub harmonized: Option<Vec<Frame>>,
}

/// Loads a sample directory. Frame count comes from the manifest when
/// present, otherwise from the frame files.
pub fn read_sample(dir: impl AsRef<Path>, opts: LoadOptions) -> Result<LoadedSample> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::MalformedSample(format!("{} is not a directory", dir.display())));
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.is_file() {
        Some(read_manifest(dir)?)
    } else {
        None
    };
    let composite = dir.join(COMPOSITE_DIR);
    let real = dir.join(REAL_DIR);
    let frames_dir = if composite.is_dir() {
        composite
    } else if real.is_dir() {
        real.clone()
    } else {
        return Err(Error::MalformedSample(format!(
            "{}: neither {COMPOSITE_DIR}/ nor {REAL_DIR}/ found",
            dir.display()
        )));
    };
    let count = match &manifest {
        Some(m) => m.frames,
        None => count_sequence(&frames_dir, "png")?,
    };
    if count == 0 {
        return Err(Error::MalformedSample(format!("{}: no frames", dir.display())));
    }
    let mut frames = read_frame_seq(&frames_dir, Some(count))?;
    let mut masks = read_mask_seq(dir.join(MASKS_DIR), Some(count))?;
    let mut gt = if frames_dir != real && real.is_dir() {
        Some(read_frame_seq(&real, Some(count))?)
    } else {
        None
    };
    let flows_dir = dir.join(FLOWS_DIR);
    let mut flows = if flows_dir.is_dir() {
        Some(read_flow_seq(&flows_dir, Some(count - 1))?)
    } else {
        None
    };
    let harm_dir = dir.join(HARMONIZED_DIR);
    let mut harmonized = if harm_dir.is_dir() {
        Some(read_frame_seq(&harm_dir, Some(count))?)
    } else {
        None
    };
    if let Some((w, h)) = opts.resize {
        if w == 0 || h == 0 {
            return Err(Error::InvalidParameter(format!("resize target {w}x{h}")));
        }
        let rf = |v: &mut Vec<Frame>| v.iter_mut().for_each(|f| *f = resize_frame(f, w, h));
        rf(&mut frames);
        if let Some(g) = gt.as_mut() {
            rf(g);
        }
        if let Some(hm) = harmonized.as_mut() {
            rf(hm);
        }
        masks.iter_mut().for_each(|m| *m = resize_mask(m, w, h));
        if let Some(fl) = flows.as_mut() {
            fl.iter_mut().for_each(|f| *f = resize_flow(f, w, h));
        }
    }
    let id = manifest
        .as_ref()
        .map(|m| m.id.clone())
        .unwrap_or_else(|| dir_name(dir));
    let mut sample = VideoSample::new(id.clone(), frames, masks)?;
    if let Some(fl) = flows {
        sample = sample.with_flows(fl)?;
    }
    if let Some(g) = gt {
        sample = sample.with_ground_truth(g)?;
    }
    if let Some(hm) = &harmonized {
        if hm.len() != count || hm.iter().any(|f| f.dims() != sample.dims()) {
            return Err(Error::MalformedSample(format!(
                "{}: harmonized frames do not match the sample",
                dir.display()
            )));
        }
    }
    let manifest = manifest.unwrap_or(SampleManifest {
        id,
        frames: count,
        lut_id: None,
        review: String::new(),
    });
    Ok(LoadedSample {
        sample,
        manifest,
        harmonized,
    })
}

fn dir_name(dir: &Path) -> String {
    dir.canonicalize()
        .ok()
        .as_deref()
        .unwrap_or(dir)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sample".into())
}

/// Writes a sample directory. With ground truth, `frames` go to
/// `composite/` and ground truth to `real/`; otherwise `frames` go to
/// `real/`.
pub fn write_sample(
    dir: impl AsRef<Path>,
    sample: &VideoSample,
    lut_id: Option<&str>,
    harmonized: Option<&[Frame]>,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    sample.validate()?;
    ensure_dir(dir)?;
    match &sample.ground_truth {
        Some(gt) => {
            write_frame_seq(dir.join(REAL_DIR), gt)?;
            write_frame_seq(dir.join(COMPOSITE_DIR), &sample.frames)?;
        }
        None => write_frame_seq(dir.join(REAL_DIR), &sample.frames)?,
    }
    write_mask_seq(dir.join(MASKS_DIR), &sample.masks)?;
    if let Some(fl) = &sample.flows {
        write_flow_seq(dir.join(FLOWS_DIR), fl)?;
    }
    if let Some(hm) = harmonized {
        write_frame_seq(dir.join(HARMONIZED_DIR), hm)?;
    }
    write_manifest(
        dir,
        &SampleManifest {
            id: sample.id.clone(),
            frames: sample.len(),
            lut_id: lut_id.map(str::to_owned),
            review: String::new(),
        },
    )?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(n: usize) -> VideoSample {
        let frames: Vec<Frame> = (0..n)
            .map(|t| Frame::from_fn(6, 4, |x, y| [(x * 40) as f64, (y * 60) as f64, (t * 10) as f64]))
            .collect();
        let gt: Vec<Frame> = frames
            .iter()
            .map(|f| Frame::from_fn(6, 4, |x, y| {
                let p = f.get(x, y);
                [p[0], p[1], 255.0 - p[2]]
            }))
            .collect();
        let masks = (0..n).map(|t| Mask::from_fn(6, 4, |x, _| x >= t % 3)).collect();
        let flows = (1..n).map(|t| FlowField::constant(6, 4, t as f32 * 0.5, -0.25)).collect();
        VideoSample::new("clip", frames, masks)
            .unwrap()
            .with_flows(flows)
            .unwrap()
            .with_ground_truth(gt)
            .unwrap()
    }

    #[test]
    fn round_trip_with_flows() {
        let dir = tempfile::tempdir().unwrap();
        let s = clip(20);
        write_sample(dir.path(), &s, Some("lut_007"), None).unwrap();
        let back = read_sample(dir.path(), LoadOptions::default()).unwrap();
        assert_eq!(back.sample, s);
        assert_eq!(back.sample.flows.as_ref().unwrap().len(), 19);
        assert_eq!(back.manifest.lut_id.as_deref(), Some("lut_007"));
        assert!(back.harmonized.is_none());
    }

    #[test]
    fn missing_mask_names_frame() {
        let dir = tempfile::tempdir().unwrap();
        write_sample(dir.path(), &clip(4), None, None).unwrap();
        std::fs::remove_file(dir.path().join("masks/00002.png")).unwrap();
        let err = read_sample(dir.path(), LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("00002.png"), "{err}");
    }

    #[test]
    fn empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_sample(dir.path(), LoadOptions::default()).is_err());
        std::fs::create_dir(dir.path().join("real")).unwrap();
        assert!(read_sample(dir.path(), LoadOptions::default()).is_err());
    }

    #[test]
    fn gaps_are_reported_without_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let s = VideoSample::new("r", clip(3).frames, clip(3).masks).unwrap();
        write_sample(dir.path(), &s, None, None).unwrap();
        std::fs::remove_file(dir.path().join(MANIFEST_FILE)).unwrap();
        let back = read_sample(dir.path(), LoadOptions::default()).unwrap();
        assert_eq!(back.sample.len(), 3);
        assert!(back.sample.ground_truth.is_none());
        std::fs::remove_file(dir.path().join("real/00001.png")).unwrap();
        let err = read_sample(dir.path(), LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("00001.png"), "{err}");
    }

    #[test]
    fn resize_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let s = clip(3);
        write_sample(dir.path(), &s, None, Some(&s.frames)).unwrap();
        let opts = LoadOptions { resize: Some((3, 2)) };
        let back = read_sample(dir.path(), opts).unwrap();
        assert_eq!(back.sample.dims(), (3, 2));
        assert_eq!(back.harmonized.unwrap()[0].dims(), (3, 2));
        assert_eq!(back.sample.flows.unwrap()[0].get(0, 0), [0.25, -0.125]);
    }
}
