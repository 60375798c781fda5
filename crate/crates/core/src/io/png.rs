use std::path::Path;

use image::{ExtendedColorType, GrayImage, ImageFormat, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::frame::{Frame, Mask};

/// Gray level at or above which a mask pixel is foreground.
pub const MASK_THRESHOLD: u8 = 128;

fn decode(path: &Path) -> Result<image::DynamicImage> {
    let img_err = |source| Error::Image {
        path: path.to_path_buf(),
        source,
    };
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(img_err)
}

/// Rounds half away from zero and clamps to `[0, 255]`.
#[inline]
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, 255.0) as u8
}

pub fn read_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let img = decode(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Frame::new(w, h, img.into_raw().into_iter().map(f64::from).collect())
}

pub fn write_frame(path: impl AsRef<Path>, frame: &Frame) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = frame.data().iter().map(|&v| quantize(v)).collect();
    let img = RgbImage::from_raw(frame.width() as u32, frame.height() as u32, bytes)
        .ok_or_else(|| Error::format(path, "frame buffer does not match its dimensions"))?;
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let img = decode(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Mask::new(
        w,
        h,
        img.into_raw().into_iter().map(|v| v >= MASK_THRESHOLD).collect(),
    )
}

/// Writes foreground as 255 and background as 0.
pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes)
        .ok_or_else(|| Error::format(path, "mask buffer does not match its dimensions"))?;
    image::save_buffer_with_format(
        path,
        img.as_raw(),
        img.width(),
        img.height(),
        ExtendedColorType::L8,
        ImageFormat::Png,
    )
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Bilinear resize with pixel-center alignment.
pub fn resize_frame(frame: &Frame, width: usize, height: usize) -> Frame {
    let (sw, sh) = frame.dims();
    if (sw, sh) == (width, height) {
        return frame.clone();
    }
    let sx = sw as f64 / width as f64;
    let sy = sh as f64 / height as f64;
    Frame::from_fn(width, height, |x, y| {
        let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(sw - 1);
        let y1 = (y0 + 1).min(sh - 1);
        let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
        let (p00, p10, p01, p11) = (
            frame.get(x0, y0),
            frame.get(x1, y0),
            frame.get(x0, y1),
            frame.get(x1, y1),
        );
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = p00[c] * (1.0 - ax) + p10[c] * ax;
            let bot = p01[c] * (1.0 - ax) + p11[c] * ax;
            out[c] = top * (1.0 - ay) + bot * ay;
        }
        out
    })
}

/// Nearest-neighbor resize.
pub fn resize_mask(mask: &Mask, width: usize, height: usize) -> Mask {
    let (sw, sh) = mask.dims();
    if (sw, sh) == (width, height) {
        return mask.clone();
    }
    Mask::from_fn(width, height, |x, y| {
        let sx = (((x as f64 + 0.5) * sw as f64 / width as f64) as usize).min(sw - 1);
        let sy = (((y as f64 + 0.5) * sh as f64 / height as f64) as usize).min(sh - 1);
        mask.get(sx, sy)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_rule() {
        assert_eq!(quantize(255.7), 255);
        assert_eq!(quantize(100.5), 101);
        assert_eq!(quantize(100.49), 100);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(f64::NAN), 0);
    }

    #[test]
    fn frame_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.png");
        let f = Frame::from_fn(7, 5, |x, y| [(x * 30) as f64, (y * 50) as f64, 255.0]);
        write_frame(&p, &f).unwrap();
        assert_eq!(read_frame(&p).unwrap(), f);
        let g = Frame::filled(2, 2, [255.7, 100.5, -1.0]);
        write_frame(&p, &g).unwrap();
        assert_eq!(read_frame(&p).unwrap().at(0), [255.0, 101.0, 0.0]);
    }

    #[test]
    fn mask_threshold_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let raw = GrayImage::from_raw(3, 1, vec![127, 128, 255]).unwrap();
        raw.save(&p).unwrap();
        assert_eq!(read_mask(&p).unwrap().data(), &[false, true, true]);
        let m = Mask::from_fn(6, 4, |x, y| (x + y) % 3 == 0);
        write_mask(&p, &m).unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);
        GrayImage::from_raw(2, 2, vec![255; 4]).unwrap().save(&p).unwrap();
        assert_eq!(read_mask(&p).unwrap().foreground_count(), 4);
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_frame("/nonexistent/x.png").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.png"));
    }

    #[test]
    fn resize_shapes() {
        let f = Frame::from_fn(8, 4, |x, _| [x as f64; 3]);
        let r = resize_frame(&f, 4, 2);
        assert_eq!(r.dims(), (4, 2));
        assert!((r.get(0, 0)[0] - 0.5).abs() < 1e-12);
        let m = Mask::from_fn(8, 4, |x, _| x < 4);
        let rm = resize_mask(&m, 4, 2);
        assert_eq!(rm.foreground_count(), 4);
    }
}
