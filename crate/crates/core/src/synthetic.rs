//! Seeded synthetic clips and color tables for tests, benchmarks and demos.
//!
//! A clip is a static smooth background with one textured elliptical object
//! translating across it. The object's texture is fixed in object
//! coordinates, so neighboring frames show mostly the same colors shifted
//! by a sub-pixel amount. Object and background share a base color, as an
//! object filmed in the scene would. Flows are exact backward flows.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame::{FlowField, Frame, Mask, Rgb, VideoSample};
use crate::lut::{Lut3D, LATTICE_SPAN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    /// Object semi-axes as fractions of the frame size.
    pub object_size: (f64, f64),
    /// Object speed in pixels per frame.
    pub speed: f64,
    /// Amplitude of the fine texture layered on the smooth object colors.
    pub grain: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            frames: 20,
            seed: 0,
            object_size: (0.3, 0.25),
            speed: 0.7,
            grain: 12.0,
        }
    }
}

/// Sum of a few random plane waves, one field per channel.
#[derive(Debug, Clone)]
struct Texture {
    base: Rgb,
    waves: Vec<[(f64, f64, f64, f64); 3]>,
}

impl Texture {
    fn new(rng: &mut ChaCha8Rng, waves: usize, freq: (f64, f64), amp: f64) -> Self {
        let base = [
            rng.random_range(80.0..175.0),
            rng.random_range(80.0..175.0),
            rng.random_range(80.0..175.0),
        ];
        let waves = (0..waves)
            .map(|_| {
                [(); 3].map(|_| {
                    let f = rng.random_range(freq.0..freq.1);
                    let th = rng.random_range(0.0..TAU);
                    (f * th.cos(), f * th.sin(), rng.random_range(0.0..TAU), amp * rng.random_range(0.5..1.0))
                })
            })
            .collect();
        Self { base, waves }
    }

    fn eval(&self, u: f64, v: f64) -> Rgb {
        let mut out = self.base;
        for w in &self.waves {
            for c in 0..3 {
                let (kx, ky, ph, a) = w[c];
                out[c] += a * (kx * u + ky * v + ph).sin();
            }
        }
        out
    }
}

/// A real (un-composited) clip with masks and backward flows.
pub fn synthetic_clip(cfg: &ClipConfig) -> Result<VideoSample> {
    if cfg.width < 4 || cfg.height < 4 || cfg.frames == 0 {
        return Err(Error::InvalidParameter(format!(
            "synthetic clip of {}x{}x{}",
            cfg.width, cfg.height, cfg.frames
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let (ax, ay) = (cfg.object_size.0 * w, cfg.object_size.1 * h);
    // Wave frequencies are given in cycles across the frame or the object so
    // that each texture averages out near its base color.
    let per = |cycles: f64, span: f64| TAU * cycles / span;
    let bg = Texture::new(&mut rng, 3, (per(1.0, w.max(h)), per(3.0, w.max(h))), 30.0);
    let mut smooth = Texture::new(&mut rng, 3, (per(1.5, 2.0 * ax.max(ay)), per(4.0, 2.0 * ax.max(ay))), 30.0);
    // Object and background share the scene illumination.
    smooth.base = bg.base;
    let mut grain = Texture::new(&mut rng, 4, (0.6, 1.6), cfg.grain);
    grain.base = [0.0; 3];
    let heading = rng.random_range(0.0..TAU);
    let (vx, vy) = (cfg.speed * heading.cos(), cfg.speed * heading.sin());
    let travel = cfg.speed * (cfg.frames - 1) as f64;
    let (cx0, cy0) = (
        w / 2.0 - vx / cfg.speed.max(1e-12) * travel / 2.0,
        h / 2.0 - vy / cfg.speed.max(1e-12) * travel / 2.0,
    );
    let center = |t: usize| (cx0 + vx * t as f64, cy0 + vy * t as f64);
    let inside = |x: f64, y: f64, (cx, cy): (f64, f64)| {
        let (dx, dy) = ((x - cx) / ax, (y - cy) / ay);
        dx * dx + dy * dy <= 1.0
    };

    let mut frames = Vec::with_capacity(cfg.frames);
    let mut masks = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let c = center(t);
        let mask = Mask::from_fn(cfg.width, cfg.height, |x, y| inside(x as f64 + 0.5, y as f64 + 0.5, c));
        let frame = Frame::from_fn(cfg.width, cfg.height, |x, y| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let col = if mask.get(x, y) {
                let (u, v) = (px - c.0, py - c.1);
                let s = smooth.eval(u, v);
                let g = grain.eval(u, v);
                [s[0] + g[0], s[1] + g[1], s[2] + g[2]]
            } else {
                bg.eval(px, py)
            };
            col.map(|v| v.clamp(0.0, 255.0))
        });
        frames.push(frame);
        masks.push(mask);
    }
    let flows = (1..cfg.frames)
        .map(|t| {
            let c = center(t);
            let data = (0..cfg.height)
                .flat_map(|y| (0..cfg.width).map(move |x| (x, y)))
                .map(|(x, y)| {
                    if inside(x as f64 + 0.5, y as f64 + 0.5, c) {
                        [-vx as f32, -vy as f32]
                    } else {
                        [0.0, 0.0]
                    }
                })
                .collect();
            FlowField::new(cfg.width, cfg.height, data)
        })
        .collect::<Result<Vec<_>>>()?;
    VideoSample::new(format!("synthetic_{}", cfg.seed), frames, masks)?.with_flows(flows)
}

/// A dense, smooth, monotone color table: per-channel gain and offset, a
/// small channel mix and a gentle sinusoidal bend. Outputs stay in
/// `[0, 255]` for inputs in `[0, 255]`.
pub fn smooth_lut(bins: usize, seed: u64, strength: f64) -> Result<Lut3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gain: [f64; 3] = [(); 3].map(|_| 1.0 + strength * rng.random_range(-0.25..0.25));
    let offset: [f64; 3] = [(); 3].map(|_| strength * rng.random_range(-25.0..25.0));
    let mix = strength * rng.random_range(-0.08..0.08);
    let bend: [f64; 3] = [(); 3].map(|_| strength * rng.random_range(-6.0..6.0));
    let d = LATTICE_SPAN / bins.max(1) as f64;
    Lut3D::from_fn(bins, |r, g, b| {
        let c = [r as f64 * d, g as f64 * d, b as f64 * d];
        let mean = (c[0] + c[1] + c[2]) / 3.0;
        let mut out = [0.0; 3];
        for k in 0..3 {
            let x = c[k] + mix * (mean - c[k]);
            out[k] = (gain[k] * (x - 128.0) + 128.0 + offset[k] + bend[k] * (TAU * x / 256.0).sin())
                .clamp(0.0, 255.0);
        }
        out
    })
}
