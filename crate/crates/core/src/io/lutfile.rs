//! LUT files.
//!
//! The native format is line-oriented text:
//!
//! ```text
//! LUTHARM-LUT 1
//! BINS 2
//! 0 0 0 1.5
//! null 128 0 0
//! ...
//! ```
//!
//! One line per entry in red-fastest order. A live entry is `r g b weight`;
//! a null entry is `null r g b` and keeps its stored output. Numbers use the
//! shortest representation that parses back to the same `f64`.
//!
//! `.cube` files carry `LUT_3D_SIZE N` with `N = B + 1` and outputs divided
//! by the lattice span, so the identity table exports entry `(i, j, k)` as
//! `(i, j, k) / B`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::Rgb;
use crate::lut::{Lut3D, LATTICE_SPAN};

const NATIVE_MAGIC: &str = "LUTHARM-LUT 1";

/// Divisor between internal entry outputs and `.cube` values.
pub const CUBE_SCALE: f64 = LATTICE_SPAN;

pub fn render_native_lut(lut: &Lut3D) -> String {
    let mut out = String::with_capacity(lut.len() * 32);
    writeln!(out, "{NATIVE_MAGIC}").unwrap();
    writeln!(out, "BINS {}", lut.bins()).unwrap();
    for (e, w) in lut.entries().iter().zip(lut.weights()) {
        if *w == 0.0 {
            writeln!(out, "null {} {} {}", e[0], e[1], e[2]).unwrap();
        } else {
            writeln!(out, "{} {} {} {}", e[0], e[1], e[2], w).unwrap();
        }
    }
    out
}

fn parse_f64(tok: &str, path: &Path, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::format(path, format!("line {line}: invalid number {tok:?}")))
}

/// Parses native LUT text; `path` only labels errors.
pub fn parse_native_lut(text: &str, path: &Path) -> Result<Lut3D> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, NATIVE_MAGIC)) => {}
        Some((_, other)) => {
            return Err(Error::format(
                path,
                format!("line 1: expected {NATIVE_MAGIC:?}, found {other:?}"),
            ))
        }
        None => return Err(Error::format(path, "empty file")),
    }
    let bins = match lines.next() {
        Some((n, l)) => {
            let v = l
                .strip_prefix("BINS ")
                .ok_or_else(|| Error::format(path, format!("line {n}: expected BINS")))?;
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|b| *b >= 1)
                .ok_or_else(|| Error::format(path, format!("line {n}: invalid bin count {v:?}")))?
        }
        None => return Err(Error::format(path, "missing BINS line")),
    };
    let total = (bins + 1).pow(3);
    let mut entries = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for (n, l) in lines {
        if l.is_empty() {
            continue;
        }
        if entries.len() == total {
            return Err(Error::format(
                path,
                format!("line {n}: more than {total} entries"),
            ));
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        let (vals, w) = match toks.as_slice() {
            ["null", r, g, b] => ([*r, *g, *b], 0.0),
            [r, g, b, w] => {
                let w = parse_f64(w, path, n)?;
                if !(w.is_finite() && w > 0.0) {
                    return Err(Error::format(
                        path,
                        format!("line {n}: weight must be positive, found {w}"),
                    ));
                }
                ([*r, *g, *b], w)
            }
            _ => {
                return Err(Error::format(
                    path,
                    format!("line {n}: expected `r g b weight` or `null r g b`"),
                ))
            }
        };
        let mut e: Rgb = [0.0; 3];
        for (c, t) in vals.iter().enumerate() {
            e[c] = parse_f64(t, path, n)?;
        }
        entries.push(e);
        weights.push(w);
    }
    if entries.len() != total {
        return Err(Error::format(
            path,
            format!(
                "expected {total} entries for {bins} bins, found {}",
                entries.len()
            ),
        ));
    }
    Lut3D::from_parts(bins, entries, weights)
}

pub fn read_native_lut(path: impl AsRef<Path>) -> Result<Lut3D> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_native_lut(&text, path)
}

pub fn write_native_lut(path: impl AsRef<Path>, lut: &Lut3D) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_native_lut(lut)).map_err(|e| Error::io(path, e))
}

/// Renders `.cube` text. Null entries are written as identity outputs; their
/// indices are returned.
pub fn render_cube(lut: &Lut3D) -> (String, Vec<usize>) {
    let mut out = String::with_capacity(lut.len() * 36);
    writeln!(out, "LUT_3D_SIZE {}", lut.size()).unwrap();
    let mut filled = Vec::new();
    for i in 0..lut.len() {
        let e = if lut.is_null(i) {
            filled.push(i);
            lut.indexing_color(i)
        } else {
            lut.entry(i)
        };
        writeln!(
            out,
            "{:.9} {:.9} {:.9}",
            e[0] / CUBE_SCALE,
            e[1] / CUBE_SCALE,
            e[2] / CUBE_SCALE
        )
        .unwrap();
    }
    (out, filled)
}

/// Parses `.cube` text into a dense table with `B = N - 1`.
pub fn parse_cube(text: &str, path: &Path) -> Result<Lut3D> {
    let mut size: Option<usize> = None;
    let mut entries: Vec<Rgb> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let mut toks = l.split_whitespace();
        let head = toks.next().unwrap();
        match head {
            "TITLE" => continue,
            "LUT_1D_SIZE" => {
                return Err(Error::format(path, format!("line {n}: 1D LUTs are not supported")))
            }
            "LUT_3D_SIZE" => {
                if size.is_some() {
                    return Err(Error::format(path, format!("line {n}: duplicate LUT_3D_SIZE")));
                }
                let v = toks.next().unwrap_or("");
                let s = v.parse::<usize>().ok().filter(|s| *s >= 2).ok_or_else(|| {
                    Error::format(path, format!("line {n}: invalid LUT_3D_SIZE {v:?}"))
                })?;
                size = Some(s);
                continue;
            }
            "DOMAIN_MIN" | "DOMAIN_MAX" => {
                let want = if head == "DOMAIN_MIN" { 0.0 } else { 1.0 };
                let vals: Vec<f64> = toks
                    .map(|t| parse_f64(t, path, n))
                    .collect::<Result<_>>()?;
                if vals.len() != 3 || vals.iter().any(|v| *v != want) {
                    return Err(Error::format(
                        path,
                        format!("line {n}: only the default {head} {want} {want} {want} is supported"),
                    ));
                }
                continue;
            }
            _ => {}
        }
        let Some(s) = size else {
            return Err(Error::format(path, format!("line {n}: data before LUT_3D_SIZE")));
        };
        let vals: Vec<f64> = l
            .split_whitespace()
            .map(|t| parse_f64(t, path, n))
            .collect::<Result<_>>()?;
        if vals.len() != 3 {
            return Err(Error::format(
                path,
                format!("line {n}: expected 3 values, found {}", vals.len()),
            ));
        }
        if entries.len() == s * s * s {
            return Err(Error::format(path, format!("line {n}: more than {} entries", s * s * s)));
        }
        entries.push([vals[0] * CUBE_SCALE, vals[1] * CUBE_SCALE, vals[2] * CUBE_SCALE]);
    }
    let s = size.ok_or_else(|| Error::format(path, "missing LUT_3D_SIZE"))?;
    if entries.len() != s * s * s {
        return Err(Error::format(
            path,
            format!("expected {} entries for size {s}, found {}", s * s * s, entries.len()),
        ));
    }
    let weights = vec![1.0; entries.len()];
    Lut3D::from_parts(s - 1, entries, weights)
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<Lut3D> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cube(&text, path)
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".nulls");
    PathBuf::from(s)
}

/// Writes a `.cube` file. When the table has null entries they are exported
/// as identity, a warning is logged and `<path>.nulls` lists them as
/// `index r g b` lattice coordinates. Returns the number of filled entries.
pub fn write_cube(path: impl AsRef<Path>, lut: &Lut3D) -> Result<usize> {
    let path = path.as_ref();
    let (text, filled) = render_cube(lut);
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    if filled.is_empty() {
        if side.exists() {
            std::fs::remove_file(&side).map_err(|e| Error::io(&side, e))?;
        }
        return Ok(0);
    }
    log::warn!(
        "{}: {} null entries exported as identity, listed in {}",
        path.display(),
        filled.len(),
        side.display()
    );
    let mut list = String::new();
    for &i in &filled {
        let [r, g, b] = lut.coords(i);
        writeln!(list, "{i} {r} {g} {b}").unwrap();
    }
    std::fs::write(&side, list).map_err(|e| Error::io(&side, e))?;
    Ok(filled.len())
}

fn is_cube(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("cube"))
}

/// Reads a LUT, choosing `.cube` or the native format by extension.
pub fn read_lut(path: impl AsRef<Path>) -> Result<Lut3D> {
    let path = path.as_ref();
    if is_cube(path) {
        read_cube(path)
    } else {
        read_native_lut(path)
    }
}

pub fn write_lut(path: impl AsRef<Path>, lut: &Lut3D) -> Result<()> {
    let path = path.as_ref();
    if is_cube(path) {
        write_cube(path, lut).map(|_| ())
    } else {
        write_native_lut(path, lut)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("t.lut")
    }

    #[test]
    fn native_round_trip_keeps_nulls() {
        let mut lut = Lut3D::identity(2).unwrap();
        let mut weights = lut.weights().to_vec();
        weights[3] = 0.0;
        weights[10] = 0.25;
        let mut entries = lut.entries().to_vec();
        entries[5] = [0.1, -1e-300, 1.0 / 3.0];
        lut = Lut3D::from_parts(2, entries, weights).unwrap();
        let text = render_native_lut(&lut);
        assert!(text.contains("null 0 128 0"));
        let back = parse_native_lut(&text, p()).unwrap();
        assert_eq!(back, lut);
        assert_eq!(back.null_count(), 1);
    }

    #[test]
    fn native_errors_carry_line_numbers() {
        let good = render_native_lut(&Lut3D::identity(1).unwrap());
        let bad = good.replacen("LUTHARM-LUT 1", "LUT 2", 1);
        assert!(parse_native_lut(&bad, p()).unwrap_err().to_string().contains("line 1"));
        let bad = good.replacen("0 0 0 1", "0 x 0 1", 1);
        assert!(parse_native_lut(&bad, p()).unwrap_err().to_string().contains("line 3"));
        let short: String = good.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(parse_native_lut(&short, p()).unwrap_err().to_string().contains("expected 8"));
        let extra = format!("{good}1 1 1 1\n");
        assert!(parse_native_lut(&extra, p()).is_err());
        assert!(parse_native_lut("", p()).is_err());
    }

    #[test]
    fn identity_cube_values() {
        for bins in [1, 2, 4, 8, 32] {
            let lut = Lut3D::identity(bins).unwrap();
            let (text, filled) = render_cube(&lut);
            assert!(filled.is_empty());
            let mut rows = text.lines();
            assert_eq!(rows.next().unwrap(), format!("LUT_3D_SIZE {}", bins + 1));
            for (i, row) in rows.enumerate() {
                let [r, g, b] = lut.coords(i);
                let v: Vec<f64> = row.split(' ').map(|t| t.parse().unwrap()).collect();
                for (x, k) in v.iter().zip([r, g, b]) {
                    assert!((x - k as f64 / bins as f64).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn cube_import_sets_bins() {
        let text = "TITLE \"x\"\n# c\nDOMAIN_MIN 0 0 0\nDOMAIN_MAX 1 1 1\nLUT_3D_SIZE 2\n\
                    0 0 0\n1 0 0\n0 1 0\n1 1 0\n0 0 1\n1 0 1\n0 1 1\n1 1 1\n";
        let lut = parse_cube(text, Path::new("a.cube")).unwrap();
        assert_eq!(lut.bins(), 1);
        assert_eq!(lut, Lut3D::identity(1).unwrap());
    }

    #[test]
    fn cube_rejections() {
        let c = Path::new("a.cube");
        assert!(parse_cube("LUT_1D_SIZE 4\n", c).is_err());
        assert!(parse_cube("LUT_3D_SIZE 2\n0 0 0\n", c)
            .unwrap_err()
            .to_string()
            .contains("expected 8"));
        assert!(parse_cube("DOMAIN_MAX 2 2 2\nLUT_3D_SIZE 2\n", c).is_err());
        assert!(parse_cube("0 0 0\n", c).is_err());
    }

    #[test]
    fn cube_export_fills_nulls_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.cube");
        let mut w = vec![1.0; 27];
        w[13] = 0.0;
        let lut = Lut3D::from_parts(2, vec![[7.0; 3]; 27], w).unwrap();
        assert_eq!(write_cube(&path, &lut).unwrap(), 1);
        let side = std::fs::read_to_string(dir.path().join("n.cube.nulls")).unwrap();
        assert_eq!(side.trim(), "13 1 1 1");
        let back = read_lut(&path).unwrap();
        assert_eq!(back.entry(13), [128.0; 3]);
        assert_eq!(back.entry(0), [7.0; 3]);
    }

    proptest! {
        #[test]
        fn native_file_round_trip(bins in 1usize..4, seed in any::<u64>()) {
            let mut s = seed;
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            };
            let n = (bins + 1).pow(3);
            let entries: Vec<Rgb> = (0..n).map(|_| [next() * 300.0 - 20.0, next(), next() * 1e-7]).collect();
            let weights: Vec<f64> = (0..n).map(|_| if next() < 0.3 { 0.0 } else { next() + 1e-3 }).collect();
            let lut = Lut3D::from_parts(bins, entries, weights).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("x.lut");
            write_lut(&path, &lut).unwrap();
            prop_assert_eq!(read_lut(&path).unwrap(), lut);
        }
    }
}
