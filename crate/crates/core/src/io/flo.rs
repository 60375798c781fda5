//! Middlebury `.flo`: little-endian float magic `202021.25`, int32 width,
//! int32 height, then row-major interleaved float32 `(u, v)`.

use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::frame::FlowField;

pub const FLO_MAGIC: f32 = 202021.25;
const HEADER_LEN: usize = 12;

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + flow.data().len() * 8);
    out.write_f32::<LittleEndian>(FLO_MAGIC).unwrap();
    out.write_i32::<LittleEndian>(flow.width() as i32).unwrap();
    out.write_i32::<LittleEndian>(flow.height() as i32).unwrap();
    for [u, v] in flow.data() {
        out.write_f32::<LittleEndian>(*u).unwrap();
        out.write_f32::<LittleEndian>(*v).unwrap();
    }
    out
}

/// Parses `.flo` bytes; `path` only labels errors.
pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            path,
            format!("truncated header: {} bytes, need {HEADER_LEN}", bytes.len()),
        ));
    }
    let mut cur = Cursor::new(bytes);
    let magic = cur.read_f32::<LittleEndian>().unwrap();
    if magic != FLO_MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic {magic} at byte 0 (expected {FLO_MAGIC})"),
        ));
    }
    let w = cur.read_i32::<LittleEndian>().unwrap();
    let h = cur.read_i32::<LittleEndian>().unwrap();
    if w <= 0 || h <= 0 {
        return Err(Error::format(
            path,
            format!("invalid dimensions {w}x{h} at byte 4"),
        ));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(path, format!("dimensions {w}x{h} overflow")))?;
    if bytes.len() < expected {
        return Err(Error::format(
            path,
            format!(
                "truncated payload: file ends at byte {} but {w}x{h} needs {expected}",
                bytes.len()
            ),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(
            path,
            format!("{} trailing bytes from byte {expected}", bytes.len() - expected),
        ));
    }
    let mut data = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        let u = cur.read_f32::<LittleEndian>().unwrap();
        let v = cur.read_f32::<LittleEndian>().unwrap();
        data.push([u, v]);
    }
    FlowField::new(w, h, data)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes, path)
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_flo(flow)).map_err(|e| Error::io(path, e))
}
