//! On-disk formats: PNG frames and masks, Middlebury `.flo` flows, LUT
//! files and the sample directory layout.

mod flo;
mod lutfile;
mod png;
mod sample;

pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_MAGIC};
pub use lutfile::{
    parse_cube, parse_native_lut, read_cube, read_lut, read_native_lut, render_cube,
    render_native_lut, write_cube, write_lut, write_native_lut, CUBE_SCALE,
};
pub use png::{
    quantize, read_frame, read_mask, resize_frame, resize_mask, write_frame, write_mask,
    MASK_THRESHOLD,
};
pub use sample::{
    frame_file, read_flow_seq, read_frame_seq, read_manifest, read_mask_seq, read_sample,
    write_flow_seq, write_frame_seq, write_mask_seq, write_sample, LoadOptions, LoadedSample,
    SampleManifest,
    COMPOSITE_DIR, FLOWS_DIR, HARMONIZED_DIR, MANIFEST_FILE, MASKS_DIR, REAL_DIR,
};
