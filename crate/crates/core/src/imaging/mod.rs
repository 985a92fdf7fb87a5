//! Image decoding and preprocessing, attribution-map files and heatmaps.

mod heatmap;
mod image;
mod map;
mod raw;

pub use heatmap::{diverging_color, heatmap_png, heatmap_rgb, render_heatmap, Overlay};
pub use image::{
    decode_image, encode_png_rgb, encode_ppm, load_image, load_raw_image, normalize,
    resize_bilinear, resize_to_spec, to_rgb8, ModelImage,
};
pub use map::{AttributionMap, MapMeta};
pub use raw::{decode_raw, encode_raw, read_raw, write_raw};
