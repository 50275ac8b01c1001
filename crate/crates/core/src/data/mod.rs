//! Image I/O, preprocessing, masks, corruption and metrics.

mod codec;
mod corrupt;
mod image;
mod manifest;
mod mask;
mod metrics;
mod synthetic;
mod transform;

pub use codec::write_atomic;
pub use codec::{
    decode_image, decode_png, decode_ppm, encode_png, encode_ppm, load_image, save_image,
};
pub use corrupt::{channel_mean, corrupt, corrupt_tensor, Fill};
pub use image::{hflip, Image};
pub use manifest::{render_manifest, DatasetManifest, ManifestEntry, Split};
pub use mask::{make_mask, make_mask_with, Mask, MaskSpec, Task};
pub use metrics::{psnr, rmse};
pub use synthetic::{synth_image, write_corpus};
pub use transform::{
    center_crop, prepare_eval, prepare_train, random_crop, random_crop_with, resize_bilinear,
    resize_to, sample_bilinear, shortest_side_dims,
};
