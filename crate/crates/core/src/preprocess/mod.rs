//! Raw-image path: background removal, patch sampling, augmentation and a
//! trainable featurizer producing patch features for bags.

mod featurizer;
mod image;
mod otsu;
mod sampling;

pub use featurizer::{Featurizer, DEFAULT_FEATURE_DIM, DEFAULT_HIDDEN, INPUT_LEN};
pub use image::Image;
pub use otsu::{foreground_mask, otsu_threshold, GrayHistogram, Mask, OtsuThreshold};
pub use sampling::{
    apply_plan, augment, sample_patches, valid_windows, AugmentPlan, PatchImage,
    FOREGROUND_QUOTA, OUTPUT_SIDE,
};

use crate::error::Result;

/// Mask, sample and augment one slide raster into `count` 224×224 patches.
/// Sampling uses `seed`; patch `i` is augmented with `seed + 1 + i`.
pub fn extract_patches(
    image: &Image,
    count: usize,
    window: usize,
    seed: u64,
) -> Result<Vec<PatchImage>> {
    let (mask, _) = foreground_mask(image)?;
    let patches = sample_patches(image, &mask, count, window, seed)?;
    patches
        .iter()
        .enumerate()
        .map(|(i, p)| augment(p, seed.wrapping_add(1 + i as u64)))
        .collect()
}
