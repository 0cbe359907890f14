//! Patch sampling from foreground regions and seeded augmentation.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{Image, Mask};

/// Side of the patches handed to the featurizer.
pub const OUTPUT_SIDE: usize = 224;

/// A valid window must be at least this foreground.
pub const FOREGROUND_QUOTA: f64 = 0.5;

/// Choices made by one augmentation pass, applied in field order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub crop_x: usize,
    pub crop_y: usize,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// Clockwise quarter turns, `0..4`.
    pub quarter_turns: u8,
}

impl AugmentPlan {
    /// Centre crop with no flips or rotation.
    pub fn identity(side: usize) -> Self {
        let off = side.saturating_sub(OUTPUT_SIDE) / 2;
        AugmentPlan {
            crop_x: off,
            crop_y: off,
            flip_horizontal: false,
            flip_vertical: false,
            quarter_turns: 0,
        }
    }

    pub fn draw(width: usize, height: usize, rng: &mut impl Rng) -> Self {
        AugmentPlan {
            crop_x: rng.random_range(0..=width - OUTPUT_SIDE),
            crop_y: rng.random_range(0..=height - OUTPUT_SIDE),
            flip_horizontal: rng.random_bool(0.5),
            flip_vertical: rng.random_bool(0.5),
            quarter_turns: rng.random_range(0..4u8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchImage {
    pub image: Image,
    /// Top-left corner of the window in the source raster.
    pub origin: (usize, usize),
    pub augmentations: Vec<AugmentPlan>,
}

/// Summed-area table over a boolean mask.
struct Integral {
    width: usize,
    sums: Vec<u32>,
}

impl Integral {
    fn new(mask: &Mask) -> Self {
        let w = mask.width() + 1;
        let mut sums = vec![0u32; w * (mask.height() + 1)];
        for y in 0..mask.height() {
            let mut row = 0u32;
            for x in 0..mask.width() {
                row += mask.get(x, y) as u32;
                sums[(y + 1) * w + x + 1] = sums[y * w + x + 1] + row;
            }
        }
        Integral { width: w, sums }
    }

    fn window(&self, x: usize, y: usize, side: usize) -> u32 {
        let w = self.width;
        let (x1, y1) = (x + side, y + side);
        self.sums[y1 * w + x1] + self.sums[y * w + x] - self.sums[y * w + x1] - self.sums[y1 * w + x]
    }
}

/// Top-left corners of every `side × side` window inside the image whose
/// foreground share meets [`FOREGROUND_QUOTA`].
pub fn valid_windows(mask: &Mask, side: usize) -> Vec<(usize, usize)> {
    if side == 0 || side > mask.width() || side > mask.height() {
        return Vec::new();
    }
    let integral = Integral::new(mask);
    let need = (FOREGROUND_QUOTA * (side * side) as f64).ceil() as u32;
    let mut out = Vec::new();
    for y in 0..=mask.height() - side {
        for x in 0..=mask.width() - side {
            if integral.window(x, y, side) >= need {
                out.push((x, y));
            }
        }
    }
    out
}

/// Draws `count` distinct valid windows uniformly at random.
pub fn sample_patches(
    image: &Image,
    mask: &Mask,
    count: usize,
    side: usize,
    seed: u64,
) -> Result<Vec<PatchImage>> {
    if (mask.width(), mask.height()) != (image.width(), image.height()) {
        return Err(Error::Size(format!(
            "mask {}×{} does not cover image {}×{}",
            mask.width(),
            mask.height(),
            image.width(),
            image.height()
        )));
    }
    let windows = valid_windows(mask, side);
    if windows.len() < count || count == 0 {
        return Err(Error::InsufficientForeground {
            found: windows.len(),
            required: count.max(1),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    index::sample(&mut rng, windows.len(), count)
        .into_iter()
        .map(|i| {
            let (x, y) = windows[i];
            Ok(PatchImage {
                image: image.crop(x, y, side, side)?,
                origin: (x, y),
                augmentations: Vec::new(),
            })
        })
        .collect()
}

pub fn apply_plan(patch: &PatchImage, plan: AugmentPlan) -> Result<PatchImage> {
    let img = &patch.image;
    if img.width() < OUTPUT_SIDE || img.height() < OUTPUT_SIDE {
        return Err(Error::Size(format!(
            "augmentation needs at least {OUTPUT_SIDE}×{OUTPUT_SIDE}, got {}×{}",
            img.width(),
            img.height()
        )));
    }
    let mut out = img.crop(plan.crop_x, plan.crop_y, OUTPUT_SIDE, OUTPUT_SIDE)?;
    if plan.flip_horizontal {
        out = out.flip_horizontal();
    }
    if plan.flip_vertical {
        out = out.flip_vertical();
    }
    out = out.rotate90(plan.quarter_turns);
    let mut augmentations = patch.augmentations.clone();
    augmentations.push(plan);
    Ok(PatchImage {
        image: out,
        origin: patch.origin,
        augmentations,
    })
}

/// Random crop to 224, independent 50% horizontal and vertical flips, then a
/// uniform quarter-turn rotation.
pub fn augment(patch: &PatchImage, seed: u64) -> Result<PatchImage> {
    let img = &patch.image;
    if img.width() < OUTPUT_SIDE || img.height() < OUTPUT_SIDE {
        return Err(Error::Size(format!(
            "augmentation needs at least {OUTPUT_SIDE}×{OUTPUT_SIDE}, got {}×{}",
            img.width(),
            img.height()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = AugmentPlan::draw(img.width(), img.height(), &mut rng);
    apply_plan(patch, plan)
}
