//! Otsu thresholding and foreground masks.

use crate::error::{Error, Result};
use crate::preprocess::Image;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayHistogram {
    counts: [u64; 256],
}

impl GrayHistogram {
    pub fn new(counts: [u64; 256]) -> Self {
        GrayHistogram { counts }
    }

    pub fn from_image(image: &Image) -> Self {
        let mut counts = [0u64; 256];
        for y in 0..image.height() {
            for x in 0..image.width() {
                counts[image.gray_at(x, y) as usize] += 1;
            }
        }
        GrayHistogram { counts }
    }

    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OtsuThreshold {
    /// Pixels `<= threshold` form the dark class.
    pub threshold: u8,
    /// Set when every pixel has the same value and no cut separates anything.
    pub degenerate: bool,
}

/// Cut maximising the between-class variance `n0·n1·(μ0 − μ1)²` over all 256
/// candidates; ties go to the smallest cut.
pub fn otsu_threshold(hist: &GrayHistogram) -> Result<OtsuThreshold> {
    let total = hist.total();
    if total == 0 {
        return Err(Error::DegenerateInput("histogram is empty".into()));
    }
    let occupied: Vec<usize> = (0..256).filter(|&i| hist.counts[i] > 0).collect();
    if let [only] = occupied.as_slice() {
        return Ok(OtsuThreshold {
            threshold: *only as u8,
            degenerate: true,
        });
    }

    let sum_total: u128 = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| i as u128 * c as u128)
        .sum();
    let mut n0: u64 = 0;
    let mut s0: u128 = 0;
    let mut best = (0u8, f64::NEG_INFINITY);
    for t in 0..256usize {
        n0 += hist.counts[t];
        s0 += t as u128 * hist.counts[t] as u128;
        let n1 = total - n0;
        let var = if n0 == 0 || n1 == 0 {
            0.0
        } else {
            let mu0 = s0 as f64 / n0 as f64;
            let mu1 = (sum_total - s0) as f64 / n1 as f64;
            n0 as f64 * n1 as f64 * (mu0 - mu1) * (mu0 - mu1)
        };
        if var > best.1 {
            best = (t as u8, var);
        }
    }
    Ok(OtsuThreshold {
        threshold: best.0,
        degenerate: false,
    })
}

/// Tissue mask: `true` where the pixel is at or below the Otsu cut (bright
/// glass background lies above it). A single-valued image has no contrast and
/// is treated as all background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Size(format!(
                "mask {width}×{height} needs {} cells, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

pub fn foreground_mask(image: &Image) -> Result<(Mask, OtsuThreshold)> {
    let otsu = otsu_threshold(&GrayHistogram::from_image(image))?;
    let mut data = Vec::with_capacity(image.width() * image.height());
    for y in 0..image.height() {
        for x in 0..image.width() {
            data.push(!otsu.degenerate && image.gray_at(x, y) <= otsu.threshold);
        }
    }
    Ok((Mask::new(image.width(), image.height(), data)?, otsu))
}
