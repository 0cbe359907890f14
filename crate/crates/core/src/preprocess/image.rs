//! 8-bit rasters and binary PGM/PPM I/O.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved row-major 8-bit raster with one (gray) or three (RGB)
/// channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Size(format!("unsupported channel count {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Size(format!("empty image {width}×{height}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Size(format!(
                "{width}×{height}×{channels} image needs {} bytes, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, pixel: &[u8]) -> Result<Self> {
        let data = pixel.repeat(width * height);
        Self::new(width, height, pixel.len(), data)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Luma with weights 0.299/0.587/0.114, rounded to nearest.
    pub fn gray_at(&self, x: usize, y: usize) -> u8 {
        let p = self.pixel(x, y);
        if self.channels == 1 {
            p[0]
        } else {
            let l = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            l.round().clamp(0.0, 255.0) as u8
        }
    }

    pub fn to_gray(&self) -> Image {
        let mut data = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                data.push(self.gray_at(x, y));
            }
        }
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Image> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Size(format!(
                "crop {width}×{height} at ({x0}, {y0}) exceeds {}×{} image",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(width * height * c);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + width * c]);
        }
        Image::new(width, height, c, data)
    }

    pub fn flip_horizontal(&self) -> Image {
        self.remap(self.width, self.height, |x, y| (self.width - 1 - x, y))
    }

    pub fn flip_vertical(&self) -> Image {
        self.remap(self.width, self.height, |x, y| (x, self.height - 1 - y))
    }

    /// Rotates by `k · 90°` clockwise.
    pub fn rotate90(&self, k: u8) -> Image {
        match k % 4 {
            0 => self.clone(),
            1 => self.remap(self.height, self.width, |x, y| (y, self.height - 1 - x)),
            2 => self.remap(self.width, self.height, |x, y| {
                (self.width - 1 - x, self.height - 1 - y)
            }),
            _ => self.remap(self.height, self.width, |x, y| (self.width - 1 - y, x)),
        }
    }

    /// Builds a `w × h` image whose pixel `(x, y)` is `self[src(x, y)]`.
    fn remap(&self, w: usize, h: usize, src: impl Fn(usize, usize) -> (usize, usize)) -> Image {
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = src(x, y);
                data.extend_from_slice(self.pixel(sx, sy));
            }
        }
        Image {
            width: w,
            height: h,
            channels: c,
            data,
        }
    }

    /// Binary PGM (`P5`) for gray images, PPM (`P6`) for RGB.
    pub fn to_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_pnm(bytes: &[u8]) -> Result<Image> {
        let mut pos = 0;
        let mut next_token = || -> Result<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Size("truncated PNM header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = next_token()?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => {
                return Err(Error::Size(format!(
                    "unsupported PNM magic `{other}` (binary P5/P6 only)"
                )))
            }
        };
        let mut num = |what: &str| -> Result<usize> {
            let t = next_token()?;
            t.parse()
                .map_err(|_| Error::Size(format!("bad PNM {what} `{t}`")))
        };
        let width = num("width")?;
        let height = num("height")?;
        let maxval = num("maxval")?;
        if maxval != 255 {
            return Err(Error::Size(format!("PNM maxval {maxval} unsupported (need 255)")));
        }
        // exactly one whitespace byte separates the header from the raster
        let start = pos + 1;
        let len = width * height * channels;
        if bytes.len() < start + len {
            return Err(Error::Size(format!(
                "PNM raster truncated: need {len} bytes after header"
            )));
        }
        Image::new(width, height, channels, bytes[start..start + len].to_vec())
    }

    pub fn read_pnm(path: &Path) -> Result<Image> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pnm(&bytes)
    }

    pub fn write_pnm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pnm()).map_err(|e| Error::io(path, e))
    }
}
