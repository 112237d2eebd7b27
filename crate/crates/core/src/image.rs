use crate::error::{Error, Result};

/// 8-bit image, row-major, 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if !(channels == 1 || channels == 3) {
            return Err(Error::UnsupportedChannels(channels));
        }
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "image dimensions must be >= 1, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "data length {} != width*height*channels = {expected}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        let n = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; n])
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Channel `c` of pixel (x, y).
    #[inline]
    pub fn at(&self, x: u32, y: u32, c: u8) -> u8 {
        let idx = (y as usize * self.width as usize + x as usize) * self.channels as usize
            + c as usize;
        self.data[idx]
    }
}

/// Row-major region identifiers over an image. Labels are 1-based; 0 is the
/// "unlabeled" sentinel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32, labels: Vec<u32>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if labels.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "labels length {} != width*height = {expected}",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn unlabeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 0).count()
    }

    /// Number of distinct nonzero labels.
    pub fn region_count(&self) -> usize {
        let mut seen: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

/// Paints every pixel with the per-channel mean color of its region, for the
/// "segments in average color" visualization. Unlabeled pixels keep their
/// original color.
pub fn mean_color_image(img: &ImageBuffer, labels: &LabelMap) -> Result<ImageBuffer> {
    if img.width != labels.width || img.height != labels.height {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs labels {}x{}",
            img.width, img.height, labels.width, labels.height
        )));
    }
    let ch = img.channels as usize;
    let max_label = labels.labels.iter().copied().max().unwrap_or(0) as usize;
    let mut sums = vec![0u64; (max_label + 1) * ch];
    let mut counts = vec![0u64; max_label + 1];
    for (i, &l) in labels.labels.iter().enumerate() {
        counts[l as usize] += 1;
        for c in 0..ch {
            sums[l as usize * ch + c] += img.data[i * ch + c] as u64;
        }
    }
    let mut data = img.data.clone();
    for (i, &l) in labels.labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let n = counts[l as usize];
        for c in 0..ch {
            let mean = (sums[l as usize * ch + c] as f64 / n as f64).round();
            data[i * ch + c] = mean.clamp(0.0, 255.0) as u8;
        }
    }
    ImageBuffer::new(img.width, img.height, img.channels, data)
}
