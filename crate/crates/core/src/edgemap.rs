//! Grayscale conversion and the edge probability matrix.
//!
//! The edge map is the soft, normalized gradient magnitude of the blurred
//! image — a continuous topography for the watershed flood and the source of
//! boundary energies for the first co-evolution iteration. Binary edge output
//! (non-max suppression, hysteresis) would create vast flat plateaus and is
//! deliberately not used.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Per-pixel edge energy in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub width: u32,
    pub height: u32,
    pub energy: Vec<f64>,
}

impl EdgeMap {
    pub fn new(width: u32, height: u32, energy: Vec<f64>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if energy.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "energy length {} != width*height = {expected}",
                energy.len()
            )));
        }
        Ok(Self {
            width,
            height,
            energy,
        })
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.energy[y as usize * self.width as usize + x as usize]
    }
}

/// Luma conversion: round(0.299 R + 0.587 G + 0.114 B). A 1-channel image is
/// returned unchanged.
pub fn to_grayscale(img: &ImageBuffer) -> Result<ImageBuffer> {
    match img.channels {
        1 => Ok(img.clone()),
        3 => {
            let mut data = Vec::with_capacity(img.pixel_count());
            for px in img.data.chunks_exact(3) {
                let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
                data.push(y.round().clamp(0.0, 255.0) as u8);
            }
            ImageBuffer::new(img.width, img.height, 1, data)
        }
        c => Err(Error::UnsupportedChannels(c)),
    }
}

/// 5-tap Gaussian, sigma = 1, normalized.
fn gaussian_kernel() -> [f64; 5] {
    let mut k = [0.0; 5];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - 2.0;
        *v = (-d * d / 2.0).exp();
    }
    let sum: f64 = k.iter().sum();
    k.map(|v| v / sum)
}

#[inline]
fn clamp_coord(v: i64, max: u32) -> usize {
    v.clamp(0, max as i64 - 1) as usize
}

/// Edge probability matrix of a grayscale image: Gaussian blur (sigma 1.0,
/// 5x5, replicated borders), Sobel 3x3 gradient magnitude, then division by
/// the image-wide maximum. A constant image yields all zeros.
pub fn edge_energy(gray: &ImageBuffer) -> Result<EdgeMap> {
    if gray.channels != 1 {
        return Err(Error::UnsupportedChannels(gray.channels));
    }
    let w = gray.width as usize;
    let h = gray.height as usize;
    let k = gaussian_kernel();

    // Separable blur: horizontal then vertical pass.
    let mut hpass = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                let sx = clamp_coord(x as i64 + i as i64 - 2, gray.width);
                acc += kv * gray.data[y * w + sx] as f64;
            }
            hpass[y * w + x] = acc;
        }
    }
    let mut blurred = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                let sy = clamp_coord(y as i64 + i as i64 - 2, gray.height);
                acc += kv * hpass[sy * w + x];
            }
            blurred[y * w + x] = acc;
        }
    }

    let sample = |x: i64, y: i64| blurred[clamp_coord(y, gray.height) * w + clamp_coord(x, gray.width)];
    let mut energy = vec![0.0f64; w * h];
    let mut max = 0.0f64;
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            // Paired differences so flat areas cancel exactly.
            let gx = (sample(x + 1, y - 1) - sample(x - 1, y - 1))
                + 2.0 * (sample(x + 1, y) - sample(x - 1, y))
                + (sample(x + 1, y + 1) - sample(x - 1, y + 1));
            let gy = (sample(x - 1, y + 1) - sample(x - 1, y - 1))
                + 2.0 * (sample(x, y + 1) - sample(x, y - 1))
                + (sample(x + 1, y + 1) - sample(x + 1, y - 1));
            let mag = (gx * gx + gy * gy).sqrt();
            energy[y as usize * w + x as usize] = mag;
            if mag > max {
                max = mag;
            }
        }
    }
    if max > 0.0 {
        for v in &mut energy {
            *v /= max;
        }
    }
    EdgeMap::new(gray.width, gray.height, energy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(width: u32, height: u32, data: Vec<u8>) -> ImageBuffer {
        ImageBuffer::new(width, height, 1, data).unwrap()
    }

    #[test]
    fn grayscale_white_black_red() {
        let img = ImageBuffer::new(3, 1, 3, vec![255, 255, 255, 0, 0, 0, 255, 0, 0]).unwrap();
        let g = to_grayscale(&img).unwrap();
        assert_eq!(g.data, vec![255, 0, 76]); // round(0.299*255) = 76
    }

    #[test]
    fn grayscale_passthrough_for_single_channel() {
        let img = gray(2, 2, vec![1, 2, 3, 4]);
        let g = to_grayscale(&img).unwrap();
        assert_eq!(g, img);
    }

    #[test]
    fn constant_image_has_zero_energy() {
        let img = ImageBuffer::filled(8, 8, 1, 77).unwrap();
        let e = edge_energy(&img).unwrap();
        assert!(e.energy.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_stays_in_unit_interval() {
        let mut rng = crate::rng::SplitMix64::new(5);
        let data: Vec<u8> = (0..16 * 16).map(|_| (rng.next_u64() & 0xFF) as u8).collect();
        let e = edge_energy(&gray(16, 16, data)).unwrap();
        assert!(e.energy.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let max = e.energy.iter().cloned().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12, "non-constant image must peak at 1");
    }

    /// Independent oracle: direct (non-separable) 5x5 Gaussian convolution
    /// followed by direct Sobel, for comparison against the separable path.
    fn edge_energy_oracle(img: &ImageBuffer) -> Vec<f64> {
        let w = img.width as usize;
        let h = img.height as usize;
        let k = gaussian_kernel();
        let px = |x: i64, y: i64| {
            img.data[clamp_coord(y, img.height) * w + clamp_coord(x, img.width)] as f64
        };
        let mut blurred = vec![0.0; w * h];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = 0.0;
                for dy in -2i64..=2 {
                    for dx in -2i64..=2 {
                        acc += k[(dy + 2) as usize] * k[(dx + 2) as usize] * px(x + dx, y + dy);
                    }
                }
                blurred[y as usize * w + x as usize] = acc;
            }
        }
        let b = |x: i64, y: i64| blurred[clamp_coord(y, img.height) * w + clamp_coord(x, img.width)];
        let mut energy = vec![0.0; w * h];
        let mut max = 0.0f64;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let gx = (b(x + 1, y - 1) - b(x - 1, y - 1))
                    + 2.0 * (b(x + 1, y) - b(x - 1, y))
                    + (b(x + 1, y + 1) - b(x - 1, y + 1));
                let gy = (b(x - 1, y + 1) - b(x - 1, y - 1))
                    + 2.0 * (b(x, y + 1) - b(x, y - 1))
                    + (b(x + 1, y + 1) - b(x + 1, y - 1));
                let m = (gx * gx + gy * gy).sqrt();
                energy[y as usize * w + x as usize] = m;
                max = max.max(m);
            }
        }
        if max > 0.0 {
            for v in &mut energy {
                *v /= max;
            }
        }
        energy
    }

    #[test]
    fn vertical_step_peaks_at_the_step() {
        // Left half 0, right half 255; step between columns 7 and 8.
        let w = 16u32;
        let data: Vec<u8> = (0..16 * 16)
            .map(|i| if (i % 16) < 8 { 0 } else { 255 })
            .collect();
        let img = gray(w, 16, data);
        let e = edge_energy(&img).unwrap();

        // The two step-adjacent columns carry the maximal (=1) energy.
        let mid = 8u32;
        assert!((e.at(7, mid) - 1.0).abs() < 1e-12);
        assert!((e.at(8, mid) - 1.0).abs() < 1e-12);
        // Far from the step the energy vanishes (blur reach 2 + Sobel reach 1).
        assert!(e.at(0, mid) < 1e-12);
        assert!(e.at(15, mid) < 1e-12);

        // Full-map agreement with the independent direct-convolution oracle.
        let oracle = edge_energy_oracle(&img);
        for (a, b) in e.energy.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn separable_matches_direct_oracle_on_random_images() {
        let mut rng = crate::rng::SplitMix64::new(99);
        for _ in 0..20 {
            let w = 3 + (rng.next_u64() % 14) as u32;
            let h = 3 + (rng.next_u64() % 14) as u32;
            let data: Vec<u8> = (0..w as usize * h as usize)
                .map(|_| (rng.next_u64() & 0xFF) as u8)
                .collect();
            let img = gray(w, h, data);
            let e = edge_energy(&img).unwrap();
            let oracle = edge_energy_oracle(&img);
            for (a, b) in e.energy.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn energy_invariant_under_constant_shift() {
        let mut rng = crate::rng::SplitMix64::new(17);
        let data: Vec<u8> = (0..12 * 12).map(|_| (rng.next_u64() % 200) as u8).collect();
        let img = gray(12, 12, data.clone());
        let shifted = gray(12, 12, data.iter().map(|&v| v + 55).collect());
        let a = edge_energy(&img).unwrap();
        let b = edge_energy(&shifted).unwrap();
        for (x, y) in a.energy.iter().zip(&b.energy) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn reflection_equivariance() {
        let mut rng = crate::rng::SplitMix64::new(23);
        let (w, h) = (11u32, 7u32);
        let data: Vec<u8> = (0..w as usize * h as usize)
            .map(|_| (rng.next_u64() & 0xFF) as u8)
            .collect();
        let img = gray(w, h, data.clone());
        let mirrored: Vec<u8> = (0..h)
            .flat_map(|y| (0..w).rev().map(move |x| (x, y)))
            .map(|(x, y)| data[(y * w + x) as usize])
            .collect();
        let m = gray(w, h, mirrored);
        let e = edge_energy(&img).unwrap();
        let em = edge_energy(&m).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert!((e.at(x, y) - em.at(w - 1 - x, y)).abs() < 1e-9);
            }
        }
    }
}
