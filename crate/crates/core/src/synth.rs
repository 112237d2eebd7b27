//! Seeded synthetic test images: banded layouts with analytic ground truth,
//! block mosaics, and smooth blob fields with mild texture.

use crate::bench::{boundary_of, BoundaryMap};
use crate::image::{ImageBuffer, LabelMap};
use crate::rng::SplitMix64;

/// Vertical bands of the given intensities, widths as equal as possible
/// (remainder goes to the last band).
pub fn vertical_bands(width: u32, height: u32, values: &[u8]) -> ImageBuffer {
    assert!(!values.is_empty() && width >= values.len() as u32);
    let band = width / values.len() as u32;
    let data: Vec<u8> = (0..height)
        .flat_map(|_| {
            (0..width).map(move |x| {
                let k = ((x / band) as usize).min(values.len() - 1);
                values[k]
            })
        })
        .collect();
    ImageBuffer::new(width, height, 1, data).unwrap()
}

/// The ideal label map of [`vertical_bands`] (one region per band).
pub fn vertical_bands_labels(width: u32, height: u32, n_bands: u32) -> LabelMap {
    let band = width / n_bands;
    let labels: Vec<u32> = (0..height)
        .flat_map(|_| (0..width).map(move |x| (x / band).min(n_bands - 1) + 1))
        .collect();
    LabelMap::new(width, height, labels).unwrap()
}

/// Analytic boundary ground truth of [`vertical_bands`].
pub fn vertical_bands_truth(width: u32, height: u32, n_bands: u32) -> BoundaryMap {
    boundary_of(&vertical_bands_labels(width, height, n_bands))
}

/// Random mosaic of `block`-sized squares drawing intensities from the
/// palette. Adjacent same-value blocks fuse into larger flat areas.
pub fn block_mosaic(width: u32, height: u32, block: u32, palette: &[u8], seed: u64) -> ImageBuffer {
    assert!(block >= 1 && !palette.is_empty());
    let mut rng = SplitMix64::new(seed);
    let bw = width.div_ceil(block);
    let bh = height.div_ceil(block);
    let cells: Vec<u8> = (0..bw as usize * bh as usize)
        .map(|_| palette[(rng.next_u64() % palette.len() as u64) as usize])
        .collect();
    let data: Vec<u8> = (0..height)
        .flat_map(|y| {
            let cells = &cells;
            (0..width).map(move |x| cells[((y / block) * bw + x / block) as usize])
        })
        .collect();
    ImageBuffer::new(width, height, 1, data).unwrap()
}

/// Smooth random blob field plus low-amplitude coarse noise, a desk-scale
/// stand-in for a natural image: strong blob contours dominate the edge map
/// while the texture splits flat areas into many primitive segments.
///
/// `noise_cell` sets the texture scale in pixels (noise is bilinearly
/// upsampled from a coarse grid); `noise_amp` its peak amplitude.
pub fn blob_field(
    width: u32,
    height: u32,
    n_blobs: u32,
    noise_amp: f64,
    noise_cell: u32,
    seed: u64,
) -> ImageBuffer {
    let mut rng = SplitMix64::new(seed);
    let w = width as usize;
    let h = height as usize;

    struct Blob {
        cx: f64,
        cy: f64,
        sigma: f64,
        amp: f64,
    }
    let blobs: Vec<Blob> = (0..n_blobs)
        .map(|_| Blob {
            cx: rng.next_unit() * width as f64,
            cy: rng.next_unit() * height as f64,
            sigma: 8.0 + rng.next_unit() * 0.15 * width.min(height) as f64,
            amp: (rng.next_unit() - 0.5) * 90.0,
        })
        .collect();

    let cell = noise_cell.max(1) as usize;
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let grid: Vec<f64> = (0..gw * gh)
        .map(|_| (rng.next_unit() - 0.5) * 2.0 * noise_amp)
        .collect();

    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut v = 128.0;
            for b in &blobs {
                let dx = x as f64 - b.cx;
                let dy = y as f64 - b.cy;
                v += b.amp * (-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma)).exp();
            }
            // Bilinear sample of the coarse noise grid.
            let fx = x as f64 / cell as f64;
            let fy = y as f64 / cell as f64;
            let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
            let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
            let g = |gx: usize, gy: usize| grid[gy.min(gh - 1) * gw + gx.min(gw - 1)];
            let noise = g(x0, y0) * (1.0 - tx) * (1.0 - ty)
                + g(x0 + 1, y0) * tx * (1.0 - ty)
                + g(x0, y0 + 1) * (1.0 - tx) * ty
                + g(x0 + 1, y0 + 1) * tx * ty;
            data.push((v + noise).round().clamp(0.0, 255.0) as u8);
        }
    }
    ImageBuffer::new(width, height, 1, data).unwrap()
}

/// Natural-image stand-in at any size: smooth blobs for large-scale shading,
/// a few sharp-edged rectangles for strong contours, and faint coarse noise
/// for texture. The sharp edges dominate the normalized edge map, so the
/// texture ridges stay cheap to cross and the co-evolution runs a real
/// multi-iteration clustering.
pub fn scene(width: u32, height: u32, seed: u64) -> ImageBuffer {
    let mut rng = SplitMix64::new(seed);
    let base = blob_field(width, height, 2, 1.5, 2, rng.next_u64());
    let mut data: Vec<f64> = base.data.iter().map(|&v| v as f64).collect();
    for _ in 0..3 {
        let bw = width / 6 + (rng.next_u64() % (width as u64 / 4)) as u32;
        let bh = height / 6 + (rng.next_u64() % (height as u64 / 4)) as u32;
        let x0 = (rng.next_u64() % (width - bw).max(1) as u64) as u32;
        let y0 = (rng.next_u64() % (height - bh).max(1) as u64) as u32;
        let delta = if rng.next_u64() % 2 == 0 { 110.0 } else { -110.0 };
        for y in y0..(y0 + bh).min(height) {
            for x in x0..(x0 + bw).min(width) {
                data[(y * width + x) as usize] += delta;
            }
        }
    }
    let data = data
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    ImageBuffer::new(width, height, 1, data).unwrap()
}

/// RGB variant of [`scene`]: the same luminance structure with channel-wise
/// tints from a few extra soft blobs, so all three color components carry
/// signal.
pub fn scene_rgb(width: u32, height: u32, seed: u64) -> ImageBuffer {
    let mut rng = SplitMix64::new(seed);
    let luma = scene(width, height, rng.next_u64());
    struct Tint {
        cx: f64,
        cy: f64,
        sigma: f64,
        amp: [f64; 3],
    }
    let tints: Vec<Tint> = (0..4)
        .map(|_| Tint {
            cx: rng.next_unit() * width as f64,
            cy: rng.next_unit() * height as f64,
            sigma: 15.0 + rng.next_unit() * 0.2 * width.min(height) as f64,
            amp: [
                (rng.next_unit() - 0.5) * 90.0,
                (rng.next_unit() - 0.5) * 90.0,
                (rng.next_unit() - 0.5) * 90.0,
            ],
        })
        .collect();
    let mut data = Vec::with_capacity(width as usize * height as usize * 3);
    for y in 0..height {
        for x in 0..width {
            let base = luma.at(x, y, 0) as f64;
            let mut px = [base; 3];
            for t in &tints {
                let dx = x as f64 - t.cx;
                let dy = y as f64 - t.cy;
                let g = (-(dx * dx + dy * dy) / (2.0 * t.sigma * t.sigma)).exp();
                for c in 0..3 {
                    px[c] += t.amp[c] * g;
                }
            }
            for v in px {
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageBuffer::new(width, height, 3, data).unwrap()
}
