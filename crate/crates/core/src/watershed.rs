//! Stage 1: Meyer flooding of the edge map into primitive segments.
//!
//! Every pixel ends up in exactly one basin; ridge pixels are absorbed into
//! the basin that first reaches them (priority queue ordered by energy with
//! FIFO tie-break, seeds pushed in ascending basin id). The ridge energies
//! survive in the [`BoundarySet`] as the "obstacles" between segments.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::sync::Arc;

use crate::edgemap::EdgeMap;
use crate::error::{Error, Result};
use crate::image::{ImageBuffer, LabelMap};

/// Lifecycle of a primitive segment through co-evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentState {
    Active,
    Matured,
    Absorbed,
}

/// One watershed region with its spatial and color feature vectors.
///
/// `s = [center x, half length, center y, half width]` of the surrounding
/// rectangle, in pixel-center coordinates; `p` holds the per-channel mean
/// color of the member pixels in its first `channels` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveSegment {
    pub id: u32,
    /// Member pixels; shared so the evolving state clones cheaply.
    pub pixels: Arc<Vec<(u32, u32)>>,
    pub s: [f64; 4],
    pub p: [f64; 3],
    /// Color vector arity: 1 (gray) or 3 (RGB).
    pub channels: u8,
    /// Status pointer: 1 - mean interaction weight over the neighborhood.
    pub lambda: f64,
    pub state: SegmentState,
    /// Zone label, 0 while unlabeled.
    pub label: u32,
    /// Id of the segment this one was absorbed into, once absorbed.
    pub absorbed_into: Option<u32>,
}

impl PrimitiveSegment {
    /// The color vector as a slice of its actual arity.
    #[inline]
    pub fn color(&self) -> &[f64] {
        &self.p[..self.channels as usize]
    }
}

/// Boundary pixels between adjacent primitive segments, as the edge energies
/// of the 4-adjacent cross-label pixel pairs. Stored once per unordered pair.
#[derive(Debug, Clone, Default)]
pub struct BoundarySet {
    pairs: BTreeMap<(u32, u32), Vec<f64>>,
}

impl BoundarySet {
    /// Records one boundary pixel's energy between segments `a` and `b`.
    pub fn insert(&mut self, a: u32, b: u32, energy: f64) {
        let key = (a.min(b), a.max(b));
        self.pairs.entry(key).or_default().push(energy);
    }

    /// Boundary energies between `a` and `b`, in either order.
    pub fn energies(&self, a: u32, b: u32) -> Option<&[f64]> {
        self.pairs
            .get(&(a.min(b), a.max(b)))
            .map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u32, u32), &Vec<f64>)> {
        self.pairs.iter()
    }
}

const NEIGH4: [(i64, i64); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

/// Floods the edge map and returns contiguous basin labels 1..K.
///
/// Seeds are the regional minimum plateaus: 4-connected components of pixels
/// with no strictly lower 4-neighbor. Growth order is (energy, insertion
/// sequence); seed neighbors are pushed in ascending basin id so equal-energy
/// ridge pixels fall to the smaller basin.
pub fn watershed_flood(edges: &EdgeMap) -> LabelMap {
    let w = edges.width as usize;
    let h = edges.height as usize;
    let n = w * h;
    let e = &edges.energy;
    let mut labels = vec![0u32; n];

    let neighbors = |idx: usize| {
        let x = (idx % w) as i64;
        let y = (idx / w) as i64;
        NEIGH4.iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            (nx >= 0 && nx < w as i64 && ny >= 0 && ny < h as i64)
                .then(|| (ny as usize) * w + nx as usize)
        })
    };

    // Regional minima: no strictly lower 4-neighbor.
    let mut is_min = vec![false; n];
    for idx in 0..n {
        is_min[idx] = neighbors(idx).all(|nb| e[nb] >= e[idx]);
    }

    // Seed one basin per 4-connected minima component, ids in row-major
    // order of first discovery; remember members in discovery order.
    let mut basins: Vec<Vec<usize>> = Vec::new();
    for idx in 0..n {
        if !is_min[idx] || labels[idx] != 0 {
            continue;
        }
        let id = basins.len() as u32 + 1;
        let mut members = Vec::new();
        let mut queue = VecDeque::from([idx]);
        labels[idx] = id;
        while let Some(cur) = queue.pop_front() {
            members.push(cur);
            for nb in neighbors(cur) {
                if is_min[nb] && labels[nb] == 0 {
                    labels[nb] = id;
                    queue.push_back(nb);
                }
            }
        }
        basins.push(members);
    }

    // Meyer flood. Energy bits order the same as the (non-negative) floats.
    let mut heap: BinaryHeap<Reverse<(u64, u64, usize, u32)>> = BinaryHeap::new();
    let mut seq = 0u64;
    let push = |heap: &mut BinaryHeap<_>, seq: &mut u64, target: usize, label: u32| {
        heap.push(Reverse((e[target].to_bits(), *seq, target, label)));
        *seq += 1;
    };
    for (b, members) in basins.iter().enumerate() {
        let id = b as u32 + 1;
        for &idx in members {
            for nb in neighbors(idx) {
                if labels[nb] == 0 {
                    push(&mut heap, &mut seq, nb, id);
                }
            }
        }
    }
    while let Some(Reverse((_, _, idx, label))) = heap.pop() {
        if labels[idx] != 0 {
            continue;
        }
        labels[idx] = label;
        for nb in neighbors(idx) {
            if labels[nb] == 0 {
                push(&mut heap, &mut seq, nb, label);
            }
        }
    }

    LabelMap {
        width: edges.width,
        height: edges.height,
        labels,
    }
}

/// Builds the per-region feature vectors and the inter-region boundary set.
///
/// The rectangle is the tight bounding box over pixel centers:
/// `s(1) = (x_min+x_max)/2`, `s(2) = (x_max-x_min)/2`, likewise for y. The
/// boundary energy of a cross-label pixel pair is the max edge energy of the
/// two facing pixels.
pub fn extract_primitives(
    labels: &LabelMap,
    img: &ImageBuffer,
    edges: &EdgeMap,
) -> Result<(Vec<PrimitiveSegment>, BoundarySet)> {
    if labels.width != img.width
        || labels.height != img.height
        || labels.width != edges.width
        || labels.height != edges.height
    {
        return Err(Error::DimensionMismatch(format!(
            "labels {}x{}, image {}x{}, edges {}x{}",
            labels.width, labels.height, img.width, img.height, edges.width, edges.height
        )));
    }

    let ch = img.channels as usize;
    let max_label = labels.labels.iter().copied().max().unwrap_or(0) as usize;

    struct Acc {
        pixels: Vec<(u32, u32)>,
        min_x: u32,
        max_x: u32,
        min_y: u32,
        max_y: u32,
        color_sum: [f64; 3],
    }
    let mut accs: Vec<Option<Acc>> = (0..=max_label).map(|_| None).collect();

    for y in 0..labels.height {
        for x in 0..labels.width {
            let l = labels.at(x, y) as usize;
            let acc = accs[l].get_or_insert_with(|| Acc {
                pixels: Vec::new(),
                min_x: x,
                max_x: x,
                min_y: y,
                max_y: y,
                color_sum: [0.0; 3],
            });
            acc.pixels.push((x, y));
            acc.min_x = acc.min_x.min(x);
            acc.max_x = acc.max_x.max(x);
            acc.min_y = acc.min_y.min(y);
            acc.max_y = acc.max_y.max(y);
            for c in 0..ch {
                acc.color_sum[c] += img.at(x, y, c as u8) as f64;
            }
        }
    }

    let mut segments = Vec::new();
    for (id, acc) in accs.into_iter().enumerate().skip(1) {
        let Some(acc) = acc else { continue };
        let count = acc.pixels.len() as f64;
        let s = [
            (acc.min_x + acc.max_x) as f64 / 2.0,
            (acc.max_x - acc.min_x) as f64 / 2.0,
            (acc.min_y + acc.max_y) as f64 / 2.0,
            (acc.max_y - acc.min_y) as f64 / 2.0,
        ];
        let mut p = [0.0f64; 3];
        for c in 0..ch {
            p[c] = acc.color_sum[c] / count;
        }
        segments.push(PrimitiveSegment {
            id: id as u32,
            pixels: Arc::new(acc.pixels),
            s,
            p,
            channels: ch as u8,
            lambda: 1.0,
            state: SegmentState::Active,
            label: 0,
            absorbed_into: None,
        });
    }

    let mut boundaries = BoundarySet::default();
    for y in 0..labels.height {
        for x in 0..labels.width {
            let l = labels.at(x, y);
            if x + 1 < labels.width {
                let r = labels.at(x + 1, y);
                if r != l {
                    boundaries.insert(l, r, edges.at(x, y).max(edges.at(x + 1, y)));
                }
            }
            if y + 1 < labels.height {
                let b = labels.at(x, y + 1);
                if b != l {
                    boundaries.insert(l, b, edges.at(x, y).max(edges.at(x, y + 1)));
                }
            }
        }
    }

    Ok((segments, boundaries))
}
