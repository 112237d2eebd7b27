//! Stage 4: (1,1+1) genetic merging of similar adjacent regions.
//!
//! The stage-3 partition becomes a region adjacency graph; a binary
//! chromosome over its edges encodes which boundaries survive (1) or are
//! removed (0). Mutation clears set bits with a probability that grows as
//! the incident regions' mean gray levels approach, and the single-parent,
//! single-child selection keeps whichever of parent/child scores the higher
//! area-weighted inter-region disparity.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::image::{ImageBuffer, LabelMap};
use crate::rng::SplitMix64;

/// Number of gray levels for 8-bit images.
pub const GRAY_LEVELS: u32 = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct RegionInfo {
    pub id: u32,
    pub pixel_count: u64,
    pub mean_gray: f64,
}

/// Region adjacency graph over a complete label map.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    /// Regions in ascending id order.
    pub regions: Vec<RegionInfo>,
    /// Unordered adjacent region pairs as indices into `regions`,
    /// sorted by (min id, max id).
    pub edges: Vec<(usize, usize)>,
    pub total_pixels: u64,
    pub gray_levels: u32,
}

/// Binary string aligned to `RegionGraph::edges`; `true` preserves the edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chromosome {
    pub bits: Vec<bool>,
}

impl Chromosome {
    pub fn all_ones(len: usize) -> Self {
        Self {
            bits: vec![true; len],
        }
    }
}

/// Builds the region graph of a complete (gap-free) label map, with mean
/// intensities taken from the grayscale image.
pub fn build_region_graph(labels: &LabelMap, gray: &ImageBuffer) -> Result<RegionGraph> {
    if labels.width != gray.width || labels.height != gray.height || gray.channels != 1 {
        return Err(Error::DimensionMismatch(format!(
            "labels {}x{} vs gray {}x{}x{}",
            labels.width, labels.height, gray.width, gray.height, gray.channels
        )));
    }
    let unlabeled = labels.unlabeled_count();
    if unlabeled > 0 {
        return Err(Error::IncompleteLabelMap(unlabeled));
    }

    let mut sums: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for (i, &l) in labels.labels.iter().enumerate() {
        let entry = sums.entry(l).or_insert((0, 0));
        entry.0 += 1;
        entry.1 += gray.data[i] as u64;
    }
    let regions: Vec<RegionInfo> = sums
        .iter()
        .map(|(&id, &(count, sum))| RegionInfo {
            id,
            pixel_count: count,
            mean_gray: sum as f64 / count as f64,
        })
        .collect();
    let index_of: BTreeMap<u32, usize> = regions
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id, i))
        .collect();

    let mut edge_set: BTreeSet<(u32, u32)> = BTreeSet::new();
    for y in 0..labels.height {
        for x in 0..labels.width {
            let l = labels.at(x, y);
            if x + 1 < labels.width {
                let r = labels.at(x + 1, y);
                if r != l {
                    edge_set.insert((l.min(r), l.max(r)));
                }
            }
            if y + 1 < labels.height {
                let b = labels.at(x, y + 1);
                if b != l {
                    edge_set.insert((l.min(b), l.max(b)));
                }
            }
        }
    }
    let edges = edge_set
        .into_iter()
        .map(|(a, b)| (index_of[&a], index_of[&b]))
        .collect();

    Ok(RegionGraph {
        regions,
        edges,
        total_pixels: labels.labels.len() as u64,
        gray_levels: GRAY_LEVELS,
    })
}

/// Merged-component label (1..K') per region index: connected components of
/// the region graph using cleared bits as merge links, numbered in order of
/// each component's smallest region id.
pub fn decode_components(chrom: &Chromosome, graph: &RegionGraph) -> Vec<u32> {
    assert_eq!(chrom.bits.len(), graph.edges.len(), "chromosome misaligned");
    let n = graph.regions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (k, &(a, b)) in graph.edges.iter().enumerate() {
        if !chrom.bits[k] {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut next = 1u32;
    let mut label_of_root: BTreeMap<usize, u32> = BTreeMap::new();
    let mut out = vec![0u32; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        let label = *label_of_root.entry(root).or_insert_with(|| {
            let l = next;
            next += 1;
            l
        });
        out[i] = label;
    }
    out
}

/// Applies the chromosome to a label map: every pixel's region is replaced by
/// its merged component, relabeled 1..K'.
pub fn decode(chrom: &Chromosome, graph: &RegionGraph, labels: &LabelMap) -> LabelMap {
    let comp = decode_components(chrom, graph);
    let map: BTreeMap<u32, u32> = graph
        .regions
        .iter()
        .zip(&comp)
        .map(|(r, &c)| (r.id, c))
        .collect();
    LabelMap {
        width: labels.width,
        height: labels.height,
        labels: labels.labels.iter().map(|l| map[l]).collect(),
    }
}

/// Area-weighted mean inter-region gray disparity of the decoded partition;
/// higher is fitter. A single region scores 0.
pub fn fitness(chrom: &Chromosome, graph: &RegionGraph) -> f64 {
    let comp = decode_components(chrom, graph);
    let k = comp.iter().copied().max().unwrap_or(0) as usize;
    if k <= 1 {
        return 0.0;
    }
    let mut pixels = vec![0u64; k + 1];
    let mut gray_sum = vec![0.0f64; k + 1];
    for (region, &c) in graph.regions.iter().zip(&comp) {
        pixels[c as usize] += region.pixel_count;
        gray_sum[c as usize] += region.mean_gray * region.pixel_count as f64;
    }
    let mean: Vec<f64> = (0..=k)
        .map(|c| {
            if pixels[c] > 0 {
                gray_sum[c] / pixels[c] as f64
            } else {
                0.0
            }
        })
        .collect();

    // Decoded adjacency: original edges whose endpoints land in distinct
    // components.
    let mut adjacent: BTreeSet<(u32, u32)> = BTreeSet::new();
    for &(a, b) in &graph.edges {
        let (ca, cb) = (comp[a], comp[b]);
        if ca != cb {
            adjacent.insert((ca.min(cb), ca.max(cb)));
        }
    }
    let mut disparity_sum = vec![0.0f64; k + 1];
    let mut degree = vec![0u32; k + 1];
    for &(a, b) in &adjacent {
        let d = (mean[a as usize] - mean[b as usize]).abs() / graph.gray_levels as f64;
        disparity_sum[a as usize] += d;
        disparity_sum[b as usize] += d;
        degree[a as usize] += 1;
        degree[b as usize] += 1;
    }

    let total = graph.total_pixels as f64;
    let mut acc = 0.0;
    for c in 1..=k {
        if degree[c] > 0 {
            let d_bar = disparity_sum[c] / degree[c] as f64;
            acc += (pixels[c] as f64 / total) * d_bar;
        }
    }
    acc / k as f64
}

/// Mutation probability of the edge at `edge_index`: 1 - |dm|/theta_p when
/// the incident original regions' mean gray levels differ by at most
/// theta_p, else 0.
pub fn merge_probability(graph: &RegionGraph, edge_index: usize, cfg: &PipelineConfig) -> f64 {
    let (a, b) = graph.edges[edge_index];
    let dm = (graph.regions[a].mean_gray - graph.regions[b].mean_gray).abs();
    if dm <= cfg.theta_p {
        1.0 - dm / cfg.theta_p
    } else {
        0.0
    }
}

/// One-directional mutation: each set bit is cleared with its merge
/// probability; cleared bits never flip back. One draw per set bit, in edge
/// index order.
pub fn mutate(
    chrom: &Chromosome,
    graph: &RegionGraph,
    cfg: &PipelineConfig,
    rng: &mut SplitMix64,
) -> Chromosome {
    let mut bits = chrom.bits.clone();
    for (k, bit) in bits.iter_mut().enumerate() {
        if !*bit {
            continue;
        }
        let rho = merge_probability(graph, k, cfg);
        let u = rng.next_unit();
        if u < rho {
            *bit = false;
        }
    }
    Chromosome { bits }
}

/// Runs the (1,1+1) GA from the all-ones chromosome for `ga_iters`
/// generations, keeping the parent on ties. Returns the final chromosome,
/// the decoded label map, and the accepted-fitness trace.
pub fn ga_run(
    graph: &RegionGraph,
    labels: &LabelMap,
    cfg: &PipelineConfig,
    rng: &mut SplitMix64,
) -> (Chromosome, LabelMap, Vec<f64>) {
    let mut parent = Chromosome::all_ones(graph.edges.len());
    let mut parent_fitness = fitness(&parent, graph);
    let mut trace = Vec::with_capacity(cfg.ga_iters as usize);
    for _ in 0..cfg.ga_iters {
        let child = mutate(&parent, graph, cfg, rng);
        let child_fitness = fitness(&child, graph);
        if child_fitness > parent_fitness {
            parent = child;
            parent_fitness = child_fitness;
        }
        trace.push(parent_fitness);
    }
    let decoded = decode(&parent, graph, labels);
    (parent, decoded, trace)
}
