//! Stage 2: iterated co-evolution of primitive segments.
//!
//! Each iteration recomputes interaction weights inside every segment's
//! dynamic neighborhood, moves segments toward similar neighbors, shrinks
//! their rectangles, homogenizes colors, and resolves the status pointer:
//! strongly adapted segments mature (freeze), unadaptable ones are absorbed
//! by the nearest viable segment. Matured segments that are tightly connected
//! and collectively large enough become the cores of the initial zones.
//!
//! `step` is a pure function of the previous state: every read comes from the
//! t buffer, every write lands in the t+1 buffer, so segments can be updated
//! in any order (or in parallel) with bit-identical results.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::watershed::{BoundarySet, PrimitiveSegment, SegmentState};

/// Rectangle-to-rectangle spatial distance: axis overlap deficits, summed.
/// Zero iff the rectangles overlap or touch on both axes.
#[inline]
pub fn spatial_distance(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let dx = (a[0] - b[0]).abs() - (a[1] + b[1]);
    let dy = (a[2] - b[2]).abs() - (a[3] + b[3]);
    dx.max(0.0) + dy.max(0.0)
}

/// Manhattan distance between color vectors.
#[inline]
pub fn color_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn initial_weight_raw(dp: f64, energies: Option<&[f64]>, cfg: &PipelineConfig) -> f64 {
    if dp > cfg.theta_p {
        return 0.0;
    }
    match energies {
        Some(energies) => {
            let hardest = energies
                .iter()
                .map(|&e| 1.0 - (-e / cfg.sigma_w).exp())
                .fold(f64::MIN, f64::max);
            1.0 - hardest
        }
        None => 0.0,
    }
}

/// First-iteration interaction weight: how passable the watershed boundary
/// between two adjacent segments is. Non-adjacent or color-incompatible
/// pairs weigh 0.
pub fn initial_weight(
    a: &PrimitiveSegment,
    b: &PrimitiveSegment,
    boundaries: &BoundarySet,
    cfg: &PipelineConfig,
) -> f64 {
    initial_weight_raw(
        color_distance(a.color(), b.color()),
        boundaries.energies(a.id, b.id),
        cfg,
    )
}

fn interaction_weight_raw(d: f64, dp: f64, cfg: &PipelineConfig) -> f64 {
    if dp > cfg.theta_p {
        return 0.0;
    }
    1.0 - (d / (2.0 * cfg.r) + dp / (2.0 * cfg.theta_p))
}

/// Interaction weight for t >= 1: proximity and color similarity, both
/// normalized to contribute half. Zero when the colors differ by more than
/// `theta_p`. Callers keep `spatial_distance <= r` (the neighborhood
/// contract), which bounds the result to [0, 1].
pub fn interaction_weight(
    a: &PrimitiveSegment,
    b: &PrimitiveSegment,
    cfg: &PipelineConfig,
) -> f64 {
    interaction_weight_raw(
        spatial_distance(&a.s, &b.s),
        color_distance(a.color(), b.color()),
        cfg,
    )
}

/// A labeled zone: the matured, tightly connected core that later collects
/// migrants in stage 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    /// 1-based zone label T_k.
    pub label: u32,
    /// Matured primitive segments forming the immutable core, ascending id.
    pub core_ids: Vec<u32>,
    /// Core plus migrants; filled when stage 3 finishes.
    pub member_ids: Vec<u32>,
    /// Mean of the core segments' rectangle centers.
    pub center: (f64, f64),
}

/// Mean core center, from the final stage-2 spatial vectors.
pub fn zone_center(core_ids: &[u32], segments: &[PrimitiveSegment]) -> (f64, f64) {
    let n = core_ids.len() as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for &id in core_ids {
        let seg = seg_by_id(segments, id).expect("core id must exist");
        cx += seg.s[0];
        cy += seg.s[2];
    }
    (cx / n, cy / n)
}

pub fn seg_by_id(segments: &[PrimitiveSegment], id: u32) -> Option<&PrimitiveSegment> {
    segments
        .binary_search_by_key(&id, |s| s.id)
        .ok()
        .map(|i| &segments[i])
}

/// State of the co-evolution at iteration t.
#[derive(Debug, Clone, PartialEq)]
pub struct CoevolutionState {
    pub segments: Vec<PrimitiveSegment>,
    pub iteration: usize,
    pub matured_history: Vec<usize>,
    /// Weights computed in the latest step, keyed by unordered id pair.
    pub weights: BTreeMap<(u32, u32), f64>,
}

/// Per-segment outcome of one iteration; plain data so the commit moves and
/// drops are free.
#[derive(Clone, Copy)]
struct Update {
    s: [f64; 4],
    p: [f64; 3],
    lambda: f64,
}

/// One candidate of the windowed queries, with the hot per-segment data
/// copied inline so scans stay sequential in memory.
#[derive(Clone, Copy)]
struct IndexEntry {
    s: [f64; 4],
    p: [f64; 3],
    id: u32,
    idx: usize,
}

fn make_entries(
    segments: &[PrimitiveSegment],
    indices: impl Iterator<Item = usize>,
) -> Vec<IndexEntry> {
    indices
        .map(|i| {
            let seg = &segments[i];
            IndexEntry {
                s: seg.s,
                p: seg.p,
                id: seg.id,
                idx: i,
            }
        })
        .collect()
}

/// Extent value below which 98% of the entries fall; the rest would blow
/// every search window open and are handled exhaustively instead.
fn percentile_98(values: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let k = (values.len() * 98 / 100).min(values.len() - 1);
    *values
        .select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap())
        .1
}

const BAND_ROWS: f64 = 16.0;

/// Slack absorbing f32 rounding in the prefilter so it never rejects a true
/// neighbor; survivors are re-checked in f64.
const PREFILTER_SLACK: f32 = 0.05;

/// Band of entries around one y range, sorted by center x. `pos` mirrors
/// `entries` as compact `[cx, ex, cy, ey]` rows so the hot scan touches 16
/// bytes per candidate instead of the full entry.
struct Band {
    pos: Vec<[f32; 4]>,
    entries: Vec<IndexEntry>,
    max_ex: f64,
}

/// Neighbor-query index: entries bucketed into horizontal bands by center y
/// and sorted by center x inside each band, so a radius query scans only a
/// small contiguous slice per nearby band. Entries with outsized extents
/// live in `big` and are scanned for every query.
struct BandIndex {
    bands: Vec<Band>,
    big: Vec<IndexEntry>,
    min_cy: f64,
    max_ey: f64,
    arity: usize,
}

impl BandIndex {
    fn new(segments: &[PrimitiveSegment], indices: impl Iterator<Item = usize>) -> Self {
        let arity = segments.first().map_or(1, |s| s.channels as usize);
        let all = make_entries(segments, indices);

        let mut exs: Vec<f64> = all.iter().map(|e| e.s[1]).collect();
        let mut eys: Vec<f64> = all.iter().map(|e| e.s[3]).collect();
        let cut_x = percentile_98(&mut exs);
        let cut_y = percentile_98(&mut eys);
        let (banded, big): (Vec<IndexEntry>, Vec<IndexEntry>) = all
            .into_iter()
            .partition(|e| e.s[1] <= cut_x && e.s[3] <= cut_y);

        let min_cy = banded.iter().map(|e| e.s[2]).fold(f64::INFINITY, f64::min);
        let max_cy = banded
            .iter()
            .map(|e| e.s[2])
            .fold(f64::NEG_INFINITY, f64::max);
        let max_ey = banded.iter().map(|e| e.s[3]).fold(0.0, f64::max);
        let n_bands = if banded.is_empty() {
            0
        } else {
            ((max_cy - min_cy) / BAND_ROWS) as usize + 1
        };
        let mut bands: Vec<Band> = (0..n_bands)
            .map(|_| Band {
                pos: Vec::new(),
                entries: Vec::new(),
                max_ex: 0.0,
            })
            .collect();
        for e in banded {
            let b = (((e.s[2] - min_cy) / BAND_ROWS) as usize).min(n_bands - 1);
            bands[b].entries.push(e);
        }
        for band in &mut bands {
            band.entries.sort_unstable_by(|a, b| {
                a.s[0].partial_cmp(&b.s[0]).unwrap().then(a.idx.cmp(&b.idx))
            });
            band.max_ex = band.entries.iter().map(|e| e.s[1]).fold(0.0, f64::max);
            band.pos = band
                .entries
                .iter()
                .map(|e| [e.s[0] as f32, e.s[1] as f32, e.s[2] as f32, e.s[3] as f32])
                .collect();
        }

        Self {
            bands,
            big,
            min_cy,
            max_ey,
            arity,
        }
    }

    /// Visits every entry that may lie within `r` of the rectangle `s`, in a
    /// fixed deterministic order (big list first, then bands top to bottom,
    /// each left to right). A compact f32 prefilter with slack trims the
    /// scan; it only ever admits extra candidates, never drops one.
    fn for_candidates(&self, s: &[f64; 4], r: f64, mut visit: impl FnMut(&IndexEntry)) {
        for e in &self.big {
            visit(e);
        }
        if self.bands.is_empty() {
            return;
        }
        let reach_y = r + s[3] + self.max_ey;
        let lo_f = (s[2] - reach_y - self.min_cy) / BAND_ROWS;
        let hi_f = (s[2] + reach_y - self.min_cy) / BAND_ROWS;
        if hi_f < 0.0 || lo_f >= self.bands.len() as f64 {
            return;
        }
        let lo = lo_f.max(0.0) as usize;
        let hi = (hi_f as usize).min(self.bands.len() - 1);
        let q = [s[0] as f32, s[1] as f32, s[2] as f32, s[3] as f32];
        let r_slack = r as f32 + PREFILTER_SLACK;
        for band in &self.bands[lo..=hi] {
            let reach_x = r + s[1] + band.max_ex;
            let start = band.entries.partition_point(|e| e.s[0] < s[0] - reach_x);
            let end = band.entries.partition_point(|e| e.s[0] <= s[0] + reach_x);
            for (pos, e) in band.pos[start..end].iter().zip(&band.entries[start..end]) {
                let dx = (q[0] - pos[0]).abs() - (q[1] + pos[1]);
                let dy = (q[2] - pos[2]).abs() - (q[3] + pos[3]);
                if dx.max(0.0) + dy.max(0.0) <= r_slack {
                    visit(e);
                }
            }
        }
    }
}

/// Candidate index split by lifecycle: matured segments are frozen, so their
/// partition can be reused across iterations; active segments move and are
/// re-indexed every step. Queries visit the frozen partition first, then the
/// moving one — the same order whether the frozen part was cached or rebuilt,
/// which keeps cached and fresh steps bit-identical.
struct SplitIndex<'a> {
    frozen: &'a BandIndex,
    moving: &'a BandIndex,
}

impl SplitIndex<'_> {
    fn for_candidates(&self, s: &[f64; 4], r: f64, mut visit: impl FnMut(&IndexEntry)) {
        self.frozen.for_candidates(s, r, &mut visit);
        self.moving.for_candidates(s, r, &mut visit);
    }

    fn arity(&self) -> usize {
        self.frozen.arity.max(self.moving.arity)
    }
}

/// Frozen-partition cache for the iteration loop. The matured set only ever
/// grows, so within one run the matured count identifies it.
struct FrozenCache {
    matured: usize,
    index: BandIndex,
}

/// Flat center-x-sorted candidate list for nearest-segment queries, with the
/// same oversized-extent escape hatch as [`BandIndex`].
struct CxIndex {
    entries: Vec<IndexEntry>,
    big: Vec<IndexEntry>,
    /// Max half-length among `entries` (not `big`).
    max_ext: f64,
}

impl CxIndex {
    fn new(segments: &[PrimitiveSegment], indices: impl Iterator<Item = usize>) -> Self {
        let mut entries = make_entries(segments, indices);
        let mut exs: Vec<f64> = entries.iter().map(|e| e.s[1]).collect();
        let cutoff = percentile_98(&mut exs);
        let big: Vec<IndexEntry> = entries.iter().filter(|e| e.s[1] > cutoff).copied().collect();
        entries.retain(|e| e.s[1] <= cutoff);

        if entries.len() > 2048 {
            entries.par_sort_unstable_by(|a, b| {
                a.s[0].partial_cmp(&b.s[0]).unwrap().then(a.idx.cmp(&b.idx))
            });
        } else {
            entries.sort_unstable_by(|a, b| {
                a.s[0].partial_cmp(&b.s[0]).unwrap().then(a.idx.cmp(&b.idx))
            });
        }
        let max_ext = entries.iter().map(|e| e.s[1]).fold(0.0, f64::max);
        Self {
            entries,
            big,
            max_ext,
        }
    }
}

impl CoevolutionState {
    pub fn new(segments: Vec<PrimitiveSegment>) -> Self {
        let matured = segments
            .iter()
            .filter(|s| s.state == SegmentState::Matured)
            .count();
        Self {
            segments,
            iteration: 0,
            matured_history: vec![matured],
            weights: BTreeMap::new(),
        }
    }

    pub fn matured_count(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| s.state == SegmentState::Matured)
            .count()
    }

    /// Ids of live segments within spatial distance r of segment `id`,
    /// ascending.
    pub fn neighborhood(&self, id: u32, r: f64) -> Vec<u32> {
        let Some(seg) = seg_by_id(&self.segments, id) else {
            return Vec::new();
        };
        self.segments
            .iter()
            .filter(|o| {
                o.id != id
                    && o.state != SegmentState::Absorbed
                    && spatial_distance(&seg.s, &o.s) <= r
            })
            .map(|o| o.id)
            .collect()
    }

    /// Weight of segment `idx` against one candidate entry, or None when the
    /// entry is itself or out of range.
    #[inline]
    fn candidate_weight(
        &self,
        idx: usize,
        entry: &IndexEntry,
        arity: usize,
        boundaries: &BoundarySet,
        cfg: &PipelineConfig,
    ) -> Option<f64> {
        if entry.idx == idx {
            return None;
        }
        let seg = &self.segments[idx];
        let d = spatial_distance(&seg.s, &entry.s);
        if d > cfg.r {
            return None;
        }
        let dp = color_distance(seg.color(), &entry.p[..arity]);
        Some(if self.iteration == 0 {
            initial_weight_raw(dp, boundaries.energies(seg.id, entry.id), cfg)
        } else {
            interaction_weight_raw(d, dp, cfg)
        })
    }

    fn compute_update(
        &self,
        idx: usize,
        index: &SplitIndex,
        boundaries: &BoundarySet,
        cfg: &PipelineConfig,
    ) -> Update {
        let seg = &self.segments[idx];
        let arity = (seg.channels as usize).min(index.arity());
        let mut m = 0usize;
        let mut dx = 0.0;
        let mut dy = 0.0;
        let mut wsum = 0.0;
        let mut pacc = [0.0f64; 3];
        // The index visit order is fixed, so the sums are reproducible
        // regardless of segment processing order or thread count.
        index.for_candidates(&seg.s, cfg.r, |entry| {
            let Some(w) = self.candidate_weight(idx, entry, arity, boundaries, cfg) else {
                return;
            };
            m += 1;
            dx += w * (entry.s[0] - seg.s[0]);
            dy += w * (entry.s[2] - seg.s[2]);
            wsum += w;
            for (acc, &pc) in pacc.iter_mut().zip(&entry.p[..arity]) {
                *acc += w * pc;
            }
        });

        let mut p = [0.0f64; 3];
        if m == 0 {
            p = seg.p;
            return Update {
                s: [
                    seg.s[0],
                    seg.s[1] * cfg.shrink,
                    seg.s[2],
                    seg.s[3] * cfg.shrink,
                ],
                p,
                lambda: 1.0,
            };
        }

        let mf = m as f64;
        let lambda = (1.0 - wsum / mf).clamp(0.0, 1.0);
        for c in 0..arity {
            p[c] = (pacc[c] / mf + lambda * seg.p[c]).clamp(0.0, 255.0);
        }
        Update {
            s: [
                seg.s[0] + dx / mf,
                seg.s[1] * cfg.shrink,
                seg.s[2] + dy / mf,
                seg.s[3] * cfg.shrink,
            ],
            p,
            lambda,
        }
    }

    /// Neighbor weights of segment `idx` as (segment index, weight) pairs,
    /// for the pair-weight map.
    fn neighbor_weights(
        &self,
        idx: usize,
        index: &SplitIndex,
        boundaries: &BoundarySet,
        cfg: &PipelineConfig,
    ) -> Vec<(usize, f64)> {
        let arity = (self.segments[idx].channels as usize).min(index.arity());
        let mut out = Vec::new();
        index.for_candidates(&self.segments[idx].s, cfg.r, |entry| {
            if let Some(w) = self.candidate_weight(idx, entry, arity, boundaries, cfg) {
                out.push((entry.idx, w));
            }
        });
        out
    }

    /// One co-evolution iteration, segment updates computed in parallel.
    pub fn step(&self, boundaries: &BoundarySet, cfg: &PipelineConfig) -> CoevolutionState {
        self.step_impl(boundaries, cfg, true, None)
    }

    /// [`step`] without refreshing the pair-weight map, reusing the frozen
    /// index partition; the iteration loop uses this and refreshes weights
    /// once at the end.
    fn step_fast(
        &self,
        boundaries: &BoundarySet,
        cfg: &PipelineConfig,
        cache: &mut Option<FrozenCache>,
    ) -> CoevolutionState {
        self.step_impl(boundaries, cfg, false, Some(cache))
    }

    fn step_impl(
        &self,
        boundaries: &BoundarySet,
        cfg: &PipelineConfig,
        collect_weights: bool,
        cache: Option<&mut Option<FrozenCache>>,
    ) -> CoevolutionState {
        let active: Vec<usize> = self.active_indices();
        if active.is_empty() {
            // Nothing can change; skip the index build and commit scans.
            let mut next = self.clone();
            next.iteration += 1;
            let count = next.matured_count();
            next.matured_history.push(count);
            return next;
        }
        let matured_now = self.matured_count();
        let fresh_frozen;
        let frozen: &BandIndex = match cache {
            Some(slot) => {
                let stale = slot.as_ref().map_or(true, |c| c.matured != matured_now);
                if stale {
                    *slot = Some(FrozenCache {
                        matured: matured_now,
                        index: self.matured_index(),
                    });
                }
                &slot.as_ref().unwrap().index
            }
            None => {
                fresh_frozen = self.matured_index();
                &fresh_frozen
            }
        };
        let moving = BandIndex::new(&self.segments, active.iter().copied());
        let index = SplitIndex {
            frozen,
            moving: &moving,
        };
        // Parallel dispatch only pays off on sizable batches.
        let updates: Vec<(usize, Update)> = if active.len() >= 2048 {
            active
                .par_iter()
                .with_min_len(32)
                .map(|&i| (i, self.compute_update(i, &index, boundaries, cfg)))
                .collect()
        } else {
            active
                .iter()
                .map(|&i| (i, self.compute_update(i, &index, boundaries, cfg)))
                .collect()
        };
        self.commit(updates, &index, boundaries, cfg, collect_weights)
    }

    /// One iteration with updates computed serially in the given visit order
    /// over active segment indices. Produces the same state as [`step`]
    /// regardless of `order` (double-buffering contract).
    pub fn step_ordered(
        &self,
        boundaries: &BoundarySet,
        cfg: &PipelineConfig,
        order: &[usize],
    ) -> CoevolutionState {
        let frozen = self.matured_index();
        let moving = BandIndex::new(&self.segments, self.active_indices().into_iter());
        let index = SplitIndex {
            frozen: &frozen,
            moving: &moving,
        };
        let updates: Vec<(usize, Update)> = order
            .iter()
            .map(|&i| (i, self.compute_update(i, &index, boundaries, cfg)))
            .collect();
        self.commit(updates, &index, boundaries, cfg, true)
    }

    /// Pair weights of the current iteration over all live segments within
    /// radius r of each other (first-iteration weights at t = 0, the
    /// proximity/similarity weights afterwards).
    pub fn compute_pair_weights(
        &self,
        boundaries: &BoundarySet,
        cfg: &PipelineConfig,
    ) -> BTreeMap<(u32, u32), f64> {
        let frozen = self.matured_index();
        let moving = BandIndex::new(&self.segments, self.active_indices().into_iter());
        let index = SplitIndex {
            frozen: &frozen,
            moving: &moving,
        };
        let mut out = BTreeMap::new();
        for i in 0..self.segments.len() {
            if self.segments[i].state == SegmentState::Absorbed {
                continue;
            }
            for (j, w) in self.neighbor_weights(i, &index, boundaries, cfg) {
                let (a, b) = (self.segments[i].id, self.segments[j].id);
                out.insert((a.min(b), a.max(b)), w);
            }
        }
        out
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.segments.len())
            .filter(|&i| self.segments[i].state == SegmentState::Active)
            .collect()
    }

    fn matured_index(&self) -> BandIndex {
        BandIndex::new(
            &self.segments,
            (0..self.segments.len()).filter(|&i| self.segments[i].state == SegmentState::Matured),
        )
    }

    fn commit(
        &self,
        updates: Vec<(usize, Update)>,
        index: &SplitIndex,
        boundaries: &BoundarySet,
        cfg: &PipelineConfig,
        collect_weights: bool,
    ) -> CoevolutionState {
        let mut slots: Vec<Option<Update>> = vec![None; self.segments.len()];
        for (i, upd) in updates {
            slots[i] = Some(upd);
        }
        let mut weights = BTreeMap::new();
        if collect_weights {
            for i in 0..self.segments.len() {
                if slots[i].is_none() {
                    continue;
                }
                for (j, w) in self.neighbor_weights(i, index, boundaries, cfg) {
                    let (a, b) = (self.segments[i].id, self.segments[j].id);
                    weights.insert((a.min(b), a.max(b)), w);
                }
            }
        }

        // Effective status pointer of this iteration: freshly computed for
        // active segments, frozen for matured ones.
        let eff_lambda = |i: usize| match &slots[i] {
            Some(u) => u.lambda,
            None => self.segments[i].lambda,
        };

        // Absorption resolution, skipped entirely when nothing crossed the
        // upper threshold this iteration.
        let any_absorbing = slots
            .iter()
            .any(|slot| slot.as_ref().is_some_and(|u| u.lambda >= cfg.lambda_u));
        let absorber_of: BTreeMap<usize, Option<usize>> = if any_absorbing {
            // Candidates: live segments still below the upper threshold.
            let candidates: Vec<usize> = (0..self.segments.len())
                .filter(|&i| {
                    self.segments[i].state != SegmentState::Absorbed && eff_lambda(i) < cfg.lambda_u
                })
                .collect();
            let cand_index = CxIndex::new(&self.segments, candidates.iter().copied());
            slots
                .par_iter()
                .enumerate()
                .with_min_len(64)
                .filter(|(_, slot)| slot.as_ref().is_some_and(|u| u.lambda >= cfg.lambda_u))
                .map(|(i, _)| (i, self.nearest_candidate(i, &cand_index)))
                .collect()
        } else {
            BTreeMap::new()
        };

        let rebuild = |(i, old): (usize, &PrimitiveSegment)| -> PrimitiveSegment {
            let Some(upd) = slots[i] else {
                return old.clone();
            };
            let mut seg = old.clone();
            seg.lambda = upd.lambda;
            if upd.lambda >= cfg.lambda_u {
                match absorber_of.get(&i).copied().flatten() {
                    Some(j) => {
                        // Copy the absorber's committed t+1 vectors.
                        match slots[j] {
                            Some(ju) => {
                                seg.s = ju.s;
                                seg.p = ju.p;
                            }
                            None => {
                                seg.s = self.segments[j].s;
                                seg.p = self.segments[j].p;
                            }
                        }
                        seg.state = SegmentState::Absorbed;
                        seg.absorbed_into = Some(self.segments[j].id);
                    }
                    None => {
                        // No viable absorber anywhere: the segment settles
                        // where it is (see decisions ledger).
                        seg.s = upd.s;
                        seg.p = upd.p;
                        seg.state = SegmentState::Matured;
                    }
                }
            } else {
                seg.s = upd.s;
                seg.p = upd.p;
                if upd.lambda <= cfg.lambda_l {
                    seg.state = SegmentState::Matured;
                }
            }
            seg
        };
        let updated_count = slots.iter().filter(|s| s.is_some()).count();
        let segments: Vec<PrimitiveSegment> = if updated_count >= 512 {
            self.segments
                .par_iter()
                .enumerate()
                .with_min_len(256)
                .map(rebuild)
                .collect()
        } else {
            self.segments.iter().enumerate().map(rebuild).collect()
        };

        let mut history = self.matured_history.clone();
        history.push(
            segments
                .iter()
                .filter(|s| s.state == SegmentState::Matured)
                .count(),
        );
        CoevolutionState {
            segments,
            iteration: self.iteration + 1,
            matured_history: history,
            weights,
        }
    }

    /// Nearest candidate by t-state spatial distance, ties to the smaller id.
    fn nearest_candidate(&self, from: usize, index: &CxIndex) -> Option<usize> {
        let seg = &self.segments[from];
        let cx = seg.s[0];
        let pos = index.entries.partition_point(|e| e.s[0] < cx);
        let mut best: Option<(f64, u32, usize)> = None;
        // Oversized-extent candidates are few; take them unconditionally.
        for entry in &index.big {
            if entry.idx != from {
                let d = spatial_distance(&seg.s, &entry.s);
                if best.map_or(true, |(bd, bid, _)| (d, entry.id) < (bd, bid)) {
                    best = Some((d, entry.id, entry.idx));
                }
            }
        }
        let mut probe = |entry: &IndexEntry| -> bool {
            // Lower bound on d for everything at least this far in x.
            let bound = (entry.s[0] - cx).abs() - seg.s[1] - index.max_ext;
            if let Some((bd, _, _)) = best {
                if bound > bd {
                    return false;
                }
            }
            if entry.idx != from {
                let d = spatial_distance(&seg.s, &entry.s);
                if best.map_or(true, |(bd, bid, _)| (d, entry.id) < (bd, bid)) {
                    best = Some((d, entry.id, entry.idx));
                }
            }
            true
        };
        let (mut lo, mut hi) = (pos, pos);
        loop {
            let go_right = hi < index.entries.len()
                && (lo == 0 || {
                    let dl = (index.entries[lo - 1].s[0] - cx).abs();
                    let dr = (index.entries[hi].s[0] - cx).abs();
                    dr <= dl
                });
            if go_right {
                if !probe(&index.entries[hi]) {
                    hi = index.entries.len();
                    if lo == 0 {
                        break;
                    }
                    continue;
                }
                hi += 1;
            } else if lo > 0 {
                if !probe(&index.entries[lo - 1]) {
                    lo = 0;
                    if hi >= index.entries.len() {
                        break;
                    }
                    continue;
                }
                lo -= 1;
            } else {
                break;
            }
        }
        best.map(|(_, _, j)| j)
    }
}

/// Runs co-evolution until the matured count holds steady for `n_stall`
/// consecutive iterations, or a hard cap of 50 * n_stall iterations.
pub fn run(
    segments: Vec<PrimitiveSegment>,
    boundaries: &BoundarySet,
    cfg: &PipelineConfig,
) -> CoevolutionState {
    let mut state = CoevolutionState::new(segments);
    let cap = 50 * cfg.n_stall as usize;
    let mut prev = state.matured_count();
    let mut stall = 0;
    let mut cache: Option<FrozenCache> = None;
    while state.iteration < cap {
        state = state.step_fast(boundaries, cfg, &mut cache);
        let count = state.matured_count();
        if count == prev {
            stall += 1;
            if stall >= cfg.n_stall {
                break;
            }
        } else {
            stall = 0;
            prev = count;
        }
    }
    // Final weight map over the still-active segments' neighborhoods, as a
    // closing step would have recorded it.
    let frozen = state.matured_index();
    let moving = BandIndex::new(&state.segments, state.active_indices().into_iter());
    let index = SplitIndex {
        frozen: &frozen,
        moving: &moving,
    };
    let mut weights = BTreeMap::new();
    for i in state.active_indices() {
        for (j, w) in state.neighbor_weights(i, &index, boundaries, cfg) {
            let (a, b) = (state.segments[i].id, state.segments[j].id);
            weights.insert((a.min(b), a.max(b)), w);
        }
    }
    state.weights = weights;
    state
}

/// Groups matured segments into zones: connected components of the
/// xi_c-thresholded weight graph whose transitive pixel mass exceeds
/// `delta_t` of the image. Core segments receive their zone label in place;
/// everything else stays unlabeled for stage 3.
pub fn build_zones(
    state: &mut CoevolutionState,
    cfg: &PipelineConfig,
    image_pixels: usize,
) -> Result<Vec<Zone>> {
    let segments = &mut state.segments;
    let n = segments.len();

    // Pixel mass owned by each live segment: its own pixels plus the pixels
    // of everything absorbed into it, transitively.
    let idx_of: BTreeMap<u32, usize> = segments.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
    let mut owned: Vec<usize> = segments.iter().map(|s| s.pixels.len()).collect();
    for i in 0..n {
        if segments[i].state != SegmentState::Absorbed {
            continue;
        }
        let mut cur = i;
        while segments[cur].state == SegmentState::Absorbed {
            let next_id = segments[cur].absorbed_into.expect("absorbed without absorber");
            cur = idx_of[&next_id];
        }
        owned[cur] += segments[i].pixels.len();
    }

    let matured: Vec<usize> = (0..n)
        .filter(|&i| segments[i].state == SegmentState::Matured)
        .collect();

    // Union matured pairs within r whose final weight clears xi_c.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let index = BandIndex::new(segments, matured.iter().copied());
    for &i in &matured {
        let mut linked = Vec::new();
        index.for_candidates(&segments[i].s, cfg.r, |entry| {
            let j = entry.idx;
            if j <= i {
                return;
            }
            if spatial_distance(&segments[i].s, &segments[j].s) <= cfg.r
                && interaction_weight(&segments[i], &segments[j], cfg) >= cfg.xi_c
            {
                linked.push(j);
            }
        });
        for j in linked {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[rj.max(ri)] = rj.min(ri);
            }
        }
    }

    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in &matured {
        let root = find(&mut parent, i);
        components.entry(root).or_default().push(i);
    }

    let threshold = cfg.delta_t * image_pixels as f64;
    let mut qualifying: Vec<(u32, Vec<usize>)> = components
        .into_values()
        .filter(|members| members.iter().map(|&i| owned[i]).sum::<usize>() as f64 > threshold)
        .map(|members| (members.iter().map(|&i| segments[i].id).min().unwrap(), members))
        .collect();
    qualifying.sort_by_key(|&(min_id, _)| min_id);

    if qualifying.is_empty() {
        return Err(Error::NoInitialZones);
    }

    let mut zones = Vec::with_capacity(qualifying.len());
    for (k, (_, members)) in qualifying.into_iter().enumerate() {
        let label = k as u32 + 1;
        let mut core_ids: Vec<u32> = members.iter().map(|&i| segments[i].id).collect();
        core_ids.sort_unstable();
        for &i in &members {
            segments[i].label = label;
        }
        let center = zone_center(&core_ids, segments);
        zones.push(Zone {
            label,
            core_ids: core_ids.clone(),
            member_ids: core_ids,
            center,
        });
    }
    Ok(zones)
}
