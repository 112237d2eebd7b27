//! Stage 3: attach every unlabeled primitive segment to a zone.
//!
//! A preliminary pass migrates each unlabeled segment to the spatially
//! nearest zone. Then iterated deportation (expel migrants whose color
//! contrast against the core stands out within their zone) and immigration
//! (re-home deportees by the worth function G) run until the move rate
//! drops below `rate_min` or `m_max` iterations elapse. Cores are immutable
//! throughout; every draw comes from the shared RNG in ascending segment id
//! order, so runs are reproducible.

use std::collections::BTreeMap;

use crate::config::PipelineConfig;
use crate::coevolve::{color_distance, seg_by_id, spatial_distance, Zone};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::watershed::{PrimitiveSegment, SegmentState};

/// Manhattan distance between two color vectors of equal arity.
pub fn contrast(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ArityMismatch(a.len(), b.len()));
    }
    Ok(color_distance(a, b))
}

/// Maximum contrast between segment `color` and the zone's core members.
pub fn eval_f(color: &[f64], zone: &Zone, segments: &[PrimitiveSegment]) -> f64 {
    zone.core_ids
        .iter()
        .map(|&id| {
            let core = seg_by_id(segments, id).expect("core id must exist");
            color_distance(color, core.color())
        })
        .fold(0.0, f64::max)
}

/// Spatial distance from a segment rectangle to a zone center, the center
/// treated as a zero-extent rectangle.
pub fn center_distance(s: &[f64; 4], center: (f64, f64)) -> f64 {
    spatial_distance(s, &[center.0, 0.0, center.1, 0.0])
}

/// Membership worth of a segment for a zone; lower is fitter. `max_g1` and
/// `max_g2` normalize the color and space terms across all zones for this
/// segment; a zero max silences its term.
pub fn eval_g(
    seg: &PrimitiveSegment,
    zone: &Zone,
    segments: &[PrimitiveSegment],
    max_g1: f64,
    max_g2: f64,
    cfg: &PipelineConfig,
) -> f64 {
    let g1 = eval_f(seg.color(), zone, segments);
    let g2 = center_distance(&seg.s, zone.center);
    let t1 = if max_g1 > 0.0 { g1 / max_g1 } else { 0.0 };
    let t2 = if max_g2 > 0.0 { g2 / max_g2 } else { 0.0 };
    cfg.alpha * t1 + (1.0 - cfg.alpha) * t2
}

/// Stage-3 state: zone memberships of the migrated (non-core) segments.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentState {
    pub zones: Vec<Zone>,
    /// Migrated segment id -> current zone label.
    pub migrations: BTreeMap<u32, u32>,
    /// Segments currently deported (label 0); empty between iterations.
    pub unlabeled_pool: Vec<u32>,
    pub iteration: u32,
    pub last_move_rate: f64,
}

/// Migrates every live non-core segment to the nearest zone (ties to the
/// smaller zone label).
pub fn preliminary_assign(zones: Vec<Zone>, segments: &[PrimitiveSegment]) -> AssignmentState {
    let mut migrations = BTreeMap::new();
    for seg in segments {
        if seg.state == SegmentState::Absorbed || seg.label != 0 {
            continue;
        }
        let mut best: Option<(f64, u32)> = None;
        for zone in &zones {
            let d = center_distance(&seg.s, zone.center);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, zone.label));
            }
        }
        if let Some((_, label)) = best {
            migrations.insert(seg.id, label);
        }
    }
    AssignmentState {
        zones,
        migrations,
        unlabeled_pool: Vec::new(),
        iteration: 0,
        last_move_rate: 0.0,
    }
}

/// Deportation probability of migrated segment `id` within its current zone,
/// from the current memberships: (F(i) - min F over the zone's migrants) /
/// (max F over the zone's migrants), clamped to [0, 1]; 0 when the max is 0.
pub fn deport_probability(id: u32, state: &AssignmentState, segments: &[PrimitiveSegment]) -> f64 {
    let Some(&label) = state.migrations.get(&id) else {
        return 0.0;
    };
    let zone = &state.zones[label as usize - 1];
    let mut min_f = f64::INFINITY;
    let mut max_f = 0.0f64;
    let mut own_f = 0.0;
    for (&mid, &mlabel) in &state.migrations {
        if mlabel != label {
            continue;
        }
        let seg = seg_by_id(segments, mid).expect("migrant id must exist");
        let f = eval_f(seg.color(), zone, segments);
        min_f = min_f.min(f);
        max_f = max_f.max(f);
        if mid == id {
            own_f = f;
        }
    }
    if max_f <= 0.0 {
        return 0.0;
    }
    ((own_f - min_f) / max_f).clamp(0.0, 1.0)
}

/// Runs deportation/immigration to completion, then writes the final zone
/// label onto every live segment and fills the zone member lists.
pub fn run_assignment(
    state: &mut AssignmentState,
    segments: &mut [PrimitiveSegment],
    cfg: &PipelineConfig,
    rng: &mut SplitMix64,
) {
    // Everything evaluated here is frozen during stage 3, so the per-pair
    // F/G landscape is precomputed once.
    let migrant_ids: Vec<u32> = state.migrations.keys().copied().collect();
    let zone_count = state.zones.len();
    let mut f_of: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut g_of: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for &id in &migrant_ids {
        let seg = seg_by_id(segments, id).expect("migrant id must exist");
        let f: Vec<f64> = state
            .zones
            .iter()
            .map(|z| eval_f(seg.color(), z, segments))
            .collect();
        let g2: Vec<f64> = state
            .zones
            .iter()
            .map(|z| center_distance(&seg.s, z.center))
            .collect();
        let max_g1 = f.iter().cloned().fold(0.0, f64::max);
        let max_g2 = g2.iter().cloned().fold(0.0, f64::max);
        let g = (0..zone_count)
            .map(|k| {
                let t1 = if max_g1 > 0.0 { f[k] / max_g1 } else { 0.0 };
                let t2 = if max_g2 > 0.0 { g2[k] / max_g2 } else { 0.0 };
                cfg.alpha * t1 + (1.0 - cfg.alpha) * t2
            })
            .collect();
        f_of.insert(id, f);
        g_of.insert(id, g);
    }

    loop {
        let migrant_count = state.migrations.len();
        if migrant_count == 0 {
            state.iteration += 1;
            state.last_move_rate = 0.0;
            break;
        }

        // Snapshot the per-zone F extremes at iteration start.
        let mut min_f = vec![f64::INFINITY; zone_count];
        let mut max_f = vec![0.0f64; zone_count];
        for (&id, &label) in &state.migrations {
            let f = f_of[&id][label as usize - 1];
            let k = label as usize - 1;
            min_f[k] = min_f[k].min(f);
            max_f[k] = max_f[k].max(f);
        }

        // Deportation: one draw per migrant, ascending id.
        let mut deported = Vec::new();
        for (&id, &label) in &state.migrations {
            let u = rng.next_unit();
            let k = label as usize - 1;
            let p = if max_f[k] <= 0.0 {
                0.0
            } else {
                ((f_of[&id][k] - min_f[k]) / max_f[k]).clamp(0.0, 1.0)
            };
            if p > u {
                deported.push(id);
            }
        }
        for &id in &deported {
            state.migrations.remove(&id);
            state.unlabeled_pool.push(id);
        }

        // Immigration: every deportee joins its fittest zone.
        for &id in &deported {
            let g = &g_of[&id];
            let mut best = 0usize;
            for k in 1..zone_count {
                if g[k] < g[best] {
                    best = k;
                }
            }
            state.migrations.insert(id, best as u32 + 1);
        }
        state.unlabeled_pool.clear();

        state.iteration += 1;
        state.last_move_rate = deported.len() as f64 / migrant_count as f64;
        if state.iteration >= cfg.m_max || state.last_move_rate < cfg.rate_min {
            break;
        }
    }

    // Commit labels and member lists.
    for seg in segments.iter_mut() {
        if seg.state == SegmentState::Absorbed {
            continue;
        }
        if seg.label == 0 {
            seg.label = state.migrations[&seg.id];
        }
    }
    for zone in &mut state.zones {
        let mut members = zone.core_ids.clone();
        members.extend(
            state
                .migrations
                .iter()
                .filter(|(_, &l)| l == zone.label)
                .map(|(&id, _)| id),
        );
        members.sort_unstable();
        zone.member_ids = members;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(id: u32, s: [f64; 4], p: Vec<f64>) -> PrimitiveSegment {
        let channels = p.len() as u8;
        let mut color = [0.0f64; 3];
        color[..p.len()].copy_from_slice(&p);
        PrimitiveSegment {
            id,
            pixels: std::sync::Arc::new(vec![(0, 0)]),
            s,
            p: color,
            channels,
            lambda: 1.0,
            state: SegmentState::Active,
            label: 0,
            absorbed_into: None,
        }
    }

    fn core_seg(id: u32, s: [f64; 4], p: Vec<f64>, label: u32) -> PrimitiveSegment {
        let mut c = seg(id, s, p);
        c.state = SegmentState::Matured;
        c.lambda = 0.0;
        c.label = label;
        c
    }

    fn zone(label: u32, core_ids: Vec<u32>, segments: &[PrimitiveSegment]) -> Zone {
        let center = crate::coevolve::zone_center(&core_ids, segments);
        Zone {
            label,
            core_ids: core_ids.clone(),
            member_ids: core_ids,
            center,
        }
    }

    #[test]
    fn contrast_examples() {
        assert_eq!(contrast(&[7.0], &[7.0]).unwrap(), 0.0);
        assert_eq!(contrast(&[100.0], &[130.0]).unwrap(), 30.0);
        let a = [10.0, 20.0, 30.0];
        let b = [15.0, 25.0, 40.0];
        assert!((contrast(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!(matches!(
            contrast(&a, &[1.0]),
            Err(Error::ArityMismatch(3, 1))
        ));
    }

    #[test]
    fn eval_f_examples() {
        let segments = vec![
            core_seg(1, [0.0, 0.0, 0.0, 0.0], vec![10.0], 1),
            core_seg(2, [1.0, 0.0, 0.0, 0.0], vec![50.0], 1),
        ];
        let z = zone(1, vec![1, 2], &segments);
        // Equidistant from both cores.
        assert!((eval_f(&[30.0], &z, &segments) - 20.0).abs() < 1e-9);
        // Equal to every core color -> 0.
        let single = vec![core_seg(1, [0.0, 0.0, 0.0, 0.0], vec![30.0], 1)];
        let zs = zone(1, vec![1], &single);
        assert_eq!(eval_f(&[30.0], &zs, &single), 0.0);
        // Adding a core member can only raise or keep F.
        let narrower = zone(1, vec![1], &segments);
        assert!(eval_f(&[30.0], &z, &segments) >= eval_f(&[30.0], &narrower, &segments));
    }

    #[test]
    fn preliminary_assign_examples() {
        let mut segments = vec![
            core_seg(1, [0.0, 0.0, 0.0, 0.0], vec![0.0], 1),
            core_seg(2, [100.0, 0.0, 0.0, 0.0], vec![200.0], 2),
            seg(3, [10.0, 0.0, 0.0, 0.0], vec![90.0]),
            seg(4, [50.0, 0.0, 0.0, 0.0], vec![90.0]), // exact midpoint
        ];
        segments.sort_by_key(|s| s.id);
        let zones = vec![zone(1, vec![1], &segments), zone(2, vec![2], &segments)];
        let st = preliminary_assign(zones, &segments);
        assert_eq!(st.migrations[&3], 1, "x=10 joins the x=0 zone");
        assert_eq!(st.migrations[&4], 1, "midway tie goes to the smaller label");
        assert!(!st.migrations.contains_key(&1), "cores never migrate");
    }

    #[test]
    fn preliminary_assign_single_zone_takes_everything() {
        let segments = vec![
            core_seg(1, [0.0, 0.0, 0.0, 0.0], vec![0.0], 1),
            seg(2, [40.0, 0.0, 0.0, 0.0], vec![10.0]),
            seg(3, [90.0, 0.0, 0.0, 0.0], vec![250.0]),
        ];
        let zones = vec![zone(1, vec![1], &segments)];
        let st = preliminary_assign(zones, &segments);
        assert_eq!(st.migrations.len(), 2);
        assert!(st.migrations.values().all(|&l| l == 1));
    }

    #[test]
    fn deport_probability_examples() {
        // Zone 1 core color 100; migrants at colors 110 (F=10) and 130 (F=30).
        let segments = vec![
            core_seg(1, [0.0, 0.0, 0.0, 0.0], vec![100.0], 1),
            seg(2, [5.0, 0.0, 0.0, 0.0], vec![110.0]),
            seg(3, [6.0, 0.0, 0.0, 0.0], vec![130.0]),
        ];
        let zones = vec![zone(1, vec![1], &segments)];
        let mut st = preliminary_assign(zones, &segments);
        assert!((deport_probability(3, &st, &segments) - 20.0 / 30.0).abs() < 1e-9);
        // The minimum-F migrant is never deported.
        assert_eq!(deport_probability(2, &st, &segments), 0.0);
        // All migrants identical to the core: every F is 0, so P = 0.
        st.migrations.insert(2, 1);
        st.migrations.insert(3, 1);
        let same = vec![
            core_seg(1, [0.0, 0.0, 0.0, 0.0], vec![100.0], 1),
            seg(2, [5.0, 0.0, 0.0, 0.0], vec![100.0]),
            seg(3, [6.0, 0.0, 0.0, 0.0], vec![100.0]),
        ];
        assert_eq!(deport_probability(2, &st, &same), 0.0);
    }

    #[test]
    fn eval_g_examples() {
        let cfg = PipelineConfig::default(); // alpha = 0.9
        let segments = vec![
            core_seg(1, [0.0, 0.0, 0.0, 0.0], vec![0.0], 1),
            core_seg(2, [100.0, 0.0, 0.0, 0.0], vec![200.0], 2),
        ];
        let z1 = zone(1, vec![1], &segments);
        let z2 = zone(2, vec![2], &segments);

        // Color-identical and co-located with zone 1's core: G = 0.
        let here = seg(3, [0.0, 0.0, 0.0, 0.0], vec![0.0]);
        let max_g1 = eval_f(&here.p, &z2, &segments);
        let max_g2 = center_distance(&here.s, z2.center);
        assert_eq!(eval_g(&here, &z1, &segments, max_g1, max_g2, &cfg), 0.0);

        // G1/maxG1 = 1 and G2/maxG2 = 0 gives exactly alpha.
        // Sitting on zone 2's center with zone 1's color: for zone 2 the
        // color term is maximal and the space term zero.
        let probe = seg(3, [100.0, 0.0, 0.0, 0.0], vec![0.0]);
        let f1 = eval_f(&probe.p, &z1, &segments);
        let f2 = eval_f(&probe.p, &z2, &segments);
        let max_g1 = f1.max(f2);
        let d1 = center_distance(&probe.s, z1.center);
        let d2 = center_distance(&probe.s, z2.center);
        let max_g2 = d1.max(d2);
        assert_eq!(d2, 0.0);
        let g = eval_g(&probe, &z2, &segments, max_g1, max_g2, &cfg);
        assert!((g - 0.9).abs() < 1e-9);

        // alpha = 1 ranks by color only.
        let color_only = PipelineConfig {
            alpha: 1.0,
            ..PipelineConfig::default()
        };
        let g1 = eval_g(&probe, &z1, &segments, max_g1, max_g2, &color_only);
        let g2 = eval_g(&probe, &z2, &segments, max_g1, max_g2, &color_only);
        assert!(g1 < g2, "probe's color matches zone 1");
    }

    #[test]
    fn run_assignment_with_zero_migrants_terminates_immediately() {
        let mut segments = vec![core_seg(1, [0.0, 0.0, 0.0, 0.0], vec![0.0], 1)];
        let zones = vec![zone(1, vec![1], &segments)];
        let mut st = preliminary_assign(zones, &segments);
        let mut rng = SplitMix64::new(0);
        run_assignment(&mut st, &mut segments, &PipelineConfig::default(), &mut rng);
        assert_eq!(st.last_move_rate, 0.0);
        assert_eq!(st.iteration, 1);
    }

    #[test]
    fn migrants_sort_into_color_matching_zones() {
        // Zones of colors 0 and 200; migrants of colors 5 and 195 both start
        // in zone 2 because it is spatially nearest.
        let mut segments = vec![
            core_seg(1, [0.0, 0.0, 0.0, 0.0], vec![0.0], 1),
            core_seg(2, [100.0, 0.0, 0.0, 0.0], vec![200.0], 2),
            seg(3, [95.0, 0.0, 0.0, 0.0], vec![5.0]),
            seg(4, [90.0, 0.0, 0.0, 0.0], vec![195.0]),
        ];
        let zones = vec![zone(1, vec![1], &segments), zone(2, vec![2], &segments)];
        let mut st = preliminary_assign(zones, &segments);
        assert_eq!(st.migrations[&3], 2);
        assert_eq!(st.migrations[&4], 2);

        let cfg = PipelineConfig::default();
        let mut rng = SplitMix64::new(0);
        run_assignment(&mut st, &mut segments, &cfg, &mut rng);
        assert_eq!(st.migrations[&3], 1, "color-5 migrant belongs with color-0 zone");
        assert_eq!(st.migrations[&4], 2);
        // Labels committed onto the segments.
        assert_eq!(seg_by_id(&segments, 3).unwrap().label, 1);
        assert_eq!(seg_by_id(&segments, 4).unwrap().label, 2);
        // Member lists hold core plus migrants.
        assert_eq!(st.zones[0].member_ids, vec![1, 3]);
        assert_eq!(st.zones[1].member_ids, vec![2, 4]);
    }

    #[test]
    fn single_zone_deportees_rejoin_it() {
        let mut segments = vec![
            core_seg(1, [0.0, 0.0, 0.0, 0.0], vec![100.0], 1),
            seg(2, [5.0, 0.0, 0.0, 0.0], vec![100.0]),
            seg(3, [9.0, 0.0, 0.0, 0.0], vec![140.0]),
        ];
        let zones = vec![zone(1, vec![1], &segments)];
        let mut st = preliminary_assign(zones, &segments);
        let mut rng = SplitMix64::new(1);
        run_assignment(&mut st, &mut segments, &PipelineConfig::default(), &mut rng);
        assert!(st.migrations.values().all(|&l| l == 1));
        assert!(segments.iter().all(|s| s.label == 1));
    }

    #[test]
    fn identical_seeds_replay_identical_histories() {
        let build = || {
            let mut segments = vec![
                core_seg(1, [0.0, 0.0, 0.0, 0.0], vec![0.0], 1),
                core_seg(2, [60.0, 0.0, 0.0, 0.0], vec![200.0], 2),
            ];
            for i in 0..12u32 {
                segments.push(seg(
                    3 + i,
                    [5.0 * i as f64, 0.0, 2.0, 0.0],
                    vec![(i * 20) as f64],
                ));
            }
            let zones = vec![zone(1, vec![1], &segments), zone(2, vec![2], &segments)];
            (segments, zones)
        };
        let run_once = |seed: u64| {
            let (mut segments, zones) = build();
            let mut st = preliminary_assign(zones, &segments);
            let mut rng = SplitMix64::new(seed);
            run_assignment(&mut st, &mut segments, &PipelineConfig::default(), &mut rng);
            (st.migrations.clone(), st.iteration, st.last_move_rate)
        };
        assert_eq!(run_once(42), run_once(42));
    }
}
