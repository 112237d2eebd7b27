//! Orchestration of the four stages, with timings and a run report.

use std::time::Instant;

use serde::Serialize;

use crate::assign::{preliminary_assign, run_assignment, AssignmentState};
use crate::bench::BenchResult;
use crate::coevolve::{self, CoevolutionState};
use crate::config::PipelineConfig;
use crate::edgemap::{edge_energy, to_grayscale, EdgeMap};
use crate::error::Result;
use crate::image::{ImageBuffer, LabelMap};
use crate::merge::{build_region_graph, ga_run, Chromosome, RegionGraph};
use crate::rng::SplitMix64;
use crate::watershed::{extract_primitives, watershed_flood, BoundarySet, PrimitiveSegment, SegmentState};

/// Wall-clock per stage, milliseconds.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StageTimings {
    pub edge_map_ms: f64,
    pub watershed_ms: f64,
    pub coevolve_ms: f64,
    pub assign_ms: f64,
    pub merge_ms: f64,
    pub total_ms: f64,
}

/// Benchmark outcome against one ground-truth file.
#[derive(Debug, Clone, Serialize)]
pub struct GtBench {
    pub gt: String,
    pub result: BenchResult,
}

/// Everything a run reports: configuration echo, stage timings, stage
/// outcome counts, the accepted-fitness trace, and optional benchmark
/// results (attached by the caller when ground truth is available).
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub timings: StageTimings,
    pub primitive_count: usize,
    pub matured_count: usize,
    pub coevolve_iterations: usize,
    pub zone_count: usize,
    pub assign_iterations: u32,
    pub assign_move_rate: f64,
    pub final_region_count: usize,
    pub fitness_trace: Vec<f64>,
    pub bench: Vec<GtBench>,
    pub best_f: Option<f64>,
}

impl RunReport {
    pub fn attach_bench(&mut self, gt: String, result: BenchResult) {
        self.bench.push(GtBench { gt, result });
        let best = self
            .bench
            .iter()
            .map(|b| b.result.f_measure)
            .fold(f64::MIN, f64::max);
        self.best_f = Some(best);
    }
}

/// All intermediate stage artifacts of one run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub gray: ImageBuffer,
    pub edges: EdgeMap,
    pub watershed_labels: LabelMap,
    pub boundaries: BoundarySet,
    pub coevolution: CoevolutionState,
    pub assignment: AssignmentState,
    pub stage3_labels: LabelMap,
    pub graph: RegionGraph,
    pub chromosome: Chromosome,
    /// Final label map after genetic merging.
    pub labels: LabelMap,
    pub report: RunReport,
}

/// Paints each pixel with its segment's zone label; absorbed segments follow
/// their (transitive) absorber.
pub fn paint_label_map(segments: &[PrimitiveSegment], width: u32, height: u32) -> LabelMap {
    let idx_of = |id: u32| -> usize {
        segments
            .binary_search_by_key(&id, |s| s.id)
            .expect("segment ids must be present")
    };
    let mut final_label = vec![0u32; segments.len()];
    for i in 0..segments.len() {
        let mut cur = i;
        while segments[cur].state == SegmentState::Absorbed {
            cur = idx_of(segments[cur].absorbed_into.expect("absorbed without absorber"));
        }
        final_label[i] = segments[cur].label;
    }
    let mut labels = vec![0u32; width as usize * height as usize];
    for (label, seg) in final_label.iter().zip(segments) {
        for &(x, y) in seg.pixels.iter() {
            labels[y as usize * width as usize + x as usize] = *label;
        }
    }
    LabelMap {
        width,
        height,
        labels,
    }
}

/// Runs the full pipeline, keeping every stage artifact.
pub fn run_pipeline_full(img: &ImageBuffer, cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let started = Instant::now();
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let gray = to_grayscale(img)?;
    let edges = edge_energy(&gray)?;
    timings.edge_map_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let watershed_labels = watershed_flood(&edges);
    let (segments, boundaries) = extract_primitives(&watershed_labels, img, &edges)?;
    let primitive_count = segments.len();
    timings.watershed_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let mut coevolution = coevolve::run(segments, &boundaries, cfg);
    let zones = coevolve::build_zones(&mut coevolution, cfg, img.pixel_count())?;
    timings.coevolve_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let mut rng = SplitMix64::new(cfg.seed);
    let mut assignment = preliminary_assign(zones, &coevolution.segments);
    run_assignment(&mut assignment, &mut coevolution.segments, cfg, &mut rng);
    let stage3_labels = paint_label_map(&coevolution.segments, img.width, img.height);
    timings.assign_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let graph = build_region_graph(&stage3_labels, &gray)?;
    let (chromosome, labels, fitness_trace) = ga_run(&graph, &stage3_labels, cfg, &mut rng);
    timings.merge_ms = t.elapsed().as_secs_f64() * 1e3;

    timings.total_ms = started.elapsed().as_secs_f64() * 1e3;
    let report = RunReport {
        config: cfg.clone(),
        timings,
        primitive_count,
        matured_count: coevolution.matured_count(),
        coevolve_iterations: coevolution.iteration,
        zone_count: assignment.zones.len(),
        assign_iterations: assignment.iteration,
        assign_move_rate: assignment.last_move_rate,
        final_region_count: labels.region_count(),
        fitness_trace,
        bench: Vec::new(),
        best_f: None,
    };

    Ok(PipelineRun {
        gray,
        edges,
        watershed_labels,
        boundaries,
        coevolution,
        assignment,
        stage3_labels,
        graph,
        chromosome,
        labels,
        report,
    })
}

/// Runs the pipeline and returns the final label map with its report.
pub fn run_pipeline(img: &ImageBuffer, cfg: &PipelineConfig) -> Result<(LabelMap, RunReport)> {
    let run = run_pipeline_full(img, cfg)?;
    Ok((run.labels, run.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn constant_image_is_one_region() {
        let img = ImageBuffer::filled(16, 16, 1, 90).unwrap();
        let (labels, report) = run_pipeline(&img, &PipelineConfig::default()).unwrap();
        assert_eq!(labels.region_count(), 1);
        assert_eq!(labels.unlabeled_count(), 0);
        assert_eq!(report.primitive_count, 1);
        assert_eq!(report.zone_count, 1);
    }

    #[test]
    fn three_band_image_keeps_three_regions() {
        let img = synth::vertical_bands(64, 64, &[40, 128, 220]);
        let cfg = PipelineConfig {
            r: 9.0,
            theta_p: 17.0,
            ..PipelineConfig::default()
        };
        let run = run_pipeline_full(&img, &cfg).unwrap();
        assert_eq!(run.report.zone_count, 3);
        assert_eq!(run.labels.region_count(), 3);
        assert_eq!(run.labels.unlabeled_count(), 0);
    }

    #[test]
    fn two_flat_regions_leave_two_matured_survivors() {
        // Left half 30, right half 210: the two watershed plateaus have no
        // compatible partner, settle in place, and become the two zones.
        let img = synth::vertical_bands(32, 16, &[30, 210]);
        let run = run_pipeline_full(&img, &PipelineConfig::default()).unwrap();
        let matured: Vec<_> = run
            .coevolution
            .segments
            .iter()
            .filter(|s| s.state == SegmentState::Matured)
            .collect();
        assert_eq!(matured.len(), 2);
        assert_eq!(run.report.zone_count, 2);
        assert_eq!(run.labels.region_count(), 2);
    }

    #[test]
    fn same_seed_reproduces_labels_exactly() {
        let img = synth::block_mosaic(48, 40, 4, &[40, 90, 160, 220], 11);
        let cfg = PipelineConfig {
            theta_p: 40.0,
            seed: 123,
            ..PipelineConfig::default()
        };
        let (a, _) = run_pipeline(&img, &cfg).unwrap();
        let (b, _) = run_pipeline(&img, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stage_one_and_two_ignore_the_seed() {
        let img = synth::block_mosaic(40, 32, 4, &[40, 90, 160, 220], 3);
        let cfg_a = PipelineConfig {
            theta_p: 40.0,
            seed: 1,
            ..PipelineConfig::default()
        };
        let cfg_b = PipelineConfig {
            seed: 2,
            ..cfg_a.clone()
        };
        let a = run_pipeline_full(&img, &cfg_a).unwrap();
        let b = run_pipeline_full(&img, &cfg_b).unwrap();
        assert_eq!(a.watershed_labels, b.watershed_labels);
        assert_eq!(a.coevolution, b.coevolution);
    }

    #[test]
    fn paint_resolves_absorption_chains() {
        use crate::watershed::PrimitiveSegment;
        let segs = vec![
            PrimitiveSegment {
                id: 1,
                pixels: std::sync::Arc::new(vec![(0, 0)]),
                s: [0.0; 4],
                p: [0.0; 3],
                channels: 1,
                lambda: 0.0,
                state: SegmentState::Matured,
                label: 7,
                absorbed_into: None,
            },
            PrimitiveSegment {
                id: 2,
                pixels: std::sync::Arc::new(vec![(1, 0)]),
                s: [0.0; 4],
                p: [0.0; 3],
                channels: 1,
                lambda: 1.0,
                state: SegmentState::Absorbed,
                label: 0,
                absorbed_into: Some(1),
            },
            PrimitiveSegment {
                id: 3,
                pixels: std::sync::Arc::new(vec![(2, 0)]),
                s: [0.0; 4],
                p: [0.0; 3],
                channels: 1,
                lambda: 1.0,
                state: SegmentState::Absorbed,
                label: 0,
                absorbed_into: Some(2),
            },
        ];
        let map = paint_label_map(&segs, 3, 1);
        assert_eq!(map.labels, vec![7, 7, 7]);
    }
}
