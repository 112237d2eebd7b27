use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use evoseg::bench::{boundary_of, match_boundaries, prf};
use evoseg::{run_pipeline_full, PipelineConfig};
use evoseg_cli::{configfile, netpbm, outputs};

/// Deterministic split/merge image segmentation.
///
/// Reads a binary PGM (P5) or PPM (P6), runs the four-stage pipeline
/// (watershed split, co-evolutionary maturation, deportation/immigration
/// assignment, genetic merging), and writes the label map, boundary map,
/// mean-color rendering, original copy, and a JSON report under
/// OUTPUT_PREFIX. Supplying ground-truth boundary PBMs enables the boundary
/// precision/recall/F benchmark.
#[derive(Parser, Debug)]
#[command(name = "evoseg", version)]
struct Args {
    /// Input image (binary PGM or PPM, maxval 255).
    #[arg(long)]
    input: PathBuf,

    /// Prefix for the output files (e.g. out/scene writes
    /// out/scene.labels.txt, out/scene.boundary.pbm, ...).
    #[arg(long)]
    output_prefix: PathBuf,

    /// Config file with one key=value per line; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Ground-truth boundary map (PBM); repeat for multiple ground truths.
    #[arg(long)]
    gt: Vec<PathBuf>,

    /// Boundary matching tolerance in pixels.
    #[arg(long, default_value_t = 2.0)]
    d_max: f64,

    /// Worker threads for the parallel stages (0 = one per CPU).
    #[arg(long, default_value_t = 0)]
    threads: usize,

    /// Neighborhood radius in pixels.
    #[arg(long)]
    r: Option<f64>,
    /// Maximum color difference for segment interaction (0-255 units).
    #[arg(long)]
    theta_p: Option<f64>,
    /// Boundary energy normalizer of the first co-evolution iteration.
    #[arg(long)]
    sigma_w: Option<f64>,
    /// Status threshold at or above which a segment is absorbed.
    #[arg(long)]
    lambda_u: Option<f64>,
    /// Status threshold at or below which a segment matures.
    #[arg(long)]
    lambda_l: Option<f64>,
    /// Minimum weight connecting matured segments into a core.
    #[arg(long)]
    xi_c: Option<f64>,
    /// Minimum zone size as a fraction of the image.
    #[arg(long)]
    delta_t: Option<f64>,
    /// Color-vs-space coefficient of the immigration worth.
    #[arg(long)]
    alpha: Option<f64>,
    /// Precision weight of the F-measure.
    #[arg(long)]
    chi_0: Option<f64>,
    /// Per-iteration rectangle shrink factor.
    #[arg(long)]
    shrink: Option<f64>,
    /// Iterations the matured count must hold steady to stop stage 2.
    #[arg(long)]
    n_stall: Option<u32>,
    /// Stage-3 iteration cap.
    #[arg(long)]
    m_max: Option<u32>,
    /// Stage-3 minimum move rate.
    #[arg(long)]
    rate_min: Option<f64>,
    /// Stage-4 generation count.
    #[arg(long)]
    ga_iters: Option<u32>,
    /// RNG seed for stages 3 and 4.
    #[arg(long)]
    seed: Option<u64>,
}

impl Args {
    fn overrides(&self) -> configfile::Overrides {
        configfile::Overrides {
            r: self.r,
            theta_p: self.theta_p,
            sigma_w: self.sigma_w,
            lambda_u: self.lambda_u,
            lambda_l: self.lambda_l,
            xi_c: self.xi_c,
            delta_t: self.delta_t,
            alpha: self.alpha,
            chi_0: self.chi_0,
            shrink: self.shrink,
            n_stall: self.n_stall,
            m_max: self.m_max,
            rate_min: self.rate_min,
            ga_iters: self.ga_iters,
            seed: self.seed,
        }
    }
}

fn run(args: &Args) -> anyhow::Result<()> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &args.config {
        configfile::load(path)
            .with_context(|| format!("loading config {}", path.display()))?
            .apply(&mut cfg);
    }
    args.overrides().apply(&mut cfg);
    cfg.validate()?;

    if args.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }

    let img = netpbm::load_image(&args.input)
        .with_context(|| format!("loading {}", args.input.display()))?;

    let mut run = run_pipeline_full(&img, &cfg)?;

    let predicted = boundary_of(&run.labels);
    for gt_path in &args.gt {
        let gt = netpbm::load_boundary_map(gt_path)
            .with_context(|| format!("loading ground truth {}", gt_path.display()))?;
        let (tp, fp, fn_) = match_boundaries(&predicted, &gt, args.d_max)?;
        run.report
            .attach_bench(gt_path.display().to_string(), prf(tp, fp, fn_, cfg.chi_0));
    }

    if let Some(dir) = args.output_prefix.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    let paths = outputs::write_outputs(&args.output_prefix, &img, &run.labels, &run.report)?;

    println!(
        "{}: {} primitives -> {} zones -> {} regions in {:.0} ms (seed {})",
        args.input.display(),
        run.report.primitive_count,
        run.report.zone_count,
        run.report.final_region_count,
        run.report.timings.total_ms,
        cfg.seed,
    );
    for b in &run.report.bench {
        println!(
            "  vs {}: P={:.4} R={:.4} F={:.4}",
            b.gt, b.result.precision, b.result.recall, b.result.f_measure
        );
    }
    if let Some(best) = run.report.best_f {
        println!("  best F = {best:.4}");
    }
    println!("  wrote {}", paths.report.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
