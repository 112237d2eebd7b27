//! Output bundle of one run: label map text, boundary PBM, mean-color and
//! original images, and the JSON report.

use std::path::{Path, PathBuf};

use evoseg::bench::boundary_of;
use evoseg::image::{mean_color_image, ImageBuffer, LabelMap};
use evoseg::RunReport;

use crate::{labelfile, netpbm, Result};

pub struct OutputPaths {
    pub labels: PathBuf,
    pub boundary: PathBuf,
    pub mean: PathBuf,
    pub original: PathBuf,
    pub report: PathBuf,
}

/// Writes the five output files next to `prefix` (which may carry a
/// directory component).
pub fn write_outputs(
    prefix: &Path,
    img: &ImageBuffer,
    labels: &LabelMap,
    report: &RunReport,
) -> Result<OutputPaths> {
    let ext = if img.channels == 1 { "pgm" } else { "ppm" };
    let with_suffix = |suffix: &str| -> PathBuf {
        let mut name = prefix.file_name().unwrap_or_default().to_os_string();
        name.push(suffix);
        prefix.with_file_name(name)
    };
    let paths = OutputPaths {
        labels: with_suffix(".labels.txt"),
        boundary: with_suffix(".boundary.pbm"),
        mean: with_suffix(&format!(".mean.{ext}")),
        original: with_suffix(&format!(".original.{ext}")),
        report: with_suffix(".report.json"),
    };

    labelfile::write_label_map(&paths.labels, labels)?;
    netpbm::write_boundary_map(&paths.boundary, &boundary_of(labels))?;
    netpbm::save_image(&paths.mean, &mean_color_image(img, labels)?)?;
    netpbm::save_image(&paths.original, img)?;
    std::fs::write(
        &paths.report,
        serde_json::to_string_pretty(report).expect("report serializes") + "\n",
    )?;
    Ok(paths)
}
