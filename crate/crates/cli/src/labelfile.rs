//! Plain-text label map format: `"W H\n"` then the row-major labels,
//! space-separated. Text keeps golden files diffable.

use std::fs;
use std::path::Path;

use evoseg::image::LabelMap;

use crate::{Error, Result};

pub fn write_label_map(path: &Path, labels: &LabelMap) -> Result<()> {
    let mut out = format!("{} {}\n", labels.width, labels.height);
    let body: Vec<String> = labels.labels.iter().map(u32::to_string).collect();
    out.push_str(&body.join(" "));
    out.push('\n');
    fs::write(path, out)?;
    Ok(())
}

pub fn read_label_map(path: &Path) -> Result<LabelMap> {
    let text = fs::read_to_string(path)?;
    let mut tokens = text.split_ascii_whitespace();
    let mut next_int = |what: &str| -> Result<u32> {
        tokens
            .next()
            .ok_or_else(|| Error::format(path, format!("missing {what}")))?
            .parse::<u32>()
            .map_err(|e| Error::format(path, format!("bad {what}: {e}")))
    };
    let width = next_int("width")?;
    let height = next_int("height")?;
    let mut labels = Vec::with_capacity((width * height) as usize);
    for _ in 0..width as usize * height as usize {
        labels.push(next_int("label")?);
    }
    if tokens.next().is_some() {
        return Err(Error::format(path, "trailing tokens after label data"));
    }
    Ok(LabelMap::new(width, height, labels)?)
}
