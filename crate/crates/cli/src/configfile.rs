//! `key=value` config files and flag overrides, layered as
//! defaults < file < flags.

use std::path::Path;

use evoseg::PipelineConfig;

use crate::{Error, Result};

/// Optional override for every pipeline parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub r: Option<f64>,
    pub theta_p: Option<f64>,
    pub sigma_w: Option<f64>,
    pub lambda_u: Option<f64>,
    pub lambda_l: Option<f64>,
    pub xi_c: Option<f64>,
    pub delta_t: Option<f64>,
    pub alpha: Option<f64>,
    pub chi_0: Option<f64>,
    pub shrink: Option<f64>,
    pub n_stall: Option<u32>,
    pub m_max: Option<u32>,
    pub rate_min: Option<f64>,
    pub ga_iters: Option<u32>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(
            r, theta_p, sigma_w, lambda_u, lambda_l, xi_c, delta_t, alpha, chi_0, shrink,
            n_stall, m_max, rate_min, ga_iters, seed
        );
    }
}

/// Parses one `key=value` per line; `#` starts a comment, blank lines are
/// ignored. Unknown keys and unparsable values are errors.
pub fn parse(text: &str, path: &Path) -> Result<Overrides> {
    let mut o = Overrides::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::format(
                path,
                format!("line {}: expected key=value, got {raw:?}", lineno + 1),
            ));
        };
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| {
            Error::format(
                path,
                format!("line {}: {key} expects {what}, got {value:?}", lineno + 1),
            )
        };
        macro_rules! parse_as {
            (f64) => {
                Some(value.parse::<f64>().map_err(|_| bad("a real number"))?)
            };
            (u32) => {
                Some(value.parse::<u32>().map_err(|_| bad("an integer"))?)
            };
            (u64) => {
                Some(value.parse::<u64>().map_err(|_| bad("an integer"))?)
            };
        }
        match key {
            "r" => o.r = parse_as!(f64),
            "theta_p" => o.theta_p = parse_as!(f64),
            "sigma_w" => o.sigma_w = parse_as!(f64),
            "lambda_u" => o.lambda_u = parse_as!(f64),
            "lambda_l" => o.lambda_l = parse_as!(f64),
            "xi_c" => o.xi_c = parse_as!(f64),
            "delta_t" => o.delta_t = parse_as!(f64),
            "alpha" => o.alpha = parse_as!(f64),
            "chi_0" => o.chi_0 = parse_as!(f64),
            "shrink" => o.shrink = parse_as!(f64),
            "n_stall" => o.n_stall = parse_as!(u32),
            "m_max" => o.m_max = parse_as!(u32),
            "rate_min" => o.rate_min = parse_as!(f64),
            "ga_iters" => o.ga_iters = parse_as!(u32),
            "seed" => o.seed = parse_as!(u64),
            other => {
                return Err(Error::format(
                    path,
                    format!("line {}: unknown key {other:?}", lineno + 1),
                ))
            }
        }
    }
    Ok(o)
}

pub fn load(path: &Path) -> Result<Overrides> {
    let text = std::fs::read_to_string(path)?;
    parse(&text, path)
}
