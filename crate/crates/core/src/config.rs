use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every free parameter of the pipeline.
///
/// Defaults follow the reference parameterization: `sigma_w = 0.02`,
/// `lambda_u = 0.98`, `lambda_l = 0.02`, `xi_c = 0.6`, `delta_t = 0.03`,
/// `alpha = 0.9`, `shrink = 0.98`, `n_stall = 20`, `ga_iters = 10`. The two
/// knobs that control segment count on real images are `r` (neighborhood
/// radius) and `theta_p` (maximum color difference, in raw 0-255 intensity
/// units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Neighborhood radius in pixels.
    pub r: f64,
    /// Maximum color difference (Manhattan, 0-255 units) for two segments
    /// to interact or merge.
    pub theta_p: f64,
    /// Normalizer for boundary edge energy in the first-iteration weight.
    pub sigma_w: f64,
    /// Status-pointer threshold above which a segment is absorbed.
    pub lambda_u: f64,
    /// Status-pointer threshold below which a segment matures.
    pub lambda_l: f64,
    /// Minimum interaction weight connecting matured segments into a core.
    pub xi_c: f64,
    /// Minimum zone size as a fraction of total image pixels.
    pub delta_t: f64,
    /// Color-vs-space coefficient of the immigration worth function.
    pub alpha: f64,
    /// Precision weight of the boundary F-measure.
    pub chi_0: f64,
    /// Per-iteration multiplicative shrink of rectangle half-extents.
    pub shrink: f64,
    /// Stage-2 stop: iterations the matured count must hold steady.
    pub n_stall: u32,
    /// Stage-3 stop: iteration cap.
    pub m_max: u32,
    /// Stage-3 stop: minimum deportation/immigration move rate.
    pub rate_min: f64,
    /// Stage-4 generation count.
    pub ga_iters: u32,
    /// Seed of the deterministic RNG consumed by stages 3 and 4.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            r: 9.0,
            theta_p: 17.0,
            sigma_w: 0.02,
            lambda_u: 0.98,
            lambda_l: 0.02,
            xi_c: 0.6,
            delta_t: 0.03,
            alpha: 0.9,
            chi_0: 0.5,
            shrink: 0.98,
            n_stall: 20,
            m_max: 50,
            rate_min: 0.01,
            ga_iters: 10,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Rejects any out-of-range field, naming it.
    pub fn validate(&self) -> Result<()> {
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig {
                    field,
                    reason: format!("must be > 0, got {v}"),
                })
            }
        }
        fn unit(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig {
                    field,
                    reason: format!("must be in [0,1], got {v}"),
                })
            }
        }

        positive("sigma_w", self.sigma_w)?;
        positive("theta_p", self.theta_p)?;
        positive("r", self.r)?;
        unit("lambda_l", self.lambda_l)?;
        unit("lambda_u", self.lambda_u)?;
        unit("xi_c", self.xi_c)?;
        unit("delta_t", self.delta_t)?;
        unit("alpha", self.alpha)?;
        unit("chi_0", self.chi_0)?;
        unit("shrink", self.shrink)?;
        unit("rate_min", self.rate_min)?;
        if self.lambda_l >= self.lambda_u {
            return Err(Error::InvalidConfig {
                field: "lambda_l",
                reason: format!(
                    "must be < lambda_u, got lambda_l={} lambda_u={}",
                    self.lambda_l, self.lambda_u
                ),
            });
        }
        if self.n_stall == 0 {
            return Err(Error::InvalidConfig {
                field: "n_stall",
                reason: "must be >= 1".into(),
            });
        }
        if self.m_max == 0 {
            return Err(Error::InvalidConfig {
                field: "m_max",
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range_fields_by_name() {
        let cases: Vec<(&str, Box<dyn Fn(&mut PipelineConfig)>)> = vec![
            ("sigma_w", Box::new(|c| c.sigma_w = 0.0)),
            ("theta_p", Box::new(|c| c.theta_p = -1.0)),
            ("r", Box::new(|c| c.r = 0.0)),
            ("lambda_l", Box::new(|c| c.lambda_l = -0.1)),
            ("lambda_u", Box::new(|c| c.lambda_u = 1.5)),
            ("xi_c", Box::new(|c| c.xi_c = 2.0)),
            ("delta_t", Box::new(|c| c.delta_t = -0.5)),
            ("alpha", Box::new(|c| c.alpha = 1.01)),
            ("chi_0", Box::new(|c| c.chi_0 = f64::NAN)),
            ("shrink", Box::new(|c| c.shrink = 1.2)),
            ("rate_min", Box::new(|c| c.rate_min = -0.01)),
            ("n_stall", Box::new(|c| c.n_stall = 0)),
            ("m_max", Box::new(|c| c.m_max = 0)),
        ];
        for (field, poison) in cases {
            let mut cfg = PipelineConfig::default();
            poison(&mut cfg);
            let err = cfg.validate().unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains(field), "error {msg:?} should name {field}");
        }
    }

    #[test]
    fn rejects_inverted_lambda_thresholds() {
        let cfg = PipelineConfig {
            lambda_l: 0.5,
            lambda_u: 0.5,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
