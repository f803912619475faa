use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Minimal sample size shared by every robust estimator in this crate.
pub(crate) const MINIMAL_SAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Pixels for image-space models, scene units for the upgrade fit.
    pub inlier_threshold: f64,
    pub min_inlier_ratio: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 256,
            inlier_threshold: 2.0,
            min_inlier_ratio: 0.25,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.max_iterations < 1 {
            return Err(GeometryError::InvalidInput("max_iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(GeometryError::InvalidInput("inlier_threshold must be > 0".into()));
        }
        if !(self.min_inlier_ratio > 0.0 && self.min_inlier_ratio <= 1.0) {
            return Err(GeometryError::InvalidInput(
                "min_inlier_ratio must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Smallest acceptable consensus for `n` data.
    pub fn required_inliers(&self, n: usize) -> usize {
        MINIMAL_SAMPLE.max((self.min_inlier_ratio * n as f64).ceil() as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome<M> {
    pub model: M,
    pub inliers: Vec<bool>,
}

impl<M> RansacOutcome<M> {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

struct Candidate {
    count: usize,
    refit_cost: f64,
    mask: Vec<bool>,
}

/// Fixed-iteration RANSAC over minimal samples of four.
///
/// Each hypothesis that reaches the best consensus size is refit on its
/// consensus set; equal sizes are ranked by refit cost, then by iteration.
/// The winner is refit on its consensus and the returned mask is evaluated
/// against that refit.
pub(crate) fn run_ransac<D, M>(
    data: &[D],
    cfg: &RansacConfig,
    fit: impl Fn(&[D]) -> Result<M, GeometryError>,
    residual: impl Fn(&M, &D) -> f64,
) -> Result<RansacOutcome<M>, GeometryError>
where
    D: Clone,
{
    cfg.validate()?;
    let n = data.len();
    let required = cfg.required_inliers(n);
    if n < MINIMAL_SAMPLE {
        return Err(GeometryError::InsufficientInliers { found: n, required });
    }

    let consensus = |model: &M| -> Vec<bool> {
        data.iter()
            .map(|d| {
                let r = residual(model, d);
                r.is_finite() && r <= cfg.inlier_threshold
            })
            .collect()
    };
    let subset = |mask: &[bool]| -> Vec<D> {
        data.iter()
            .zip(mask)
            .filter(|(_, &keep)| keep)
            .map(|(d, _)| d.clone())
            .collect()
    };
    let cost_on = |model: &M, mask: &[bool]| -> f64 {
        data.iter()
            .zip(mask)
            .filter(|(_, &keep)| keep)
            .map(|(d, _)| residual(model, d).powi(2))
            .sum()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<Candidate> = None;
    let mut any_fit = false;
    let mut fit_error = None;
    // With exactly four data every sample is the same set.
    let iterations = if n == MINIMAL_SAMPLE { 1 } else { cfg.max_iterations };
    for _ in 0..iterations {
        let idx = rand::seq::index::sample(&mut rng, n, MINIMAL_SAMPLE);
        let sample: Vec<D> = idx.iter().map(|i| data[i].clone()).collect();
        let model = match fit(&sample) {
            Ok(m) => m,
            Err(e) => {
                fit_error = Some(e);
                continue;
            }
        };
        any_fit = true;
        let mask = consensus(&model);
        let count = mask.iter().filter(|&&b| b).count();
        if count < MINIMAL_SAMPLE {
            continue;
        }
        if let Some(b) = &best {
            if count < b.count {
                continue;
            }
        }
        let Ok(refit) = fit(&subset(&mask)) else { continue };
        let refit_cost = cost_on(&refit, &mask);
        let better = match &best {
            None => true,
            Some(b) => count > b.count || refit_cost < b.refit_cost,
        };
        if better {
            best = Some(Candidate {
                count,
                refit_cost,
                mask,
            });
        }
    }

    // When no sample could be fit at all, the fit's own error (typically a
    // degenerate configuration) is more informative than an empty consensus.
    let best = match (best, fit_error) {
        (Some(b), _) => b,
        (None, Some(e)) if !any_fit => return Err(e),
        (None, _) => return Err(GeometryError::InsufficientInliers { found: 0, required }),
    };
    if best.count < required {
        return Err(GeometryError::InsufficientInliers {
            found: best.count,
            required,
        });
    }
    let model = fit(&subset(&best.mask))?;
    let inliers = consensus(&model);
    let found = inliers.iter().filter(|&&b| b).count();
    if found < required {
        return Err(GeometryError::InsufficientInliers { found, required });
    }
    Ok(RansacOutcome { model, inliers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut cfg = RansacConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.max_iterations = 0;
        assert!(cfg.validate().is_err());
        cfg = RansacConfig { inlier_threshold: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg = RansacConfig { min_inlier_ratio: 1.5, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn required_inliers_floor() {
        let cfg = RansacConfig { min_inlier_ratio: 0.5, ..Default::default() };
        assert_eq!(cfg.required_inliers(4), 4);
        assert_eq!(cfg.required_inliers(100), 50);
        assert_eq!(cfg.required_inliers(101), 51);
    }

    // 1D "model": constant value fit by mean of the sample.
    #[test]
    fn finds_constant_among_outliers() {
        let mut data: Vec<f64> = vec![5.0; 30];
        data.extend((0..10).map(|i| 100.0 + i as f64 * 7.0));
        let cfg = RansacConfig { inlier_threshold: 0.5, ..Default::default() };
        let out = run_ransac(
            &data,
            &cfg,
            |s: &[f64]| Ok(s.iter().sum::<f64>() / s.len() as f64),
            |m, d| (m - d).abs(),
        )
        .unwrap();
        assert_eq!(out.inlier_count(), 30);
        assert!((out.model - 5.0).abs() < 1e-12);
    }
}
