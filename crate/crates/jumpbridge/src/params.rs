use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the automatically chosen jump-count truncation. Explicit user
/// values may exceed it.
pub const AUTO_TRUNC_CAP: usize = 60;
/// Poisson tail mass the automatic truncation pushes below (over the longest
/// grid interval).
pub const AUTO_TRUNC_TAIL: f64 = 1e-10;

/// Parameters of the reference jump diffusion: X_t = sigma W_t + compound
/// Poisson with rate `lambda0` and Gaussian jump sizes N(c, diag(gamma^2)).
/// `sigma` is the diagonal of the diffusion matrix; `pure_jump` switches off
/// the diffusion entirely (sigma is ignored and treated as zero), in which
/// case the increment law carries an atom at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceParams {
    pub sigma: Vec<f64>,
    pub lambda0: f64,
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Truncation order of the jump-count sum in the increment density.
    pub n_jumps_trunc: usize,
    #[serde(default)]
    pub pure_jump: bool,
}

impl ReferenceParams {
    pub fn new(
        sigma: Vec<f64>,
        lambda0: f64,
        c: Vec<f64>,
        gamma: Vec<f64>,
        n_jumps_trunc: usize,
        pure_jump: bool,
    ) -> Result<Self> {
        let p = ReferenceParams {
            sigma,
            lambda0,
            c,
            gamma,
            n_jumps_trunc,
            pure_jump,
        };
        p.validate()?;
        Ok(p)
    }

    /// Scalar (d = 1) constructor.
    pub fn scalar(sigma: f64, lambda0: f64, c: f64, gamma: f64, n_jumps_trunc: usize) -> Result<Self> {
        ReferenceParams::new(vec![sigma], lambda0, vec![c], vec![gamma], n_jumps_trunc, false)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.sigma.len();
        if d == 0 {
            return Err(Error::Config("dimension must be >= 1".into()));
        }
        if self.c.len() != d || self.gamma.len() != d {
            return Err(Error::Config(format!(
                "sigma/c/gamma lengths disagree: {} / {} / {}",
                d,
                self.c.len(),
                self.gamma.len()
            )));
        }
        if !self.pure_jump && self.sigma.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Config(
                "sigma must be strictly positive (set pure_jump for a driftless pure-jump reference)".into(),
            ));
        }
        if self.lambda0 < 0.0 || !self.lambda0.is_finite() {
            return Err(Error::Config(format!("lambda0 must be >= 0, got {}", self.lambda0)));
        }
        if self.pure_jump && self.lambda0 == 0.0 {
            return Err(Error::Config("pure-jump reference needs lambda0 > 0".into()));
        }
        if self.gamma.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::Config("gamma must be strictly positive".into()));
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("c must be finite".into()));
        }
        if self.lambda0 > 0.0 && self.n_jumps_trunc == 0 {
            return Err(Error::Config(
                "n_jumps_trunc must be >= 1 when lambda0 > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    /// Effective diffusion coefficient in dimension p (zero in pure-jump mode).
    #[inline]
    pub fn sigma_eff(&self, p: usize) -> f64 {
        if self.pure_jump {
            0.0
        } else {
            self.sigma[p]
        }
    }
}

/// Smallest k whose Poisson(lambda0 * max_dt) tail mass beyond k is below
/// `AUTO_TRUNC_TAIL`, capped at `AUTO_TRUNC_CAP` and floored at `floor`
/// (callers pass a floor to force a larger truncation).
pub fn auto_n_jumps(lambda0: f64, max_dt: f64, floor: usize) -> usize {
    let mean = lambda0 * max_dt;
    if mean <= 0.0 {
        return floor.max(1);
    }
    let mut log_pmf = -mean; // log P(K = 0)
    let mut cum = log_pmf.exp();
    let mut k = 0usize;
    while 1.0 - cum > AUTO_TRUNC_TAIL && k < AUTO_TRUNC_CAP {
        k += 1;
        log_pmf += mean.ln() - (k as f64).ln();
        cum += log_pmf.exp();
    }
    k.max(floor).max(1)
}

/// Kernel configuration for the conditional-law estimators: bandwidth h of the
/// quartic kernel and the Markov order k (how many past grid dates enter the
/// conditioning window).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: f64,
    pub markov_order: usize,
}

impl KernelConfig {
    pub fn new(bandwidth: f64, markov_order: usize) -> Result<Self> {
        let k = KernelConfig {
            bandwidth,
            markov_order,
        };
        k.validate_against(usize::MAX)?;
        Ok(k)
    }

    /// Full validation needs the grid size: 1 <= markov_order <= N.
    pub fn validate_against(&self, n_intervals: usize) -> Result<()> {
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::Config(format!(
                "bandwidth must be > 0, got {}",
                self.bandwidth
            )));
        }
        if self.markov_order == 0 {
            return Err(Error::Config("markov_order must be >= 1".into()));
        }
        if self.markov_order > n_intervals {
            return Err(Error::Config(format!(
                "markov_order {} exceeds the number of grid intervals {}",
                self.markov_order, n_intervals
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_catches_bad_params() {
        assert!(ReferenceParams::scalar(1.0, 5.0, 0.0, 0.5, 10).is_ok());
        assert!(ReferenceParams::scalar(0.0, 5.0, 0.0, 0.5, 10).is_err());
        assert!(ReferenceParams::scalar(1.0, -1.0, 0.0, 0.5, 10).is_err());
        assert!(ReferenceParams::scalar(1.0, 5.0, 0.0, 0.0, 10).is_err());
        assert!(ReferenceParams::scalar(1.0, 5.0, 0.0, 0.5, 0).is_err());
        assert!(ReferenceParams::new(vec![1.0], 5.0, vec![0.0, 0.0], vec![0.5], 10, false).is_err());
        // pure-jump mode ignores sigma, so zero sigma is fine there
        assert!(ReferenceParams::new(vec![0.0], 5.0, vec![0.0], vec![0.5], 10, true).is_ok());
        assert!(ReferenceParams::new(vec![0.0], 0.0, vec![0.0], vec![0.5], 10, true).is_err());
    }

    #[test]
    fn auto_truncation_tail_below_threshold() {
        // verify by direct Poisson tail computation
        for &(lam, dt) in &[(5.0f64, 0.1f64), (70.0, 1.0 / 252.0), (1000.0, 1.0 / 252.0), (2.0, 0.5)] {
            let n = auto_n_jumps(lam, dt, 1);
            let mean = lam * dt;
            let mut log_pmf = -mean;
            let mut cum = log_pmf.exp();
            for k in 1..=n {
                log_pmf += mean.ln() - (k as f64).ln();
                cum += log_pmf.exp();
            }
            if n < AUTO_TRUNC_CAP {
                assert!(
                    1.0 - cum < AUTO_TRUNC_TAIL,
                    "tail {} not below threshold for lam={lam} dt={dt} n={n}",
                    1.0 - cum
                );
            }
        }
    }

    #[test]
    fn auto_truncation_respects_floor_and_cap() {
        assert_eq!(auto_n_jumps(0.0, 1.0, 7), 7);
        assert!(auto_n_jumps(1e6, 1.0, 1) == AUTO_TRUNC_CAP);
        assert!(auto_n_jumps(0.1, 0.01, 25) == 25);
    }

    #[test]
    fn kernel_config_bounds() {
        assert!(KernelConfig::new(0.3, 1).is_ok());
        assert!(KernelConfig::new(0.0, 1).is_err());
        assert!(KernelConfig::new(0.3, 0).is_err());
        let k = KernelConfig::new(0.3, 5).unwrap();
        assert!(k.validate_against(4).is_err());
        assert!(k.validate_against(5).is_ok());
    }
}
