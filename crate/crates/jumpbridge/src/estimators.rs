//! Kernel estimators of the bridge dynamics. At time t in [t_i, t_{i+1}) with
//! current state x and simulated grid history x_1..x_i, the drift and jump
//! intensity of the entropic bridge are conditional expectations of the
//! pinning ratio F_i under the data law. Both are estimated Nadaraya-Watson
//! style over the M sample paths:
//!
//!   drift  = sigma sigma^T  (sum_m grad F_i(t, x_i, x, X^m_{i+1}) Kbar_m)
//!                          / (sum_m      F_i(t, x_i, x, X^m_{i+1}) Kbar_m)
//!
//! with Kbar_m a multiplicative quartic kernel over the Markov window of past
//! grid dates. Substituting the Poisson-mixture form of the reference
//! increment density and convolving with the jump-size law turns the jump
//! measure into a finite Gaussian mixture whose components, weights and total
//! rate are computed here in closed form; simulation then only needs
//! categorical sampling plus Gaussian draws.
//!
//! All sums are accumulated under a shared log-scale shift so the estimators
//! stay finite arbitrarily close to the next grid date, where the raw terms
//! overflow or underflow in linear space.

use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::params::{KernelConfig, ReferenceParams};
use crate::reference::{log_density_mixed, log_sum_exp};

/// Quartic (biweight-style) kernel evaluated at a squared norm:
/// K(u) = (1 - |u|^2)^2 on |u| <= 1, 0 outside.
#[inline]
pub fn quartic_kernel_sq(norm_sq: f64) -> f64 {
    if norm_sq >= 1.0 {
        0.0
    } else {
        let w = 1.0 - norm_sq;
        w * w
    }
}

/// Simulated history of one trajectory up to grid date t_i: `values[j]` is the
/// state at t_j for j = 0..=interval. The value at t_0 is the common start.
#[derive(Debug, Clone, Copy)]
pub struct PathHistory<'a> {
    pub interval: usize,
    pub values: &'a [Vec<f64>],
}

impl<'a> PathHistory<'a> {
    pub fn new(interval: usize, values: &'a [Vec<f64>]) -> Result<Self> {
        if values.len() != interval + 1 {
            return Err(Error::Shape(format!(
                "history for interval {interval} needs {} grid values, got {}",
                interval + 1,
                values.len()
            )));
        }
        Ok(PathHistory { interval, values })
    }

    /// Conditioning state at t_i, the anchor of every pinning-weight
    /// denominator on the current interval.
    pub fn state_at_interval_start(&self) -> &[f64] {
        &self.values[self.interval]
    }
}

/// Per-sample conditioning weights Kbar_m: the product of quartic kernels
/// K((x_j - X^m_{t_j}) / h) over the Markov window j = i-k+1..=i (clipped at
/// the first grid date; empty at i = 0, where every weight is 1).
pub fn kernel_weights(ds: &Dataset, hist: &PathHistory, cfg: &KernelConfig) -> Result<Vec<f64>> {
    cfg.validate_against(ds.grid.n_intervals())?;
    let i = hist.interval;
    if i >= ds.grid.n_intervals() {
        return Err(Error::Shape(format!(
            "interval {i} out of range for a grid with {} intervals",
            ds.grid.n_intervals()
        )));
    }
    let d = ds.dim();
    for v in hist.values {
        if v.len() != d {
            return Err(Error::Shape("history dimension mismatch".into()));
        }
    }
    let lo = (i + 1).saturating_sub(cfg.markov_order).max(1);
    let inv_h2 = 1.0 / (cfg.bandwidth * cfg.bandwidth);
    let mut weights = Vec::with_capacity(ds.n_series());
    for series in &ds.values {
        let mut w = 1.0;
        for j in lo..=i {
            let mut norm_sq = 0.0;
            for p in 0..d {
                let diff = hist.values[j][p] - series[j][p];
                norm_sq += diff * diff * inv_h2;
            }
            w *= quartic_kernel_sq(norm_sq);
            if w == 0.0 {
                break;
            }
        }
        weights.push(w);
    }
    Ok(weights)
}

/// One Gaussian component of the conditional jump-size mixture. A zero
/// variance entry marks a deterministic coordinate; the all-zero case is the
/// Dirac component of the pure-jump model (a jump exactly onto a data point).
#[derive(Debug, Clone)]
pub struct MixtureComponent {
    pub prob: f64,
    pub mean: Vec<f64>,
    pub var_diag: Vec<f64>,
}

/// Conditional jump-size law at (t, x): a finite Gaussian mixture together
/// with the total jump rate it integrates to.
#[derive(Debug, Clone)]
pub struct JumpMixture {
    pub components: Vec<MixtureComponent>,
    pub total_rate: f64,
}

/// Weight below which mixture components are dropped (probabilities are
/// renormalized afterwards).
pub const COMPONENT_PRUNE: f64 = 1e-15;

/// Draw one jump size. Components are scanned in their stored order
/// (ascending jump count, then sample index) against a single uniform, so
/// draws are reproducible given the stream.
pub fn sample_jump<R: Rng>(mix: &JumpMixture, rng: &mut R) -> Vec<f64> {
    assert!(
        !mix.components.is_empty(),
        "sample_jump needs at least one component"
    );
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut chosen = mix.components.len() - 1;
    for (idx, comp) in mix.components.iter().enumerate() {
        acc += comp.prob;
        if u < acc {
            chosen = idx;
            break;
        }
    }
    let comp = &mix.components[chosen];
    comp.mean
        .iter()
        .zip(&comp.var_diag)
        .map(|(&m, &v)| {
            if v == 0.0 {
                m
            } else {
                let eps: f64 = rng.sample(rand_distr::StandardNormal);
                m + v.sqrt() * eps
            }
        })
        .collect()
}

/// Precomputed per-interval context: which samples have positive kernel
/// weight, their log weights net of the per-sample increment-density
/// denominator, and the interval geometry. Everything here is constant while
/// the trajectory crosses [t_i, t_{i+1}), so simulators build it once per
/// interval and evaluate drift/rate/mixture against it at every substep.
pub struct IntervalEstimator<'a> {
    params: &'a ReferenceParams,
    pub interval: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// (sample index, log Kbar_m - log f0_dt(X^m_{i+1} - x_i))
    samples: Vec<(usize, f64)>,
    next_values: Vec<&'a [f64]>,
    /// true when every kernel weight vanished and the estimator fell back to
    /// the unweighted average over all samples
    pub unweighted_fallback: bool,
    d: usize,
    scratch: Vec<f64>,
}

impl<'a> IntervalEstimator<'a> {
    pub fn new(
        ds: &'a Dataset,
        params: &'a ReferenceParams,
        cfg: &KernelConfig,
        hist: &PathHistory,
    ) -> Result<Self> {
        if params.dim() != ds.dim() {
            return Err(Error::Shape(format!(
                "model dimension {} vs dataset dimension {}",
                params.dim(),
                ds.dim()
            )));
        }
        let weights = kernel_weights(ds, hist, cfg)?;
        let i = hist.interval;
        let t_start = ds.grid.dates()[i];
        let t_end = ds.grid.dates()[i + 1];
        let dt = t_end - t_start;
        let x_i = hist.state_at_interval_start().to_vec();
        let all_zero = weights.iter().all(|&w| w == 0.0);
        if all_zero {
            log::debug!(
                "interval {i}: every kernel weight vanished at state {x_i:?}; falling back to the unweighted average"
            );
        }
        let mut scratch = Vec::new();
        let mut samples = Vec::new();
        let mut next_values = Vec::new();
        let mut diff = vec![0.0; ds.dim()];
        for (m, &w) in weights.iter().enumerate() {
            if w == 0.0 && !all_zero {
                continue;
            }
            let next = ds.values[m][i + 1].as_slice();
            for (p, dv) in diff.iter_mut().enumerate() {
                *dv = next[p] - x_i[p];
            }
            let log_den = log_density_mixed(params, dt, &diff, &mut scratch);
            let log_w = if all_zero { 0.0 } else { w.ln() };
            samples.push((m, log_w - log_den));
            next_values.push(next);
        }
        Ok(IntervalEstimator {
            params,
            interval: i,
            t_start,
            t_end,
            samples,
            next_values,
            unweighted_fallback: all_zero,
            d: ds.dim(),
            scratch,
        })
    }

    pub fn params(&self) -> &ReferenceParams {
        self.params
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        if !(t >= self.t_start && t < self.t_end) {
            return Err(Error::Domain(format!(
                "t = {t} outside [{}, {}) for interval {}",
                self.t_start, self.t_end, self.interval
            )));
        }
        Ok(self.t_end - t)
    }

    /// Number of continuous term slots per sample: jump counts 0..=n_J+1. The
    /// extra slot feeds the rate sum, whose mixture components run to j = n_J
    /// and therefore touch the (n_J + 1)-jump Gaussian.
    #[inline]
    fn n_terms(&self) -> usize {
        self.params.n_jumps_trunc + 2
    }

    /// Fill the flat log-term table: entry [s * n_terms + k] is
    /// log Poi_k(lambda0 tau) + log N(u_s; k c, sigma^2 tau + k gamma^2) plus
    /// the sample's log weight. Returns the running maximum. In pure-jump mode
    /// slot k = 0 holds the atom (alive only when u_s is exactly zero).
    fn fill_table(&mut self, tau: f64, x: &[f64]) -> f64 {
        let n_terms = self.n_terms();
        let n_j = self.params.n_jumps_trunc;
        let lam_tau = self.params.lambda0 * tau;
        let log_lam_tau = if lam_tau > 0.0 {
            lam_tau.ln()
        } else {
            f64::NEG_INFINITY
        };
        let d = self.d;
        self.scratch.clear();
        self.scratch
            .resize(self.samples.len() * n_terms, f64::NEG_INFINITY);
        let mut max = f64::NEG_INFINITY;
        for (s, &(_, log_w)) in self.samples.iter().enumerate() {
            let next = self.next_values[s];
            let base = s * n_terms;
            let mut log_poi = -lam_tau; // log Poi_0
            for k in 0..=n_j + 1 {
                if k > 0 {
                    log_poi += log_lam_tau - (k as f64).ln();
                    if log_poi == f64::NEG_INFINITY {
                        break;
                    }
                }
                let kf = k as f64;
                let mut val = log_poi + log_w;
                if k == 0 && self.params.pure_jump {
                    // atom: only contributes at an exact hit
                    if (0..d).any(|p| next[p] != x[p]) {
                        continue;
                    }
                } else {
                    for p in 0..d {
                        let sg = self.params.sigma_eff(p);
                        let v = sg * sg * tau + kf * self.params.gamma[p] * self.params.gamma[p];
                        let u = next[p] - x[p] - kf * self.params.c[p];
                        val -= 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + u * u / v);
                    }
                }
                self.scratch[base + k] = val;
                if val > max {
                    max = val;
                }
            }
        }
        max
    }

    /// Drift and total jump rate at (t, x), sharing one pass over the term
    /// table. `drift` is None in pure-jump mode.
    pub fn drift_and_rate(&mut self, t: f64, x: &[f64]) -> Result<(Option<Vec<f64>>, f64)> {
        let tau = self.check_time(t)?;
        if x.len() != self.d {
            return Err(Error::Shape("state dimension mismatch".into()));
        }
        let n_terms = self.n_terms();
        let n_j = self.params.n_jumps_trunc;
        let max = self.fill_table(tau, x);
        if max == f64::NEG_INFINITY {
            return Err(Error::Estimation {
                interval: self.interval,
                t,
                state: x.to_vec(),
            });
        }
        let want_drift = !self.params.pure_jump;
        let mut den = 0.0;
        let mut rate_num = 0.0;
        let mut drift_num = vec![0.0; if want_drift { self.d } else { 0 }];
        for s in 0..self.samples.len() {
            let next = self.next_values[s];
            let base = s * n_terms;
            for k in 0..=n_j + 1 {
                let lt = self.scratch[base + k];
                if lt == f64::NEG_INFINITY {
                    continue;
                }
                let w = (lt - max).exp();
                if k >= 1 {
                    rate_num += k as f64 * w;
                }
                if k <= n_j {
                    den += w;
                    if want_drift && !(k == 0 && self.params.pure_jump) {
                        let kf = k as f64;
                        for p in 0..self.d {
                            let sg = self.params.sigma_eff(p);
                            let v = sg * sg * tau
                                + kf * self.params.gamma[p] * self.params.gamma[p];
                            let u = next[p] - x[p] - kf * self.params.c[p];
                            drift_num[p] += w * u / v;
                        }
                    }
                }
            }
        }
        if !(den > 0.0) || !den.is_finite() {
            return Err(Error::Estimation {
                interval: self.interval,
                t,
                state: x.to_vec(),
            });
        }
        let rate = rate_num / (tau * den);
        let drift = if want_drift {
            let mut dr = drift_num;
            for p in 0..self.d {
                dr[p] *= self.params.sigma[p] * self.params.sigma[p] / den;
            }
            Some(dr)
        } else {
            None
        };
        Ok((drift, rate))
    }

    /// Total jump rate only.
    pub fn rate(&mut self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.drift_and_rate(t, x)?.1)
    }

    /// Materialize the conditional jump-size mixture at (t, x). Components are
    /// ordered by jump count j, then sample index; weights below
    /// `COMPONENT_PRUNE` are dropped and the remainder renormalized. The
    /// returned total rate is consistent with `drift_and_rate` at the same
    /// point by construction.
    pub fn mixture(&mut self, t: f64, x: &[f64]) -> Result<JumpMixture> {
        let tau = self.check_time(t)?;
        if x.len() != self.d {
            return Err(Error::Shape("state dimension mismatch".into()));
        }
        let n_terms = self.n_terms();
        let n_j = self.params.n_jumps_trunc;
        let lam_tau = self.params.lambda0 * tau;
        if lam_tau == 0.0 {
            return Ok(JumpMixture {
                components: Vec::new(),
                total_rate: 0.0,
            });
        }
        let max = self.fill_table(tau, x);
        if max == f64::NEG_INFINITY {
            return Err(Error::Estimation {
                interval: self.interval,
                t,
                state: x.to_vec(),
            });
        }
        // denominator: truncated density terms k <= n_J
        let mut den = 0.0;
        for s in 0..self.samples.len() {
            let base = s * n_terms;
            for k in 0..=n_j {
                let lt = self.scratch[base + k];
                if lt > f64::NEG_INFINITY {
                    den += (lt - max).exp();
                }
            }
        }
        if !(den > 0.0) || !den.is_finite() {
            return Err(Error::Estimation {
                interval: self.interval,
                t,
                state: x.to_vec(),
            });
        }
        // mixture weights: w_{j,m} C_{j,m} = (j+1)/(lambda0 tau) * term_{j+1},
        // scanned j-major so cumulative sampling order is deterministic
        let log_lam_tau = lam_tau.ln();
        let mut raw = Vec::new();
        let mut total = 0.0;
        for j in 0..=n_j {
            let shift = ((j + 1) as f64).ln() - log_lam_tau;
            for s in 0..self.samples.len() {
                let lt = self.scratch[s * n_terms + j + 1];
                if lt == f64::NEG_INFINITY {
                    continue;
                }
                let w = (lt + shift - max).exp();
                if w > 0.0 {
                    raw.push((j, s, w));
                    total += w;
                }
            }
        }
        if raw.is_empty() || total == 0.0 {
            return Ok(JumpMixture {
                components: Vec::new(),
                total_rate: 0.0,
            });
        }
        let mut components = Vec::with_capacity(raw.len());
        let mut kept = 0.0;
        for &(j, s, w) in &raw {
            let prob = w / total;
            if prob < COMPONENT_PRUNE {
                continue;
            }
            kept += prob;
            let jf = j as f64;
            let next = self.next_values[s];
            let mut mean = Vec::with_capacity(self.d);
            let mut var = Vec::with_capacity(self.d);
            for p in 0..self.d {
                let sg = self.params.sigma_eff(p);
                let g2 = self.params.gamma[p] * self.params.gamma[p];
                let v_j = sg * sg * tau + jf * g2;
                let v_j1 = v_j + g2;
                let u = next[p] - x[p];
                mean.push(((u - jf * self.params.c[p]) * g2 + self.params.c[p] * v_j) / v_j1);
                var.push(g2 * v_j / v_j1);
            }
            components.push(MixtureComponent {
                prob,
                mean,
                var_diag: var,
            });
        }
        for comp in &mut components {
            comp.prob /= kept;
        }
        let total_rate = self.params.lambda0 * total / den;
        Ok(JumpMixture {
            components,
            total_rate,
        })
    }
}

/// Drift of the bridge at (t, x) given the simulated history: sigma sigma^T
/// times the kernel-weighted average of grad F over F. Falls back to the
/// unweighted average when every kernel weight vanishes; errors only if the
/// denominator still degenerates.
pub fn drift_hat(
    ds: &Dataset,
    params: &ReferenceParams,
    cfg: &KernelConfig,
    hist: &PathHistory,
    t: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    if params.pure_jump {
        return Err(Error::Unsupported(
            "the pure-jump bridge has no drift component".into(),
        ));
    }
    let mut est = IntervalEstimator::new(ds, params, cfg, hist)?;
    let (drift, _) = est.drift_and_rate(t, x)?;
    Ok(drift.expect("diffusive mode yields a drift"))
}

/// Conditional jump-size mixture and total rate at (t, x).
pub fn build_jump_mixture(
    ds: &Dataset,
    params: &ReferenceParams,
    cfg: &KernelConfig,
    hist: &PathHistory,
    t: f64,
    x: &[f64],
) -> Result<JumpMixture> {
    let mut est = IntervalEstimator::new(ds, params, cfg, hist)?;
    est.mixture(t, x)
}

/// Jump intensity exactly at grid date t_{i+1}: the reference transition
/// ratio times a kernel estimate of the ratio of next-date conditional
/// densities,
///
///   lambda0 * f0_dt(x - x_i)/f0_dt(x + z - x_i)
///           * sum_m Kbar_m K_h(x + z - X^m_{i+1}) / sum_m Kbar_m K_h(x - X^m_{i+1}).
///
/// Provided for completeness: the simulation schemes never place jumps at
/// grid dates, so nothing in `simulate` consumes this.
pub fn intensity_at_grid(
    ds: &Dataset,
    params: &ReferenceParams,
    cfg: &KernelConfig,
    hist: &PathHistory,
    x: &[f64],
    z: &[f64],
) -> Result<f64> {
    if params.dim() != ds.dim() {
        return Err(Error::Shape("model/dataset dimension mismatch".into()));
    }
    let d = ds.dim();
    if x.len() != d || z.len() != d {
        return Err(Error::Shape("state dimension mismatch".into()));
    }
    if params.lambda0 == 0.0 {
        return Ok(0.0);
    }
    let i = hist.interval;
    let dt = ds.grid.interval_len(i);
    let x_i = hist.state_at_interval_start();
    let mut weights = kernel_weights(ds, hist, cfg)?;
    if weights.iter().all(|&w| w == 0.0) {
        weights.iter_mut().for_each(|w| *w = 1.0);
    }
    let inv_h2 = 1.0 / (cfg.bandwidth * cfg.bandwidth);
    let mut num = 0.0;
    let mut den = 0.0;
    for (m, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let next = &ds.values[m][i + 1];
        let mut n_disp = 0.0;
        let mut n_disp_z = 0.0;
        for p in 0..d {
            let u = x[p] - next[p];
            n_disp += u * u * inv_h2;
            let uz = x[p] + z[p] - next[p];
            n_disp_z += uz * uz * inv_h2;
        }
        den += w * quartic_kernel_sq(n_disp);
        num += w * quartic_kernel_sq(n_disp_z);
    }
    if den == 0.0 {
        return Err(Error::Estimation {
            interval: i,
            t: ds.grid.dates()[i + 1],
            state: x.to_vec(),
        });
    }
    if num == 0.0 {
        return Ok(0.0);
    }
    let mut scratch = Vec::new();
    let disp: Vec<f64> = x.iter().zip(x_i).map(|(a, b)| a - b).collect();
    let disp_z: Vec<f64> = x
        .iter()
        .zip(z)
        .zip(x_i)
        .map(|((a, dz), b)| a + dz - b)
        .collect();
    let log_ratio = log_density_mixed(params, dt, &disp, &mut scratch)
        - log_density_mixed(params, dt, &disp_z, &mut scratch);
    Ok(params.lambda0 * log_ratio.exp() * num / den)
}

/// Log-scale total over the mixture of a `JumpMixture`'s component weights;
/// test helper shared with the calibration diagnostics.
pub fn mixture_log_norm(mix: &JumpMixture) -> f64 {
    log_sum_exp(
        &mix.components
            .iter()
            .map(|c| c.prob.ln())
            .collect::<Vec<_>>(),
    )
}
