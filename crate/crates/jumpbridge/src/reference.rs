//! Increment law of the reference jump diffusion X_t = sigma W_t + J_t, with
//! J_t compound Poisson of rate lambda0 and N(c, diag(gamma^2)) jump sizes.
//!
//! Conditioning on the number of jumps over a window of length tau gives an
//! explicit Poisson mixture of Gaussians for the increment density,
//!
//!   f_tau(z) = sum_k  e^{-l t} (l t)^k / k!
//!              * prod_p N(z_p; k c_p, sigma_p^2 tau + k gamma_p^2),
//!
//! truncated at `n_jumps_trunc` terms. Everything is evaluated in log space:
//! the terms underflow long before they stop mattering to the ratios built on
//! top of them.
//!
//! In pure-jump mode (sigma = 0) the k = 0 term degenerates to an atom at
//! z = 0 with mass e^{-lambda0 tau}; the continuous part starts at k = 1. The
//! density is then taken with respect to (delta_0 + Lebesgue), so the value at
//! exactly z = 0 is the atom mass alone.

use crate::error::{Error, Result};
use crate::params::ReferenceParams;

/// log(k!) via lgamma-free running sums are handled by callers; this is the
/// direct small-k variant used where k is a loop index anyway.
#[inline]
fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("window length must be > 0, got {tau}")));
    }
    Ok(())
}

/// Fill `out[k] = log Poisson(mean) pmf at k`, k = 0..=n.
pub(crate) fn log_poisson_weights(mean: f64, n: usize, out: &mut Vec<f64>) {
    out.clear();
    if mean <= 0.0 {
        out.push(0.0);
        out.extend(std::iter::repeat(f64::NEG_INFINITY).take(n));
        return;
    }
    let log_mean = mean.ln();
    let mut v = -mean;
    out.push(v);
    for k in 1..=n {
        v += log_mean - (k as f64).ln();
        out.push(v);
    }
}

/// Log of the k-indexed continuous terms of f_tau at displacement `z`:
/// out[k] = log Poi_k + sum_p log N(z_p; k c_p, v_kp). In pure-jump mode the
/// k = 0 slot is -inf (that mass sits in the atom, not in a density term).
pub(crate) fn fill_log_terms(
    params: &ReferenceParams,
    tau: f64,
    z: &[f64],
    out: &mut Vec<f64>,
) {
    let d = params.dim();
    debug_assert_eq!(z.len(), d);
    let n = params.n_jumps_trunc;
    log_poisson_weights(params.lambda0 * tau, n, out);
    let k_start = if params.pure_jump {
        out[0] = f64::NEG_INFINITY;
        1
    } else {
        0
    };
    for k in k_start..=n {
        if out[k] == f64::NEG_INFINITY {
            continue;
        }
        let kf = k as f64;
        let mut log_g = 0.0;
        for p in 0..d {
            let s = params.sigma_eff(p);
            let v = s * s * tau + kf * params.gamma[p] * params.gamma[p];
            let u = z[p] - kf * params.c[p];
            log_g -= 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + u * u / v);
        }
        out[k] += log_g;
    }
}

#[inline]
pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = terms.iter().map(|&t| (t - m).exp()).sum();
    m + s.ln()
}

/// Atom mass of the pure-jump increment law: P(no jump over tau).
pub fn atom_log_mass(params: &ReferenceParams, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if !params.pure_jump {
        return Err(Error::Domain(
            "the increment law has an atom only in pure-jump mode".into(),
        ));
    }
    Ok(-params.lambda0 * tau)
}

/// Atom-aware log density with respect to the dominating measure
/// (delta_0 + Lebesgue in pure-jump mode, Lebesgue otherwise). Estimators use
/// this everywhere a data displacement may be exactly zero.
pub(crate) fn log_density_mixed(
    params: &ReferenceParams,
    tau: f64,
    z: &[f64],
    scratch: &mut Vec<f64>,
) -> f64 {
    if params.pure_jump && z.iter().all(|&v| v == 0.0) {
        return -params.lambda0 * tau;
    }
    fill_log_terms(params, tau, z, scratch);
    log_sum_exp(scratch)
}

/// Log of the continuous increment density log f_tau(z).
pub fn log_increment_density(params: &ReferenceParams, tau: f64, z: &[f64]) -> Result<f64> {
    check_tau(tau)?;
    if z.len() != params.dim() {
        return Err(Error::Shape(format!(
            "displacement has {} components, model is {}-dimensional",
            z.len(),
            params.dim()
        )));
    }
    if params.pure_jump && z.iter().all(|&v| v == 0.0) {
        return Err(Error::Domain(
            "pure-jump density queried at the atom; use atom_log_mass for z = 0".into(),
        ));
    }
    let mut terms = Vec::new();
    fill_log_terms(params, tau, z, &mut terms);
    Ok(log_sum_exp(&terms))
}

/// Increment density f_tau(z).
pub fn increment_density(params: &ReferenceParams, tau: f64, z: &[f64]) -> Result<f64> {
    Ok(log_increment_density(params, tau, z)?.exp())
}

/// Log of the pinning ratio F_i(t, x_i, x, x_next)
/// = f_{t_next - t}(x_next - x) / f_{t_next - t_i}(x_next - x_i),
/// the conditional weight a state x at time t in [t_i, t_next) receives given
/// the bridge must reach the law of x_next. Computed as a log difference; the
/// caller exponentiates only when safe.
pub fn log_ratio_f(
    params: &ReferenceParams,
    t: f64,
    t_i: f64,
    t_next: f64,
    x_i: &[f64],
    x: &[f64],
    x_next: &[f64],
) -> Result<f64> {
    if !(t >= t_i && t < t_next) {
        return Err(Error::Domain(format!(
            "t = {t} must lie in [{t_i}, {t_next})"
        )));
    }
    let d = params.dim();
    if x_i.len() != d || x.len() != d || x_next.len() != d {
        return Err(Error::Shape("state dimension mismatch".into()));
    }
    check_tau(t_next - t_i)?;
    let mut scratch = Vec::new();
    let num: Vec<f64> = x_next.iter().zip(x).map(|(a, b)| a - b).collect();
    let den: Vec<f64> = x_next.iter().zip(x_i).map(|(a, b)| a - b).collect();
    let log_num = log_density_mixed(params, t_next - t, &num, &mut scratch);
    let log_den = log_density_mixed(params, t_next - t_i, &den, &mut scratch);
    Ok(log_num - log_den)
}

pub fn ratio_f(
    params: &ReferenceParams,
    t: f64,
    t_i: f64,
    t_next: f64,
    x_i: &[f64],
    x: &[f64],
    x_next: &[f64],
) -> Result<f64> {
    Ok(log_ratio_f(params, t, t_i, t_next, x_i, x, x_next)?.exp())
}

/// Gradient of F_i with respect to the current state x. Differentiating each
/// Gaussian term of the numerator gives, per term k and component p, the
/// factor (x_next_p - x_p - k c_p) / (sigma_p^2 (t_next - t) + k gamma_p^2)
/// multiplying that term. Unsupported in pure-jump mode, where F is not
/// differentiable across the atom.
pub fn grad_ratio_f(
    params: &ReferenceParams,
    t: f64,
    t_i: f64,
    t_next: f64,
    x_i: &[f64],
    x: &[f64],
    x_next: &[f64],
) -> Result<Vec<f64>> {
    if params.pure_jump {
        return Err(Error::Unsupported(
            "gradient of the pinning ratio is undefined for the pure-jump reference (atom at zero)".into(),
        ));
    }
    if !(t >= t_i && t < t_next) {
        return Err(Error::Domain(format!(
            "t = {t} must lie in [{t_i}, {t_next})"
        )));
    }
    let d = params.dim();
    if x_i.len() != d || x.len() != d || x_next.len() != d {
        return Err(Error::Shape("state dimension mismatch".into()));
    }
    check_tau(t_next - t_i)?;
    let tau = t_next - t;
    let mut scratch = Vec::new();
    let num: Vec<f64> = x_next.iter().zip(x).map(|(a, b)| a - b).collect();
    let den: Vec<f64> = x_next.iter().zip(x_i).map(|(a, b)| a - b).collect();
    let log_den = log_density_mixed(params, t_next - t_i, &den, &mut scratch);
    fill_log_terms(params, tau, &num, &mut scratch);
    let m = scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut grad = vec![0.0; d];
    if m == f64::NEG_INFINITY {
        return Ok(grad);
    }
    for (k, &lt) in scratch.iter().enumerate() {
        if lt == f64::NEG_INFINITY {
            continue;
        }
        let w = (lt - m).exp();
        let kf = k as f64;
        for p in 0..d {
            let s = params.sigma_eff(p);
            let v = s * s * tau + kf * params.gamma[p] * params.gamma[p];
            grad[p] += w * (num[p] - kf * params.c[p]) / v;
        }
    }
    let scale = (m - log_den).exp();
    for g in &mut grad {
        *g *= scale;
    }
    Ok(grad)
}
