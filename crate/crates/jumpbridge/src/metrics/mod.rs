//! Distributional diagnostics comparing panels of time series: per-series
//! quadratic variation, one-dimensional Wasserstein-2 distance, two-sample
//! Kolmogorov-Smirnov statistic, empirical quantiles, correlation matrices,
//! and the two learned scores (discriminative and predictive) built on the
//! recurrent networks in [`gru`].

pub mod gru;
pub mod scores;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Sum of squared grid increments of one path, per feature.
pub fn qv_of_path(values: &[Vec<f64>]) -> Vec<f64> {
    let d = values[0].len();
    let mut qv = vec![0.0; d];
    for w in values.windows(2) {
        for p in 0..d {
            let inc = w[1][p] - w[0][p];
            qv[p] += inc * inc;
        }
    }
    qv
}

/// Quadratic variation of every series in a panel: `out[m][p]`.
pub fn quadratic_variations(ds: &Dataset) -> Vec<Vec<f64>> {
    ds.values.iter().map(|s| qv_of_path(s)).collect()
}

/// All grid increments of one feature across a panel, flattened.
pub fn increments(ds: &Dataset, feature: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for s in &ds.values {
        for w in s.windows(2) {
            out.push(w[1][feature] - w[0][feature]);
        }
    }
    out
}

fn sorted_copy(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::Shape("empty sample".into()));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in sample".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

/// Wasserstein-2 distance between the empirical distributions of two samples.
/// For equal sizes this is the root mean squared difference of sorted values;
/// in general it integrates the squared difference of the two step quantile
/// functions exactly over a merged probability grid.
pub fn wasserstein2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted_copy(a)?;
    let b = sorted_copy(b)?;
    if a.len() == b.len() {
        let n = a.len() as f64;
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        return Ok((s / n).sqrt());
    }
    let (n, m) = (a.len(), b.len());
    let mut total = 0.0;
    let mut u = 0.0; // probability mass consumed
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        let ua = (i + 1) as f64 / n as f64;
        let ub = (j + 1) as f64 / m as f64;
        let next = ua.min(ub);
        let diff = a[i] - b[j];
        total += (next - u) * diff * diff;
        u = next;
        if ua == next {
            i += 1;
        }
        if ub == next {
            j += 1;
        }
    }
    Ok(total.sqrt())
}

/// Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|, exact in
/// the presence of ties and atoms (both CDFs are advanced through every
/// distinct value before the gap is measured).
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted_copy(a)?;
    let b = sorted_copy(b)?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0f64;
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        let gap = (i as f64 / n - j as f64 / m).abs();
        if gap > best {
            best = gap;
        }
    }
    Ok(best)
}

/// Empirical quantiles with linear interpolation between order statistics
/// (the common `type 7` convention): at level p the index is p (n - 1).
pub fn qq_quantiles(xs: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    let v = sorted_copy(xs)?;
    let n = v.len();
    probs
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("quantile level {p} outside [0, 1]")));
            }
            let idx = p * (n - 1) as f64;
            let lo = idx.floor() as usize;
            let hi = idx.ceil() as usize;
            let frac = idx - lo as f64;
            Ok(v[lo] + frac * (v[hi] - v[lo]))
        })
        .collect()
}

/// Pearson correlation matrix of the terminal-date states across a panel.
/// Features with zero variance get zero off-diagonal correlation (with a
/// warning) and a unit diagonal.
pub fn correlation_matrix(ds: &Dataset) -> Vec<Vec<f64>> {
    let d = ds.dim();
    let last = ds.grid.n_intervals();
    let n = ds.n_series() as f64;
    let mut mean = vec![0.0; d];
    for s in &ds.values {
        for p in 0..d {
            mean[p] += s[last][p] / n;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for s in &ds.values {
        for p in 0..d {
            let dp = s[last][p] - mean[p];
            for q in p..d {
                cov[p][q] += dp * (s[last][q] - mean[q]) / n;
            }
        }
    }
    let mut corr = vec![vec![0.0; d]; d];
    for p in 0..d {
        corr[p][p] = 1.0;
        if cov[p][p] == 0.0 {
            log::warn!("feature {p} has zero terminal variance; correlations set to 0");
        }
        for q in p + 1..d {
            let den = (cov[p][p] * cov[q][q]).sqrt();
            let c = if den > 0.0 { cov[p][q] / den } else { 0.0 };
            corr[p][q] = c;
            corr[q][p] = c;
        }
    }
    corr
}

/// Flat summary of a real-vs-synthetic comparison, one entry per feature
/// where applicable. Scores are optional: they only exist when the caller
/// asked for the learned metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    /// Wasserstein-2 distance between quadratic variation distributions
    pub qv_w2: Vec<f64>,
    /// relative QV distance: W2 divided by the mean real QV
    pub qv_w2_rel: Vec<f64>,
    /// KS statistic between pooled increment distributions
    pub increment_ks: Vec<f64>,
    /// quantile levels shared by the tables below
    pub quantile_levels: Vec<f64>,
    pub real_increment_quantiles: Vec<Vec<f64>>,
    pub synth_increment_quantiles: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discriminative: Option<ScorePair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictive: Option<ScorePair>,
}

/// Mean and standard deviation over repeated scoring runs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScorePair {
    pub mean: f64,
    pub std: f64,
}

/// Default quantile levels for the marginal increment tables: tail-heavy, no
/// central levels (relative errors are meaningless where the quantile
/// crosses zero).
pub const QUANTILE_LEVELS: [f64; 8] = [0.01, 0.05, 0.10, 0.25, 0.75, 0.90, 0.95, 0.99];

/// Distribution-level comparison of two panels on the same grid (no learned
/// scores; those are added by the caller when requested).
pub fn compare_panels(real: &Dataset, synth: &Dataset) -> Result<MetricReport> {
    if real.dim() != synth.dim() {
        return Err(Error::Shape("panels have different dimensions".into()));
    }
    let d = real.dim();
    let qv_r = quadratic_variations(real);
    let qv_s = quadratic_variations(synth);
    let mut qv_w2 = Vec::with_capacity(d);
    let mut qv_w2_rel = Vec::with_capacity(d);
    let mut increment_ks = Vec::with_capacity(d);
    let mut rq = Vec::with_capacity(d);
    let mut sq = Vec::with_capacity(d);
    for p in 0..d {
        let r: Vec<f64> = qv_r.iter().map(|v| v[p]).collect();
        let s: Vec<f64> = qv_s.iter().map(|v| v[p]).collect();
        let w2 = wasserstein2_1d(&r, &s)?;
        let mean_r = r.iter().sum::<f64>() / r.len() as f64;
        qv_w2.push(w2);
        qv_w2_rel.push(if mean_r != 0.0 { w2 / mean_r } else { f64::NAN });
        let inc_r = increments(real, p);
        let inc_s = increments(synth, p);
        increment_ks.push(ks_statistic(&inc_r, &inc_s)?);
        rq.push(qq_quantiles(&inc_r, &QUANTILE_LEVELS)?);
        sq.push(qq_quantiles(&inc_s, &QUANTILE_LEVELS)?);
    }
    Ok(MetricReport {
        qv_w2,
        qv_w2_rel,
        increment_ks,
        quantile_levels: QUANTILE_LEVELS.to_vec(),
        real_increment_quantiles: rq,
        synth_increment_quantiles: sq,
        discriminative: None,
        predictive: None,
    })
}
