//! Implementations of the subcommands. Each one reads its inputs, runs the
//! corresponding library pipeline, writes its artifacts into the output
//! directory, and drops a manifest next to them. No command mutates its
//! inputs.

use std::path::Path;

use jumpbridge::calibrate::{run_componentwise, run_full_procedure};
use jumpbridge::dataset::{
    load_csv, load_dataset, save_dataset, CsvLayout, Dataset, NormKind, NormLayer,
};
use jumpbridge::error::{Error, Result};
use jumpbridge::grid::TimeGrid;
use jumpbridge::metrics::scores::{discriminative_score, predictive_score};
use jumpbridge::metrics::{compare_panels, correlation_matrix, increments, qq_quantiles, MetricReport};
use jumpbridge::params::{auto_n_jumps, KernelConfig, ReferenceParams};
use jumpbridge::report::{
    csv_table, render_ecdf_overlay, render_heatmap, render_histogram_overlay, render_path_fan,
    render_qq_scatter,
};
use jumpbridge::rng::RngSpec;
use jumpbridge::simulate::{simulate, to_dataset, SimConfig};
use jumpbridge::synthdata::{merton_dataset, ou_dataset};
use jumpbridge::metrics::quadratic_variations;

use crate::config::{parse_scheme, write_manifest, RunConfig};

fn require_path<'a>(value: &'a str, what: &str) -> Result<&'a Path> {
    if value.is_empty() {
        return Err(Error::Config(format!("missing {what} path")));
    }
    let path = Path::new(value);
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{what} file '{value}' does not exist"),
        )));
    }
    Ok(path)
}

pub fn simulate_merton(cfg: &RunConfig, out: &Path) -> Result<()> {
    let spec = RngSpec::new(cfg.seed);
    let mut mc = cfg.merton.clone();
    if cfg.n > 0 {
        mc.n_series = cfg.n;
    }
    mc.substeps = cfg.substeps;
    let ds = merton_dataset(&mc, &spec)?;
    save_dataset(&ds, &out.join("series.csv"))?;
    write_manifest(out, "simulate-merton", cfg)?;
    println!(
        "wrote {} series of {} dates to {}",
        ds.n_series(),
        ds.grid.n_intervals() + 1,
        out.join("series.csv").display()
    );
    Ok(())
}

pub fn simulate_ou(cfg: &RunConfig, out: &Path) -> Result<()> {
    let spec = RngSpec::new(cfg.seed);
    let mut oc = cfg.ou.clone();
    if cfg.n > 0 {
        oc.n_series = cfg.n;
    }
    oc.substeps = cfg.substeps;
    let ds = ou_dataset(&oc, &spec)?;
    save_dataset(&ds, &out.join("series.csv"))?;
    write_manifest(out, "simulate-ou", cfg)?;
    println!(
        "wrote {} series of {} dates to {}",
        ds.n_series(),
        ds.grid.n_intervals() + 1,
        out.join("series.csv").display()
    );
    Ok(())
}

pub fn ingest(cfg: &RunConfig, out: &Path) -> Result<()> {
    let input = require_path(&cfg.input, "input")?;
    let mut ds = load_csv(
        input,
        CsvLayout::Long,
        cfg.window_len,
        cfg.stride,
        cfg.dt,
        cfg.substeps,
    )?;
    for name in &cfg.normalize {
        ds.normalize(NormKind::parse(name)?)?;
    }
    save_dataset(&ds, &out.join("windows.csv"))?;
    write_manifest(out, "ingest", cfg)?;
    println!(
        "cut {} windows of {} intervals ({} features) from {}",
        ds.n_series(),
        ds.grid.n_intervals(),
        ds.dim(),
        input.display()
    );
    Ok(())
}

/// Build the reference dynamics from the resolved config, expanding scalars
/// to the panel's dimension and switching to the pure-jump reference when
/// the scheme asks for it.
fn reference_for(cfg: &RunConfig, ds: &Dataset, pure_jump: bool) -> Result<ReferenceParams> {
    let d = ds.dim();
    let expand = |v: &Vec<f64>, name: &str| -> Result<Vec<f64>> {
        if v.len() == d {
            Ok(v.clone())
        } else if v.len() == 1 {
            Ok(vec![v[0]; d])
        } else {
            Err(Error::Config(format!(
                "{name} has {} entries for a {d}-feature panel",
                v.len()
            )))
        }
    };
    let sigma = if pure_jump {
        vec![0.0; d]
    } else {
        expand(&cfg.sigma, "sigma")?
    };
    let max_dt = (0..ds.grid.n_intervals())
        .map(|i| ds.grid.interval_len(i))
        .fold(0.0, f64::max);
    let n_j = if cfg.n_jumps_trunc > 0 {
        cfg.n_jumps_trunc
    } else {
        auto_n_jumps(cfg.lambda0, max_dt, 1)
    };
    ReferenceParams::new(
        sigma,
        cfg.lambda0,
        expand(&cfg.c, "c")?,
        expand(&cfg.gamma, "gamma")?,
        n_j,
        pure_jump,
    )
}

pub fn generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let input = require_path(&cfg.input, "input")?;
    let mut train = load_dataset(input)?;
    // substeps always come from the resolved config so the manifest alone
    // pins the discretization
    train.grid = TimeGrid::new(train.grid.dates().to_vec(), cfg.substeps)?;
    let (scheme, pure_jump) = parse_scheme(&cfg.scheme)?;
    let params = reference_for(cfg, &train, pure_jump)?;
    let kcfg = KernelConfig::new(cfg.bandwidth, cfg.markov_order)?;
    kcfg.validate_against(train.grid.n_intervals())?;
    let n = if cfg.n > 0 { cfg.n } else { 500 };
    let sim_cfg = SimConfig::new(scheme, n);
    let spec = RngSpec::new(cfg.seed);
    let series = simulate(&train, &params, &kcfg, &sim_cfg, &spec)?;
    let synth = to_dataset(&series, &train)?;
    save_dataset(&synth, &out.join("series.csv"))?;
    write_manifest(out, "generate", cfg)?;
    println!(
        "generated {} trajectories on {} intervals to {}",
        n,
        train.grid.n_intervals(),
        out.join("series.csv").display()
    );
    Ok(())
}

pub fn calibrate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let input = require_path(&cfg.input, "input")?;
    let mut ds = load_dataset(input)?;
    ds.grid = TimeGrid::new(ds.grid.dates().to_vec(), cfg.substeps)?;
    let spec = RngSpec::new(cfg.seed);
    let path = out.join("calibration.json");
    if ds.dim() == 1 {
        let res = run_full_procedure(&ds, &cfg.grid, &cfg.budgets, &spec)?;
        std::fs::write(&path, serde_json::to_string_pretty(&res)?)?;
        for w in &res.warnings {
            eprintln!("warning msg={w:?}");
        }
        println!(
            "selected sigma={} gamma={} lambda0={:.6} h={} k={} ({} warnings); details in {}",
            res.selected.sigma,
            res.selected.gamma,
            res.selected.lambda0,
            res.selected.bandwidth,
            res.selected.markov_order,
            res.warnings.len(),
            path.display()
        );
    } else {
        let res = run_componentwise(&ds, &cfg.grid, &cfg.budgets, &spec)?;
        std::fs::write(&path, serde_json::to_string_pretty(&res)?)?;
        println!(
            "selected per-component sigma={:?} gamma={:?}, global lambda0={:.6} h={} k={}; details in {}",
            res.sigma,
            res.gamma,
            res.lambda0,
            res.bandwidth,
            res.markov_order,
            path.display()
        );
    }
    write_manifest(out, "calibrate", cfg)?;
    Ok(())
}

/// Give the synthetic panel the real panel's normalization layers so it can
/// be carried back to the data scale; synthetic series j inherits the affine
/// parameters of real series j mod M (trajectories are exchangeable).
fn adopt_norm_layers(synth: &mut Dataset, real: &Dataset) {
    let m_synth = synth.n_series();
    synth.norm_meta = real
        .norm_meta
        .iter()
        .map(|layer| NormLayer {
            kind: layer.kind,
            params: (0..m_synth)
                .map(|j| layer.params[j % layer.params.len()].clone())
                .collect(),
        })
        .collect();
}

/// Undo normalization layers down to the base-one scale (the innermost
/// layer), or all the way if the panel was never base-one normalized.
fn to_comparison_scale(ds: &mut Dataset) -> Result<()> {
    while ds.norm_meta.len() > 1 {
        ds.denormalize_last()?;
    }
    if ds.norm_meta.len() == 1 && ds.norm_meta[0].kind != NormKind::BaseOne {
        ds.denormalize_last()?;
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let real_path = require_path(&cfg.real, "real")?;
    let synth_path = require_path(&cfg.synth, "synth")?;
    let real = load_dataset(real_path)?;
    let mut synth = load_dataset(synth_path)?;
    let mut report = compare_panels(&real, &synth)?;
    if cfg.with_scores {
        let spec = RngSpec::new(cfg.seed);
        report.discriminative = Some(discriminative_score(&real, &synth, &spec, cfg.score_runs)?);
        if real.dim() >= 2 {
            report.predictive = Some(predictive_score(&real, &synth, &spec, cfg.score_runs)?);
        }
    }
    std::fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&report)?,
    )?;

    // marginal quantile table on the comparison (denormalized) scale
    if synth.norm_meta.is_empty() && !real.norm_meta.is_empty() {
        adopt_norm_layers(&mut synth, &real);
    }
    let mut real_cmp = real.clone();
    to_comparison_scale(&mut real_cmp)?;
    to_comparison_scale(&mut synth)?;
    let mut rows = Vec::with_capacity(real.dim());
    for p in 0..real.dim() {
        let rq = qq_quantiles(&increments(&real_cmp, p), &[0.05, 0.95])?;
        let sq = qq_quantiles(&increments(&synth, p), &[0.05, 0.95])?;
        rows.push(vec![p as f64, rq[0], sq[0], rq[1], sq[1]]);
    }
    std::fs::write(
        out.join("quantile_table.csv"),
        csv_table(
            &["component", "q05_real", "q05_synth", "q95_real", "q95_synth"],
            &rows,
        ),
    )?;
    write_manifest(out, "evaluate", cfg)?;
    println!(
        "qv_w2={:?} increment_ks={:?}{}",
        report.qv_w2,
        report.increment_ks,
        report
            .discriminative
            .map(|p| format!(" disc={:.4}+-{:.4}", p.mean, p.std))
            .unwrap_or_default()
    );
    Ok(())
}

pub fn report_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let metrics_path = require_path(&cfg.metrics, "metrics")?;
    let report: MetricReport = serde_json::from_str(&std::fs::read_to_string(metrics_path)?)?;
    if report.quantile_levels.is_empty() || report.qv_w2.is_empty() {
        eprintln!("warning msg=\"metrics file is empty; writing an empty report\"");
        write_manifest(out, "report", cfg)?;
        return Ok(());
    }
    let mut files = Vec::new();
    for (p, (rq, sq)) in report
        .real_increment_quantiles
        .iter()
        .zip(&report.synth_increment_quantiles)
        .enumerate()
    {
        let svg = render_qq_scatter(rq, sq, &format!("increment quantiles, component {p}"))?;
        let name = format!("qq_component_{p}.svg");
        std::fs::write(out.join(&name), svg)?;
        files.push(name);
    }
    {
        let mut rows = Vec::new();
        for (p, (rq, sq)) in report
            .real_increment_quantiles
            .iter()
            .zip(&report.synth_increment_quantiles)
            .enumerate()
        {
            for (l, &level) in report.quantile_levels.iter().enumerate() {
                rows.push(vec![p as f64, level, rq[l], sq[l]]);
            }
        }
        std::fs::write(
            out.join("quantiles.csv"),
            csv_table(&["component", "level", "real", "synth"], &rows),
        )?;
        files.push("quantiles.csv".into());
        let summary: Vec<Vec<f64>> = (0..report.qv_w2.len())
            .map(|p| {
                vec![
                    p as f64,
                    report.qv_w2[p],
                    report.qv_w2_rel[p],
                    report.increment_ks[p],
                ]
            })
            .collect();
        std::fs::write(
            out.join("summary.csv"),
            csv_table(&["component", "qv_w2", "qv_w2_rel", "increment_ks"], &summary),
        )?;
        files.push("summary.csv".into());
    }
    // panel-level plots when both panels are available
    if !cfg.real.is_empty() && !cfg.synth.is_empty() {
        let real = load_dataset(require_path(&cfg.real, "real")?)?;
        let synth = load_dataset(require_path(&cfg.synth, "synth")?)?;
        let qv_r = quadratic_variations(&real);
        let qv_s = quadratic_variations(&synth);
        for p in 0..real.dim().min(synth.dim()) {
            let inc_r = increments(&real, p);
            let inc_s = increments(&synth, p);
            let svg = render_ecdf_overlay(&inc_r, &inc_s, &format!("increment ECDF, component {p}"))?;
            let name = format!("ecdf_component_{p}.svg");
            std::fs::write(out.join(&name), svg)?;
            files.push(name);
            let r: Vec<f64> = qv_r.iter().map(|v| v[p]).collect();
            let s: Vec<f64> = qv_s.iter().map(|v| v[p]).collect();
            let svg =
                render_histogram_overlay(&r, &s, 30, &format!("quadratic variation, component {p}"))?;
            let name = format!("qv_hist_component_{p}.svg");
            std::fs::write(out.join(&name), svg)?;
            files.push(name);
            for (label, ds) in [("real", &real), ("synth", &synth)] {
                let svg = render_path_fan(ds, p, 60, &format!("{label} paths, component {p}"))?;
                let name = format!("fan_{label}_component_{p}.svg");
                std::fs::write(out.join(&name), svg)?;
                files.push(name);
            }
        }
        for (label, ds) in [("real", &real), ("synth", &synth)] {
            let svg = render_heatmap(
                &correlation_matrix(ds),
                &ds.feature_names,
                &format!("{label} terminal correlations"),
            )?;
            let name = format!("corr_{label}.svg");
            std::fs::write(out.join(&name), svg)?;
            files.push(name);
        }
    }
    write_manifest(out, "report", cfg)?;
    println!("wrote {} report files to {}", files.len(), out.display());
    Ok(())
}
