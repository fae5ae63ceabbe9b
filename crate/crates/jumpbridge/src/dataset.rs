use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Per-series, per-dimension affine normalization record: stored so that
/// `denormalize` can apply the exact inverse x = shift + scale * x_norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineNorm {
    pub shift: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Divide by the value at t_0 (per series, per dimension).
    BaseOne,
    /// Subtract the per-series mean, divide by the per-series std.
    Standard,
    /// Rescale increments by sqrt(dt)/std(increments); values become the
    /// cumulated rescaled increments started at 0. Affine in the values:
    /// x_norm = (x - x_{t_0}) * sqrt(dt)/std(increments).
    IncrementsRescale,
}

impl NormKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "base-one" | "base_one" => Ok(NormKind::BaseOne),
            "standard" => Ok(NormKind::Standard),
            "increments-rescale" | "increments_rescale" => Ok(NormKind::IncrementsRescale),
            other => Err(Error::Config(format!("unknown normalization '{other}'"))),
        }
    }
}

/// One applied normalization: the kind plus the affine parameters for every
/// (series, dimension) pair. Layers stack; denormalization unwinds in reverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormLayer {
    pub kind: NormKind,
    pub params: Vec<Vec<AffineNorm>>,
}

/// A panel of M series observed on a common time grid: values[m][i][p] is the
/// p-th feature of series m at grid date t_i. The first date t_0 carries the
/// conditioning value every generated trajectory starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub values: Vec<Vec<Vec<f64>>>,
    pub grid: TimeGrid,
    pub feature_names: Vec<String>,
    pub norm_meta: Vec<NormLayer>,
}

impl Dataset {
    pub fn new(values: Vec<Vec<Vec<f64>>>, grid: TimeGrid, feature_names: Vec<String>) -> Result<Self> {
        let ds = Dataset {
            values,
            grid,
            feature_names,
            norm_meta: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Shape("dataset needs at least one series".into()));
        }
        let n_dates = self.grid.dates().len();
        let d = self.dim();
        if d == 0 {
            return Err(Error::Shape("dataset needs at least one feature".into()));
        }
        if self.feature_names.len() != d {
            return Err(Error::Shape(format!(
                "{} feature names for {} features",
                self.feature_names.len(),
                d
            )));
        }
        for (m, series) in self.values.iter().enumerate() {
            if series.len() != n_dates {
                return Err(Error::Shape(format!(
                    "series {m} has {} dates, grid has {n_dates}",
                    series.len()
                )));
            }
            for (i, row) in series.iter().enumerate() {
                if row.len() != d {
                    return Err(Error::Shape(format!(
                        "series {m} date {i} has {} features, expected {d}",
                        row.len()
                    )));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Shape(format!(
                        "non-finite value in series {m} at date {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_series(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.values[0][0].len()
    }

    /// Mean of the t_0 values across series (the generation start point).
    pub fn mean_start(&self) -> Vec<f64> {
        let d = self.dim();
        let mut s = vec![0.0; d];
        for series in &self.values {
            for p in 0..d {
                s[p] += series[0][p];
            }
        }
        for v in &mut s {
            *v /= self.n_series() as f64;
        }
        s
    }

    /// Project onto a single feature dimension.
    pub fn project_dim(&self, p: usize) -> Result<Dataset> {
        if p >= self.dim() {
            return Err(Error::Shape(format!("dimension {p} out of range")));
        }
        let values = self
            .values
            .iter()
            .map(|s| s.iter().map(|row| vec![row[p]]).collect())
            .collect();
        Ok(Dataset {
            values,
            grid: self.grid.clone(),
            feature_names: vec![self.feature_names[p].clone()],
            norm_meta: Vec::new(),
        })
    }

    /// Apply a normalization layer in place and push its record on the stack.
    pub fn normalize(&mut self, kind: NormKind) -> Result<()> {
        let d = self.dim();
        let mut params = Vec::with_capacity(self.n_series());
        for (m, series) in self.values.iter().enumerate() {
            let mut per_dim = Vec::with_capacity(d);
            for p in 0..d {
                let a = match kind {
                    NormKind::BaseOne => {
                        let first = series[0][p];
                        if first == 0.0 {
                            return Err(Error::Normalization(format!(
                                "series {m} dim {p}: value at t_0 is zero, base-one undefined"
                            )));
                        }
                        AffineNorm { shift: 0.0, scale: first }
                    }
                    NormKind::Standard => {
                        let n = series.len() as f64;
                        let mean = series.iter().map(|r| r[p]).sum::<f64>() / n;
                        let var = series.iter().map(|r| (r[p] - mean).powi(2)).sum::<f64>() / n;
                        let std = var.sqrt();
                        if std == 0.0 {
                            return Err(Error::Normalization(format!(
                                "series {m} dim {p}: zero variance, standard normalization undefined"
                            )));
                        }
                        AffineNorm { shift: mean, scale: std }
                    }
                    NormKind::IncrementsRescale => {
                        let incs: Vec<f64> =
                            series.windows(2).map(|w| w[1][p] - w[0][p]).collect();
                        let n = incs.len() as f64;
                        let mean = incs.iter().sum::<f64>() / n;
                        let var = incs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        let std = var.sqrt();
                        if std == 0.0 {
                            return Err(Error::Normalization(format!(
                                "series {m} dim {p}: constant increments, rescale undefined"
                            )));
                        }
                        AffineNorm {
                            shift: series[0][p],
                            scale: std / self.grid.mean_dt().sqrt(),
                        }
                    }
                };
                per_dim.push(a);
            }
            params.push(per_dim);
        }
        for (series, per_dim) in self.values.iter_mut().zip(&params) {
            for row in series.iter_mut() {
                for (v, a) in row.iter_mut().zip(per_dim) {
                    *v = (*v - a.shift) / a.scale;
                }
            }
        }
        self.norm_meta.push(NormLayer { kind, params });
        Ok(())
    }

    /// Undo the most recent normalization layer.
    pub fn denormalize_last(&mut self) -> Result<()> {
        let layer = self
            .norm_meta
            .pop()
            .ok_or_else(|| Error::Normalization("no normalization to undo".into()))?;
        if layer.params.len() != self.n_series() {
            return Err(Error::Normalization(format!(
                "normalization layer covers {} series, dataset has {}",
                layer.params.len(),
                self.n_series()
            )));
        }
        for (series, per_dim) in self.values.iter_mut().zip(&layer.params) {
            for row in series.iter_mut() {
                for (v, a) in row.iter_mut().zip(per_dim) {
                    *v = a.shift + a.scale * *v;
                }
            }
        }
        Ok(())
    }

    /// Undo every recorded normalization layer, most recent first.
    pub fn denormalize(&mut self) -> Result<()> {
        while !self.norm_meta.is_empty() {
            self.denormalize_last()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvLayout {
    /// Rows are time points of one long multivariate record; columns are
    /// features. Overlapping windows are cut out of it.
    Long,
    /// One series per contiguous block. Not supported.
    Wide,
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::CsvParse {
        row,
        col,
        msg: format!("expected a number, got '{}'", cell.trim()),
    })
}

/// Read a raw long-layout CSV (rows = time points, columns = features) and cut
/// it into M overlapping windows of `window_len` intervals (window_len + 1
/// rows) advancing by `stride` rows: M = floor((rows - window_len - 1)/stride) + 1.
/// A leading header row is detected by its first cell failing to parse as a
/// number. The grid is uniform with spacing `dt`.
pub fn load_csv(
    path: &Path,
    layout: CsvLayout,
    window_len: usize,
    stride: usize,
    dt: f64,
    substeps: usize,
) -> Result<Dataset> {
    if layout == CsvLayout::Wide {
        return Err(Error::Unsupported(
            "wide CSV layout (one series per block) is not supported; provide one long record".into(),
        ));
    }
    if window_len == 0 {
        return Err(Error::Config("window_len must be >= 1".into()));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut names: Option<Vec<String>> = None;
    if let Some((idx, first)) = lines.next() {
        let cells: Vec<&str> = first.split(',').collect();
        if cells[0].trim().parse::<f64>().is_err() {
            names = Some(cells.iter().map(|c| c.trim().to_string()).collect());
        } else {
            let row = cells
                .iter()
                .enumerate()
                .map(|(c, cell)| parse_cell(cell, idx + 1, c + 1))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
    }
    for (idx, line) in lines {
        let row = line
            .split(',')
            .enumerate()
            .map(|(c, cell)| parse_cell(cell, idx + 1, c + 1))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Shape("csv has no data rows".into()));
    }
    let d = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::CsvParse {
                row: i + 1,
                col: r.len(),
                msg: format!("expected {d} columns, got {}", r.len()),
            });
        }
    }
    let n_rows = rows.len();
    if window_len + 1 > n_rows {
        return Err(Error::Shape(format!(
            "window of {} rows does not fit in {} data rows",
            window_len + 1,
            n_rows
        )));
    }
    let m = (n_rows - window_len - 1) / stride + 1;
    let mut values = Vec::with_capacity(m);
    for w in 0..m {
        let start = w * stride;
        values.push(rows[start..=start + window_len].to_vec());
    }
    let names = names.unwrap_or_else(|| (1..=d).map(|p| format!("x{p}")).collect());
    let grid = TimeGrid::uniform(window_len, dt, substeps)?;
    Dataset::new(values, grid, names)
}

/// Write a dataset as the interchange CSV: series_id, time_index, t, features.
pub fn series_csv_string(ds: &Dataset) -> String {
    let mut out = String::new();
    out.push_str("series_id,time_index,t");
    for name in &ds.feature_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (m, series) in ds.values.iter().enumerate() {
        for (i, row) in series.iter().enumerate() {
            let _ = write!(out, "{m},{i},{}", ds.grid.dates()[i]);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn save_series_csv(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, series_csv_string(ds))?;
    Ok(())
}

/// Sidecar metadata: everything the CSV itself cannot carry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub substeps: usize,
    pub norm_meta: Vec<NormLayer>,
}

pub fn save_dataset(ds: &Dataset, csv_path: &Path) -> Result<()> {
    save_series_csv(ds, csv_path)?;
    let meta = DatasetMeta {
        substeps: ds.grid.substeps(),
        norm_meta: ds.norm_meta.clone(),
    };
    let meta_path = csv_path.with_extension("meta.json");
    std::fs::write(meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Read the interchange CSV back; picks up the `.meta.json` sidecar when present.
pub fn load_dataset(csv_path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(csv_path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Shape("empty series csv".into()))?;
    let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    if cols.len() < 4 || cols[0] != "series_id" || cols[1] != "time_index" || cols[2] != "t" {
        return Err(Error::CsvParse {
            row: 1,
            col: 1,
            msg: "expected header series_id,time_index,t,<features...>".into(),
        });
    }
    let names: Vec<String> = cols[3..].iter().map(|s| s.to_string()).collect();
    let d = names.len();
    let mut values: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut dates: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != d + 3 {
            return Err(Error::CsvParse {
                row: idx + 1,
                col: cells.len(),
                msg: format!("expected {} columns", d + 3),
            });
        }
        let m = cells[0].trim().parse::<usize>().map_err(|_| Error::CsvParse {
            row: idx + 1,
            col: 1,
            msg: "bad series_id".into(),
        })?;
        let i = cells[1].trim().parse::<usize>().map_err(|_| Error::CsvParse {
            row: idx + 1,
            col: 2,
            msg: "bad time_index".into(),
        })?;
        let t = parse_cell(cells[2], idx + 1, 3)?;
        let row = cells[3..]
            .iter()
            .enumerate()
            .map(|(c, cell)| parse_cell(cell, idx + 1, c + 4))
            .collect::<Result<Vec<f64>>>()?;
        if m == values.len() {
            values.push(Vec::new());
        } else if m > values.len() {
            return Err(Error::CsvParse {
                row: idx + 1,
                col: 1,
                msg: format!("series_id {m} out of order"),
            });
        }
        if m == 0 {
            if i != dates.len() {
                return Err(Error::CsvParse {
                    row: idx + 1,
                    col: 2,
                    msg: format!("time_index {i} out of order"),
                });
            }
            dates.push(t);
        } else if i < dates.len() && (t - dates[i]).abs() > 1e-12 * dates.last().unwrap().abs().max(1.0) {
            return Err(Error::CsvParse {
                row: idx + 1,
                col: 3,
                msg: format!("t = {t} disagrees with grid date {}", dates[i]),
            });
        }
        if values[m].len() != i {
            return Err(Error::CsvParse {
                row: idx + 1,
                col: 2,
                msg: format!("time_index {i} out of order within series {m}"),
            });
        }
        values[m].push(row);
    }
    let meta_path = csv_path.with_extension("meta.json");
    let meta: Option<DatasetMeta> = if meta_path.exists() {
        Some(serde_json::from_str(&std::fs::read_to_string(meta_path)?)?)
    } else {
        None
    };
    let substeps = meta.as_ref().map(|m| m.substeps).unwrap_or(100);
    let grid = TimeGrid::new(dates, substeps)?;
    let mut ds = Dataset::new(values, grid, names)?;
    if let Some(meta) = meta {
        ds.norm_meta = meta.norm_meta;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset(m: usize, n: usize, d: usize) -> Dataset {
        let grid = TimeGrid::uniform(n, 0.5, 4).unwrap();
        let values = (0..m)
            .map(|s| {
                (0..=n)
                    .map(|i| {
                        (0..d)
                            .map(|p| 1.0 + 0.1 * s as f64 + 0.03 * (i * (p + 1)) as f64 + ((i * 7 + p * 3 + s) % 5) as f64 * 0.01)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Dataset::new(values, grid, (0..d).map(|p| format!("x{}", p + 1)).collect()).unwrap()
    }

    #[test]
    fn base_one_starts_at_one() {
        let mut ds = toy_dataset(3, 5, 2);
        ds.normalize(NormKind::BaseOne).unwrap();
        for series in &ds.values {
            for p in 0..2 {
                assert!((series[0][p] - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn standard_gives_zero_mean_unit_std() {
        let mut ds = toy_dataset(2, 8, 1);
        ds.normalize(NormKind::Standard).unwrap();
        for series in &ds.values {
            let n = series.len() as f64;
            let mean = series.iter().map(|r| r[0]).sum::<f64>() / n;
            let var = series.iter().map(|r| (r[0] - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn increments_rescale_starts_at_zero_with_unit_scaled_std() {
        let mut ds = toy_dataset(2, 10, 1);
        let dt = ds.grid.mean_dt();
        ds.normalize(NormKind::IncrementsRescale).unwrap();
        for series in &ds.values {
            assert_eq!(series[0][0], 0.0);
            let incs: Vec<f64> = series.windows(2).map(|w| w[1][0] - w[0][0]).collect();
            let n = incs.len() as f64;
            let mean = incs.iter().sum::<f64>() / n;
            let var = incs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            // increments now have std sqrt(dt)
            assert!((var - dt).abs() < 1e-12, "var {var} vs dt {dt}");
        }
    }

    #[test]
    fn stacked_normalizations_round_trip() {
        let original = toy_dataset(4, 6, 3);
        let mut ds = original.clone();
        ds.normalize(NormKind::BaseOne).unwrap();
        ds.normalize(NormKind::Standard).unwrap();
        ds.normalize(NormKind::IncrementsRescale).unwrap();
        ds.denormalize().unwrap();
        assert!(ds.norm_meta.is_empty());
        for (a, b) in ds.values.iter().flatten().flatten().zip(original.values.iter().flatten().flatten()) {
            let rel = (a - b).abs() / b.abs().max(1.0);
            assert!(rel <= 1e-12, "round trip drift {rel}");
        }
    }

    #[test]
    fn denormalize_last_pops_one_layer() {
        let mut ds = toy_dataset(2, 4, 1);
        ds.normalize(NormKind::BaseOne).unwrap();
        ds.normalize(NormKind::Standard).unwrap();
        ds.denormalize_last().unwrap();
        assert_eq!(ds.norm_meta.len(), 1);
        assert_eq!(ds.norm_meta[0].kind, NormKind::BaseOne);
        for series in &ds.values {
            assert!((series[0][0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn windowing_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        let mut text = String::from("a,b\n");
        for i in 0..30 {
            text.push_str(&format!("{},{}\n", i as f64, 100.0 + i as f64));
        }
        std::fs::write(&path, &text).unwrap();
        // 30 rows, windows of 24+1 rows, stride 1: starts 0..=5
        let ds = load_csv(&path, CsvLayout::Long, 24, 1, 1.0 / 252.0, 10).unwrap();
        assert_eq!(ds.n_series(), 6);
        assert_eq!(ds.grid.n_intervals(), 24);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        // window w starts at row w
        assert_eq!(ds.values[5][0][0], 5.0);
        assert_eq!(ds.values[5][24][0], 29.0);

        // exactly one window when the window fills the file
        let mut text = String::new();
        for i in 0..25 {
            text.push_str(&format!("{}\n", i as f64));
        }
        let path2 = dir.path().join("raw2.csv");
        std::fs::write(&path2, &text).unwrap();
        let ds2 = load_csv(&path2, CsvLayout::Long, 24, 1, 1.0, 10).unwrap();
        assert_eq!(ds2.n_series(), 1);
        // too short errors
        assert!(load_csv(&path2, CsvLayout::Long, 25, 1, 1.0, 10).is_err());
        // stride 2 on 30 rows: starts 0, 2, 4
        let ds3 = load_csv(&path, CsvLayout::Long, 24, 2, 1.0, 10).unwrap();
        assert_eq!(ds3.n_series(), 3);
    }

    #[test]
    fn wide_layout_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        std::fs::write(&path, "1.0\n2.0\n").unwrap();
        match load_csv(&path, CsvLayout::Wide, 1, 1, 1.0, 1) {
            Err(Error::Unsupported(_)) => {}
            other => panic!("expected unsupported, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        std::fs::write(&path, "a,b\n1.0,2.0\n1.5,oops\n").unwrap();
        match load_csv(&path, CsvLayout::Long, 1, 1, 1.0, 1) {
            Err(Error::CsvParse { row: 3, col: 2, .. }) => {}
            other => panic!("expected parse error at (3,2), got {other:?}"),
        }
    }

    #[test]
    fn series_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        let mut ds = toy_dataset(3, 5, 2);
        ds.normalize(NormKind::BaseOne).unwrap();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.n_series(), 3);
        assert_eq!(back.norm_meta.len(), 1);
        assert_eq!(back.feature_names, ds.feature_names);
        for (a, b) in back
            .values
            .iter()
            .flatten()
            .flatten()
            .zip(ds.values.iter().flatten().flatten())
        {
            assert_eq!(a, b, "shortest round-trip float formatting must be exact");
        }
        // emitted bytes are stable under a save/load/save cycle
        let again = series_csv_string(&back);
        assert_eq!(series_csv_string(&ds), again);
    }
}
