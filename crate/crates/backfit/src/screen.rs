//! CSV ingestion and the expression-style preprocessing pipeline:
//! variance screening, correlation screening, unit-interval scaling, and
//! response normalization. The intended order is screen, scale, normalize;
//! `to_sample` then hands the table to the estimators.

use crate::error::{Error, Result};
use crate::sample::Sample;
use crate::select::sample_sd;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Rectangular all-numeric table with named columns, one of which is the
/// response.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    response: usize,
}

impl RawTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, response: &str) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                reason: format!("{} names for {} columns", names.len(), columns.len()),
            });
        }
        if columns.is_empty() || columns[0].is_empty() {
            return Err(Error::EmptyTable);
        }
        let n = columns[0].len();
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    reason: format!("column {} has {} rows, expected {n}", names[j], col.len()),
                });
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col: j });
            }
        }
        let response = names
            .iter()
            .position(|name| name == response)
            .ok_or_else(|| Error::MissingResponse {
                name: response.to_string(),
            })?;
        Ok(Self {
            names,
            columns,
            response,
        })
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    /// Total column count including the response.
    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn response_name(&self) -> &str {
        &self.names[self.response]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn y(&self) -> &[f64] {
        &self.columns[self.response]
    }

    /// Indices of all non-response columns in original order.
    pub fn covariate_indices(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| j != self.response).collect()
    }

    pub fn covariate_names(&self) -> Vec<&str> {
        self.covariate_indices()
            .into_iter()
            .map(|j| self.names[j].as_str())
            .collect()
    }

    fn keep_covariates(&self, keep: &[usize]) -> Self {
        let mut names = Vec::with_capacity(keep.len() + 1);
        let mut columns = Vec::with_capacity(keep.len() + 1);
        for &j in keep {
            names.push(self.names[j].clone());
            columns.push(self.columns[j].clone());
        }
        names.push(self.names[self.response].clone());
        columns.push(self.columns[self.response].clone());
        Self {
            response: keep.len(),
            names,
            columns,
        }
    }

    /// Converts the covariate columns and response into a fitting sample.
    /// Covariates must already be scaled into [0, 1].
    pub fn to_sample(&self) -> Result<Sample> {
        let cols: Vec<Vec<f64>> = self
            .covariate_indices()
            .into_iter()
            .map(|j| self.columns[j].clone())
            .collect();
        Sample::new(cols, self.y().to_vec())
    }
}

/// Parses a numeric CSV with a header row. Rows containing any cell that
/// does not parse as a number (or with the wrong field count) are dropped;
/// the second return value counts them.
pub fn load_csv(path: &Path, response: &str) -> Result<(RawTable, usize)> {
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                if let csv::ErrorKind::Io(io) = e.into_kind() {
                    Error::Io {
                        path: shown.clone(),
                        source: io,
                    }
                } else {
                    unreachable!()
                }
            }
            _ => Error::Csv {
                path: shown.clone(),
                source: e,
            },
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: shown.clone(),
            source: e,
        })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if headers.is_empty() {
        return Err(Error::EmptyTable);
    }
    if headers.iter().all(|h| h.parse::<f64>().is_ok()) {
        return Err(Error::MissingHeader { path: shown });
    }
    if !headers.iter().any(|h| h == response) {
        return Err(Error::MissingResponse {
            name: response.to_string(),
        });
    }

    let p = headers.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            path: shown.clone(),
            source: e,
        })?;
        if record.len() != p {
            dropped += 1;
            continue;
        }
        let parsed: Option<Vec<f64>> = record
            .iter()
            .map(|cell| cell.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        match parsed {
            Some(row) => {
                for (j, v) in row.into_iter().enumerate() {
                    columns[j].push(v);
                }
            }
            None => dropped += 1,
        }
    }
    if columns[0].is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok((RawTable::new(headers, columns, response)?, dropped))
}

fn sample_variance(col: &[f64]) -> f64 {
    let sd = sample_sd(col);
    sd * sd
}

fn abs_correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..x.len() {
        num += (x[i] - mx) * (y[i] - my);
        vx += (x[i] - mx).powi(2);
        vy += (y[i] - my).powi(2);
    }
    let denom = (vx * vy).sqrt();
    if denom > 0.0 {
        (num / denom).abs()
    } else {
        0.0
    }
}

/// Picks the `count` indices with the largest scores, ties broken by the
/// original column order, and returns them in original order.
fn top_by(indices: &[usize], scores: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = indices.to_vec();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    order.truncate(count);
    order.sort_unstable();
    order
}

/// Two-stage feature screen: keep the `top_var` covariates with the largest
/// sample variances, then the `top_cor` of those with the largest absolute
/// Pearson correlation with the response. When a stage asks for more
/// columns than exist, everything available is kept and a warning recorded.
pub fn screen_features(
    t: &RawTable,
    top_var: usize,
    top_cor: usize,
) -> Result<(RawTable, Vec<String>)> {
    if top_var == 0 || top_cor == 0 {
        return Err(Error::InvalidConfig {
            reason: "screening stages must keep at least one column".into(),
        });
    }
    let mut warnings = Vec::new();
    let covariates = t.covariate_indices();

    let variances: Vec<f64> = (0..t.p())
        .map(|j| {
            if j == t.response {
                0.0
            } else {
                sample_variance(t.column(j))
            }
        })
        .collect();
    let stage1 = if covariates.len() <= top_var {
        if covariates.len() < top_var {
            warnings.push(format!(
                "variance stage asked for {top_var} covariates but only {} exist: keeping all",
                covariates.len()
            ));
        }
        covariates
    } else {
        top_by(&covariates, &variances, top_var)
    };

    let cors: Vec<f64> = (0..t.p())
        .map(|j| {
            if j == t.response {
                0.0
            } else {
                abs_correlation(t.column(j), t.y())
            }
        })
        .collect();
    let stage2 = if stage1.len() <= top_cor {
        if stage1.len() < top_cor {
            warnings.push(format!(
                "correlation stage asked for {top_cor} covariates but only {} remain: keeping all",
                stage1.len()
            ));
        }
        stage1
    } else {
        top_by(&stage1, &cors, top_cor)
    };

    Ok((t.keep_covariates(&stage2), warnings))
}

/// Per-covariate affine scaling fitted by [`scale_unit_interval`]; apply it
/// to held-out tables with [`ColumnScale::apply`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Columns that were constant in the fitting table; they map to 0.5.
    pub constant: Vec<bool>,
}

impl ColumnScale {
    fn transform(&self, k: usize, v: f64) -> (f64, bool) {
        if self.constant[k] {
            return (0.5, false);
        }
        let scaled = (v - self.min[k]) / (self.max[k] - self.min[k]);
        let clipped = scaled.clamp(0.0, 1.0);
        (clipped, clipped != scaled)
    }

    /// Applies the stored min/max to another table with the same covariate
    /// columns. Out-of-range values are clipped into [0, 1]; the second
    /// return value counts clipped cells.
    pub fn apply(&self, t: &RawTable) -> Result<(RawTable, usize)> {
        let cov = t.covariate_indices();
        let got: Vec<&str> = cov.iter().map(|&j| t.names[j].as_str()).collect();
        if got != self.names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::DimensionMismatch {
                reason: "held-out table covariates do not match the fitted scale".into(),
            });
        }
        let mut out = t.clone();
        let mut clipped = 0usize;
        for (k, &j) in cov.iter().enumerate() {
            for v in &mut out.columns[j] {
                let (s, was_clipped) = self.transform(k, *v);
                *v = s;
                if was_clipped {
                    clipped += 1;
                }
            }
        }
        Ok((out, clipped))
    }
}

/// Maps every covariate column onto [0, 1] by its own min/max; constant
/// columns become 0.5 and are flagged. The response is untouched.
pub fn scale_unit_interval(t: &RawTable) -> (RawTable, ColumnScale) {
    let cov = t.covariate_indices();
    let mut scale = ColumnScale {
        names: cov.iter().map(|&j| t.names[j].clone()).collect(),
        min: Vec::with_capacity(cov.len()),
        max: Vec::with_capacity(cov.len()),
        constant: Vec::with_capacity(cov.len()),
    };
    for &j in &cov {
        let col = t.column(j);
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        scale.min.push(lo);
        scale.max.push(hi);
        scale.constant.push(lo == hi);
    }
    let mut out = t.clone();
    for (k, &j) in cov.iter().enumerate() {
        for v in &mut out.columns[j] {
            *v = scale.transform(k, *v).0;
        }
    }
    (out, scale)
}

/// Rescales the response to the given sample standard deviation.
pub fn normalize_response(t: &RawTable, target_sd: f64) -> Result<RawTable> {
    if !(target_sd > 0.0 && target_sd.is_finite()) {
        return Err(Error::InvalidConfig {
            reason: format!("target response sd must be positive, got {target_sd}"),
        });
    }
    let sd = sample_sd(t.y());
    if sd <= 0.0 {
        return Err(Error::ZeroVarianceResponse);
    }
    let factor = target_sd / sd;
    let mut out = t.clone();
    for v in &mut out.columns[t.response] {
        *v *= factor;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write as _;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn toy_table() -> RawTable {
        RawTable::new(
            vec!["a".into(), "b".into(), "y".into()],
            vec![vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0], vec![0.1, 0.2, 0.9]],
            "y",
        )
        .unwrap()
    }

    #[test]
    fn load_csv_parses_and_drops_bad_rows() {
        let f = write_csv("g1,g2,resp\n1.0,2.0,3.0\n4.0,oops,6.0\n7.0,8.0,9.0\n1,2\n0.5,.25,1e-1\n");
        let (t, dropped) = load_csv(f.path(), "resp").unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(t.n(), 3);
        assert_eq!(t.p(), 3);
        assert_eq!(t.column(0), &[1.0, 7.0, 0.5]);
        assert_eq!(t.column(1), &[2.0, 8.0, 0.25]);
        assert_eq!(t.y(), &[3.0, 9.0, 0.1]);
        assert_eq!(t.response_name(), "resp");
        assert_eq!(t.covariate_names(), vec!["g1", "g2"]);
    }

    #[test]
    fn load_csv_errors() {
        let headerless = write_csv("1.0,2.0,3.0\n4.0,5.0,6.0\n");
        assert!(matches!(
            load_csv(headerless.path(), "y"),
            Err(Error::MissingHeader { .. })
        ));

        let ok = write_csv("a,y\n1.0,2.0\n");
        assert!(matches!(
            load_csv(ok.path(), "z"),
            Err(Error::MissingResponse { .. })
        ));

        let all_bad = write_csv("a,y\nx,z\n");
        assert!(matches!(load_csv(all_bad.path(), "y"), Err(Error::EmptyTable)));

        assert!(matches!(
            load_csv(Path::new("/nonexistent/file.csv"), "y"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn screen_selects_planted_order() {
        // Variances decrease with the index prefix v0 > v1 > ...; the
        // correlation stage then favors the columns built from y.
        let y = vec![1.0, -1.0, 2.0, -2.0, 0.5];
        let noise = vec![0.3, -0.9, 0.4, 0.1, -0.2];
        let cols = vec![
            y.iter().map(|v| 10.0 * v).collect::<Vec<_>>(), // huge var, perfect cor
            noise.iter().map(|v| 8.0 * v).collect(),        // big var, weak cor
            y.iter().map(|v| 2.0 * v).collect(),            // small var, perfect cor
            vec![0.0, 0.0, 0.0, 0.0, 0.0],                  // zero var
            y.clone(),
        ];
        let names = vec!["c0".into(), "c1".into(), "c2".into(), "c3".into(), "y".into()];
        let t = RawTable::new(names, cols, "y").unwrap();

        let (s1, w1) = screen_features(&t, 3, 2).unwrap();
        assert!(w1.is_empty());
        assert_eq!(s1.covariate_names(), vec!["c0", "c2"]);

        let (s2, w2) = screen_features(&t, 10, 10).unwrap();
        assert_eq!(w2.len(), 2);
        assert_eq!(s2.covariate_names(), vec!["c0", "c1", "c2", "c3"]);

        let (again, _) = screen_features(&s1, 3, 2).unwrap();
        assert_eq!(again, s1);
    }

    #[test]
    fn screen_breaks_ties_by_column_order() {
        let y = vec![0.0, 1.0, 2.0];
        let dup = vec![3.0, 1.0, 2.0];
        let t = RawTable::new(
            vec!["first".into(), "second".into(), "y".into()],
            vec![dup.clone(), dup, y],
            "y",
        )
        .unwrap();
        let (s, _) = screen_features(&t, 1, 1).unwrap();
        assert_eq!(s.covariate_names(), vec!["first"]);
    }

    #[test]
    fn scaling_and_heldout_clipping() {
        let t = toy_table();
        let (scaled, scale) = scale_unit_interval(&t);
        assert_eq!(scaled.column(0), &[0.0, 0.5, 1.0]);
        assert_eq!(scaled.column(1), &[0.5, 0.5, 0.5]);
        assert_eq!(scaled.y(), t.y());
        assert_eq!(scale.constant, vec![false, true]);

        let held = RawTable::new(
            vec!["a".into(), "b".into(), "y".into()],
            vec![vec![0.0, 4.0], vec![9.0, 9.0], vec![0.3, 0.4]],
            "y",
        )
        .unwrap();
        let (out, clipped) = scale.apply(&held).unwrap();
        assert_eq!(clipped, 2);
        assert_eq!(out.column(0), &[0.0, 1.0]);
        assert_eq!(out.column(1), &[0.5, 0.5]);

        let wrong = RawTable::new(
            vec!["zz".into(), "b".into(), "y".into()],
            vec![vec![0.0], vec![1.0], vec![2.0]],
            "y",
        )
        .unwrap();
        assert!(scale.apply(&wrong).is_err());
    }

    #[test]
    fn response_normalization() {
        let t = toy_table();
        let out = normalize_response(&t, 2.5).unwrap();
        assert_abs_diff_eq!(sample_sd(out.y()), 2.5, epsilon = 1e-12);
        assert_eq!(out.column(0), t.column(0));

        let identity = normalize_response(&t, sample_sd(t.y())).unwrap();
        for (a, b) in identity.y().iter().zip(t.y()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }

        let before = abs_correlation(t.column(0), t.y());
        let after = abs_correlation(out.column(0), out.y());
        assert_abs_diff_eq!(before, after, epsilon = 1e-12);

        let flat = RawTable::new(
            vec!["a".into(), "y".into()],
            vec![vec![1.0, 2.0], vec![3.0, 3.0]],
            "y",
        )
        .unwrap();
        assert!(matches!(
            normalize_response(&flat, 2.5),
            Err(Error::ZeroVarianceResponse)
        ));
    }

    #[test]
    fn to_sample_requires_scaled_covariates() {
        let t = toy_table();
        assert!(t.to_sample().is_err());
        let (scaled, _) = scale_unit_interval(&t);
        let s = scaled.to_sample().unwrap();
        assert_eq!(s.d(), 2);
        assert_eq!(s.y(), t.y());
    }
}
