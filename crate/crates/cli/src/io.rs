//! Config ingestion and CSV input.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;

use hanzawa_core::config::SurfaceSpec;
use hanzawa_core::{ReferenceSurface, RunConfig};

/// A configuration or usage problem; the process exits with code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// 1-based line and column of byte `offset`.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

pub fn parse_toml<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let at = match e.span() {
            Some(span) => {
                let (l, c) = line_col(text, span.start);
                format!("line {l}, column {c}")
            }
            None => "unknown position".into(),
        };
        config_err(format!("{origin}: parse error at {at}: {}", e.message()))
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

/// Load the run config (defaults when absent), apply a surface file on top
/// and validate before any computation.
pub fn load_config(config: Option<&Path>, surface: Option<&Path>) -> Result<RunConfig> {
    let mut cfg: RunConfig = match config {
        Some(p) => parse_toml(&read(p)?, &p.display().to_string())?,
        None => RunConfig::default(),
    };
    if let Some(p) = surface {
        cfg.surface = Some(parse_toml::<SurfaceSpec>(&read(p)?, &p.display().to_string())?);
    }
    cfg.validate().map_err(|e| config_err(e.to_string()))?;
    Ok(cfg)
}

/// Height CSV with header `u,v,h,dh_dt`, rows in grid order.
pub fn read_height_csv(path: &Path, surface: &ReferenceSurface) -> Result<Vec<f64>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rd.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.len() < 3 || header[0] != "u" || header[1] != "v" || header[2] != "h" {
        return Err(config_err(format!("{}: expected header u,v,h[,dh_dt], got {}", path.display(), header.join(","))));
    }
    let nodes = surface.nodes();
    let mut h = Vec::with_capacity(nodes.len());
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let val = |k: usize| -> Result<f64> {
            row.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| config_err(format!("{}: row {}: bad number in column {}", path.display(), i + 2, k + 1)))
        };
        let Some(nd) = nodes.get(i) else {
            return Err(config_err(format!("{}: more rows than the {} grid nodes", path.display(), nodes.len())));
        };
        if (val(0)? - nd.s[0]).abs() > 1e-9 || (val(1)? - nd.s[1]).abs() > 1e-9 {
            return Err(config_err(format!("{}: row {} is not at grid node ({}, {})", path.display(), i + 2, nd.s[0], nd.s[1])));
        }
        h.push(val(2)?);
    }
    if h.len() != nodes.len() {
        return Err(config_err(format!("{}: {} rows for {} grid nodes", path.display(), h.len(), nodes.len())));
    }
    Ok(h)
}

/// Tensor-grid samples: leading columns are coordinates (last fastest),
/// the final column is the value. Returns `(shape, lo, hi, values)`.
pub fn read_grid_csv(path: &Path) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let width = rd.headers()?.len();
    if width < 2 {
        return Err(config_err(format!("{}: need coordinate columns and a value column", path.display())));
    }
    let d = width - 1;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row: Option<Vec<f64>> = rec.iter().map(|s| s.trim().parse().ok()).collect();
        rows.push(row.ok_or_else(|| config_err(format!("{}: row {}: bad number", path.display(), i + 2)))?);
    }
    let mut axes: Vec<Vec<f64>> = vec![Vec::new(); d];
    for (k, axis) in axes.iter_mut().enumerate() {
        let mut c: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        c.sort_by(f64::total_cmp);
        c.dedup();
        *axis = c;
    }
    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    if shape.iter().product::<usize>() != rows.len() {
        return Err(config_err(format!("{}: rows do not form a tensor grid of shape {shape:?}", path.display())));
    }
    let mut values = vec![f64::NAN; rows.len()];
    for r in &rows {
        let mut flat = 0;
        for k in 0..d {
            let j = axes[k].binary_search_by(|x| x.total_cmp(&r[k])).expect("coordinate from this axis");
            flat = flat * shape[k] + j;
        }
        values[flat] = r[d];
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(config_err(format!("{}: duplicate grid points", path.display())));
    }
    let lo = axes.iter().map(|a| a[0]).collect();
    let hi = axes.iter().map(|a| a[a.len() - 1]).collect();
    Ok((shape, lo, hi, values))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("a = 1\nb = x", 10), (2, 5));
        assert_eq!(line_col("abc", 0), (1, 1));
    }

    #[test]
    fn toml_errors_carry_position() {
        let e = parse_toml::<RunConfig>("[fluid]\nnu_plus = \"x\"\n", "t.toml").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(e.downcast_ref::<ConfigError>().is_some());
    }
}
