//! Cartesian sweeps over one hyperparameter axis and a seed set.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{run, Axis, RunConfig, RunSummary};

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: String,
    pub seed: u64,
    pub dir: Option<PathBuf>,
    pub summary: RunSummary,
}

/// Parses `"0,1,2"` or the half-open range `"0..3"`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b <= a {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    let seeds = s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<Vec<u64>>>()?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

pub fn parse_values(s: &str) -> Vec<String> {
    s.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect()
}

/// Median of the finite entries; `None` when there are none.
pub fn median(xs: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Runs every `(value, seed)` point. With the seed axis the values are the
/// seeds and `seeds` is ignored.
pub fn sweep(
    base: &RunConfig,
    axis: Axis,
    values: &[String],
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut points = Vec::new();
    for value in values {
        let mut cfg = base.clone();
        cfg.set_axis(axis, value)?;
        let point_seeds = if axis == Axis::Seed { vec![cfg.seed] } else { seeds.to_vec() };
        for seed in point_seeds {
            let mut c = cfg.clone();
            c.seed = seed;
            let dir = out.map(|o| o.join(format!("{}={}", axis.name(), value)).join(format!("seed={seed}")));
            let summary = run(&c, dir.as_deref())?;
            points.push(SweepPoint { value: value.clone(), seed, dir, summary });
        }
    }
    if let Some(o) = out {
        write_aggregate(&o.join("aggregate.csv"), axis, values, &points)?;
    }
    Ok(points)
}

pub fn write_aggregate(path: &Path, axis: Axis, values: &[String], points: &[SweepPoint]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record([
        "axis",
        "value",
        "runs",
        "median_modes",
        "median_topk_mean",
        "median_topk_similarity",
        "median_cumulative_regret",
        "median_final_loss",
    ])?;
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
    for value in values {
        let ps: Vec<&SweepPoint> = points.iter().filter(|p| &p.value == value).collect();
        let col = |f: &dyn Fn(&RunSummary) -> Option<f64>| {
            median(&ps.iter().filter_map(|p| f(&p.summary)).collect::<Vec<_>>())
        };
        w.write_record([
            axis.name().to_string(),
            value.clone(),
            ps.len().to_string(),
            fmt(col(&|s| Some(s.modes as f64))),
            fmt(col(&|s| s.topk_mean)),
            fmt(col(&|s| s.topk_similarity)),
            fmt(col(&|s| s.cumulative_regret)),
            fmt(col(&|s| s.final_loss)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_and_values() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 7").unwrap(), vec![4, 7]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("a").is_err());
        assert_eq!(parse_values("10, 30,100"), vec!["10", "30", "100"]);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[f64::NAN]), None);
    }
}
