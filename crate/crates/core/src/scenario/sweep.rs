use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Diagnostic, Scenario};
use super::run::{run_scenario, write_atomic, write_outputs, Rate, Stats};
use super::trace::CountingSink;
use super::ScenarioError;

/// Fields a grid may vary. Dotted keys address nested tables.
pub const SWEEPABLE: &[&str] = &[
    "protocol",
    "steps",
    "robots",
    "mode",
    "coordination_threshold",
    "swap_crash",
    "basis_mode",
    "eve",
    "window",
    "min_match_rate",
    "detection.sample_size",
    "detection.threshold",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridAxis {
    pub key: String,
    /// Raw TOML literals; bare words are taken as strings.
    pub values: Vec<String>,
}

/// `key=v1,v2,...` or an inclusive integer range `key=lo..hi`.
pub fn parse_grid(spec: &str) -> Result<GridAxis, ScenarioError> {
    let bad = || ScenarioError::BadGrid(spec.to_owned());
    let (key, rest) = spec.split_once('=').ok_or_else(bad)?;
    let key = key.trim();
    if !SWEEPABLE.contains(&key) {
        return Err(ScenarioError::UnknownGridField(key.to_owned()));
    }
    let rest = rest.trim();
    let values: Vec<String> = if let Some((lo, hi)) = rest.split_once("..") {
        let lo: i64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: i64 = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).map(|v| v.to_string()).collect()
    } else {
        rest.split(',').map(|v| v.trim().to_owned()).collect()
    };
    if values.iter().any(String::is_empty) {
        return Err(bad());
    }
    Ok(GridAxis { key: key.to_owned(), values })
}

fn literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

fn apply_point(base: &Scenario, point: &[(String, String)]) -> Result<Scenario, ScenarioError> {
    let mut table = toml::Table::try_from(base).expect("scenario renders as a table");
    for (key, raw) in point {
        if !SWEEPABLE.contains(&key.as_str()) {
            return Err(ScenarioError::UnknownGridField(key.clone()));
        }
        let mut slot = &mut table;
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().expect("split yields one part");
        for p in parts {
            slot = slot
                .entry(p)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| ScenarioError::UnknownGridField(key.clone()))?;
        }
        slot.insert(leaf.to_owned(), literal(raw));
    }
    table.try_into().map_err(|e: toml::de::Error| {
        ScenarioError::Invalid(Diagnostic { line: None, column: None, message: e.message().to_owned(), context: None })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: BTreeMap<String, String>,
    pub seed: u64,
    pub stats: Stats,
}

/// Metrics of one grid point pooled over its seeds: rates add their counts
/// and trials, values are averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: BTreeMap<String, String>,
    pub seeds: usize,
    pub rates: BTreeMap<String, Rate>,
    pub values: BTreeMap<String, f64>,
    pub crashes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub base: String,
    pub rows: Vec<SweepRow>,
    pub points: Vec<PointSummary>,
}

fn cartesian(grid: &[GridAxis]) -> Vec<Vec<(String, String)>> {
    grid.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((axis.key.clone(), v.clone()));
                    p
                })
            })
            .collect()
    })
}

/// Runs every (grid point, seed) pair in parallel. Rows come back in grid
/// order, seeds inner. With `out_dir`, each run also writes its trace and
/// stats there under `<base>-p<point>-s<seed>`.
pub fn sweep(
    base: &Scenario,
    grid: &[GridAxis],
    seeds: &[u64],
    out_dir: Option<&Path>,
) -> Result<SweepReport, ScenarioError> {
    if seeds.is_empty() {
        return Err(ScenarioError::NoSeeds);
    }
    let points = cartesian(grid);
    let mut jobs = Vec::with_capacity(points.len() * seeds.len());
    for (i, point) in points.iter().enumerate() {
        let mut s = apply_point(base, point)?;
        for &seed in seeds {
            s.seed = seed;
            s.name = format!("{}-p{i}-s{seed}", base.name);
            s.validate().map_err(|(key, msg)| ScenarioError::Invalid(Diagnostic::at_key("", key, msg)))?;
            jobs.push((i, s.clone()));
        }
    }
    let stats: Vec<Stats> = jobs
        .par_iter()
        .map(|(_, s)| match out_dir {
            Some(dir) => write_outputs(s, dir).map(|o| o.stats),
            None => run_scenario(s, &mut CountingSink::default()),
        })
        .collect::<Result<_, _>>()?;

    let as_map = |p: &[(String, String)]| p.iter().cloned().collect::<BTreeMap<_, _>>();
    let rows: Vec<SweepRow> = jobs
        .iter()
        .zip(stats)
        .map(|((i, s), stats)| SweepRow { point: as_map(&points[*i]), seed: s.seed, stats })
        .collect();
    let summaries = points
        .iter()
        .enumerate()
        .map(|(i, point)| {
            let mine: Vec<&Stats> =
                jobs.iter().zip(&rows).filter(|((j, _), _)| *j == i).map(|(_, r)| &r.stats).collect();
            let mut rates: BTreeMap<String, Rate> = BTreeMap::new();
            let mut sums: BTreeMap<String, f64> = BTreeMap::new();
            for st in &mine {
                for (k, r) in &st.rates {
                    rates.entry(k.clone()).and_modify(|acc| *acc = acc.merged(*r)).or_insert(*r);
                }
                for (k, v) in &st.values {
                    *sums.entry(k.clone()).or_default() += v;
                }
            }
            let n = mine.len();
            PointSummary {
                point: as_map(point),
                seeds: n,
                rates,
                values: sums.into_iter().map(|(k, v)| (k, v / n as f64)).collect(),
                crashes: mine.iter().map(|s| s.crashes).sum(),
            }
        })
        .collect();
    Ok(SweepReport { base: base.name.clone(), rows, points: summaries })
}

/// Writes `<base>.sweep.json` into `dir` and returns its path.
pub fn write_sweep_report(report: &SweepReport, dir: &Path) -> Result<PathBuf, ScenarioError> {
    fs::create_dir_all(dir).map_err(|source| ScenarioError::Io { path: dir.to_owned(), source })?;
    let path = dir.join(format!("{}.sweep.json", report.base));
    let mut doc = serde_json::to_vec_pretty(report).expect("report serializes");
    doc.push(b'\n');
    write_atomic(&path, &doc)?;
    Ok(path)
}
