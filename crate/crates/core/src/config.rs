//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated and may be wrapped in brackets. Unknown and repeated keys are
//! rejected.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::pde::{AdjointAdvection, LinearizedCoupling};
use crate::problems::{Example, ExperimentSpec};
use crate::projection::InnerProduct;

/// Environment variable overriding `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "BILINEAR_OUTPUT_DIR";

const KNOWN_KEYS: &[&str] = &[
    "example",
    "level",
    "levels",
    "dt_power",
    "alpha1",
    "tol",
    "tol_pcg",
    "max_outer",
    "max_inner",
    "output_dir",
    "snapshot_times",
    "reference_level",
    "threads",
    "restart_every",
    "warm_start",
    "adjoint_form",
    "linearized_coupling",
    "inner_product",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spec: ExperimentSpec,
    pub output_dir: PathBuf,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Template spec; `level` and `dt_power` are replaced per sweep entry.
    pub base: ExperimentSpec,
    pub levels: Vec<u32>,
    pub output_dir: PathBuf,
    pub snapshot_times: Vec<f64>,
}

impl SweepConfig {
    /// Spec for one sweep level, with `dt = h / 2`.
    pub fn spec_for(&self, level: u32) -> ExperimentSpec {
        let mut s = self.base.clone();
        s.level = level;
        s.dt_power = level + 1;
        s
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(err(line, format!("expected `key = value`, found `{content}`")));
            };
            let key = key.trim();
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(err(line, format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(err(line, format!("empty value for `{key}`")));
            }
            if let Some((first, _)) = map.get(key) {
                return Err(err(line, format!("duplicate key `{key}` (first set on line {first})")));
            }
            map.insert(key.to_string(), (line, value.to_string()));
        }
        Ok(Self { map })
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.map.get(key)
    }

    fn required(&self, key: &str) -> Result<&(usize, String)> {
        self.raw(key)
            .ok_or_else(|| err(0, format!("missing required key `{key}`")))
    }

    fn forbid(&self, key: &str, why: &str) -> Result<()> {
        match self.raw(key) {
            Some((line, _)) => Err(err(*line, format!("`{key}` is not allowed here: {why}"))),
            None => Ok(()),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| err(*line, format!("invalid value `{v}` for `{key}`"))),
        }
    }

    fn need<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.required(key)?;
        Ok(self.get(key)?.unwrap())
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        let inner = v.trim().trim_start_matches('[').trim_end_matches(']').trim();
        if inner.is_empty() {
            return Ok(Some(Vec::new()));
        }
        inner
            .split(',')
            .map(|s| {
                let s = s.trim();
                s.parse()
                    .map_err(|_| err(*line, format!("invalid list entry `{s}` for `{key}`")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)]) -> Result<Option<T>> {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        let lower = v.to_ascii_lowercase();
        options
            .iter()
            .find(|(name, _)| *name == lower)
            .map(|(_, t)| Some(*t))
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                err(*line, format!("`{key}` must be one of {}", names.join(", ")))
            })
    }

    fn line_of(&self, key: &str) -> usize {
        self.raw(key).map_or(0, |(l, _)| *l)
    }
}

/// Settings shared by `run` and `sweep`; `level` is a placeholder for sweeps.
fn common_spec(e: &Entries, level: u32) -> Result<ExperimentSpec> {
    let id: u32 = e.need("example")?;
    let example = Example::from_id(id).map_err(|_| err(e.line_of("example"), "`example` must be 1 or 2"))?;
    let mut s = ExperimentSpec::new(example, level);
    s.alpha1 = e.need("alpha1")?;
    s.tol = e.need("tol")?;
    if let Some(v) = e.get("tol_pcg")? {
        s.tol_pcg = v;
    }
    if let Some(v) = e.get("max_outer")? {
        s.max_outer = v;
    }
    if let Some(v) = e.get("max_inner")? {
        s.max_inner = v;
    }
    s.reference_level = e.get("reference_level")?;
    if let Some(v) = e.get("threads")? {
        s.threads = v;
    }
    s.restart_every = e.get("restart_every")?;
    if let Some(v) = e.get("warm_start")? {
        s.warm_start = v;
    }
    if let Some(v) = e.choice(
        "adjoint_form",
        &[("transpose", AdjointAdvection::Transpose), ("direct", AdjointAdvection::Direct)],
    )? {
        s.adjoint = v;
    }
    if let Some(v) = e.choice(
        "linearized_coupling",
        &[("lagged", LinearizedCoupling::Lagged), ("current", LinearizedCoupling::Current)],
    )? {
        s.linearized = v;
    }
    if let Some(v) = e.choice("inner_product", &[("h1", InnerProduct::H1), ("l2", InnerProduct::L2)])? {
        s.inner_product = v;
    }
    if s.max_outer == 0 {
        return Err(err(e.line_of("max_outer"), "`max_outer` must be at least 1"));
    }
    if s.max_inner == 0 {
        return Err(err(e.line_of("max_inner"), "`max_inner` must be at least 1"));
    }
    if !(s.alpha1 > 0.0) {
        return Err(err(e.line_of("alpha1"), "`alpha1` must be positive"));
    }
    if !(s.tol > 0.0) {
        return Err(err(e.line_of("tol"), "`tol` must be positive"));
    }
    if !(s.tol_pcg > 0.0) {
        return Err(err(e.line_of("tol_pcg"), "`tol_pcg` must be positive"));
    }
    Ok(s)
}

fn output_dir(e: &Entries) -> Result<PathBuf> {
    let (_, dir) = e.required("output_dir")?;
    Ok(match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(dir),
    })
}

fn snapshot_times(e: &Entries) -> Result<Vec<f64>> {
    let times: Vec<f64> = e.list("snapshot_times")?.unwrap_or_default();
    for &t in &times {
        if !(0.0..=1.0).contains(&t) {
            return Err(err(
                e.line_of("snapshot_times"),
                format!("snapshot time {t} outside [0, 1]"),
            ));
        }
    }
    Ok(times)
}

fn check_level(e: &Entries, key: &str, level: u32) -> Result<()> {
    if !(2..=12).contains(&level) {
        return Err(err(e.line_of(key), format!("level {level} outside 2..=12")));
    }
    Ok(())
}

/// Parses a single-run configuration.
pub fn parse_run(text: &str) -> Result<RunConfig> {
    let e = Entries::parse(text)?;
    e.forbid("levels", "use the sweep command for level lists")?;
    for key in ["example", "level", "dt_power", "alpha1", "tol", "output_dir"] {
        e.required(key)?;
    }
    let level: u32 = e.need("level")?;
    check_level(&e, "level", level)?;
    let mut spec = common_spec(&e, level)?;
    spec.dt_power = e.need("dt_power")?;
    if spec.dt_power > 24 {
        return Err(err(e.line_of("dt_power"), "`dt_power` must be at most 24"));
    }
    if let Some(r) = spec.reference_level {
        if r < level || r > 12 {
            return Err(err(
                e.line_of("reference_level"),
                format!("`reference_level` must lie in {level}..=12"),
            ));
        }
    }
    Ok(RunConfig {
        spec,
        output_dir: output_dir(&e)?,
        snapshot_times: snapshot_times(&e)?,
    })
}

/// Parses a sweep configuration (a `levels` list instead of `level` and `dt_power`).
pub fn parse_sweep(text: &str) -> Result<SweepConfig> {
    let e = Entries::parse(text)?;
    e.forbid("level", "sweeps take `levels`")?;
    e.forbid("dt_power", "sweeps use dt = h/2")?;
    e.forbid("reference_level", "sweeps use the default reference level")?;
    for key in ["example", "levels", "alpha1", "tol", "output_dir"] {
        e.required(key)?;
    }
    let levels: Vec<u32> = e.list("levels")?.unwrap();
    if levels.is_empty() {
        return Err(err(e.line_of("levels"), "`levels` must not be empty"));
    }
    for &l in &levels {
        check_level(&e, "levels", l)?;
    }
    let base = common_spec(&e, levels[0])?;
    Ok(SweepConfig {
        base,
        levels,
        output_dir: output_dir(&e)?,
        snapshot_times: snapshot_times(&e)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "example = 1\nlevel = 5\ndt_power = 6\nalpha1 = 1e6\ntol = 1e-5\noutput_dir = out\n";

    #[test]
    fn minimal_run_config() {
        let c = parse_run(BASE).unwrap();
        assert_eq!(c.spec.level, 5);
        assert_eq!(c.spec.steps(), 64);
        assert_eq!(c.spec.tol_pcg, 1e-8);
        assert_eq!(c.spec.max_outer, 2000);
        assert!(c.snapshot_times.is_empty());
    }

    #[test]
    fn missing_tol_is_named() {
        let text = BASE.replace("tol = 1e-5\n", "");
        let e = parse_run(&text).unwrap_err();
        assert!(e.to_string().contains("`tol`"), "{e}");
    }

    #[test]
    fn unknown_key_has_line_number() {
        let text = format!("{BASE}# fine\ntoll = 3\n");
        match parse_run(&text).unwrap_err() {
            Error::Config { line, message } => {
                assert_eq!(line, 8);
                assert!(message.contains("toll"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lists_and_choices() {
        let text = format!("{BASE}snapshot_times = [0.25, 0.5,0.75]\nadjoint_form = Direct\nwarm_start = true\n");
        let c = parse_run(&text).unwrap();
        assert_eq!(c.snapshot_times, vec![0.25, 0.5, 0.75]);
        assert_eq!(c.spec.adjoint, AdjointAdvection::Direct);
        assert!(c.spec.warm_start);
        let bad = format!("{BASE}inner_product = h2\n");
        assert!(matches!(parse_run(&bad), Err(Error::Config { line: 7, .. })));
    }

    #[test]
    fn malformed_and_duplicate_lines() {
        assert!(matches!(
            parse_run(&format!("{BASE}level 6\n")),
            Err(Error::Config { line: 7, .. })
        ));
        assert!(matches!(
            parse_run(&format!("{BASE}level = 6\n")),
            Err(Error::Config { line: 7, .. })
        ));
        assert!(matches!(
            parse_run(&BASE.replace("level = 5", "level = five")),
            Err(Error::Config { line: 2, .. })
        ));
    }

    #[test]
    fn sweep_levels() {
        let text = "example = 1\nlevels = 5, 6\nalpha1 = 1e6\ntol = 1e-5\noutput_dir = o\n";
        let c = parse_sweep(text).unwrap();
        assert_eq!(c.levels, vec![5, 6]);
        assert_eq!(c.spec_for(6).dt_power, 7);
        let empty = text.replace("5, 6", "[]");
        assert!(matches!(parse_sweep(&empty), Err(Error::Config { line: 2, .. })));
        assert!(parse_sweep(&format!("{text}level = 3\n")).is_err());
    }
}
