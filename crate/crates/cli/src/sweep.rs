//! Cartesian parameter sweeps over a base scenario.
//!
//! A sweep file is a scenario file with one extra `[sweep]` table whose keys
//! are dotted paths into the scenario (array elements by index) and whose
//! values are non-empty arrays of candidate values:
//!
//! ```toml
//! name = "gauss"
//! [geometry]
//! kind = "scaled_gaussian"
//! u0 = 2.0
//! [sweep]
//! "geometry.u0" = [1.5, 2.0, 3.0]
//! "flow.horizon" = [0.5, 1.0]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::config::ScenarioConfig;
use crate::error::{exit, CliError, CliResult};
use crate::execute::execute;

pub const MAX_RUNS: usize = 10_000;
pub const SUMMARY_FILE: &str = "sweep.json";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub index: usize,
    pub assignments: BTreeMap<String, Value>,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub name: String,
    pub runs: Vec<SweepRun>,
}

pub fn run_dir_name(index: usize) -> String {
    format!("run-{index:04}")
}

pub fn parse_sweep(text: &str) -> CliResult<SweepPlan> {
    let mut doc: Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    let axes = match doc.remove("sweep") {
        Some(Value::Table(t)) => t,
        Some(_) => return Err(CliError::Config("[sweep] must be a table".into())),
        None => return Err(CliError::Config("missing [sweep] table".into())),
    };
    let base: ScenarioConfig = Value::Table(doc.clone())
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;

    let mut keys: Vec<(String, Vec<Value>)> = Vec::new();
    let mut total = 1usize;
    for (key, values) in axes {
        let Value::Array(values) = values else {
            return Err(CliError::Config(format!("sweep key {key:?} must map to an array")));
        };
        if values.is_empty() {
            return Err(CliError::Config(format!("sweep key {key:?} has no values")));
        }
        if key.split('.').any(str::is_empty) {
            return Err(CliError::Config(format!("malformed sweep path {key:?}")));
        }
        if key == "name" || key.starts_with("output") {
            return Err(CliError::Config(format!("{key:?} cannot be swept")));
        }
        total = total
            .checked_mul(values.len())
            .filter(|&t| t <= MAX_RUNS)
            .ok_or_else(|| CliError::Config(format!("sweep exceeds {MAX_RUNS} runs")))?;
        keys.push((key, values));
    }
    keys.sort_by(|a, b| a.0.cmp(&b.0));

    let mut runs = Vec::with_capacity(total);
    for index in 0..total {
        let mut rest = index;
        let mut assignments = BTreeMap::new();
        let mut value = Value::Table(doc.clone());
        for (key, values) in keys.iter().rev() {
            let pick = &values[rest % values.len()];
            rest /= values.len();
            assign(&mut value, key, pick.clone())?;
            assignments.insert(key.clone(), pick.clone());
        }
        let mut config: ScenarioConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("run {index}: {}", e.message())))?;
        config.name = format!("{}-{index:04}", base.name);
        config.output = None;
        config
            .validate()
            .map_err(|e| CliError::Config(format!("run {index}: {e}")))?;
        runs.push(SweepRun {
            index,
            assignments,
            config,
        });
    }
    Ok(SweepPlan {
        name: base.name,
        runs,
    })
}

fn assign(root: &mut Value, path: &str, new: Value) -> CliResult<()> {
    let parts: Vec<&str> = path.split('.').collect();
    let mut cur = root;
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        cur = match cur {
            Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), new);
                    return Ok(());
                }
                t.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()))
            }
            Value::Array(a) => {
                let i: usize = part
                    .parse()
                    .map_err(|_| CliError::Config(format!("{path}: {part:?} is not an index")))?;
                let len = a.len();
                let slot = a
                    .get_mut(i)
                    .ok_or_else(|| CliError::Config(format!("{path}: index {i} out of range ({len})")))?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                slot
            }
            _ => return Err(CliError::Config(format!("{path}: {part:?} is inside a scalar"))),
        };
    }
    unreachable!("paths are non-empty")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub index: usize,
    pub name: String,
    pub dir: String,
    pub assignments: BTreeMap<String, serde_json::Value>,
    pub exit_code: i32,
    pub checks_passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSummary {
    pub name: String,
    pub runs: Vec<SweepEntry>,
}

impl SweepSummary {
    /// Exit status of the sweep: the first failing run decides.
    pub fn exit_code(&self, strict: bool) -> i32 {
        for r in &self.runs {
            if r.exit_code != exit::OK {
                return r.exit_code;
            }
            if strict && !r.checks_passed {
                return exit::VERIFICATION;
            }
        }
        exit::OK
    }
}

/// Runs every sweep point in its own directory `out/run-XXXX` on a pool of
/// `jobs` threads, then writes `out/sweep.json`.
pub fn run_sweep(plan: &SweepPlan, out: &Path, jobs: usize) -> CliResult<SweepSummary> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let runs: Vec<SweepEntry> = pool.install(|| {
        plan.runs
            .par_iter()
            .map(|run| {
                let dir: PathBuf = out.join(run_dir_name(run.index));
                let (exit_code, checks_passed, error) = match execute(&run.config, &dir) {
                    Ok(o) => (exit::OK, o.manifest.all_passed(), None),
                    Err(e) => (e.exit_code(), false, Some(e.line())),
                };
                SweepEntry {
                    index: run.index,
                    name: run.config.name.clone(),
                    dir: run_dir_name(run.index),
                    assignments: run
                        .assignments
                        .iter()
                        .map(|(k, v)| (k.clone(), serde_json::to_value(v).expect("toml value")))
                        .collect(),
                    exit_code,
                    checks_passed,
                    error,
                }
            })
            .collect()
    });
    let summary = SweepSummary {
        name: plan.name.clone(),
        runs,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    let path = out.join(SUMMARY_FILE);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "name = \"g\"\n[geometry]\nkind = \"scaled_gaussian\"\nu0 = 2.0\n";

    #[test]
    fn expands_in_key_order() {
        let text = format!("{BASE}[sweep]\n\"geometry.u0\" = [1.5, 3.0]\n\"flow.horizon\" = [0.1, 0.2, 0.3]\n");
        let plan = parse_sweep(&text).unwrap();
        assert_eq!(plan.runs.len(), 6);
        assert_eq!(plan.runs[0].config.name, "g-0000");
        assert_eq!(plan.runs[1].config.flow.horizon, 0.1);
        assert_eq!(plan.runs[1].assignments["geometry.u0"], Value::Float(3.0));
        assert_eq!(plan.runs[2].config.flow.horizon, 0.2);
    }

    #[test]
    fn indexes_into_arrays() {
        let text = "name = \"p\"\n[geometry]\nkind = \"product\"\n[[geometry.factors]]\nkind = \"round_circle\"\na0 = 1.0\n[[geometry.factors]]\nkind = \"scaled_gaussian\"\nu0 = 1.0\n[sweep]\n\"geometry.factors.0.a0\" = [0.5, 2.0]\n";
        let plan = parse_sweep(text).unwrap();
        assert_eq!(plan.runs.len(), 2);
        assert!(parse_sweep(&text.replace("factors.0", "factors.5")).is_err());
    }

    #[test]
    fn rejects_bad_sweeps() {
        for tail in [
            "",
            "[sweep]\n\"geometry.u0\" = []\n",
            "[sweep]\n\"geometry.u0\" = 3.0\n",
            "[sweep]\n\"geometry.u0\" = [-1.0]\n",
            "[sweep]\n\"geometry.bogus\" = [1.0]\n",
            "[sweep]\nname = [\"a\"]\n",
            "[sweep]\n\"a..b\" = [1]\n",
        ] {
            assert!(parse_sweep(&format!("{BASE}{tail}")).is_err(), "{tail}");
        }
    }
}
