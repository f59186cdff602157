//! Cross-run comparison.
//!
//! Reads finished run directories, groups them by run name, and emits one
//! long-format CSV: per-step seed means and population stds for every
//! training and evaluation metric, plus a final-window summary row per
//! (name, metric).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::runner::FORMAT_VERSION;

/// Training steps averaged by the summary rows.
pub const SUMMARY_WINDOW_STEPS: usize = 50;
/// Evaluation checkpoints averaged by the summary rows.
pub const SUMMARY_WINDOW_EVALS: usize = 10;

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("need at least two run directories, got {0}")]
    NotEnoughRuns(usize),
    #[error("io failure at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("schema mismatch at {path}: format_version {found}, expected {expected}")]
    SchemaMismatch {
        path: String,
        found: String,
        expected: u32,
    },
    #[error("malformed run file {path}: {message}")]
    Malformed { path: String, message: String },
}

struct Table {
    columns: Vec<String>,
    /// step -> values in column order (step column excluded).
    rows: Vec<(u64, Vec<f64>)>,
}

struct LoadedRun {
    name: String,
    metrics: Table,
    evals: Table,
}

fn read_file(path: &Path) -> Result<String, CompareError> {
    fs::read_to_string(path).map_err(|source| CompareError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn check_header(path: &Path, line: &str) -> Result<(), CompareError> {
    // Expected shape: "# format_version=1 seed=N".
    let found = line
        .split_whitespace()
        .find_map(|w| w.strip_prefix("format_version="))
        .unwrap_or("missing");
    if found != FORMAT_VERSION.to_string() {
        return Err(CompareError::SchemaMismatch {
            path: path.display().to_string(),
            found: found.to_string(),
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

fn parse_table(path: &Path) -> Result<Table, CompareError> {
    let malformed = |message: String| CompareError::Malformed {
        path: path.display().to_string(),
        message,
    };
    let body = read_file(path)?;
    let mut lines = body.lines();
    let header = lines
        .next()
        .ok_or_else(|| malformed("empty file".to_string()))?;
    check_header(path, header)?;
    let columns_line = lines
        .next()
        .ok_or_else(|| malformed("missing column header".to_string()))?;
    let mut columns: Vec<String> = columns_line.split(',').map(str::to_string).collect();
    if columns.first().map(String::as_str) != Some("step") {
        return Err(malformed(format!("first column is not step: {columns_line}")));
    }
    columns.remove(0);
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let step: u64 = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|e| malformed(format!("bad step in {line}: {e}")))?;
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| malformed(format!("bad value in {line}: {e}")))?;
        if values.len() != columns.len() {
            return Err(malformed(format!("column count mismatch in {line}")));
        }
        rows.push((step, values));
    }
    Ok(Table { columns, rows })
}

fn load_run(dir: &Path) -> Result<LoadedRun, CompareError> {
    let config_body = read_file(&dir.join("config.toml"))?;
    let config =
        ExperimentConfig::from_toml(&config_body).map_err(|e| CompareError::Malformed {
            path: dir.join("config.toml").display().to_string(),
            message: e.to_string(),
        })?;
    Ok(LoadedRun {
        name: config.run.name,
        metrics: parse_table(&dir.join("metrics.csv"))?,
        evals: parse_table(&dir.join("eval.csv"))?,
    })
}

fn population_std(values: &[f64], mean: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Emit rows for one (name, table-kind) group: per-step rows, then one
/// summary row per metric averaging each seed's final window.
fn emit_group(
    out: &mut String,
    name: &str,
    tables: &[&Table],
    window: usize,
) {
    let columns = &tables[0].columns;
    for (ci, column) in columns.iter().enumerate() {
        // step -> one value per seed that has that step
        let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for table in tables {
            for (step, values) in &table.rows {
                by_step.entry(*step).or_default().push(values[ci]);
            }
        }
        for (step, values) in &by_step {
            let m = mean(values);
            out.push_str(&format!(
                "{name},step,{step},{column},{m},{}\n",
                population_std(values, m)
            ));
        }
        let finals: Vec<f64> = tables
            .iter()
            .map(|table| {
                let n = table.rows.len();
                let lo = n.saturating_sub(window);
                let tail: Vec<f64> = table.rows[lo..].iter().map(|(_, v)| v[ci]).collect();
                mean(&tail)
            })
            .collect();
        let m = mean(&finals);
        out.push_str(&format!(
            "{name},summary,,{column},{m},{}\n",
            population_std(&finals, m)
        ));
    }
}

/// Build the comparison CSV from finished run directories.
pub fn compare(dirs: &[impl AsRef<Path>]) -> Result<String, CompareError> {
    if dirs.len() < 2 {
        return Err(CompareError::NotEnoughRuns(dirs.len()));
    }
    let mut by_name: BTreeMap<String, Vec<LoadedRun>> = BTreeMap::new();
    for dir in dirs {
        let run = load_run(dir.as_ref())?;
        by_name.entry(run.name.clone()).or_default().push(run);
    }
    let mut out = format!("# format_version={FORMAT_VERSION}\n");
    out.push_str("name,kind,step,metric,mean,std\n");
    for (name, runs) in &by_name {
        let metric_tables: Vec<&Table> = runs.iter().map(|r| &r.metrics).collect();
        emit_group(&mut out, name, &metric_tables, SUMMARY_WINDOW_STEPS);
        let eval_tables: Vec<&Table> = runs.iter().map(|r| &r.evals).collect();
        emit_group(&mut out, name, &eval_tables, SUMMARY_WINDOW_EVALS);
    }
    Ok(out)
}

/// Run `compare` and write the table to `out_file`.
pub fn compare_to_file(
    dirs: &[impl AsRef<Path>],
    out_file: &Path,
) -> Result<(), CompareError> {
    let table = compare(dirs)?;
    fs::write(out_file, table).map_err(|source| CompareError::Io {
        path: out_file.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::run_to_dir;

    fn tiny_config(name: &str) -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.run.name = name.to_string();
        config.run.total_steps = 4;
        config.run.eval_every = 2;
        config.run.eval_k = 2;
        config.run.eval_prompts = 2;
        config.optim.batch_prompts = 2;
        config.optim.group_size = 2;
        config
    }

    #[test]
    fn self_comparison_has_zero_stds() {
        let root = tempfile::tempdir().unwrap();
        let config = tiny_config("alpha");
        let a = root.path().join("a");
        let b = root.path().join("b");
        run_to_dir(&config, 9, &a).unwrap();
        run_to_dir(&config, 9, &b).unwrap();
        let table = compare(&[a, b]).unwrap();
        for line in table.lines().skip(2) {
            let std: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
            assert_eq!(std, 0.0, "{line}");
        }
    }

    #[test]
    fn two_seeds_aggregate_under_one_name() {
        let root = tempfile::tempdir().unwrap();
        let config = tiny_config("alpha");
        let a = root.path().join("s1");
        let b = root.path().join("s2");
        run_to_dir(&config, 1, &a).unwrap();
        run_to_dir(&config, 2, &b).unwrap();
        let table = compare(&[a, b]).unwrap();
        let summaries: Vec<&str> = table
            .lines()
            .filter(|l| l.starts_with("alpha,summary"))
            .collect();
        // one summary row per metrics.csv column plus one per eval.csv column
        assert_eq!(summaries.len(), 9 + 4);
    }

    #[test]
    fn distinct_names_stay_step_aligned() {
        let root = tempfile::tempdir().unwrap();
        let a = root.path().join("a");
        let b = root.path().join("b");
        run_to_dir(&tiny_config("psr-like"), 1, &a).unwrap();
        run_to_dir(&tiny_config("nsr-like"), 1, &b).unwrap();
        let table = compare(&[a, b]).unwrap();
        assert!(table.contains("psr-like,step,1,mean_entropy,"));
        assert!(table.contains("nsr-like,step,1,mean_entropy,"));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let root = tempfile::tempdir().unwrap();
        let a = root.path().join("a");
        let b = root.path().join("b");
        run_to_dir(&tiny_config("alpha"), 1, &a).unwrap();
        run_to_dir(&tiny_config("alpha"), 2, &b).unwrap();
        let path = b.join("metrics.csv");
        let body = fs::read_to_string(&path).unwrap();
        fs::write(&path, body.replace("format_version=1", "format_version=99")).unwrap();
        let err = compare(&[a, b]).unwrap_err();
        assert!(matches!(err, CompareError::SchemaMismatch { .. }), "{err}");
    }

    #[test]
    fn fewer_than_two_dirs_is_an_error() {
        let err = compare(&["only-one"]).unwrap_err();
        assert!(matches!(err, CompareError::NotEnoughRuns(1)));
    }
}
