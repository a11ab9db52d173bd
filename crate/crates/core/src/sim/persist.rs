//! CSV results, key-value sidecar and plot data.
//!
//! `results.csv` holds one row per test and signal level; `results.config` next to it
//! echoes the configuration, its digest and the wall-clock time, and is itself a
//! valid configuration file for re-running the experiment.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::experiment::{ResultRow, SimResult};

pub const CSV_HEADER: &str = "test_id,criterion,shrinkage,prior,c,signal,rate,se,replicates,seed";

/// Sidecar path: the results path with its extension replaced by `config`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("config")
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses `key = value` lines, skipping blanks and `#` comments.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (k, v) = l.split_once('=').ok_or_else(|| Error::Parse(format!("expected key = value, got {l:?}")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

/// Writes the results CSV and its sidecar.
pub fn persist(result: &SimResult, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for r in &result.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.test_id,
            r.criterion,
            r.shrinkage,
            r.prior,
            float(r.c),
            float(r.signal),
            float(r.rate),
            float(r.se),
            r.replicates,
            r.seed
        ));
    }
    fs::write(path, csv)?;

    let mut side = String::new();
    for (k, v) in &result.config {
        side.push_str(&format!("{k} = {v}\n"));
    }
    side.push_str(&format!("digest = {}\n", result.digest));
    side.push_str(&format!("elapsed_secs = {}\n", float(result.elapsed_secs)));
    fs::write(sidecar_path(path), side)?;
    Ok(())
}

fn parse_row(line: &str) -> Result<ResultRow> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 10 {
        return Err(Error::Parse(format!("expected 10 fields, got {}: {line:?}", f.len())));
    }
    let num = |i: usize| -> Result<f64> { f[i].parse().map_err(|_| Error::Parse(format!("bad number {:?}", f[i]))) };
    Ok(ResultRow {
        test_id: f[0].into(),
        criterion: f[1].parse()?,
        shrinkage: f[2].into(),
        prior: f[3].into(),
        c: num(4)?,
        signal: num(5)?,
        rate: num(6)?,
        se: num(7)?,
        replicates: f[8].parse().map_err(|_| Error::Parse(format!("bad replicate count {:?}", f[8])))?,
        seed: f[9].parse().map_err(|_| Error::Parse(format!("bad seed {:?}", f[9])))?,
    })
}

/// Reads back a result written by [`persist`].
pub fn read_result(path: &Path) -> Result<SimResult> {
    let csv = fs::read_to_string(path)?;
    let mut lines = csv.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse(format!("{} does not start with the results header", path.display())));
    }
    let rows = lines.filter(|l| !l.is_empty()).map(parse_row).collect::<Result<Vec<_>>>()?;

    let mut config = parse_kv(&fs::read_to_string(sidecar_path(path))?)?;
    let take = |config: &mut Vec<(String, String)>, key: &str| -> Result<String> {
        let i = config
            .iter()
            .position(|(k, _)| k == key)
            .ok_or_else(|| Error::Parse(format!("sidecar lacks {key:?}")))?;
        Ok(config.remove(i).1)
    };
    let digest = take(&mut config, "digest")?;
    let elapsed = take(&mut config, "elapsed_secs")?;
    let elapsed_secs = elapsed.parse().map_err(|_| Error::Parse(format!("bad elapsed time {elapsed:?}")))?;
    Ok(SimResult { digest, config, rows, elapsed_secs })
}

/// Writes one `signal,rate` CSV per test into `dir`, named `<stem>_<test_id>.csv`.
pub fn write_plot_data(result: &SimResult, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut ids: Vec<&str> = Vec::new();
    for r in &result.rows {
        if !ids.contains(&r.test_id.as_str()) {
            ids.push(&r.test_id);
        }
    }
    let mut out = Vec::new();
    for id in ids {
        let safe: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect();
        let path = dir.join(format!("{stem}_{safe}.csv"));
        let mut text = String::from("signal,rate\n");
        for r in result.curve(id) {
            text.push_str(&format!("{},{}\n", float(r.signal), float(r.rate)));
        }
        fs::write(&path, text)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glht::Criterion;

    fn sample() -> SimResult {
        let row = |id: &str, c: f64, rate: f64| ResultRow {
            test_id: id.into(),
            criterion: Criterion::LR,
            shrinkage: "ridge".into(),
            prior: "t100".into(),
            c,
            signal: c * 3.7,
            rate,
            se: (rate * (1.0 - rate) / 2000.0).sqrt(),
            replicates: 2000,
            seed: 7,
        };
        SimResult {
            digest: "abc".into(),
            config: vec![("p".into(), "150".into()), ("seed".into(), "7".into())],
            rows: vec![row("LR_ridge_t100", 0.0, 0.054), row("LR_ridge_t100", 0.1, 1.0 / 3.0), row("LR_zgz", 0.0, 0.056)],
            elapsed_secs: 12.345678,
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.csv");
        let res = sample();
        persist(&res, &path).unwrap();
        assert_eq!(read_result(&path).unwrap(), res);
        let side = fs::read_to_string(sidecar_path(&path)).unwrap();
        assert!(side.contains("seed = 7"));
        let csv = fs::read_to_string(&path).unwrap();
        assert!(csv.contains("3.3333333333333331e-1"));
    }

    #[test]
    fn plot_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_plot_data(&sample(), dir.path(), "power").unwrap();
        assert_eq!(files.len(), 2);
        let text = fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("signal,rate\n"));
    }
}
