//! Curves and summary table from training run directories.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::curriculum::{competence, competence_curve_csv};
use crate::error::{Error, Result};

use super::config::RunConfig;
use super::plot::{line_chart, Series, COLORS};
use super::{create_dir, write, Outcome};

/// One parsed `seed_<s>_metrics.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsFile {
    pub path: PathBuf,
    pub seed: u64,
    pub epoch: Vec<f64>,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_acc: Vec<f64>,
    pub eligible: Option<Vec<f64>>,
}

const REQUIRED: [&str; 4] = ["epoch", "train_loss", "val_loss", "val_acc"];

/// Parse a metrics CSV. Empty validation cells become NaN.
pub fn parse_metrics(path: &Path, text: &str, seed: u64) -> Result<MetricsFile> {
    let fail = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| fail(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = find(name).ok_or_else(|| fail(1, format!("missing column {name:?}")))?;
    }
    let elig_col = find("eligible");
    let mut m = MetricsFile {
        path: path.to_path_buf(),
        seed,
        epoch: Vec::new(),
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        val_acc: Vec::new(),
        eligible: elig_col.map(|_| Vec::new()),
    };
    for (i, line) in lines {
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(fail(ln, format!("expected {} fields, found {}", cols.len(), fields.len())));
        }
        let num = |c: usize, optional: bool| -> Result<f64> {
            let f = fields[c];
            if f.is_empty() && optional {
                return Ok(f64::NAN);
            }
            f.parse::<f64>()
                .map_err(|_| fail(ln, format!("column {:?}: {f:?} is not a number", cols[c])))
        };
        m.epoch.push(num(idx[0], false)?);
        m.train_loss.push(num(idx[1], false)?);
        m.val_loss.push(num(idx[2], true)?);
        m.val_acc.push(num(idx[3], true)?);
        if let (Some(c), Some(e)) = (elig_col, m.eligible.as_mut()) {
            e.push(num(c, false)?);
        }
    }
    if m.epoch.is_empty() {
        return Err(fail(2, "no data rows".into()));
    }
    Ok(m)
}

/// `seed_<s>_metrics.csv` files of one run directory, sorted by seed.
fn metrics_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(seed) = name
            .strip_prefix("seed_")
            .and_then(|r| r.strip_suffix("_metrics.csv"))
            .and_then(|s| s.parse::<u64>().ok())
        {
            out.push((seed, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn run_name(dir: &Path, i: usize) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .filter(|n| !n.is_empty() && n != "." && n != "..")
        .unwrap_or_else(|| format!("run{i}"))
}

fn series(name: &str, color: &'static str, x: &[f64], y: &[f64]) -> Series {
    Series {
        name: name.to_string(),
        color,
        points: x.iter().copied().zip(y.iter().copied()).collect(),
    }
}

/// Two charts stacked vertically in one SVG.
fn stack(top: &str, bottom: &str) -> String {
    let (w, h) = (640, 400);
    let inner = |s: &str, y: usize| s.replacen("<svg ", &format!("<svg y=\"{y}\" "), 1);
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{}\" viewBox=\"0 0 {w} {}\">\n{}{}</svg>\n",
        2 * h,
        2 * h,
        inner(top, 0),
        inner(bottom, h)
    )
}

fn best(m: &MetricsFile) -> Option<usize> {
    (0..m.val_loss.len())
        .filter(|&i| m.val_loss[i].is_finite())
        .min_by(|&a, &b| m.val_loss[a].total_cmp(&m.val_loss[b]))
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// Parse every run first; only then create `out` and write figures and
/// `summary.csv`, so a failure leaves nothing behind.
pub fn report(config: &RunConfig, runs: &[PathBuf], out: &Path) -> Result<Outcome> {
    let mut parsed = Vec::new();
    for (i, dir) in runs.iter().enumerate() {
        let files = metrics_files(dir)?;
        if files.is_empty() {
            return Err(Error::InvalidConfig(format!("{}: no seed_<n>_metrics.csv files", dir.display())));
        }
        let mut metrics = Vec::new();
        for (seed, path) in files {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            metrics.push(parse_metrics(&path, &text, seed)?);
        }
        parsed.push((run_name(dir, i), metrics));
    }

    let mut outputs: Vec<(String, String)> = Vec::new();
    let mut summary = String::from("run,seed,epochs,best_epoch,best_val_loss,best_val_acc,final_train_loss,final_val_acc\n");
    let mut eligible_series = Vec::new();
    for (name, metrics) in &parsed {
        for m in metrics {
            let loss = line_chart(
                &format!("{name} seed {}: loss", m.seed),
                "epoch",
                "cross-entropy",
                &[
                    series("train", COLORS[0], &m.epoch, &m.train_loss),
                    series("validation", COLORS[1], &m.epoch, &m.val_loss),
                ],
            );
            let acc = line_chart(
                &format!("{name} seed {}: validation accuracy", m.seed),
                "epoch",
                "accuracy",
                &[series("validation", COLORS[1], &m.epoch, &m.val_acc)],
            );
            outputs.push((format!("{name}_seed_{}_curves.svg", m.seed), stack(&loss, &acc)));
            let b = best(m);
            let last = m.epoch.len() - 1;
            summary.push_str(&format!(
                "{name},{},{},{},{},{},{},{}\n",
                m.seed,
                m.epoch.len(),
                b.map(|i| fmt(m.epoch[i])).unwrap_or_default(),
                b.map(|i| fmt(m.val_loss[i])).unwrap_or_default(),
                b.map(|i| fmt(m.val_acc[i])).unwrap_or_default(),
                fmt(m.train_loss[last]),
                fmt(m.val_acc[last]),
            ));
            if let Some(e) = &m.eligible {
                let color = COLORS[eligible_series.len() % COLORS.len()];
                eligible_series.push(series(&format!("{name} seed {}", m.seed), color, &m.epoch, e));
            }
        }
    }

    let params = config.curriculum_params();
    let curve: Vec<(f64, f64)> = (0..=params.total_epochs.saturating_mul(2).max(1))
        .map(|t| (f64::from(t), competence(t, &params)))
        .collect();
    outputs.push(("competence.csv".into(), competence_curve_csv(&params, params.total_epochs)));
    outputs.push((
        "competence.svg".into(),
        line_chart(
            &format!("competence (c0 = {}, T = {}, p = {})", params.c0, params.total_epochs, params.p),
            "epoch t",
            "c(t)",
            &[Series {
                name: "c(t)".into(),
                color: COLORS[0],
                points: curve,
            }],
        ),
    ));
    if !eligible_series.is_empty() {
        outputs.push((
            "eligible.svg".into(),
            line_chart("eligible training samples", "epoch", "samples", &eligible_series),
        ));
    }
    outputs.push(("summary.csv".into(), summary));

    create_dir(out)?;
    let mut files = Vec::new();
    for (name, contents) in &outputs {
        let path = out.join(name);
        write(&path, contents)?;
        files.push(path);
    }
    let text = files.iter().map(|p| format!("wrote {}\n", p.display())).collect();
    let json = json!({"command": "report", "files": files});
    Ok(Outcome { json, text })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "epoch,train_loss,val_loss,val_acc,lr,eligible\n0,0.9,0.8,0.5,0.001,10\n1,0.7,0.6,0.7,0.0005,20\n2,0.6,0.65,0.75,0,20\n";

    #[test]
    fn parses_metrics() {
        let m = parse_metrics(Path::new("m.csv"), CSV, 3).unwrap();
        assert_eq!(m.epoch, vec![0.0, 1.0, 2.0]);
        assert_eq!(m.eligible, Some(vec![10.0, 20.0, 20.0]));
        assert_eq!(best(&m), Some(1));
        let no_val = "epoch,train_loss,val_loss,val_acc\n0,0.5,,\n";
        let m = parse_metrics(Path::new("m.csv"), no_val, 0).unwrap();
        assert!(m.val_loss[0].is_nan());
        assert_eq!(best(&m), None);
    }

    #[test]
    fn malformed_csv_names_line() {
        let bad = "epoch,train_loss,val_loss,val_acc\n0,0.5,0.4,0.9\n1,abc,0.4,0.9\n";
        match parse_metrics(Path::new("bad.csv"), bad, 0) {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(path, Path::new("bad.csv"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_metrics(Path::new("x"), "epoch,loss\n", 0),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_metrics(Path::new("x"), "epoch,train_loss,val_loss,val_acc\n0,1\n", 0),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_metrics(Path::new("x"), "", 0).is_err());
    }

    #[test]
    fn one_run_one_figure() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("wbc");
        fs::create_dir(&run).unwrap();
        fs::write(run.join("seed_42_metrics.csv"), CSV).unwrap();
        let out = dir.path().join("report");
        report(&RunConfig::default(), &[run], &out).unwrap();
        assert!(out.join("wbc_seed_42_curves.svg").is_file());
        assert!(out.join("competence.svg").is_file());
        assert!(out.join("eligible.svg").is_file());
        let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 2);
        assert!(summary.lines().nth(1).unwrap().starts_with("wbc,42,3,1,0.6,0.7,0.6,0.75"));
    }

    #[test]
    fn empty_run_dir_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("empty");
        fs::create_dir(&run).unwrap();
        let out = dir.path().join("report");
        assert!(report(&RunConfig::default(), &[run.clone()], &out).is_err());
        assert!(!out.exists());
        // A malformed file in a later run also leaves nothing behind.
        let good = dir.path().join("good");
        fs::create_dir(&good).unwrap();
        fs::write(good.join("seed_1_metrics.csv"), CSV).unwrap();
        fs::write(run.join("seed_2_metrics.csv"), "epoch,train_loss,val_loss,val_acc\nx,1,1,1\n").unwrap();
        assert!(report(&RunConfig::default(), &[good, run], &out).is_err());
        assert!(!out.exists());
    }
}
