//! CSV and JSON writers, and the trajectory reader behind `plotdata`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::sim::TrajectoryRow;

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LabError::File(format!("{}: {e}", dir.display())))?;
    }
    File::create(path).map_err(|e| LabError::File(format!("{}: {e}", path.display())))
}

/// Shortest round-trip scientific notation, identical on every run.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| LabError::File(format!("{}: {e}", path.display())))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut w = csv::Writer::from_writer(BufWriter::new(create(path)?));
    let io = |e: csv::Error| LabError::File(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn trajectory_header(l: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "s", "lambda"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=l).map(|k| format!("b_{k}")));
    h.push("E".into());
    h.push("E_2".into());
    h
}

pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow], l: usize) -> Result<()> {
    write_csv(
        path,
        &trajectory_header(l),
        rows.iter().map(|r| {
            let mut v = vec![r.t, r.s, r.lambda];
            v.extend(&r.b);
            v.push(r.energy);
            v.push(r.e2);
            v
        }),
    )
}

/// Columns t and lambda of a trajectory file.
#[derive(Debug, Clone)]
pub struct TrajectoryTable {
    pub header: Vec<String>,
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryTable> {
    let file = File::open(path).map_err(|e| LabError::File(format!("{}: {e}", path.display())))?;
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> =
        rd.headers().map_err(|e| LabError::Parse { line: 1, msg: e.to_string() })?.iter().map(str::to_string).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LabError::Parse { line: 1, msg: format!("missing column '{name}'") })
    };
    let (it, il) = (col("t")?, col("lambda")?);
    let mut table = TrajectoryTable { header: header.clone(), t: Vec::new(), lambda: Vec::new() };
    for rec in rd.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            LabError::Parse { line, msg: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(LabError::Parse {
                line,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let field = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| LabError::Parse { line, msg: format!("{}: '{}': {e}", header[i], &rec[i]) })
        };
        table.t.push(field(it)?);
        table.lambda.push(field(il)?);
    }
    if table.t.is_empty() {
        return Err(LabError::Parse { line: 2, msg: "no data rows".into() });
    }
    Ok(table)
}

/// Fields of `rate_report.json` that `plotdata` needs.
#[derive(Debug, Clone, Deserialize)]
pub struct RateSummary {
    #[serde(rename = "T")]
    pub t_blowup: Option<f64>,
    pub exponent: Option<f64>,
    #[serde(rename = "c")]
    pub prefactor: Option<f64>,
}

pub fn read_rate_summary(path: &Path) -> Result<RateSummary> {
    let text = fs::read_to_string(path).map_err(|e| LabError::File(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| LabError::Parse { line: e.line(), msg: e.to_string() })
}

/// Writes `loglog.csv` with (log(T−t), log λ) and `fit_overlay.csv` with the fitted line and
/// its slope, both into `out`.
pub fn plotdata(run_dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let traj = read_trajectory(&run_dir.join("trajectory.csv"))?;
    let rate = read_rate_summary(&run_dir.join("rate_report.json"))?;
    let (Some(t_blowup), Some(q), Some(c)) = (rate.t_blowup, rate.exponent, rate.prefactor) else {
        return Err(LabError::File("rate_report.json has no rate fit".into()));
    };
    let pairs: Vec<(f64, f64)> = traj
        .t
        .iter()
        .zip(&traj.lambda)
        .filter(|(t, l)| t_blowup - **t > 0.0 && **l > 0.0)
        .map(|(t, l)| ((t_blowup - t).ln(), l.ln()))
        .collect();
    let loglog = out.join("loglog.csv");
    let overlay = out.join("fit_overlay.csv");
    write_csv(&loglog, &["log_T_minus_t".into(), "log_lambda".into()], pairs.iter().map(|(x, y)| vec![*x, *y]))?;
    write_csv(
        &overlay,
        &["log_T_minus_t".into(), "log_lambda_fit".into(), "slope".into(), "intercept".into()],
        pairs.iter().map(|(x, _)| vec![*x, c.ln() + q * x, q, c.ln()]),
    )?;
    Ok(vec![loglog, overlay])
}
