use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use adaprox::RunTrace;

use crate::experiment::OutputFormat;
use crate::runner::RunSummary;
use crate::BenchError;

fn format_of(path: &Path) -> Result<OutputFormat, BenchError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(OutputFormat::Csv),
        Some("json") => Ok(OutputFormat::Json),
        _ => Err(BenchError::Usage(format!(
            "cannot tell the format of {} (expected .csv or .json)",
            path.display()
        ))),
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn create(path: &Path) -> Result<fs::File, BenchError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| BenchError::io(path, e))
}

/// CSV columns: `iteration, loss, subiters_<block>..., rel_change_<block>...,
/// elapsed_s`, one row per outer iteration. JSON holds the whole trace.
pub fn write_trace(trace: &RunTrace, path: &Path, format: OutputFormat) -> Result<(), BenchError> {
    let file = create(path)?;
    match format {
        OutputFormat::Json => serde_json::to_writer_pretty(file, trace)?,
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(file);
            let mut header = vec!["iteration".to_string(), "loss".to_string()];
            header.extend(trace.blocks.iter().map(|b| format!("subiters_{b}")));
            header.extend(trace.blocks.iter().map(|b| format!("rel_change_{b}")));
            header.push("elapsed_s".into());
            w.write_record(&header)?;
            for r in &trace.records {
                let mut row = vec![r.iteration.to_string(), num(r.loss)];
                row.extend(r.subiters.iter().map(|s| s.to_string()));
                row.extend(r.rel_change.iter().map(|&c| num(c)));
                row.push(num(r.elapsed_s));
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| BenchError::io(path, e))?;
        }
    }
    Ok(())
}

/// Per-iteration losses of a trace file written by [`write_trace`].
pub fn read_trace_losses(path: &Path) -> Result<Vec<f64>, BenchError> {
    match format_of(path)? {
        OutputFormat::Json => {
            let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
            let trace: RunTrace = serde_json::from_slice(&bytes)?;
            Ok(trace.records.iter().map(|r| r.loss).collect())
        }
        OutputFormat::Csv => {
            let mut r = csv::Reader::from_path(path)?;
            let col = r
                .headers()?
                .iter()
                .position(|h| h == "loss")
                .ok_or_else(|| BenchError::SceneFormat {
                    field: "loss".into(),
                    message: format!("no loss column in {}", path.display()),
                })?;
            let mut losses = Vec::new();
            for rec in r.records() {
                let rec = rec?;
                let v = rec[col].parse::<f64>().map_err(|e| BenchError::SceneFormat {
                    field: "loss".into(),
                    message: format!("{}: {e}", path.display()),
                })?;
                losses.push(v);
            }
            Ok(losses)
        }
    }
}

pub fn write_summaries(rows: &[RunSummary], path: &Path) -> Result<(), BenchError> {
    let file = create(path)?;
    match format_of(path)? {
        OutputFormat::Json => serde_json::to_writer_pretty(file, rows)?,
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(file);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush().map_err(|e| BenchError::io(path, e))?;
        }
    }
    Ok(())
}

pub fn read_summaries(path: &Path) -> Result<Vec<RunSummary>, BenchError> {
    match format_of(path)? {
        OutputFormat::Json => {
            let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
            Ok(serde_json::from_slice(&bytes)?)
        }
        OutputFormat::Csv => {
            let mut r = csv::Reader::from_path(path)?;
            Ok(r.deserialize().collect::<Result<_, _>>()?)
        }
    }
}

/// Orders rows by problem, step size and method, then seed.
pub fn sort_rows(rows: &mut [RunSummary]) {
    rows.sort_by(|a, b| {
        a.problem
            .cmp(&b.problem)
            .then(a.alpha.total_cmp(&b.alpha))
            .then_with(|| a.method.cmp(&b.method))
            .then(a.seed.cmp(&b.seed))
    });
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub table: PathBuf,
    pub curves: Vec<PathBuf>,
}

/// Writes the sorted table to `out` and, next to it in `<stem>_curves/`, one
/// `iteration loss` file per run read from the trace files in `trace_dir`.
pub fn emit_comparison(rows: &[RunSummary], trace_dir: &Path, out: &Path) -> Result<Comparison, BenchError> {
    if rows.is_empty() {
        return Err(BenchError::Usage("nothing to compare: no summary rows".into()));
    }
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    write_summaries(&rows, out)?;

    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("comparison");
    let curve_dir = out.with_file_name(format!("{stem}_curves"));
    fs::create_dir_all(&curve_dir).map_err(|e| BenchError::io(&curve_dir, e))?;
    let mut curves = Vec::with_capacity(rows.len());
    for row in &rows {
        let losses = read_trace_losses(&trace_dir.join(&row.trace_file))?;
        let name = row.trace_file.split(".trace.").next().unwrap_or(&row.trace_file);
        let path = curve_dir.join(format!("{name}.dat"));
        let mut f = create(&path)?;
        let mut text = String::with_capacity(32 * losses.len());
        for (i, loss) in losses.iter().enumerate() {
            text.push_str(&format!("{} {}\n", i + 1, num(*loss)));
        }
        f.write_all(text.as_bytes()).map_err(|e| BenchError::io(&path, e))?;
        curves.push(path);
    }
    Ok(Comparison { table: out.to_path_buf(), curves })
}

/// Gathers every `summary_*.csv` / `summary_*.json` in `dir` and emits the
/// comparison.
pub fn compare_dir(dir: &Path, out: &Path) -> Result<Comparison, BenchError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| BenchError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("summary_") && (name.ends_with(".csv") || name.ends_with(".json"))
        })
        .collect();
    files.sort();
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(read_summaries(f)?);
    }
    emit_comparison(&rows, dir, out)
}
