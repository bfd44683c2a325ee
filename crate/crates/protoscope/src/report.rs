//! Markdown, CSV and JSON renderings of evaluation results.
//!
//! Markdown rounds half away from zero to one decimal. CSV keeps full
//! precision and parses back to the identical value.
//!
//! CSV schemas:
//! - matrices: `source,target,accuracy`
//! - grids: `metric,support,k,accuracy,feasible` (empty accuracy when
//!   infeasible)
//! - confusion matrices: `actual,predicted,count`

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use protoscope_core::evaluation::{ConfusionMatrix, EvalMatrix, GridCell, GridResult};
use protoscope_core::metrics::DistanceMetric;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub const MATRIX_HEADER: [&str; 3] = ["source", "target", "accuracy"];
pub const GRID_HEADER: [&str; 5] = ["metric", "support", "k", "accuracy", "feasible"];
pub const CONFUSION_HEADER: [&str; 3] = ["actual", "predicted", "count"];

/// Report format selected with `--format`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Md,
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Md => "md",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// One decimal, ties rounded away from zero.
pub fn one_decimal(v: f64) -> String {
    let r = (v * 10.0).round() / 10.0;
    // Avoid "-0.0" for tiny negatives.
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:.1}")
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::Malformed(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| AppError::Malformed(e.to_string()))
}

fn csv_rows(text: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(AppError::Schema(format!("expected CSV header {:?}, found {found:?}", header.join(","))));
    }
    Ok(r.records().collect::<std::result::Result<_, _>>()?)
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    rec.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| AppError::Schema(format!("bad {what} value {:?}", rec.get(i).unwrap_or(""))))
}

// ---------------------------------------------------------------- matrices

pub fn matrix_markdown(m: &EvalMatrix) -> String {
    let mut s = String::new();
    let _ = write!(s, "| Source \\ Target |");
    for c in m.col_labels() {
        let _ = write!(s, " {c} |");
    }
    let _ = writeln!(s, " Avg. |");
    let _ = writeln!(s, "|---|{}---|", "---|".repeat(m.cols()));
    let row_means = m.row_means();
    for (r, label) in m.row_labels().iter().enumerate() {
        let _ = write!(s, "| {label} |");
        for c in 0..m.cols() {
            let _ = write!(s, " {} |", one_decimal(m.get(r, c)));
        }
        let _ = writeln!(s, " {} |", one_decimal(row_means[r]));
    }
    let _ = write!(s, "| Avg. |");
    for v in m.col_means() {
        let _ = write!(s, " {} |", one_decimal(v));
    }
    let _ = writeln!(s, " {} |", one_decimal(m.grand_mean()));
    s
}

pub fn matrix_csv(m: &EvalMatrix) -> Result<String> {
    let rows = (0..m.rows()).flat_map(|r| {
        (0..m.cols()).map(move |c| vec![m.row_labels()[r].clone(), m.col_labels()[c].clone(), m.get(r, c).to_string()])
    });
    csv_bytes(&MATRIX_HEADER, rows)
}

/// Parses a matrix CSV; row and column order follow first appearance.
pub fn parse_matrix_csv(text: &str) -> Result<EvalMatrix> {
    let recs = csv_rows(text, &MATRIX_HEADER)?;
    let mut rows: Vec<String> = Vec::new();
    let mut cols: Vec<String> = Vec::new();
    for rec in &recs {
        if !rows.iter().any(|r| r == &rec[0]) {
            rows.push(rec[0].to_string());
        }
        if !cols.iter().any(|c| c == &rec[1]) {
            cols.push(rec[1].to_string());
        }
    }
    let mut cells = vec![None; rows.len() * cols.len()];
    for rec in &recs {
        let r = rows.iter().position(|x| x == &rec[0]).expect("collected");
        let c = cols.iter().position(|x| x == &rec[1]).expect("collected");
        let slot = &mut cells[r * cols.len() + c];
        if slot.is_some() {
            return Err(AppError::Schema(format!("duplicate cell {}/{}", &rec[0], &rec[1])));
        }
        *slot = Some(field::<f64>(rec, 2, "accuracy")?);
    }
    let cells = cells
        .into_iter()
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| AppError::Schema("matrix CSV is missing cells".into()))?;
    Ok(EvalMatrix::new(rows, cols, cells)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<f64>>,
    pub row_means: Vec<f64>,
    pub col_means: Vec<f64>,
    pub grand_mean: f64,
}

impl From<&EvalMatrix> for MatrixJson {
    fn from(m: &EvalMatrix) -> Self {
        Self {
            rows: m.row_labels().to_vec(),
            cols: m.col_labels().to_vec(),
            cells: m.cells().chunks(m.cols()).map(<[f64]>::to_vec).collect(),
            row_means: m.row_means(),
            col_means: m.col_means(),
            grand_mean: m.grand_mean(),
        }
    }
}

pub fn render_matrix(m: &EvalMatrix, format: Format) -> Result<String> {
    match format {
        Format::Md => Ok(matrix_markdown(m)),
        Format::Csv => matrix_csv(m),
        Format::Json => Ok(serde_json::to_string_pretty(&MatrixJson::from(m))? + "\n"),
    }
}

// ------------------------------------------------------------------- grids

pub fn grid_csv(g: &GridResult) -> Result<String> {
    let rows = g.cells().iter().map(|c| {
        vec![
            c.metric.name().to_string(),
            c.support_size.to_string(),
            c.k.to_string(),
            c.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            c.accuracy.is_some().to_string(),
        ]
    });
    csv_bytes(&GRID_HEADER, rows)
}

pub fn parse_grid_csv(text: &str) -> Result<GridResult> {
    let cells = csv_rows(text, &GRID_HEADER)?
        .iter()
        .map(|rec| {
            let metric = DistanceMetric::from_str(&rec[0]).map_err(|e| AppError::Schema(e.to_string()))?;
            let feasible: bool = field(rec, 4, "feasible")?;
            let accuracy = if feasible { Some(field::<f64>(rec, 3, "accuracy")?) } else { None };
            if !feasible && !rec[3].is_empty() {
                return Err(AppError::Schema("infeasible cell carries an accuracy".into()));
            }
            Ok(GridCell {
                metric,
                support_size: field(rec, 1, "support")?,
                k: field(rec, 2, "k")?,
                accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridResult::new(cells))
}

/// One table per metric: support sizes down, k across, `-` for skipped
/// cells, best cell in bold.
pub fn grid_markdown(g: &GridResult) -> String {
    let mut s = String::new();
    let best = g.best().copied();
    let metrics: Vec<DistanceMetric> = {
        let mut seen = Vec::new();
        for c in g.cells() {
            if !seen.contains(&c.metric) {
                seen.push(c.metric);
            }
        }
        seen
    };
    for metric in metrics {
        let cells: Vec<&GridCell> = g.cells().iter().filter(|c| c.metric == metric).collect();
        let ks: Vec<usize> = cells.iter().map(|c| c.k).collect::<BTreeSet<_>>().into_iter().collect();
        let sizes: Vec<usize> = cells.iter().map(|c| c.support_size).collect::<BTreeSet<_>>().into_iter().collect();
        let _ = writeln!(s, "### {metric}\n");
        let _ = write!(s, "| \\|S\\| \\ k |");
        for k in &ks {
            let _ = write!(s, " {k} |");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "|---|{}", "---|".repeat(ks.len()));
        for size in &sizes {
            let _ = write!(s, "| {size} |");
            for &k in &ks {
                let cell = cells.iter().find(|c| c.support_size == *size && c.k == k);
                let text = match cell.and_then(|c| c.accuracy) {
                    Some(a) if best.is_some_and(|b| b.metric == metric && b.support_size == *size && b.k == k) => {
                        format!("**{}**", one_decimal(a))
                    }
                    Some(a) => one_decimal(a),
                    None => "-".to_string(),
                };
                let _ = write!(s, " {text} |");
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s);
    }
    match best {
        Some(b) => {
            let _ = writeln!(
                s,
                "Best: {} |S|={} k={} ({})",
                b.metric,
                b.support_size,
                b.k,
                one_decimal(b.accuracy.unwrap_or(0.0))
            );
        }
        None => {
            let _ = writeln!(s, "Best: none (no feasible cell)");
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCellJson {
    pub metric: String,
    pub support: usize,
    pub k: usize,
    pub accuracy: Option<f64>,
}

impl From<&GridCell> for GridCellJson {
    fn from(c: &GridCell) -> Self {
        Self {
            metric: c.metric.name().to_string(),
            support: c.support_size,
            k: c.k,
            accuracy: c.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridJson {
    pub cells: Vec<GridCellJson>,
    pub best: Option<GridCellJson>,
}

pub fn render_grid(g: &GridResult, format: Format) -> Result<String> {
    match format {
        Format::Md => Ok(grid_markdown(g)),
        Format::Csv => grid_csv(g),
        Format::Json => {
            let json = GridJson {
                cells: g.cells().iter().map(GridCellJson::from).collect(),
                best: g.best().map(GridCellJson::from),
            };
            Ok(serde_json::to_string_pretty(&json)? + "\n")
        }
    }
}

// -------------------------------------------------------- confusion matrices

/// A confusion matrix with display names for its classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedConfusion {
    pub classes: Vec<String>,
    pub matrix: ConfusionMatrix,
}

pub fn confusion_csv(c: &NamedConfusion) -> Result<String> {
    let n = c.matrix.class_count();
    let rows = (0..n).flat_map(|a| {
        (0..n).map(move |p| vec![c.classes[a].clone(), c.classes[p].clone(), c.matrix.get(a, p).to_string()])
    });
    csv_bytes(&CONFUSION_HEADER, rows)
}

pub fn parse_confusion_csv(text: &str) -> Result<NamedConfusion> {
    let recs = csv_rows(text, &CONFUSION_HEADER)?;
    let mut classes: Vec<String> = Vec::new();
    for rec in &recs {
        for name in [&rec[0], &rec[1]] {
            if !classes.iter().any(|c| c == name) {
                classes.push(name.to_string());
            }
        }
    }
    let n = classes.len();
    let mut counts = vec![0u64; n * n];
    for rec in &recs {
        let a = classes.iter().position(|c| c == &rec[0]).expect("collected");
        let p = classes.iter().position(|c| c == &rec[1]).expect("collected");
        counts[a * n + p] += field::<u64>(rec, 2, "count")?;
    }
    Ok(NamedConfusion {
        matrix: ConfusionMatrix::from_counts(n, counts)?,
        classes,
    })
}

pub fn confusion_markdown(c: &NamedConfusion) -> String {
    let n = c.matrix.class_count();
    let mut s = String::new();
    let _ = write!(s, "| Actual \\ Predicted |");
    for name in &c.classes {
        let _ = write!(s, " {name} |");
    }
    let _ = writeln!(s, " Recall |");
    let _ = writeln!(s, "|---|{}---|", "---|".repeat(n));
    let recall = c.matrix.recall();
    for a in 0..n {
        let _ = write!(s, "| {} |", c.classes[a]);
        for p in 0..n {
            let _ = write!(s, " {} |", c.matrix.get(a, p));
        }
        let r = recall[a].map_or("-".to_string(), |r| one_decimal(100.0 * r));
        let _ = writeln!(s, " {r} |");
    }
    let _ = writeln!(s, "\nAccuracy: {} ({} / {})", one_decimal(100.0 * c.matrix.accuracy()), c.matrix.trace(), c.matrix.total());
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionJson {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub recall: Vec<Option<f64>>,
    pub accuracy: f64,
}

pub fn render_confusion(c: &NamedConfusion, format: Format) -> Result<String> {
    match format {
        Format::Md => Ok(confusion_markdown(c)),
        Format::Csv => confusion_csv(c),
        Format::Json => {
            let n = c.matrix.class_count();
            let json = ConfusionJson {
                classes: c.classes.clone(),
                counts: c.matrix.counts().chunks(n.max(1)).map(<[u64]>::to_vec).collect(),
                recall: c.matrix.recall(),
                accuracy: c.matrix.accuracy(),
            };
            Ok(serde_json::to_string_pretty(&json)? + "\n")
        }
    }
}

/// Which artifact a CSV holds, judged by its header line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Matrix,
    Grid,
    Confusion,
}

pub fn sniff_csv(text: &str) -> Option<CsvKind> {
    let header = text.lines().next()?.trim();
    [
        (MATRIX_HEADER.join(","), CsvKind::Matrix),
        (GRID_HEADER.join(","), CsvKind::Grid),
        (CONFUSION_HEADER.join(","), CsvKind::Confusion),
    ]
    .into_iter()
    .find(|(h, _)| h == header)
    .map(|(_, k)| k)
}
