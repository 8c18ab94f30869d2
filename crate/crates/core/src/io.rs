//! Reading expression matrices and pool sizes, writing datasets and reports.
//!
//! Matrices are plain text with fields separated by tabs or spaces. Commas
//! are rejected outright because decimal commas and comma separators are
//! indistinguishable.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::Prediction;
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::likelihood::Dataset;
use crate::pool_model::{Composition, PoolSizeVector};

/// Version of the structured fit report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Orientation {
    /// One row per sample, one column per gene.
    #[default]
    GenesInColumns,
    GenesInRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReadOptions {
    pub orientation: Orientation,
    pub header: bool,
    pub rownames: bool,
}

/// A parsed matrix in samples-by-genes layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionTable {
    pub values: Vec<Vec<f64>>,
    pub gene_names: Option<Vec<String>>,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

pub fn parse_table(text: &str, options: &ReadOptions) -> Result<ExpressionTable> {
    if let Some((i, l)) = text.lines().enumerate().find(|(_, l)| l.contains(',')) {
        return Err(parse_err(
            i + 1,
            l.find(',').unwrap_or(0) + 1,
            "fields must be separated by tabs or white space, not commas",
        ));
    }
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let header: Option<(usize, Vec<String>)> = if options.header {
        let (no, l) = lines.next().ok_or_else(|| parse_err(1, 1, "file is empty"))?;
        Some((no, l.split_whitespace().map(str::to_string).collect()))
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut row_names: Vec<String> = Vec::new();
    let mut width = None;
    for (no, l) in lines {
        let mut fields = l.split_whitespace();
        if options.rownames {
            row_names.push(fields.next().unwrap_or_default().to_string());
        }
        let offset = usize::from(options.rownames);
        let row = fields
            .enumerate()
            .map(|(j, f)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(no, j + 1 + offset, format!("'{f}' is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(no, 1, format!("expected {w} values, found {}", row.len())))
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() || width == Some(0) {
        return Err(parse_err(1, 1, "file contains no data"));
    }
    let width = width.unwrap_or(0);

    let column_names = match header {
        Some((no, mut names)) => {
            // a header may or may not name the row-name column
            if options.rownames && names.len() == width + 1 {
                names.remove(0);
            }
            if names.len() != width {
                return Err(parse_err(
                    no,
                    1,
                    format!("header has {} names for {width} columns", names.len()),
                ));
            }
            Some(names)
        }
        None => None,
    };

    Ok(match options.orientation {
        Orientation::GenesInColumns => ExpressionTable {
            values: rows,
            gene_names: column_names,
        },
        Orientation::GenesInRows => {
            let samples = width;
            let values = (0..samples).map(|s| rows.iter().map(|r| r[s]).collect()).collect();
            ExpressionTable {
                values,
                gene_names: options.rownames.then_some(row_names),
            }
        }
    })
}

pub fn read_table(path: &Path, options: &ReadOptions) -> Result<ExpressionTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_table(&text, options)
}

/// Pool sizes as given on a command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PoolSizeArg {
    Homogeneous(usize),
    List(Vec<usize>),
}

impl PoolSizeArg {
    /// Parses a single size, a comma-separated list, or the name of a file
    /// with one size per line.
    pub fn parse(arg: &str) -> Result<Self> {
        let arg = arg.trim();
        if let Ok(n) = arg.parse::<usize>() {
            return Ok(Self::Homogeneous(n));
        }
        if arg.contains(',') {
            return arg
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("invalid pool size '{}'", s.trim())))
                })
                .collect::<Result<_>>()
                .map(Self::List);
        }
        let path = Path::new(arg);
        if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{arg}: {e}")))?;
            return text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    l.trim()
                        .parse::<usize>()
                        .map_err(|_| parse_err(i + 1, 1, format!("invalid pool size '{}'", l.trim())))
                })
                .collect::<Result<_>>()
                .map(Self::List);
        }
        Err(Error::Config(format!(
            "pool sizes '{arg}' are neither a number, a comma-separated list nor a file"
        )))
    }

    pub fn resolve(&self, samples: usize) -> Result<PoolSizeVector> {
        match self {
            Self::Homogeneous(n) => PoolSizeVector::homogeneous(*n, samples),
            Self::List(v) if v.len() == samples => PoolSizeVector::new(v.clone()),
            Self::List(v) => Err(Error::Data(format!(
                "{} pool sizes given for {samples} samples",
                v.len()
            ))),
        }
    }
}

pub fn read_dataset(path: &Path, options: &ReadOptions, pool_sizes: &PoolSizeArg) -> Result<Dataset> {
    let table = read_table(path, options)?;
    let sizes = pool_sizes.resolve(table.values.len())?;
    Dataset::new(table.values, sizes, table.gene_names)
}

/// Writes samples in rows and genes in columns under a header of gene
/// names. Values use the shortest representation that reads back exactly.
pub fn write_dataset<W: Write>(mut w: W, data: &Dataset) -> Result<()> {
    writeln!(w, "{}", data.gene_names().join("\t"))?;
    for row in data.values() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", fields.join("\t"))?;
    }
    Ok(())
}

pub fn write_compositions<W: Write>(mut w: W, compositions: &[Composition], pool_sizes: &PoolSizeVector) -> Result<()> {
    let t = compositions.first().map(|c| c.0.len()).unwrap_or(0);
    let pops: Vec<String> = (1..=t).map(|h| format!("pop{h}")).collect();
    writeln!(w, "sample\tpool_size\t{}", pops.join("\t"))?;
    for (i, (c, n)) in compositions.iter().zip(pool_sizes.as_slice()).enumerate() {
        let counts: Vec<String> = c.0.iter().map(ToString::to_string).collect();
        writeln!(w, "{}\t{n}\t{}", i + 1, counts.join("\t"))?;
    }
    Ok(())
}

pub fn write_density_grid<W: Write>(mut w: W, grid: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "y\tpdf")?;
    for (y, f) in grid {
        writeln!(w, "{y}\t{f}")?;
    }
    Ok(())
}

fn row(names: &[String], values: impl Iterator<Item = String>) -> (String, String) {
    let cells: Vec<String> = values.collect();
    let widths: Vec<usize> = names.iter().zip(&cells).map(|(n, c)| n.len().max(c.len())).collect();
    let head: Vec<String> = names.iter().zip(&widths).map(|(n, w)| format!("{n:>w$}")).collect();
    let body: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
    (head.join(" "), body.join(" "))
}

/// Human-readable fit summary; numbers use four decimals.
pub fn format_fit_report(fit: &FitResult) -> String {
    let mut out = String::new();
    let names = &fit.parameter_names;
    let estimates = fit.estimates();

    let (head, body) = row(names, estimates.iter().map(|v| format!("{v:.4}")));
    let _ = writeln!(out, "Maximum likelihood estimate (MLE):\n{head}\n{body}\n");
    let _ = writeln!(
        out,
        "Value of negative log-likelihood function at MLE:\n{:.4}\n",
        fit.neg_loglik
    );
    let violations = fit.violations();
    let _ = writeln!(
        out,
        "Violation of constraints:\n{}\n",
        if violations.is_empty() {
            "none".to_string()
        } else {
            violations.join("\n")
        }
    );
    let _ = writeln!(out, "BIC:\n{:.4}\n", fit.bic);

    let _ = writeln!(out, "Approx. 95% confidence intervals for MLE:");
    match (&fit.ci, &fit.diagnostics.ci_error) {
        (Some(ci), _) => {
            let w = names.iter().map(String::len).max().unwrap_or(0);
            let _ = writeln!(out, "{:w$} {:>10} {:>10}", "", "lower", "upper");
            for c in ci {
                let _ = writeln!(out, "{:w$} {:>10.4} {:>10.4}", c.name, c.lower, c.upper);
            }
        }
        (None, err) => {
            let _ = writeln!(out, "not available: {}", err.as_deref().unwrap_or("unknown reason"));
        }
    }
    let _ = writeln!(out);

    let _ = writeln!(out, "Top parameter combinations:");
    let mut cols = names.clone();
    cols.push("target".into());
    let tag_width = format!("[{}]", fit.top_combinations.len()).len();
    for (i, t) in fit.top_combinations.iter().enumerate() {
        let cells = t
            .values
            .iter()
            .map(|v| format!("{v:.4}"))
            .chain([format!("{:.4}", t.objective)]);
        let (head, body) = row(&cols, cells);
        if i == 0 {
            let _ = writeln!(out, "{:tag_width$} {head}", "");
        }
        let _ = writeln!(out, "{:>tag_width$} {body}", format!("[{}]", i + 1));
    }
    out
}

#[derive(Serialize)]
struct FitReport<'a> {
    schema_version: u32,
    #[serde(flatten)]
    fit: &'a FitResult,
}

pub fn fit_report_json(fit: &FitResult) -> Result<String> {
    serde_json::to_string_pretty(&FitReport {
        schema_version: REPORT_SCHEMA_VERSION,
        fit,
    })
    .map_err(|e| Error::Io(e.to_string()))
}

/// Per-sample composition estimates followed by hit counts when the truth
/// is known.
pub fn format_prediction_report(
    data: &Dataset,
    gene: usize,
    prediction: &Prediction,
    truth: Option<&[usize]>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Estimated number of cells from population 1 (gene {})",
        data.gene_names()[gene]
    );
    let _ = write!(out, "sample\tpool_size\ty\tmean\tMAP\tinterval");
    if truth.is_some() {
        let _ = write!(out, "\ttrue");
    }
    let _ = writeln!(out);
    for (i, post) in prediction.posteriors.iter().enumerate() {
        let y = data.values()[i][gene];
        let n = data.pool_sizes().as_slice()[i];
        match post {
            Ok(p) => {
                let _ = write!(
                    out,
                    "{}\t{n}\t{y:.4}\t{:.2}\t{}\t({},{})",
                    i + 1,
                    p.mean_count_pop1,
                    p.map_estimate.0[0],
                    p.interval.0,
                    p.interval.1
                );
            }
            Err(e) => {
                let _ = write!(out, "{}\t{n}\t{y:.4}\tNA\tNA\tNA ({e})", i + 1);
            }
        }
        if let Some(t) = truth {
            let _ = write!(out, "\t{}", t[i]);
        }
        let _ = writeln!(out);
    }
    if let Some(h) = prediction.hits {
        let _ = writeln!(out, "\n# of hits: {}/{}", h.map, h.total);
        let _ = writeln!(out, "# of hits (rounded mean): {}/{}", h.rounded_mean, h.total);
        let _ = writeln!(out, "# of hits (interval): {}/{}", h.interval, h.total);
    }
    out
}
