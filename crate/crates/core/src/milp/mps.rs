//! Fixed-format MPS export and a matching reader.
//!
//! Columns are named `C0000001`, rows `R0000001`, and the objective row
//! `COST`. A comment block before `ROWS` maps every generated name to its
//! model tag. Binary columns sit between `MARKER` lines and carry a `BV`
//! bound unless their bounds pin them to one value.

use std::fmt::Write as _;
use std::path::Path;

use super::model::MilpModel;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Sense};

fn col_name(j: usize) -> String {
    format!("C{:07}", j + 1)
}

fn row_name(r: usize) -> String {
    format!("R{:07}", r + 1)
}

/// Most precise decimal rendering of `v` that fits a 12-character field.
fn number(v: f64) -> String {
    let plain = format!("{v}");
    if plain.len() <= 12 {
        return plain;
    }
    let fixed = (0..=12).map(|d| format!("{v:.d$}"));
    let sci = (0..=12).map(|d| format!("{v:.d$e}"));
    fixed
        .chain(sci)
        .filter(|s| s.len() <= 12)
        .min_by(|a, b| {
            let ea = (a.parse::<f64>().unwrap_or(f64::INFINITY) - v).abs();
            let eb = (b.parse::<f64>().unwrap_or(f64::INFINITY) - v).abs();
            ea.total_cmp(&eb)
        })
        .unwrap_or_else(|| format!("{v:.0e}"))
}

/// One data line: code in columns 2-3, names in fields of 8 starting at
/// columns 5, 15, 40 and numbers at 25, 50.
fn data_line(out: &mut String, code: &str, name1: &str, name2: &str, value: Option<f64>) {
    let mut line = format!(" {code:<2} {name1:<8}  {name2:<8}");
    if let Some(v) = value {
        let _ = write!(line, "  {:>12}", number(v));
    }
    out.push_str(line.trim_end());
    out.push('\n');
}

pub fn mps_string(model: &MilpModel) -> String {
    let lp = &model.lp;
    let mut out = String::new();
    let _ = writeln!(out, "* {} model, {} columns, {} rows", model.mode, lp.vars(), lp.constraints.len());
    for (j, tag) in model.vars.iter().enumerate() {
        let _ = writeln!(out, "* {} {tag}", col_name(j));
    }
    for (r, tag) in model.rows.iter().enumerate() {
        let _ = writeln!(out, "* {} {tag}", row_name(r));
    }
    write_body(&mut out, lp, &model.binaries, &model.mode.to_string());
    out
}

fn write_body(out: &mut String, lp: &LinearProgram, binaries: &[usize], name: &str) {
    let _ = writeln!(out, "NAME          {}", name.to_uppercase());
    out.push_str("ROWS\n");
    data_line(out, "N", "COST", "", None);
    for (r, c) in lp.constraints.iter().enumerate() {
        let code = match c.sense {
            Sense::Le => "L",
            Sense::Eq => "E",
            Sense::Ge => "G",
        };
        data_line(out, code, &row_name(r), "", None);
    }

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.vars()];
    for (r, c) in lp.constraints.iter().enumerate() {
        for &(j, a) in &c.coeffs {
            if a != 0.0 {
                by_col[j].push((r, a));
            }
        }
    }
    let mut is_bin = vec![false; lp.vars()];
    binaries.iter().for_each(|&j| is_bin[j] = true);

    out.push_str("COLUMNS\n");
    let mut in_marker = false;
    let mut markers = 0;
    for j in 0..lp.vars() {
        if is_bin[j] != in_marker {
            let kind = if is_bin[j] { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    M{markers:07}  'MARKER'                 {kind}");
            markers += 1;
            in_marker = is_bin[j];
        }
        let name = col_name(j);
        if lp.objective[j] != 0.0 {
            data_line(out, "", &name, "COST", Some(lp.objective[j]));
        }
        for &(r, a) in &by_col[j] {
            data_line(out, "", &name, &row_name(r), Some(a));
        }
        if lp.objective[j] == 0.0 && by_col[j].is_empty() {
            // keep the column visible to readers
            data_line(out, "", &name, "COST", Some(0.0));
        }
    }
    if in_marker {
        let _ = writeln!(out, "    M{markers:07}  'MARKER'                 'INTEND'");
    }

    out.push_str("RHS\n");
    for (r, c) in lp.constraints.iter().enumerate() {
        if c.rhs != 0.0 {
            data_line(out, "", "RHS", &row_name(r), Some(c.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for j in 0..lp.vars() {
        let name = col_name(j);
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo == hi {
            data_line(out, "FX", "BND", &name, Some(lo));
        } else if is_bin[j] && lo == 0.0 && hi == 1.0 {
            data_line(out, "BV", "BND", &name, None);
        } else if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            data_line(out, "FR", "BND", &name, None);
        } else {
            if lo == f64::NEG_INFINITY {
                data_line(out, "MI", "BND", &name, None);
            } else if lo != 0.0 {
                data_line(out, "LO", "BND", &name, Some(lo));
            }
            if hi.is_finite() {
                data_line(out, "UP", "BND", &name, Some(hi));
            }
        }
    }
    out.push_str("ENDATA\n");
}

pub fn export_mps(model: &MilpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mps_string(model)).map_err(|e| Error::io(path, e))
}

/// A program read back from MPS text.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsProgram {
    pub lp: LinearProgram,
    pub binaries: Vec<usize>,
    pub columns: Vec<String>,
    pub rows: Vec<String>,
}

/// Reads whitespace-separated MPS (fixed-format files are a special case).
/// Supports the subset this module writes plus `PL` bounds.
pub fn read_mps(text: &str) -> Result<MpsProgram> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Rows,
        Columns,
        Rhs,
        Bounds,
    }
    let err = |line: usize, msg: String| Error::Mps { line, msg };
    let mut section = Section::None;
    let mut objective_row: Option<String> = None;
    let mut row_index = std::collections::HashMap::new();
    let mut rows: Vec<String> = Vec::new();
    let mut senses = Vec::new();
    let mut col_index = std::collections::HashMap::new();
    let mut columns: Vec<String> = Vec::new();
    let mut lp = LinearProgram::new(0);
    let mut coeffs: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut integer = false;
    let mut binaries = Vec::new();
    let mut int_cols = Vec::new();

    let parse = |line: usize, s: &str| s.parse::<f64>().map_err(|_| err(line, format!("bad number {s:?}")));

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.starts_with('*') || raw.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') {
            section = match tokens[0] {
                "NAME" => Section::None,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => break,
                other => return Err(err(line, format!("unknown section {other}"))),
            };
            continue;
        }
        match section {
            Section::None => return Err(err(line, "data before ROWS".into())),
            Section::Rows => {
                let [code, name] = tokens[..] else {
                    return Err(err(line, "expected sense and row name".into()));
                };
                let sense = match code {
                    "N" => {
                        if objective_row.is_none() {
                            objective_row = Some(name.to_string());
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "E" => Sense::Eq,
                    "G" => Sense::Ge,
                    other => return Err(err(line, format!("unknown row type {other}"))),
                };
                row_index.insert(name.to_string(), rows.len());
                rows.push(name.to_string());
                senses.push(sense);
                coeffs.push(Vec::new());
                rhs.push(0.0);
            }
            Section::Columns => {
                if tokens.get(1) == Some(&"'MARKER'") {
                    integer = tokens.get(2) == Some(&"'INTORG'");
                    continue;
                }
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err(line, "expected column, row, value pairs".into()));
                }
                let col = *col_index.entry(tokens[0].to_string()).or_insert_with(|| {
                    columns.push(tokens[0].to_string());
                    int_cols.push(integer);
                    lp.add_var(0.0, 0.0, f64::INFINITY)
                });
                for pair in tokens[1..].chunks(2) {
                    let v = parse(line, pair[1])?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        lp.objective[col] += v;
                    } else {
                        let r = *row_index
                            .get(pair[0])
                            .ok_or_else(|| err(line, format!("unknown row {}", pair[0])))?;
                        coeffs[r].push((col, v));
                    }
                }
            }
            Section::Rhs => {
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err(line, "expected set, row, value".into()));
                }
                for pair in tokens[1..].chunks(2) {
                    let v = parse(line, pair[1])?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        continue;
                    }
                    let r = *row_index
                        .get(pair[0])
                        .ok_or_else(|| err(line, format!("unknown row {}", pair[0])))?;
                    rhs[r] = v;
                }
            }
            Section::Bounds => {
                if tokens.len() < 3 {
                    return Err(err(line, "expected bound type, set and column".into()));
                }
                let j = *col_index
                    .get(tokens[2])
                    .ok_or_else(|| err(line, format!("unknown column {}", tokens[2])))?;
                let value = || {
                    tokens
                        .get(3)
                        .ok_or_else(|| err(line, "missing bound value".into()))
                        .and_then(|s| parse(line, s))
                };
                match tokens[0] {
                    "UP" => lp.upper[j] = value()?,
                    "LO" => lp.lower[j] = value()?,
                    "FX" => {
                        let v = value()?;
                        lp.lower[j] = v;
                        lp.upper[j] = v;
                    }
                    "FR" => {
                        lp.lower[j] = f64::NEG_INFINITY;
                        lp.upper[j] = f64::INFINITY;
                    }
                    "MI" => lp.lower[j] = f64::NEG_INFINITY,
                    "PL" => lp.upper[j] = f64::INFINITY,
                    "BV" => {
                        lp.lower[j] = 0.0;
                        lp.upper[j] = 1.0;
                        int_cols[j] = true;
                    }
                    other => return Err(err(line, format!("unsupported bound type {other}"))),
                }
            }
        }
    }
    for (j, &is_int) in int_cols.iter().enumerate() {
        if is_int {
            binaries.push(j);
        }
    }
    for ((c, sense), b) in coeffs.into_iter().zip(senses).zip(rhs) {
        lp.add_constraint(c, sense, b);
    }
    Ok(MpsProgram {
        lp,
        binaries,
        columns,
        rows,
    })
}

pub fn import_mps(path: impl AsRef<Path>) -> Result<MpsProgram> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_mps(&text)
}
