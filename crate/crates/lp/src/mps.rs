//! MPS interchange: a writer and reader for the classic sectioned format, so
//! models can be cross-checked against third-party solvers.
//!
//! The writer emits free-format-compatible MPS with generated 8-character
//! names (`C0000001`, `R0000001`, objective `COST`): the original identifiers
//! in a planning model are far longer than fixed-field MPS allows. A names
//! table mapping generated to original identifiers can be emitted alongside.
//! Values are printed with 12 significant digits in a 20-character field;
//! output is byte-stable for a given problem.
//!
//! The reader accepts what the writer produces plus the common variations
//! (multiple entries per data line, PL/MI/FX/FR bounds, comments). RANGES
//! sections are rejected: ranged rows have no representation here.

use crate::{Error, LinearProgram, Sense};

const OBJ_NAME: &str = "COST";

fn col_name(j: usize) -> String {
    format!("C{:07}", j + 1)
}

fn row_name(i: usize) -> String {
    format!("R{:07}", i + 1)
}

fn fmt_val(v: f64) -> String {
    format!("{:>20}", format!("{:.11e}", v))
}

/// Renders the problem as MPS text with generated names.
pub fn write_mps(lp: &LinearProgram) -> String {
    let n = lp.num_cols();
    let m = lp.num_rows();
    let mut out = String::new();
    out.push_str(&format!("NAME          {}\n", sanitize(&lp.name)));
    out.push_str("ROWS\n");
    out.push_str(&format!(" N  {}\n", OBJ_NAME));
    for i in 0..m {
        let s = match lp.row_sense[i] {
            Sense::Le => 'L',
            Sense::Ge => 'G',
            Sense::Eq => 'E',
        };
        out.push_str(&format!(" {}  {}\n", s, row_name(i)));
    }

    // Column-grouped matrix entries, rows ascending within each column.
    let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(r, c, v) in &lp.triplets {
        per_col[c].push((r, v));
    }
    for entries in per_col.iter_mut() {
        entries.sort_unstable_by_key(|&(r, _)| r);
        // merge duplicates
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for &(r, v) in entries.iter() {
            if let Some(last) = merged.last_mut() {
                if last.0 == r {
                    last.1 += v;
                    continue;
                }
            }
            merged.push((r, v));
        }
        *entries = merged;
    }

    out.push_str("COLUMNS\n");
    for j in 0..n {
        let cn = col_name(j);
        // The objective entry also declares the column, so it is always
        // written, even when the coefficient is zero.
        out.push_str(&format!("    {:<10}{:<10}{}\n", cn, OBJ_NAME, fmt_val(lp.objective[j])));
        for &(r, v) in &per_col[j] {
            if v != 0.0 {
                out.push_str(&format!("    {:<10}{:<10}{}\n", cn, row_name(r), fmt_val(v)));
            }
        }
    }

    out.push_str("RHS\n");
    if lp.objective_offset != 0.0 {
        // Convention: the objective row's RHS holds minus the constant term.
        out.push_str(&format!(
            "    {:<10}{:<10}{}\n",
            "RHS",
            OBJ_NAME,
            fmt_val(-lp.objective_offset)
        ));
    }
    for i in 0..m {
        if lp.rhs[i] != 0.0 {
            out.push_str(&format!(
                "    {:<10}{:<10}{}\n",
                "RHS",
                row_name(i),
                fmt_val(lp.rhs[i])
            ));
        }
    }

    out.push_str("BOUNDS\n");
    for j in 0..n {
        let (lo, hi) = (lp.col_lower[j], lp.col_upper[j]);
        let cn = col_name(j);
        if lo == 0.0 && hi == f64::INFINITY {
            continue;
        }
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            out.push_str(&format!(" FR {:<10}{}\n", "BND", cn));
            continue;
        }
        if lo == hi {
            out.push_str(&format!(" FX {:<10}{:<10}{}\n", "BND", cn, fmt_val(lo)));
            continue;
        }
        if lo == f64::NEG_INFINITY {
            out.push_str(&format!(" MI {:<10}{}\n", "BND", cn));
        } else if lo != 0.0 {
            out.push_str(&format!(" LO {:<10}{:<10}{}\n", "BND", cn, fmt_val(lo)));
        }
        if hi != f64::INFINITY {
            out.push_str(&format!(" UP {:<10}{:<10}{}\n", "BND", cn, fmt_val(hi)));
        }
    }
    out.push_str("ENDATA\n");
    out
}

/// CSV table mapping generated MPS names back to the original identifiers.
pub fn names_table_csv(lp: &LinearProgram) -> String {
    let mut out = String::from("kind,index,mps_name,name\n");
    for j in 0..lp.num_cols() {
        out.push_str(&format!(
            "column,{},{},{}\n",
            j,
            col_name(j),
            csv_escape(&lp.col_names[j])
        ));
    }
    for i in 0..lp.num_rows() {
        out.push_str(&format!(
            "row,{},{},{}\n",
            i,
            row_name(i),
            csv_escape(&lp.row_names[i])
        ));
    }
    out
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn sanitize(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect();
    if cleaned.is_empty() {
        "UNNAMED".to_string()
    } else {
        cleaned
    }
}

#[derive(PartialEq, Clone, Copy)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Bounds,
    Done,
}

/// Parses MPS text into a problem. Names are taken verbatim from the file.
pub fn read_mps(text: &str) -> Result<LinearProgram, Error> {
    use std::collections::HashMap;
    let mut lp = LinearProgram::new("");
    let mut section = Section::None;
    let mut obj_row: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    // Bounds are applied to explicit state first, then folded into columns.
    let mut explicit_lower: HashMap<usize, f64> = HashMap::new();
    let mut explicit_upper: HashMap<usize, f64> = HashMap::new();

    let parse_num = |tok: &str, line_no: usize| -> Result<f64, Error> {
        tok.parse::<f64>()
            .map_err(|_| Error::Parse(format!("line {}: bad number '{}'", line_no, tok)))
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.starts_with('*') {
            continue; // comment
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        // Section headers start in column one of the raw line.
        let is_header = !raw.starts_with(' ') && !raw.starts_with('\t');
        if is_header {
            match toks[0] {
                "NAME" => {
                    lp.name = toks.get(1).unwrap_or(&"").to_string();
                    continue;
                }
                "ROWS" => {
                    section = Section::Rows;
                    continue;
                }
                "COLUMNS" => {
                    section = Section::Columns;
                    continue;
                }
                "RHS" => {
                    section = Section::Rhs;
                    continue;
                }
                "RANGES" => {
                    return Err(Error::Parse(format!(
                        "line {}: RANGES sections are not supported",
                        line_no
                    )));
                }
                "BOUNDS" => {
                    section = Section::Bounds;
                    continue;
                }
                "ENDATA" => {
                    section = Section::Done;
                    break;
                }
                other => {
                    return Err(Error::Parse(format!(
                        "line {}: unknown section '{}'",
                        line_no, other
                    )));
                }
            }
        }
        match section {
            Section::None => {
                return Err(Error::Parse(format!(
                    "line {}: data before any section header",
                    line_no
                )));
            }
            Section::Done => break,
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(Error::Parse(format!(
                        "line {}: ROWS entries have two fields",
                        line_no
                    )));
                }
                let name = toks[1].to_string();
                match toks[0] {
                    "N" => {
                        if obj_row.is_some() {
                            return Err(Error::Parse(format!(
                                "line {}: second objective row '{}'",
                                line_no, name
                            )));
                        }
                        obj_row = Some(name);
                    }
                    s => {
                        let sense = match s {
                            "L" => Sense::Le,
                            "G" => Sense::Ge,
                            "E" => Sense::Eq,
                            _ => {
                                return Err(Error::Parse(format!(
                                    "line {}: unknown row sense '{}'",
                                    line_no, s
                                )))
                            }
                        };
                        if row_index.contains_key(&name) {
                            return Err(Error::Parse(format!(
                                "line {}: duplicate row '{}'",
                                line_no, name
                            )));
                        }
                        let i = lp.add_row(&name, sense, 0.0, &[]);
                        row_index.insert(name, i);
                    }
                }
            }
            Section::Columns => {
                if toks.len() < 3 || toks.len() % 2 == 0 {
                    return Err(Error::Parse(format!(
                        "line {}: COLUMNS entries are name then row/value pairs",
                        line_no
                    )));
                }
                let cname = toks[0];
                let j = match col_index.get(cname) {
                    Some(&j) => j,
                    None => {
                        let j = lp.add_col(cname, 0.0, f64::INFINITY, 0.0);
                        col_index.insert(cname.to_string(), j);
                        j
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let rname = pair[0];
                    let v = parse_num(pair[1], line_no)?;
                    if Some(rname) == obj_row.as_deref() {
                        lp.objective[j] += v;
                    } else if let Some(&i) = row_index.get(rname) {
                        lp.triplets.push((i, j, v));
                    } else {
                        return Err(Error::Parse(format!(
                            "line {}: unknown row '{}'",
                            line_no, rname
                        )));
                    }
                }
            }
            Section::Rhs => {
                if toks.len() < 3 || toks.len() % 2 == 0 {
                    return Err(Error::Parse(format!(
                        "line {}: RHS entries are a set name then row/value pairs",
                        line_no
                    )));
                }
                for pair in toks[1..].chunks(2) {
                    let rname = pair[0];
                    let v = parse_num(pair[1], line_no)?;
                    if Some(rname) == obj_row.as_deref() {
                        lp.objective_offset = -v;
                    } else if let Some(&i) = row_index.get(rname) {
                        lp.rhs[i] = v;
                    } else {
                        return Err(Error::Parse(format!(
                            "line {}: unknown row '{}'",
                            line_no, rname
                        )));
                    }
                }
            }
            Section::Bounds => {
                let ty = toks[0];
                let with_value = matches!(ty, "UP" | "LO" | "FX");
                let expect = if with_value { 4 } else { 3 };
                if toks.len() != expect {
                    return Err(Error::Parse(format!(
                        "line {}: {} bound takes {} fields",
                        line_no, ty, expect
                    )));
                }
                let cname = toks[2];
                let &j = col_index.get(cname).ok_or_else(|| {
                    Error::Parse(format!("line {}: unknown column '{}'", line_no, cname))
                })?;
                match ty {
                    "UP" => {
                        let v = parse_num(toks[3], line_no)?;
                        explicit_upper.insert(j, v);
                    }
                    "LO" => {
                        let v = parse_num(toks[3], line_no)?;
                        explicit_lower.insert(j, v);
                    }
                    "FX" => {
                        let v = parse_num(toks[3], line_no)?;
                        explicit_lower.insert(j, v);
                        explicit_upper.insert(j, v);
                    }
                    "FR" => {
                        explicit_lower.insert(j, f64::NEG_INFINITY);
                        explicit_upper.insert(j, f64::INFINITY);
                    }
                    "MI" => {
                        explicit_lower.insert(j, f64::NEG_INFINITY);
                    }
                    "PL" => {
                        explicit_upper.insert(j, f64::INFINITY);
                    }
                    other => {
                        return Err(Error::Parse(format!(
                            "line {}: unsupported bound type '{}'",
                            line_no, other
                        )));
                    }
                }
            }
        }
    }
    if section != Section::Done {
        return Err(Error::Parse("missing ENDATA".to_string()));
    }
    if obj_row.is_none() {
        return Err(Error::Parse("no objective (N) row declared".to_string()));
    }
    for (j, v) in explicit_lower {
        lp.col_lower[j] = v;
    }
    for (j, v) in explicit_upper {
        lp.col_upper[j] = v;
    }
    lp.canonicalize();
    lp.validate()?;
    Ok(lp)
}
