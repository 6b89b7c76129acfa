//! Plain-text matrix dump of a [`QpProblem`] for cross-checking against
//! external solvers.
//!
//! ```text
//! qp <d> <n_eq> <n_in> <bounds: 0|1>
//! P
//! <d rows of d values>
//! q
//! <d values>
//! A_eq
//! ...
//! ```
//!
//! Values are whitespace separated, one matrix row per line, printed in the
//! shortest form that parses back to the same `f64` (`inf` for infinite
//! bounds).

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use super::{Bounds, QpProblem};
use crate::error::{Error, Result};

pub fn write_dump<W: Write>(problem: &QpProblem, mut w: W) -> std::io::Result<()> {
    let d = problem.dim();
    writeln!(
        w,
        "qp {d} {} {} {}",
        problem.a_eq.nrows(),
        problem.a_in.nrows(),
        u8::from(problem.bounds.is_some())
    )?;
    write_matrix(&mut w, "P", &problem.p)?;
    write_row(&mut w, "q", problem.q.iter())?;
    write_matrix(&mut w, "A_eq", &problem.a_eq)?;
    write_row(&mut w, "b_eq", problem.b_eq.iter())?;
    write_matrix(&mut w, "A_in", &problem.a_in)?;
    write_row(&mut w, "b_in", problem.b_in.iter())?;
    if let Some(b) = &problem.bounds {
        write_row(&mut w, "lower", b.lower.iter())?;
        write_row(&mut w, "upper", b.upper.iter())?;
    }
    Ok(())
}

fn write_matrix<W: Write>(w: &mut W, name: &str, m: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(w, "{name}")?;
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

fn write_row<'a, W: Write>(w: &mut W, name: &str, values: impl Iterator<Item = &'a f64>) -> std::io::Result<()> {
    writeln!(w, "{name}")?;
    let line: Vec<String> = values.map(|v| format!("{v}")).collect();
    writeln!(w, "{}", line.join(" "))
}

pub fn read_dump<R: BufRead>(reader: R) -> Result<QpProblem> {
    let mut lines = reader.lines().enumerate();
    let mut next = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(bad(i + 1, format!("{expect}: {e}"))),
            None => Err(bad(0, format!("unexpected end of dump, wanted {expect}"))),
        }
    };

    let (ln, header) = next("header")?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "qp" {
        return Err(bad(ln, "header must be `qp d n_eq n_in bounds`".into()));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(ln, format!("bad count `{s}`")));
    let (d, e, g, has_bounds) = (num(fields[1])?, num(fields[2])?, num(fields[3])?, num(fields[4])? == 1);

    let mut matrix = |name: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
        let (ln, tag) = next(name)?;
        if tag.trim() != name {
            return Err(bad(ln, format!("expected section `{name}`, found `{tag}`")));
        }
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let (ln, line) = next(name)?;
            let vals = parse_values(&line, ln)?;
            if vals.len() != cols {
                return Err(bad(ln, format!("{name} row has {} values, expected {cols}", vals.len())));
            }
            for (j, v) in vals.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    };

    let p = matrix("P", d, d)?;
    let q = matrix("q", 1, d)?;
    let a_eq = matrix("A_eq", e, d)?;
    let b_eq = matrix("b_eq", 1, e)?;
    let a_in = matrix("A_in", g, d)?;
    let b_in = matrix("b_in", 1, g)?;
    let bounds = if has_bounds {
        let lower = matrix("lower", 1, d)?;
        let upper = matrix("upper", 1, d)?;
        Some(Bounds {
            lower: lower.iter().copied().collect(),
            upper: upper.iter().copied().collect(),
        })
    } else {
        None
    };
    Ok(QpProblem {
        p,
        q: DVector::from_iterator(d, q.iter().copied()),
        a_eq,
        b_eq: DVector::from_iterator(e, b_eq.iter().copied()),
        a_in,
        b_in: DVector::from_iterator(g, b_in.iter().copied()),
        bounds,
    })
}

fn parse_values(line: &str, ln: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| bad(ln, format!("bad number `{t}`"))))
        .collect()
}

fn bad(line: usize, message: String) -> Error {
    Error::Parse {
        path: "<qp dump>".into(),
        row: line,
        column: 0,
        message,
    }
}
