//! Plain-text dump of a [`ConicProblem`] for cross-checking with external
//! solvers. Whitespace-separated, one record per line, `#` starts a comment:
//!
//! ```text
//! conic-dump 1
//! blocks <count>
//! <psd|nonneg|free> <dim>                 (one line per block)
//! objective <count>
//! <block> <row> <col> <value>             (linear term on X[row][col])
//! quadratic <count>
//! <block> <row> <block> <row> <value>     (value * x_a * x_b)
//! constraints <count>
//! <eq|le|ge> <rhs> <count>                (header of each row)
//! <block> <row> <col> <value>             (its terms)
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so reading
//! a dump back reproduces the problem bit for bit.

use std::fmt::Write as _;
use std::io::{Read, Write};

use super::problem::{BlockKind, ConicProblem, Constraint, Sense, Var};
use crate::error::{Error, Result};

pub fn write_dump<W: Write>(problem: &ConicProblem, mut out: W) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "conic-dump 1");
    let _ = writeln!(s, "blocks {}", problem.blocks.len());
    for b in &problem.blocks {
        let (name, dim) = match b {
            BlockKind::Psd(n) => ("psd", n),
            BlockKind::Nonneg(n) => ("nonneg", n),
            BlockKind::Free(n) => ("free", n),
        };
        let _ = writeln!(s, "{name} {dim}");
    }
    let _ = writeln!(s, "objective {}", problem.objective.len());
    for (v, c) in &problem.objective {
        let _ = writeln!(s, "{} {} {} {}", v.block, v.row, v.col, c);
    }
    let _ = writeln!(s, "quadratic {}", problem.quadratic.len());
    for (a, b, c) in &problem.quadratic {
        let _ = writeln!(s, "{} {} {} {} {}", a.block, a.row, b.block, b.row, c);
    }
    let _ = writeln!(s, "constraints {}", problem.constraints.len());
    for c in &problem.constraints {
        let sense = match c.sense {
            Sense::Eq => "eq",
            Sense::Le => "le",
            Sense::Ge => "ge",
        };
        let _ = writeln!(s, "{sense} {} {}", c.rhs, c.terms.len());
        for (v, coef) in &c.terms {
            let _ = writeln!(s, "{} {} {} {}", v.block, v.row, v.col, coef);
        }
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_fields(&mut self) -> Result<(usize, Vec<&'a str>)> {
        for (no, line) in self.inner.by_ref() {
            let body = line.split('#').next().unwrap_or("");
            let fields: Vec<&str> = body.split_whitespace().collect();
            if !fields.is_empty() {
                return Ok((no + 1, fields));
            }
        }
        Err(Error::Config("conic dump: unexpected end of input".into()))
    }
}

fn parse<T: std::str::FromStr>(line: usize, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Config(format!("conic dump line {line}: cannot parse `{field}`")))
}

fn expect_header(lines: &mut Lines, key: &str) -> Result<usize> {
    let (no, f) = lines.next_fields()?;
    if f.len() != 2 || f[0] != key {
        return Err(Error::Config(format!("conic dump line {no}: expected `{key} <count>`")));
    }
    parse(no, f[1])
}

fn parse_var(no: usize, f: &[&str]) -> Result<Var> {
    Ok(Var {
        block: parse(no, f[0])?,
        row: parse(no, f[1])?,
        col: parse(no, f[2])?,
    })
}

pub fn read_dump<R: Read>(mut input: R) -> Result<ConicProblem> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (no, f) = lines.next_fields()?;
    if f != ["conic-dump", "1"] {
        return Err(Error::Config(format!("conic dump line {no}: bad magic")));
    }
    let mut p = ConicProblem::new();
    for _ in 0..expect_header(&mut lines, "blocks")? {
        let (no, f) = lines.next_fields()?;
        if f.len() != 2 {
            return Err(Error::Config(format!("conic dump line {no}: bad block")));
        }
        let dim = parse(no, f[1])?;
        let kind = match f[0] {
            "psd" => BlockKind::Psd(dim),
            "nonneg" => BlockKind::Nonneg(dim),
            "free" => BlockKind::Free(dim),
            other => return Err(Error::Config(format!("conic dump line {no}: unknown block `{other}`"))),
        };
        p.add_block(kind);
    }
    for _ in 0..expect_header(&mut lines, "objective")? {
        let (no, f) = lines.next_fields()?;
        if f.len() != 4 {
            return Err(Error::Config(format!("conic dump line {no}: bad objective term")));
        }
        p.add_objective(parse_var(no, &f)?, parse(no, f[3])?);
    }
    for _ in 0..expect_header(&mut lines, "quadratic")? {
        let (no, f) = lines.next_fields()?;
        if f.len() != 5 {
            return Err(Error::Config(format!("conic dump line {no}: bad quadratic term")));
        }
        let a = Var { block: parse(no, f[0])?, row: parse(no, f[1])?, col: 0 };
        let b = Var { block: parse(no, f[2])?, row: parse(no, f[3])?, col: 0 };
        p.add_quadratic(a, b, parse(no, f[4])?);
    }
    for _ in 0..expect_header(&mut lines, "constraints")? {
        let (no, f) = lines.next_fields()?;
        if f.len() != 3 {
            return Err(Error::Config(format!("conic dump line {no}: bad constraint header")));
        }
        let sense = match f[0] {
            "eq" => Sense::Eq,
            "le" => Sense::Le,
            "ge" => Sense::Ge,
            other => return Err(Error::Config(format!("conic dump line {no}: unknown sense `{other}`"))),
        };
        let rhs = parse(no, f[1])?;
        let count: usize = parse(no, f[2])?;
        let mut terms = Vec::with_capacity(count);
        for _ in 0..count {
            let (no, f) = lines.next_fields()?;
            if f.len() != 4 {
                return Err(Error::Config(format!("conic dump line {no}: bad constraint term")));
            }
            terms.push((parse_var(no, &f)?, parse(no, f[3])?));
        }
        p.constraints.push(Constraint { terms, sense, rhs });
    }
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips() {
        let mut p = ConicProblem::new();
        let x = p.add_block(BlockKind::Psd(2));
        let r = p.add_block(BlockKind::Nonneg(2));
        let f = p.add_block(BlockKind::Free(1));
        p.add_objective(r.at(0), 1.0);
        p.add_objective(x.entry(0, 1), 0.1 + 0.2);
        p.add_quadratic(r.at(1), f.at(0), 0.5);
        p.add_quadratic(r.at(1), r.at(1), 1.0);
        p.add_quadratic(f.at(0), f.at(0), 1.0);
        p.add_constraint(vec![(x.entry(0, 0), 1.0), (r.at(0), -1e-300)], Sense::Ge, 2.5);
        p.add_constraint(vec![(f.at(0), 1.0)], Sense::Eq, -3.0);
        p.add_constraint(vec![], Sense::Le, 1.0);

        let mut buf = Vec::new();
        write_dump(&p, &mut buf).unwrap();
        let back = read_dump(buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "conic-dump 1\nblocks 1\nnonneg 1\nobjective 1\n0 0 0 abc\n";
        let err = read_dump(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 5"), "{err}");
    }
}
