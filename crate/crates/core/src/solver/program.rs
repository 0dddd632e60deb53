//! Standard-form cone programs: `min cᵀx  s.t.  A x + s = b,  s ∈ K`.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::ops::Range;

/// One block of the product cone `K`, in row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// `s = 0` (equality rows).
    Zero(usize),
    /// `s ≥ 0`.
    Nonnegative(usize),
    /// `s₀ ≥ ‖s₁..‖₂`.
    SecondOrder(usize),
    /// `2 s₀ s₁ ≥ ‖s₂..‖₂²`, `s₀, s₁ ≥ 0`.
    RotatedSecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(k) | Cone::Nonnegative(k) | Cone::SecondOrder(k) | Cone::RotatedSecondOrder(k) => k,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Cone::Zero(_) => "zero",
            Cone::Nonnegative(_) => "nonneg",
            Cone::SecondOrder(_) => "soc",
            Cone::RotatedSecondOrder(_) => "rsoc",
        }
    }

    fn from_tag(tag: &str, dim: usize) -> Option<Self> {
        Some(match tag {
            "zero" => Cone::Zero(dim),
            "nonneg" => Cone::Nonnegative(dim),
            "soc" => Cone::SecondOrder(dim),
            "rsoc" => Cone::RotatedSecondOrder(dim),
            _ => return None,
        })
    }

    /// Distance-like infeasibility of `s` w.r.t. this cone (0 when inside).
    pub fn violation(&self, s: &[f64]) -> f64 {
        match self {
            Cone::Zero(_) => s.iter().fold(0.0, |a, v| a.max(v.abs())),
            Cone::Nonnegative(_) => s.iter().fold(0.0, |a, &v| a.max(-v)),
            Cone::SecondOrder(_) => {
                let r = s[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                (r - s[0]).max(0.0)
            }
            Cone::RotatedSecondOrder(_) => {
                let (t, u) = rotated_to_soc(s[0], s[1]);
                let r = (u * u + s[2..].iter().map(|v| v * v).sum::<f64>()).sqrt();
                (r - t).max(0.0)
            }
        }
    }
}

/// `(u, v) ↦ ((u + v)/√2, (u − v)/√2)`; an involution mapping the rotated
/// cone onto the standard second-order cone.
pub fn rotated_to_soc(u: f64, v: f64) -> (f64, f64) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    (h * (u + v), h * (u - v))
}

/// Sparse matrix in triplet form; duplicates are summed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            ..Default::default()
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if val != 0.0 {
            self.rows.push(row);
            self.cols.push(col);
            self.vals.push(val);
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.vals)
            .map(|((&r, &c), &v)| (r, c, v))
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for (r, c, v) in self.iter() {
            y[r] += v * x[c];
        }
        y
    }

    /// `y = Aᵀ x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for (r, c, v) in self.iter() {
            y[c] += v * x[r];
        }
        y
    }

    /// Appends rows of `other` below this matrix.
    pub fn append_rows(&mut self, other: &SparseMatrix) {
        assert_eq!(self.ncols, other.ncols);
        let offset = self.nrows;
        for (r, c, v) in other.iter() {
            self.rows.push(r + offset);
            self.cols.push(c);
            self.vals.push(v);
        }
        self.nrows += other.nrows;
    }
}

/// Named slices of the decision vector.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarMap {
    entries: Vec<(String, Range<usize>)>,
}

impl VarMap {
    pub fn insert(&mut self, name: impl Into<String>, range: Range<usize>) {
        self.entries.push((name.into(), range));
    }

    pub fn get(&self, name: &str) -> Option<Range<usize>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, r)| r.clone())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Range<usize>)> {
        self.entries.iter().map(|(n, r)| (n.as_str(), r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub c: Vec<f64>,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
    pub var_map: VarMap,
}

impl ConicProgram {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if self.a.ncols != self.c.len() || self.a.nrows != self.b.len() {
            return bad(format!(
                "program shape: A is {}x{}, c has {}, b has {}",
                self.a.nrows,
                self.a.ncols,
                self.c.len(),
                self.b.len()
            ));
        }
        let total: usize = self.cones.iter().map(Cone::dim).sum();
        if total != self.b.len() {
            return bad(format!("cone sizes sum to {total}, program has {} rows", self.b.len()));
        }
        for cone in &self.cones {
            let min = match cone {
                Cone::SecondOrder(_) => 1,
                Cone::RotatedSecondOrder(_) => 2,
                _ => 0,
            };
            if cone.dim() < min.max(1) {
                return bad(format!("degenerate cone {cone:?}"));
            }
        }
        let mut ranges: Vec<_> = self.var_map.iter().map(|(_, r)| r.clone()).collect();
        ranges.sort_by_key(|r| r.start);
        for w in ranges.windows(2) {
            if w[0].end > w[1].start {
                return bad("overlapping variable slices".into());
            }
        }
        if ranges.last().is_some_and(|r| r.end > self.c.len()) {
            return bad("variable slice beyond decision vector".into());
        }
        if self.c.iter().chain(&self.b).chain(&self.a.vals).any(|v| !v.is_finite()) {
            return bad("non-finite program data".into());
        }
        Ok(())
    }

    /// Appends equality rows `E x = f`.
    pub fn add_equalities(&mut self, e: &SparseMatrix, f: &[f64]) {
        assert_eq!(e.nrows, f.len());
        self.a.append_rows(e);
        self.b.extend_from_slice(f);
        self.cones.push(Cone::Zero(f.len()));
    }

    /// Plain-text dump: header, cone list, variable map, then triplets.
    ///
    /// ```text
    /// conic-program v1
    /// dims <rows> <cols> <nnz>
    /// cone <zero|nonneg|soc|rsoc> <dim>        (one line per block)
    /// var <name> <start> <end>                 (one line per slice)
    /// c <col> <value>                          (nonzeros only)
    /// b <row> <value>                          (nonzeros only)
    /// A <row> <col> <value>
    /// ```
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "conic-program v1");
        let _ = writeln!(out, "dims {} {} {}", self.num_rows(), self.num_vars(), self.a.nnz());
        for cone in &self.cones {
            let _ = writeln!(out, "cone {} {}", cone.tag(), cone.dim());
        }
        for (name, r) in self.var_map.iter() {
            let _ = writeln!(out, "var {name} {} {}", r.start, r.end);
        }
        for (i, v) in self.c.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            let _ = writeln!(out, "c {i} {v:e}");
        }
        for (i, v) in self.b.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            let _ = writeln!(out, "b {i} {v:e}");
        }
        for (r, c, v) in self.a.iter() {
            let _ = writeln!(out, "A {r} {c} {v:e}");
        }
        w.write_all(out.as_bytes())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let bad = |line: &str| Error::InvalidModel(format!("malformed program line: {line:?}"));
        let mut prog: Option<ConicProgram> = None;
        for line in r.lines() {
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                [] | ["conic-program", _] => {}
                ["dims", rows, cols, _] => {
                    let rows: usize = rows.parse().map_err(|_| bad(&line))?;
                    let cols: usize = cols.parse().map_err(|_| bad(&line))?;
                    prog = Some(ConicProgram {
                        c: vec![0.0; cols],
                        a: SparseMatrix::new(rows, cols),
                        b: vec![0.0; rows],
                        cones: Vec::new(),
                        var_map: VarMap::default(),
                    });
                }
                _ => {
                    let p = prog.as_mut().ok_or_else(|| bad(&line))?;
                    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&line));
                    let idx = |s: &str| s.parse::<usize>().map_err(|_| bad(&line));
                    match f.as_slice() {
                        ["cone", tag, dim] => {
                            p.cones.push(Cone::from_tag(tag, idx(dim)?).ok_or_else(|| bad(&line))?)
                        }
                        ["var", name, s, e] => p.var_map.insert(*name, idx(s)?..idx(e)?),
                        ["c", i, v] => *p.c.get_mut(idx(i)?).ok_or_else(|| bad(&line))? = num(v)?,
                        ["b", i, v] => *p.b.get_mut(idx(i)?).ok_or_else(|| bad(&line))? = num(v)?,
                        ["A", r, c, v] => {
                            let (r, c) = (idx(r)?, idx(c)?);
                            if r >= p.a.nrows || c >= p.a.ncols {
                                return Err(bad(&line));
                            }
                            p.a.push(r, c, num(v)?)
                        }
                        _ => return Err(bad(&line)),
                    }
                }
            }
        }
        let prog = prog.ok_or_else(|| Error::InvalidModel("missing dims line".into()))?;
        prog.validate()?;
        Ok(prog)
    }
}
