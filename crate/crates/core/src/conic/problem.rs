use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Real symmetric positive semidefinite matrix of the given order.
    Psd(usize),
    Nonneg(usize),
    Free(usize),
}

impl BlockKind {
    pub fn dim(&self) -> usize {
        match *self {
            BlockKind::Psd(n) | BlockKind::Nonneg(n) | BlockKind::Free(n) => n,
        }
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self, BlockKind::Psd(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockId(pub usize);

/// One scalar decision variable: entry `(row, col)` of a matrix block, or
/// entry `row` of a vector block (`col == 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    pub block: usize,
    pub row: usize,
    pub col: usize,
}

impl BlockId {
    pub fn at(self, i: usize) -> Var {
        Var {
            block: self.0,
            row: i,
            col: 0,
        }
    }

    pub fn entry(self, i: usize, j: usize) -> Var {
        Var {
            block: self.0,
            row: i,
            col: j,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `minimize  sum c_v x_v + sum q_ab x_a x_b`
/// `subject to  linear rows over block entries, every block in its cone.`
///
/// A coefficient on a matrix entry `(i, j)` multiplies `X[i][j]`; since the
/// block is symmetric, `(i, j)` and `(j, i)` name the same quantity and their
/// coefficients add. Quadratic terms are restricted to vector blocks and must
/// form a positive semidefinite form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    pub(crate) blocks: Vec<BlockKind>,
    pub(crate) objective: Vec<(Var, f64)>,
    pub(crate) quadratic: Vec<(Var, Var, f64)>,
    pub(crate) constraints: Vec<Constraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, kind: BlockKind) -> BlockId {
        self.blocks.push(kind);
        BlockId(self.blocks.len() - 1)
    }

    pub fn add_objective(&mut self, var: Var, coef: f64) {
        self.objective.push((var, coef));
    }

    /// Adds `coef * a * b` to the objective.
    pub fn add_quadratic(&mut self, a: Var, b: Var, coef: f64) {
        self.quadratic.push((a, b, coef));
    }

    pub fn add_constraint(&mut self, terms: Vec<(Var, f64)>, sense: Sense, rhs: f64) -> usize {
        self.constraints.push(Constraint { terms, sense, rhs });
        self.constraints.len() - 1
    }

    pub fn blocks(&self) -> &[BlockKind] {
        &self.blocks
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective_terms(&self) -> &[(Var, f64)] {
        &self.objective
    }

    pub fn quadratic_terms(&self) -> &[(Var, Var, f64)] {
        &self.quadratic
    }

    fn check_var(&self, v: &Var) -> Result<()> {
        let Some(kind) = self.blocks.get(v.block) else {
            return Err(Error::Dimension(format!("unknown block {}", v.block)));
        };
        let ok = match *kind {
            BlockKind::Psd(n) => v.row < n && v.col < n,
            BlockKind::Nonneg(n) | BlockKind::Free(n) => v.row < n && v.col == 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "entry ({}, {}) outside block {} {:?}",
                v.row, v.col, v.block, kind
            )))
        }
    }

    pub fn validate(&self) -> Result<()> {
        for v in self.objective.iter().map(|t| &t.0) {
            self.check_var(v)?;
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(Error::InvalidArgument("non-finite right-hand side".into()));
            }
            for (v, coef) in &c.terms {
                self.check_var(v)?;
                if !coef.is_finite() {
                    return Err(Error::InvalidArgument("non-finite coefficient".into()));
                }
            }
        }
        for (a, b, _) in &self.quadratic {
            self.check_var(a)?;
            self.check_var(b)?;
            if self.blocks[a.block].is_matrix() || self.blocks[b.block].is_matrix() {
                return Err(Error::InvalidArgument(
                    "quadratic terms are only supported on vector blocks".into(),
                ));
            }
        }
        if !self.quadratic.is_empty() {
            let q = self.quadratic_matrix();
            let min_eig = q.symmetric_eigenvalues().min();
            if min_eig < -1e-10 * q.amax().max(1.0) {
                return Err(Error::InvalidArgument("quadratic term is not PSD".into()));
            }
        }
        Ok(())
    }

    /// Offsets of each vector block inside the stacked vector of all vector
    /// blocks (`None` for matrix blocks), plus the stacked length.
    pub(crate) fn vector_layout(&self) -> (Vec<Option<usize>>, usize) {
        let mut offset = 0;
        let layout = self
            .blocks
            .iter()
            .map(|b| match b {
                BlockKind::Psd(_) => None,
                BlockKind::Nonneg(n) | BlockKind::Free(n) => {
                    let o = offset;
                    offset += n;
                    Some(o)
                }
            })
            .collect();
        (layout, offset)
    }

    /// Symmetric `Q` with `1/2 x^T Q x` equal to the quadratic objective, over
    /// the stacked vector blocks.
    pub(crate) fn quadratic_matrix(&self) -> DMatrix<f64> {
        let (layout, nv) = self.vector_layout();
        let mut q = DMatrix::zeros(nv, nv);
        for (a, b, coef) in &self.quadratic {
            let ia = layout[a.block].unwrap() + a.row;
            let ib = layout[b.block].unwrap() + b.row;
            if ia == ib {
                q[(ia, ia)] += 2.0 * coef;
            } else {
                q[(ia, ib)] += coef;
                q[(ib, ia)] += coef;
            }
        }
        q
    }
}

/// Value of one block at a candidate point.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockValue {
    Matrix(DMatrix<f64>),
    Vector(DVector<f64>),
}

impl BlockValue {
    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            BlockValue::Matrix(m) => Some(m),
            BlockValue::Vector(_) => None,
        }
    }

    pub fn vector(&self) -> Option<&DVector<f64>> {
        match self {
            BlockValue::Vector(v) => Some(v),
            BlockValue::Matrix(_) => None,
        }
    }

    pub fn get(&self, v: &Var) -> f64 {
        match self {
            BlockValue::Matrix(m) => m[(v.row, v.col)],
            BlockValue::Vector(x) => x[v.row],
        }
    }

    pub fn zeros(kind: &BlockKind) -> Self {
        match *kind {
            BlockKind::Psd(n) => BlockValue::Matrix(DMatrix::zeros(n, n)),
            BlockKind::Nonneg(n) | BlockKind::Free(n) => BlockValue::Vector(DVector::zeros(n)),
        }
    }
}

/// A primal point, optionally with one multiplier per constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub blocks: Vec<BlockValue>,
    pub duals: Option<Vec<f64>>,
}

impl ConicProblem {
    pub fn row_value(&self, c: &Constraint, x: &[BlockValue]) -> f64 {
        c.terms.iter().map(|(v, coef)| coef * x[v.block].get(v)).sum()
    }

    pub fn objective_value(&self, x: &[BlockValue]) -> f64 {
        let lin: f64 = self.objective.iter().map(|(v, c)| c * x[v.block].get(v)).sum();
        let quad: f64 = self
            .quadratic
            .iter()
            .map(|(a, b, c)| c * x[a.block].get(a) * x[b.block].get(b))
            .sum();
        lin + quad
    }
}
