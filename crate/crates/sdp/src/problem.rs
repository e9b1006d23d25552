//! Block-structured SDP description and its JSON form.
//!
//! The JSON schema is the serde rendering of [`SdpProblem`]:
//!
//! ```json
//! {
//!   "blocks": [{"kind": "psd", "size": 2}, {"kind": "nonneg", "size": 1}],
//!   "objective": [{"block": 0, "coeff": {"format": "sparse", "entries": [[0, 0, 1.0], [1, 1, 1.0]]}}],
//!   "constraints": [
//!     {"terms": [{"block": 0, "coeff": {"format": "sparse", "entries": [[0, 0, 1.0]]}}],
//!      "relation": "=", "rhs": 1.0}
//!   ]
//! }
//! ```
//!
//! Sparse entries `[i, j, v]` describe a symmetric matrix: an off-diagonal
//! entry sets both `(i, j)` and `(j, i)` to `v`; repeated entries add. Dense
//! coefficients store all `size * size` values row-major. Nonnegative blocks
//! only accept diagonal entries, which act as the coefficient vector.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::SdpError;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Psd,
    Nonneg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

/// Symmetric coefficient matrix restricted to one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum Coeff {
    Sparse { entries: Vec<(usize, usize, f64)> },
    Dense { size: usize, values: Vec<f64> },
}

impl Coeff {
    pub fn sparse(entries: Vec<(usize, usize, f64)>) -> Self {
        Coeff::Sparse { entries }
    }

    pub fn entry(i: usize, j: usize, v: f64) -> Self {
        Coeff::Sparse {
            entries: vec![(i, j, v)],
        }
    }

    pub fn identity(n: usize) -> Self {
        Coeff::Sparse {
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    pub fn dense(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "dense coefficient must be square");
        let n = m.nrows();
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(m[(i, j)]);
            }
        }
        Coeff::Dense { size: n, values }
    }

    /// Materializes the coefficient as a full `n x n` symmetric matrix.
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        match self {
            Coeff::Sparse { entries } => {
                let mut m = DMatrix::zeros(n, n);
                for &(i, j, v) in entries {
                    m[(i, j)] += v;
                    if i != j {
                        m[(j, i)] += v;
                    }
                }
                m
            }
            Coeff::Dense { size, values } => DMatrix::from_row_slice(*size, *size, values),
        }
    }

    fn validate(&self, block: &Block, what: &str) -> Result<(), SdpError> {
        let n = block.size;
        match self {
            Coeff::Sparse { entries } => {
                for &(i, j, v) in entries {
                    if i >= n || j >= n {
                        return Err(SdpError::InvalidProblem(format!(
                            "{what}: entry ({i}, {j}) outside block of size {n}"
                        )));
                    }
                    if !v.is_finite() {
                        return Err(SdpError::InvalidProblem(format!(
                            "{what}: non-finite entry at ({i}, {j})"
                        )));
                    }
                    if block.kind == BlockKind::Nonneg && i != j {
                        return Err(SdpError::InvalidProblem(format!(
                            "{what}: off-diagonal entry on a nonnegative block"
                        )));
                    }
                }
            }
            Coeff::Dense { size, values } => {
                if *size != n || values.len() != n * n {
                    return Err(SdpError::InvalidProblem(format!(
                        "{what}: dense coefficient has size {size} ({} values), block has size {n}",
                        values.len()
                    )));
                }
                let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
                for i in 0..n {
                    for j in 0..n {
                        let a = values[i * n + j];
                        let b = values[j * n + i];
                        if !a.is_finite() {
                            return Err(SdpError::InvalidProblem(format!(
                                "{what}: non-finite entry at ({i}, {j})"
                            )));
                        }
                        if (a - b).abs() > SYMMETRY_TOL * scale {
                            return Err(SdpError::InvalidProblem(format!(
                                "{what}: coefficient not symmetric at ({i}, {j})"
                            )));
                        }
                        if block.kind == BlockKind::Nonneg && i != j && a != 0.0 {
                            return Err(SdpError::InvalidProblem(format!(
                                "{what}: off-diagonal entry on a nonnegative block"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTerm {
    pub block: usize,
    pub coeff: Coeff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub terms: Vec<BlockTerm>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(relation: Relation, rhs: f64) -> Self {
        Self {
            terms: Vec::new(),
            relation,
            rhs,
        }
    }

    pub fn with(mut self, block: usize, coeff: Coeff) -> Self {
        self.terms.push(BlockTerm { block, coeff });
        self
    }

    pub fn push(&mut self, block: usize, coeff: Coeff) {
        self.terms.push(BlockTerm { block, coeff });
    }
}

/// `minimize <C, X>` subject to the listed scalar constraints and the cone
/// membership of every block.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub blocks: Vec<Block>,
    pub objective: Vec<BlockTerm>,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns its index.
    pub fn add_block(&mut self, kind: BlockKind, size: usize) -> usize {
        self.blocks.push(Block { kind, size });
        self.blocks.len() - 1
    }

    pub fn add_objective(&mut self, block: usize, coeff: Coeff) {
        self.objective.push(BlockTerm { block, coeff });
    }

    pub fn add_constraint(&mut self, c: Constraint) -> usize {
        self.constraints.push(c);
        self.constraints.len() - 1
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.blocks.is_empty() {
            return Err(SdpError::InvalidProblem("no blocks declared".into()));
        }
        for (b, block) in self.blocks.iter().enumerate() {
            if block.size == 0 {
                return Err(SdpError::InvalidProblem(format!("block {b} has size 0")));
            }
        }
        let check_terms = |terms: &[BlockTerm], what: &str| -> Result<(), SdpError> {
            for t in terms {
                let block = self
                    .blocks
                    .get(t.block)
                    .ok_or_else(|| SdpError::InvalidProblem(format!("{what}: unknown block {}", t.block)))?;
                t.coeff.validate(block, what)?;
            }
            Ok(())
        };
        check_terms(&self.objective, "objective")?;
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(SdpError::InvalidProblem(format!(
                    "constraint {i}: non-finite right-hand side"
                )));
            }
            check_terms(&c.terms, &format!("constraint {i}"))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, SdpError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, SdpError> {
        let p: SdpProblem = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }
}
