use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scheme::NodeScheme;

/// Relative tolerance for the symmetry check on symmetric-flagged matrices.
pub const SYMMETRY_RTOL: f64 = 1e-12;

/// A real M x M matrix partitioned into p x p blocks of sizes m_i x m_j.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    scheme: NodeScheme,
    data: DMatrix<f64>,
    symmetric: bool,
}

impl BlockMatrix {
    pub fn new(scheme: NodeScheme, data: DMatrix<f64>) -> Result<Self> {
        Self::build(scheme, data, false)
    }

    /// Like `new`, but additionally requires `data` to equal its transpose
    /// within `SYMMETRY_RTOL` relative to the largest entry. Violations are
    /// errors, not silent symmetrization.
    pub fn new_symmetric(scheme: NodeScheme, data: DMatrix<f64>) -> Result<Self> {
        Self::build(scheme, data, true)
    }

    fn build(scheme: NodeScheme, data: DMatrix<f64>, symmetric: bool) -> Result<Self> {
        let m = scheme.total_dim();
        if data.nrows() != m || data.ncols() != m {
            return Err(Error::InvalidArgument(format!(
                "matrix is {}x{}, scheme requires {m}x{m}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("matrix has non-finite entries".into()));
        }
        if symmetric {
            let scale = data.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            for i in 0..m {
                for j in (i + 1)..m {
                    if (data[(i, j)] - data[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                        return Err(Error::Data(format!(
                            "matrix flagged symmetric but entries ({i},{j}) and ({j},{i}) differ by {}",
                            (data[(i, j)] - data[(j, i)]).abs()
                        )));
                    }
                }
            }
        }
        Ok(BlockMatrix { scheme, data, symmetric })
    }

    pub fn scheme(&self) -> &NodeScheme {
        &self.scheme
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// The (i, j)-th sub-block, an m_i x m_j view.
    pub fn block(&self, i: usize, j: usize) -> DMatrixView<'_, f64> {
        let ri = self.scheme.block_range(i);
        let rj = self.scheme.block_range(j);
        self.data.view((ri.start, rj.start), (ri.len(), rj.len()))
    }

    /// Frobenius norm of the (i, j)-th block.
    pub fn block_norm(&self, i: usize, j: usize) -> f64 {
        self.block(i, j).norm()
    }

    /// p x p matrix of blockwise Frobenius norms.
    pub fn block_frobenius_norms(&self) -> DMatrix<f64> {
        let p = self.scheme.p();
        let mut out = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                out[(i, j)] = self.block_norm(i, j);
            }
        }
        out
    }
}

/// p x p matrix of blockwise Frobenius norms of `m`.
pub fn block_frobenius_norms(m: &BlockMatrix) -> DMatrix<f64> {
    m.block_frobenius_norms()
}

/// Graph with an edge (i, j) wherever the off-diagonal block norm exceeds
/// `tol`. The input must be symmetric-flagged.
pub fn edges_from_blocks(m: &BlockMatrix, tol: f64) -> Result<Graph> {
    if tol < 0.0 {
        return Err(Error::InvalidArgument(format!("negative tolerance {tol}")));
    }
    if !m.is_symmetric() {
        return Err(Error::InvalidArgument(
            "edges_from_blocks requires a symmetric matrix".into(),
        ));
    }
    let p = m.scheme().p();
    let mut g = Graph::new(p);
    for i in 0..p {
        for j in (i + 1)..p {
            if m.block_norm(i, j) > tol {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}
