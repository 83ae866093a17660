//! Exact population operators computed by enumeration over a joint pmf:
//! vertex/orthonormal representations of the additive variance and precision
//! operators, Hilbert-Schmidt block norms, linear-conditional-mean checks,
//! and the irrepresentable-condition diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::block::BlockMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::pmf::JointPMF;
use crate::scheme::NodeScheme;

/// Tolerance for declaring a population block zero (floating point).
pub const POP_ZERO_TOL: f64 = 1e-8;

/// Cap on the total block dimension M for the dense irrepresentable
/// diagnostics (the system is M^2 x M^2).
pub const DEFAULT_IRREP_CAP: usize = 64;

/// Vertex representation of the additive variance operator: block (i, j) is
/// the covariance of the centered indicator vectors of nodes i and j.
pub fn vertex_davo(pmf: &JointPMF) -> Result<BlockMatrix> {
    let scheme = pmf.scheme().clone();
    let p = scheme.p();
    // Every level must carry positive probability, otherwise some affine
    // combination of indicators is constant and the block is singular.
    let marginals: Vec<Vec<f64>> = (0..p).map(|i| pmf.marginal(i)).collect();
    for (i, marg) in marginals.iter().enumerate() {
        if let Some(l) = marg.iter().position(|&q| q <= 0.0) {
            return Err(Error::DegenerateNode {
                node: i,
                detail: format!("level {l} has zero probability (constant indicator)"),
            });
        }
    }
    let m_total = scheme.total_dim();
    let mut data = DMatrix::zeros(m_total, m_total);
    for i in 0..p {
        let ri = scheme.block_range(i);
        for a in 1..=scheme.m(i) {
            for b in 1..=scheme.m(i) {
                let joint = if a == b { marginals[i][a] } else { 0.0 };
                data[(ri.start + a - 1, ri.start + b - 1)] =
                    joint - marginals[i][a] * marginals[i][b];
            }
        }
        for j in (i + 1)..p {
            let rj = scheme.block_range(j);
            let tab = pmf.pairwise_marginal(i, j)?;
            for a in 1..=scheme.m(i) {
                for b in 1..=scheme.m(j) {
                    let c = tab[(a, b)] - marginals[i][a] * marginals[j][b];
                    data[(ri.start + a - 1, rj.start + b - 1)] = c;
                    data[(rj.start + b - 1, ri.start + a - 1)] = c;
                }
            }
        }
    }
    let min_eig = min_eigenvalue(&data);
    if min_eig <= 0.0 {
        return Err(Error::Singular(format!(
            "variance operator is not positive definite (min eigenvalue {min_eig:.3e})"
        )));
    }
    BlockMatrix::new_symmetric(scheme, data)
}

/// Vertex representation of the additive precision operator: the exact
/// inverse of `vertex_davo`.
pub fn vertex_dapo(pmf: &JointPMF) -> Result<BlockMatrix> {
    let davo = vertex_davo(pmf)?;
    invert_block_matrix(davo)
}

fn invert_block_matrix(m: BlockMatrix) -> Result<BlockMatrix> {
    let scheme = m.scheme().clone();
    let inv = m
        .into_data()
        .try_inverse()
        .ok_or_else(|| Error::Singular("variance operator is singular".into()))?;
    // exact symmetrization of the numerically symmetric inverse
    let sym = (&inv + inv.transpose()) * 0.5;
    BlockMatrix::new_symmetric(scheme, sym)
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Orthonormal basis of the centered L^2 space of node `i`, as an
/// m_eff x (m_i + 1) matrix of function values on the support. Rows have
/// mean zero and identity Gram matrix under the node's marginal. Levels with
/// zero probability shrink the effective dimension.
pub fn orthonormal_basis(pmf: &JointPMF, i: usize) -> Result<DMatrix<f64>> {
    pmf.scheme().check_node(i)?;
    let marg = pmf.marginal(i);
    let attained: Vec<usize> = (0..marg.len()).filter(|&l| marg[l] > 0.0).collect();
    if attained.len() < 2 {
        return Err(Error::DegenerateNode {
            node: i,
            detail: "fewer than two attained levels".into(),
        });
    }
    let m_eff = attained.len() - 1;
    let num_levels = marg.len();
    // centered indicators of the attained levels, skipping the smallest
    let mut f = DMatrix::zeros(m_eff, num_levels);
    for (a, &l) in attained[1..].iter().enumerate() {
        for x in 0..num_levels {
            f[(a, x)] = if x == l { 1.0 } else { 0.0 } - marg[l];
        }
    }
    // Gram matrix under the marginal, whitened by its inverse square root
    let mut gram = DMatrix::<f64>::zeros(m_eff, m_eff);
    for a in 0..m_eff {
        for b in 0..m_eff {
            gram[(a, b)] = (0..num_levels).map(|x| marg[x] * f[(a, x)] * f[(b, x)]).sum();
        }
    }
    let eig = gram.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&w| w <= 0.0) {
        return Err(Error::DegenerateNode {
            node: i,
            detail: "indicator covariance is singular".into(),
        });
    }
    let inv_sqrt = DVector::from_iterator(m_eff, eig.eigenvalues.iter().map(|&w| w.sqrt().recip()));
    let whitener =
        &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
    Ok(whitener * f)
}

fn orthonormal_bases(pmf: &JointPMF) -> Result<(NodeScheme, Vec<DMatrix<f64>>)> {
    let p = pmf.p();
    let bases: Vec<DMatrix<f64>> =
        (0..p).map(|i| orthonormal_basis(pmf, i)).collect::<Result<_>>()?;
    let scheme = NodeScheme::new(bases.iter().map(|u| u.nrows()).collect())?;
    Ok((scheme, bases))
}

/// Orthonormal representation of the additive variance operator. Diagonal
/// blocks are identity matrices; the scheme reflects effective dimensions.
pub fn orthonormal_davo(pmf: &JointPMF) -> Result<BlockMatrix> {
    let (scheme, bases) = orthonormal_bases(pmf)?;
    let m_total = scheme.total_dim();
    let mut data = DMatrix::zeros(m_total, m_total);
    for i in 0..pmf.p() {
        let ri = scheme.block_range(i);
        let marg = pmf.marginal(i);
        let weighted = &bases[i] * DMatrix::from_diagonal(&DVector::from_vec(marg));
        let diag = &weighted * bases[i].transpose();
        data.view_mut((ri.start, ri.start), (ri.len(), ri.len())).copy_from(&diag);
        for j in (i + 1)..pmf.p() {
            let rj = scheme.block_range(j);
            let tab = pmf.pairwise_marginal(i, j)?;
            let block = &bases[i] * tab * bases[j].transpose();
            data.view_mut((ri.start, rj.start), (ri.len(), rj.len())).copy_from(&block);
            data.view_mut((rj.start, ri.start), (rj.len(), ri.len()))
                .copy_from(&block.transpose());
        }
    }
    let min_eig = min_eigenvalue(&data);
    if min_eig <= 0.0 {
        return Err(Error::Singular(format!(
            "variance operator is not positive definite (min eigenvalue {min_eig:.3e})"
        )));
    }
    BlockMatrix::new_symmetric(scheme, data)
}

/// Orthonormal representation of the additive precision operator.
pub fn orthonormal_dapo(pmf: &JointPMF) -> Result<BlockMatrix> {
    invert_block_matrix(orthonormal_davo(pmf)?)
}

/// p x p matrix of Hilbert-Schmidt norms of the precision operator blocks
/// (blockwise Frobenius norms of the orthonormal representation, which are
/// independent of the basis choice).
pub fn hs_norms(pmf: &JointPMF) -> Result<DMatrix<f64>> {
    Ok(orthonormal_dapo(pmf)?.block_frobenius_norms())
}

/// Outcome of a linear-conditional-mean check.
#[derive(Debug, Clone)]
pub struct LcmCheck {
    pub holds: bool,
    pub max_residual: f64,
    /// For all-binary node sets: coefficients of the best linear predictor
    /// of the centered coordinate of node i on the centered coordinates of
    /// the conditioning nodes, in ascending node order.
    pub coefficients: Option<Vec<f64>>,
}

/// Tests whether E(u(X^i) | X^D) lies in the additive function space of X^D
/// for every basis function u of node i, by exact enumeration and weighted
/// least squares under the marginal of X^D.
pub fn check_lcm(pmf: &JointPMF, i: usize, d: &[usize], tol: f64) -> Result<LcmCheck> {
    let scheme = pmf.scheme();
    scheme.check_node(i)?;
    let mut d_sorted = d.to_vec();
    d_sorted.sort_unstable();
    d_sorted.dedup();
    if d_sorted.len() != d.len() {
        return Err(Error::InvalidArgument("conditioning set has duplicates".into()));
    }
    if d_sorted.contains(&i) {
        return Err(Error::InvalidArgument(format!("node {i} is in the conditioning set")));
    }
    for &k in &d_sorted {
        scheme.check_node(k)?;
    }
    if d_sorted.is_empty() {
        // the conditional mean is the plain mean, which is zero by centering
        return Ok(LcmCheck { holds: true, max_residual: 0.0, coefficients: Some(vec![]) });
    }

    let basis = orthonormal_basis(pmf, i)?;
    let n_basis = basis.nrows();

    // enumerate the joint law of (X^i, X^D) keyed by the configuration of X^D
    let mut config_strides = vec![1usize; d_sorted.len()];
    for k in (0..d_sorted.len() - 1).rev() {
        config_strides[k] = config_strides[k + 1] * scheme.num_levels(d_sorted[k + 1]);
    }
    let n_configs = config_strides[0] * scheme.num_levels(d_sorted[0]);
    let mut weight = vec![0.0f64; n_configs];
    let mut moments = vec![vec![0.0f64; n_configs]; n_basis];
    let mut coord_moment = vec![0.0f64; n_configs];
    pmf.for_each_point(|point, pr| {
        if pr == 0.0 {
            return;
        }
        let key: usize = d_sorted
            .iter()
            .zip(&config_strides)
            .map(|(&k, &s)| point[k] as usize * s)
            .sum();
        weight[key] += pr;
        for (a, row) in moments.iter_mut().enumerate() {
            row[key] += pr * basis[(a, point[i] as usize)];
        }
        coord_moment[key] += pr * point[i] as f64;
    });
    let support: Vec<usize> = (0..n_configs).filter(|&k| weight[k] > 0.0).collect();
    if support.is_empty() {
        return Err(Error::Data("conditioning set has empty support".into()));
    }

    // design: centered indicators of every conditioning node, sqrt-weighted
    let marginals: Vec<Vec<f64>> = d_sorted.iter().map(|&k| pmf.marginal(k)).collect();
    let n_cols: usize = d_sorted.iter().map(|&k| scheme.m(k)).sum();
    let mut design = DMatrix::zeros(support.len(), n_cols);
    for (row, &key) in support.iter().enumerate() {
        let w_sqrt = weight[key].sqrt();
        let mut col = 0;
        for (t, &k) in d_sorted.iter().enumerate() {
            let level = (key / config_strides[t]) % scheme.num_levels(k);
            for l in 1..=scheme.m(k) {
                let ind = if level == l { 1.0 } else { 0.0 };
                design[(row, col)] = w_sqrt * (ind - marginals[t][l]);
                col += 1;
            }
        }
    }
    let svd = design.clone().svd(true, true);

    let mut max_residual = 0.0f64;
    for row in &moments {
        let target = DVector::from_iterator(
            support.len(),
            support.iter().map(|&key| (row[key] / weight[key]) * weight[key].sqrt()),
        );
        let beta = svd
            .solve(&target, 1e-13)
            .map_err(|e| Error::Singular(format!("least-squares solve failed: {e}")))?;
        let fitted = &design * &beta;
        for (r, &key) in support.iter().enumerate() {
            let resid = (target[r] - fitted[r]).abs() / weight[key].sqrt();
            max_residual = max_residual.max(resid);
        }
    }

    // coefficient report for the all-binary case, in raw-coordinate units
    let all_binary =
        scheme.m(i) == 1 && d_sorted.iter().all(|&k| scheme.m(k) == 1);
    let coefficients = if all_binary {
        let mean_i: f64 = {
            let m = pmf.marginal(i);
            m[1]
        };
        let target = DVector::from_iterator(
            support.len(),
            support
                .iter()
                .map(|&key| (coord_moment[key] / weight[key] - mean_i) * weight[key].sqrt()),
        );
        let beta = svd
            .solve(&target, 1e-13)
            .map_err(|e| Error::Singular(format!("least-squares solve failed: {e}")))?;
        Some(beta.iter().copied().collect())
    } else {
        None
    };

    Ok(LcmCheck { holds: max_residual <= tol, max_residual, coefficients })
}

/// Diagnostics for the irrepresentable condition of the group-penalized
/// D-trace estimator, computed from the exact population operators.
#[derive(Debug, Clone, PartialEq)]
pub struct IrrepReport {
    /// 1 minus the maximal blockwise row aggregate of the off-support
    /// projection; the condition holds when this is positive.
    pub gamma: f64,
    /// Max absolute row sum of the inverse of the on-support Hessian block.
    pub kappa_gamma: f64,
    /// Max absolute row sum of the vertex variance operator.
    pub kappa_sigma: f64,
    /// Max node degree of the population graph.
    pub d: usize,
    pub holds: bool,
}

pub fn irrep_diagnostics(pmf: &JointPMF) -> Result<IrrepReport> {
    irrep_diagnostics_with_cap(pmf, DEFAULT_IRREP_CAP)
}

pub fn irrep_diagnostics_with_cap(pmf: &JointPMF, cap: usize) -> Result<IrrepReport> {
    let sigma_bm = vertex_davo(pmf)?;
    let scheme = sigma_bm.scheme().clone();
    let m_total = scheme.total_dim();
    if m_total > cap {
        return Err(Error::CapExceeded(format!(
            "total dimension {m_total} exceeds the diagnostics cap {cap}"
        )));
    }
    let theta = invert_block_matrix(sigma_bm.clone())?;
    let edges = crate::block::edges_from_blocks(&theta, POP_ZERO_TOL)?;
    let sigma = sigma_bm.data();

    let p = scheme.p();
    let in_support = |i: usize, j: usize| i == j || edges.has_edge(i, j);

    // matrix positions (a, b) grouped per ordered block, support first
    struct BlockRows {
        start: usize,
        len: usize,
    }
    let mut s_pairs: Vec<(usize, usize)> = Vec::new();
    let mut sc_pairs: Vec<(usize, usize)> = Vec::new();
    let mut s_blocks: Vec<BlockRows> = Vec::new();
    let mut sc_blocks: Vec<BlockRows> = Vec::new();
    for i in 0..p {
        for j in 0..p {
            let (pairs, blocks) = if in_support(i, j) {
                (&mut s_pairs, &mut s_blocks)
            } else {
                (&mut sc_pairs, &mut sc_blocks)
            };
            let start = pairs.len();
            for a in scheme.block_range(i) {
                for b in scheme.block_range(j) {
                    pairs.push((a, b));
                }
            }
            blocks.push(BlockRows { start, len: pairs.len() - start });
        }
    }

    let gamma_entry = |r: (usize, usize), c: (usize, usize)| -> f64 {
        let mut v = 0.0;
        if r.1 == c.1 {
            v += sigma[(r.0, c.0)];
        }
        if r.0 == c.0 {
            v += sigma[(r.1, c.1)];
        }
        0.5 * v
    };

    let ns = s_pairs.len();
    let gamma_ss = DMatrix::from_fn(ns, ns, |r, c| gamma_entry(s_pairs[r], s_pairs[c]));
    let gamma_ss_inv = gamma_ss
        .try_inverse()
        .ok_or_else(|| Error::Singular("on-support Hessian block is singular".into()))?;
    let kappa_gamma = max_abs_row_sum(&gamma_ss_inv);
    let kappa_sigma = max_abs_row_sum(sigma);

    let nc = sc_pairs.len();
    let gamma_cs = DMatrix::from_fn(nc, ns, |r, c| gamma_entry(sc_pairs[r], s_pairs[c]));
    let upsilon = gamma_cs * &gamma_ss_inv;

    let mut worst = 0.0f64;
    for block in &sc_blocks {
        let mut sum_sq = 0.0;
        for f in block.start..block.start + block.len {
            let mut row_agg = 0.0;
            for sb in &s_blocks {
                let mut nrm = 0.0;
                for g in sb.start..sb.start + sb.len {
                    nrm += upsilon[(f, g)] * upsilon[(f, g)];
                }
                row_agg += nrm.sqrt();
            }
            sum_sq += row_agg * row_agg;
        }
        worst = worst.max(sum_sq.sqrt());
    }
    let gamma = 1.0 - worst;

    Ok(IrrepReport {
        gamma,
        kappa_gamma,
        kappa_sigma,
        d: edges.max_degree(),
        holds: gamma > 0.0,
    })
}

fn max_abs_row_sum(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|r| m.row(r).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Graph recovered from the exact precision operator at the population zero
/// tolerance.
pub fn population_graph(pmf: &JointPMF) -> Result<Graph> {
    crate::block::edges_from_blocks(&vertex_dapo(pmf)?, POP_ZERO_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::edges_from_blocks;
    use crate::pmf::{augment, ising_pmf, IsingParams};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Binary triple with pmf proportional to 3^{x1 x2}.
    fn binary_triple() -> JointPMF {
        let scheme = NodeScheme::binary(3).unwrap();
        let mut probs = vec![0.0; 8];
        for idx in 0..8usize {
            let x1 = (idx >> 2) & 1;
            let x2 = (idx >> 1) & 1;
            probs[idx] = 3f64.powi((x1 * x2) as i32) / 12.0;
        }
        JointPMF::new(scheme, probs).unwrap()
    }

    /// Ternary triple with pmf proportional to 2^{x1 x2 + x1 x3}.
    fn ternary_triple() -> JointPMF {
        let scheme = NodeScheme::new(vec![2, 2, 2]).unwrap();
        let mut probs = Vec::with_capacity(27);
        for x1 in 0..3u32 {
            for x2 in 0..3u32 {
                for x3 in 0..3u32 {
                    probs.push(2f64.powi((x1 * x2 + x1 * x3) as i32) / 499.0);
                }
            }
        }
        JointPMF::new(scheme, probs).unwrap()
    }

    fn ising_from_edges(p: usize, coupling: f64, edges: &[(usize, usize)]) -> JointPMF {
        let mut beta = DMatrix::zeros(p, p);
        for &(i, j) in edges {
            beta[(i, j)] = coupling;
            beta[(j, i)] = coupling;
        }
        ising_pmf(&IsingParams::new(beta).unwrap()).unwrap()
    }

    /// Dense 5-node symmetric Ising model missing only the (0,1) coupling.
    fn dense_five_node() -> JointPMF {
        let edges: Vec<(usize, usize)> = (0..5)
            .flat_map(|i| ((i + 1)..5).map(move |j| (i, j)))
            .filter(|&(i, j)| !(i == 0 && j == 1))
            .collect();
        ising_from_edges(5, 0.5 * 2f64.ln(), &edges)
    }

    fn random_pmf(scheme: NodeScheme, rng: &mut ChaCha8Rng) -> JointPMF {
        let size = scheme.support_size().unwrap();
        let mut probs: Vec<f64> = (0..size).map(|_| (rng.random::<f64>() * 2.0 - 1.0).exp()).collect();
        let total: f64 = probs.iter().sum();
        for q in &mut probs {
            *q /= total;
        }
        JointPMF::new(scheme, probs).unwrap()
    }

    fn assert_matrix_close(got: &DMatrix<f64>, want: &[&[f64]], tol: f64) {
        assert_eq!(got.nrows(), want.len());
        for (r, row) in want.iter().enumerate() {
            assert_eq!(got.ncols(), row.len());
            for (c, &v) in row.iter().enumerate() {
                assert!(
                    (got[(r, c)] - v).abs() <= tol,
                    "entry ({r},{c}): got {}, want {v}",
                    got[(r, c)]
                );
            }
        }
    }

    #[test]
    fn binary_triple_vertex_representation() {
        let pmf = binary_triple();
        let davo = vertex_davo(&pmf).unwrap();
        assert_matrix_close(
            davo.data(),
            &[
                &[2.0 / 9.0, 1.0 / 18.0, 0.0],
                &[1.0 / 18.0, 2.0 / 9.0, 0.0],
                &[0.0, 0.0, 0.25],
            ],
            1e-14,
        );
        let dapo = vertex_dapo(&pmf).unwrap();
        assert_matrix_close(
            dapo.data(),
            &[
                &[24.0 / 5.0, -6.0 / 5.0, 0.0],
                &[-6.0 / 5.0, 24.0 / 5.0, 0.0],
                &[0.0, 0.0, 4.0],
            ],
            1e-12,
        );
    }

    #[test]
    fn binary_triple_orthonormal_representation() {
        let pmf = binary_triple();
        let davo = orthonormal_davo(&pmf).unwrap();
        assert_matrix_close(
            davo.data(),
            &[&[1.0, 0.25, 0.0], &[0.25, 1.0, 0.0], &[0.0, 0.0, 1.0]],
            1e-14,
        );
        let dapo = orthonormal_dapo(&pmf).unwrap();
        assert_matrix_close(
            dapo.data(),
            &[
                &[16.0 / 15.0, -4.0 / 15.0, 0.0],
                &[-4.0 / 15.0, 16.0 / 15.0, 0.0],
                &[0.0, 0.0, 1.0],
            ],
            1e-12,
        );
    }

    #[test]
    fn ternary_triple_vertex_blocks() {
        let pmf = ternary_triple();
        let davo = vertex_davo(&pmf).unwrap();
        let b12 = davo.block(0, 1);
        let want = [[8.2e-3, -16.1e-3], [-10.5e-3, 23.4e-3]];
        for a in 0..2 {
            for b in 0..2 {
                assert!(
                    (b12[(a, b)] - want[a][b]).abs() < 5e-5,
                    "block entry ({a},{b}): got {}",
                    b12[(a, b)]
                );
            }
        }
        let dapo = vertex_dapo(&pmf).unwrap();
        // reference values rounded to one decimal
        let want_dapo: [[f64; 6]; 6] = [
            [67.0, 57.6, -2.9, -3.5, -2.9, -3.5],
            [57.6, 60.1, -4.1, -5.4, -4.1, -5.4],
            [-2.9, -4.1, 21.4, 16.6, 0.0, 0.0],
            [-3.5, -5.4, 16.6, 18.2, 0.0, 0.0],
            [-2.9, -4.1, 0.0, 0.0, 21.4, 16.6],
            [-3.5, -5.4, 0.0, 0.0, 16.6, 18.2],
        ];
        for r in 0..6 {
            for c in 0..6 {
                assert!(
                    (dapo.data()[(r, c)] - want_dapo[r][c]).abs() <= 0.1,
                    "entry ({r},{c}): got {}",
                    dapo.data()[(r, c)]
                );
            }
        }
        // the (2,3) block vanishes exactly
        assert!(dapo.block_norm(1, 2) < 1e-10);
        let g = edges_from_blocks(&dapo, 1e-8).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn independent_pmf_is_block_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let scheme = NodeScheme::new(vec![2, 1, 2]).unwrap();
        // product of independent per-node marginals
        let margs: Vec<Vec<f64>> = scheme
            .levels()
            .iter()
            .map(|&m| {
                let mut v: Vec<f64> = (0..=m).map(|_| rng.random::<f64>() + 0.1).collect();
                let t: f64 = v.iter().sum();
                v.iter_mut().for_each(|x| *x /= t);
                v
            })
            .collect();
        let size = scheme.support_size().unwrap();
        let mut probs = vec![0.0; size];
        let tmp = JointPMF::new(scheme.clone(), vec![1.0 / size as f64; size]).unwrap();
        let mut point = vec![0u32; 3];
        for (idx, q) in probs.iter_mut().enumerate() {
            tmp.decode(idx, &mut point);
            *q = (0..3).map(|i| margs[i][point[i] as usize]).product();
        }
        let pmf = JointPMF::new(scheme, probs).unwrap();
        let davo = vertex_davo(&pmf).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(davo.block_norm(i, j) <= 1e-12);
                }
            }
        }
        let o_davo = orthonormal_davo(&pmf).unwrap();
        let m = o_davo.scheme().total_dim();
        assert!((o_davo.data() - DMatrix::<f64>::identity(m, m)).abs().max() < 1e-12);
        // independent nodes: the irrepresentable condition holds with slack 1
        let rep = irrep_diagnostics(&pmf).unwrap();
        assert!((rep.gamma - 1.0).abs() < 1e-10);
        assert!(rep.holds);
        assert_eq!(rep.d, 0);
    }

    #[test]
    fn orthonormal_basis_binary_nodes() {
        // fair coin: basis values are -1 and +1 up to a global sign
        let scheme = NodeScheme::binary(2).unwrap();
        let pmf = JointPMF::new(scheme, vec![0.25; 4]).unwrap();
        let u = orthonormal_basis(&pmf, 0).unwrap();
        assert_eq!(u.nrows(), 1);
        assert!((u[(0, 0)].abs() - 1.0).abs() < 1e-14);
        assert!((u[(0, 1)].abs() - 1.0).abs() < 1e-14);
        assert!((u[(0, 0)] + u[(0, 1)]).abs() < 1e-14);

        // biased node with P(1) = 2/3: values -sqrt(2), 1/sqrt(2)
        let pmf2 = binary_triple();
        let u2 = orthonormal_basis(&pmf2, 0).unwrap();
        let s = u2[(0, 1)].signum();
        assert!((s * u2[(0, 0)] - (-2f64.sqrt())).abs() < 1e-12);
        assert!((s * u2[(0, 1)] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_basis_gram_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let scheme = NodeScheme::new(vec![3, 2]).unwrap();
            let pmf = random_pmf(scheme, &mut rng);
            for i in 0..2 {
                let u = orthonormal_basis(&pmf, i).unwrap();
                let marg = pmf.marginal(i);
                let mut gram = DMatrix::zeros(u.nrows(), u.nrows());
                for a in 0..u.nrows() {
                    for b in 0..u.nrows() {
                        gram[(a, b)] =
                            (0..marg.len()).map(|x| marg[x] * u[(a, x)] * u[(b, x)]).sum();
                    }
                }
                assert!(
                    (gram - DMatrix::<f64>::identity(u.nrows(), u.nrows())).abs().max() < 1e-12
                );
                let mean: f64 = (0..marg.len()).map(|x| marg[x] * u[(0, x)]).sum();
                assert!(mean.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_probability_level_shrinks_orthonormal_and_fails_vertex() {
        // node 0 has nominal support {0,1,2} but never attains level 2
        let scheme = NodeScheme::new(vec![2, 1]).unwrap();
        let mut probs = vec![0.0; 6];
        probs[0] = 0.2; // (0,0)
        probs[1] = 0.2; // (0,1)
        probs[2] = 0.3; // (1,0)
        probs[3] = 0.3; // (1,1)
        let pmf = JointPMF::new(scheme, probs).unwrap();
        match vertex_davo(&pmf) {
            Err(Error::DegenerateNode { node, .. }) => assert_eq!(node, 0),
            other => panic!("expected degenerate-node error, got {other:?}"),
        }
        let davo = orthonormal_davo(&pmf).unwrap();
        assert_eq!(davo.scheme().levels(), &[1, 1]);
    }

    #[test]
    fn davo_dapo_product_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..20 {
            let scheme = if trial % 2 == 0 {
                NodeScheme::new(vec![2, 1, 2]).unwrap()
            } else {
                NodeScheme::new(vec![1, 3, 1]).unwrap()
            };
            let pmf = random_pmf(scheme, &mut rng);
            let davo = vertex_davo(&pmf).unwrap();
            let dapo = vertex_dapo(&pmf).unwrap();
            let m = davo.scheme().total_dim();
            let prod = davo.data() * dapo.data();
            assert!((prod - DMatrix::<f64>::identity(m, m)).abs().max() < 1e-10);

            let od = orthonormal_davo(&pmf).unwrap();
            let op = orthonormal_dapo(&pmf).unwrap();
            let m2 = od.scheme().total_dim();
            let prod2 = od.data() * op.data();
            assert!((prod2 - DMatrix::<f64>::identity(m2, m2)).abs().max() < 1e-10);

            // both coordinate representations recover the same edge set
            let gv = edges_from_blocks(&dapo, POP_ZERO_TOL).unwrap();
            let go = edges_from_blocks(&op, POP_ZERO_TOL).unwrap();
            assert_eq!(gv, go);
        }
    }

    #[test]
    fn binary_case_reduces_to_scaled_inverse_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..10 {
            let scheme = NodeScheme::binary(4).unwrap();
            let pmf = random_pmf(scheme, &mut rng);
            // direct moment computation of var and corr of the coded vector
            let mut mean = [0.0f64; 4];
            let mut second = [[0.0f64; 4]; 4];
            pmf.for_each_point(|pt, pr| {
                for i in 0..4 {
                    mean[i] += pr * pt[i] as f64;
                    for j in 0..4 {
                        second[i][j] += pr * (pt[i] * pt[j]) as f64;
                    }
                }
            });
            let var = DMatrix::from_fn(4, 4, |i, j| second[i][j] - mean[i] * mean[j]);
            let sd = DVector::from_iterator(4, (0..4).map(|i| var[(i, i)].sqrt()));
            let corr = DMatrix::from_fn(4, 4, |i, j| var[(i, j)] / (sd[i] * sd[j]));

            let dapo = vertex_dapo(&pmf).unwrap();
            let want_v = var.try_inverse().unwrap();
            assert!((dapo.data() - want_v).abs().max() < 1e-9);

            let odapo = orthonormal_dapo(&pmf).unwrap();
            let want_o = corr.try_inverse().unwrap();
            assert!((odapo.data() - want_o).abs().max() < 1e-9);
        }
    }

    #[test]
    fn hs_norms_invariant_under_basis_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let scheme = NodeScheme::new(vec![2, 2, 1]).unwrap();
        let pmf = random_pmf(scheme, &mut rng);
        let hs = hs_norms(&pmf).unwrap();
        let davo = orthonormal_davo(&pmf).unwrap();
        let s = davo.scheme().clone();
        for _ in 0..10 {
            // any other orthonormal basis differs by a block-orthogonal map
            let dim = s.total_dim();
            let mut o = DMatrix::zeros(dim, dim);
            for i in 0..s.p() {
                let r = s.block_range(i);
                let a = DMatrix::from_fn(r.len(), r.len(), |_, _| rng.random::<f64>() - 0.5);
                o.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(&a.qr().q());
            }
            let rotated = &o * davo.data() * o.transpose();
            let inv = rotated.try_inverse().unwrap();
            let inv = (&inv + inv.transpose()) * 0.5;
            let bm = BlockMatrix::new_symmetric(s.clone(), inv).unwrap();
            assert!((bm.block_frobenius_norms() - &hs).abs().max() < 1e-10);
        }
    }

    #[test]
    fn lcm_empty_conditioning_set() {
        let pmf = binary_triple();
        let check = check_lcm(&pmf, 0, &[], 1e-10).unwrap();
        assert!(check.holds);
        assert_eq!(check.max_residual, 0.0);
    }

    #[test]
    fn lcm_fails_on_dense_five_node_model() {
        let pmf = dense_five_node();
        let check = check_lcm(&pmf, 0, &[2, 3, 4], 1e-8).unwrap();
        assert!(!check.holds);
        assert!(check.max_residual > 1e-3);
    }

    #[test]
    fn lcm_holds_after_augmentation() {
        let pmf = dense_five_node();
        let (_, aug) = augment(&pmf, &[2, 3, 4]).unwrap();
        let check = check_lcm(&aug, 0, &[2, 3, 4, 5], 1e-10).unwrap();
        assert!(check.holds, "residual {}", check.max_residual);
        let coefs = check.coefficients.unwrap();
        let want = [5.0 / 18.0, 5.0 / 18.0, 5.0 / 18.0, -1.0 / 18.0];
        assert_eq!(coefs.len(), 4);
        for (got, want) in coefs.iter().zip(want) {
            assert!((got - want).abs() < 1e-10, "coefficient {got} vs {want}");
        }
    }

    #[test]
    fn lcm_rejects_bad_conditioning_sets() {
        let pmf = binary_triple();
        assert!(check_lcm(&pmf, 0, &[0, 1], 1e-8).is_err());
        assert!(check_lcm(&pmf, 0, &[1, 1], 1e-8).is_err());
        assert!(check_lcm(&pmf, 9, &[1], 1e-8).is_err());
    }

    #[test]
    fn irrep_diagnostics_on_small_models() {
        let pmf = binary_triple();
        let rep = irrep_diagnostics(&pmf).unwrap();
        assert_eq!(rep.d, 1);
        // direct row-sum oracle for kappa_sigma
        let sigma = vertex_davo(&pmf).unwrap();
        let oracle: f64 = (0..3)
            .map(|r| (0..3).map(|c| sigma.data()[(r, c)].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        assert!((rep.kappa_sigma - oracle).abs() < 1e-14);
        assert!(rep.kappa_gamma > 0.0);
    }

    #[test]
    fn irrep_cap_is_enforced() {
        let pmf = binary_triple();
        assert!(matches!(
            irrep_diagnostics_with_cap(&pmf, 2),
            Err(Error::CapExceeded(_))
        ));
    }

    #[test]
    fn pairwise_independence_iff_zero_covariance_block() {
        // dependent pair: nonzero block; independent pair: zero block
        let pmf = binary_triple();
        let davo = vertex_davo(&pmf).unwrap();
        assert!(davo.block_norm(0, 1) > 1e-3);
        assert!(davo.block_norm(0, 2) <= 1e-12);
        assert!(davo.block_norm(1, 2) <= 1e-12);
        let t01 = pmf.pairwise_marginal(0, 1).unwrap();
        let m0 = pmf.marginal(0);
        let m1 = pmf.marginal(1);
        let factorizes = (0..2).all(|a| {
            (0..2).all(|b| (t01[(a, b)] - m0[a] * m1[b]).abs() < 1e-12)
        });
        assert!(!factorizes);
    }
}
