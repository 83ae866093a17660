//! Group-penalized D-trace estimation of the precision operator from a
//! sample covariance of centered indicators, solved by ADMM. The quadratic
//! subproblem is solved in the eigenbasis of the (constant) shifted
//! covariance; the proximal subproblem is blockwise soft-thresholding.

use nalgebra::{DMatrix, DVector};

use crate::block::{edges_from_blocks, BlockMatrix};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scheme::{Dataset, NodeScheme};

/// ADMM parameters. `lambda` is the group-penalty weight.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub rho: f64,
    pub max_iter: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub lambda: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 1.0,
            max_iter: 2000,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            lambda: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        SolverConfig { lambda, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::InvalidArgument(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.tol_primal > 0.0) || !(self.tol_dual > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Converged (or truncated) solver state: the sparse copy of the estimate,
/// its edge set, and convergence diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: BlockMatrix,
    pub edges: Graph,
    pub lambda: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub converged: bool,
    /// Max blockwise violation of the stationarity condition at the returned
    /// iterate; compare against `kkt_threshold`.
    pub kkt_violation: f64,
}

impl FitResult {
    /// Certificate bound: ten times the stopping tolerance, on the same
    /// relative scale the residuals are measured on.
    pub fn kkt_threshold(&self, config: &SolverConfig) -> f64 {
        10.0 * config.tol_primal * self.theta.data().norm().max(1.0)
    }
}

/// Sample covariance of the stacked centered indicator vectors, divisor n.
/// Matches the population operator of the empirical distribution exactly.
pub fn sample_davo(data: &Dataset) -> Result<BlockMatrix> {
    let scheme = data.scheme().clone();
    let p = scheme.p();
    let n = data.n();
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 rows, got {n}")));
    }
    for i in 0..p {
        let first = data.get(0, i);
        if (1..n).all(|k| data.get(k, i) == first) {
            return Err(Error::DegenerateNode {
                node: i,
                detail: "constant column (zero-variance indicator for every level)".into(),
            });
        }
    }
    let inv_n = 1.0 / n as f64;
    let marginals: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut counts = vec![0usize; scheme.num_levels(i)];
            for k in 0..n {
                counts[data.get(k, i) as usize] += 1;
            }
            counts.into_iter().map(|c| c as f64 * inv_n).collect()
        })
        .collect();
    let m_total = scheme.total_dim();
    let mut out = DMatrix::zeros(m_total, m_total);
    for i in 0..p {
        let ri = scheme.block_range(i);
        for a in 1..=scheme.m(i) {
            for b in 1..=scheme.m(i) {
                let joint = if a == b { marginals[i][a] } else { 0.0 };
                out[(ri.start + a - 1, ri.start + b - 1)] =
                    joint - marginals[i][a] * marginals[i][b];
            }
        }
        for j in (i + 1)..p {
            let rj = scheme.block_range(j);
            let mut joint = DMatrix::<f64>::zeros(scheme.num_levels(i), scheme.num_levels(j));
            for k in 0..n {
                joint[(data.get(k, i) as usize, data.get(k, j) as usize)] += 1.0;
            }
            for a in 1..=scheme.m(i) {
                for b in 1..=scheme.m(j) {
                    let c = joint[(a, b)] * inv_n - marginals[i][a] * marginals[j][b];
                    out[(ri.start + a - 1, rj.start + b - 1)] = c;
                    out[(rj.start + b - 1, ri.start + a - 1)] = c;
                }
            }
        }
    }
    BlockMatrix::new_symmetric(scheme, out)
}

fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Solves min over symmetric Theta of (1/2)<Theta^2, A> - <Theta, B>,
/// i.e. the Sylvester-form condition (1/2)(A Theta + Theta A) = sym(B),
/// through the eigendecomposition of the positive definite A.
pub fn h_step(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() || a.shape() != b.shape() {
        return Err(Error::InvalidArgument("h_step needs square matrices of equal size".into()));
    }
    let eig = a.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&w| w <= 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "h_step input has min eigenvalue {:.3e}",
            eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
        )));
    }
    let mut b_sym = b.clone();
    symmetrize_in_place(&mut b_sym);
    let mut w = eig.eigenvectors.transpose() * b_sym * &eig.eigenvectors;
    let n = a.nrows();
    for c in 0..n {
        for r in 0..n {
            w[(r, c)] *= 2.0 / (eig.eigenvalues[r] + eig.eigenvalues[c]);
        }
    }
    let mut out = &eig.eigenvectors * w * eig.eigenvectors.transpose();
    symmetrize_in_place(&mut out);
    Ok(out)
}

/// Blockwise group soft-thresholding: diagonal blocks pass through, an
/// off-diagonal block shrinks by factor (1 - lam / norm) or becomes exactly
/// zero when its Frobenius norm is at most lam.
pub fn s_step(a: &BlockMatrix, lam: f64) -> Result<BlockMatrix> {
    if lam < 0.0 {
        return Err(Error::InvalidArgument(format!("negative threshold {lam}")));
    }
    if !a.is_symmetric() {
        return Err(Error::InvalidArgument("s_step requires a symmetric matrix".into()));
    }
    let out = s_step_matrix(a.scheme(), a.data(), lam);
    BlockMatrix::new_symmetric(a.scheme().clone(), out)
}

/// The same scale factor is applied to the (i,j) and (j,i) blocks so the
/// output is exactly symmetric when the input is.
fn s_step_matrix(scheme: &NodeScheme, a: &DMatrix<f64>, lam: f64) -> DMatrix<f64> {
    let p = scheme.p();
    let mut out = a.clone();
    for i in 0..p {
        for j in (i + 1)..p {
            let ri = scheme.block_range(i);
            let rj = scheme.block_range(j);
            let mut norm_sq = 0.0;
            for b in rj.clone() {
                for a_idx in ri.clone() {
                    norm_sq += a[(a_idx, b)] * a[(a_idx, b)];
                }
            }
            let norm = norm_sq.sqrt();
            let factor = if norm > lam { 1.0 - lam / norm } else { 0.0 };
            for b in rj.clone() {
                for a_idx in ri.clone() {
                    out[(a_idx, b)] = factor * a[(a_idx, b)];
                    out[(b, a_idx)] = factor * a[(b, a_idx)];
                }
            }
        }
    }
    out
}

/// D-trace loss plus group penalty (sum over ordered off-diagonal blocks):
/// (1/2)<Theta^2, Sigma> - tr(Theta) + lambda * sum_{i != j} ||Theta_[ij]||_F.
pub fn objective(theta: &BlockMatrix, sigma: &BlockMatrix, lam: f64) -> Result<f64> {
    if theta.scheme().total_dim() != sigma.scheme().total_dim() {
        return Err(Error::InvalidArgument("objective: dimension mismatch".into()));
    }
    Ok(objective_matrix(theta.scheme(), theta.data(), sigma.data(), lam))
}

fn objective_matrix(scheme: &NodeScheme, theta: &DMatrix<f64>, sigma: &DMatrix<f64>, lam: f64) -> f64 {
    // <Theta^2, Sigma> = tr(Theta * (Theta Sigma)) for symmetric Theta
    let prod = theta * sigma;
    let m = theta.nrows();
    let mut quad = 0.0;
    for a in 0..m {
        for b in 0..m {
            quad += theta[(a, b)] * prod[(b, a)];
        }
    }
    let mut penalty = 0.0;
    let p = scheme.p();
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let mut norm_sq = 0.0;
            for b in scheme.block_range(j) {
                for a_idx in scheme.block_range(i) {
                    norm_sq += theta[(a_idx, b)] * theta[(a_idx, b)];
                }
            }
            penalty += norm_sq.sqrt();
        }
    }
    0.5 * quad - theta.trace() + lam * penalty
}

/// Reusable D-trace ADMM solver: the eigendecomposition of the shifted
/// covariance is computed once and shared by every fit (warm-started paths,
/// cross-validation folds at many penalty values).
pub struct DtraceSolver {
    scheme: NodeScheme,
    sigma: DMatrix<f64>,
    rho: f64,
    q: DMatrix<f64>,
    q_t: DMatrix<f64>,
    eigvals: DVector<f64>,
}

/// Warm-start state carried between consecutive path fits.
struct WarmStart {
    theta0: DMatrix<f64>,
    dual: DMatrix<f64>,
}

impl DtraceSolver {
    pub fn new(sigma_hat: &BlockMatrix, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
        }
        if !sigma_hat.is_symmetric() {
            return Err(Error::InvalidArgument("sample covariance must be symmetric".into()));
        }
        let m = sigma_hat.scheme().total_dim();
        let mut shifted = sigma_hat.data().clone();
        for k in 0..m {
            shifted[(k, k)] += rho;
        }
        let eig = shifted.symmetric_eigen();
        let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "shifted covariance has min eigenvalue {min_eig:.3e}; the input is not PSD"
            )));
        }
        Ok(DtraceSolver {
            scheme: sigma_hat.scheme().clone(),
            sigma: sigma_hat.data().clone(),
            rho,
            q_t: eig.eigenvectors.transpose(),
            q: eig.eigenvectors,
            eigvals: eig.eigenvalues,
        })
    }

    pub fn scheme(&self) -> &NodeScheme {
        &self.scheme
    }

    /// One penalized fit from the cold start.
    pub fn fit(&self, config: &SolverConfig) -> Result<FitResult> {
        let (result, _) = self.fit_inner(config, None)?;
        Ok(result)
    }

    /// Fits every penalty value in order, warm-starting each fit from the
    /// previous solution. Pass the values in descending order.
    pub fn fit_path(&self, lambdas: &[f64], config: &SolverConfig) -> Result<Vec<FitResult>> {
        let mut out = Vec::with_capacity(lambdas.len());
        let mut warm: Option<WarmStart> = None;
        for &lam in lambdas {
            let cfg = SolverConfig { lambda: lam, ..config.clone() };
            let (result, state) = self.fit_inner(&cfg, warm.as_ref())?;
            out.push(result);
            warm = Some(state);
        }
        Ok(out)
    }

    fn fit_inner(
        &self,
        config: &SolverConfig,
        warm: Option<&WarmStart>,
    ) -> Result<(FitResult, WarmStart)> {
        config.validate()?;
        if config.rho != self.rho {
            return Err(Error::InvalidArgument(
                "config.rho differs from the solver's cached rho".into(),
            ));
        }
        let m = self.scheme.total_dim();
        let rho = self.rho;
        let lam_step = config.lambda / rho;

        let (mut theta0, mut dual) = match warm {
            Some(w) => (w.theta0.clone(), w.dual.clone()),
            None => {
                let mut init = DMatrix::zeros(m, m);
                for k in 0..m {
                    let d = self.sigma[(k, k)];
                    if d == 0.0 {
                        return Err(Error::Singular(format!(
                            "zero diagonal entry {k} of the sample covariance at initialization"
                        )));
                    }
                    init[(k, k)] = 1.0 / d;
                }
                (init, DMatrix::zeros(m, m))
            }
        };

        let mut b = DMatrix::zeros(m, m);
        let mut w = DMatrix::zeros(m, m);
        let mut tmp = DMatrix::zeros(m, m);
        let mut theta = DMatrix::zeros(m, m);

        let mut iterations = 0;
        let mut primal = f64::INFINITY;
        let mut dual_res = f64::INFINITY;
        let mut converged = false;
        for t in 1..=config.max_iter {
            iterations = t;
            // B = I + rho*Theta0 - Lambda, symmetrized against drift
            b.copy_from(&theta0);
            b *= rho;
            b -= &dual;
            for k in 0..m {
                b[(k, k)] += 1.0;
            }
            symmetrize_in_place(&mut b);

            // Theta = H(Sigma + rho I, B) in the cached eigenbasis
            tmp.gemm(1.0, &self.q_t, &b, 0.0);
            w.gemm(1.0, &tmp, &self.q, 0.0);
            for c in 0..m {
                for r in 0..m {
                    w[(r, c)] *= 2.0 / (self.eigvals[r] + self.eigvals[c]);
                }
            }
            tmp.gemm(1.0, &self.q, &w, 0.0);
            theta.gemm(1.0, &tmp, &self.q_t, 0.0);
            self.check_symmetry(&theta)?;
            symmetrize_in_place(&mut theta);

            // Theta0 = S(Theta + Lambda/rho, lambda/rho)
            let mut z = theta.clone();
            z.zip_apply(&dual, |zi, di| *zi += di / rho);
            let theta0_new = s_step_matrix(&self.scheme, &z, lam_step);

            primal = (&theta - &theta0_new).norm();
            dual_res = rho * (&theta0_new - &theta0).norm();

            dual.zip_zip_apply(&theta, &theta0_new, |l, t, t0| *l += rho * (t - t0));
            theta0 = theta0_new;

            let scale = theta0.norm().max(1.0);
            if primal <= config.tol_primal * scale && dual_res <= config.tol_dual * scale {
                converged = true;
                break;
            }
        }

        let objective = objective_matrix(&self.scheme, &theta0, &self.sigma, config.lambda);
        let kkt_violation = kkt_violation(&self.scheme, &self.sigma, &theta0, config.lambda);
        let theta_bm = BlockMatrix::new_symmetric(self.scheme.clone(), theta0.clone())?;
        let edges = edges_from_blocks(&theta_bm, 0.0)?;
        let result = FitResult {
            theta: theta_bm,
            edges,
            lambda: config.lambda,
            iterations,
            primal_residual: primal,
            dual_residual: dual_res,
            objective,
            converged,
            kkt_violation,
        };
        Ok((result, WarmStart { theta0, dual }))
    }

    fn check_symmetry(&self, m: &DMatrix<f64>) -> Result<()> {
        let n = m.nrows();
        let scale = m.iter().fold(1.0f64, |a, &x| a.max(x.abs()));
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-6 * scale {
                    return Err(Error::Singular(
                        "ADMM iterate lost symmetry; the solve is numerically unstable".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Max blockwise violation of the stationarity conditions of the penalized
/// problem at `theta0`: with G = (1/2)(Sigma Theta + Theta Sigma) - I,
/// diagonal blocks require G = 0, active blocks require G to cancel the
/// penalty gradient, inactive blocks require ||G|| <= lambda.
pub fn kkt_violation(
    scheme: &NodeScheme,
    sigma: &DMatrix<f64>,
    theta0: &DMatrix<f64>,
    lambda: f64,
) -> f64 {
    let m = theta0.nrows();
    let st = sigma * theta0;
    let mut g = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            g[(a, b)] = 0.5 * (st[(a, b)] + st[(b, a)]);
        }
    }
    for k in 0..m {
        g[(k, k)] -= 1.0;
    }
    let p = scheme.p();
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            let ri = scheme.block_range(i);
            let rj = scheme.block_range(j);
            let mut g_norm_sq = 0.0;
            let mut t_norm_sq = 0.0;
            for b in rj.clone() {
                for a in ri.clone() {
                    g_norm_sq += g[(a, b)] * g[(a, b)];
                    t_norm_sq += theta0[(a, b)] * theta0[(a, b)];
                }
            }
            let violation = if i == j {
                g_norm_sq.sqrt()
            } else if t_norm_sq > 0.0 {
                let t_norm = t_norm_sq.sqrt();
                let mut v = 0.0;
                for b in rj.clone() {
                    for a in ri.clone() {
                        let r = g[(a, b)] + lambda * theta0[(a, b)] / t_norm;
                        v += r * r;
                    }
                }
                v.sqrt()
            } else {
                (g_norm_sq.sqrt() - lambda).max(0.0)
            };
            worst = worst.max(violation);
        }
    }
    worst
}

/// One-call fit: builds a solver for `sigma_hat` and runs a single cold-start
/// fit at `config.lambda`.
pub fn fit_dtrace(sigma_hat: &BlockMatrix, config: &SolverConfig) -> Result<FitResult> {
    DtraceSolver::new(sigma_hat, config.rho)?.fit(config)
}

/// Blockwise Frobenius norms of the ridge-regularized inverse
/// (Sigma + eps I)^{-1}; the thresholding baseline scores edges by these.
pub fn ridge_inverse_block_norms(sigma_hat: &BlockMatrix, eps: f64) -> Result<DMatrix<f64>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let m = sigma_hat.scheme().total_dim();
    let mut shifted = sigma_hat.data().clone();
    for k in 0..m {
        shifted[(k, k)] += eps;
    }
    let chol = nalgebra::Cholesky::new(shifted)
        .ok_or_else(|| Error::NotPositiveDefinite("ridge-shifted covariance".into()))?;
    let inv = chol.inverse();
    let bm = BlockMatrix::new(sigma_hat.scheme().clone(), inv)?;
    Ok(bm.block_frobenius_norms())
}

/// Thresholding baseline: edges where the blockwise norm of the ridge
/// inverse exceeds `threshold`.
pub fn ridge_inverse_baseline(
    sigma_hat: &BlockMatrix,
    eps: f64,
    threshold: f64,
) -> Result<Graph> {
    let norms = ridge_inverse_block_norms(sigma_hat, eps)?;
    let p = sigma_hat.scheme().p();
    let mut g = Graph::new(p);
    for i in 0..p {
        for j in (i + 1)..p {
            if norms[(i, j)] > threshold {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}
