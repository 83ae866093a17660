//! Penalty-grid construction, K-fold cross-validation on the held-out
//! D-trace loss, ROC sweeps, and bootstrap stability selection.
//!
//! Randomized procedures use ChaCha8 seeded from a caller-supplied 64-bit
//! seed; bootstrap replicate `r` derives its stream from `seed + r`, so
//! results are independent of scheduling.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::block::BlockMatrix;
use crate::error::{Error, Result};
use crate::estimator::{objective, sample_davo, DtraceSolver, SolverConfig};
use crate::graph::{graph_metrics, Graph};
use crate::scheme::Dataset;

/// Strictly decreasing positive penalty values.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty penalty grid".into()));
        }
        if values.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument("grid values must be positive".into()));
        }
        if values.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidArgument("grid must be strictly decreasing".into()));
        }
        Ok(LambdaGrid { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }
}

/// Smallest penalty at which the fit has no edges: the largest blockwise
/// gradient norm of the D-trace loss at the block-diagonal solution. The
/// value is inflated by 0.1% so the boundary block still thresholds to
/// exact zero at the default stopping tolerances.
pub fn lambda_max(sigma_hat: &BlockMatrix) -> Result<f64> {
    let scheme = sigma_hat.scheme();
    let p = scheme.p();
    let mut diag_inv: Vec<DMatrix<f64>> = Vec::with_capacity(p);
    for i in 0..p {
        let block = sigma_hat.block(i, i).into_owned();
        let inv = block.try_inverse().ok_or_else(|| {
            Error::Singular(format!("diagonal block {i} of the covariance is singular"))
        })?;
        diag_inv.push(inv);
    }
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let block = sigma_hat.block(i, j);
            let g = (block * &diag_inv[j] + &diag_inv[i] * block) * 0.5;
            worst = worst.max(g.norm());
        }
    }
    if worst == 0.0 {
        return Err(Error::InvalidArgument(
            "covariance is already block-diagonal; no penalty grid to build".into(),
        ));
    }
    Ok(worst * 1.001)
}

/// Log-spaced grid from `lambda_max` down to `lambda_max * ratio`.
pub fn lambda_grid(sigma_hat: &BlockMatrix, n_points: usize, ratio: f64) -> Result<LambdaGrid> {
    if n_points == 0 {
        return Err(Error::InvalidArgument("grid needs at least one point".into()));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("ratio must be in (0, 1], got {ratio}")));
    }
    let top = lambda_max(sigma_hat)?;
    if n_points == 1 {
        return LambdaGrid::from_values(vec![top]);
    }
    let values = (0..n_points)
        .map(|k| top * ratio.powf(k as f64 / (n_points - 1) as f64))
        .collect();
    LambdaGrid::from_values(values)
}

pub const DEFAULT_GRID_POINTS: usize = 50;
pub const DEFAULT_GRID_RATIO: f64 = 1e-3;

/// Cross-validation summary: per-penalty mean held-out loss with its
/// standard error, and the selected penalty (ties go to the larger value).
#[derive(Debug, Clone, PartialEq)]
pub struct CVReport {
    pub grid: LambdaGrid,
    pub mean_val_loss: Vec<f64>,
    pub se: Vec<f64>,
    pub chosen_lambda: f64,
    pub chosen_index: usize,
    pub folds: usize,
}

/// K-fold cross-validation: rows are shuffled by `seed`, split into K
/// near-equal contiguous folds, and each fold is scored with the D-trace
/// loss of the training fit against the held-out covariance.
pub fn cross_validate(
    data: &Dataset,
    k: usize,
    grid: &LambdaGrid,
    config: &SolverConfig,
    seed: u64,
) -> Result<CVReport> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if data.n() < 2 * k {
        return Err(Error::InvalidArgument(format!(
            "need at least {} rows for {k} folds, got {}",
            2 * k,
            data.n()
        )));
    }
    let mut order: Vec<usize> = (0..data.n()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let base = data.n() / k;
    let extra = data.n() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    cross_validate_on_folds(data, &folds, grid, config)
}

/// Cross-validation over an explicit fold assignment.
pub fn cross_validate_on_folds(
    data: &Dataset,
    folds: &[Vec<usize>],
    grid: &LambdaGrid,
    config: &SolverConfig,
) -> Result<CVReport> {
    let k = folds.len();
    if k < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    if let Some(f) = folds.iter().position(|f| f.len() < 2) {
        return Err(Error::Data(format!(
            "fold {f} has {} rows; too small to form a covariance",
            folds[f].len()
        )));
    }
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let val_rows = &folds[f];
            let train_rows: Vec<usize> =
                folds.iter().enumerate().filter(|&(g, _)| g != f).flat_map(|(_, r)| r.iter().copied()).collect();
            let train = data.select_rows(&train_rows)?;
            let val = data.select_rows(val_rows)?;
            let sigma_train = sample_davo(&train)?;
            let sigma_val = sample_davo(&val)?;
            let solver = DtraceSolver::new(&sigma_train, config.rho)?;
            let fits = solver.fit_path(grid.values(), config)?;
            fits.iter()
                .map(|fit| objective(&fit.theta, &sigma_val, 0.0))
                .collect()
        })
        .collect::<Result<_>>()?;

    let n_grid = grid.len();
    let mut mean = vec![0.0; n_grid];
    let mut se = vec![0.0; n_grid];
    for l in 0..n_grid {
        let sum: f64 = per_fold.iter().map(|f| f[l]).sum();
        mean[l] = sum / k as f64;
        let var: f64 =
            per_fold.iter().map(|f| (f[l] - mean[l]).powi(2)).sum::<f64>() / (k - 1) as f64;
        se[l] = (var / k as f64).sqrt();
    }
    let mut chosen_index = 0;
    for l in 1..n_grid {
        if mean[l] < mean[chosen_index] {
            chosen_index = l;
        }
    }
    Ok(CVReport {
        grid: grid.clone(),
        chosen_lambda: grid.values()[chosen_index],
        chosen_index,
        mean_val_loss: mean,
        se,
        folds: k,
    })
}

/// One point of an ROC sweep. For penalty paths `score` is the penalty; for
/// thresholding baselines it is the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub score: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// One fit per grid value (descending), scored against the truth graph.
pub fn roc_sweep(
    data: &Dataset,
    truth: &Graph,
    grid: &LambdaGrid,
    config: &SolverConfig,
) -> Result<Vec<RocPoint>> {
    if truth.p() != data.p() {
        return Err(Error::InvalidArgument("truth graph and data disagree on p".into()));
    }
    if truth.edge_count() == 0 || truth.edge_count() == truth.pair_count() {
        return Err(Error::InvalidArgument(
            "ROC needs a truth graph with at least one edge and one non-edge".into(),
        ));
    }
    let sigma = sample_davo(data)?;
    let solver = DtraceSolver::new(&sigma, config.rho)?;
    let fits = solver.fit_path(grid.values(), config)?;
    let mut out = Vec::with_capacity(fits.len());
    for (fit, &lam) in fits.iter().zip(grid.values()) {
        let m = graph_metrics(&fit.edges, truth)?;
        out.push(RocPoint {
            score: lam,
            tpr: m.tpr.expect("truth has edges"),
            fpr: 1.0 - m.tnr.expect("truth has non-edges"),
        });
    }
    Ok(out)
}

/// ROC staircase of a score-thresholding rule: one point per distinct
/// off-diagonal score, edges selected where score > threshold.
pub fn score_roc(scores: &DMatrix<f64>, truth: &Graph) -> Result<Vec<RocPoint>> {
    let p = truth.p();
    if scores.nrows() != p || scores.ncols() != p {
        return Err(Error::InvalidArgument("score matrix and truth disagree on p".into()));
    }
    if truth.edge_count() == 0 || truth.edge_count() == truth.pair_count() {
        return Err(Error::InvalidArgument(
            "ROC needs a truth graph with at least one edge and one non-edge".into(),
        ));
    }
    let mut thresholds: Vec<f64> = (0..p)
        .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
        .map(|(i, j)| scores[(i, j)])
        .collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut out = Vec::with_capacity(thresholds.len());
    for &thr in &thresholds {
        let mut est = Graph::new(p);
        for i in 0..p {
            for j in (i + 1)..p {
                if scores[(i, j)] > thr {
                    est.add_edge(i, j)?;
                }
            }
        }
        let m = graph_metrics(&est, truth)?;
        out.push(RocPoint {
            score: thr,
            tpr: m.tpr.expect("truth has edges"),
            fpr: 1.0 - m.tnr.expect("truth has non-edges"),
        });
    }
    Ok(out)
}

/// Trapezoid area under the ROC points: sorted by fpr, deduplicated (max tpr
/// per fpr), anchored at (0,0) and (1,1).
pub fn roc_auc(points: &[RocPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(pts.len() + 2);
    dedup.push((0.0, 0.0));
    for (fpr, tpr) in pts {
        match dedup.last_mut() {
            Some(last) if last.0 == fpr => last.1 = last.1.max(tpr),
            _ => dedup.push((fpr, tpr)),
        }
    }
    if dedup.last().map(|&(f, t)| (f, t)) != Some((1.0, 1.0)) {
        dedup.push((1.0, 1.0));
    }
    let mut area = 0.0;
    for w in dedup.windows(2) {
        area += (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1);
    }
    area
}

/// Bootstrap stability-selection summary.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub b: usize,
    pub lambda: f64,
    pub cutoff: f64,
    /// Fraction of successful replicates selecting each edge.
    pub selection_frequency: DMatrix<f64>,
    pub stable_edges: Graph,
    /// Replicates dropped after repeated degenerate resamples.
    pub skipped: usize,
}

/// B bootstrap resamples of size n, each refit at the fixed penalty;
/// replicate `r` draws from a ChaCha8 stream seeded with `seed + r`. A
/// resample with a constant indicator column is retried up to 10 times,
/// then skipped and counted.
pub fn stability_selection(
    data: &Dataset,
    lambda: f64,
    b: usize,
    cutoff: f64,
    config: &SolverConfig,
    seed: u64,
) -> Result<StabilityReport> {
    if b < 1 {
        return Err(Error::InvalidArgument("need at least one bootstrap replicate".into()));
    }
    if !(cutoff > 0.0 && cutoff <= 1.0) {
        return Err(Error::InvalidArgument(format!("cutoff must be in (0, 1], got {cutoff}")));
    }
    let cfg = SolverConfig { lambda, ..config.clone() };
    cfg.validate()?;
    let n = data.n();
    let results: Vec<Option<Graph>> = (0..b)
        .into_par_iter()
        .map(|r| -> Result<Option<Graph>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            for _ in 0..10 {
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let resample = data.select_rows(&rows)?;
                if resample.degenerate_indicator().is_some() {
                    continue;
                }
                let sigma = sample_davo(&resample)?;
                let solver = DtraceSolver::new(&sigma, cfg.rho)?;
                let fit = solver.fit(&cfg)?;
                return Ok(Some(fit.edges));
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;

    let skipped = results.iter().filter(|r| r.is_none()).count();
    let successes = b - skipped;
    if successes == 0 {
        return Err(Error::Data("every bootstrap replicate had a degenerate resample".into()));
    }
    let p = data.p();
    let mut counts = DMatrix::<f64>::zeros(p, p);
    for g in results.iter().flatten() {
        for (i, j) in g.edges() {
            counts[(i, j)] += 1.0;
            counts[(j, i)] += 1.0;
        }
    }
    let frequency = counts / successes as f64;
    let mut stable = Graph::new(p);
    for i in 0..p {
        for j in (i + 1)..p {
            if frequency[(i, j)] >= cutoff {
                stable.add_edge(i, j)?;
            }
        }
    }
    Ok(StabilityReport {
        b,
        lambda,
        cutoff,
        selection_frequency: frequency,
        stable_edges: stable,
        skipped,
    })
}

/// Penalty suggested by the support-recovery theory for known population
/// constants: (9/sqrt(2)) * gamma^{-1} * (kappa_sigma kappa_gamma^2 +
/// kappa_gamma) * m^{5/2} * d * sqrt((log(6 m^2) + tau log p) / n).
#[allow(clippy::too_many_arguments)]
pub fn theory_lambda(
    gamma: f64,
    kappa_sigma: f64,
    kappa_gamma: f64,
    d: usize,
    m: usize,
    tau: f64,
    n: usize,
    p: usize,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument("theory penalty needs gamma > 0".into()));
    }
    if n == 0 || p == 0 || m == 0 {
        return Err(Error::InvalidArgument("n, p, m must be positive".into()));
    }
    let mf = m as f64;
    let log_term = (6.0 * mf * mf).ln() + tau * (p as f64).ln();
    Ok(9.0 / 2f64.sqrt() / gamma
        * (kappa_sigma * kappa_gamma * kappa_gamma + kappa_gamma)
        * mf.powf(2.5)
        * d as f64
        * (log_term / n as f64).sqrt())
}
