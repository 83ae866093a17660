//! Data generators for the benchmark experiments: Ising samplers (exact
//! enumeration and Gibbs) and the sign-of-Gaussian construction whose
//! precision operator pattern matches a prescribed pattern matrix.
//!
//! All sampling uses ChaCha8 streams seeded from a 64-bit seed, so every
//! generator is reproducible bit-for-bit across platforms. Parallel
//! replications should derive seeds as `seed + replicate_index`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::pmf::{ising_pmf, IsingParams};
use crate::scheme::{Dataset, NodeScheme};

/// Largest p for exact enumeration sampling.
pub const EXACT_SAMPLER_CAP: usize = 20;

pub const DEFAULT_BURN_IN: usize = 1000;
pub const DEFAULT_THINNING: usize = 10;

/// How to draw from an Ising law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMethod {
    /// Inverse-CDF draws from the enumerated pmf (p <= 20).
    Exact,
    /// Systematic-scan single-site Gibbs updates; counts are in full sweeps.
    Gibbs { burn_in: usize, thinning: usize },
}

impl SampleMethod {
    pub fn default_gibbs() -> Self {
        SampleMethod::Gibbs { burn_in: DEFAULT_BURN_IN, thinning: DEFAULT_THINNING }
    }
}

#[derive(Debug, Clone)]
pub enum PatternKind {
    Ising(IsingParams),
    SignGaussian { a: DMatrix<f64> },
}

/// A benchmark model: its parameters and the implied truth graph.
#[derive(Debug, Clone)]
pub struct PatternSpec {
    pub model_id: u8,
    pub p: usize,
    pub kind: PatternKind,
    pub truth: Graph,
}

impl PatternSpec {
    pub fn ising(model_id: u8, params: IsingParams) -> Self {
        let truth = params.graph();
        PatternSpec { model_id, p: params.p(), kind: PatternKind::Ising(params), truth }
    }

    /// Truth edges are the nonzero off-diagonal pattern of `a`.
    pub fn sign_gaussian(model_id: u8, a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidArgument("pattern matrix must be square".into()));
        }
        let p = a.nrows();
        let mut truth = Graph::new(p);
        for i in 0..p {
            for j in (i + 1)..p {
                if a[(i, j)] != 0.0 {
                    truth.add_edge(i, j)?;
                }
            }
        }
        Ok(PatternSpec { model_id, p, kind: PatternKind::SignGaussian { a }, truth })
    }
}

/// Parameter matrices and truth graphs of the four benchmark models.
///
/// 1: ring Ising, couplings 0.3 between chain and wrap-around neighbors.
/// 2: chain-plus-hub Ising on p = 50q nodes (q >= 2).
/// 3: sign-Gaussian with banded pattern 0.25 (lag 1) and 0.15 (lag 2).
/// 4: sign-Gaussian with geometric band 0.24 * 0.75^(lag-1) up to lag 3.
pub fn pattern(model_id: u8, p: usize) -> Result<PatternSpec> {
    match model_id {
        1 => {
            if p < 3 {
                return Err(Error::InvalidArgument("model 1 needs p >= 3".into()));
            }
            let mut beta = DMatrix::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    if i != j {
                        let lag = i.abs_diff(j);
                        beta[(i, j)] = 0.3 * f64::from(u8::from(lag == 1))
                            + 0.3 * f64::from(u8::from(lag == p - 1));
                    }
                }
            }
            Ok(PatternSpec::ising(1, IsingParams::new(beta)?))
        }
        2 => {
            if p % 50 != 0 || p / 50 < 2 {
                return Err(Error::InvalidArgument(format!(
                    "model 2 needs p = 50q with q >= 2, got p = {p}"
                )));
            }
            let q = p / 50;
            // 1-based member set {1, q, 2q, ..., 50q}
            let in_d = |node: usize| node == 1 || node % q == 0;
            let mut beta = DMatrix::zeros(p, p);
            for i in 1..p {
                // chain edge (i, i+1) unless i is a hub anchor
                if !in_d(i) {
                    beta[(i - 1, i)] = 0.3;
                    beta[(i, i - 1)] = 0.3;
                }
            }
            for j in 2..=p {
                if in_d(j) || in_d(j - 1) {
                    beta[(0, j - 1)] = 0.2;
                    beta[(j - 1, 0)] = 0.2;
                }
            }
            Ok(PatternSpec::ising(2, IsingParams::new(beta)?))
        }
        3 => {
            if p < 2 {
                return Err(Error::InvalidArgument("model 3 needs p >= 2".into()));
            }
            let a = DMatrix::from_fn(p, p, |i, j| {
                let lag = i.abs_diff(j);
                match lag {
                    0 => 1.0,
                    1 => 0.25,
                    2 => 0.15,
                    _ => 0.0,
                }
            });
            PatternSpec::sign_gaussian(3, a)
        }
        4 => {
            if p < 2 {
                return Err(Error::InvalidArgument("model 4 needs p >= 2".into()));
            }
            let a = DMatrix::from_fn(p, p, |i, j| {
                let lag = i.abs_diff(j);
                if lag == 0 {
                    1.0
                } else if (1..=3).contains(&lag) {
                    0.24 * 0.75f64.powi(lag as i32 - 1)
                } else {
                    0.0
                }
            });
            PatternSpec::sign_gaussian(4, a)
        }
        other => Err(Error::InvalidArgument(format!("unknown model id {other}"))),
    }
}

fn spin_labels(p: usize) -> Vec<Vec<String>> {
    vec![vec!["-1".to_string(), "+1".to_string()]; p]
}

/// n i.i.d.-style draws from an Ising law, coded {0,1} with labels -1/+1.
pub fn sample_ising(
    params: &IsingParams,
    n: usize,
    seed: u64,
    method: SampleMethod,
) -> Result<Dataset> {
    let p = params.p();
    if n < 2 {
        return Err(Error::InvalidArgument("need n >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = match method {
        SampleMethod::Exact => {
            if p > EXACT_SAMPLER_CAP {
                return Err(Error::CapExceeded(format!(
                    "exact sampling enumerates 2^{p} states; cap is p <= {EXACT_SAMPLER_CAP}"
                )));
            }
            let pmf = ising_pmf(params)?;
            let mut cumulative = Vec::with_capacity(pmf.probs().len());
            let mut acc = 0.0;
            for &q in pmf.probs() {
                acc += q;
                cumulative.push(acc);
            }
            let mut values = Vec::with_capacity(n * p);
            for _ in 0..n {
                let u: f64 = rng.random();
                let idx = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
                for k in 0..p {
                    values.push(((idx >> (p - 1 - k)) & 1) as u32);
                }
            }
            values
        }
        SampleMethod::Gibbs { burn_in, thinning } => {
            if thinning == 0 {
                return Err(Error::InvalidArgument("thinning must be at least 1".into()));
            }
            let beta = params.beta();
            let neighbors: Vec<Vec<(usize, f64)>> = (0..p)
                .map(|i| {
                    (0..p)
                        .filter(|&k| k != i && beta[(i, k)] != 0.0)
                        .map(|k| (k, beta[(i, k)]))
                        .collect()
                })
                .collect();
            let mut spins: Vec<f64> =
                (0..p).map(|_| if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 }).collect();
            let sweep = |spins: &mut Vec<f64>, rng: &mut ChaCha8Rng| {
                for i in 0..p {
                    let mut h = beta[(i, i)];
                    for &(k, w) in &neighbors[i] {
                        h += w * spins[k];
                    }
                    let p_plus = 1.0 / (1.0 + (-2.0 * h).exp());
                    spins[i] = if rng.random::<f64>() < p_plus { 1.0 } else { -1.0 };
                }
            };
            for _ in 0..burn_in {
                sweep(&mut spins, &mut rng);
            }
            let mut values = Vec::with_capacity(n * p);
            for _ in 0..n {
                for _ in 0..thinning {
                    sweep(&mut spins, &mut rng);
                }
                values.extend(spins.iter().map(|&s| u32::from(s > 0.0)));
            }
            values
        }
    };
    Dataset::new(NodeScheme::binary(p)?, values, Some(spin_labels(p)))
}

/// Binary draws as signs of a Gaussian vector whose correlation is shaped so
/// that the precision-operator pattern equals the pattern matrix: invert the
/// pattern, rescale to unit diagonal, pass through the entrywise sine map,
/// factor, and take signs (sign(0) is +1).
pub fn sample_sign_gaussian(spec: &PatternSpec, n: usize, seed: u64) -> Result<Dataset> {
    let a = match &spec.kind {
        PatternKind::SignGaussian { a } => a,
        PatternKind::Ising(_) => {
            return Err(Error::InvalidArgument(
                "sign-Gaussian sampling needs a pattern-matrix model".into(),
            ));
        }
    };
    if n < 2 {
        return Err(Error::InvalidArgument("need n >= 2".into()));
    }
    let sigma_prime = sign_gaussian_correlation(a)?;
    let p = spec.p;
    let chol = nalgebra::Cholesky::new(sigma_prime.clone()).ok_or_else(|| {
        Error::NotPositiveDefinite(format!(
            "sine-transformed correlation; min eigenvalue {:.6e}",
            min_eigenvalue(&sigma_prime)
        ))
    })?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * p);
    for _ in 0..n {
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = &l * z;
        values.extend(w.iter().map(|&x| u32::from(x >= 0.0)));
    }
    Dataset::new(NodeScheme::binary(p)?, values, Some(spin_labels(p)))
}

/// The latent Gaussian correlation used by `sample_sign_gaussian`:
/// sin((pi/2) * unit-diagonal rescaling of the pattern inverse).
pub fn sign_gaussian_correlation(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let chol_a = nalgebra::Cholesky::new(a.clone()).ok_or_else(|| {
        Error::NotPositiveDefinite(format!(
            "pattern matrix; min eigenvalue {:.6e}",
            min_eigenvalue(a)
        ))
    })?;
    let b = chol_a.inverse();
    let scale = DVector::from_fn(p, |i, _| b[(i, i)].sqrt().recip());
    let sigma = DMatrix::from_fn(p, p, |i, j| b[(i, j)] * scale[i] * scale[j]);
    let sigma_prime = sigma.map(|x| (std::f64::consts::FRAC_PI_2 * x).sin());
    Ok(sigma_prime)
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
