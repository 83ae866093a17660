use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scheme::{Dataset, NodeScheme};

/// Default cap on the number of product-support points a pmf may enumerate.
pub const DEFAULT_SUPPORT_CAP: usize = 1 << 24;

/// Explicit probability table over the full product support of a scheme.
/// Point (x_1, ..., x_p) lives at the mixed-radix index with x_1 slowest.
#[derive(Debug, Clone)]
pub struct JointPMF {
    scheme: NodeScheme,
    probs: Vec<f64>,
    strides: Vec<usize>,
}

impl JointPMF {
    pub fn new(scheme: NodeScheme, probs: Vec<f64>) -> Result<Self> {
        Self::with_cap(scheme, probs, DEFAULT_SUPPORT_CAP)
    }

    pub fn with_cap(scheme: NodeScheme, probs: Vec<f64>, cap: usize) -> Result<Self> {
        let size = scheme
            .support_size()
            .ok_or_else(|| Error::CapExceeded("support size overflows usize".into()))?;
        if size > cap {
            return Err(Error::CapExceeded(format!(
                "support has {size} points, cap is {cap}"
            )));
        }
        if probs.len() != size {
            return Err(Error::Data(format!(
                "table has {} entries, support has {size} points",
                probs.len()
            )));
        }
        if probs.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::Data("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Data(format!("probabilities sum to {total}, not 1")));
        }
        let strides = strides_for(&scheme);
        let pmf = JointPMF { scheme, probs, strides };
        // Assumption-1 style non-degeneracy: every node attains at least two
        // values with positive probability.
        for i in 0..pmf.scheme.p() {
            let attained = pmf.marginal(i).iter().filter(|&&q| q > 0.0).count();
            if attained < 2 {
                return Err(Error::DegenerateNode {
                    node: i,
                    detail: format!("only {attained} support value(s) with positive probability"),
                });
            }
        }
        Ok(pmf)
    }

    /// Empirical distribution of a dataset (each row mass 1/n).
    pub fn empirical(data: &Dataset) -> Result<Self> {
        let scheme = data.scheme().clone();
        let size = scheme
            .support_size()
            .ok_or_else(|| Error::CapExceeded("support size overflows usize".into()))?;
        if size > DEFAULT_SUPPORT_CAP {
            return Err(Error::CapExceeded(format!(
                "support has {size} points, cap is {DEFAULT_SUPPORT_CAP}"
            )));
        }
        let strides = strides_for(&scheme);
        let mut probs = vec![0.0; size];
        let w = 1.0 / data.n() as f64;
        for k in 0..data.n() {
            let idx: usize = data
                .row(k)
                .iter()
                .zip(&strides)
                .map(|(&x, &s)| x as usize * s)
                .sum();
            probs[idx] += w;
        }
        JointPMF::new(scheme, probs)
    }

    pub fn scheme(&self) -> &NodeScheme {
        &self.scheme
    }

    pub fn p(&self) -> usize {
        self.scheme.p()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn index_of(&self, point: &[u32]) -> usize {
        point
            .iter()
            .zip(&self.strides)
            .map(|(&x, &s)| x as usize * s)
            .sum()
    }

    pub fn prob(&self, point: &[u32]) -> f64 {
        self.probs[self.index_of(point)]
    }

    /// Decode a table index into the point buffer.
    pub fn decode(&self, mut idx: usize, point: &mut [u32]) {
        for i in 0..self.scheme.p() {
            point[i] = (idx / self.strides[i]) as u32;
            idx %= self.strides[i];
        }
    }

    /// Calls `f(point, prob)` for every support point with its probability.
    pub fn for_each_point<F: FnMut(&[u32], f64)>(&self, mut f: F) {
        let p = self.scheme.p();
        let mut point = vec![0u32; p];
        for &pr in &self.probs {
            f(&point, pr);
            // odometer increment, last coordinate fastest
            for i in (0..p).rev() {
                if (point[i] as usize) < self.scheme.m(i) {
                    point[i] += 1;
                    break;
                }
                point[i] = 0;
            }
        }
    }

    /// Marginal distribution of node `i` over `{0, ..., m_i}`.
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.scheme.num_levels(i)];
        let stride = self.strides[i];
        let levels = self.scheme.num_levels(i);
        for (idx, &pr) in self.probs.iter().enumerate() {
            out[(idx / stride) % levels] += pr;
        }
        out
    }

    /// Joint distribution of (X^i, X^j) as an (m_i + 1) x (m_j + 1) table.
    pub fn pairwise_marginal(&self, i: usize, j: usize) -> Result<DMatrix<f64>> {
        self.scheme.check_node(i)?;
        self.scheme.check_node(j)?;
        if i == j {
            return Err(Error::InvalidArgument("pairwise marginal needs i != j".into()));
        }
        let (si, li) = (self.strides[i], self.scheme.num_levels(i));
        let (sj, lj) = (self.strides[j], self.scheme.num_levels(j));
        let mut out = DMatrix::zeros(li, lj);
        for (idx, &pr) in self.probs.iter().enumerate() {
            out[((idx / si) % li, (idx / sj) % lj)] += pr;
        }
        Ok(out)
    }
}

fn strides_for(scheme: &NodeScheme) -> Vec<usize> {
    let p = scheme.p();
    let mut strides = vec![1usize; p];
    for i in (0..p - 1).rev() {
        strides[i] = strides[i + 1] * scheme.num_levels(i + 1);
    }
    strides
}

/// Symmetric interaction matrix of an Ising model; diagonal entries are the
/// external fields.
#[derive(Debug, Clone)]
pub struct IsingParams {
    beta: DMatrix<f64>,
}

impl IsingParams {
    pub fn new(beta: DMatrix<f64>) -> Result<Self> {
        if beta.nrows() != beta.ncols() {
            return Err(Error::InvalidArgument("beta must be square".into()));
        }
        if beta.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("beta has non-finite entries".into()));
        }
        let scale = beta.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        for i in 0..beta.nrows() {
            for j in (i + 1)..beta.ncols() {
                if (beta[(i, j)] - beta[(j, i)]).abs() > 1e-12 * scale.max(1.0) {
                    return Err(Error::InvalidArgument("beta must be symmetric".into()));
                }
            }
        }
        Ok(IsingParams { beta })
    }

    pub fn p(&self) -> usize {
        self.beta.nrows()
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    /// Graph of nonzero off-diagonal couplings.
    pub fn graph(&self) -> Graph {
        let mut g = Graph::new(self.p());
        for i in 0..self.p() {
            for j in (i + 1)..self.p() {
                if self.beta[(i, j)] != 0.0 {
                    g.add_edge(i, j).unwrap();
                }
            }
        }
        g
    }
}

/// Exact Ising pmf over {-1,+1}^p coded to {0,1} (code 0 is -1, code 1 is +1),
/// normalized by explicit summation of the partition function.
pub fn ising_pmf(params: &IsingParams) -> Result<JointPMF> {
    let p = params.p();
    if p == 0 {
        return Err(Error::InvalidArgument("empty model".into()));
    }
    let size = 1usize
        .checked_shl(p as u32)
        .filter(|&s| s <= DEFAULT_SUPPORT_CAP)
        .ok_or_else(|| Error::CapExceeded(format!("2^{p} support points exceed the cap")))?;
    let beta = params.beta();
    let mut weights = Vec::with_capacity(size);
    let mut spin = vec![-1.0f64; p];
    for idx in 0..size {
        // bit k of idx is the code of node k; x_1 is the slowest coordinate
        for (k, s) in spin.iter_mut().enumerate() {
            let bit = (idx >> (p - 1 - k)) & 1;
            *s = if bit == 1 { 1.0 } else { -1.0 };
        }
        let mut e = 0.0;
        for i in 0..p {
            e += beta[(i, i)] * spin[i];
            for j in (i + 1)..p {
                e += beta[(i, j)] * spin[i] * spin[j];
            }
        }
        weights.push(e.exp());
    }
    let z: f64 = weights.iter().sum();
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::Data(format!("partition function is {z}")));
    }
    for w in &mut weights {
        *w /= z;
    }
    let scheme = NodeScheme::binary(p)?;
    JointPMF::new(scheme, weights)
}

/// Product variables appended to a binary base scheme: each extra coordinate
/// is the product of an odd-cardinality (>= 3) subset of the separator R.
#[derive(Debug, Clone)]
pub struct AugmentedScheme {
    base: NodeScheme,
    extras: Vec<Vec<usize>>,
}

impl AugmentedScheme {
    pub fn base(&self) -> &NodeScheme {
        &self.base
    }

    /// Index subsets defining the product variables, in deterministic order
    /// (by cardinality, then lexicographic).
    pub fn extras(&self) -> &[Vec<usize>] {
        &self.extras
    }

    pub fn augmented_p(&self) -> usize {
        self.base.p() + self.extras.len()
    }
}

/// Pushforward of a binary pmf under appending one product coordinate per
/// odd-cardinality (>= 3) subset of `r`. Extras take values in {-1,+1} coded
/// {0,1} like the base coordinates.
pub fn augment(pmf: &JointPMF, r: &[usize]) -> Result<(AugmentedScheme, JointPMF)> {
    let p = pmf.p();
    if pmf.scheme().levels().iter().any(|&m| m != 1) {
        return Err(Error::InvalidArgument("augmentation requires a binary scheme".into()));
    }
    let mut r_sorted = r.to_vec();
    r_sorted.sort_unstable();
    r_sorted.dedup();
    if r_sorted.len() != r.len() {
        return Err(Error::InvalidArgument("separator set has duplicates".into()));
    }
    if r_sorted.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "separator set needs at least 3 nodes, got {}",
            r_sorted.len()
        )));
    }
    if let Some(&k) = r_sorted.iter().find(|&&k| k >= p) {
        return Err(Error::InvalidArgument(format!("separator node {k} out of range")));
    }

    let extras = odd_subsets(&r_sorted);
    let q = p + extras.len();
    let new_scheme = NodeScheme::binary(q)?;
    let size = new_scheme
        .support_size()
        .filter(|&s| s <= DEFAULT_SUPPORT_CAP)
        .ok_or_else(|| Error::CapExceeded("augmented support exceeds the cap".into()))?;

    let mut probs = vec![0.0; size];
    pmf.for_each_point(|point, pr| {
        if pr == 0.0 {
            return;
        }
        let mut idx = 0usize;
        for &x in point {
            idx = (idx << 1) | x as usize;
        }
        for subset in &extras {
            // product of +-1 spins is +1 iff an even number of -1 factors
            let minus_ones = subset.iter().filter(|&&k| point[k] == 0).count();
            idx = (idx << 1) | usize::from(minus_ones % 2 == 0);
        }
        probs[idx] += pr;
    });

    let aug = AugmentedScheme { base: pmf.scheme().clone(), extras };
    let new_pmf = JointPMF::new(new_scheme, probs)?;
    Ok((aug, new_pmf))
}

/// All subsets of `r` with odd cardinality >= 3, ordered by size then
/// lexicographically.
fn odd_subsets(r: &[usize]) -> Vec<Vec<usize>> {
    let n = r.len();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for mask in 1u64..(1u64 << n) {
        let c = mask.count_ones();
        if c >= 3 && c % 2 == 1 {
            let subset: Vec<usize> =
                (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| r[k]).collect();
            out.push(subset);
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}
