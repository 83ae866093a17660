use crate::error::{Error, Result};

/// Per-node support sizes. Node `i` takes values in `{0, ..., m_i}` and
/// contributes an `m_i`-dimensional block (indicators of levels `1..=m_i`)
/// to every block matrix built on this scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeScheme {
    levels: Vec<usize>,
    offsets: Vec<usize>,
}

impl NodeScheme {
    /// `levels[i]` is `m_i`; the support of node `i` is `{0, ..., m_i}`.
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("scheme needs at least one node".into()));
        }
        if let Some(i) = levels.iter().position(|&m| m == 0) {
            return Err(Error::InvalidArgument(format!("node {i} has m_i = 0; need m_i >= 1")));
        }
        let mut offsets = Vec::with_capacity(levels.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &m in &levels {
            acc += m;
            offsets.push(acc);
        }
        Ok(NodeScheme { levels, offsets })
    }

    /// All-binary scheme: p nodes with values in {0, 1}.
    pub fn binary(p: usize) -> Result<Self> {
        NodeScheme::new(vec![1; p])
    }

    pub fn p(&self) -> usize {
        self.levels.len()
    }

    /// Block size of node `i` (`m_i`).
    pub fn m(&self, i: usize) -> usize {
        self.levels[i]
    }

    /// Number of support points of node `i` (`m_i + 1`).
    pub fn num_levels(&self, i: usize) -> usize {
        self.levels[i] + 1
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    /// Total block dimension `M = sum_i m_i`.
    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Row/column range of node `i`'s block inside an M x M matrix.
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Number of points in the full product support, or None on overflow.
    pub fn support_size(&self) -> Option<usize> {
        self.levels.iter().try_fold(1usize, |acc, &m| acc.checked_mul(m + 1))
    }

    pub fn check_node(&self, i: usize) -> Result<()> {
        if i >= self.p() {
            return Err(Error::InvalidArgument(format!(
                "node index {i} out of range for p = {}",
                self.p()
            )));
        }
        Ok(())
    }
}

/// An n x p matrix of integer-coded observations tied to a `NodeScheme`.
/// Entry (k, i) lies in `{0, ..., m_i}`. Original labels (e.g. -1/+1 coded
/// to 0/1) can be carried along as a per-node label map.
#[derive(Debug, Clone)]
pub struct Dataset {
    scheme: NodeScheme,
    n: usize,
    values: Vec<u32>,
    labels: Option<Vec<Vec<String>>>,
}

impl Dataset {
    /// `values` is row-major with `n * p` entries.
    pub fn new(scheme: NodeScheme, values: Vec<u32>, labels: Option<Vec<Vec<String>>>) -> Result<Self> {
        let p = scheme.p();
        if values.len() % p != 0 {
            return Err(Error::Data(format!(
                "value buffer length {} is not a multiple of p = {p}",
                values.len()
            )));
        }
        let n = values.len() / p;
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 rows, got {n}")));
        }
        for (k, row) in values.chunks(p).enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if v as usize > scheme.m(i) {
                    return Err(Error::Data(format!(
                        "row {k}, node {i}: value {v} outside support 0..={}",
                        scheme.m(i)
                    )));
                }
            }
        }
        if let Some(ref l) = labels {
            if l.len() != p {
                return Err(Error::Data("label map must cover every node".into()));
            }
            for (i, li) in l.iter().enumerate() {
                if li.len() != scheme.num_levels(i) {
                    return Err(Error::Data(format!(
                        "node {i}: label map has {} entries, support has {}",
                        li.len(),
                        scheme.num_levels(i)
                    )));
                }
            }
        }
        Ok(Dataset { scheme, n, values, labels })
    }

    pub fn scheme(&self) -> &NodeScheme {
        &self.scheme
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.scheme.p()
    }

    pub fn get(&self, row: usize, node: usize) -> u32 {
        self.values[row * self.p() + node]
    }

    pub fn row(&self, row: usize) -> &[u32] {
        let p = self.p();
        &self.values[row * p..(row + 1) * p]
    }

    pub fn labels(&self) -> Option<&[Vec<String>]> {
        self.labels.as_deref()
    }

    /// New dataset holding the given rows (repeats allowed, e.g. bootstrap).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let p = self.p();
        let mut values = Vec::with_capacity(rows.len() * p);
        for &r in rows {
            if r >= self.n {
                return Err(Error::InvalidArgument(format!("row index {r} out of range")));
            }
            values.extend_from_slice(self.row(r));
        }
        Dataset::new(self.scheme.clone(), values, self.labels.clone())
    }

    /// First node/level whose indicator is constant over the rows
    /// (level never attained or attained by every row).
    pub fn degenerate_indicator(&self) -> Option<(usize, usize)> {
        for i in 0..self.p() {
            let mut counts = vec![0usize; self.scheme.num_levels(i)];
            for k in 0..self.n {
                counts[self.get(k, i) as usize] += 1;
            }
            for l in 1..=self.scheme.m(i) {
                if counts[l] == 0 || counts[l] == self.n {
                    return Some((i, l));
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_basics() {
        let s = NodeScheme::new(vec![2, 1, 3]).unwrap();
        assert_eq!(s.p(), 3);
        assert_eq!(s.total_dim(), 6);
        assert_eq!(s.block_range(0), 0..2);
        assert_eq!(s.block_range(2), 3..6);
        assert_eq!(s.support_size(), Some(3 * 2 * 4));
    }

    #[test]
    fn scheme_rejects_bad_input() {
        assert!(NodeScheme::new(vec![]).is_err());
        assert!(NodeScheme::new(vec![1, 0]).is_err());
    }

    #[test]
    fn dataset_validates_entries() {
        let s = NodeScheme::binary(2).unwrap();
        assert!(Dataset::new(s.clone(), vec![0, 1, 1, 0], None).is_ok());
        assert!(Dataset::new(s.clone(), vec![0, 2, 1, 0], None).is_err());
        assert!(Dataset::new(s, vec![0, 1], None).is_err()); // n = 1
    }

    #[test]
    fn degenerate_indicator_detection() {
        let s = NodeScheme::binary(2).unwrap();
        let d = Dataset::new(s.clone(), vec![0, 1, 0, 0, 0, 1], None).unwrap();
        assert_eq!(d.degenerate_indicator(), Some((0, 1)));
        let d2 = Dataset::new(s, vec![0, 1, 1, 0], None).unwrap();
        assert_eq!(d2.degenerate_indicator(), None);
    }
}
