//! File formats: dataset CSV with a label-map sidecar, edge-list TSV
//! (1-indexed), pmf tables, parameter CSV, and JSON report blocks. All
//! floating-point output is printed with 12 significant digits so repeated
//! runs are byte-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::graph::Graph;
use crate::pmf::JointPMF;
use crate::population::IrrepReport;
use crate::scheme::{Dataset, NodeScheme};
use crate::tuning::{CVReport, RocPoint, StabilityReport};

/// 12 significant digits, scientific.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.11e}")
}

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}:{line}: {msg}", path.display()))
}

pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let p = data.p();
    let header: Vec<String> = (1..=p).map(|i| format!("X{i}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for k in 0..data.n() {
        let row: Vec<String> = data.row(k).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    if let Some(labels) = data.labels() {
        let sidecar = sidecar_path(path);
        let mut w = BufWriter::new(File::create(sidecar)?);
        for (i, per_node) in labels.iter().enumerate() {
            for (code, label) in per_node.iter().enumerate() {
                writeln!(w, "X{}\t{code}\t{label}", i + 1)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".labels");
    std::path::PathBuf::from(os)
}

/// Reads a dataset CSV. The scheme comes from the label sidecar when one is
/// present; otherwise each node's m_i is inferred as the largest code seen
/// (at least 1).
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let f = BufReader::new(File::open(path)?);
    let mut lines = f.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))??;
    let p = header.split(',').count();
    if p == 0 {
        return Err(Error::Data(format!("{}: empty header", path.display())));
    }
    let mut values: Vec<u32> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p {
            return Err(parse_err(path, lineno + 2, format!("expected {p} fields, got {}", fields.len())));
        }
        for field in fields {
            let v: u32 = field
                .trim()
                .parse()
                .map_err(|e| parse_err(path, lineno + 2, format!("bad integer {field:?}: {e}")))?;
            values.push(v);
        }
    }
    let sidecar = sidecar_path(path);
    let (scheme, labels) = if sidecar.exists() {
        let labels = read_label_sidecar(&sidecar, p)?;
        let levels: Vec<usize> = labels.iter().map(|l| l.len().saturating_sub(1).max(1)).collect();
        (NodeScheme::new(levels)?, Some(labels))
    } else {
        let mut levels = vec![1usize; p];
        for (idx, &v) in values.iter().enumerate() {
            let node = idx % p;
            levels[node] = levels[node].max(v as usize);
        }
        (NodeScheme::new(levels)?, None)
    };
    Dataset::new(scheme, values, labels)
}

fn read_label_sidecar(path: &Path, p: usize) -> Result<Vec<Vec<String>>> {
    let f = BufReader::new(File::open(path)?);
    let mut labels: Vec<Vec<(usize, String)>> = vec![Vec::new(); p];
    for (lineno, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, lineno + 1, "expected `name<TAB>code<TAB>label`"));
        }
        let name = fields[0].trim_start_matches('X');
        let node: usize = name
            .parse::<usize>()
            .map_err(|_| parse_err(path, lineno + 1, format!("bad node name {:?}", fields[0])))?
            .checked_sub(1)
            .ok_or_else(|| parse_err(path, lineno + 1, "node names are 1-indexed"))?;
        if node >= p {
            return Err(parse_err(path, lineno + 1, format!("node {} out of range", fields[0])));
        }
        let code: usize = fields[1]
            .parse()
            .map_err(|e| parse_err(path, lineno + 1, format!("bad code: {e}")))?;
        labels[node].push((code, fields[2].to_string()));
    }
    let mut out = Vec::with_capacity(p);
    for (i, mut per_node) in labels.into_iter().enumerate() {
        per_node.sort_by_key(|&(c, _)| c);
        for (want, &(code, _)) in per_node.iter().enumerate() {
            if code != want {
                return Err(Error::Data(format!(
                    "{}: node {} has non-contiguous codes",
                    path.display(),
                    i + 1
                )));
            }
        }
        out.push(per_node.into_iter().map(|(_, l)| l).collect());
    }
    Ok(out)
}

/// Edge list, one `i<TAB>j` per line with i < j, 1-indexed.
pub fn write_graph_tsv(path: &Path, g: &Graph) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, j) in g.edges() {
        writeln!(w, "{}\t{}", i + 1, j + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an edge-list TSV. When `p` is None the node count is inferred as
/// the largest index mentioned.
pub fn read_graph_tsv(path: &Path, p: Option<usize>) -> Result<Graph> {
    let f = BufReader::new(File::open(path)?);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut max_node = 0usize;
    for (lineno, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(path, lineno + 1, "expected `i<TAB>j`"));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|e| parse_err(path, lineno + 1, format!("bad index: {e}")))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|e| parse_err(path, lineno + 1, format!("bad index: {e}")))?;
        if i == 0 || j == 0 {
            return Err(parse_err(path, lineno + 1, "indices are 1-based"));
        }
        max_node = max_node.max(i).max(j);
        edges.push((i - 1, j - 1));
    }
    let p = p.unwrap_or(max_node);
    Graph::with_edges(p, edges)
}

/// Pmf table: header `p, m_1 .. m_p`, then `x_1 .. x_p prob` lines.
/// Omitted support points carry zero probability.
pub fn write_pmf(path: &Path, pmf: &JointPMF) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let ms: Vec<String> = pmf.scheme().levels().iter().map(|m| m.to_string()).collect();
    writeln!(w, "{}, {}", pmf.p(), ms.join(" "))?;
    let mut err = None;
    pmf.for_each_point(|point, prob| {
        if prob > 0.0 && err.is_none() {
            let coords: Vec<String> = point.iter().map(|x| x.to_string()).collect();
            if let Err(e) = writeln!(w, "{} {}", coords.join(" "), fmt_float(prob)) {
                err = Some(e);
            }
        }
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    w.flush()?;
    Ok(())
}

pub fn read_pmf(path: &Path) -> Result<JointPMF> {
    let f = BufReader::new(File::open(path)?);
    let mut lines = f.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))??;
    let (p_str, ms_str) = header
        .split_once(',')
        .ok_or_else(|| parse_err(path, 1, "expected header `p, m_1 .. m_p`"))?;
    let p: usize = p_str
        .trim()
        .parse()
        .map_err(|e| parse_err(path, 1, format!("bad node count: {e}")))?;
    let levels: Vec<usize> = ms_str
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(path, 1, format!("bad support size: {e}")))?;
    if levels.len() != p {
        return Err(parse_err(path, 1, format!("expected {p} support sizes, got {}", levels.len())));
    }
    let scheme = NodeScheme::new(levels)?;
    let size = scheme
        .support_size()
        .ok_or_else(|| Error::CapExceeded("support size overflows".into()))?;
    if size > crate::pmf::DEFAULT_SUPPORT_CAP {
        return Err(Error::CapExceeded(format!("support has {size} points")));
    }
    let mut probs = vec![0.0f64; size];
    let mut strides = vec![1usize; p];
    for i in (0..p.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * scheme.num_levels(i + 1);
    }
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != p + 1 {
            return Err(parse_err(path, lineno + 2, format!("expected {} fields", p + 1)));
        }
        let mut point = Vec::with_capacity(p);
        for (i, field) in fields[..p].iter().enumerate() {
            let v: u32 = field
                .parse()
                .map_err(|e| parse_err(path, lineno + 2, format!("bad coordinate: {e}")))?;
            if v as usize > scheme.m(i) {
                return Err(parse_err(path, lineno + 2, format!("coordinate {v} out of support")));
            }
            point.push(v);
        }
        let prob: f64 = fields[p]
            .parse()
            .map_err(|e| parse_err(path, lineno + 2, format!("bad probability: {e}")))?;
        let idx: usize = point.iter().zip(&strides).map(|(&x, &s)| x as usize * s).sum();
        probs[idx] = prob;
    }
    JointPMF::new(scheme, probs)
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| fmt_float(m[(r, c)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let f = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, lineno + 1, format!("bad number: {e}")))?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(path, lineno + 1, "ragged rows"));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: empty matrix", path.display())));
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(nr, nc, |r, c| rows[r][c]))
}

pub fn write_roc_csv(path: &Path, points: &[RocPoint]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "lambda,tpr,fpr")?;
    for pt in points {
        writeln!(w, "{},{},{}", fmt_float(pt.score), fmt_float(pt.tpr), fmt_float(pt.fpr))?;
    }
    w.flush()?;
    Ok(())
}

fn json_bool(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn json_array(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|&v| fmt_float(v)).collect();
    format!("[{}]", items.join(", "))
}

pub fn write_irrep_report(path: &Path, rep: &IrrepReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{{")?;
    writeln!(w, "  \"gamma\": {},", fmt_float(rep.gamma))?;
    writeln!(w, "  \"kappa_gamma\": {},", fmt_float(rep.kappa_gamma))?;
    writeln!(w, "  \"kappa_sigma\": {},", fmt_float(rep.kappa_sigma))?;
    writeln!(w, "  \"d\": {},", rep.d)?;
    writeln!(w, "  \"holds\": {}", json_bool(rep.holds))?;
    writeln!(w, "}}")?;
    w.flush()?;
    Ok(())
}

pub fn write_cv_report(path: &Path, rep: &CVReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{{")?;
    writeln!(w, "  \"folds\": {},", rep.folds)?;
    writeln!(w, "  \"chosen_lambda\": {},", fmt_float(rep.chosen_lambda))?;
    writeln!(w, "  \"chosen_index\": {},", rep.chosen_index)?;
    writeln!(w, "  \"lambda\": {},", json_array(rep.grid.values()))?;
    writeln!(w, "  \"mean_val_loss\": {},", json_array(&rep.mean_val_loss))?;
    writeln!(w, "  \"se\": {}", json_array(&rep.se))?;
    writeln!(w, "}}")?;
    w.flush()?;
    Ok(())
}

pub fn write_stability_report(path: &Path, rep: &StabilityReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{{")?;
    writeln!(w, "  \"bootstrap\": {},", rep.b)?;
    writeln!(w, "  \"lambda\": {},", fmt_float(rep.lambda))?;
    writeln!(w, "  \"cutoff\": {},", fmt_float(rep.cutoff))?;
    writeln!(w, "  \"skipped\": {},", rep.skipped)?;
    writeln!(w, "  \"stable_edges\": {}", rep.stable_edges.edge_count())?;
    writeln!(w, "}}")?;
    w.flush()?;
    Ok(())
}

pub fn write_fit_diagnostics(path: &Path, fit: &FitResult) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{{")?;
    writeln!(w, "  \"lambda\": {},", fmt_float(fit.lambda))?;
    writeln!(w, "  \"iterations\": {},", fit.iterations)?;
    writeln!(w, "  \"primal_residual\": {},", fmt_float(fit.primal_residual))?;
    writeln!(w, "  \"dual_residual\": {},", fmt_float(fit.dual_residual))?;
    writeln!(w, "  \"objective\": {},", fmt_float(fit.objective))?;
    writeln!(w, "  \"kkt_violation\": {},", fmt_float(fit.kkt_violation))?;
    writeln!(w, "  \"edges\": {},", fit.edges.edge_count())?;
    writeln!(w, "  \"converged\": {}", json_bool(fit.converged))?;
    writeln!(w, "}}")?;
    w.flush()?;
    Ok(())
}
