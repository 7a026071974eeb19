//! Orthogonal alignment of embedding spaces.
//!
//! The projection from a source space into a target space is the solution of
//! the orthogonal Procrustes problem over a bilingual dictionary: with the
//! paired vectors stacked as rows of `X` (source) and `Y` (target), the
//! orthogonal `W` minimizing `||XW - Y||_F` is `U V^T` for the singular value
//! decomposition `X^T Y = U diag(S) V^T`. The SVD itself is a one-sided
//! Jacobi iteration, which is slow but simple and accurate to near machine
//! precision for the moderate dimensionalities of word embeddings.

use crate::container;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng::XRng;
use crate::tensor::Matrix;
use log::warn;
use rand::Rng;
use rayon::prelude::*;
use std::io::{BufRead, Read, Write};

const XPRJ_MAGIC: &[u8; 4] = b"XPRJ";

/// Maximum number of Jacobi sweeps before declaring non-convergence.
const MAX_SWEEPS: usize = 64;
/// A column pair counts as orthogonal when |a_p . a_q| <= TOL * |a_p| |a_q|.
const JACOBI_TOL: f64 = 1e-14;

/// Result of a singular value decomposition `M = U diag(S) V^T`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    /// Singular values, non-negative and sorted non-increasing.
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    /// `U diag(S) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let d = self.s.len();
        let mut us = self.u.clone();
        for r in 0..d {
            for c in 0..d {
                us.set(r, c, us.get(r, c) * self.s[c]);
            }
        }
        us.matmul_t(&self.v).expect("shapes agree by construction")
    }
}

/// One-sided Jacobi SVD of a square matrix.
///
/// Right Givens rotations orthogonalize the columns of a working copy `A`
/// while accumulating into `V`, so `A = M V` holds throughout; at convergence
/// the column norms are the singular values and the normalized columns form
/// `U`. Exactly-zero columns (rank deficiency) get their `U` columns filled
/// by Gram-Schmidt completion.
#[allow(clippy::needless_range_loop)]
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if m.rows() != m.cols() {
        return Err(Error::Config(format!(
            "svd expects a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::Numeric(
            "svd input contains non-finite values".into(),
        ));
    }
    let d = m.rows();
    if d == 0 {
        return Ok(SvdResult {
            u: Matrix::zeros(0, 0),
            s: Vec::new(),
            v: Matrix::zeros(0, 0),
        });
    }

    // Column-major copies: cols[j] is the j-th column.
    let mut a: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..d).map(|i| m.get(i, j)).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut converged = false;
    let mut worst = 0.0f64;
    for _sweep in 0..MAX_SWEEPS {
        worst = 0.0;
        for p in 0..d.saturating_sub(1) {
            for q in (p + 1)..d {
                let (alpha, beta, gamma) = {
                    let (ap, aq) = (&a[p], &a[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for i in 0..d {
                        alpha += ap[i] * ap[i];
                        beta += aq[i] * aq[i];
                        gamma += ap[i] * aq[i];
                    }
                    (alpha, beta, gamma)
                };
                let scale = (alpha * beta).sqrt();
                if scale == 0.0 || gamma.abs() <= JACOBI_TOL * scale {
                    continue;
                }
                worst = worst.max(gamma.abs() / scale);
                // Rotation angle that zeroes the (p,q) inner product.
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut a, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if worst == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        // One last pass to measure the residual for the error report.
        let residual = max_offdiag(&a, d);
        if residual > 1e-10 {
            return Err(Error::Numeric(format!(
                "jacobi svd did not converge in {MAX_SWEEPS} sweeps (residual {residual:.3e}, last sweep worst {worst:.3e})"
            )));
        }
    }

    // Singular values and U columns, then sort non-increasing.
    let mut order: Vec<usize> = (0..d).collect();
    let norms: Vec<f64> = a
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let mut u = Matrix::zeros(d, d);
    let mut vm = Matrix::zeros(d, d);
    let mut s = Vec::with_capacity(d);
    let mut zero_cols = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        s.push(norms[src]);
        for i in 0..d {
            vm.set(i, dst, v[src][i]);
        }
        if norms[src] > 0.0 {
            for i in 0..d {
                u.set(i, dst, a[src][i] / norms[src]);
            }
        } else {
            zero_cols.push(dst);
        }
    }
    if !zero_cols.is_empty() {
        complete_orthonormal(&mut u, &zero_cols);
    }

    Ok(SvdResult { u, s, v: vm })
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for i in 0..cp.len() {
        let xp = cp[i];
        let xq = cq[i];
        cp[i] = c * xp - s * xq;
        cq[i] = s * xp + c * xq;
    }
}

#[allow(clippy::needless_range_loop)]
fn max_offdiag(a: &[Vec<f64>], d: usize) -> f64 {
    let mut worst = 0.0f64;
    for p in 0..d.saturating_sub(1) {
        for q in (p + 1)..d {
            let mut alpha = 0.0;
            let mut beta = 0.0;
            let mut gamma = 0.0;
            for i in 0..d {
                alpha += a[p][i] * a[p][i];
                beta += a[q][i] * a[q][i];
                gamma += a[p][i] * a[q][i];
            }
            let scale = (alpha * beta).sqrt();
            if scale > 0.0 {
                worst = worst.max(gamma.abs() / scale);
            }
        }
    }
    worst
}

/// Fill the listed columns of `u` with unit vectors orthogonal to all other
/// columns (modified Gram-Schmidt over canonical basis candidates).
#[allow(clippy::needless_range_loop)]
fn complete_orthonormal(u: &mut Matrix, empty_cols: &[usize]) {
    let d = u.rows();
    let mut filled: Vec<usize> = (0..d).filter(|c| !empty_cols.contains(c)).collect();
    for &col in empty_cols {
        'candidates: for basis in 0..d {
            let mut cand = vec![0.0; d];
            cand[basis] = 1.0;
            for &f in &filled {
                let dot: f64 = (0..d).map(|i| cand[i] * u.get(i, f)).sum();
                for (i, c) in cand.iter_mut().enumerate() {
                    *c -= dot * u.get(i, f);
                }
            }
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for (i, c) in cand.iter().enumerate() {
                    u.set(i, col, c / norm);
                }
                filled.push(col);
                break 'candidates;
            }
        }
    }
}

/// Solve the orthogonal Procrustes problem: the orthogonal `W` minimizing
/// `||X W - Y||_F`, where corresponding rows of `X` and `Y` are paired
/// dictionary vectors.
pub fn procrustes_align(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.rows() != y.rows() || x.cols() != y.cols() {
        return Err(Error::Config(format!(
            "procrustes inputs must have equal shapes, got {}x{} and {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    let d = x.cols();
    if x.rows() < d {
        warn!(
            "procrustes: only {} pairs for dimension {d}; the solution is underdetermined",
            x.rows()
        );
    }
    let m = x.t_matmul(y)?;
    let dec = svd(&m)?;
    if dec.s.contains(&0.0) {
        warn!("procrustes: cross-covariance is rank-deficient; projection is still orthogonal");
    }
    dec.u.matmul_t(&dec.v)
}

/// A bilingual dictionary with a train split (used to fit the projection)
/// and a test split (used for precision diagnostics).
///
/// Train keeps every pair as listed (a source word may carry several
/// translations); the test split is deduplicated by source word.
#[derive(Debug, Clone, Default)]
pub struct BilingualDictionary {
    pub train: Vec<(String, String)>,
    pub test: Vec<(String, String)>,
}

impl BilingualDictionary {
    /// Parse the dictionary text format: one pair per line, source word,
    /// a single tab or space, target word.
    pub fn parse_pairs(reader: impl BufRead) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split([' ', '\t']).filter(|f| !f.is_empty());
            match (it.next(), it.next(), it.next()) {
                (Some(src), Some(tgt), None) => pairs.push((src.to_string(), tgt.to_string())),
                _ => {
                    return Err(Error::Format(format!(
                        "line {}: expected exactly two fields",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(pairs)
    }

    pub fn from_train(train: Vec<(String, String)>) -> BilingualDictionary {
        BilingualDictionary {
            train,
            test: Vec::new(),
        }
    }

    pub fn with_test(mut self, test: Vec<(String, String)>) -> BilingualDictionary {
        let mut seen = std::collections::HashSet::new();
        self.test = test
            .into_iter()
            .filter(|(src, _)| seen.insert(src.clone()))
            .collect();
        self
    }
}

/// Paired dictionary vectors plus a count of pairs that were dropped because
/// a word was missing from its table.
pub struct DictionaryMatrices {
    pub x: Matrix,
    pub y: Matrix,
    pub used: usize,
    pub dropped: usize,
}

/// Stack dictionary pair vectors as matching rows of `X` (source) and `Y`
/// (target). Pairs with an out-of-vocabulary member are dropped and counted.
/// With `normalize` set, rows are scaled to unit length first.
pub fn dictionary_matrices(
    src: &EmbeddingTable,
    tgt: &EmbeddingTable,
    pairs: &[(String, String)],
    normalize: bool,
) -> Result<DictionaryMatrices> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0usize;
    for (sw, tw) in pairs {
        match (src.word_index(sw), tgt.word_index(tw)) {
            (Some(si), Some(ti)) => {
                xs.push(maybe_normalized(src.vector(si), normalize));
                ys.push(maybe_normalized(tgt.vector(ti), normalize));
            }
            _ => dropped += 1,
        }
    }
    if xs.is_empty() {
        return Err(Error::Data(format!(
            "no usable dictionary pairs (all {dropped} dropped as out-of-vocabulary)"
        )));
    }
    if dropped > 0 {
        warn!(
            "dictionary: dropped {dropped} of {} pairs (out-of-vocabulary)",
            pairs.len()
        );
    }
    let used = xs.len();
    Ok(DictionaryMatrices {
        x: Matrix::from_rows(&xs)?,
        y: Matrix::from_rows(&ys)?,
        used,
        dropped,
    })
}

fn maybe_normalized(v: &[f64], normalize: bool) -> Vec<f64> {
    if !normalize {
        return v.to_vec();
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / norm).collect()
    }
}

/// Precision@k of dictionary translation through the aligned space.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PrecisionReport {
    pub k: usize,
    pub evaluated: usize,
    pub excluded_oov: usize,
    pub hits: usize,
    pub precision: f64,
}

/// Fraction of test pairs whose target word is among the `k` nearest
/// target-table neighbors (cosine similarity) of the projected source
/// vector. Similarity ties break by vocabulary order. Pairs with an
/// out-of-vocabulary member are excluded from the denominator and counted.
pub fn translation_precision(
    projected_src: &EmbeddingTable,
    tgt: &EmbeddingTable,
    test_pairs: &[(String, String)],
    k: usize,
) -> Result<PrecisionReport> {
    if projected_src.dim() != tgt.dim() {
        return Err(Error::Config(format!(
            "tables have different dims: {} vs {}",
            projected_src.dim(),
            tgt.dim()
        )));
    }
    let tgt_norms: Vec<f64> = (0..tgt.len())
        .map(|i| tgt.vector(i).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();

    let usable: Vec<(usize, usize)> = test_pairs
        .iter()
        .filter_map(|(sw, tw)| Some((projected_src.word_index(sw)?, tgt.word_index(tw)?)))
        .collect();
    let excluded = test_pairs.len() - usable.len();
    if excluded > 0 {
        warn!(
            "precision@{k}: excluded {excluded} of {} pairs (out-of-vocabulary)",
            test_pairs.len()
        );
    }

    let hits = usable
        .par_iter()
        .filter(|&&(si, ti)| {
            let q = projected_src.vector(si);
            let qnorm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut sims: Vec<(f64, usize)> = (0..tgt.len())
                .map(|j| {
                    let dot: f64 = q.iter().zip(tgt.vector(j)).map(|(a, b)| a * b).sum();
                    let denom = qnorm * tgt_norms[j];
                    let sim = if denom == 0.0 { 0.0 } else { dot / denom };
                    (sim, j)
                })
                .collect();
            // descending similarity, vocabulary order on ties
            sims.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .expect("finite sims")
                    .then(a.1.cmp(&b.1))
            });
            sims.iter().take(k).any(|&(_, j)| j == ti)
        })
        .count();

    let evaluated = usable.len();
    Ok(PrecisionReport {
        k,
        evaluated,
        excluded_oov: excluded,
        hits,
        precision: if evaluated == 0 {
            0.0
        } else {
            hits as f64 / evaluated as f64
        },
    })
}

/// A random orthogonal matrix: Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal(d: usize, rng: &mut XRng) -> Matrix {
    loop {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
        let mut ok = true;
        for _ in 0..d {
            let mut c: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for prev in &cols {
                let dot: f64 = c.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (ci, pi) in c.iter_mut().zip(prev) {
                    *ci -= dot * pi;
                }
            }
            // Re-orthogonalize once; plain Gram-Schmidt drifts for larger d.
            for prev in &cols {
                let dot: f64 = c.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (ci, pi) in c.iter_mut().zip(prev) {
                    *ci -= dot * pi;
                }
            }
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            c.iter_mut().for_each(|x| *x /= norm);
            cols.push(c);
        }
        if ok {
            let mut m = Matrix::zeros(d, d);
            for (j, col) in cols.iter().enumerate() {
                for (i, &v) in col.iter().enumerate() {
                    m.set(i, j, v);
                }
            }
            return m;
        }
    }
}

/// `max |W^T W - I|`, the orthogonality defect.
pub fn orthogonality_defect(w: &Matrix) -> f64 {
    let wtw = w.t_matmul(w).expect("square");
    wtw.max_abs_diff(&Matrix::identity(w.cols()))
}

/// Serialize a projection: magic "XPRJ", version, source and target language
/// tags, then the square matrix as a shaped f64 tensor.
pub fn write_xprj(w: &mut impl Write, src_lang: &str, tgt_lang: &str, proj: &Matrix) -> Result<()> {
    container::write_magic(w, XPRJ_MAGIC)?;
    container::write_string(w, src_lang)?;
    container::write_string(w, tgt_lang)?;
    container::write_f64_tensor(w, &[proj.rows(), proj.cols()], proj.data())?;
    Ok(())
}

pub fn read_xprj(r: &mut impl Read) -> Result<(String, String, Matrix)> {
    container::read_magic(r, XPRJ_MAGIC)?;
    let src = container::read_string(r)?;
    let tgt = container::read_string(r)?;
    let (shape, values) = container::read_f64_tensor(r)?;
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::Format(format!(
            "XPRJ matrix must be square, got {shape:?}"
        )));
    }
    Ok((src, tgt, Matrix::from_vec(shape[0], shape[1], values)?))
}
