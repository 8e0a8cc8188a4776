//! Lanczos routines for Hermitian operators given as sparse term sums.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Real linear combination `Σ cᵢ Mᵢ` of sparse Hermitian matrices, applied lazily.
///
/// The terms are stored on the union of their sparsity patterns so that a
/// combination costs one pass over the merged pattern.
#[derive(Clone, Debug)]
pub struct SparseTerms {
    dim: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    /// `values[i][k]`: entry `k` of the merged pattern for term `i`.
    values: Vec<Vec<C64>>,
}

impl SparseTerms {
    pub fn new(mats: Vec<CsrMatrix<C64>>) -> Result<Self> {
        let dim = mats.first().map(|m| m.nrows()).ok_or_else(|| Error::invalid("no terms"))?;
        if mats.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::invalid("terms differ in dimension"));
        }
        let mut offsets = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut values: Vec<Vec<C64>> = vec![Vec::new(); mats.len()];
        offsets.push(0);
        for r in 0..dim {
            let mut row: Vec<usize> = mats.iter().flat_map(|m| m.row(r).col_indices().to_vec()).collect();
            row.sort_unstable();
            row.dedup();
            for (i, m) in mats.iter().enumerate() {
                let mrow = m.row(r);
                let (mc, mv) = (mrow.col_indices(), mrow.values());
                let mut it = 0;
                for &c in &row {
                    while it < mc.len() && mc[it] < c {
                        it += 1;
                    }
                    values[i].push(if it < mc.len() && mc[it] == c { mv[it] } else { C64::new(0.0, 0.0) });
                }
            }
            cols.extend_from_slice(&row);
            offsets.push(cols.len());
        }
        Ok(Self { dim, offsets, cols, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values of `Σ cᵢ Mᵢ` on the merged pattern.
    fn combine(&self, coeffs: &[f64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.cols.len()];
        for (vals, &c) in self.values.iter().zip(coeffs) {
            if c != 0.0 {
                out.iter_mut().zip(vals).for_each(|(o, v)| *o += v * c);
            }
        }
        out
    }

    fn apply_combined(&self, vals: &[C64], x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.offsets[r]..self.offsets[r + 1] {
                acc += vals[k] * x[self.cols[k]];
            }
            *yr = acc;
        }
    }

    pub fn apply(&self, coeffs: &[f64], x: &[C64], y: &mut [C64]) {
        self.apply_combined(&self.combine(coeffs), x, y);
    }

    /// Gershgorin bound on the spectral radius of `Σ cᵢ Mᵢ`.
    pub fn norm_bound(&self, coeffs: &[f64]) -> f64 {
        let vals = self.combine(coeffs);
        (0..self.dim)
            .map(|r| vals[self.offsets[r]..self.offsets[r + 1]].iter().map(|v| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Symmetric tridiagonal eigenproblem by implicit-shift QL. Columns of the
/// returned matrix are eigenvectors.
fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    tridiagonal_ql(alpha, beta, true)
}

fn tridiagonal_eigenvalues(alpha: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    Ok(tridiagonal_ql(alpha, beta, false)?.0)
}

pub(crate) fn tridiagonal_ql(alpha: &[f64], beta: &[f64], vectors: bool) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = alpha.len();
    let mut d = alpha.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&beta[..n - 1]);
    let mut z = if vectors { DMatrix::<f64>::identity(n, n) } else { DMatrix::<f64>::zeros(0, 0) };
    // off-diagonals below eps·‖T‖ only move eigenvalues by eps·‖T‖
    let floor = f64::EPSILON
        * (d.iter().map(|x| x.abs()).fold(0.0, f64::max) + 2.0 * e.iter().map(|x| x.abs()).fold(0.0, f64::max));
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd || e[m].abs() <= floor {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Convergence("tridiagonal eigensolver failed".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..z.nrows() {
                    let zk1 = z[(k, i + 1)];
                    let zk = z[(k, i)];
                    z[(k, i + 1)] = s * zk + c * zk1;
                    z[(k, i)] = c * zk - s * zk1;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

/// Deterministic pseudo-random start vector with support on every basis state.
fn start_vector(dim: usize) -> Vec<C64> {
    let mut s = 0x9e37_79b9_7f4a_7c15_u64;
    let mut v: Vec<C64> = (0..dim)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            C64::new(0.5 + (s >> 11) as f64 / (1u64 << 53) as f64, 0.0)
        })
        .collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Two lowest eigenvalues and the ground eigenvector of a Hermitian CSR matrix.
pub fn lowest_pair(h: &CsrMatrix<C64>, tol: f64, max_iter: usize) -> Result<(f64, f64, DVector<C64>)> {
    let dim = h.nrows();
    let terms = SparseTerms::new(vec![h.clone()])?;
    let mut basis: Vec<Vec<C64>> = vec![start_vector(dim)];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![C64::new(0.0, 0.0); dim];
    let mut previous: Option<(f64, f64)> = None;
    for k in 0..max_iter.min(dim) {
        terms.apply(&[1.0], &basis[k], &mut w);
        let a = dotc(&basis[k], &w).re;
        alpha.push(a);
        // full reorthogonalization; a second pass only on heavy cancellation
        for _ in 0..2 {
            let before = norm(&w);
            for q in &basis {
                let c = dotc(q, &w);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
            if norm(&w) > 0.7 * before {
                break;
            }
        }
        let b = norm(&w);
        let done = k + 1 == dim || b < 1e-14;
        if k >= 1 {
            // cheap eigenvalue-only test first; vectors once the pair has settled
            let mut vals = tridiagonal_eigenvalues(&alpha, &beta)?;
            vals.sort_by(f64::total_cmp);
            let pair = (vals[0], vals[1]);
            let scale = vals.iter().map(|v| v.abs()).fold(1.0, f64::max);
            let settled = previous.is_some_and(|(p0, p1): (f64, f64)| {
                (pair.0 - p0).abs() < tol * scale && (pair.1 - p1).abs() < tol * scale
            });
            previous = Some(pair);
            if settled || done {
                let (vals, vecs) = tridiagonal_eigen(&alpha, &beta)?;
                let mut order: Vec<usize> = (0..vals.len()).collect();
                order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
                let res0 = b * vecs[(k, order[0])].abs();
                let res1 = b * vecs[(k, order[1])].abs();
                if done || (res0 < tol * scale && res1 < tol * scale) {
                    let mut ground = DVector::zeros(dim);
                    for (j, q) in basis.iter().enumerate() {
                        let c = vecs[(j, order[0])];
                        for (g, x) in ground.iter_mut().zip(q) {
                            *g += x * c;
                        }
                    }
                    let n = ground.norm();
                    return Ok((vals[order[0]], vals[order[1]], ground / C64::new(n, 0.0)));
                }
            }
        }
        if done {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    Err(Error::Convergence(format!("Lanczos lowest pair not converged in {max_iter} iterations")))
}

/// Outcome of a Krylov exponential step.
pub struct ExpmStep {
    pub krylov_dim: usize,
    pub error_estimate: f64,
}

/// In-place `x ← exp(-i dt A) x` with `A = Σ cᵢ Mᵢ` Hermitian.
///
/// Fails if the a-posteriori error does not drop below `tol` within `max_dim`
/// Lanczos vectors; the caller is expected to retry with a shorter step.
pub fn expm_step(
    terms: &SparseTerms,
    coeffs: &[f64],
    dt: f64,
    x: &mut [C64],
    tol: f64,
    max_dim: usize,
) -> Result<ExpmStep> {
    expm_step_from(terms, coeffs, dt, x, tol, max_dim, 4)
}

/// As [`expm_step`], testing convergence first at Krylov dimension `first_check`
/// and every second dimension after that.
pub fn expm_step_from(
    terms: &SparseTerms,
    coeffs: &[f64],
    dt: f64,
    x: &mut [C64],
    tol: f64,
    max_dim: usize,
    first_check: usize,
) -> Result<ExpmStep> {
    let dim = terms.dim();
    let combined = terms.combine(coeffs);
    let first_check = first_check.max(2);
    let x_norm = norm(x);
    if x_norm == 0.0 {
        return Ok(ExpmStep { krylov_dim: 0, error_estimate: 0.0 });
    }
    let mut basis: Vec<Vec<C64>> = vec![x.iter().map(|v| v / x_norm).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![C64::new(0.0, 0.0); dim];
    let max_dim = max_dim.min(dim);
    for k in 0..max_dim {
        terms.apply_combined(&combined, &basis[k], &mut w);
        let a = dotc(&basis[k], &w).re;
        alpha.push(a);
        // short recurrence, repeated once; enough for the small dimensions used here
        for _ in 0..2 {
            for q in basis[k.saturating_sub(1)..=k].iter() {
                let c = dotc(q, &w);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = norm(&w);
        let m = k + 1;
        let check = m == max_dim || m == dim || b < 1e-13 || (m >= first_check && (m - first_check) % 2 == 0);
        if check {
            let (vals, vecs) = tridiagonal_eigen(&alpha, &beta)?;
            // y = exp(-i dt T) e₁ = S exp(-i dt Θ) Sᵀ e₁
            let y: Vec<C64> = (0..m)
                .map(|i| {
                    (0..m)
                        .map(|j| vecs[(i, j)] * vecs[(0, j)] * C64::from_polar(1.0, -dt * vals[j]))
                        .sum()
                })
                .collect();
            let err = b * y[m - 1].norm();
            if err < tol || b < 1e-13 || m == dim {
                x.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                for (q, c) in basis.iter().zip(&y) {
                    let c = c * x_norm;
                    x.iter_mut().zip(q).for_each(|(v, qv)| *v += c * qv);
                }
                return Ok(ExpmStep { krylov_dim: m, error_estimate: err });
            }
            if m == max_dim {
                return Err(Error::Convergence(format!(
                    "Krylov exponential needs more than {max_dim} vectors (error {err:e})"
                )));
            }
        }
        beta.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
    }
    Err(Error::Convergence("Krylov exponential failed".into()))
}
