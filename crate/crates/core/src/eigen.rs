//! Block eigensolver for the smallest eigenpairs of a symmetric operator that
//! is only available through block matrix-vector products.
//!
//! This is LOBPCG without a preconditioner: each step performs a Rayleigh-Ritz
//! projection on `[X, W, P]` (current iterate, residuals, previous update).
//! Residual directions are orthogonalized against the whole block, so
//! converged leading vectors act as a deflation space for the rest.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub(crate) struct EigenPairs {
    /// Ascending eigenvalues, one per requested pair.
    pub values: Vec<f64>,
    /// Eigenvectors as columns.
    pub vectors: DMatrix<f64>,
    /// Ritz values of the whole block (guard vectors included).
    pub block_values: Vec<f64>,
    pub iterations: usize,
}

/// Symmetric eigendecomposition with ascending eigenvalues.
pub(crate) fn sorted_eigh(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Returns `T` such that `S·T` has orthonormal columns spanning the
/// numerically independent part of `span(S)`, given `G = SᵀS`.
fn whitening(gram: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, v) = sorted_eigh(gram);
    let dmax = d.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..d.len())
        .filter(|&i| d[i] > 1e-12 * dmax && d[i] > 0.0)
        .collect();
    DMatrix::from_fn(gram.nrows(), keep.len(), |r, c| {
        v[(r, keep[c])] / d[keep[c]].sqrt()
    })
}

fn orthonormalize(s: &DMatrix<f64>) -> DMatrix<f64> {
    let t = whitening(&(s.transpose() * s));
    s * t
}

fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])])
}

fn hcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    out
}

/// Computes the `count` smallest eigenpairs.
///
/// `x0` holds the starting block (its width sets the block size, which must be
/// at least `count`); `tol` is an absolute bound on `‖Av - λv‖₂`.
pub(crate) fn lobpcg<F>(
    apply: F,
    x0: DMatrix<f64>,
    count: usize,
    tol: f64,
    max_iter: usize,
) -> Result<EigenPairs>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let dim = x0.nrows();
    assert!(count <= x0.ncols() && count <= dim);

    let mut x = orthonormalize(&x0);
    let mut ax = apply(&x);
    // initial Rayleigh-Ritz on the block
    let (mut theta, c) = sorted_eigh(&(x.transpose() * &ax));
    x = &x * &c;
    ax = &ax * &c;
    let width = x.ncols();
    let mut p: Option<(DMatrix<f64>, DMatrix<f64>)> = None;

    for it in 0..=max_iter {
        if it > 0 && it % 25 == 0 {
            ax = apply(&x);
        }
        let mut residual = ax.clone();
        for j in 0..width {
            let t = theta[j];
            residual.column_mut(j).axpy(-t, &x.column(j), 1.0);
        }
        let norms: Vec<f64> = (0..width).map(|j| residual.column(j).norm()).collect();
        if norms[..count].iter().all(|&r| r <= tol) {
            return Ok(EigenPairs {
                values: theta[..count].to_vec(),
                vectors: x.columns(0, count).into_owned(),
                block_values: theta.clone(),
                iterations: it,
            });
        }
        if it == max_iter || width == dim {
            break;
        }
        let active: Vec<usize> = (0..width).filter(|&j| norms[j] > tol).collect();
        let mut w = select_columns(&residual, &active);
        for _ in 0..2 {
            let proj = x.transpose() * &w;
            w -= &x * proj;
        }
        let w = orthonormalize(&w);
        if w.ncols() == 0 {
            break;
        }
        let aw = apply(&w);

        let (s, as_) = match &p {
            Some((pp, app)) => (hcat(&[&x, &w, pp]), hcat(&[&ax, &aw, app])),
            None => (hcat(&[&x, &w]), hcat(&[&ax, &aw])),
        };
        let t = whitening(&(s.transpose() * &s));
        let h = t.transpose() * (s.transpose() * &as_) * &t;
        let (vals, q) = sorted_eigh(&h);
        if vals.len() < width {
            break;
        }
        let coeffs = &t * q.columns(0, width);
        let new_x = &s * &coeffs;
        let new_ax = &as_ * &coeffs;
        // update direction: the part of the new iterate outside the old X block
        let tail = coeffs.rows(width, coeffs.nrows() - width).into_owned();
        let sp = s.columns(width, s.ncols() - width).into_owned();
        let asp = as_.columns(width, as_.ncols() - width).into_owned();
        let new_p = &sp * &tail;
        let new_ap = &asp * &tail;
        let pt = whitening(&(new_p.transpose() * &new_p));
        p = Some((&new_p * &pt, &new_ap * &pt));
        x = new_x;
        ax = new_ax;
        theta = vals[..width].to_vec();
    }

    // a final exact check before giving up
    let ax = apply(&x);
    let (vals, c) = sorted_eigh(&(x.transpose() * &ax));
    let x = &x * &c;
    let ax = &ax * &c;
    let ok = (0..count).all(|j| {
        let r: DVector<f64> = ax.column(j) - x.column(j) * vals[j];
        r.norm() <= tol
    });
    if ok || width == dim {
        return Ok(EigenPairs {
            values: vals[..count].to_vec(),
            vectors: x.columns(0, count).into_owned(),
            block_values: vals,
            iterations: max_iter,
        });
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
    })
}
