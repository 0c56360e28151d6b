//! Dense complex matrix helpers: Hermitian parts, semidefinite order,
//! square roots and guarded solves.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Default relative eigenvalue floor for semidefinite checks.
pub const PSD_TOL: f64 = 1e-9;
/// Condition numbers beyond this are treated as singular.
pub const COND_CAP: f64 = 1e12;

pub fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn cmat_from_real(rows: usize, cols: usize, row_major: &[f64]) -> CMat {
    CMat::from_row_iterator(rows, cols, row_major.iter().map(|&x| c(x)))
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn diag(d: &[C64]) -> CMat {
    let n = d.len();
    CMat::from_fn(n, n, |i, j| if i == j { d[i] } else { C64::new(0.0, 0.0) })
}

pub fn diag_real(d: &[f64]) -> CMat {
    let v: Vec<C64> = d.iter().map(|&x| c(x)).collect();
    diag(&v)
}

/// The symplectic unit `[[0, -I], [I, 0]]` of size `2n`.
pub fn j_matrix(n: usize) -> CMat {
    let mut j = CMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = c(-1.0);
        j[(n + i, i)] = c(1.0);
    }
    j
}

pub fn block2(a: &CMat, b: &CMat, cc: &CMat, d: &CMat) -> CMat {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut m = CMat::zeros(r1 + r2, c1 + c2);
    m.view_mut((0, 0), (r1, c1)).copy_from(a);
    m.view_mut((0, c1), (r1, c2)).copy_from(b);
    m.view_mut((r1, 0), (r2, c1)).copy_from(cc);
    m.view_mut((r1, c1), (r2, c2)).copy_from(d);
    m
}

pub fn blockdiag(a: &CMat, d: &CMat) -> CMat {
    let z12 = CMat::zeros(a.nrows(), d.ncols());
    let z21 = CMat::zeros(d.nrows(), a.ncols());
    block2(a, &z12, &z21, d)
}

/// Top and bottom halves of a matrix with `2n` rows.
pub fn split_rows(m: &CMat, n: usize) -> (CMat, CMat) {
    (
        m.rows(0, n).into_owned(),
        m.rows(n, m.nrows() - n).into_owned(),
    )
}

/// Square `n×n` block `(bi, bj)` of a `2n×2n` matrix.
pub fn sub_block(m: &CMat, n: usize, bi: usize, bj: usize) -> CMat {
    m.view((bi * n, bj * n), (n, n)).into_owned()
}

pub fn stack(top: &CMat, bottom: &CMat) -> CMat {
    let mut m = CMat::zeros(top.nrows() + bottom.nrows(), top.ncols());
    m.view_mut((0, 0), top.shape()).copy_from(top);
    m.view_mut((top.nrows(), 0), bottom.shape())
        .copy_from(bottom);
    m
}

pub fn norm(m: &CMat) -> f64 {
    m.norm()
}

/// `‖a - b‖ / max(1, scale)`.
pub fn rel_gap(a: &CMat, b: &CMat, scale: f64) -> f64 {
    (a - b).norm() / scale.max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianDecomposition {
    pub re_part: CMat,
    pub im_part: CMat,
}

pub fn hermitian_split(m: &CMat) -> Result<HermitianDecomposition> {
    square(m)?;
    let adj = m.adjoint();
    let re_part = (m + &adj) * c(0.5);
    let im_part = (m - &adj) * C64::new(0.0, -0.5);
    Ok(HermitianDecomposition { re_part, im_part })
}

/// `(M + M*) / 2`.
pub fn re_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

fn square(m: &CMat) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

fn hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).norm()
}

fn ensure_hermitian(m: &CMat) -> Result<()> {
    square(m)?;
    let defect = hermitian_defect(m);
    if defect > 1e-8 * m.norm().max(1.0) {
        return Err(Error::NotHermitian { defect });
    }
    Ok(())
}

/// Eigen-decomposition of the Hermitian part of `m`, ascending eigenvalues.
pub fn herm_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let h = re_part(m);
    let eig = SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(m.nrows(), m.ncols());
    for (col, &i) in idx.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn min_eig(m: &CMat) -> f64 {
    herm_eigen(m).0.first().copied().unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    pub psd: bool,
    pub min_eig: f64,
}

pub fn psd_check(m: &CMat, tol: f64) -> Result<PsdReport> {
    ensure_hermitian(m)?;
    let min_eig = min_eig(m);
    Ok(PsdReport {
        psd: min_eig >= -tol * m.norm().max(1.0),
        min_eig,
    })
}

pub fn psd_sqrt(m: &CMat) -> Result<CMat> {
    let report = psd_check(m, PSD_TOL)?;
    if !report.psd {
        return Err(Error::IndefiniteInput {
            min_eig: report.min_eig,
        });
    }
    let (vals, vecs) = herm_eigen(m);
    let roots: Vec<C64> = vals.iter().map(|&v| c(v.max(0.0).sqrt())).collect();
    let r = &vecs * diag(&roots) * vecs.adjoint();
    Ok(re_part(&r))
}

/// Inverse square root of a positive definite Hermitian matrix.
pub fn pd_inv_sqrt(m: &CMat) -> Result<CMat> {
    ensure_hermitian(m)?;
    let (vals, vecs) = herm_eigen(m);
    let top = vals
        .last()
        .copied()
        .unwrap_or(0.0)
        .abs()
        .max(f64::MIN_POSITIVE);
    let low = vals[0];
    if !(low > top / COND_CAP) {
        return Err(Error::Singular {
            what: "inverse square root",
            cond: if low > 0.0 { top / low } else { f64::INFINITY },
        });
    }
    let d: Vec<C64> = vals.iter().map(|&v| c(1.0 / v.sqrt())).collect();
    Ok(re_part(&(&vecs * diag(&d) * vecs.adjoint())))
}

pub fn loewner_geq(big: &CMat, small: &CMat, tol: f64) -> Result<bool> {
    if big.shape() != small.shape() {
        return Err(Error::DimensionMismatch {
            expected: big.nrows(),
            got: small.nrows(),
        });
    }
    Ok(psd_check(&(big - small), tol)?.psd)
}

/// 2-norm condition number from singular values.
pub fn cond(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve `m x = rhs` by LU, refusing when `cond(m)` exceeds the cap.
pub fn solve(m: &CMat, rhs: &CMat, what: &'static str) -> Result<CMat> {
    let k = cond(m);
    if !(k <= COND_CAP) {
        return Err(Error::Singular { what, cond: k });
    }
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or(Error::Singular { what, cond: k })
}

/// LU solve without a condition gate; `None` only for exact singularity.
pub fn solve_unchecked(m: &CMat, rhs: &CMat) -> Option<CMat> {
    m.clone().lu().solve(rhs)
}

pub fn inverse(m: &CMat, what: &'static str) -> Result<CMat> {
    solve(m, &eye(m.nrows()), what)
}

/// Orthonormal basis (as columns) for the orthogonal complement of the
/// column space of `q`, where `q` has full column rank `r` and `m` rows.
pub fn complement_basis(q: &CMat) -> CMat {
    let m = q.nrows();
    let r = q.ncols();
    let qr = q.clone().qr();
    let qq = qr.q();
    let proj = eye(m) - &qq * qq.adjoint();
    let (_, vecs) = herm_eigen(&proj);
    vecs.columns(r, m - r).into_owned()
}
