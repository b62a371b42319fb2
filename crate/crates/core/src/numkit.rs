//! Dense complex linear algebra substrate: factorization, numerical rank,
//! kernels, orthonormal completion, subspace comparison, and the Gram-based
//! unitary-extension solver used by the correspondence calculus.
//!
//! Everything is double-precision and tolerance-driven; no operation hardcodes
//! a threshold.

use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Complex scalar used throughout the crate.
pub type C64 = Complex64;

pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

/// Tolerance configuration flowing top-down through every computation.
///
/// `rank_rel` scales the largest singular value to a rank threshold;
/// `eq_rel` is the relative Frobenius threshold for equality tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rank_rel: f64,
    pub eq_rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rank_rel: 1e-9,
            eq_rel: 1e-8,
        }
    }
}

impl Tolerance {
    pub fn new(rank_rel: f64, eq_rel: f64) -> Result<Self> {
        if rank_rel.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || eq_rel.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
        {
            return Err(Error::InvalidInput(
                "tolerances must be strictly positive".into(),
            ));
        }
        Ok(Tolerance { rank_rel, eq_rel })
    }

    /// Frobenius-relative equality of two matrices.
    pub fn matrices_eq(&self, a: &CMatrix, b: &CMatrix) -> bool {
        let scale = b.frobenius_norm().max(a.frobenius_norm()).max(1.0);
        a.sub(b).frobenius_norm() <= self.eq_rel * scale
    }
}

/// Dense complex matrix, row-major, unit-free.
///
/// Degenerate `0×n` and `n×0` shapes are legal everywhere; empty multiplicity
/// spaces occur constantly in block computations.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, ONE);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged row data".into()));
        }
        let data = rows.into_iter().flatten().collect();
        Ok(CMatrix {
            rows: r,
            cols: c,
            data,
        })
    }

    /// Real-entry convenience constructor.
    pub fn from_real(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let data = rows
            .iter()
            .flat_map(|row| row.iter().map(|&x| C64::new(x, 0.0)))
            .collect();
        CMatrix {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = CMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// `e_{ij}` matrix unit of shape `rows×cols`.
    pub fn matrix_unit(rows: usize, cols: usize, i: usize, j: usize) -> Self {
        let mut m = CMatrix::zeros(rows, cols);
        m.set(i, j, ONE);
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: C64) -> CMatrix {
        let data = self.data.iter().map(|a| a * s).collect();
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn conj(&self) -> CMatrix {
        let data = self.data.iter().map(|z| z.conj()).collect();
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows * other.rows, self.cols * other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                if a == ZERO {
                    continue;
                }
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        out.set(i * other.rows + k, j * other.cols + l, a * other.get(k, l));
                    }
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value; 0 for empty shapes.
    pub fn operator_norm(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        singular_values(self).first().copied().unwrap_or(0.0)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Column-major vectorization as a column vector.
    pub fn vec(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows * self.cols, 1);
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.set(j * self.rows + i, 0, self.get(i, j));
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Horizontal concatenation.
    pub fn hstack(blocks: &[&CMatrix]) -> CMatrix {
        let rows = blocks.first().map_or(0, |m| m.rows);
        let cols = blocks.iter().map(|m| m.cols).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let mut off = 0;
        for m in blocks {
            assert_eq!(m.rows, rows);
            for i in 0..m.rows {
                for j in 0..m.cols {
                    out.set(i, off + j, m.get(i, j));
                }
            }
            off += m.cols;
        }
        out
    }

    /// Vertical concatenation.
    pub fn vstack(blocks: &[&CMatrix]) -> CMatrix {
        let cols = blocks.first().map_or(0, |m| m.cols);
        let rows = blocks.iter().map(|m| m.rows).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let mut off = 0;
        for m in blocks {
            assert_eq!(m.cols, cols);
            for i in 0..m.rows {
                for j in 0..m.cols {
                    out.set(off + i, j, m.get(i, j));
                }
            }
            off += m.rows;
        }
        out
    }

    /// Direct sum (block diagonal).
    pub fn block_diag(blocks: &[&CMatrix]) -> CMatrix {
        let rows = blocks.iter().map(|m| m.rows).sum();
        let cols = blocks.iter().map(|m| m.cols).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let (mut ro, mut co) = (0, 0);
        for m in blocks {
            for i in 0..m.rows {
                for j in 0..m.cols {
                    out.set(ro + i, co + j, m.get(i, j));
                }
            }
            ro += m.rows;
            co += m.cols;
        }
        out
    }

    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |i, j| self.get(r0 + i, c0 + j))
    }

    pub fn is_hermitian(&self, tol: &Tolerance) -> bool {
        self.rows == self.cols && tol.matrices_eq(self, &self.adjoint())
    }
}

fn to_na(m: &CMatrix) -> DMatrix<C64> {
    DMatrix::from_fn(m.rows, m.cols, |i, j| m.get(i, j))
}

/// Full SVD `m = U diag(s) Vh` with singular values descending.
pub fn svd(m: &CMatrix) -> (CMatrix, Vec<f64>, CMatrix) {
    if m.is_empty() {
        return (CMatrix::identity(m.rows), vec![], CMatrix::identity(m.cols));
    }
    let svd = to_na(m).svd(true, true);
    let u = svd.u.as_ref().expect("svd computes u");
    let vt = svd.v_t.as_ref().expect("svd computes v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let up = CMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let vtp = CMatrix::from_fn(order.len(), vt.ncols(), |i, j| vt[(order[i], j)]);
    (up, s, vtp)
}

/// Singular values, descending.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return vec![];
    }
    let mut s: Vec<f64> = to_na(m).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Hermitian eigendecomposition with eigenvalues descending and a
/// deterministic phase fix (largest-modulus entry of each eigenvector made
/// real positive).
///
/// Implemented as a cyclic complex Jacobi iteration: unconditionally stable
/// and accurate to machine precision at the dense sizes this crate handles.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.rows();
    if n == 0 {
        return (vec![], CMatrix::zeros(0, 0));
    }
    // Work on the Hermitian part.
    let mut a = m.add(&m.adjoint()).scale(C64::new(0.5, 0.0));
    let mut v = CMatrix::identity(n);
    let scale = a.frobenius_norm().max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a.get(i, j).norm_sqr();
                }
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.norm() <= 1e-18 * scale {
                    continue;
                }
                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                let abs = apq.norm();
                let phase = apq / C64::new(abs, 0.0);
                // Real Jacobi angle for [[app, |apq|], [|apq|, aqq]]; the
                // small root of t² − 2τt − 1 = 0 keeps rotations gentle.
                let tau = (aqq - app) / (2.0 * abs);
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Unitary W = diag(1, conj(phase)) · R(θ) on coordinates
                // (p,q): W e_p = c·e_p + s·conj(phase)·e_q,
                //         W e_q = −s·e_p + c·conj(phase)·e_q.
                let cc = C64::new(c, 0.0);
                let ss = C64::new(s, 0.0);
                let pc = phase.conj();
                // Columns: M ← M·W.
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, akp * cc + akq * ss * pc);
                    a.set(k, q, akq * cc * pc - akp * ss);
                }
                // Rows: M ← W*·M.
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, apk * cc + aqk * ss * phase);
                    a.set(q, k, aqk * cc * phase - apk * ss);
                }
                // Accumulate V ← V·W.
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, vkp * cc + vkq * ss * pc);
                    v.set(k, q, vkq * cc * pc - vkp * ss);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a.get(y, y).re.partial_cmp(&a.get(x, x).re).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| a.get(i, i).re).collect();
    let mut vecs = CMatrix::from_fn(n, n, |i, j| v.get(i, order[j]));
    for j in 0..n {
        let mut best = 0usize;
        let mut mag = -1.0f64;
        for i in 0..n {
            let a = vecs.get(i, j).norm();
            if a > mag + 1e-15 {
                mag = a;
                best = i;
            }
        }
        let pivot = vecs.get(best, j);
        if pivot.norm() > 0.0 {
            let phase = pivot.conj() / pivot.norm();
            for i in 0..n {
                let v = vecs.get(i, j) * phase;
                vecs.set(i, j, v);
            }
        }
    }
    (vals, vecs)
}

/// Positive-semidefinite square root, clamping slightly negative eigenvalues.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let (vals, vecs) = eigh(m);
    let n = m.rows();
    let mut out = CMatrix::zeros(n, n);
    for k in 0..n {
        let l = vals[k].max(0.0).sqrt();
        if l == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                let v = out.get(i, j) + vecs.get(i, k) * vecs.get(j, k).conj() * C64::new(l, 0.0);
                out.set(i, j, v);
            }
        }
    }
    out
}

/// Moore–Penrose pseudoinverse at the configured rank threshold.
pub fn pinv(m: &CMatrix, tol: &Tolerance) -> CMatrix {
    if m.is_empty() {
        return CMatrix::zeros(m.cols(), m.rows());
    }
    let (u, s, vh) = svd(m);
    let thresh = tol.rank_rel * s.first().copied().unwrap_or(0.0);
    let r = s.iter().take_while(|&&x| x > thresh && x > 0.0).count();
    let mut si = CMatrix::zeros(vh.rows(), u.cols());
    for i in 0..r {
        si.set(i, i, C64::new(1.0 / s[i], 0.0));
    }
    vh.adjoint().matmul(&si).matmul(&u.adjoint())
}

fn check_finite(m: &CMatrix) -> Result<()> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("non-finite matrix entries".into()));
    }
    Ok(())
}

/// Number of singular values exceeding `rank_rel × σ_max`; 0 for the zero
/// matrix.
pub fn numerical_rank(m: &CMatrix, tol: &Tolerance) -> Result<usize> {
    check_finite(m)?;
    let s = singular_values(m);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > tol.rank_rel * smax).count())
}

/// Orthonormal basis of the numerical null space, returned as matrix columns.
///
/// Computed from the Gram matrix `m* m` so that wide matrices expose their
/// full kernel; the rank threshold matches [`numerical_rank`].
pub fn kernel_basis(m: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    check_finite(m)?;
    let n = m.cols();
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    if m.rows() == 0 {
        return Ok(CMatrix::identity(n));
    }
    let r = numerical_rank(m, tol)?;
    if r == n {
        return Ok(CMatrix::zeros(n, 0));
    }
    let (_, vecs) = eigh(&m.adjoint().matmul(m));
    // Eigenvalues descend, so the kernel directions are the trailing columns.
    Ok(vecs.submatrix(0, r, n, n - r))
}

/// Orthonormal basis of the column span, returned as matrix columns.
pub fn column_span_basis(m: &CMatrix, tol: &Tolerance) -> CMatrix {
    if m.is_empty() {
        return CMatrix::zeros(m.rows(), 0);
    }
    let (u, s, _) = svd(m);
    let smax = s.first().copied().unwrap_or(0.0);
    let r = if smax == 0.0 {
        0
    } else {
        s.iter().filter(|&&x| x > tol.rank_rel * smax).count()
    };
    u.submatrix(0, 0, u.rows(), r)
}

/// Orthonormal basis of the sum of two column spans.
pub fn column_subspace_sum(a: &CMatrix, b: &CMatrix, tol: &Tolerance) -> CMatrix {
    if a.cols() == 0 {
        return b.clone();
    }
    if b.cols() == 0 {
        return a.clone();
    }
    column_span_basis(&CMatrix::hstack(&[a, b]), tol)
}

/// Extend orthonormal columns `iso` (n×r, r ≤ n) to a full n×n unitary.
pub fn complete_to_unitary(iso: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    let n = iso.rows();
    let r = iso.cols();
    if r > n {
        return Err(Error::DimensionMismatch("more columns than rows".into()));
    }
    let gram = iso.adjoint().matmul(iso).sub(&CMatrix::identity(r));
    if gram.frobenius_norm() > tol.eq_rel * (r as f64).max(1.0) {
        return Err(Error::InvalidInput("columns are not orthonormal".into()));
    }
    if r == n {
        return Ok(iso.clone());
    }
    // Complement = kernel of iso* (rows span the occupied directions).
    let comp = kernel_basis(&iso.adjoint(), tol)?;
    if comp.cols() != n - r {
        return Err(Error::InvalidInput(
            "orthonormal completion has unexpected dimension".into(),
        ));
    }
    Ok(CMatrix::hstack(&[iso, &comp]))
}

/// Outcome of the constrained-unitary existence test.
#[derive(Debug, Clone)]
pub struct UnitaryCompletion {
    /// Witness `U` with `X Uᵀ = Y`, when it exists.
    pub witness: Option<CMatrix>,
    /// `‖X X* − Y Y*‖_F`, the obstruction when no witness exists.
    pub gram_residual: f64,
}

impl UnitaryCompletion {
    pub fn exists(&self) -> bool {
        self.witness.is_some()
    }
}

/// Decide whether a unitary `U` (d×d) with `X Uᵀ = Y` exists for stacked
/// constraint rows `X` (s×d) and `Y` (s×d'), and produce one if so.
///
/// Existence holds iff `d = d'` and the row Grams agree, `X X* = Y Y*`
/// (polar-decomposition criterion); the witness maps each constraint row of
/// `X` onto the corresponding row of `Y` and is unitary.
pub fn unitary_completion_exists(
    x_stack: &CMatrix,
    y_stack: &CMatrix,
    tol: &Tolerance,
) -> Result<UnitaryCompletion> {
    check_finite(x_stack)?;
    check_finite(y_stack)?;
    if x_stack.rows() != y_stack.rows() {
        return Err(Error::DimensionMismatch(format!(
            "constraint row counts differ: {} vs {}",
            x_stack.rows(),
            y_stack.rows()
        )));
    }
    let gx = x_stack.matmul(&x_stack.adjoint());
    let gy = y_stack.matmul(&y_stack.adjoint());
    let gram_residual = gx.sub(&gy).frobenius_norm();
    let scale = gx.frobenius_norm().max(gy.frobenius_norm()).max(1.0);
    if x_stack.cols() != y_stack.cols() || gram_residual > tol.eq_rel * scale {
        return Ok(UnitaryCompletion {
            witness: None,
            gram_residual,
        });
    }
    let d = x_stack.cols();
    if d == 0 {
        return Ok(UnitaryCompletion {
            witness: Some(CMatrix::zeros(0, 0)),
            gram_residual,
        });
    }
    // X Uᵀ = Y  ⇔  Ū X* = Y*; build W := Ū on ran(X*) and complete.
    let xs = x_stack.adjoint();
    let ys = y_stack.adjoint();
    let (p, s, qh) = svd(&xs);
    let smax = s.first().copied().unwrap_or(0.0);
    let r = if smax == 0.0 {
        0
    } else {
        s.iter().filter(|&&x| x > tol.rank_rel * smax).count()
    };
    let p_r = p.submatrix(0, 0, d, r);
    // W P_r = Y* Q_r Σ_r⁻¹
    let q = qh.adjoint();
    let mut b = ys.matmul(&q.submatrix(0, 0, q.rows(), r));
    for j in 0..r {
        let inv = C64::new(1.0 / s[j], 0.0);
        for i in 0..b.rows() {
            let v = b.get(i, j) * inv;
            b.set(i, j, v);
        }
    }
    // The columns of b are an isometric image of the orthonormal frame P_r.
    let b_on = column_span_basis(&b, tol);
    let mut w = b.matmul(&p_r.adjoint());
    if r < d && b_on.cols() == r {
        let p_comp = kernel_basis(&p_r.adjoint(), tol)?;
        let b_comp = kernel_basis(&b_on.adjoint(), tol)?;
        if p_comp.cols() == b_comp.cols() {
            w = w.add(&b_comp.matmul(&p_comp.adjoint()));
        }
    }
    let u = w.conj();
    // Re-verify the witness; fall back to NO when ill-conditioned.
    let constraint = x_stack.matmul(&u.transpose()).sub(y_stack).frobenius_norm();
    let unitarity = u
        .adjoint()
        .matmul(&u)
        .sub(&CMatrix::identity(d))
        .frobenius_norm();
    let yscale = y_stack.frobenius_norm().max(1.0);
    if constraint <= tol.eq_rel * yscale && unitarity <= tol.eq_rel * (d as f64) {
        Ok(UnitaryCompletion {
            witness: Some(u),
            gram_residual,
        })
    } else {
        Ok(UnitaryCompletion {
            witness: None,
            gram_residual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let m = random_matrix(rng, n, n);
        let (u, _, _) = svd(&m);
        u
    }

    #[test]
    fn rank_identity_and_zero() {
        let tol = Tolerance::default();
        assert_eq!(numerical_rank(&CMatrix::identity(2), &tol).unwrap(), 2);
        assert_eq!(numerical_rank(&CMatrix::zeros(3, 3), &tol).unwrap(), 0);
    }

    #[test]
    fn rank_one_outer_product() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_matrix(&mut rng, 4, 1);
        let v = random_matrix(&mut rng, 4, 1);
        let outer = u.matmul(&v.adjoint());
        assert_eq!(numerical_rank(&outer, &tol).unwrap(), 1);
    }

    #[test]
    fn rank_rejects_non_finite() {
        let tol = Tolerance::default();
        let mut m = CMatrix::zeros(2, 2);
        m.set(0, 0, C64::new(f64::NAN, 0.0));
        assert!(matches!(
            numerical_rank(&m, &tol),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn kernel_of_identity_and_zero() {
        let tol = Tolerance::default();
        assert_eq!(kernel_basis(&CMatrix::identity(3), &tol).unwrap().cols(), 0);
        let k = kernel_basis(&CMatrix::zeros(2, 3), &tol).unwrap();
        assert_eq!(k.cols(), 3);
        let g = k.adjoint().matmul(&k).sub(&CMatrix::identity(3));
        assert!(g.frobenius_norm() < 1e-12);
    }

    #[test]
    fn kernel_of_all_ones() {
        let tol = Tolerance::default();
        let m = CMatrix::from_real(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let k = kernel_basis(&m, &tol).unwrap();
        assert_eq!(k.cols(), 1);
        // Proportional to (1,−1)/√2.
        let ratio = k.get(0, 0) + k.get(1, 0);
        assert!(ratio.norm() < 1e-12);
        assert!((k.get(0, 0).norm() - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(m.matmul(&k).frobenius_norm() < 1e-10);
    }

    #[test]
    fn rank_nullity_on_random_instances() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let rows = rng.gen_range(0..=8);
            let cols = rng.gen_range(0..=8);
            // Mix in rank-deficient products.
            let inner = rng.gen_range(0..=8);
            let m =
                random_matrix(&mut rng, rows, inner).matmul(&random_matrix(&mut rng, inner, cols));
            let r = numerical_rank(&m, &tol).unwrap();
            let k = kernel_basis(&m, &tol).unwrap();
            assert_eq!(r + k.cols(), cols);
            if !m.is_empty() && k.cols() > 0 {
                assert!(m.matmul(&k).operator_norm() <= 1e-8 * m.operator_norm().max(1.0));
            }
        }
    }

    #[test]
    fn unitary_completion_identity_case() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 3, 2);
        let res = unitary_completion_exists(&x, &x, &tol).unwrap();
        let u = res.witness.expect("same stacks always admit a witness");
        assert!(x.matmul(&u.transpose()).sub(&x).frobenius_norm() < 1e-9);
    }

    #[test]
    fn unitary_completion_obstruction() {
        let tol = Tolerance::default();
        let x = CMatrix::from_real(&[&[1.0], &[0.0]]);
        let y = CMatrix::from_real(&[&[0.0], &[1.0]]);
        let res = unitary_completion_exists(&x, &y, &tol).unwrap();
        assert!(!res.exists());
        assert!((res.gram_residual - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unitary_completion_round_trip() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x = random_matrix(&mut rng, 4, 2);
            let v = random_unitary(&mut rng, 2);
            let y = x.matmul(&v.transpose());
            let res = unitary_completion_exists(&x, &y, &tol).unwrap();
            let u = res.witness.expect("constructed instance must solve");
            assert!(
                x.matmul(&u.transpose()).sub(&y).frobenius_norm()
                    <= 1e-8 * y.frobenius_norm().max(1.0)
            );
            assert!(
                u.adjoint()
                    .matmul(&u)
                    .sub(&CMatrix::identity(2))
                    .frobenius_norm()
                    < 1e-8
            );
            // Symmetry of the decision.
            assert!(unitary_completion_exists(&y, &x, &tol).unwrap().exists());
        }
    }

    #[test]
    fn unitary_completion_rank_deficient_round_trip() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            // Rank-deficient stacks force a nontrivial completion step.
            let base = random_matrix(&mut rng, 5, 1);
            let coeff = random_matrix(&mut rng, 1, 3);
            let x = base.matmul(&coeff);
            let v = random_unitary(&mut rng, 3);
            let y = x.matmul(&v.transpose());
            let res = unitary_completion_exists(&x, &y, &tol).unwrap();
            let u = res.witness.expect("solvable by construction");
            assert!(
                x.matmul(&u.transpose()).sub(&y).frobenius_norm()
                    <= 1e-8 * y.frobenius_norm().max(1.0)
            );
            assert!(
                u.adjoint()
                    .matmul(&u)
                    .sub(&CMatrix::identity(3))
                    .frobenius_norm()
                    < 1e-7
            );
        }
    }

    #[test]
    fn complete_to_unitary_extends_isometries() {
        let tol = Tolerance::default();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let m = random_matrix(&mut rng, 4, 2);
        let iso = column_span_basis(&m, &tol);
        let u = complete_to_unitary(&iso, &tol).unwrap();
        assert_eq!(u.cols(), 4);
        let d = u
            .adjoint()
            .matmul(&u)
            .sub(&CMatrix::identity(4))
            .frobenius_norm();
        assert!(d < 1e-12);
        // The first columns are the input isometry.
        assert!(u.submatrix(0, 0, 4, 2).sub(&iso).frobenius_norm() < 1e-14);
        // Non-orthonormal input is rejected.
        assert!(complete_to_unitary(&m, &tol).is_err());
    }

    #[test]
    fn eigh_orders_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 4, 4);
        let h = a.add(&a.adjoint());
        let (vals, vecs) = eigh(&h);
        assert!(vals.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        let mut rec = CMatrix::zeros(4, 4);
        for k in 0..4 {
            let col = vecs.submatrix(0, k, 4, 1);
            rec = rec.add(&col.matmul(&col.adjoint()).scale(C64::new(vals[k], 0.0)));
        }
        assert!(rec.sub(&h).frobenius_norm() < 1e-10);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_matrix(&mut rng, 3, 3);
        let p = a.matmul(&a.adjoint());
        let s = psd_sqrt(&p);
        assert!(s.matmul(&s).sub(&p).frobenius_norm() < 1e-10);
    }
}
