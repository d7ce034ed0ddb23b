//! Dense complex linear algebra helpers shared by the estimation and design code.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are returned in descending order; equal eigenvalues keep the
/// order produced by the solver. Every eigenvector is phase-normalised with
/// [`normalize_phase`].
pub fn hermitian_eig(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let sym = hermitian_part(m);
    let eig = SymmetricEigen::try_new(sym, EIG_EPS, EIG_MAX_ITER).ok_or(Error::EigenNonConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col: CVector = eig.eigenvectors.column(src).into_owned();
        normalize_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

/// Rotates `v` by a global phase so that its largest-magnitude entry is real
/// and positive. Entries within a relative 1e-12 of the maximum count as ties
/// and the lowest index wins.
pub fn normalize_phase(v: &mut CVector) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-12))
        .unwrap_or(0);
    let p = v[pivot];
    let rot = p.conj() / p.norm();
    for z in v.iter_mut() {
        *z *= rot;
    }
}

/// `(M + Mᴴ) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entry of `|M - Mᴴ|`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Frobenius norm of `Uᴴ U - I`.
pub fn unitary_deviation(u: &CMatrix) -> f64 {
    let g = u.adjoint() * u;
    (g - CMatrix::identity(u.ncols(), u.ncols())).norm()
}

/// Dense Kronecker product `A ⊗ B`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Computes `(U ⊗ V) x` without forming the Kronecker product, using
/// `(U ⊗ V) vec(X) = vec(V X Uᵀ)` with `X` of size `rows(V) x rows(U)`.
pub fn kron_apply(u: &CMatrix, v: &CMatrix, x: &CVector) -> CVector {
    let x_mat = CMatrix::from_column_slice(v.ncols(), u.ncols(), x.as_slice());
    let y = v * x_mat * u.transpose();
    CVector::from_column_slice(y.as_slice())
}

/// Computes `(U ⊗ V)ᴴ x = vec(Vᴴ X conj(U))`.
pub fn kron_apply_adjoint(u: &CMatrix, v: &CMatrix, x: &CVector) -> CVector {
    let x_mat = CMatrix::from_column_slice(v.nrows(), u.nrows(), x.as_slice());
    let y = v.adjoint() * x_mat * u.map(|z| z.conj());
    CVector::from_column_slice(y.as_slice())
}

/// Measurement matrix `[s_1 ⊗ I, ..., s_q ⊗ I]` for beams given as the columns of `beams`.
pub fn measurement_matrix(beams: &CMatrix, n_r: usize) -> CMatrix {
    kron(beams, &CMatrix::identity(n_r, n_r))
}

/// Solves `A X = B` for Hermitian positive definite `A` by Cholesky factorisation.
pub fn hermitian_solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let chol = Cholesky::new(hermitian_part(a)).ok_or(Error::SingularInnovation)?;
    Ok(chol.solve(b))
}

/// Real trace of a Hermitian matrix.
pub fn real_trace(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// `Sᴴ P S` for the measurement matrix `S = s ⊗ I_{n_r}`, evaluated without forming `S`.
pub fn beam_quadratic(p: &CMatrix, s: &CVector, n_r: usize) -> CMatrix {
    let n_t = s.len();
    let mut out = CMatrix::zeros(n_r, n_r);
    for t2 in 0..n_t {
        let s2 = s[t2];
        if s2 == C64::new(0.0, 0.0) {
            continue;
        }
        for t1 in 0..n_t {
            let w = s[t1].conj() * s2;
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            for r2 in 0..n_r {
                for r1 in 0..n_r {
                    out[(r1, r2)] += w * p[(t1 * n_r + r1, t2 * n_r + r2)];
                }
            }
        }
    }
    out
}

/// Effective gain `(s ⊗ I)ᴴ h = H conj(s)` of a beam applied to a vectorised channel.
pub fn beam_gain(s: &CVector, h: &CVector, n_r: usize) -> CVector {
    let mut g = CVector::zeros(n_r);
    for (t, st) in s.iter().enumerate() {
        let c = st.conj();
        for r in 0..n_r {
            g[r] += c * h[t * n_r + r];
        }
    }
    g
}

/// Reshapes a vectorised channel into its `N_r x N_t` matrix form.
pub fn unvec(h: &CVector, n_r: usize) -> CMatrix {
    CMatrix::from_column_slice(n_r, h.len() / n_r, h.as_slice())
}

/// Real diagonal matrix embedded as a complex matrix.
pub fn real_diag(d: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&DVector::from_iterator(
        d.len(),
        d.iter().map(|&x| C64::new(x, 0.0)),
    ))
}

/// Indices of `values` sorted descending, ties by lowest index.
pub fn argsort_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    order
}

/// Orthonormalises the columns of `m` (thin QR), fixing each column's phase.
pub fn orthonormal_columns(m: &CMatrix) -> CMatrix {
    let q = m.clone().qr().q();
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    for c in 0..m.ncols() {
        let mut col: CVector = q.column(c).into_owned();
        normalize_phase(&mut col);
        out.set_column(c, &col);
    }
    out
}
