#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use pilot_kalman_core::{kron_stats, ChannelStatistics, RngStream, SpatialCovariance};

pub type C = Complex64;
pub type M = DMatrix<C>;

/// Random Hermitian PSD matrix with trace `n` and a condition number bounded by the ridge.
pub fn random_psd(n: usize, rng: &mut RngStream) -> SpatialCovariance {
    let a = M::from_fn(n, n, |_, _| rng.complex_gaussian());
    let mut r = &a * a.adjoint() + M::identity(n, n).scale(0.05);
    let tr: f64 = (0..n).map(|i| r[(i, i)].re).sum();
    r = r.scale(n as f64 / tr);
    let r = (&r + r.adjoint()).scale(0.5);
    SpatialCovariance::new(r).unwrap()
}

pub fn random_stats(n_t: usize, n_r: usize, rng: &mut RngStream) -> ChannelStatistics {
    kron_stats(&random_psd(n_t, rng), &random_psd(n_r, rng)).unwrap()
}

/// Dense Kronecker product, written out entry by entry.
pub fn kron_dense(a: &M, b: &M) -> M {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    M::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// `S = [s_1 ⊗ I, ..., s_q ⊗ I]`.
pub fn stacked_measurement(beams: &[nalgebra::DVector<C>], n_r: usize) -> M {
    let n_t = beams[0].len();
    let eye = M::identity(n_r, n_r);
    let mut s = M::zeros(n_t * n_r, beams.len() * n_r);
    for (c, b) in beams.iter().enumerate() {
        let col = M::from_column_slice(n_t, 1, b.as_slice());
        s.view_mut((0, c * n_r), (n_t * n_r, n_r)).copy_from(&kron_dense(&col, &eye));
    }
    s
}

/// Batch LMMSE posterior of `h ~ CN(0, R)` from `y = Sᴴ h + w`, via LU inversion.
pub fn batch_lmmse(r: &M, s: &M, y: &nalgebra::DVector<C>, noise_var: f64) -> (nalgebra::DVector<C>, M) {
    let q = s.ncols();
    let innov = s.adjoint() * r * s + M::identity(q, q).scale(noise_var);
    let inv = innov.try_inverse().expect("invertible innovation covariance");
    let gain = r * s * inv;
    let mean = &gain * y;
    let cov = r - &gain * s.adjoint() * r;
    (mean, cov)
}

pub fn rel_fro(a: &M, b: &M) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn random_unit(n: usize, rng: &mut RngStream) -> nalgebra::DVector<C> {
    let v = rng.complex_gaussian_vec(n);
    let nv = v.norm();
    v.unscale(nv)
}
