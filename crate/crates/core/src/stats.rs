//! Spatial covariance models and the Kronecker eigenstructure that drives the
//! eigen-domain filter.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    argsort_desc, hermitian_deviation, hermitian_eig, hermitian_part, kron, kron_apply, real_diag,
    real_trace, unitary_deviation, CMatrix, CVector, C64,
};
use crate::quadrature;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const HERMITIAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const UNITARY_TOL: f64 = 1e-10;
const QUAD_TOL: f64 = 1e-10;

/// Hermitian correlation matrix of one side of the link.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialCovariance {
    entries: CMatrix,
}

impl SpatialCovariance {
    /// Wraps a square Hermitian matrix. Asymmetry above `1e-12` relative to the
    /// largest entry is rejected; the stored matrix is the exact Hermitian part.
    pub fn new(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "covariance must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let scale = entries.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let dev = hermitian_deviation(&entries);
        if dev > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self {
            entries: hermitian_part(&entries),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: CMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        real_trace(&self.entries)
    }

    /// Rescales the matrix so that its trace equals its dimension.
    pub fn trace_normalized(&self) -> Self {
        let t = self.trace();
        if t <= 0.0 {
            return self.clone();
        }
        Self {
            entries: self.entries.scale(self.dim() as f64 / t),
        }
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(hermitian_eig(&self.entries)?.0)
    }
}

/// Eigendecomposition of one Kronecker factor, eigenvalues descending.
#[derive(Clone, Debug)]
struct FactorEigen {
    cov: CMatrix,
    vectors: CMatrix,
    values: Vec<f64>,
}

impl FactorEigen {
    fn of(cov: &SpatialCovariance) -> Result<Self> {
        let (values, vectors) = hermitian_eig(cov.entries())?;
        Ok(Self {
            cov: cov.entries().clone(),
            vectors,
            values: clamp_psd(values)?,
        })
    }

    /// Kronecker product `first ⊗ second`, re-sorted by descending eigenvalue.
    fn kron(first: &FactorEigen, second: &FactorEigen) -> Self {
        let n2 = second.values.len();
        let raw: Vec<f64> = first
            .values
            .iter()
            .flat_map(|a| second.values.iter().map(move |b| a * b))
            .collect();
        let order = argsort_desc(&raw);
        let dense = kron(&first.vectors, &second.vectors);
        let mut vectors = CMatrix::zeros(dense.nrows(), dense.ncols());
        for (dst, &src) in order.iter().enumerate() {
            let mut col: CVector = first.vectors.column(src / n2).kronecker(&second.vectors.column(src % n2));
            crate::linalg::normalize_phase(&mut col);
            vectors.set_column(dst, &col);
        }
        Self {
            cov: kron(&first.cov, &second.cov),
            vectors,
            values: order.iter().map(|&i| raw[i]).collect(),
        }
    }
}

fn clamp_psd(values: Vec<f64>) -> Result<Vec<f64>> {
    let max = values.iter().cloned().fold(0.0, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOL * max.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd {
            min_eig: min,
            max_eig: max,
        });
    }
    Ok(values.into_iter().map(|v| v.max(0.0)).collect())
}

/// Kronecker channel statistics `R_h = R_t ⊗ R_r` with their eigenstructure.
///
/// Block `i` of the stacked eigenvalue vector (length `N_r`) holds `σ_i γ_j`,
/// the eigenvalues seen along transmit eigen-direction `u_i`.
#[derive(Clone, Debug)]
pub struct ChannelStatistics {
    tx_cov: SpatialCovariance,
    rx_cov: SpatialCovariance,
    tx_eigvecs: CMatrix,
    rx_eigvecs: CMatrix,
    tx_eigvals: Vec<f64>,
    rx_eigvals: Vec<f64>,
    eig_stacked: Vec<f64>,
    r_h: CMatrix,
}

impl ChannelStatistics {
    /// Builds statistics from prescribed eigen-spectra. Covariances are
    /// reconstructed as `U diag(σ) Uᴴ` and `V diag(γ) Vᴴ`.
    pub fn from_spectra(
        tx_eigvecs: CMatrix,
        tx_eigvals: Vec<f64>,
        rx_eigvecs: CMatrix,
        rx_eigvals: Vec<f64>,
    ) -> Result<Self> {
        let tx = FactorEigen {
            cov: &tx_eigvecs * real_diag(&tx_eigvals) * tx_eigvecs.adjoint(),
            vectors: tx_eigvecs,
            values: tx_eigvals,
        };
        let rx = FactorEigen {
            cov: &rx_eigvecs * real_diag(&rx_eigvals) * rx_eigvecs.adjoint(),
            vectors: rx_eigvecs,
            values: rx_eigvals,
        };
        Self::from_factors(tx, rx)
    }

    fn from_factors(tx: FactorEigen, rx: FactorEigen) -> Result<Self> {
        for (f, name) in [(&tx, "tx"), (&rx, "rx")] {
            let n = f.values.len();
            if f.vectors.nrows() != n || f.vectors.ncols() != n || f.cov.nrows() != n {
                return Err(Error::Dimension(format!("{name} eigenstructure is inconsistent")));
            }
            let dev = unitary_deviation(&f.vectors);
            if dev > UNITARY_TOL {
                return Err(Error::param("eigvecs", format!("{name} eigenvectors not unitary ({dev:e})")));
            }
            if f.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::param("eigvals", format!("{name} eigenvalues must be finite and nonnegative")));
            }
        }
        let eig_stacked = tx
            .values
            .iter()
            .flat_map(|s| rx.values.iter().map(move |g| s * g))
            .collect();
        let r_h = kron(&tx.cov, &rx.cov);
        Ok(Self {
            tx_cov: SpatialCovariance::new(tx.cov)?,
            rx_cov: SpatialCovariance::new(rx.cov)?,
            tx_eigvecs: tx.vectors,
            rx_eigvecs: rx.vectors,
            tx_eigvals: tx.values,
            rx_eigvals: rx.values,
            eig_stacked,
            r_h,
        })
    }

    pub fn n_t(&self) -> usize {
        self.tx_eigvals.len()
    }

    pub fn n_r(&self) -> usize {
        self.rx_eigvals.len()
    }

    /// Length of the vectorised channel, `N_t * N_r`.
    pub fn dim(&self) -> usize {
        self.eig_stacked.len()
    }

    pub fn tx_cov(&self) -> &SpatialCovariance {
        &self.tx_cov
    }

    pub fn rx_cov(&self) -> &SpatialCovariance {
        &self.rx_cov
    }

    pub fn tx_eigvecs(&self) -> &CMatrix {
        &self.tx_eigvecs
    }

    pub fn rx_eigvecs(&self) -> &CMatrix {
        &self.rx_eigvecs
    }

    pub fn tx_eigvals(&self) -> &[f64] {
        &self.tx_eigvals
    }

    pub fn rx_eigvals(&self) -> &[f64] {
        &self.rx_eigvals
    }

    /// Stacked eigenvalues `diag(Σ ⊗ Γ)`.
    pub fn eig_stacked(&self) -> &[f64] {
        &self.eig_stacked
    }

    /// Eigenvalue block of transmit direction `i` (0-based).
    pub fn block(&self, i: usize) -> &[f64] {
        let n_r = self.n_r();
        &self.eig_stacked[i * n_r..(i + 1) * n_r]
    }

    /// Transmit eigenvector `u_i` (0-based).
    pub fn tx_eigvec(&self, i: usize) -> CVector {
        self.tx_eigvecs.column(i).into_owned()
    }

    /// Dense `R_h = R_t ⊗ R_r`.
    pub fn covariance(&self) -> &CMatrix {
        &self.r_h
    }

    /// `tr(R_h)`.
    pub fn trace(&self) -> f64 {
        self.eig_stacked.iter().sum()
    }

    /// Colours a white vector: `(U ⊗ V) diag(λ)^{1/2} z`.
    pub fn colour(&self, z: &CVector) -> CVector {
        let scaled = CVector::from_iterator(
            z.len(),
            z.iter().zip(&self.eig_stacked).map(|(zi, l)| zi * l.sqrt()),
        );
        kron_apply(&self.tx_eigvecs, &self.rx_eigvecs, &scaled)
    }

    /// Statistics with the transmit covariance multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::param("factor", "scale factor must be positive and finite"));
        }
        let tx = FactorEigen {
            cov: self.tx_cov.entries().scale(factor),
            vectors: self.tx_eigvecs.clone(),
            values: self.tx_eigvals.iter().map(|v| v * factor).collect(),
        };
        let rx = FactorEigen {
            cov: self.rx_cov.entries().clone(),
            vectors: self.rx_eigvecs.clone(),
            values: self.rx_eigvals.clone(),
        };
        Self::from_factors(tx, rx)
    }

    /// Replaces the receive side, keeping the transmit eigenstructure.
    pub fn with_rx(&self, rx: &SpatialCovariance) -> Result<Self> {
        let tx = FactorEigen {
            cov: self.tx_cov.entries().clone(),
            vectors: self.tx_eigvecs.clone(),
            values: self.tx_eigvals.clone(),
        };
        Self::from_factors(tx, FactorEigen::of(rx)?)
    }
}

/// Exponential correlation model with entries `r^{2|i-j|}`.
pub fn exp_covariance(n: usize, r: f64) -> Result<SpatialCovariance> {
    if n == 0 {
        return Err(Error::param("n", "antenna count must be at least 1"));
    }
    if !(0.0..1.0).contains(&r) {
        return Err(Error::param("r", format!("correlation coefficient must lie in [0, 1), got {r}")));
    }
    let entries = CMatrix::from_fn(n, n, |i, j| {
        let d = i.abs_diff(j) as i32;
        C64::new(r.powi(2 * d), 0.0)
    });
    SpatialCovariance::new(entries)
}

/// Uniform linear array illuminated by a ring of scatterers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneRingGeometry {
    /// Antenna count.
    pub n: usize,
    /// Angle of arrival in radians.
    pub aoa: f64,
    /// Half-width of the angular support in radians.
    pub angle_spread: f64,
    /// Antenna spacing in wavelengths.
    pub spacing: f64,
}

impl OneRingGeometry {
    pub fn new(n: usize, aoa: f64, angle_spread: f64, spacing: f64) -> Result<Self> {
        let g = Self {
            n,
            aoa,
            angle_spread,
            spacing,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", "antenna count must be at least 1"));
        }
        if !self.aoa.is_finite() {
            return Err(Error::param("aoa", "angle of arrival must be finite"));
        }
        if !(self.angle_spread > 0.0 && self.angle_spread.is_finite()) {
            return Err(Error::param("angle_spread", "angle spread must be positive"));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::param("spacing", "antenna spacing must be positive"));
        }
        Ok(())
    }

    /// Correlation at antenna lag `lag`, `(1/2Δ) ∫ e^{-ι2πD·lag·sin α} dα` over `[θ-Δ, θ+Δ]`.
    pub fn correlation(&self, lag: i64) -> Result<C64> {
        if lag == 0 {
            return Ok(C64::new(1.0, 0.0));
        }
        let w = -2.0 * PI * self.spacing * lag as f64;
        let lo = self.aoa - self.angle_spread;
        let hi = self.aoa + self.angle_spread;
        let width = 2.0 * self.angle_spread;
        let integral =
            quadrature::integrate(|alpha| C64::new(0.0, w * alpha.sin()).exp(), lo, hi, QUAD_TOL, width)?;
        Ok(integral / width)
    }

    /// Unit-norm array response `e^{-ι2πD m sin φ} / √n` at angle `phi`.
    pub fn steering_vector(&self, phi: f64) -> CVector {
        let scale = 1.0 / (self.n as f64).sqrt();
        CVector::from_fn(self.n, |m, _| {
            C64::new(0.0, -2.0 * PI * self.spacing * m as f64 * phi.sin()).exp() * scale
        })
    }
}

/// One-ring covariance: Hermitian Toeplitz with unit diagonal.
pub fn one_ring_covariance(g: &OneRingGeometry) -> Result<SpatialCovariance> {
    g.validate()?;
    let n = g.n;
    let lags = (0..n).map(|d| g.correlation(d as i64)).collect::<Result<Vec<_>>>()?;
    let entries = CMatrix::from_fn(n, n, |i, j| {
        if i >= j {
            lags[i - j]
        } else {
            lags[j - i].conj()
        }
    });
    SpatialCovariance::new(entries)
}

/// Planar array at elevation below a ring of scatterers around the receiver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpaGeometry {
    pub n_vertical: usize,
    pub n_horizontal: usize,
    pub elevation_m: f64,
    pub ring_radius_m: f64,
    pub distance_m: f64,
    pub horizontal_aoa: f64,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
}

impl Default for UpaGeometry {
    /// 10 x 25 array, 60 m elevation, 30 m ring at 100 m, θ_H = π/6, α = 3.8, d₀ = 30 m.
    fn default() -> Self {
        Self {
            n_vertical: 10,
            n_horizontal: 25,
            elevation_m: 60.0,
            ring_radius_m: 30.0,
            distance_m: 100.0,
            horizontal_aoa: PI / 6.0,
            path_loss_exponent: 3.8,
            reference_distance_m: 30.0,
        }
    }
}

impl UpaGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.n_vertical == 0 {
            return Err(Error::param("n_vertical", "must be at least 1"));
        }
        if self.n_horizontal == 0 {
            return Err(Error::param("n_horizontal", "must be at least 1"));
        }
        for (v, name) in [
            (self.elevation_m, "elevation_m"),
            (self.ring_radius_m, "ring_radius_m"),
            (self.distance_m, "distance_m"),
            (self.reference_distance_m, "reference_distance_m"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "length must be positive"));
            }
        }
        if !self.horizontal_aoa.is_finite() || !self.path_loss_exponent.is_finite() {
            return Err(Error::param("horizontal_aoa", "angles and exponents must be finite"));
        }
        Ok(())
    }

    fn edge_angles(&self) -> (f64, f64) {
        let far = ((self.distance_m + self.ring_radius_m) / self.elevation_m).atan();
        let near = ((self.distance_m - self.ring_radius_m) / self.elevation_m).atan();
        (far, near)
    }

    /// `Δ_V = (atan((s+r)/h) - atan((s-r)/h)) / 2`.
    pub fn vertical_spread(&self) -> f64 {
        let (far, near) = self.edge_angles();
        0.5 * (far - near)
    }

    /// `θ_V = (atan((s+r)/h) + atan((s-r)/h)) / 2`.
    pub fn vertical_aoa(&self) -> f64 {
        let (far, near) = self.edge_angles();
        0.5 * (far + near)
    }

    /// `Δ_H = atan(r/s)`.
    pub fn horizontal_spread(&self) -> f64 {
        (self.ring_radius_m / self.distance_m).atan()
    }

    /// Large-scale gain `(1 + (s/d₀)^α)^{-1}`.
    pub fn path_loss(&self) -> f64 {
        1.0 / (1.0 + (self.distance_m / self.reference_distance_m).powf(self.path_loss_exponent))
    }

    pub fn vertical(&self) -> OneRingGeometry {
        OneRingGeometry {
            n: self.n_vertical,
            aoa: self.vertical_aoa(),
            angle_spread: self.vertical_spread(),
            spacing: 0.5,
        }
    }

    pub fn horizontal(&self) -> OneRingGeometry {
        OneRingGeometry {
            n: self.n_horizontal,
            aoa: self.horizontal_aoa,
            angle_spread: self.horizontal_spread(),
            spacing: 0.5,
        }
    }

    pub fn n_t(&self) -> usize {
        self.n_vertical * self.n_horizontal
    }
}

/// Statistics of the planar array: transmit covariance `R_H ⊗ R_V`, scalar receiver.
pub fn upa_covariance(g: &UpaGeometry) -> Result<ChannelStatistics> {
    g.validate()?;
    let r_v = one_ring_covariance(&g.vertical())?;
    let r_h = one_ring_covariance(&g.horizontal())?;
    let tx = FactorEigen::kron(&FactorEigen::of(&r_h)?, &FactorEigen::of(&r_v)?);
    ChannelStatistics::from_factors(tx, FactorEigen::of(&SpatialCovariance::identity(1))?)
}

/// Kronecker statistics from transmit and receive covariances.
pub fn kron_stats(tx: &SpatialCovariance, rx: &SpatialCovariance) -> Result<ChannelStatistics> {
    ChannelStatistics::from_factors(FactorEigen::of(tx)?, FactorEigen::of(rx)?)
}

/// Column `bin` of the unitary DFT matrix, `e^{-ι2π m·bin/n} / √n`.
pub fn dft_column(n: usize, bin: usize) -> CVector {
    let scale = 1.0 / (n as f64).sqrt();
    CVector::from_fn(n, |m, _| {
        let phase = -2.0 * PI * ((m * bin) % n) as f64 / n as f64;
        C64::new(0.0, phase).exp() * scale
    })
}

/// Virtual angle of a DFT bin, wrapped to `[-1/2, 1/2)`.
pub fn virtual_angle(n: usize, bin: usize) -> f64 {
    let x = bin as f64 / n as f64;
    if x >= 0.5 {
        x - 1.0
    } else {
        x
    }
}

/// DFT bins whose physical angle `asin(ξ/D)` falls strictly inside `(θ-Δ, θ+Δ)`,
/// in ascending bin order.
pub fn dft_support(n: usize, aoa: f64, angle_spread: f64, spacing: f64) -> Vec<usize> {
    (0..n)
        .filter(|&b| {
            let s = virtual_angle(n, b) / spacing;
            if s.abs() > 1.0 {
                return false;
            }
            let phi = s.asin();
            phi > aoa - angle_spread && phi < aoa + angle_spread
        })
        .collect()
}

/// In-support bins, or the single bin whose virtual angle is closest to
/// `D sin θ` when the angular support is narrower than the DFT grid.
pub fn effective_support(n: usize, aoa: f64, angle_spread: f64, spacing: f64) -> Vec<usize> {
    let support = dft_support(n, aoa, angle_spread, spacing);
    if !support.is_empty() {
        return support;
    }
    let target = spacing * aoa.sin();
    let dist = |b: usize| {
        let d = (virtual_angle(n, b) - target).rem_euclid(1.0);
        d.min(1.0 - d)
    };
    let nearest = (0..n).fold(0, |best, b| if dist(b) < dist(best) { b } else { best });
    vec![nearest]
}

/// Default power profile: the spectrum `f_bᴴ R f_b` of `exact` sampled on `bins`,
/// rescaled to sum to the array size.
pub fn tdt_default_profile(exact: &SpatialCovariance, bins: &[usize]) -> Vec<f64> {
    let n = exact.dim();
    let raw: Vec<f64> = bins
        .iter()
        .map(|&b| {
            let f = dft_column(n, b);
            (f.adjoint() * exact.entries() * &f)[(0, 0)].re.max(0.0)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|v| v * n as f64 / total).collect()
    } else {
        vec![n as f64 / bins.len().max(1) as f64; bins.len()]
    }
}

fn dft_factor(n: usize, aoa: f64, angle_spread: f64, spacing: f64, profile: &[f64]) -> Result<FactorEigen> {
    OneRingGeometry::new(n, aoa, angle_spread, spacing)?;
    let support = effective_support(n, aoa, angle_spread, spacing);
    if profile.len() != support.len() {
        return Err(Error::param(
            "power_profile",
            format!("expected {} support bins, got {}", support.len(), profile.len()),
        ));
    }
    if profile.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::param("power_profile", "entries must be finite and nonnegative"));
    }
    let total: f64 = profile.iter().sum();
    if (total - n as f64).abs() > 1e-8 * n as f64 {
        return Err(Error::param("power_profile", format!("must sum to {n}, sums to {total}")));
    }
    let order = argsort_desc(profile);
    let mut bins: Vec<usize> = order.iter().map(|&i| support[i]).collect();
    let mut values: Vec<f64> = order.iter().map(|&i| profile[i]).collect();
    for b in 0..n {
        if !support.contains(&b) {
            bins.push(b);
            values.push(0.0);
        }
    }
    let mut vectors = CMatrix::zeros(n, n);
    for (c, &b) in bins.iter().enumerate() {
        vectors.set_column(c, &dft_column(n, b));
    }
    let cov = &vectors * real_diag(&values) * vectors.adjoint();
    Ok(FactorEigen {
        cov: hermitian_part(&cov),
        vectors,
        values,
    })
}

/// DFT/Toeplitz-distribution approximation of a one-ring ULA covariance with a
/// scalar receiver: `R ≈ F D Fᴴ` with in-support DFT columns carrying `power_profile`.
pub fn dft_tdt_approx(
    n: usize,
    aoa: f64,
    angle_spread: f64,
    spacing: f64,
    power_profile: &[f64],
) -> Result<ChannelStatistics> {
    let tx = dft_factor(n, aoa, angle_spread, spacing, power_profile)?;
    ChannelStatistics::from_factors(tx, FactorEigen::of(&SpatialCovariance::identity(1))?)
}

/// DFT/TDT approximation of a one-ring ULA using the default profile derived
/// from the exact covariance.
pub fn dft_tdt_default(g: &OneRingGeometry) -> Result<ChannelStatistics> {
    let tx = dft_factor_default(g)?;
    ChannelStatistics::from_factors(tx, FactorEigen::of(&SpatialCovariance::identity(1))?)
}

fn dft_factor_default(g: &OneRingGeometry) -> Result<FactorEigen> {
    let exact = one_ring_covariance(g)?;
    let bins = effective_support(g.n, g.aoa, g.angle_spread, g.spacing);
    let profile = tdt_default_profile(&exact, &bins);
    dft_factor(g.n, g.aoa, g.angle_spread, g.spacing, &profile)
}

/// DFT/TDT approximation of the planar array, `(F_H D_H F_Hᴴ) ⊗ (F_V D_V F_Vᴴ)`
/// with default per-axis profiles.
pub fn dft_tdt_upa(g: &UpaGeometry) -> Result<ChannelStatistics> {
    g.validate()?;
    let h = dft_factor_default(&g.horizontal())?;
    let v = dft_factor_default(&g.vertical())?;
    ChannelStatistics::from_factors(FactorEigen::kron(&h, &v), FactorEigen::of(&SpatialCovariance::identity(1))?)
}

/// Zeroth-order Bessel function of the first kind via `(1/π) ∫₀^π cos(x sin t) dt`.
pub fn bessel_j0(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    quadrature::integrate(|t| C64::new((x * t.sin()).cos(), 0.0), 0.0, PI, 1e-14, PI)
        .map(|v| v.re / PI)
        .unwrap_or(f64::NAN)
}

/// Temporal correlation `a = J₀(2π f_D T_s)` with `f_D = v f_c / c`, clamped to `(0, 1]`.
///
/// `velocity` in m/s, `carrier_hz` in Hz, `symbol_s` in seconds.
pub fn doppler_coefficient(velocity: f64, carrier_hz: f64, symbol_s: f64) -> Result<f64> {
    if !(velocity >= 0.0 && velocity.is_finite()) {
        return Err(Error::param("velocity", "must be finite and nonnegative"));
    }
    if !(carrier_hz > 0.0 && carrier_hz.is_finite()) {
        return Err(Error::param("carrier_hz", "must be positive"));
    }
    if !(symbol_s > 0.0 && symbol_s.is_finite()) {
        return Err(Error::param("symbol_s", "must be positive"));
    }
    let f_d = velocity * carrier_hz / SPEED_OF_LIGHT;
    let a = bessel_j0(2.0 * PI * f_d * symbol_s);
    Ok(a.clamp(f64::EPSILON, 1.0))
}

/// Converts km/h to m/s.
pub fn kmh_to_mps(v: f64) -> f64 {
    v / 3.6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_two_by_two() {
        let r = exp_covariance(2, 0.6).unwrap();
        assert!((r.entries()[(0, 1)].re - 0.36).abs() < 1e-15);
        assert_eq!(r.entries()[(0, 0)].re, 1.0);
        let eig = r.eigenvalues().unwrap();
        assert!((eig[0] - 1.36).abs() < 1e-12 && (eig[1] - 0.64).abs() < 1e-12);
    }

    #[test]
    fn exp_zero_is_identity_and_bad_r_rejected() {
        let r = exp_covariance(3, 0.0).unwrap();
        assert_eq!(r.entries(), &CMatrix::identity(3, 3));
        assert!(exp_covariance(3, 1.0).is_err());
        assert!(exp_covariance(3, -0.1).is_err());
    }

    #[test]
    fn kron_of_identities() {
        let s = kron_stats(&SpatialCovariance::identity(2), &SpatialCovariance::identity(2)).unwrap();
        assert_eq!(s.eig_stacked(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(s.tx_eigvecs(), &CMatrix::identity(2, 2));
        assert_eq!(s.rx_eigvecs(), &CMatrix::identity(2, 2));
    }

    #[test]
    fn kron_exp_with_scalar() {
        let s = kron_stats(&exp_covariance(2, 0.6).unwrap(), &SpatialCovariance::identity(1)).unwrap();
        assert!((s.eig_stacked()[0] - 1.36).abs() < 1e-12);
        assert!((s.eig_stacked()[1] - 0.64).abs() < 1e-12);
    }

    #[test]
    fn upa_angles() {
        let g = UpaGeometry::default();
        assert!((g.horizontal_spread() - 0.3f64.atan()).abs() < 1e-15);
        assert!((g.horizontal_spread() - 0.29146).abs() < 1e-5);
        let expected = 0.5 * ((130.0f64 / 60.0).atan() + (70.0f64 / 60.0).atan());
        assert_eq!(g.vertical_aoa(), expected);
        assert!((g.vertical_aoa() - 1.000_28).abs() < 1e-5);
    }

    #[test]
    fn doppler_values() {
        assert_eq!(doppler_coefficient(0.0, 2.5e9, 1e-4).unwrap(), 1.0);
        let a30 = doppler_coefficient(kmh_to_mps(30.0), 2.5e9, 1e-4).unwrap();
        assert!((a30 - 0.9995).abs() < 5e-5, "{a30}");
        let a3 = doppler_coefficient(kmh_to_mps(3.0), 2.5e9, 1e-4).unwrap();
        assert!((a3 - 0.999995).abs() < 1e-6, "{a3}");
        assert!(doppler_coefficient(-1.0, 2.5e9, 1e-4).is_err());
    }

    #[test]
    fn dft_support_full_span_is_every_bin() {
        assert_eq!(dft_support(8, 0.0, PI / 2.0 + 0.1, 0.5).len(), 8);
        assert!(dft_support(8, 0.0, 1e-6, 0.5).len() <= 1);
    }
}
