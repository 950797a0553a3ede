//! Single-tone recovery of the parity oscillation `C cos(Nφ + θ)` from a few
//! random angles.
//!
//! The samples are modelled as `y = A x` over a dictionary of cosine and
//! (negated) sine atoms at integer frequencies `1..=n_max`. Recovery runs in
//! two steps: an L1-penalized fit (cyclic coordinate descent) locates the
//! dominant frequency, then an unpenalized two-column least-squares fit on
//! that frequency removes the shrinkage bias of the penalized coefficients.
//!
//! [`fourier_grid_estimate`] is the dense-grid alternative used as an oracle.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::scalar::{wrap_angle, Real};
use crate::simulate::ParitySample;

/// Magnitudes below this are treated as an empty support.
pub const LOW_SIGNAL_THRESHOLD: f64 = 1e-12;
/// Largest accepted condition number of the refinement design matrix.
pub const MAX_OLS_CONDITION: f64 = 1e8;
/// Angles closer than this are considered duplicates by [`sample_angles`].
pub const ANGLE_DUPLICATE_TOL: f64 = 1e-12;

/// `M` i.i.d. uniform angles in `[0, 2π)`, deterministic per seed, with
/// near-duplicates redrawn.
pub fn sample_angles<F: Real>(m: usize, seed: u64) -> Result<Vec<F>> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 angles, got {m}")));
    }
    let mut rng = stream_rng(seed, 0);
    let mut out: Vec<f64> = Vec::with_capacity(m);
    while out.len() < m {
        let phi = rng.random::<f64>() * std::f64::consts::TAU;
        if out.iter().all(|&p| (p - phi).abs() > ANGLE_DUPLICATE_TOL) {
            out.push(phi);
        }
    }
    Ok(out.into_iter().map(F::lit).collect())
}

/// `⌈5 ln N⌉`, the logarithmic sampling budget.
pub fn log_sample_count(n: usize) -> usize {
    (5.0 * (n as f64).ln()).ceil() as usize
}

/// Row `i` is `[cos(kφ_i) for k in 1..=N | -sin(kφ_i) for k in 1..=N]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementMatrix<F> {
    n_max: usize,
    phis: Vec<F>,
    entries: Vec<F>,
}

impl<F: Real> MeasurementMatrix<F> {
    pub fn rows(&self) -> usize {
        self.phis.len()
    }

    pub fn cols(&self) -> usize {
        2 * self.n_max
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn phis(&self) -> &[F] {
        &self.phis
    }

    pub fn get(&self, row: usize, col: usize) -> F {
        self.entries[row * self.cols() + col]
    }

    pub fn column(&self, col: usize) -> Vec<F> {
        (0..self.rows()).map(|i| self.get(i, col)).collect()
    }

    /// `Aᵀ y`.
    pub fn transpose_mul(&self, y: &[F]) -> Vec<F> {
        let mut out = vec![F::zero(); self.cols()];
        for (i, &yi) in y.iter().enumerate() {
            let row = &self.entries[i * self.cols()..(i + 1) * self.cols()];
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        out
    }

    /// `A x`.
    pub fn mul(&self, x: &[F]) -> Vec<F> {
        (0..self.rows())
            .map(|i| {
                let row = &self.entries[i * self.cols()..(i + 1) * self.cols()];
                row.iter().zip(x).map(|(&a, &xj)| a * xj).sum()
            })
            .collect()
    }
}

pub fn build_measurement_matrix<F: Real>(phis: &[F], n_max: usize) -> Result<MeasurementMatrix<F>> {
    if phis.is_empty() {
        return Err(Error::EmptyInput("no sampling angles".into()));
    }
    if n_max == 0 {
        return Err(Error::InvalidSize("n_max must be at least 1".into()));
    }
    let cols = 2 * n_max;
    let mut entries = vec![F::zero(); phis.len() * cols];
    for (i, &phi) in phis.iter().enumerate() {
        let row = &mut entries[i * cols..(i + 1) * cols];
        for k in 1..=n_max {
            let (s, c) = (F::from_count(k) * phi).sin_cos();
            row[k - 1] = c;
            row[n_max + k - 1] = -s;
        }
    }
    Ok(MeasurementMatrix { n_max, phis: phis.to_vec(), entries })
}

/// Cosine (`a`) and sine (`b`) coefficients, index `k - 1` for frequency `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct CoefficientVector<F> {
    pub a: Vec<F>,
    pub b: Vec<F>,
}

impl<F: Real> CoefficientVector<F> {
    pub fn zeros(n_max: usize) -> Self {
        Self { a: vec![F::zero(); n_max], b: vec![F::zero(); n_max] }
    }

    fn from_flat(x: &[F]) -> Self {
        let n = x.len() / 2;
        Self { a: x[..n].to_vec(), b: x[n..].to_vec() }
    }

    pub fn flat(&self) -> Vec<F> {
        self.a.iter().chain(&self.b).copied().collect()
    }

    pub fn n_max(&self) -> usize {
        self.a.len()
    }

    /// `√(a_k² + b_k²)` for frequency `k ≥ 1`.
    pub fn magnitude(&self, k: usize) -> F {
        self.a[k - 1].hypot(self.b[k - 1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit<F> {
    pub coeffs: CoefficientVector<F>,
    pub converged: bool,
    pub sweeps: usize,
    pub objective: F,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct LassoSettings<F> {
    /// Stop once the largest coordinate change in a sweep is below this
    /// times `max |y|`, so the fit scales with the data.
    pub tolerance: F,
    pub max_sweeps: usize,
}

impl<F: Real> Default for LassoSettings<F> {
    fn default() -> Self {
        Self { tolerance: F::lit(1e-8).max(F::epsilon() * F::lit(10.0)), max_sweeps: 10_000 }
    }
}

/// `(1/2M) ‖y − Ax‖² + α ‖x‖₁`.
pub fn lasso_objective<F: Real>(a: &MeasurementMatrix<F>, y: &[F], x: &[F], alpha: F) -> F {
    let m = F::from_count(a.rows());
    let fit = a.mul(x);
    let rss: F = y.iter().zip(&fit).map(|(&yi, &fi)| (yi - fi) * (yi - fi)).sum();
    rss / (F::lit(2.0) * m) + alpha * x.iter().map(|v| v.abs()).sum::<F>()
}

/// Smallest penalty for which the zero vector is optimal: `‖Aᵀy‖_∞ / M`.
pub fn alpha_max<F: Real>(a: &MeasurementMatrix<F>, y: &[F]) -> F {
    let m = F::from_count(a.rows());
    a.transpose_mul(y).into_iter().fold(F::zero(), |acc, v| acc.max(v.abs())) / m
}

fn soft_threshold<F: Real>(v: F, t: F) -> F {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        F::zero()
    }
}

pub fn lasso_fit<F: Real>(a: &MeasurementMatrix<F>, y: &[F], alpha: F) -> Result<LassoFit<F>> {
    lasso_fit_with(a, y, alpha, LassoSettings::default())
}

/// Cyclic coordinate descent with soft-thresholding, starting from zero.
pub fn lasso_fit_with<F: Real>(
    a: &MeasurementMatrix<F>,
    y: &[F],
    alpha: F,
    settings: LassoSettings<F>,
) -> Result<LassoFit<F>> {
    if y.len() != a.rows() {
        return Err(Error::InvalidSize(format!("{} samples for {} matrix rows", y.len(), a.rows())));
    }
    if !(alpha >= F::zero()) {
        return Err(Error::InvalidConfig(format!("Lasso penalty must be non-negative, got {alpha}")));
    }
    let m = F::from_count(a.rows());
    let columns: Vec<Vec<F>> = (0..a.cols()).map(|j| a.column(j)).collect();
    let scale: Vec<F> = columns.iter().map(|c| c.iter().map(|&v| v * v).sum::<F>() / m).collect();
    let y_scale = y.iter().fold(F::zero(), |acc, v| acc.max(v.abs()));
    let tolerance = settings.tolerance * if y_scale > F::zero() { y_scale } else { F::one() };
    let mut x = vec![F::zero(); a.cols()];
    let mut r = y.to_vec();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < settings.max_sweeps {
        sweeps += 1;
        let mut max_step = F::zero();
        for (j, col) in columns.iter().enumerate() {
            if scale[j] <= F::zero() {
                continue;
            }
            let old = x[j];
            let corr = col.iter().zip(&r).map(|(&c, &ri)| c * ri).sum::<F>() / m + scale[j] * old;
            let new = soft_threshold(corr, alpha) / scale[j];
            let step = new - old;
            if step != F::zero() {
                for (ri, &c) in r.iter_mut().zip(col) {
                    *ri -= c * step;
                }
                x[j] = new;
                max_step = max_step.max(step.abs());
            }
        }
        if max_step < tolerance {
            converged = true;
            break;
        }
    }
    let objective = lasso_objective(a, y, &x, alpha);
    Ok(LassoFit { coeffs: CoefficientVector::from_flat(&x), converged, sweeps, objective })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support {
    pub frequency: usize,
    /// Every coefficient magnitude was below [`LOW_SIGNAL_THRESHOLD`].
    pub low_signal: bool,
}

/// Frequency with the largest coefficient magnitude; ties go to the smallest.
pub fn detect_support<F: Real>(coeffs: &CoefficientVector<F>) -> Result<Support> {
    if coeffs.n_max() == 0 {
        return Err(Error::EmptyInput("no coefficients".into()));
    }
    let mut best = (1, coeffs.magnitude(1));
    for k in 2..=coeffs.n_max() {
        let mag = coeffs.magnitude(k);
        if mag > best.1 {
            best = (k, mag);
        }
    }
    if best.1 < F::lit(LOW_SIGNAL_THRESHOLD) {
        return Ok(Support { frequency: 1, low_signal: true });
    }
    Ok(Support { frequency: best.0, low_signal: false })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OlsFit<F> {
    pub a: F,
    pub b: F,
    pub residual: F,
}

/// Least squares of `y ≈ a cos(nφ) − b sin(nφ)` through the 2×2 normal
/// equations.
pub fn ols_refine<F: Real>(phis: &[F], y: &[F], n_rec: usize) -> Result<OlsFit<F>> {
    if phis.len() != y.len() {
        return Err(Error::InvalidSize(format!("{} angles for {} samples", phis.len(), y.len())));
    }
    if phis.len() < 2 {
        return Err(Error::EmptyInput("refinement needs at least 2 samples".into()));
    }
    let freq = F::from_count(n_rec);
    let (mut uu, mut uv, mut vv, mut uy, mut vy) = (F::zero(), F::zero(), F::zero(), F::zero(), F::zero());
    for (&phi, &yi) in phis.iter().zip(y) {
        let (s, c) = (freq * phi).sin_cos();
        let (u, v) = (c, -s);
        uu += u * u;
        uv += u * v;
        vv += v * v;
        uy += u * yi;
        vy += v * yi;
    }
    // eigenvalues of the Gram matrix; cond(design) = sqrt(λmax / λmin)
    let half_tr = (uu + vv) / F::lit(2.0);
    let disc = (((uu - vv) / F::lit(2.0)).powi(2) + uv * uv).sqrt();
    let (lmax, lmin) = (half_tr + disc, half_tr - disc);
    let condition = if lmin > F::zero() { (lmax / lmin).sqrt().as_f64() } else { f64::INFINITY };
    if !(condition < MAX_OLS_CONDITION) {
        return Err(Error::DegenerateAngles { frequency: n_rec, condition });
    }
    let det = uu * vv - uv * uv;
    let a = (vv * uy - uv * vy) / det;
    let b = (uu * vy - uv * uy) / det;
    let residual = phis
        .iter()
        .zip(y)
        .map(|(&phi, &yi)| {
            let (s, c) = (freq * phi).sin_cos();
            let e = yi - (a * c - b * s);
            e * e
        })
        .sum::<F>()
        .sqrt();
    Ok(OlsFit { a, b, residual })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct RecoveryConfig<F> {
    /// Penalty as a fraction of `alpha_max`.
    pub alpha_ratio: F,
    pub lasso: LassoSettings<F>,
}

impl<F: Real> Default for RecoveryConfig<F> {
    fn default() -> Self {
        Self { alpha_ratio: F::lit(0.1), lasso: LassoSettings::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct RecoveryResult<F> {
    pub n_rec: usize,
    pub a: F,
    pub b: F,
    pub coherence: F,
    pub theta: F,
    pub alpha_used: F,
    pub m_samples: usize,
    pub residual_norm: F,
    pub low_signal: bool,
    pub converged: bool,
    /// Empirical mean of the samples; the signal model has none.
    #[serde(skip)]
    pub sample_mean: F,
    /// Lasso magnitude at `n_rec` before refinement.
    #[serde(skip)]
    pub lasso_magnitude: F,
}

impl<F: Real> RecoveryResult<F> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// Default candidate range: nominal GHZ size plus a margin, so a preparation
/// of the wrong size shows up as a different frequency.
pub fn default_n_max(n_nominal: usize) -> usize {
    n_nominal + 8
}

/// Penalized support detection followed by unpenalized refinement.
pub fn recover_coherence<F: Real>(
    samples: &[ParitySample<F>],
    n_max: usize,
    config: &RecoveryConfig<F>,
) -> Result<RecoveryResult<F>> {
    if samples.len() < 2 {
        return Err(Error::EmptyInput(format!("need at least 2 parity samples, got {}", samples.len())));
    }
    let phis: Vec<F> = samples.iter().map(|s| s.phi).collect();
    let y: Vec<F> = samples.iter().map(|s| s.parity).collect();
    let matrix = build_measurement_matrix(&phis, n_max)?;
    let alpha = config.alpha_ratio * alpha_max(&matrix, &y);
    let fit = lasso_fit_with(&matrix, &y, alpha, config.lasso)?;
    let support = detect_support(&fit.coeffs)?;
    let ols = ols_refine(&phis, &y, support.frequency)?;
    let coherence = ols.a.hypot(ols.b);
    let theta = wrap_angle(ols.b.atan2(ols.a));
    Ok(RecoveryResult {
        n_rec: support.frequency,
        a: ols.a,
        b: ols.b,
        coherence,
        theta,
        alpha_used: alpha,
        m_samples: samples.len(),
        residual_norm: ols.residual,
        low_signal: support.low_signal,
        converged: fit.converged,
        sample_mean: y.iter().copied().sum::<F>() / F::from_count(y.len()),
        lasso_magnitude: fit.coeffs.magnitude(support.frequency),
    })
}

/// The `2(N+1)` equally spaced angles `jπ/(N+1)`, `j = 0..=2N+1`.
pub fn fourier_grid<F: Real>(n: usize) -> Vec<F> {
    let step = F::PI() / F::from_count(n + 1);
    (0..2 * (n + 1)).map(|j| F::from_count(j) * step).collect()
}

/// `I_q = (1/(2(N+1))) Σ_j e^{i q j π/(N+1)} 𝒫(jπ/(N+1))`.
pub fn fourier_component<F: Real>(values: &[F], n: usize, q: i64) -> Complex<F> {
    let len = F::from_count(values.len());
    let step = F::PI() / F::from_count(n + 1);
    let qf = F::from_i64(q).expect("frequency fits scalar");
    values
        .iter()
        .enumerate()
        .map(|(j, &v)| Complex::from_polar(v, qf * F::from_count(j) * step))
        .fold(Complex::new(F::zero(), F::zero()), |acc, z| acc + z)
        / len
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct FourierEstimate<F> {
    pub coherence: F,
    pub theta: F,
}

fn check_grid<F>(values: &[F], n: usize) -> Result<()> {
    let expected = 2 * (n + 1);
    if values.len() != expected {
        return Err(Error::InvalidGridLength { n, expected, got: values.len() });
    }
    Ok(())
}

/// `C = |I_N| + |I_{−N}|`, `θ = −arg I_N` from parities on [`fourier_grid`].
pub fn fourier_grid_estimate<F: Real>(values: &[F], n: usize) -> Result<FourierEstimate<F>> {
    check_grid(values, n)?;
    let n_i = n as i64;
    let plus = fourier_component(values, n, n_i);
    let minus = fourier_component(values, n, -n_i);
    Ok(FourierEstimate { coherence: plus.norm() + minus.norm(), theta: wrap_angle(-plus.arg()) })
}

/// Dominant frequency `q ∈ 1..=N` of grid parities by `|I_q| + |I_{−q}|`.
pub fn fourier_peak<F: Real>(values: &[F], n: usize) -> Result<usize> {
    check_grid(values, n)?;
    let mut best = (1, F::neg_infinity());
    for q in 1..=n {
        let q_i = q as i64;
        let mag = fourier_component(values, n, q_i).norm() + fourier_component(values, n, -q_i).norm();
        if mag > best.1 {
            best = (q, mag);
        }
    }
    Ok(best.0)
}
