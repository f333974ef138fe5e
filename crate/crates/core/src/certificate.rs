//! Lyapunov–Krasovskii constants for the predictor loop and the resulting
//! robustness certificate.
//!
//! With `V` solving `(A + Q(0)F)ᵀV + V(A + Q(0)F) = −(W′ + 2FᵀW″F)`, the functional
//!
//! ```text
//! v(x, φ) = ‖x + ∫ Q(θ) φ(θ) dθ‖²_V + ∫ e^{σθ} ‖φ(θ)‖²_{W″} dθ,   σ = λ_min(W′)/λ_max(V)
//! ```
//!
//! is sandwiched between `m_u‖φ‖²`, `m_x‖x‖²` and `M(‖x‖² + ‖φ‖²)`, and along the
//! mismatched loop decays at rate `σ̂ = σ − k₁‖ΔQ‖ − k₂‖ΔQ‖²`. A positive `σ̂`
//! certifies exponential stability; a failed certificate says nothing about
//! instability.

use nalgebra::DMatrix;

use crate::delay_model::{check_pair, ControllerSpec, DelaySystem};
use crate::error::{Error, Result};
use crate::matrix_ops::{
    expm, require_spd, solve_lyapunov, spectral_abscissa, sym_eig_extremes, symmetrize, MatrixNorm,
    QuadratureGrid,
};
use crate::reduction::{compute_kernel, delta_kernel_norm, gram_matrix, q_at_zero, KernelGrid};

/// Default number of base grid points on `[−h, 0]`.
pub const DEFAULT_GRID_POINTS: usize = 2001;

/// Certification requires the spectral abscissa of `A + Q(0)F` below `−HURWITZ_MARGIN`.
pub const HURWITZ_MARGIN: f64 = 1e-9;

/// Weights `W′ > 0` (n×n) and `W″ > 0` (r×r).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightChoice {
    w_prime: DMatrix<f64>,
    w_dprime: DMatrix<f64>,
}

impl WeightChoice {
    pub fn new(w_prime: DMatrix<f64>, w_dprime: DMatrix<f64>) -> Result<Self> {
        require_spd(&w_prime, "W'")?;
        require_spd(&w_dprime, "W''")?;
        Ok(Self { w_prime, w_dprime })
    }

    /// `W′ = Iₙ`, `W″ = ½ I_r`.
    pub fn default_for(state_dim: usize, input_dim: usize) -> Self {
        Self {
            w_prime: DMatrix::identity(state_dim, state_dim),
            w_dprime: DMatrix::identity(input_dim, input_dim) * 0.5,
        }
    }

    pub fn w_prime(&self) -> &DMatrix<f64> {
        &self.w_prime
    }

    pub fn w_dprime(&self) -> &DMatrix<f64> {
        &self.w_dprime
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.w_prime * c, &self.w_dprime * c)
    }

    fn check_dims(&self, n: usize, r: usize) -> Result<()> {
        if self.w_prime.nrows() != n || self.w_dprime.nrows() != r {
            return Err(Error::Dimension(format!(
                "weights are {}x{} and {}x{}, expected {n}x{n} and {r}x{r}",
                self.w_prime.nrows(),
                self.w_prime.ncols(),
                self.w_dprime.nrows(),
                self.w_dprime.ncols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub grid_points: usize,
    pub norm: MatrixNorm,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            norm: MatrixNorm::Spectral,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RobustnessCertificate {
    pub v_matrix: DMatrix<f64>,
    pub sigma: f64,
    pub upper_m: f64,
    pub m_u: f64,
    pub m_x: f64,
    pub gram: DMatrix<f64>,
    pub k1: f64,
    pub k2: f64,
    /// Only defined when the plant has a single discrete delay.
    pub k3: Option<f64>,
    pub delta_q_norm: f64,
    pub sigma_hat: f64,
    pub threshold_sq: f64,
    pub certified: bool,
    pub envelope_x: f64,
    pub envelope_u: f64,
    pub spectral_abscissa: f64,
    pub horizon: f64,
    pub weights: WeightChoice,
    pub options: CertifyOptions,
    /// Nodes of the grid actually used, after split points were added.
    pub grid_nodes: usize,
}

/// `V` from the closed-loop Lyapunov equation with `a_cl = A + Q(0)F`.
pub fn lyapunov_matrix(
    a: &DMatrix<f64>,
    q0: &DMatrix<f64>,
    f: &DMatrix<f64>,
    w: &WeightChoice,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    w.check_dims(n, f.nrows())?;
    if q0.shape() != (n, f.nrows()) || f.ncols() != n {
        return Err(Error::Dimension(format!(
            "Q(0) is {}x{} and F is {}x{} for n = {n}",
            q0.nrows(),
            q0.ncols(),
            f.nrows(),
            f.ncols()
        )));
    }
    let a_cl = a + q0 * f;
    let abscissa = spectral_abscissa(&a_cl)?;
    if abscissa >= -HURWITZ_MARGIN {
        return Err(Error::NotHurwitz { abscissa });
    }
    let rhs = &w.w_prime + f.transpose() * &w.w_dprime * f * 2.0;
    solve_lyapunov(&a_cl, &symmetrize(&rhs))
}

/// `σ = λ_min(W′) / λ_max(V)`.
pub fn decay_rate_sigma(v: &DMatrix<f64>, w_prime: &DMatrix<f64>) -> Result<f64> {
    let (w_min, _) = sym_eig_extremes(w_prime)?;
    let (_, v_max) = sym_eig_extremes(v)?;
    if w_min <= 0.0 || v_max <= 0.0 {
        return Err(Error::NotPositiveDefinite("V or W'".into()));
    }
    Ok(w_min / v_max)
}

/// Upper constant `M` with `v(x, φ) ≤ M(‖x‖² + ‖φ‖²)`:
///
/// `M = max{ 2λ_max(V)·max(1, ‖e^{Ah}‖²), λ_max(W″) + 2h λ_max(V) max_θ ‖Q(θ)‖² }`.
///
/// The first entry is floored at `2λ_max(V)`: for a Hurwitz `A` with
/// `‖e^{Ah}‖ < 1`, the state part alone reaches `λ_max(V)‖x‖²` at `φ = 0`.
pub fn upper_bound_m(
    v: &DMatrix<f64>,
    w_dprime: &DMatrix<f64>,
    a: &DMatrix<f64>,
    kernel: &KernelGrid,
    h: f64,
    norm: MatrixNorm,
) -> Result<f64> {
    let (_, v_max) = sym_eig_extremes(v)?;
    let (_, w_max) = sym_eig_extremes(w_dprime)?;
    let growth = norm.eval(&expm(&(a * h))?).powi(2).max(1.0);
    let q_max = kernel.max_norm(norm);
    Ok((2.0 * v_max * growth).max(w_max + 2.0 * h * v_max * q_max * q_max))
}

/// `m_u = e^{−σh} λ_min(W″)` and `m_x = λ_min((V⁻¹ + m_u⁻¹ G)⁻¹)`.
pub fn lower_bounds(
    v: &DMatrix<f64>,
    w_dprime: &DMatrix<f64>,
    sigma: f64,
    h: f64,
    gram: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    let (w_min, _) = sym_eig_extremes(w_dprime)?;
    let m_u = (-sigma * h).exp() * w_min;
    let n = v.nrows();
    let v_inv = v
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("V is singular or indefinite".into()))?
        .solve(&DMatrix::identity(n, n));
    let s = symmetrize(&(v_inv + gram / m_u));
    // λ_min(S⁻¹) = 1/λ_max(S) for S > 0
    let (_, s_max) = sym_eig_extremes(&s)?;
    Ok((m_u, 1.0 / s_max))
}

/// `k₁ = ‖V Q(0) F‖ / min{λ_min(V), m_u}`, `k₂ = 2 λ_max(W″) ‖F‖² / m_u`.
pub fn robustness_gains(
    v: &DMatrix<f64>,
    q0: &DMatrix<f64>,
    f: &DMatrix<f64>,
    w_dprime: &DMatrix<f64>,
    m_u: f64,
    norm: MatrixNorm,
) -> Result<(f64, f64)> {
    if m_u.is_nan() || m_u <= 0.0 {
        return Err(Error::Domain(format!("m_u must be positive, got {m_u}")));
    }
    let (v_min, _) = sym_eig_extremes(v)?;
    let (_, w_max) = sym_eig_extremes(w_dprime)?;
    let k1 = norm.eval(&(v * q0 * f)) / v_min.min(m_u);
    let k2 = 2.0 * w_max * norm.eval(f).powi(2) / m_u;
    Ok((k1, k2))
}

/// Squared positive root `z*²` of `k₂z² + k₁z − σ = 0`.
///
/// Evaluated as `z* = 2σ / (√(k₁² + 4k₂σ) + k₁)`, which equals
/// `(√(k₁² + 4k₂σ) − k₁)/(2k₂)` without cancellation, gives `σ/k₁` when
/// `k₂ = 0`, and `+∞` when both gains vanish.
pub fn robustness_threshold(sigma: f64, k1: f64, k2: f64) -> Result<f64> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::Certification(format!(
            "decay rate sigma must be positive, got {sigma}"
        )));
    }
    if !(k1 >= 0.0 && k2 >= 0.0) {
        return Err(Error::Domain(format!(
            "gains must be nonnegative, got {k1}, {k2}"
        )));
    }
    if k1 == 0.0 && k2 == 0.0 {
        return Ok(f64::INFINITY);
    }
    let z = 2.0 * sigma / ((k1 * k1 + 4.0 * k2 * sigma).sqrt() + k1);
    Ok(z * z)
}

/// Grid on `[−h, 0]` split at every atom and kernel discontinuity of both systems.
pub fn shared_grid(
    plant: &DelaySystem,
    model: &DelaySystem,
    base_points: usize,
) -> Result<QuadratureGrid> {
    let mut splits = plant.split_points();
    splits.extend(model.split_points());
    QuadratureGrid::new(plant.horizon(), base_points, &splits)
}

/// Runs the whole pipeline for a plant and a controller designed from a model.
pub fn certify(
    plant: &DelaySystem,
    controller: &ControllerSpec,
    weights: &WeightChoice,
    options: CertifyOptions,
) -> Result<RobustnessCertificate> {
    check_pair(plant, controller)?;
    let (n, r) = (plant.state_dim(), plant.input_dim());
    weights.check_dims(n, r)?;
    let norm = options.norm;
    let h = plant.horizon();
    let grid = shared_grid(plant, &controller.model, options.grid_points)?;
    let q = compute_kernel(plant, &grid)?;
    let q_hat = compute_kernel(&controller.model, &grid)?;
    let q0 = q_at_zero(&q);
    let a = plant.a_matrix();
    let f = &controller.gain;

    let abscissa = spectral_abscissa(&(a + &q0 * f))?;
    let v = lyapunov_matrix(a, &q0, f, weights)?;
    let sigma = decay_rate_sigma(&v, &weights.w_prime)?;
    let upper_m = upper_bound_m(&v, &weights.w_dprime, a, &q, h, norm)?;
    let gram = gram_matrix(&q);
    let (m_u, m_x) = lower_bounds(&v, &weights.w_dprime, sigma, h, &gram)?;
    let (k1, k2) = robustness_gains(&v, &q0, f, &weights.w_dprime, m_u, norm)?;
    let delta_q_norm = delta_kernel_norm(&q, &q_hat, norm)?;
    let threshold_sq = robustness_threshold(sigma, k1, k2)?;
    let sigma_hat = sigma - k1 * delta_q_norm - k2 * delta_q_norm * delta_q_norm;
    let certified = delta_q_norm * delta_q_norm < threshold_sq && abscissa < -HURWITZ_MARGIN;

    let k3 = plant.as_single_delay().and_then(|tap| {
        let nb = norm.eval(&tap.gain);
        (nb > 0.0).then(|| 2.0 * norm.eval(a) / (nb * nb) * threshold_sq)
    });

    Ok(RobustnessCertificate {
        v_matrix: v,
        sigma,
        upper_m,
        m_u,
        m_x,
        gram,
        k1,
        k2,
        k3,
        delta_q_norm,
        sigma_hat,
        threshold_sq,
        certified,
        envelope_x: upper_m / m_x,
        envelope_u: upper_m / m_u,
        spectral_abscissa: abscissa,
        horizon: h,
        weights: weights.clone(),
        options,
        grid_nodes: grid.len(),
    })
}

/// Closed-form certificate for `ẋ = Ax + Bu(t − δ)` under a controller
/// that assumes the delay `δ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorollaryBound {
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub horizon: f64,
    /// Admissible `|δ̂ − δ|`; `+∞` when both gains vanish.
    pub delay_bound: f64,
    pub certified: bool,
}

pub fn corollary_single_delay(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    delta: f64,
    delta_hat_probe: f64,
    w: &WeightChoice,
    norm: MatrixNorm,
) -> Result<CorollaryBound> {
    if !(delta >= 0.0 && delta_hat_probe >= 0.0) {
        return Err(Error::Domain(format!(
            "delays must be nonnegative, got {delta} and {delta_hat_probe}"
        )));
    }
    let n = a.nrows();
    if b.nrows() != n || f.shape() != (b.ncols(), n) {
        return Err(Error::Dimension("A, B, F shapes do not match".into()));
    }
    let h = delta.max(delta_hat_probe);
    let q0 = expm(&(a * -delta))? * b;
    let v = lyapunov_matrix(a, &q0, f, w)?;
    let sigma = decay_rate_sigma(&v, &w.w_prime)?;
    let (w_min, _) = sym_eig_extremes(&w.w_dprime)?;
    let m_u = (-sigma * h).exp() * w_min;
    let (k1, k2) = robustness_gains(&v, &q0, f, &w.w_dprime, m_u, norm)?;
    let z_sq = robustness_threshold(sigma, k1, k2)?;

    let na = norm.eval(a);
    let nb = norm.eval(b);
    let (k3, delay_bound) = if z_sq.is_infinite() || nb == 0.0 {
        (if na > 0.0 { f64::INFINITY } else { 0.0 }, f64::INFINITY)
    } else if na == 0.0 {
        (0.0, z_sq / (nb * nb))
    } else {
        let k3 = 2.0 * na / (nb * nb) * z_sq;
        let e = (2.0 * na * h).exp();
        // √(1 + k₃E) − 1 without cancellation
        let root = k3 * e / ((1.0 + k3 * e).sqrt() + 1.0);
        (k3, (root / e).ln_1p() / na)
    };
    Ok(CorollaryBound {
        sigma,
        k1,
        k2,
        k3,
        horizon: h,
        delay_bound,
        certified: (delta_hat_probe - delta).abs() < delay_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay_model::DiscreteTap;
    use nalgebra::dmatrix;

    const E: f64 = std::f64::consts::E;

    fn s1_weights() -> WeightChoice {
        WeightChoice::new(dmatrix![1.0], dmatrix![0.5]).unwrap()
    }

    fn scalar_tap(delay: f64, horizon: f64) -> DelaySystem {
        DelaySystem::new(
            dmatrix![0.0],
            1,
            vec![DiscreteTap::new(dmatrix![1.0], delay)],
            None,
            Some(horizon),
        )
        .unwrap()
    }

    fn s1_certificate(delta_hat: f64) -> RobustnessCertificate {
        let h = delta_hat.max(1.0);
        let plant = scalar_tap(1.0, h);
        let ctrl = ControllerSpec::new(scalar_tap(delta_hat, h), dmatrix![-1.0]).unwrap();
        certify(&plant, &ctrl, &s1_weights(), CertifyOptions::default()).unwrap()
    }

    #[test]
    fn lyapunov_matrix_examples() {
        let v = lyapunov_matrix(
            &dmatrix![0.0],
            &dmatrix![1.0],
            &dmatrix![-1.0],
            &s1_weights(),
        )
        .unwrap();
        assert!((v[(0, 0)] - 1.0).abs() < 1e-15);
        let w = WeightChoice::new(DMatrix::identity(2, 2), dmatrix![1.0]).unwrap();
        let v = lyapunov_matrix(
            &dmatrix![-1.0, 0.0; 0.0, -2.0],
            &dmatrix![1.0; 1.0],
            &dmatrix![0.0, 0.0],
            &w,
        )
        .unwrap();
        assert!((v - dmatrix![0.5, 0.0; 0.0, 0.25]).amax() < 1e-15);
    }

    #[test]
    fn zero_w_dprime_is_rejected() {
        assert!(matches!(
            WeightChoice::new(dmatrix![1.0], dmatrix![0.0]),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn not_hurwitz_reports_abscissa() {
        let err = lyapunov_matrix(
            &dmatrix![0.0],
            &dmatrix![1.0],
            &dmatrix![1.0],
            &s1_weights(),
        )
        .unwrap_err();
        assert_eq!(err, Error::NotHurwitz { abscissa: 1.0 });
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(
            decay_rate_sigma(&dmatrix![1.0], &dmatrix![1.0]).unwrap(),
            1.0
        );
        let s =
            decay_rate_sigma(&(DMatrix::identity(2, 2) * 2.0), &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(s, 0.5);
        let s =
            decay_rate_sigma(&dmatrix![1.0, 0.0; 0.0, 4.0], &dmatrix![2.0, 0.0; 0.0, 3.0]).unwrap();
        assert_eq!(s, 0.5);
    }

    #[test]
    fn upper_m_examples() {
        let g = |sys: &DelaySystem| QuadratureGrid::new(1.0, 101, &sys.split_points()).unwrap();
        let s1 = scalar_tap(1.0, 1.0);
        let q = compute_kernel(&s1, &g(&s1)).unwrap();
        let m = upper_bound_m(
            &dmatrix![1.0],
            &dmatrix![0.5],
            &dmatrix![0.0],
            &q,
            1.0,
            MatrixNorm::Spectral,
        )
        .unwrap();
        assert!((m - 2.5).abs() < 1e-15);

        let zero = DelaySystem::new(
            dmatrix![0.0],
            1,
            vec![DiscreteTap::new(dmatrix![0.0], 1.0)],
            None,
            None,
        )
        .unwrap();
        let q = compute_kernel(&zero, &g(&zero)).unwrap();
        let m = upper_bound_m(
            &dmatrix![1.0],
            &dmatrix![1.0],
            &dmatrix![0.0],
            &q,
            1.0,
            MatrixNorm::Spectral,
        )
        .unwrap();
        assert_eq!(m, 2.0);

        let big = DelaySystem::new(
            dmatrix![0.0],
            1,
            vec![DiscreteTap::new(dmatrix![2.0], 1.0)],
            None,
            None,
        )
        .unwrap();
        let q = compute_kernel(&big, &g(&big)).unwrap();
        let m = upper_bound_m(
            &dmatrix![1.0],
            &dmatrix![0.5],
            &dmatrix![0.0],
            &q,
            1.0,
            MatrixNorm::Spectral,
        )
        .unwrap();
        assert!((m - 8.5).abs() < 1e-14);
    }

    #[test]
    fn upper_m_state_term_is_floored_for_stable_a() {
        // A = -0.5, B = 0.1, F = 0: the unfloored state term 2 V e^{-1} ≈ 0.74
        // would fall below v(x, 0) = V x² = x².
        let plant = DelaySystem::single_delay(dmatrix![-0.5], dmatrix![0.1], 1.0).unwrap();
        let ctrl = ControllerSpec::new(plant.clone(), dmatrix![0.0]).unwrap();
        let w = WeightChoice::new(dmatrix![1.0], dmatrix![0.5]).unwrap();
        let cert = certify(&plant, &ctrl, &w, CertifyOptions::default()).unwrap();
        let v = cert.v_matrix[(0, 0)];
        assert!((v - 1.0).abs() < 1e-14);
        assert!(2.0 * v * (-1.0f64).exp() < v);
        assert!(cert.upper_m >= v);
        assert!((cert.upper_m - 2.0).abs() < 1e-14);
    }

    #[test]
    fn lower_bounds_examples() {
        let (mu, mx) =
            lower_bounds(&dmatrix![1.0], &dmatrix![0.5], 1.0, 1.0, &dmatrix![1.0]).unwrap();
        assert!((mu - 0.5 / E).abs() < 1e-16);
        assert!((mx - 1.0 / (1.0 + 1.0 / mu)).abs() < 1e-15);
        let v = dmatrix![2.0, 0.5; 0.5, 1.0];
        let (_, mx) = lower_bounds(&v, &dmatrix![1.0], 1.0, 1.0, &DMatrix::zeros(2, 2)).unwrap();
        let (vmin, _) = sym_eig_extremes(&v).unwrap();
        assert!((mx - vmin).abs() < 1e-14);
        // V = 1, m_u = 1 (σ = 0, W″ = 1), G = 1
        let (mu, mx) =
            lower_bounds(&dmatrix![1.0], &dmatrix![1.0], 0.0, 1.0, &dmatrix![1.0]).unwrap();
        assert_eq!(mu, 1.0);
        assert!((mx - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gains_examples() {
        let mu = 0.5 / E;
        let (k1, k2) = robustness_gains(
            &dmatrix![1.0],
            &dmatrix![1.0],
            &dmatrix![-1.0],
            &dmatrix![0.5],
            mu,
            MatrixNorm::Spectral,
        )
        .unwrap();
        assert!((k1 - 2.0 * E).abs() < 1e-13);
        assert!((k2 - 2.0 * E).abs() < 1e-13);
        let (k1, k2) = robustness_gains(
            &dmatrix![1.0],
            &dmatrix![1.0],
            &dmatrix![0.0],
            &dmatrix![0.5],
            mu,
            MatrixNorm::Spectral,
        )
        .unwrap();
        assert_eq!((k1, k2), (0.0, 0.0));
        let (k1, _) = robustness_gains(
            &DMatrix::identity(1, 1),
            &dmatrix![2.0],
            &dmatrix![1.0],
            &dmatrix![1.0],
            0.5,
            MatrixNorm::Spectral,
        )
        .unwrap();
        assert_eq!(k1, 4.0);
    }

    #[test]
    fn threshold_examples() {
        let k = 2.0 * E;
        let t = robustness_threshold(1.0, k, k).unwrap();
        let z = ((k * k + 4.0 * k).sqrt() - k) / (2.0 * k);
        assert!((t - z * z).abs() < 1e-16);
        assert!((t - 0.025_198_708_817_271_168).abs() < 1e-12);
        assert!((robustness_threshold(1.0, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(robustness_threshold(1.0, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(robustness_threshold(1.0, 0.0, 0.0).unwrap(), f64::INFINITY);
        assert!(matches!(
            robustness_threshold(0.0, 1.0, 1.0),
            Err(Error::Certification(_))
        ));
    }

    #[test]
    fn certify_s1_exact_model() {
        let c = s1_certificate(1.0);
        assert_eq!(c.delta_q_norm, 0.0);
        assert_eq!(c.sigma_hat, c.sigma);
        assert!((c.sigma - 1.0).abs() < 1e-14);
        assert!(c.certified);
        assert_eq!(c.k3, Some(0.0));
    }

    #[test]
    fn certify_s1_small_mismatch() {
        let c = s1_certificate(0.98);
        assert!((c.delta_q_norm.powi(2) - 0.02).abs() < 1e-12);
        // σ̂ = 1 − 2e√0.02 − 2e·0.02
        let expected = 1.0 - 2.0 * E * 0.02f64.sqrt() - 2.0 * E * 0.02;
        assert!((c.sigma_hat - expected).abs() < 1e-12);
        assert!((c.sigma_hat - 0.122_422_521_229_814_92).abs() < 1e-10);
        assert!(c.certified);
    }

    #[test]
    fn certify_s1_large_mismatch_not_certified() {
        let c = s1_certificate(0.9);
        assert!((c.delta_q_norm.powi(2) - 0.1).abs() < 1e-12);
        assert!(!c.certified);
        assert!(c.sigma_hat < 0.0);
    }

    #[test]
    fn certify_rejects_unequal_horizons() {
        let plant = scalar_tap(1.0, 1.0);
        let ctrl = ControllerSpec::new(scalar_tap(0.9, 0.9), dmatrix![-1.0]).unwrap();
        assert!(matches!(
            certify(&plant, &ctrl, &s1_weights(), CertifyOptions::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn corollary_s1_matches_threshold() {
        let c = corollary_single_delay(
            &dmatrix![0.0],
            &dmatrix![1.0],
            &dmatrix![-1.0],
            1.0,
            0.98,
            &s1_weights(),
            MatrixNorm::Spectral,
        )
        .unwrap();
        assert!((c.delay_bound - 0.025_198_708_817_271_168).abs() < 1e-12);
        assert!(c.certified);
        assert_eq!(c.k3, 0.0);
    }

    #[test]
    fn corollary_exact_delay_is_certified() {
        let w = WeightChoice::new(dmatrix![3.0], dmatrix![0.1]).unwrap();
        let c = corollary_single_delay(
            &dmatrix![0.4],
            &dmatrix![2.0],
            &dmatrix![-1.0],
            0.6,
            0.6,
            &w,
            MatrixNorm::Spectral,
        )
        .unwrap();
        assert!(c.delay_bound > 0.0 && c.certified);
    }

    #[test]
    fn corollary_open_loop_stable_is_unbounded() {
        let c = corollary_single_delay(
            &dmatrix![-1.0],
            &dmatrix![1.0],
            &dmatrix![0.0],
            1.0,
            3.0,
            &s1_weights(),
            MatrixNorm::Spectral,
        )
        .unwrap();
        assert_eq!((c.k1, c.k2), (0.0, 0.0));
        assert_eq!(c.delay_bound, f64::INFINITY);
        assert!(c.certified);
    }

    #[test]
    fn corollary_stable_scalar_oracle() {
        // A = −0.5, B = 1, δ = δ̂ = 1, F = −1, W′ = 1, W″ = 0.5; independent scalar evaluation
        let c = corollary_single_delay(
            &dmatrix![-0.5],
            &dmatrix![1.0],
            &dmatrix![-1.0],
            1.0,
            1.0,
            &s1_weights(),
            MatrixNorm::Spectral,
        )
        .unwrap();
        assert!((c.sigma - 2.148_721_270_700_128).abs() < 1e-12);
        assert!((c.k1 - 13.157_547_441_125_255).abs() < 1e-9);
        assert!((c.k2 - 17.147_775_405_958_242).abs() < 1e-9);
        assert!((c.k3 - 0.019_143_099_262_071_89).abs() < 1e-12);
        assert!((c.delay_bound - 0.018_811_594_090_593_49).abs() < 1e-12);
    }
}
