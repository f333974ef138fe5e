//! Linear plants with discrete and distributed input delays,
//!
//! ```text
//! ẋ(t) = A x(t) + Σᵢ Bᵢ u(t − hᵢ) + ∫_{−h_int}^0 B_int(θ) u(t + θ) dθ,
//! ```
//!
//! written as a Stieltjes integral `∫_{−h}^0 dβ(θ) u(t + θ)` over a common
//! horizon `h`. The same type describes the true plant and the controller's
//! estimated model.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Matrix-valued function of θ.
pub type KernelFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// A discrete input lag `B u(t − delay)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTap {
    pub gain: DMatrix<f64>,
    pub delay: f64,
}

impl DiscreteTap {
    pub fn new(gain: DMatrix<f64>, delay: f64) -> Self {
        Self { gain, delay }
    }
}

#[derive(Clone)]
struct KernelPiece {
    start: f64,
    end: f64,
    // interior kinks, used as extra quadrature nodes in `beta_eval`
    nodes: Vec<f64>,
    eval: KernelFn,
}

/// Piecewise-continuous kernel `B_int(θ)` on `[−span, 0]`.
///
/// Each piece is continuous on its closed interval; piece boundaries are the
/// declared discontinuities. Left and right limits at a boundary come from
/// the neighbouring pieces.
#[derive(Clone)]
pub struct IntegralKernel {
    span: f64,
    pieces: Vec<KernelPiece>,
}

impl fmt::Debug for IntegralKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntegralKernel")
            .field("span", &self.span)
            .field("discontinuities", &self.discontinuities())
            .finish()
    }
}

impl IntegralKernel {
    /// A kernel continuous on all of `[−span, 0]`.
    pub fn continuous<F>(span: f64, f: F) -> Result<Self>
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::piecewise(span, Vec::new(), vec![Arc::new(f) as KernelFn])
    }

    /// `pieces[k]` applies on `[breaks[k-1], breaks[k]]` with `−span` and `0`
    /// as the outer ends.
    pub fn piecewise(span: f64, breaks: Vec<f64>, pieces: Vec<KernelFn>) -> Result<Self> {
        if !(span.is_finite() && span >= 0.0) {
            return Err(Error::Config(format!(
                "kernel span must be nonnegative, got {span}"
            )));
        }
        if pieces.len() != breaks.len() + 1 {
            return Err(Error::Config(format!(
                "{} kernel pieces need {} break points, got {}",
                pieces.len(),
                pieces.len().saturating_sub(1),
                breaks.len()
            )));
        }
        let mut edges = Vec::with_capacity(breaks.len() + 2);
        edges.push(-span);
        edges.extend(breaks.iter().copied());
        edges.push(0.0);
        let unordered =
            edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]);
        if unordered && !(span == 0.0 && breaks.is_empty()) {
            return Err(Error::Config(format!(
                "kernel discontinuities must be strictly increasing inside (-{span}, 0): {breaks:?}"
            )));
        }
        let pieces = pieces
            .into_iter()
            .enumerate()
            .map(|(k, eval)| KernelPiece {
                start: edges[k],
                end: edges[k + 1],
                nodes: Vec::new(),
                eval,
            })
            .collect();
        Ok(Self { span, pieces })
    }

    /// Linear interpolation through `(theta, value)` samples.
    ///
    /// `theta` must start at `−span`, end at `0` and be nondecreasing. A
    /// repeated abscissa marks a jump: the first sample is the left limit,
    /// the second the right limit.
    pub fn sampled(thetas: &[f64], values: &[DMatrix<f64>]) -> Result<Self> {
        if thetas.len() != values.len() || thetas.len() < 2 {
            return Err(Error::Config(
                "sampled kernel needs at least two samples with matching values".into(),
            ));
        }
        if *thetas.last().unwrap() != 0.0 {
            return Err(Error::Config("sampled kernel must end at theta = 0".into()));
        }
        if thetas.iter().any(|t| t.is_nan()) || thetas.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config(
                "sampled kernel thetas must be nondecreasing".into(),
            ));
        }
        if thetas.windows(3).any(|w| w[0] == w[1] && w[1] == w[2]) {
            return Err(Error::Config(
                "at most two samples may share a theta".into(),
            ));
        }
        let shape = values[0].shape();
        if values.iter().any(|v| v.shape() != shape) {
            return Err(Error::Dimension(
                "sampled kernel values differ in shape".into(),
            ));
        }
        let span = -thetas[0];

        // split into runs separated by repeated abscissae
        let mut runs: Vec<(Vec<f64>, Vec<DMatrix<f64>>)> = vec![(Vec::new(), Vec::new())];
        for (k, (&t, v)) in thetas.iter().zip(values).enumerate() {
            if k > 0 && thetas[k - 1] == t {
                runs.push((Vec::new(), Vec::new()));
            }
            let run = runs.last_mut().unwrap();
            run.0.push(t);
            run.1.push(v.clone());
        }
        if runs.iter().any(|r| r.0.len() < 2) {
            return Err(Error::Config(
                "each continuous run of a sampled kernel needs two distinct samples".into(),
            ));
        }
        let breaks: Vec<f64> = runs[1..].iter().map(|r| r.0[0]).collect();
        let mut pieces = Vec::with_capacity(runs.len());
        let mut nodes = Vec::with_capacity(runs.len());
        for (ts, vs) in runs {
            nodes.push(ts[1..ts.len() - 1].to_vec());
            let f: KernelFn = Arc::new(move |theta: f64| interpolate(&ts, &vs, theta));
            pieces.push(f);
        }
        let mut kernel = Self::piecewise(span, breaks, pieces)?;
        for (piece, n) in kernel.pieces.iter_mut().zip(nodes) {
            piece.nodes = n;
        }
        Ok(kernel)
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn discontinuities(&self) -> Vec<f64> {
        self.pieces[1..].iter().map(|p| p.start).collect()
    }

    /// Right limit `B_int(θ⁺)`; zero outside `[−span, 0]`.
    pub fn eval_right(&self, theta: f64) -> Option<DMatrix<f64>> {
        if theta < -self.span || theta > 0.0 || self.span == 0.0 {
            return None;
        }
        let k = self
            .pieces
            .partition_point(|p| p.end <= theta)
            .min(self.pieces.len() - 1);
        Some((self.pieces[k].eval)(theta))
    }

    /// Left limit `B_int(θ⁻)`; zero outside `[−span, 0]`.
    pub fn eval_left(&self, theta: f64) -> Option<DMatrix<f64>> {
        if theta < -self.span || theta > 0.0 || self.span == 0.0 {
            return None;
        }
        let k = self
            .pieces
            .partition_point(|p| p.end < theta)
            .min(self.pieces.len() - 1);
        Some((self.pieces[k].eval)(theta))
    }

    /// `∫_{−span}^{upper} B_int(τ) dτ` by composite trapezoid per piece.
    fn integral_to(&self, upper: f64, rows: usize, cols: usize) -> DMatrix<f64> {
        const SUBDIVISIONS: usize = 256;
        let mut acc = DMatrix::zeros(rows, cols);
        for piece in &self.pieces {
            if piece.start >= upper {
                break;
            }
            let hi = piece.end.min(upper);
            let mut knots: Vec<f64> = (0..=SUBDIVISIONS)
                .map(|k| piece.start + (hi - piece.start) * k as f64 / SUBDIVISIONS as f64)
                .collect();
            knots.extend(
                piece
                    .nodes
                    .iter()
                    .copied()
                    .filter(|&t| t > piece.start && t < hi),
            );
            knots.sort_by(f64::total_cmp);
            knots.dedup();
            let mut prev = (piece.eval)(knots[0]);
            for w in knots.windows(2) {
                let next = (piece.eval)(w[1]);
                acc += (&prev + &next) * (0.5 * (w[1] - w[0]));
                prev = next;
            }
        }
        acc
    }
}

fn interpolate(ts: &[f64], vs: &[DMatrix<f64>], theta: f64) -> DMatrix<f64> {
    let k = ts.partition_point(|&t| t <= theta);
    if k == 0 {
        return vs[0].clone();
    }
    if k >= ts.len() {
        return vs[ts.len() - 1].clone();
    }
    let (t0, t1) = (ts[k - 1], ts[k]);
    let frac = (theta - t0) / (t1 - t0);
    &vs[k - 1] * (1.0 - frac) + &vs[k] * frac
}

/// Linear time-invariant plant with input delays over a shared horizon `h`.
#[derive(Debug, Clone)]
pub struct DelaySystem {
    a: DMatrix<f64>,
    input_dim: usize,
    taps: Vec<DiscreteTap>,
    kernel: Option<IntegralKernel>,
    horizon: f64,
}

impl DelaySystem {
    /// Validates dimensions and delays. `horizon = None` uses the largest delay.
    pub fn new(
        a: DMatrix<f64>,
        input_dim: usize,
        taps: Vec<DiscreteTap>,
        kernel: Option<IntegralKernel>,
        horizon: Option<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::Dimension(format!(
                "A must be a non-empty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if input_dim == 0 {
            return Err(Error::Dimension("input dimension must be positive".into()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("A has non-finite entries".into()));
        }
        for (i, tap) in taps.iter().enumerate() {
            if tap.gain.shape() != (n, input_dim) {
                return Err(Error::Dimension(format!(
                    "tap {i} gain is {}x{}, expected {n}x{input_dim}",
                    tap.gain.nrows(),
                    tap.gain.ncols()
                )));
            }
            if !(tap.delay.is_finite() && tap.delay >= 0.0) {
                return Err(Error::Domain(format!(
                    "tap {i} delay must be nonnegative, got {}",
                    tap.delay
                )));
            }
        }
        for i in 0..taps.len() {
            for j in i + 1..taps.len() {
                if taps[i].delay == taps[j].delay {
                    return Err(Error::Config(format!(
                        "taps {i} and {j} share delay {}; merge their gains",
                        taps[i].delay
                    )));
                }
            }
        }
        if let Some(k) = &kernel {
            if k.span > 0.0 {
                for piece in &k.pieces {
                    let mid = 0.5 * (piece.start + piece.end);
                    let shape = (piece.eval)(mid).shape();
                    if shape != (n, input_dim) {
                        return Err(Error::Dimension(format!(
                            "integral kernel is {}x{}, expected {n}x{input_dim}",
                            shape.0, shape.1
                        )));
                    }
                }
            }
        }

        let max_delay = taps
            .iter()
            .map(|t| t.delay)
            .chain(kernel.iter().map(|k| k.span))
            .fold(0.0, f64::max);
        let horizon = horizon.unwrap_or(max_delay);
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if horizon < max_delay {
            return Err(Error::Config(format!(
                "horizon {horizon} is shorter than the largest delay {max_delay}"
            )));
        }
        Ok(Self {
            a,
            input_dim,
            taps,
            kernel,
            horizon,
        })
    }

    /// `ẋ = A x + B u(t − delay)`.
    pub fn single_delay(a: DMatrix<f64>, b: DMatrix<f64>, delay: f64) -> Result<Self> {
        let r = b.ncols();
        Self::new(a, r, vec![DiscreteTap::new(b, delay)], None, None)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn taps(&self) -> &[DiscreteTap] {
        &self.taps
    }

    pub fn kernel(&self) -> Option<&IntegralKernel> {
        self.kernel.as_ref()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn max_delay(&self) -> f64 {
        self.taps
            .iter()
            .map(|t| t.delay)
            .chain(self.kernel.iter().map(|k| k.span))
            .fold(0.0, f64::max)
    }

    /// Same system over a longer horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(
            self.a.clone(),
            self.input_dim,
            self.taps.clone(),
            self.kernel.clone(),
            Some(horizon),
        )
    }

    /// Same system with its `index`-th tap moved to `delay`.
    pub fn with_tap_delay(&self, index: usize, delay: f64) -> Result<Self> {
        let mut taps = self.taps.clone();
        let tap = taps
            .get_mut(index)
            .ok_or_else(|| Error::Config(format!("no tap with index {index}")))?;
        tap.delay = delay;
        Self::new(
            self.a.clone(),
            self.input_dim,
            taps,
            self.kernel.clone(),
            None,
        )
    }

    /// The single tap `(B, δ)` when the system has exactly one discrete
    /// delay and no integral kernel.
    pub fn as_single_delay(&self) -> Option<&DiscreteTap> {
        let no_kernel = self.kernel.as_ref().is_none_or(|k| k.span == 0.0);
        (self.taps.len() == 1 && no_kernel).then(|| &self.taps[0])
    }

    /// Points of `[−h, 0]` where β has an atom or its density jumps.
    pub fn split_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.taps.iter().map(|t| -t.delay).collect();
        if let Some(k) = &self.kernel {
            if k.span > 0.0 {
                pts.push(-k.span);
                pts.extend(k.discontinuities());
            }
        }
        pts
    }
}

/// `β(θ) = Σᵢ Bᵢ χ(θ + hᵢ) + ∫_{−h_int}^{max(θ, −h_int)} B_int(τ) dτ` with `χ(0) = 1`.
pub fn beta_eval(sys: &DelaySystem, theta: f64) -> Result<DMatrix<f64>> {
    let h = sys.horizon;
    let tol = 1e-12 * h.max(1.0);
    if !(theta >= -h - tol && theta <= tol) {
        return Err(Error::Domain(format!("theta = {theta} outside [-{h}, 0]")));
    }
    let theta = theta.clamp(-h, 0.0);
    let (n, r) = (sys.state_dim(), sys.input_dim());
    let mut beta = DMatrix::zeros(n, r);
    for tap in &sys.taps {
        if theta + tap.delay >= 0.0 {
            beta += &tap.gain;
        }
    }
    if let Some(k) = &sys.kernel {
        if k.span > 0.0 && theta > -k.span {
            beta += k.integral_to(theta, n, r);
        }
    }
    Ok(beta)
}

/// Horizon long enough for both systems: the largest delay of either.
pub fn shared_horizon(plant: &DelaySystem, model: &DelaySystem) -> f64 {
    plant.max_delay().max(model.max_delay())
}

/// Controller built from an estimated model: `u = F (x + ∫ Q̂(θ) u(t+θ) dθ)`.
#[derive(Debug, Clone)]
pub struct ControllerSpec {
    pub model: DelaySystem,
    pub gain: DMatrix<f64>,
}

impl ControllerSpec {
    pub fn new(model: DelaySystem, gain: DMatrix<f64>) -> Result<Self> {
        if gain.shape() != (model.input_dim(), model.state_dim()) {
            return Err(Error::Dimension(format!(
                "gain F is {}x{}, expected {}x{}",
                gain.nrows(),
                gain.ncols(),
                model.input_dim(),
                model.state_dim()
            )));
        }
        Ok(Self { model, gain })
    }
}

/// Checks that plant and controller model agree on dimensions and horizon.
pub(crate) fn check_pair(plant: &DelaySystem, controller: &ControllerSpec) -> Result<()> {
    let model = &controller.model;
    if plant.state_dim() != model.state_dim() || plant.input_dim() != model.input_dim() {
        return Err(Error::Dimension(format!(
            "plant is ({}, {}) but model is ({}, {})",
            plant.state_dim(),
            plant.input_dim(),
            model.state_dim(),
            model.input_dim()
        )));
    }
    if plant.horizon() != model.horizon() {
        return Err(Error::Config(format!(
            "plant horizon {} differs from model horizon {}; redeclare both with the shared horizon",
            plant.horizon(),
            model.horizon()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn s1() -> DelaySystem {
        DelaySystem::single_delay(dmatrix![0.0], dmatrix![1.0], 1.0).unwrap()
    }

    fn kernel_only() -> DelaySystem {
        let k = IntegralKernel::continuous(1.0, |_| dmatrix![1.0]).unwrap();
        DelaySystem::new(dmatrix![0.0], 1, vec![], Some(k), None).unwrap()
    }

    #[test]
    fn beta_atom_included_at_jump() {
        assert_eq!(beta_eval(&s1(), -1.0).unwrap()[(0, 0)], 1.0);
        assert_eq!(beta_eval(&s1(), -0.5).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn beta_kernel_integral() {
        let b = beta_eval(&kernel_only(), -0.25).unwrap();
        assert!((b[(0, 0)] - 0.75).abs() < 1e-14);
        assert_eq!(beta_eval(&kernel_only(), -1.0).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn beta_domain_error() {
        assert!(matches!(beta_eval(&s1(), -1.5), Err(Error::Domain(_))));
        assert!(matches!(beta_eval(&s1(), 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn beta_at_minus_h_without_tap_there() {
        let sys = DelaySystem::new(
            dmatrix![0.0],
            1,
            vec![DiscreteTap::new(dmatrix![2.0], 0.5)],
            None,
            Some(1.0),
        )
        .unwrap();
        assert_eq!(beta_eval(&sys, -1.0).unwrap()[(0, 0)], 0.0);
        assert_eq!(beta_eval(&sys, -0.5).unwrap()[(0, 0)], 2.0);
        assert_eq!(beta_eval(&sys, -0.5 - 1e-9).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn shared_horizon_examples() {
        let mk = |ds: &[f64]| {
            let taps = ds
                .iter()
                .map(|&d| DiscreteTap::new(dmatrix![1.0], d))
                .collect();
            DelaySystem::new(dmatrix![0.0], 1, taps, None, None).unwrap()
        };
        assert_eq!(shared_horizon(&mk(&[1.0]), &mk(&[0.9])), 1.0);
        assert_eq!(shared_horizon(&mk(&[0.5, 1.2]), &mk(&[0.5, 1.3])), 1.3);
        assert_eq!(shared_horizon(&mk(&[2.0]), &mk(&[2.0])), 2.0);
    }

    #[test]
    fn validation_errors() {
        let dup = vec![
            DiscreteTap::new(dmatrix![1.0], 0.5),
            DiscreteTap::new(dmatrix![1.0], 0.5),
        ];
        assert!(DelaySystem::new(dmatrix![0.0], 1, dup, None, None).is_err());
        let short = DelaySystem::new(
            dmatrix![0.0],
            1,
            vec![DiscreteTap::new(dmatrix![1.0], 2.0)],
            None,
            Some(1.0),
        );
        assert!(matches!(short, Err(Error::Config(_))));
        let bad_gain = DelaySystem::new(
            dmatrix![0.0, 0.0; 0.0, 0.0],
            1,
            vec![DiscreteTap::new(dmatrix![1.0], 1.0)],
            None,
            None,
        );
        assert!(matches!(bad_gain, Err(Error::Dimension(_))));
        assert!(ControllerSpec::new(s1(), dmatrix![1.0, 2.0]).is_err());
    }

    #[test]
    fn sampled_kernel_with_jump() {
        let k = IntegralKernel::sampled(
            &[-1.0, -0.5, -0.5, 0.0],
            &[dmatrix![1.0], dmatrix![1.0], dmatrix![3.0], dmatrix![3.0]],
        )
        .unwrap();
        assert_eq!(k.discontinuities(), vec![-0.5]);
        assert_eq!(k.eval_left(-0.5).unwrap()[(0, 0)], 1.0);
        assert_eq!(k.eval_right(-0.5).unwrap()[(0, 0)], 3.0);
        let sys = DelaySystem::new(dmatrix![0.0], 1, vec![], Some(k), None).unwrap();
        let b = beta_eval(&sys, 0.0).unwrap();
        assert!((b[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_kernel_linear_piece_is_exact() {
        let k = IntegralKernel::sampled(
            &[-2.0, -1.3, 0.0],
            &[dmatrix![0.0], dmatrix![4.0], dmatrix![-1.0]],
        )
        .unwrap();
        let sys = DelaySystem::new(dmatrix![0.0], 1, vec![], Some(k), None).unwrap();
        // 0.7 * 2 + 1.3 * 1.5
        let b = beta_eval(&sys, 0.0).unwrap();
        assert!((b[(0, 0)] - 3.35).abs() < 1e-12);
    }
}
