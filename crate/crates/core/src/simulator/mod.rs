//! Closed-loop simulation of the true plant driven by a predictor controller
//! built from a (possibly mismatched) model.
//!
//! Fixed-step classical Runge–Kutta on `x`; the input is a defined output,
//! computed once at each step start from `(x(t), u_t)` and appended to a
//! step-resolution history that is linearly interpolated between nodes.

use nalgebra::{DMatrix, DVector};

use crate::certificate::{shared_grid, RobustnessCertificate};
use crate::delay_model::{check_pair, ControllerSpec, DelaySystem};
use crate::error::{Error, Result};
use crate::matrix_ops::QuadratureGrid;
use crate::reduction::{compute_kernel, density_grid, reduce_state, KernelGrid};
use crate::signal::{
    for_each_segment, snap_tol, window_l2_sq, InitialInput, InputHistory, InputSignal, Side,
};

/// The loop is aborted once `‖x‖` exceeds this.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Default grid resolution for history integrals during simulation.
pub const DEFAULT_SIM_GRID_POINTS: usize = 1001;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub x0: DVector<f64>,
    pub u_init: InitialInput,
    /// Record every `record_stride`-th step.
    pub record_stride: usize,
    /// Base points of the θ-grid used for the history integrals.
    pub grid_points: usize,
}

impl SimConfig {
    pub fn new(dt: f64, t_final: f64, x0: DVector<f64>, u_init: InitialInput) -> Self {
        Self {
            dt,
            t_final,
            x0,
            u_init,
            record_stride: 1,
            grid_points: DEFAULT_SIM_GRID_POINTS,
        }
    }

    /// Number of steps; the recorded times are `k·dt` for `k < steps()`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt + 1e-9).floor() as usize
    }

    fn validate(&self, h: f64, n: usize, r: usize) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.dt > h / 10.0 * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "dt = {} exceeds h/10 = {}",
                self.dt,
                h / 10.0
            )));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt * (1.0 - 1e-12)) {
            return Err(Error::Config(format!(
                "t_final = {} must be at least dt = {}",
                self.t_final, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be positive".into()));
        }
        if self.x0.len() != n {
            return Err(Error::Dimension(format!(
                "x0 has {} entries, expected {n}",
                self.x0.len()
            )));
        }
        if self.u_init.input_dim() != r {
            return Err(Error::Dimension(format!(
                "initial input has {} entries, expected {r}",
                self.u_init.input_dim()
            )));
        }
        if self.u_init.defined_from() > -h + snap_tol(h) {
            return Err(Error::Domain(format!(
                "initial input starts at {} but must cover [-{h}, 0)",
                self.u_init.defined_from()
            )));
        }
        Ok(())
    }
}

/// Samples recorded at the start of each step, after `u(t)` has been computed.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x_samples: Vec<DVector<f64>>,
    pub u_samples: Vec<DVector<f64>>,
    pub y_samples: Vec<DVector<f64>>,
    /// Functional values; only recorded when a certificate is supplied.
    pub v_samples: Option<Vec<f64>>,
    pub u_hist_l2: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `u(t) = F (x + ∫_{−h}^0 Q̂(θ) u(t+θ) dθ)`, using `u(t⁻)` at `θ = 0`.
pub fn control_output<S: InputSignal + ?Sized>(
    x: &DVector<f64>,
    history: &S,
    t: f64,
    q_hat: &KernelGrid,
    f: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let pred = reduce_state(x, history, t, q_hat)?;
    if f.ncols() != pred.len() {
        return Err(Error::Dimension(format!(
            "gain has {} columns, state has {} entries",
            f.ncols(),
            pred.len()
        )));
    }
    Ok(f * pred)
}

/// Right-hand side of the plant with its kernel density pre-sampled.
struct Forcing<'a> {
    sys: &'a DelaySystem,
    density: Option<KernelGrid>,
    scratch: Vec<f64>,
}

impl<'a> Forcing<'a> {
    fn new(sys: &'a DelaySystem, grid: &QuadratureGrid) -> Result<Self> {
        Ok(Self {
            sys,
            density: density_grid(sys, grid)?,
            scratch: vec![0.0; sys.input_dim()],
        })
    }

    fn eval<S: InputSignal + ?Sized>(
        &mut self,
        x: &DVector<f64>,
        history: &S,
        t: f64,
        side: Side,
    ) -> Result<DVector<f64>> {
        if history.dim() != self.sys.input_dim() || x.len() != self.sys.state_dim() {
            return Err(Error::Dimension(
                "state or input does not match the plant".into(),
            ));
        }
        let h = self.sys.horizon();
        if t - h < history.defined_from() - snap_tol(t - h) {
            return Err(Error::Domain(format!(
                "input history starts at {} but the plant needs t - h = {}",
                history.defined_from(),
                t - h
            )));
        }
        let mut dx = self.sys.a_matrix() * x;
        for tap in self.sys.taps() {
            history.sample(t - tap.delay, side, &mut self.scratch);
            for (c, &uc) in self.scratch.iter().enumerate() {
                if uc != 0.0 {
                    dx.axpy(uc, &tap.gain.column(c), 1.0);
                }
            }
        }
        if let Some(density) = &self.density {
            density.window_integral_into(history, t, dx.as_mut_slice())?;
        }
        Ok(dx)
    }
}

/// `ẋ = A x + Σᵢ Bᵢ u(t − hᵢ) + ∫ B_int(θ) u(t+θ) dθ`; the history must
/// already contain `u(t)`.
pub fn plant_rhs<S: InputSignal + ?Sized>(
    x: &DVector<f64>,
    history: &S,
    t: f64,
    sys: &DelaySystem,
    grid: &QuadratureGrid,
) -> Result<DVector<f64>> {
    Forcing::new(sys, grid)?.eval(x, history, t, Side::Right)
}

/// `v = ‖x + ∫ Q u‖²_V + ∫_{−h}^0 e^{σθ} ‖u(t+θ)‖²_{W″} dθ`.
pub fn evaluate_functional<S: InputSignal + ?Sized>(
    x: &DVector<f64>,
    history: &S,
    t: f64,
    kernel: &KernelGrid,
    v_mat: &DMatrix<f64>,
    w_dprime: &DMatrix<f64>,
    sigma: f64,
) -> Result<f64> {
    let y = reduce_state(x, history, t, kernel)?;
    let r = history.dim();
    if v_mat.nrows() != y.len() || w_dprime.nrows() != r {
        return Err(Error::Dimension(
            "weights do not match the state and input".into(),
        ));
    }
    let state_part = (y.transpose() * v_mat * &y)[(0, 0)];
    let quad = |u: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..r {
            for j in 0..r {
                acc += u[i] * w_dprime[(i, j)] * u[j];
            }
        }
        acc
    };
    let mut input_part = 0.0;
    for_each_segment(kernel.grid(), history, t, |seg| {
        let fa = (sigma * seg.theta_a).exp() * quad(seg.ua);
        let fb = (sigma * seg.theta_b).exp() * quad(seg.ub);
        input_part += 0.5 * seg.width() * (fa + fb);
    })?;
    Ok(state_part + input_part)
}

/// Runs the closed loop from `cfg`. With a certificate, `v(t)` is recorded too.
pub fn simulate(
    plant: &DelaySystem,
    controller: &ControllerSpec,
    cfg: &SimConfig,
    cert: Option<&RobustnessCertificate>,
) -> Result<Trajectory> {
    check_pair(plant, controller)?;
    let h = plant.horizon();
    let (n, r) = (plant.state_dim(), plant.input_dim());
    cfg.validate(h, n, r)?;
    if let Some(c) = cert {
        if c.v_matrix.nrows() != n {
            return Err(Error::Dimension(
                "certificate does not match the plant".into(),
            ));
        }
    }

    let grid = shared_grid(plant, &controller.model, cfg.grid_points)?;
    let q = compute_kernel(plant, &grid)?;
    let q_hat = compute_kernel(&controller.model, &grid)?;
    let mut forcing = Forcing::new(plant, &grid)?;
    let dt = cfg.dt;
    let mut history = InputHistory::new(cfg.u_init.clone(), dt, h + 2.0 * dt);

    let steps = cfg.steps();
    let mut traj = Trajectory {
        v_samples: cert.map(|_| Vec::new()),
        ..Trajectory::default()
    };
    let mut x = cfg.x0.clone();
    let mut jumps = Vec::new();
    let mut breaks = Vec::new();

    for k in 0..steps {
        let t = k as f64 * dt;
        let u = control_output(&x, &history, t, &q_hat, &controller.gain)?;
        history.push(u.as_slice());

        if k % cfg.record_stride == 0 {
            traj.times.push(t);
            traj.y_samples.push(reduce_state(&x, &history, t, &q)?);
            traj.u_hist_l2.push(window_l2_sq(&grid, &history, t)?);
            if let (Some(c), Some(vs)) = (cert, traj.v_samples.as_mut()) {
                vs.push(evaluate_functional(
                    &x,
                    &history,
                    t,
                    &q,
                    &c.v_matrix,
                    c.weights.w_dprime(),
                    c.sigma,
                )?);
            }
            traj.x_samples.push(x.clone());
            traj.u_samples.push(u);
        }

        // split the step where a delayed input jump reaches the plant
        let t_next = (k + 1) as f64 * dt;
        breaks.clear();
        breaks.push(t);
        for tap in plant.taps() {
            if tap.delay <= 0.0 {
                continue;
            }
            jumps.clear();
            history.jumps_in(t - tap.delay, t_next - tap.delay, &mut jumps);
            let tol = 1e-9 * dt;
            breaks.extend(
                jumps
                    .iter()
                    .map(|d| d + tap.delay)
                    .filter(|&s| s > t + tol && s < t_next - tol),
            );
        }
        breaks.push(t_next);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();

        for w in breaks.windows(2) {
            x = rk4_step(&mut forcing, &history, &x, w[0], w[1])?;
        }
        let norm = x.norm();
        if !norm.is_finite() || norm > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { time: t_next, norm });
        }
    }
    Ok(traj)
}

fn rk4_step(
    forcing: &mut Forcing<'_>,
    history: &InputHistory,
    x: &DVector<f64>,
    a: f64,
    b: f64,
) -> Result<DVector<f64>> {
    let step = b - a;
    let mid = a + 0.5 * step;
    let k1 = forcing.eval(x, history, a, Side::Right)?;
    let k2 = forcing.eval(&(x + &k1 * (0.5 * step)), history, mid, Side::Right)?;
    let k3 = forcing.eval(&(x + &k2 * (0.5 * step)), history, mid, Side::Right)?;
    let k4 = forcing.eval(&(x + &k3 * step), history, b, Side::Left)?;
    Ok(x + (k1 + (k2 + k3) * 2.0 + k4) * (step / 6.0))
}

/// Largest observed ratios against the decay envelopes; each must stay at
/// most `1 + tolerance` for a certified run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeReport {
    /// `max v(t) e^{σ̂t} / v(0)`.
    pub v_ratio: f64,
    /// `max ‖x(t)‖² e^{σ̂t} / ((M/m_x)(‖x₀‖² + ‖u₀‖²))`.
    pub x_ratio: f64,
    /// `max ‖u_t‖² e^{σ̂t} / ((M/m_u)(‖x₀‖² + ‖u₀‖²))`.
    pub u_ratio: f64,
}

impl EnvelopeReport {
    pub fn max_ratio(&self) -> f64 {
        self.v_ratio.max(self.x_ratio).max(self.u_ratio)
    }

    pub fn holds(&self, tolerance: f64) -> bool {
        self.max_ratio() <= 1.0 + tolerance
    }
}

// 0/0 is vacuously satisfied
fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

pub fn verify_envelope(
    traj: &Trajectory,
    cert: &RobustnessCertificate,
    x0_norm_sq: f64,
    u0_norm_sq: f64,
) -> Result<EnvelopeReport> {
    let v = traj
        .v_samples
        .as_ref()
        .ok_or_else(|| Error::Domain("trajectory has no functional samples".into()))?;
    if v.is_empty() {
        return Err(Error::Domain("trajectory is empty".into()));
    }
    let s = cert.sigma_hat;
    let init = x0_norm_sq + u0_norm_sq;
    let x_scale = cert.upper_m / cert.m_x * init;
    let u_scale = cert.upper_m / cert.m_u * init;
    let mut report = EnvelopeReport {
        v_ratio: 0.0,
        x_ratio: 0.0,
        u_ratio: 0.0,
    };
    for (i, &t) in traj.times.iter().enumerate() {
        let growth = (s * t).exp();
        report.v_ratio = report.v_ratio.max(ratio(v[i] * growth, v[0]));
        report.x_ratio = report
            .x_ratio
            .max(ratio(traj.x_samples[i].norm_squared() * growth, x_scale));
        report.u_ratio = report
            .u_ratio
            .max(ratio(traj.u_hist_l2[i] * growth, u_scale));
    }
    Ok(report)
}
