//! Input signals seen through a sliding window `u_t(θ) = u(t + θ)`, `θ ∈ [−h, 0)`.
//!
//! Signals are piecewise continuous. Jumps are reported explicitly so that
//! quadrature over a window can cut cells at them and integrate each side
//! with its own one-sided limit.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::matrix_ops::QuadratureGrid;

/// Which one-sided limit to take at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Time-indexed input `u(s) ∈ Rʳ`.
pub trait InputSignal {
    fn dim(&self) -> usize;

    /// One-sided value `u(s⁻)` or `u(s⁺)` written into `out`.
    fn sample(&self, s: f64, side: Side, out: &mut [f64]);

    /// Times in the open interval `(lo, hi)` where `u` may jump, ascending.
    fn jumps_in(&self, lo: f64, hi: f64, out: &mut Vec<f64>);

    /// Earliest time at which the signal is defined.
    fn defined_from(&self) -> f64;
}

/// Input history on `[−h, 0)` before the loop starts.
#[derive(Clone)]
pub enum InitialInput {
    /// Constant vector on all of `(−∞, 0)`.
    Constant(DVector<f64>),
    /// `values[k]` holds on `[starts[k], starts[k+1])`, the last one up to 0.
    Table {
        starts: Vec<f64>,
        values: Vec<DVector<f64>>,
    },
    /// A continuous callable on `[−h, 0]`; its value at 0 is used as `u(0⁻)`.
    Function {
        dim: usize,
        from: f64,
        f: Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>,
    },
}

impl fmt::Debug for InitialInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialInput::Constant(v) => f.debug_tuple("Constant").field(&v.as_slice()).finish(),
            InitialInput::Table { starts, values } => f
                .debug_struct("Table")
                .field("starts", starts)
                .field(
                    "values",
                    &values
                        .iter()
                        .map(|v| v.as_slice().to_vec())
                        .collect::<Vec<_>>(),
                )
                .finish(),
            InitialInput::Function { dim, from, .. } => f
                .debug_struct("Function")
                .field("dim", dim)
                .field("from", from)
                .finish_non_exhaustive(),
        }
    }
}

impl InitialInput {
    pub fn zero(dim: usize) -> Self {
        InitialInput::Constant(DVector::zeros(dim))
    }

    pub fn constant(value: DVector<f64>) -> Self {
        InitialInput::Constant(value)
    }

    pub fn table(starts: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if starts.is_empty() || starts.len() != values.len() {
            return Err(Error::Config(
                "initial input table needs matching, non-empty starts and values".into(),
            ));
        }
        if starts.iter().any(|s| s.is_nan())
            || starts.windows(2).any(|w| w[0] >= w[1])
            || *starts.last().unwrap() >= 0.0
        {
            return Err(Error::Config(
                "initial input starts must be strictly increasing and negative".into(),
            ));
        }
        let dim = values[0].len();
        if dim == 0 || values.iter().any(|v| v.len() != dim) {
            return Err(Error::Dimension(
                "initial input values differ in length".into(),
            ));
        }
        Ok(InitialInput::Table { starts, values })
    }

    pub fn function<F>(dim: usize, from: f64, f: F) -> Self
    where
        F: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    {
        InitialInput::Function {
            dim,
            from,
            f: Arc::new(f),
        }
    }

    /// Piecewise-constant `φ` with value `values[j]` on grid cell `j`.
    pub fn on_grid_cells(grid: &QuadratureGrid, values: Vec<DVector<f64>>) -> Result<Self> {
        let pts = grid.points();
        if values.len() != pts.len() - 1 {
            return Err(Error::Dimension(format!(
                "{} cell values for a grid with {} cells",
                values.len(),
                pts.len() - 1
            )));
        }
        Self::table(pts[..pts.len() - 1].to_vec(), values)
    }

    fn value_into(&self, s: f64, side: Side, out: &mut [f64]) {
        match self {
            InitialInput::Constant(v) => out.copy_from_slice(v.as_slice()),
            InitialInput::Table { starts, values } => {
                let tol = snap_tol(s);
                // index of the segment containing s (from the requested side)
                let k = match side {
                    Side::Right => starts.partition_point(|&b| b <= s + tol),
                    Side::Left => starts.partition_point(|&b| b < s - tol),
                };
                if k == 0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                } else {
                    out.copy_from_slice(values[k - 1].as_slice());
                }
            }
            InitialInput::Function { f, .. } => {
                let v = f(s.min(0.0));
                out.copy_from_slice(v.as_slice());
            }
        }
    }

    fn jump_times(&self) -> &[f64] {
        match self {
            InitialInput::Table { starts, .. } => starts,
            _ => &[],
        }
    }

    fn start(&self) -> f64 {
        match self {
            InitialInput::Constant(_) => f64::NEG_INFINITY,
            InitialInput::Table { starts, .. } => starts[0],
            InitialInput::Function { from, .. } => *from,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            InitialInput::Constant(v) => v.len(),
            InitialInput::Table { values, .. } => values[0].len(),
            InitialInput::Function { dim, .. } => *dim,
        }
    }

    /// `∫_{−h}^{0} ‖φ(θ)‖² dθ` evaluated on a quadrature grid.
    pub fn l2_norm_sq(&self, grid: &QuadratureGrid) -> Result<f64> {
        window_l2_sq(grid, self, 0.0)
    }
}

pub(crate) fn snap_tol(s: f64) -> f64 {
    1e-10 * s.abs().max(1.0)
}

/// The initial input observed at `t = 0`; defined on `s < 0`, with
/// `u(0⁻)` taken as the limit of the initial data.
impl InputSignal for InitialInput {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn sample(&self, s: f64, side: Side, out: &mut [f64]) {
        let s = if s >= -snap_tol(s) { 0.0 } else { s };
        let side = if s == 0.0 { Side::Left } else { side };
        self.value_into(s, side, out);
    }

    fn jumps_in(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        out.extend(
            self.jump_times()
                .iter()
                .copied()
                .filter(|&d| d > lo && d < hi),
        );
    }

    fn defined_from(&self) -> f64 {
        self.start()
    }
}

/// Step-resolution input history of a running simulation.
///
/// Nodes `u(k·dt)` for `k ≥ 0` sit in a ring buffer; between nodes the
/// history is linearly interpolated, and after the newest node it is held.
/// Times before 0 come from the initial input. Nodes older than the
/// retention window are dropped.
#[derive(Debug, Clone)]
pub struct InputHistory {
    dt: f64,
    dim: usize,
    initial: InitialInput,
    first_index: usize,
    nodes: std::collections::VecDeque<f64>,
    retain: f64,
}

impl InputHistory {
    pub fn new(initial: InitialInput, dt: f64, retain: f64) -> Self {
        let dim = initial.input_dim();
        let capacity = ((retain / dt).ceil() as usize + 4) * dim;
        Self {
            dt,
            dim,
            initial,
            first_index: 0,
            nodes: std::collections::VecDeque::with_capacity(capacity),
            retain,
        }
    }

    pub fn len(&self) -> usize {
        self.first_index + self.nodes.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends `u(len·dt)` and drops nodes older than the retention window.
    pub fn push(&mut self, u: &[f64]) {
        debug_assert_eq!(u.len(), self.dim);
        self.nodes.extend(u.iter().copied());
        let newest = (self.len() - 1) as f64 * self.dt;
        while self.nodes.len() > 2 * self.dim
            && ((self.first_index + 1) as f64 * self.dt) < newest - self.retain
        {
            self.nodes.drain(..self.dim);
            self.first_index += 1;
        }
    }

    pub fn latest(&self) -> Option<DVector<f64>> {
        let count = self.nodes.len() / self.dim;
        (count > 0).then(|| self.node(self.len() - 1))
    }

    fn node(&self, k: usize) -> DVector<f64> {
        let off = (k - self.first_index) * self.dim;
        DVector::from_iterator(self.dim, self.nodes.range(off..off + self.dim).copied())
    }

    fn node_into(&self, k: usize, weight: f64, out: &mut [f64]) {
        let off = (k - self.first_index) * self.dim;
        for (o, v) in out.iter_mut().zip(self.nodes.range(off..off + self.dim)) {
            *o += weight * v;
        }
    }
}

impl InputSignal for InputHistory {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, s: f64, side: Side, out: &mut [f64]) {
        let tol = snap_tol(s);
        let count = self.len();
        // u(0⁻), and anything in the future before the first node, comes
        // from the initial data
        if s < -tol || (s <= tol && side == Side::Left) || count == 0 {
            self.initial.sample(s.min(0.0), side, out);
            return;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        let p = (s / self.dt).max(0.0);
        let last = count - 1;
        let k = p.floor();
        let frac = p - k;
        let k = k as usize;
        if k >= last {
            self.node_into(last, 1.0, out);
            return;
        }
        let k = k.max(self.first_index);
        if frac <= 1e-9 {
            self.node_into(k, 1.0, out);
        } else if frac >= 1.0 - 1e-9 {
            self.node_into(k + 1, 1.0, out);
        } else {
            self.node_into(k, 1.0 - frac, out);
            self.node_into(k + 1, frac, out);
        }
    }

    fn jumps_in(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        self.initial.jumps_in(lo, hi, out);
        if lo < 0.0 && hi > 0.0 {
            out.push(0.0);
        }
    }

    fn defined_from(&self) -> f64 {
        if self.first_index == 0 {
            self.initial.start()
        } else {
            self.first_index as f64 * self.dt
        }
    }
}

/// Sub-interval `[θ_a, θ_b]` of grid cell `cell`, with one-sided input values
/// `u(t + θ_a)⁺` and `u(t + θ_b)⁻`. `frac_*` locate the ends inside the cell.
pub(crate) struct Segment<'a> {
    pub cell: usize,
    pub theta_a: f64,
    pub theta_b: f64,
    pub frac_a: f64,
    pub frac_b: f64,
    pub ua: &'a [f64],
    pub ub: &'a [f64],
}

impl Segment<'_> {
    pub fn width(&self) -> f64 {
        self.theta_b - self.theta_a
    }

    pub fn is_full_cell(&self) -> bool {
        self.frac_a == 0.0 && self.frac_b == 1.0
    }
}

/// Walks the window `[t − h, t]` cell by cell, cutting cells where the
/// signal jumps.
pub(crate) fn for_each_segment<S, F>(
    grid: &QuadratureGrid,
    signal: &S,
    t: f64,
    mut f: F,
) -> Result<()>
where
    S: InputSignal + ?Sized,
    F: FnMut(&Segment<'_>),
{
    let h = grid.horizon();
    if t - h < signal.defined_from() - snap_tol(t - h) {
        return Err(Error::Domain(format!(
            "input history starts at {} but the window needs t - h = {}",
            signal.defined_from(),
            t - h
        )));
    }
    let mut jumps = Vec::new();
    signal.jumps_in(t - h, t, &mut jumps);
    let mut cuts: Vec<f64> = jumps.iter().map(|d| d - t).collect();
    cuts.sort_by(f64::total_cmp);

    let r = signal.dim();
    let mut ua = vec![0.0; r];
    let mut ub = vec![0.0; r];
    let pts = grid.points();
    let mut next_cut = 0;
    for cell in 0..pts.len() - 1 {
        let (lo, hi) = (pts[cell], pts[cell + 1]);
        let width = hi - lo;
        let edge_tol = 1e-9 * width;
        while next_cut < cuts.len() && cuts[next_cut] <= lo + edge_tol {
            next_cut += 1;
        }
        let mut a = lo;
        loop {
            let inner = next_cut < cuts.len() && cuts[next_cut] < hi - edge_tol;
            let b = if inner { cuts[next_cut] } else { hi };
            signal.sample(t + a, Side::Right, &mut ua);
            signal.sample(t + b, Side::Left, &mut ub);
            f(&Segment {
                cell,
                theta_a: a,
                theta_b: b,
                frac_a: (a - lo) / width,
                frac_b: (b - lo) / width,
                ua: &ua,
                ub: &ub,
            });
            if !inner {
                break;
            }
            a = b;
            next_cut += 1;
        }
    }
    Ok(())
}

/// `‖u_t‖² = ∫_{−h}^0 ‖u(t + θ)‖² dθ`.
pub fn window_l2_sq<S: InputSignal + ?Sized>(
    grid: &QuadratureGrid,
    signal: &S,
    t: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for_each_segment(grid, signal, t, |seg| {
        let qa: f64 = seg.ua.iter().map(|v| v * v).sum();
        let qb: f64 = seg.ub.iter().map(|v| v * v).sum();
        acc += 0.5 * seg.width() * (qa + qb);
    })?;
    Ok(acc)
}
