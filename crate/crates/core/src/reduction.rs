//! Reduction kernel `Q(θ) = ∫_{−h}^{θ} e^{A(τ−θ)} dβ(τ)` and the quantities
//! built from it: the reduced state `y = x + ∫ Q(θ) u(t+θ) dθ`, the Gram
//! matrix `∫ Q Qᵀ`, and the mismatch norm `‖Q̂ − Q‖`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::delay_model::DelaySystem;
use crate::error::{Error, Result};
use crate::matrix_ops::{expm, MatrixNorm, QuadratureGrid};
use crate::signal::{for_each_segment, InputSignal};

/// `Q(θ)` sampled on a grid, with left and right limits at every node.
///
/// The two limits differ only at atoms of β (`θ = −hᵢ`), where the right
/// limit includes the atom.
#[derive(Debug, Clone)]
pub struct KernelGrid {
    grid: QuadratureGrid,
    rows: usize,
    cols: usize,
    // column-major n×r blocks, one per node
    left: Vec<f64>,
    right: Vec<f64>,
    atoms: Vec<f64>,
}

impl KernelGrid {
    pub fn zero(grid: QuadratureGrid, rows: usize, cols: usize) -> Self {
        let len = grid.len() * rows * cols;
        Self {
            grid,
            rows,
            cols,
            left: vec![0.0; len],
            right: vec![0.0; len],
            atoms: Vec::new(),
        }
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn atom_locations(&self) -> &[f64] {
        &self.atoms
    }

    fn block(&self) -> usize {
        self.rows * self.cols
    }

    pub(crate) fn left_slice(&self, j: usize) -> &[f64] {
        &self.left[j * self.block()..(j + 1) * self.block()]
    }

    pub(crate) fn right_slice(&self, j: usize) -> &[f64] {
        &self.right[j * self.block()..(j + 1) * self.block()]
    }

    /// `Q(θ_j⁻)`.
    pub fn left(&self, j: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, self.left_slice(j))
    }

    /// `Q(θ_j⁺)`, the value of the right-continuous kernel at `θ_j`.
    pub fn right(&self, j: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, self.right_slice(j))
    }

    /// Right-continuous samples `Q(θ_j)` at every grid node.
    pub fn samples(&self) -> Vec<DMatrix<f64>> {
        (0..self.grid.len()).map(|j| self.right(j)).collect()
    }

    /// Largest `‖Q(θ)‖` over the grid, both limits included.
    pub fn max_norm(&self, norm: MatrixNorm) -> f64 {
        (0..self.grid.len())
            .flat_map(|j| [self.left(j), self.right(j)])
            .map(|m| norm.eval(&m))
            .fold(0.0, f64::max)
    }

    fn set(&mut self, j: usize, left: &DMatrix<f64>, right: &DMatrix<f64>) {
        let b = self.block();
        self.left[j * b..(j + 1) * b].copy_from_slice(left.as_slice());
        self.right[j * b..(j + 1) * b].copy_from_slice(right.as_slice());
    }

    /// Accumulates `∫_{−h}^0 Q(θ) u(t+θ) dθ` into `out`.
    pub(crate) fn window_integral_into<S: InputSignal + ?Sized>(
        &self,
        signal: &S,
        t: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let (n, r) = (self.rows, self.cols);
        if signal.dim() != r || out.len() != n {
            return Err(Error::Dimension(format!(
                "kernel is {n}x{r}, input has {} entries, output {}",
                signal.dim(),
                out.len()
            )));
        }
        let mut ka = vec![0.0; n * r];
        let mut kb = vec![0.0; n * r];
        for_each_segment(&self.grid, signal, t, |seg| {
            let j = seg.cell;
            let half = 0.5 * seg.width();
            if seg.is_full_cell() {
                mat_vec_acc(self.right_slice(j), seg.ua, n, half, out);
                mat_vec_acc(self.left_slice(j + 1), seg.ub, n, half, out);
            } else {
                lerp_into(
                    self.right_slice(j),
                    self.left_slice(j + 1),
                    seg.frac_a,
                    &mut ka,
                );
                lerp_into(
                    self.right_slice(j),
                    self.left_slice(j + 1),
                    seg.frac_b,
                    &mut kb,
                );
                mat_vec_acc(&ka, seg.ua, n, half, out);
                mat_vec_acc(&kb, seg.ub, n, half, out);
            }
        })
    }

    /// `∫_{−h}^0 Q(θ) u(t+θ) dθ`.
    pub fn window_integral<S: InputSignal + ?Sized>(
        &self,
        signal: &S,
        t: f64,
    ) -> Result<DVector<f64>> {
        let mut out = vec![0.0; self.rows];
        self.window_integral_into(signal, t, &mut out)?;
        Ok(DVector::from_vec(out))
    }
}

fn lerp_into(a: &[f64], b: &[f64], frac: f64, out: &mut [f64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = (1.0 - frac) * x + frac * y;
    }
}

// out += w * M v with M column-major n×r
pub(crate) fn mat_vec_acc(m: &[f64], v: &[f64], n: usize, w: f64, out: &mut [f64]) {
    for (c, &vc) in v.iter().enumerate() {
        let s = w * vc;
        if s == 0.0 {
            continue;
        }
        let col = &m[c * n..(c + 1) * n];
        for (o, &mij) in out.iter_mut().zip(col) {
            *o += mij * s;
        }
    }
}

/// Samples `Q` for `sys` on `grid`.
///
/// Atom terms `e^{A(−hᵢ−θ)} Bᵢ` are evaluated in closed form at every node.
/// The distributed part obeys `K(θ_{j+1}) = e^{−AΔ} K(θ_j) + Δ/2 (e^{−AΔ} B_int(θ_j⁺) + B_int(θ_{j+1}⁻))`,
/// which is the trapezoid rule in τ for `∫ e^{A(τ−θ)} B_int(τ) dτ`.
pub fn compute_kernel(sys: &DelaySystem, grid: &QuadratureGrid) -> Result<KernelGrid> {
    let h = sys.horizon();
    if (grid.horizon() - h).abs() > 1e-12 * h.max(1.0) {
        return Err(Error::Config(format!(
            "grid spans [-{}, 0] but the system horizon is {h}",
            grid.horizon()
        )));
    }
    let (n, r) = (sys.state_dim(), sys.input_dim());
    let a = sys.a_matrix();
    let pts = grid.points();

    let mut atom_idx = Vec::with_capacity(sys.taps().len());
    for tap in sys.taps() {
        let k = grid.index_of(-tap.delay).ok_or_else(|| {
            Error::Config(format!("atom at theta = {} is not a grid node", -tap.delay))
        })?;
        atom_idx.push(k);
    }

    let mut kernel = KernelGrid::zero(grid.clone(), n, r);
    kernel.atoms = sys.taps().iter().map(|t| -t.delay).collect();

    let distributed = match sys.kernel() {
        Some(k) if k.span() > 0.0 => {
            let start = grid.index_of(-k.span()).ok_or_else(|| {
                Error::Config(format!("kernel start {} is not a grid node", -k.span()))
            })?;
            for &d in &k.discontinuities() {
                if grid.index_of(d).is_none() {
                    return Err(Error::Config(format!(
                        "kernel discontinuity {d} is not a grid node"
                    )));
                }
            }
            Some((start, k))
        }
        _ => None,
    };

    let mut k_part = DMatrix::<f64>::zeros(n, r);
    let mut step_cache: HashMap<u64, DMatrix<f64>> = HashMap::new();
    for (j, &theta) in pts.iter().enumerate() {
        if let Some((start, bint)) = distributed {
            if j > start {
                let delta = theta - pts[j - 1];
                let e = match step_cache.get(&delta.to_bits()) {
                    Some(e) => e.clone(),
                    None => {
                        let e = expm(&(a * -delta))?;
                        step_cache.insert(delta.to_bits(), e.clone());
                        e
                    }
                };
                let b_prev = bint
                    .eval_right(pts[j - 1])
                    .unwrap_or_else(|| DMatrix::zeros(n, r));
                let b_here = bint
                    .eval_left(theta)
                    .unwrap_or_else(|| DMatrix::zeros(n, r));
                k_part = &e * (&k_part + &b_prev * (0.5 * delta)) + b_here * (0.5 * delta);
            }
        }
        let mut left = k_part.clone();
        let mut right = k_part.clone();
        for (tap, &k) in sys.taps().iter().zip(&atom_idx) {
            if k > j {
                continue;
            }
            let term = if k == j {
                tap.gain.clone()
            } else {
                expm(&(a * (-tap.delay - theta)))? * &tap.gain
            };
            right += &term;
            if k < j {
                left += &term;
            }
        }
        kernel.set(j, &left, &right);
    }
    Ok(kernel)
}

/// `B_int(θ)` sampled on `grid` with one-sided limits, zero left of the
/// kernel span. `None` when the system has no integral kernel.
pub(crate) fn density_grid(sys: &DelaySystem, grid: &QuadratureGrid) -> Result<Option<KernelGrid>> {
    let bint = match sys.kernel() {
        Some(k) if k.span() > 0.0 => k,
        _ => return Ok(None),
    };
    if (grid.horizon() - sys.horizon()).abs() > 1e-12 * sys.horizon().max(1.0) {
        return Err(Error::Config(format!(
            "grid spans [-{}, 0] but the system horizon is {}",
            grid.horizon(),
            sys.horizon()
        )));
    }
    let (n, r) = (sys.state_dim(), sys.input_dim());
    let mut out = KernelGrid::zero(grid.clone(), n, r);
    let zero = DMatrix::zeros(n, r);
    let start = -bint.span() + 1e-12 * sys.horizon().max(1.0);
    for (j, &theta) in grid.points().iter().enumerate() {
        // the density switches on at −span, so its left limit there is zero
        let left = if theta <= start {
            zero.clone()
        } else {
            bint.eval_left(theta).unwrap_or_else(|| zero.clone())
        };
        let right = bint.eval_right(theta).unwrap_or_else(|| zero.clone());
        out.set(j, &left, &right);
    }
    Ok(Some(out))
}

/// `Q(0)`.
pub fn q_at_zero(kernel: &KernelGrid) -> DMatrix<f64> {
    kernel.right(kernel.grid.len() - 1)
}

/// `y = x + ∫_{−h}^0 Q(θ) u(t+θ) dθ` at time `t`.
pub fn reduce_state<S: InputSignal + ?Sized>(
    x: &DVector<f64>,
    signal: &S,
    t: f64,
    kernel: &KernelGrid,
) -> Result<DVector<f64>> {
    if x.len() != kernel.rows {
        return Err(Error::Dimension(format!(
            "state has {} entries, kernel has {} rows",
            x.len(),
            kernel.rows
        )));
    }
    let mut y = x.as_slice().to_vec();
    kernel.window_integral_into(signal, t, &mut y)?;
    Ok(DVector::from_vec(y))
}

/// `G = ∫_{−h}^0 Q(θ) Qᵀ(θ) dθ`.
pub fn gram_matrix(kernel: &KernelGrid) -> DMatrix<f64> {
    let n = kernel.rows;
    let mut g = DMatrix::zeros(n, n);
    let grid = &kernel.grid;
    for j in 0..grid.len() - 1 {
        let half = 0.5 * grid.cell_width(j);
        let qa = kernel.right(j);
        let qb = kernel.left(j + 1);
        g += (&qa * qa.transpose() + &qb * qb.transpose()) * half;
    }
    crate::matrix_ops::symmetrize(&g)
}

/// `‖ΔQ‖ = (∫_{−h}^0 ‖Q̂(θ) − Q(θ)‖² dθ)^{1/2}`.
pub fn delta_kernel_norm(q: &KernelGrid, q_hat: &KernelGrid, norm: MatrixNorm) -> Result<f64> {
    if q.grid.points() != q_hat.grid.points() || q.shape() != q_hat.shape() {
        return Err(Error::Dimension(
            "kernels must be sampled on the same grid with the same shape".into(),
        ));
    }
    let grid = &q.grid;
    let mut acc = 0.0;
    for j in 0..grid.len() - 1 {
        let half = 0.5 * grid.cell_width(j);
        let da = norm.eval(&(q_hat.right(j) - q.right(j)));
        let db = norm.eval(&(q_hat.left(j + 1) - q.left(j + 1)));
        acc += half * (da * da + db * db);
    }
    Ok(acc.sqrt())
}

/// Closed-form upper bound on `‖ΔQ‖²` for a single tap `B u(t − δ)`
/// modelled with delay `δ̂`:
///
/// `(‖B‖²/2‖A‖)(e^{2‖A‖d} − 1) + (‖B‖²/2‖A‖)(e^{2‖A‖h} − 1)(e^{‖A‖d} − 1)²`
/// with `d = |δ̂ − δ|`, `h = max(δ, δ̂)`, and `‖B‖² d` when `A = 0`.
pub fn single_delay_delta_bound(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    delta: f64,
    delta_hat: f64,
    norm: MatrixNorm,
) -> Result<f64> {
    if !(delta >= 0.0 && delta_hat >= 0.0) {
        return Err(Error::Domain(format!(
            "delays must be nonnegative, got {delta} and {delta_hat}"
        )));
    }
    let na = norm.eval(a);
    let nb2 = norm.eval(b).powi(2);
    let d = (delta_hat - delta).abs();
    let h = delta.max(delta_hat);
    if na == 0.0 {
        return Ok(nb2 * d);
    }
    let c = nb2 / (2.0 * na);
    Ok(c * (2.0 * na * d).exp_m1() + c * (2.0 * na * h).exp_m1() * (na * d).exp_m1().powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay_model::{DiscreteTap, IntegralKernel};
    use crate::signal::InitialInput;
    use nalgebra::{dmatrix, dvector};

    fn scalar_tap(a: f64, b: f64, delay: f64, horizon: f64) -> DelaySystem {
        DelaySystem::new(
            dmatrix![a],
            1,
            vec![DiscreteTap::new(dmatrix![b], delay)],
            None,
            Some(horizon),
        )
        .unwrap()
    }

    fn grid_for(systems: &[&DelaySystem], points: usize) -> QuadratureGrid {
        let h = systems[0].horizon();
        let splits: Vec<f64> = systems.iter().flat_map(|s| s.split_points()).collect();
        QuadratureGrid::new(h, points, &splits).unwrap()
    }

    #[test]
    fn s1_kernel_is_one() {
        let sys = scalar_tap(0.0, 1.0, 1.0, 1.0);
        let q = compute_kernel(&sys, &grid_for(&[&sys], 101)).unwrap();
        for j in 0..q.grid().len() {
            assert_eq!(q.right(j)[(0, 0)], 1.0);
        }
        assert_eq!(q_at_zero(&q)[(0, 0)], 1.0);
    }

    #[test]
    fn single_tap_general_a_matches_closed_form() {
        let a = dmatrix![0.3, -1.0; 0.5, -0.2];
        let b = dmatrix![1.0; 0.5];
        let delta = 0.7;
        let sys = DelaySystem::new(
            a.clone(),
            1,
            vec![DiscreteTap::new(b.clone(), delta)],
            None,
            Some(1.0),
        )
        .unwrap();
        let q = compute_kernel(&sys, &grid_for(&[&sys], 51)).unwrap();
        for (j, &theta) in q.grid().points().iter().enumerate() {
            let expected = if theta >= -delta {
                expm(&(&a * -(delta + theta))).unwrap() * &b
            } else {
                DMatrix::zeros(2, 1)
            };
            assert!((q.right(j) - expected).amax() < 1e-13, "theta {theta}");
        }
        let q0 = q_at_zero(&q);
        let expected = expm(&(&a * -delta)).unwrap() * &b;
        assert!((q0 - expected).amax() < 1e-13);
    }

    #[test]
    fn zero_measure_gives_zero_kernel() {
        let sys = scalar_tap(1.0, 0.0, 0.5, 1.0);
        let q = compute_kernel(&sys, &grid_for(&[&sys], 11)).unwrap();
        assert_eq!(q.max_norm(MatrixNorm::Spectral), 0.0);
        assert_eq!(q_at_zero(&q)[(0, 0)], 0.0);
    }

    #[test]
    fn atom_jump_is_exact() {
        let sys = scalar_tap(0.7, 2.0, 0.4, 1.0);
        let grid = grid_for(&[&sys], 33);
        let q = compute_kernel(&sys, &grid).unwrap();
        let k = grid.index_of(-0.4).unwrap();
        assert_eq!(q.right(k)[(0, 0)] - q.left(k)[(0, 0)], 2.0);
    }

    #[test]
    fn atom_off_grid_is_config_error() {
        let sys = scalar_tap(0.0, 1.0, 0.4, 1.0);
        let grid = QuadratureGrid::new(1.0, 4, &[]).unwrap();
        assert!(matches!(compute_kernel(&sys, &grid), Err(Error::Config(_))));
    }

    #[test]
    fn distributed_kernel_satisfies_its_ode() {
        // Q' = -A Q + B_int between split points
        let k = IntegralKernel::continuous(0.8, |th| dmatrix![1.0 + th; -0.5 * th]).unwrap();
        let a = dmatrix![0.2, 1.0; -1.0, -0.3];
        let sys = DelaySystem::new(a.clone(), 1, vec![], Some(k.clone()), Some(1.0)).unwrap();
        let mut errs = Vec::new();
        for points in [201, 401] {
            let grid = grid_for(&[&sys], points);
            let q = compute_kernel(&sys, &grid).unwrap();
            let mut worst: f64 = 0.0;
            for j in 0..grid.len() - 1 {
                let (t0, t1) = (grid.points()[j], grid.points()[j + 1]);
                if t0 < -0.8 {
                    continue;
                }
                let dq = (q.left(j + 1) - q.right(j)) / (t1 - t0);
                let mid = (q.left(j + 1) + q.right(j)) * 0.5;
                let res = dq + &a * mid - k.eval_right(0.5 * (t0 + t1)).unwrap();
                worst = worst.max(res.amax());
            }
            errs.push(worst);
        }
        assert!(errs[0] < 1e-4, "residual {}", errs[0]);
        assert!(errs[1] < errs[0] / 3.0, "no refinement gain: {errs:?}");
    }

    #[test]
    fn reduce_state_examples() {
        let sys = scalar_tap(0.0, 1.0, 1.0, 1.0);
        let q = compute_kernel(&sys, &grid_for(&[&sys], 101)).unwrap();
        let zero = InitialInput::zero(1);
        let one = InitialInput::constant(dvector![1.0]);
        let neg = InitialInput::constant(dvector![-1.0]);
        assert_eq!(
            reduce_state(&dvector![0.3], &zero, 0.0, &q).unwrap()[0],
            0.3
        );
        assert!((reduce_state(&dvector![0.0], &one, 0.0, &q).unwrap()[0] - 1.0).abs() < 1e-14);
        assert!(reduce_state(&dvector![1.0], &neg, 0.0, &q).unwrap()[0].abs() < 1e-14);
    }

    #[test]
    fn reduce_state_short_history_is_domain_error() {
        let sys = scalar_tap(0.0, 1.0, 1.0, 1.0);
        let q = compute_kernel(&sys, &grid_for(&[&sys], 11)).unwrap();
        let short = InitialInput::table(vec![-0.5], vec![dvector![1.0]]).unwrap();
        assert!(matches!(
            reduce_state(&dvector![0.0], &short, 0.0, &q),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gram_examples() {
        let s1 = scalar_tap(0.0, 1.0, 1.0, 1.0);
        let g = gram_matrix(&compute_kernel(&s1, &grid_for(&[&s1], 101)).unwrap());
        assert!((g[(0, 0)] - 1.0).abs() < 1e-14);
        let half = scalar_tap(0.0, 1.0, 0.5, 1.0);
        let g = gram_matrix(&compute_kernel(&half, &grid_for(&[&half], 101)).unwrap());
        assert!((g[(0, 0)] - 0.5).abs() < 1e-14);
        let zero = scalar_tap(0.0, 0.0, 0.5, 1.0);
        let g = gram_matrix(&compute_kernel(&zero, &grid_for(&[&zero], 11)).unwrap());
        assert_eq!(g[(0, 0)], 0.0);
    }

    #[test]
    fn delta_norm_examples() {
        let plant = scalar_tap(0.0, 1.0, 1.0, 1.0);
        for (dh, expected) in [(1.0, 0.0), (0.9, 0.1), (0.98, 0.02)] {
            let model = scalar_tap(0.0, 1.0, dh, 1.0);
            let grid = grid_for(&[&plant, &model], 2001);
            let q = compute_kernel(&plant, &grid).unwrap();
            let qh = compute_kernel(&model, &grid).unwrap();
            let d = delta_kernel_norm(&q, &qh, MatrixNorm::Spectral).unwrap();
            assert!((d * d - expected).abs() < 1e-12, "dh {dh}: {}", d * d);
        }
    }

    #[test]
    fn delta_norm_grid_mismatch() {
        let plant = scalar_tap(0.0, 1.0, 1.0, 1.0);
        let q1 = compute_kernel(&plant, &grid_for(&[&plant], 11)).unwrap();
        let q2 = compute_kernel(&plant, &grid_for(&[&plant], 21)).unwrap();
        assert!(matches!(
            delta_kernel_norm(&q1, &q2, MatrixNorm::Spectral),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn delta_bound_examples() {
        let n = MatrixNorm::Spectral;
        let v = single_delay_delta_bound(&dmatrix![0.0], &dmatrix![1.0], 1.0, 0.9, n).unwrap();
        assert!((v - 0.1).abs() < 1e-15);
        assert_eq!(
            single_delay_delta_bound(&dmatrix![2.0], &dmatrix![1.0], 1.0, 1.0, n).unwrap(),
            0.0
        );
        // (1/2)(e^{0.2} − 1) + (1/2)(e^{2.2} − 1)(e^{0.1} − 1)²
        let v = single_delay_delta_bound(&dmatrix![1.0], &dmatrix![1.0], 1.0, 1.1, n).unwrap();
        assert!((v - 0.155_083_403_298_788_28).abs() < 1e-12, "{v}");
        assert!(single_delay_delta_bound(&dmatrix![1.0], &dmatrix![1.0], -1.0, 1.1, n).is_err());
    }
}
