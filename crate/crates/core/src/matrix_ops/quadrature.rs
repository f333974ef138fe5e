use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Values that can be accumulated by the trapezoid rule.
pub trait Integrand: Clone {
    fn scaled(&self, w: f64) -> Self;
    fn add_scaled(&mut self, other: &Self, w: f64);
    fn same_shape(&self, other: &Self) -> bool;
}

impl Integrand for f64 {
    fn scaled(&self, w: f64) -> Self {
        self * w
    }
    fn add_scaled(&mut self, other: &Self, w: f64) {
        *self += w * other;
    }
    fn same_shape(&self, _other: &Self) -> bool {
        true
    }
}

impl Integrand for DMatrix<f64> {
    fn scaled(&self, w: f64) -> Self {
        self * w
    }
    fn add_scaled(&mut self, other: &Self, w: f64) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += w * b;
        }
    }
    fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }
}

impl Integrand for DVector<f64> {
    fn scaled(&self, w: f64) -> Self {
        self * w
    }
    fn add_scaled(&mut self, other: &Self, w: f64) {
        self.axpy(w, other, 1.0);
    }
    fn same_shape(&self, other: &Self) -> bool {
        self.len() == other.len()
    }
}

/// Trapezoid grid on `[−h, 0]` whose cells never straddle a split point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    horizon: f64,
    points: Vec<f64>,
    splits: Vec<f64>,
}

impl QuadratureGrid {
    /// Uniform grid with `base_points` nodes, augmented with `splits`.
    ///
    /// A base node lying within 0.1% of a cell width of a split point is
    /// moved onto the split instead of creating a sliver cell.
    pub fn new(horizon: f64, base_points: usize, splits: &[f64]) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!(
                "grid horizon must be positive, got {horizon}"
            )));
        }
        if base_points < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 points, got {base_points}"
            )));
        }
        let spacing = horizon / (base_points - 1) as f64;
        let snap = 1e-3 * spacing;

        let mut split_list: Vec<f64> = Vec::with_capacity(splits.len());
        for &s in splits {
            if !s.is_finite() || s < -horizon - snap || s > snap {
                return Err(Error::Config(format!(
                    "split point {s} lies outside [-{horizon}, 0]"
                )));
            }
            split_list.push(s.clamp(-horizon, 0.0));
        }
        split_list.sort_by(f64::total_cmp);
        let same = 1e-12 * horizon.max(1.0);
        split_list.dedup_by(|a, b| (*a - *b).abs() <= same);

        // (position, pinned): endpoints and split nodes are pinned and never moved.
        let mut nodes: Vec<(f64, bool)> = (0..base_points)
            .map(|j| {
                (
                    -horizon + j as f64 * spacing,
                    j == 0 || j == base_points - 1,
                )
            })
            .collect();
        nodes[0].0 = -horizon;
        nodes[base_points - 1].0 = 0.0;

        for &s in &split_list {
            let idx = nodes.partition_point(|&(p, _)| p < s);
            if idx < nodes.len() && (nodes[idx].0 - s).abs() <= same {
                nodes[idx].1 = true;
                continue;
            }
            if idx > 0 && (nodes[idx - 1].0 - s).abs() <= same {
                nodes[idx - 1].1 = true;
                continue;
            }
            let movable_right = idx < nodes.len() && !nodes[idx].1 && nodes[idx].0 - s <= snap;
            let movable_left = idx > 0 && !nodes[idx - 1].1 && s - nodes[idx - 1].0 <= snap;
            if movable_right {
                nodes[idx] = (s, true);
            } else if movable_left {
                nodes[idx - 1] = (s, true);
            } else {
                nodes.insert(idx, (s, true));
            }
        }
        let points: Vec<f64> = nodes.into_iter().map(|(p, _)| p).collect();

        Ok(Self {
            horizon,
            points,
            splits: split_list,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn splits(&self) -> &[f64] {
        &self.splits
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cell_width(&self, j: usize) -> f64 {
        self.points[j + 1] - self.points[j]
    }

    /// Index of a grid node equal to `theta` up to a tiny tolerance.
    pub fn index_of(&self, theta: f64) -> Option<usize> {
        let tol = 1e-12 * self.horizon.max(1.0);
        let idx = self.points.partition_point(|&p| p < theta - tol);
        (idx < self.points.len() && (self.points[idx] - theta).abs() <= tol).then_some(idx)
    }

    /// Trapezoid weights for a continuous integrand.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.points.len()];
        for j in 0..self.points.len() - 1 {
            let half = 0.5 * self.cell_width(j);
            w[j] += half;
            w[j + 1] += half;
        }
        w
    }

    /// Composite trapezoid sum of `samples` taken at the grid points.
    pub fn integrate<T: Integrand>(&self, samples: &[T]) -> Result<T> {
        self.integrate_one_sided(samples, samples)
    }

    /// Trapezoid sum of a piecewise-smooth integrand given by its left and
    /// right limits at every node. Cell `[θ_j, θ_{j+1}]` uses `right[j]` and
    /// `left[j+1]`, so jumps at nodes are integrated exactly.
    pub fn integrate_one_sided<T: Integrand>(&self, left: &[T], right: &[T]) -> Result<T> {
        let n = self.points.len();
        if left.len() != n || right.len() != n {
            return Err(Error::Dimension(format!(
                "grid has {n} points but got {} left / {} right samples",
                left.len(),
                right.len()
            )));
        }
        if left
            .iter()
            .chain(right.iter())
            .any(|s| !s.same_shape(&left[0]))
        {
            return Err(Error::Dimension("samples differ in shape".into()));
        }
        let mut acc = left[0].scaled(0.0);
        for j in 0..n - 1 {
            let half = 0.5 * self.cell_width(j);
            acc.add_scaled(&right[j], half);
            acc.add_scaled(&left[j + 1], half);
        }
        Ok(acc)
    }
}
