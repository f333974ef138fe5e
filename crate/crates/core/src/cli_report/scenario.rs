//! JSON scenario files.
//!
//! Matrices are arrays of rows. An integral kernel is a sampled table:
//! `thetas` ascending in `[−span, 0]`, one matrix per entry of `values`; a
//! repeated θ declares a jump (left value first, then right value).
//!
//! ```json
//! {
//!   "plant": {
//!     "state_dim": 1,
//!     "input_dim": 1,
//!     "a_matrix": [[0.0]],
//!     "discrete_taps": [{ "gain": [[1.0]], "delay": 1.0 }]
//!   },
//!   "model": { "...": "same layout" },
//!   "gain": [[-1.0]],
//!   "weights": { "w_prime": [[1.0]], "w_dprime": [[0.5]] },
//!   "grid_points": 2001,
//!   "simulation": { "dt": 0.001, "t_final": 3.0, "x0": [1.0] }
//! }
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::certificate::{CertifyOptions, WeightChoice, DEFAULT_GRID_POINTS};
use crate::delay_model::{
    shared_horizon, ControllerSpec, DelaySystem, DiscreteTap, IntegralKernel,
};
use crate::error::{Error, Result};
use crate::matrix_ops::MatrixNorm;
use crate::signal::InitialInput;
use crate::simulator::{SimConfig, DEFAULT_SIM_GRID_POINTS};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapSpec {
    pub gain: Rows,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTable {
    pub thetas: Vec<f64>,
    pub values: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub state_dim: usize,
    pub input_dim: usize,
    pub a_matrix: Rows,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub discrete_taps: Vec<TapSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integral_kernel: Option<KernelTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub w_prime: Rows,
    pub w_dprime: Rows,
}

/// Piecewise-constant initial input: `values[k]` on `[starts[k], starts[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputTable {
    pub starts: Vec<f64>,
    pub values: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_init: Option<InputTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub plant: SystemSpec,
    pub model: SystemSpec,
    pub gain: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<MatrixNorm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
}

/// Validated domain objects, with both systems on the shared horizon.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub plant: DelaySystem,
    pub controller: ControllerSpec,
    pub weights: WeightChoice,
    pub options: CertifyOptions,
}

pub fn matrix_from_rows(
    rows: &Rows,
    nrows: usize,
    ncols: usize,
    what: &str,
) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{what} must be {nrows}x{ncols}")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{what} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn rows_from_matrix(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl SystemSpec {
    pub fn build(&self, horizon: Option<f64>) -> Result<DelaySystem> {
        let (n, r) = (self.state_dim, self.input_dim);
        let a = matrix_from_rows(&self.a_matrix, n, n, "a_matrix")?;
        let taps = self
            .discrete_taps
            .iter()
            .enumerate()
            .map(|(i, t)| {
                Ok(DiscreteTap::new(
                    matrix_from_rows(&t.gain, n, r, &format!("tap {i} gain"))?,
                    t.delay,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let kernel = match &self.integral_kernel {
            Some(k) => {
                let values = k
                    .values
                    .iter()
                    .map(|m| matrix_from_rows(m, n, r, "integral kernel sample"))
                    .collect::<Result<Vec<_>>>()?;
                Some(IntegralKernel::sampled(&k.thetas, &values)?)
            }
            None => None,
        };
        DelaySystem::new(a, r, taps, kernel, horizon)
    }

    /// `ẋ = A x + B u(t − delay)` with no integral kernel.
    pub fn single_delay(a: &DMatrix<f64>, b: &DMatrix<f64>, delay: f64) -> Self {
        Self {
            state_dim: a.nrows(),
            input_dim: b.ncols(),
            a_matrix: rows_from_matrix(a),
            discrete_taps: vec![TapSpec {
                gain: rows_from_matrix(b),
                delay,
            }],
            integral_kernel: None,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    /// Canonical form: fixed field order, absent options omitted.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn load(&self) -> Result<LoadedScenario> {
        let plant = self.plant.build(None)?;
        let model = self.model.build(None)?;
        let h = shared_horizon(&plant, &model);
        let plant = plant.with_horizon(h)?;
        let model = model.with_horizon(h)?;
        let (n, r) = (plant.state_dim(), plant.input_dim());
        let gain = matrix_from_rows(&self.gain, r, n, "gain")?;
        let controller = ControllerSpec::new(model, gain)?;
        let weights = match &self.weights {
            Some(w) => WeightChoice::new(
                matrix_from_rows(&w.w_prime, n, n, "w_prime")?,
                matrix_from_rows(&w.w_dprime, r, r, "w_dprime")?,
            )?,
            None => WeightChoice::default_for(n, r),
        };
        let options = CertifyOptions {
            grid_points: self.grid_points.unwrap_or(DEFAULT_GRID_POINTS),
            norm: self.norm.unwrap_or_default(),
        };
        Ok(LoadedScenario {
            plant,
            controller,
            weights,
            options,
        })
    }

    /// Simulation settings; `dt` defaults to `h/100`, `t_final` to `10`,
    /// `x0` to all ones and the initial input to zero.
    pub fn sim_config(
        &self,
        horizon: f64,
        dt: Option<f64>,
        t_final: Option<f64>,
    ) -> Result<SimConfig> {
        let spec = self.simulation.clone().unwrap_or_default();
        let (n, r) = (self.plant.state_dim, self.plant.input_dim);
        let x0 = match spec.x0 {
            Some(v) if v.len() != n => {
                return Err(Error::Dimension(format!(
                    "x0 has {} entries, expected {n}",
                    v.len()
                )))
            }
            Some(v) => DVector::from_vec(v),
            None => DVector::from_element(n, 1.0),
        };
        let u_init = match spec.u_init {
            Some(t) => InitialInput::table(
                t.starts,
                t.values.into_iter().map(DVector::from_vec).collect(),
            )?,
            None => InitialInput::zero(r),
        };
        let mut cfg = SimConfig::new(
            dt.or(spec.dt).unwrap_or(horizon / 100.0),
            t_final.or(spec.t_final).unwrap_or(10.0),
            x0,
            u_init,
        );
        cfg.record_stride = spec.record_stride.unwrap_or(1);
        cfg.grid_points = spec.grid_points.unwrap_or(DEFAULT_SIM_GRID_POINTS);
        Ok(cfg)
    }
}
