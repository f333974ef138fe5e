//! Command-line front end: certificates, trajectories and delay sweeps.
//!
//! Exit codes: 0 certified (or completed), 2 not certified, 3 simulation
//! diverged, 1 any other error.

pub mod scenario;

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::certificate::{
    certify, corollary_single_delay, shared_grid, CorollaryBound, RobustnessCertificate,
};
use crate::delay_model::DelaySystem;
use crate::error::{Error, Result};
use crate::simulator::{simulate, verify_envelope, EnvelopeReport, SimConfig, Trajectory};
pub use scenario::{LoadedScenario, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CERTIFIED: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Default relative slack when checking decay envelopes.
pub const DEFAULT_TOLERANCE: f64 = 0.01;

#[derive(Debug, Parser)]
#[command(
    name = "predictor-cert",
    version,
    about = "Robustness certificates and simulations for predictor feedback with input delay"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the robustness certificate of a scenario.
    Certify {
        scenario: PathBuf,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the closed loop and write a trajectory CSV.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Sweep the model delay of a single-delay scenario.
    SweepDelay {
        scenario: PathBuf,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        step: f64,
        /// Also simulate each row and report the largest envelope ratio.
        #[arg(long)]
        simulate: bool,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form delay-mismatch bound for a single-delay scenario.
    Corollary {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Certify {
            scenario,
            grid_points,
            out,
        } => cmd_certify(&scenario, grid_points, out.as_deref()),
        Command::Simulate {
            scenario,
            grid_points,
            dt,
            t_final,
            out,
            tolerance,
        } => cmd_simulate(
            &scenario,
            grid_points,
            dt,
            t_final,
            out.as_deref(),
            tolerance,
        ),
        Command::SweepDelay {
            scenario,
            from,
            to,
            step,
            simulate,
            grid_points,
            dt,
            t_final,
            out,
        } => {
            let sweep = SweepOptions {
                from,
                to,
                step,
                simulate,
                dt,
                t_final,
            };
            cmd_sweep_delay(&scenario, grid_points, &sweep, out.as_deref())
        }
        Command::Corollary { scenario, out } => cmd_corollary(&scenario, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(Error::Diverged { time, norm }) => {
            eprintln!("error: simulation diverged at t = {time} (|x| = {norm:e})");
            EXIT_DIVERGED
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Scenario::from_json(&text)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::Config(format!("cannot write to stdout: {e}")))
        }
    }
}

fn load(path: &Path, grid_points: Option<usize>) -> Result<(Scenario, LoadedScenario)> {
    let sc = read_scenario(path)?;
    let mut loaded = sc.load()?;
    if let Some(g) = grid_points {
        loaded.options.grid_points = g;
    }
    Ok((sc, loaded))
}

pub fn cmd_certify(path: &Path, grid_points: Option<usize>, out: Option<&Path>) -> Result<i32> {
    let (_, sc) = load(path, grid_points)?;
    let cert = certify(&sc.plant, &sc.controller, &sc.weights, sc.options)?;
    emit(out, &certificate_report(&cert))?;
    Ok(if cert.certified {
        EXIT_OK
    } else {
        EXIT_NOT_CERTIFIED
    })
}

fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| {
            format!(
                "[{}]",
                r.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Flat `key = value` rendering of a certificate.
pub fn certificate_report(cert: &RobustnessCertificate) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv(
        "tool",
        format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
    );
    kv("certified", cert.certified.to_string());
    kv("grid_points", cert.options.grid_points.to_string());
    kv("grid_nodes", cert.grid_nodes.to_string());
    kv("norm", cert.options.norm.as_str().to_string());
    kv("horizon", cert.horizon.to_string());
    kv("spectral_abscissa", cert.spectral_abscissa.to_string());
    kv("sigma", cert.sigma.to_string());
    kv("sigma_hat", cert.sigma_hat.to_string());
    kv("delta_q_norm", cert.delta_q_norm.to_string());
    kv(
        "delta_q_sq",
        (cert.delta_q_norm * cert.delta_q_norm).to_string(),
    );
    kv("threshold_sq", cert.threshold_sq.to_string());
    kv("k1", cert.k1.to_string());
    kv("k2", cert.k2.to_string());
    kv(
        "k3",
        cert.k3
            .map_or_else(|| "none".to_string(), |k| k.to_string()),
    );
    kv("upper_m", cert.upper_m.to_string());
    kv("m_u", cert.m_u.to_string());
    kv("m_x", cert.m_x.to_string());
    kv("envelope_x", cert.envelope_x.to_string());
    kv("envelope_u", cert.envelope_u.to_string());
    kv("v_matrix", fmt_matrix(&cert.v_matrix));
    kv("gram", fmt_matrix(&cert.gram));
    kv("w_prime", fmt_matrix(cert.weights.w_prime()));
    kv("w_dprime", fmt_matrix(cert.weights.w_dprime()));
    s
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV with columns `t, x_1..x_n, u_1..u_r, y_1..y_n, v, bound_v`, where
/// `bound_v = v(0) e^{−σ̂t}`. Without a certificate the last two are `nan`.
pub fn trajectory_csv(traj: &Trajectory, cert: Option<&RobustnessCertificate>) -> String {
    let n = traj.x_samples.first().map_or(0, |x| x.len());
    let r = traj.u_samples.first().map_or(0, |u| u.len());
    let mut s = String::from("t");
    for i in 1..=n {
        let _ = write!(s, ",x_{i}");
    }
    for i in 1..=r {
        let _ = write!(s, ",u_{i}");
    }
    for i in 1..=n {
        let _ = write!(s, ",y_{i}");
    }
    s.push_str(",v,bound_v\n");
    let v = traj.v_samples.as_ref();
    let v0 = v.and_then(|v| v.first().copied());
    for (k, &t) in traj.times.iter().enumerate() {
        s.push_str(&num(t));
        for val in traj.x_samples[k]
            .iter()
            .chain(traj.u_samples[k].iter())
            .chain(traj.y_samples[k].iter())
        {
            s.push(',');
            s.push_str(&num(*val));
        }
        let (vk, bound) = match (v, v0, cert) {
            (Some(v), Some(v0), Some(c)) => (v[k], v0 * (-c.sigma_hat * t).exp()),
            _ => (f64::NAN, f64::NAN),
        };
        let _ = writeln!(s, ",{},{}", num(vk), num(bound));
    }
    s
}

/// `‖φ‖²` of the initial input over the window the simulator will use.
pub fn initial_input_norm_sq(
    plant: &DelaySystem,
    model: &DelaySystem,
    cfg: &SimConfig,
) -> Result<f64> {
    let grid = shared_grid(plant, model, cfg.grid_points)?;
    cfg.u_init.l2_norm_sq(&grid)
}

fn envelope_for(
    sc: &LoadedScenario,
    cfg: &SimConfig,
    traj: &Trajectory,
    cert: &RobustnessCertificate,
) -> Result<EnvelopeReport> {
    let u0 = initial_input_norm_sq(&sc.plant, &sc.controller.model, cfg)?;
    verify_envelope(traj, cert, cfg.x0.norm_squared(), u0)
}

fn envelope_report(report: &EnvelopeReport, tolerance: f64) -> String {
    format!(
        "envelope_v_ratio = {}\nenvelope_x_ratio = {}\nenvelope_u_ratio = {}\nenvelope_holds = {}\n",
        report.v_ratio,
        report.x_ratio,
        report.u_ratio,
        report.holds(tolerance)
    )
}

pub fn cmd_simulate(
    path: &Path,
    grid_points: Option<usize>,
    dt: Option<f64>,
    t_final: Option<f64>,
    out: Option<&Path>,
    tolerance: f64,
) -> Result<i32> {
    let (raw, sc) = load(path, grid_points)?;
    let cfg = raw.sim_config(sc.plant.horizon(), dt, t_final)?;
    // simulation still runs when no certificate exists
    let cert = match certify(&sc.plant, &sc.controller, &sc.weights, sc.options) {
        Ok(c) => Some(c),
        Err(e @ (Error::NotHurwitz { .. } | Error::Certification(_))) => {
            eprintln!("note: no certificate ({e}); functional not recorded");
            None
        }
        Err(e) => return Err(e),
    };
    let traj = simulate(&sc.plant, &sc.controller, &cfg, cert.as_ref())?;
    emit(out, &trajectory_csv(&traj, cert.as_ref()))?;
    if let Some(c) = cert.as_ref().filter(|c| c.certified) {
        let text = envelope_report(&envelope_for(&sc, &cfg, &traj, c)?, tolerance);
        if out.is_some() {
            print!("{text}");
        } else {
            eprint!("{text}");
        }
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub from: f64,
    pub to: f64,
    pub step: f64,
    pub simulate: bool,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
}

impl SweepOptions {
    /// `from, from + step, …` up to `to`, rounded to 12 decimals.
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::Config(format!(
                "sweep step must be positive, got {}",
                self.step
            )));
        }
        if !(self.from.is_finite() && self.to.is_finite()) {
            return Err(Error::Config("sweep bounds must be finite".into()));
        }
        if self.to < self.from {
            return Ok(Vec::new());
        }
        let count = ((self.to - self.from) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|k| ((self.from + k as f64 * self.step) * 1e12).round() / 1e12)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta_hat: f64,
    pub delta_q_sq: f64,
    pub certified: bool,
    pub sigma_hat: f64,
    pub threshold_sq: f64,
    pub corollary_bound: f64,
    /// Largest envelope ratio of a simulated run; `inf` on divergence.
    pub envelope_max: Option<f64>,
}

pub fn sweep_delay(
    raw: &Scenario,
    sc: &LoadedScenario,
    opts: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    let plant = raw.plant.build(None)?;
    let model = raw.model.build(None)?;
    let (tap, _) = (
        plant
            .as_single_delay()
            .ok_or_else(|| Error::Config("sweep-delay needs a single-delay plant".into()))?,
        model
            .as_single_delay()
            .ok_or_else(|| Error::Config("sweep-delay needs a single-delay model".into()))?,
    );
    let (a, b, delta) = (plant.a_matrix().clone(), tap.gain.clone(), tap.delay);
    let values = opts.values()?;
    values
        .par_iter()
        .map(|&dh| {
            let m = model.with_tap_delay(0, dh)?;
            let h = plant.max_delay().max(m.max_delay());
            let row_sc = LoadedScenario {
                plant: plant.with_horizon(h)?,
                controller: crate::delay_model::ControllerSpec::new(
                    m.with_horizon(h)?,
                    sc.controller.gain.clone(),
                )?,
                weights: sc.weights.clone(),
                options: sc.options,
            };
            let cert = certify(
                &row_sc.plant,
                &row_sc.controller,
                &row_sc.weights,
                row_sc.options,
            )?;
            let cor = corollary_single_delay(
                &a,
                &b,
                &row_sc.controller.gain,
                delta,
                dh,
                &sc.weights,
                sc.options.norm,
            )?;
            let envelope_max = if opts.simulate {
                let cfg = raw.sim_config(h, opts.dt, opts.t_final)?;
                Some(
                    match simulate(&row_sc.plant, &row_sc.controller, &cfg, Some(&cert)) {
                        Ok(traj) => envelope_for(&row_sc, &cfg, &traj, &cert)?.max_ratio(),
                        Err(Error::Diverged { .. }) => f64::INFINITY,
                        Err(e) => return Err(e),
                    },
                )
            } else {
                None
            };
            Ok(SweepRow {
                delta_hat: dh,
                delta_q_sq: cert.delta_q_norm * cert.delta_q_norm,
                certified: cert.certified,
                sigma_hat: cert.sigma_hat,
                threshold_sq: cert.threshold_sq,
                corollary_bound: cor.delay_bound,
                envelope_max,
            })
        })
        .collect()
}

pub fn sweep_table(rows: &[SweepRow], with_envelope: bool) -> String {
    let mut s =
        String::from("delta_hat,delta_q_sq,certified,sigma_hat,threshold_sq,corollary_bound");
    if with_envelope {
        s.push_str(",envelope_max");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(
            s,
            "{},{},{},{},{},{}",
            r.delta_hat,
            num(r.delta_q_sq),
            r.certified,
            num(r.sigma_hat),
            num(r.threshold_sq),
            num(r.corollary_bound)
        );
        if with_envelope {
            let _ = write!(s, ",{}", num(r.envelope_max.unwrap_or(f64::NAN)));
        }
        s.push('\n');
    }
    s
}

pub fn cmd_sweep_delay(
    path: &Path,
    grid_points: Option<usize>,
    opts: &SweepOptions,
    out: Option<&Path>,
) -> Result<i32> {
    let (raw, sc) = load(path, grid_points)?;
    let rows = sweep_delay(&raw, &sc, opts)?;
    emit(out, &sweep_table(&rows, opts.simulate))?;
    Ok(EXIT_OK)
}

/// Corollary bound for a scenario whose plant and model each have one discrete delay.
pub fn corollary_for(sc: &LoadedScenario) -> Result<(f64, f64, CorollaryBound)> {
    let tap = sc
        .plant
        .as_single_delay()
        .ok_or_else(|| Error::Config("corollary needs a single-delay plant".into()))?;
    let model_tap = sc
        .controller
        .model
        .as_single_delay()
        .ok_or_else(|| Error::Config("corollary needs a single-delay model".into()))?;
    let bound = corollary_single_delay(
        sc.plant.a_matrix(),
        &tap.gain,
        &sc.controller.gain,
        tap.delay,
        model_tap.delay,
        &sc.weights,
        sc.options.norm,
    )?;
    Ok((tap.delay, model_tap.delay, bound))
}

pub fn cmd_corollary(path: &Path, out: Option<&Path>) -> Result<i32> {
    let (_, sc) = load(path, None)?;
    let (delta, delta_hat, c) = corollary_for(&sc)?;
    let text = format!(
        "delta = {delta}\ndelta_hat = {delta_hat}\nhorizon = {}\nsigma = {}\nk1 = {}\nk2 = {}\nk3 = {}\ndelay_bound = {}\ncertified = {}\n",
        c.horizon, c.sigma, c.k1, c.k2, c.k3, c.delay_bound, c.certified
    );
    emit(out, &text)?;
    Ok(if c.certified {
        EXIT_OK
    } else {
        EXIT_NOT_CERTIFIED
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay_model::DiscreteTap;
    use crate::signal::InitialInput;
    use nalgebra::{dmatrix, dvector};

    fn s1_scenario(delta_hat: f64) -> Scenario {
        Scenario::from_json(&format!(
            r#"{{
            "plant": {{"state_dim": 1, "input_dim": 1, "a_matrix": [[0.0]],
                      "discrete_taps": [{{"gain": [[1.0]], "delay": 1.0}}]}},
            "model": {{"state_dim": 1, "input_dim": 1, "a_matrix": [[0.0]],
                      "discrete_taps": [{{"gain": [[1.0]], "delay": {delta_hat}}}]}},
            "gain": [[-1.0]],
            "weights": {{"w_prime": [[1.0]], "w_dprime": [[0.5]]}}
        }}"#
        ))
        .unwrap()
    }

    #[test]
    fn sweep_values() {
        let opts = |from, to, step| SweepOptions {
            from,
            to,
            step,
            simulate: false,
            dt: None,
            t_final: None,
        };
        let v = opts(0.95, 1.05, 0.01).values().unwrap();
        assert_eq!(v.len(), 11);
        assert_eq!(v[5], 1.0);
        assert_eq!(v[10], 1.05);
        assert!(opts(1.0, 0.9, 0.01).values().unwrap().is_empty());
        assert!(opts(0.0, 1.0, 0.0).values().is_err());
        assert_eq!(
            sweep_table(&[], false),
            "delta_hat,delta_q_sq,certified,sigma_hat,threshold_sq,corollary_bound\n"
        );
    }

    #[test]
    fn sweep_exact_row_matches_nominal() {
        let raw = s1_scenario(1.0);
        let sc = raw.load().unwrap();
        let opts = SweepOptions {
            from: 0.98,
            to: 1.0,
            step: 0.02,
            simulate: false,
            dt: None,
            t_final: None,
        };
        let rows = sweep_delay(&raw, &sc, &opts).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.certified));
        let exact = &rows[1];
        assert_eq!(exact.delta_q_sq, 0.0);
        assert!((exact.sigma_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_rejects_multi_tap() {
        let mut raw = s1_scenario(1.0);
        raw.plant.discrete_taps.push(scenario::TapSpec {
            gain: vec![vec![0.5]],
            delay: 0.5,
        });
        let sc = raw.load().unwrap();
        let opts = SweepOptions {
            from: 1.0,
            to: 1.0,
            step: 0.1,
            simulate: false,
            dt: None,
            t_final: None,
        };
        assert!(matches!(
            sweep_delay(&raw, &sc, &opts),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn report_has_flat_keys() {
        let sc = s1_scenario(0.98).load().unwrap();
        let cert = certify(&sc.plant, &sc.controller, &sc.weights, sc.options).unwrap();
        let report = certificate_report(&cert);
        assert!(report.contains("certified = true\n"));
        assert!(report.contains("grid_points = 2001\n"));
        assert!(report.lines().all(|l| l.contains(" = ")));
    }

    #[test]
    fn csv_layout() {
        let sys = DelaySystem::new(
            dmatrix![0.0],
            1,
            vec![DiscreteTap::new(dmatrix![1.0], 1.0)],
            None,
            None,
        )
        .unwrap();
        let ctrl = crate::delay_model::ControllerSpec::new(sys.clone(), dmatrix![-1.0]).unwrap();
        let cfg = SimConfig::new(0.001, 0.001, dvector![1.0], InitialInput::zero(1));
        let traj = simulate(&sys, &ctrl, &cfg, None).unwrap();
        let csv = trajectory_csv(&traj, None);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x_1,u_1,y_1,v,bound_v");
        assert_eq!(lines.len(), 2);
        assert!(lines[1]
            .starts_with("0.0000000000000000e0,1.0000000000000000e0,-1.0000000000000000e0,"));
        assert!(lines[1].ends_with(",NaN,NaN"));
    }

    #[test]
    fn corollary_on_s1() {
        let sc = s1_scenario(0.98).load().unwrap();
        let (delta, delta_hat, c) = corollary_for(&sc).unwrap();
        assert_eq!((delta, delta_hat), (1.0, 0.98));
        assert!((c.delay_bound - 0.025_198_708_817_271_168).abs() < 1e-12);
    }
}
