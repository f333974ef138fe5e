//! Robustness certification and closed-loop simulation of predictor feedback
//! for linear systems with discrete and distributed input delays.

pub mod certificate;
pub mod cli_report;
pub mod delay_model;
pub mod error;
pub mod matrix_ops;
pub mod reduction;
pub mod signal;
pub mod simulator;

pub use certificate::{
    certify, CertifyOptions, CorollaryBound, RobustnessCertificate, WeightChoice,
};
pub use delay_model::{ControllerSpec, DelaySystem, DiscreteTap, IntegralKernel};
pub use error::{Error, Result};
pub use matrix_ops::MatrixNorm;
pub use signal::{InitialInput, InputHistory, InputSignal, Side};
pub use simulator::{simulate, verify_envelope, EnvelopeReport, SimConfig, Trajectory};
