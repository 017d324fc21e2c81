//! Post-fault service restoration for radial distribution networks.
//!
//! The crate builds a mixed-integer second-order-cone program that combines
//! network reconfiguration, load rejection, tap settings of OLTCs, step
//! voltage regulators and capacitor banks, and DG dispatch over a multi-hour
//! restorative period, solves it with a branch-and-bound over an embedded
//! conic interior-point engine, and checks every plan against independent
//! oracles.
//!
//! ```no_run
//! use restoration::{fixtures, runner};
//!
//! let report = runner::solve_case(&fixtures::d12(), &fixtures::d12_fault_1_2(), &Default::default())?;
//! println!("{}", report.summary_line());
//! # Ok::<(), restoration::Error>(())
//! ```

pub mod builder;
pub mod error;
pub mod fixtures;
pub mod grid;
pub mod program;
pub mod runner;
pub mod solver;
pub mod state;
pub mod topology;
pub mod verify;

pub use error::{Error, Result};
