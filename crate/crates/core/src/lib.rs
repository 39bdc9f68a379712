//! Holomorphic Hecke eigenforms of full level, their masses along the
//! vertical geodesic, and numerical checks of the quantum-variance machinery.

pub mod analytic_kernels;
pub mod cli;
pub mod expsums;
pub mod forms;
pub mod mass;
pub mod oscillatory;
pub mod quad;
pub mod suites;
pub mod testfn;
pub mod trace;
pub mod variance;
