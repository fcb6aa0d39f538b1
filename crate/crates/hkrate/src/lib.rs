pub mod calibration;
pub mod cli;
pub mod expr;
pub mod kernels;
pub mod mc_verify;
pub mod potential;
pub mod quadrature;
pub mod scaling;
pub mod simulate;
pub mod stable;
