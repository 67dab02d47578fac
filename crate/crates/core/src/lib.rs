pub mod fourier;
pub mod multiplier;
pub mod estimator;
pub mod qp;
pub mod spline;
pub mod mise;
pub mod sim;
pub mod theory;
