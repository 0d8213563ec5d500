//! Certification of the anti-monotone well-posedness regime for mean field game master
//! equations, together with a one-dimensional MFG system solver used to check the a-priori
//! estimates numerically.

pub mod certify;
pub mod measures;
pub mod models;
pub mod monotonicity;
pub mod scalar;
pub mod solver;

pub use scalar::Scalar;

pub type EmpiricalMeasure = measures::EmpiricalMeasure<f64>;
pub type ModelSpec = models::ModelSpec<f64>;
pub type QuadraticParams = models::QuadraticParams<f64>;
pub type RegularityConstants = models::RegularityConstants<f64>;
pub type VecLambda = monotonicity::VecLambda<f64>;
pub type MonotonicityEstimate = monotonicity::MonotonicityEstimate<f64>;
pub type SpectralReport = certify::SpectralReport<f64>;
pub type ConditionMatrices = certify::ConditionMatrices<f64>;
pub type ConstantLedger = certify::ConstantLedger<f64>;
