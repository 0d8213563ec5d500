use std::fmt::{Debug, Display};

use nalgebra as na;
use num_traits as nt;

/// Real scalar usable throughout the certification pipeline.
pub trait Scalar:
    Copy
    + na::RealField
    + nt::FromPrimitive
    + nt::ToPrimitive
    + nt::FloatConst
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Tolerance on the total mass of an empirical measure.
    const WEIGHT_TOL: f64;

    fn lit(v: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(v).expect("finite literal")
    }

    fn from_usize_lossy(n: usize) -> Self {
        <Self as nt::FromPrimitive>::from_usize(n).expect("representable count")
    }

    fn as_f64(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Scalar for f64 {
    const WEIGHT_TOL: f64 = 1e-12;
}

impl Scalar for f32 {
    const WEIGHT_TOL: f64 = 1e-5;
}
