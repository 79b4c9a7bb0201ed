//! Floating-point abstraction for the motion math.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Gathers the traits the kinematics code needs from a float type.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Default + Send + Sync + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
