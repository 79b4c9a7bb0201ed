use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Wraps an angle into (−π, π].
pub fn normalize_angle<T: Scalar>(angle: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut a = angle % two_pi;
    if a <= -T::PI() {
        a = a + two_pi;
    } else if a > T::PI() {
        a = a - two_pi;
    }
    a
}

/// Shortest signed rotation from `from` to `to`.
pub fn angle_delta<T: Scalar>(from: T, to: T) -> T {
    normalize_angle(to - from)
}

/// Cartesian pose: position in meters, roll/pitch/yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseT<T> {
    pub position: [T; 3],
    pub orientation: [T; 3],
}

impl<T: Scalar> Default for PoseT<T> {
    fn default() -> Self {
        Self {
            position: [T::zero(); 3],
            orientation: [T::zero(); 3],
        }
    }
}

impl<T: Scalar> PoseT<T> {
    pub fn new(position: [T; 3], orientation: [T; 3]) -> Self {
        Self {
            position,
            orientation,
        }
        .normalized()
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(self.orientation.iter())
            .all(|v| v.is_finite())
    }

    pub fn normalized(mut self) -> Self {
        for a in &mut self.orientation {
            *a = normalize_angle(*a);
        }
        self
    }

    /// Applies a relative offset (position added, angles added then wrapped).
    pub fn offset_by(&self, delta: &Self) -> Self {
        let mut out = *self;
        for i in 0..3 {
            out.position[i] = out.position[i] + delta.position[i];
            out.orientation[i] = out.orientation[i] + delta.orientation[i];
        }
        out.normalized()
    }

    pub fn distance_to(&self, other: &Self) -> T {
        (0..3)
            .map(|i| other.position[i] - self.position[i])
            .fold(T::zero(), |acc, d| acc + d * d)
            .sqrt()
    }

    /// Largest per-axis rotation (shortest way) between the two orientations.
    pub fn max_rotation_to(&self, other: &Self) -> T {
        (0..3)
            .map(|i| angle_delta(self.orientation[i], other.orientation[i]).abs())
            .fold(T::zero(), T::max)
    }

    /// Linear interpolation at fraction `s` ∈ [0, 1]; angles take the short way round.
    pub fn interpolate(&self, goal: &Self, s: T) -> Self {
        let mut out = *self;
        for i in 0..3 {
            out.position[i] = self.position[i] + s * (goal.position[i] - self.position[i]);
            out.orientation[i] =
                self.orientation[i] + s * angle_delta(self.orientation[i], goal.orientation[i]);
        }
        out.normalized()
    }
}
