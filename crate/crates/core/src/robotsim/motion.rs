//! Straight-line motion with a trapezoidal speed profile.
//!
//! The profile accelerates at `accel` up to `speed`, cruises, then
//! decelerates symmetrically. When the distance is shorter than `speed²/accel`
//! the cruise phase vanishes and the profile is triangular with peak speed
//! `√(distance·accel)`.

use crate::robotsim::pose::PoseT;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("speed must be positive and finite")]
    BadSpeed,
    #[error("acceleration must be positive and finite")]
    BadAccel,
    #[error("distance must be non-negative and finite")]
    BadDistance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidProfile<T> {
    distance: T,
    accel: T,
    peak_speed: T,
    ramp_time: T,
    cruise_time: T,
}

impl<T: Scalar> TrapezoidProfile<T> {
    pub fn new(distance: T, speed: T, accel: T) -> Result<Self, ProfileError> {
        if !(speed.is_finite() && speed > T::zero()) {
            return Err(ProfileError::BadSpeed);
        }
        if !(accel.is_finite() && accel > T::zero()) {
            return Err(ProfileError::BadAccel);
        }
        if !(distance.is_finite() && distance >= T::zero()) {
            return Err(ProfileError::BadDistance);
        }
        let full_ramps = speed * speed / accel;
        let (peak_speed, ramp_time, cruise_time) = if distance >= full_ramps {
            (speed, speed / accel, (distance - full_ramps) / speed)
        } else {
            let peak = (distance * accel).sqrt();
            (peak, peak / accel, T::zero())
        };
        Ok(Self {
            distance,
            accel,
            peak_speed,
            ramp_time,
            cruise_time,
        })
    }

    pub fn distance(&self) -> T {
        self.distance
    }

    pub fn peak_speed(&self) -> T {
        self.peak_speed
    }

    pub fn is_triangular(&self) -> bool {
        self.cruise_time == T::zero() && self.distance > T::zero()
    }

    /// Total duration in seconds.
    pub fn duration(&self) -> T {
        self.ramp_time + self.cruise_time + self.ramp_time
    }

    pub fn speed_at(&self, t: T) -> T {
        let decel_start = self.ramp_time + self.cruise_time;
        if t <= T::zero() || t >= self.duration() {
            T::zero()
        } else if t < self.ramp_time {
            self.accel * t
        } else if t <= decel_start {
            self.peak_speed
        } else {
            self.accel * (self.duration() - t)
        }
    }

    /// Distance travelled after `t` seconds.
    pub fn position_at(&self, t: T) -> T {
        let half = T::lit(0.5);
        let decel_start = self.ramp_time + self.cruise_time;
        if t <= T::zero() {
            T::zero()
        } else if t >= self.duration() {
            self.distance
        } else if t < self.ramp_time {
            half * self.accel * t * t
        } else if t <= decel_start {
            half * self.peak_speed * self.ramp_time + self.peak_speed * (t - self.ramp_time)
        } else {
            let left = self.duration() - t;
            self.distance - half * self.accel * left * left
        }
    }
}

/// A planned straight-line move between two poses.
///
/// When the two positions coincide the orientation change alone is
/// profiled, with speed and acceleration read as rad/s and rad/s².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearMotion<T> {
    pub start: PoseT<T>,
    pub goal: PoseT<T>,
    pub profile: TrapezoidProfile<T>,
}

impl<T: Scalar> LinearMotion<T> {
    pub fn plan(start: PoseT<T>, goal: PoseT<T>, speed: T, accel: T) -> Result<Self, ProfileError> {
        let linear = start.distance_to(&goal);
        let length = if linear > T::zero() {
            linear
        } else {
            start.max_rotation_to(&goal)
        };
        Ok(Self {
            start,
            goal,
            profile: TrapezoidProfile::new(length, speed, accel)?,
        })
    }

    pub fn duration(&self) -> T {
        self.profile.duration()
    }

    /// Fraction of the path completed after `t` seconds.
    pub fn progress_at(&self, t: T) -> T {
        let length = self.profile.distance();
        if length == T::zero() {
            T::one()
        } else {
            (self.profile.position_at(t) / length).min(T::one())
        }
    }

    pub fn pose_at(&self, t: T) -> PoseT<T> {
        if t >= self.duration() {
            return self.goal;
        }
        self.start.interpolate(&self.goal, self.progress_at(t))
    }
}
