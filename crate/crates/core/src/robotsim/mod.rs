//! Simulated robot back end: motion groups, end effectors, alarms, sensors and cameras.

pub mod alarms;
pub mod fixture;
pub mod motion;
pub mod node;
pub mod pose;
mod robot;
pub mod streams;
pub mod video;

pub use alarms::{Alarm, AlarmList, AlarmStatus};
pub use fixture::{GroupSpec, Pose, RobotFixture, ToolKind, ToolSpec};
pub use motion::{LinearMotion, ProfileError, TrapezoidProfile};
pub use robot::*;
