//! Web operations platform for ROS-style robot cells: an in-process
//! message bus, a JSON/WebSocket bridge, a simulated robot, and the
//! services behind an operator dashboard.

pub mod access;
pub mod app;
pub mod bridge;
pub mod bus;
pub mod clock;
pub mod config;
pub mod logs;
pub mod modmgr;
pub mod platform;
pub mod procexec;
pub mod robotsim;
pub mod runtime;
pub mod scalar;
pub mod script;
pub mod service;

pub use scalar::Scalar;

/// Cartesian pose in double precision, the precision the simulator runs at.
pub type Pose = robotsim::pose::PoseT<f64>;
pub type PoseF32 = robotsim::pose::PoseT<f32>;
pub type TrapezoidProfile = robotsim::motion::TrapezoidProfile<f64>;
pub type TrapezoidProfileF32 = robotsim::motion::TrapezoidProfile<f32>;
pub type LinearMotion = robotsim::motion::LinearMotion<f64>;
pub type LinearMotionF32 = robotsim::motion::LinearMotion<f32>;
