//! Discrete-time systems `x(t+1) = f(x(t), u(t))`, their flow maps and the
//! definition language used to describe them.

mod definition;
pub mod expr;
mod model;
pub mod registry;

pub use definition::{load_system, parse_system, parse_system_json, SystemDef};
pub use expr::Expr;
pub use model::{Interval, JacobianFn, NativeMap, SystemModel, Trajectory, EQUILIBRIUM_TOL};
