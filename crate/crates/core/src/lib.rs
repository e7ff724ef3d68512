//! Feedback synthesis for discrete-time nonlinear systems by backward
//! reachability on a state grid, plus numerical checks of the rank
//! controllability condition and Newton-type local steering.
//!
//! Pipeline: [`dynamics`] defines `f`, [`grid`] quantizes the boxes,
//! [`reach`] computes the minimal layer index of every cell, [`synth`]
//! picks a descending input per cell and [`simulate`] runs and certifies
//! the closed loop. [`oracle`] recomputes the layer indices by plain BFS.

pub mod artifacts;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod oracle;
pub mod par;
pub mod rank;
pub mod reach;
pub mod simulate;
pub mod synth;

pub use dynamics::{Interval, SystemModel, Trajectory};
pub use error::{Error, EvalError, ParseError, Result};
pub use grid::{Grid, InputSet};
pub use par::Execution;
pub use reach::{compute_layers, ReachLayers, ReachOptions};
pub use synth::{synthesize, FeedbackTable};
