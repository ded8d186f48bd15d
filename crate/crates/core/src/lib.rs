//! Dynamic-budget mixed-criticality scheduling on a uniprocessor.
//!
//! Time and utilization are exact rationals ([`ratio`]); probabilities and
//! weighted service levels are `f64`.

pub mod analysis;
pub mod experiments;
pub mod generator;
pub mod meba;
pub mod probability;
pub mod ratio;
pub mod simulator;
pub mod taskfile;
pub mod taskmodel;

pub use analysis::{theorem1_test, SchedVerdict, Utilization};
pub use meba::{MebaState, Mode};
pub use ratio::{Frac, Time};
pub use taskmodel::{Criticality, McTask, TaskSet};
