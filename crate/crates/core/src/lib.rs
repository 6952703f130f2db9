//! Logistic classification near the edge of linear separability: datasets, exact losses and
//! gradients, closed-form generalization metrics, separability geometry, training dynamics,
//! the two-point toy model and the experiment drivers built on them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod lp;
pub mod model;
pub mod ode;
pub mod quadrature;
pub mod rng;
pub mod separability;
pub mod special;
pub mod toymodel;

pub use dataset::{Dataset, DistributionKind, TwoGaussiansSpec};
pub use dynamics::{GrokCriterion, OptimizerConfig, OptimizerKind, Trajectory, TrajectoryRow};
pub use error::{Error, Result};
pub use model::{LossKind, Weights};
pub use separability::SeparabilityReport;
pub use toymodel::{ToyConfig, ToySolution};
