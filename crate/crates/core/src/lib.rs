//! Explicit data-driven predictive control for deterministic linear systems.
//!
//! Recorded input/output data are arranged into Hankel matrices, the
//! resulting data-driven optimal control problem is reduced to a strictly
//! convex parametric QP with as many decision variables as condensed MPC,
//! and that QP is solved explicitly as a piecewise-affine law over a
//! polyhedral partition of the past-window space.
//!
//! Module map:
//!
//! * [`sysmodel`]: LTI models, observability/Toeplitz matrices, state reconstruction.
//! * [`datamat`]: Hankel matrices, persistency of excitation, data partition.
//! * [`condense`]: model-based and data-driven QPs plus the reduction maps.
//! * [`qpcore`]: dense active-set QP and simplex LP.
//! * [`mpqp`]: polyhedra and explicit (multi-parametric) solutions.
//! * [`verify`]: numerical checks of the model/data equivalences.
//! * [`presets`]: the two reference configurations.

pub mod condense;
pub mod datamat;
pub mod error;
pub mod linalg;
pub mod mpqp;
pub mod par;
pub mod presets;
pub mod qpcore;
pub mod sysmodel;
pub mod verify;

pub use error::{Error, Result};
