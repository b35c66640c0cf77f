//! Level-set rearrangements on grids, condenser capacities and energy inequalities.
//!
//! A set transform (`settrans`) acts on masks of a grid. Through its action on
//! superlevel sets it induces a transform of fields (`induce`). The crate
//! computes gradient energies (`energy`) and condenser capacities (`capacity`),
//! builds staircase approximations of induced fields (`staircase`) and runs
//! experiments comparing the energy inequality with the capacity inequality
//! (`harness`).

// Negated comparisons reject NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod capacity;
pub mod energy;
pub mod error;
pub mod grid;
pub mod harness;
pub mod induce;
pub mod report;
pub mod sampling;
pub mod settrans;
pub mod staircase;

pub use capacity::{capacity, capacity_with, CapacityResult, Condenser, SolverOptions};
pub use energy::{energy, Integrand};
pub use error::{Error, Result};
pub use grid::{Field, GridDomain, Mask};
pub use harness::{LevelPolicy, Sample, Tolerances};
pub use induce::{induce_exact, induce_function, LevelGrid};
pub use report::{Report, ReportRow};
pub use settrans::{SetTransform, Side, TransformSpec};
pub use staircase::{build_staircase, StaircaseResult};
