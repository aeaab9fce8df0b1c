//! Value functions of control problems with convex costs: the classic and
//! generalized Lax-Hopf formulas, moderated costs, discounted values, an
//! exchange economy built on top, and numerical oracles to check them.

pub mod cli;
pub mod convex;
pub mod discounted;
pub mod economy;
pub mod error;
pub mod exec;
pub mod grid;
pub mod laxhopf;
pub mod moderation;
pub mod trajectory;
pub mod verify;

pub use convex::{eval_cost, CostField, ExtReal, TerminalCost};
pub use error::{Error, Result};
pub use grid::{Axis, Lattice};
pub use laxhopf::{classic_lax_hopf, generalized_lax_hopf, OuterGrid, ValueResult};
pub use moderation::{moderate, Moderation, ModerationProblem, SolverConfig};
pub use trajectory::{AdmissibleSpec, Trajectory, Window};
