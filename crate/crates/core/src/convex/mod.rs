//! Extended reals, cost fields, conjugates and the Marchaud check.

pub mod conjugate;
pub mod cost;
pub mod extreal;
pub mod marchaud;

pub use conjugate::{legendre_fenchel, subdifferential_check, ConjugateTable};
pub use cost::{eval_cost, Anchor, CostField, TerminalCost};
pub use extreal::ExtReal;
pub use marchaud::{check_marchaud, MarchaudReport, MarchaudViolation, SampleBox};
