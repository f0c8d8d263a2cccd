//! Reference oracles and the acceptance criteria for `qrelax`.

pub mod criteria;
pub mod oracles;

pub use criteria::{run, run_one, title, Outcome, ORDER};
