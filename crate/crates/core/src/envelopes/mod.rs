//! Envelope computations: convex and lamination envelopes on matrix grids,
//! cell-problem quasiconvexification and its radial regularization.

pub mod cell;
pub mod convex;
pub mod descent;
pub mod grid;
pub mod lamination;
pub mod zl;

pub use cell::{
    cell_inf, dirichlet_solve, solve_audit, CellConfig, CellProblem, CellSolution, CellStatus, DirichletSolution,
    SolveAudit, SolveRecord, ZERO_START_SLACK,
};
pub use convex::{convex_envelope, convexity_defect, eval_hull, lower_hull};
pub use descent::{minimize, DescentConfig, DescentResult, DescentStatus, Objective};
pub use grid::{EnvelopeTable, GridAxis, PointDiagnostic, TableKind, TableMeta, XiGrid};
pub use lamination::{lamination_envelope, lamination_envelope_with, lattice_directions};
pub use zl::{
    default_t_seq, idempotence_probe, omega_delta, zhat_table, zl, zl_hat, zl_table, IdempotenceProbe, Placement,
    ZhatConfig, ZhatOutcome, ZhatRecord, ZlConfig, ZlOutcome, ZlRecord,
};
