//! Discretisation of the quasi-reversibility problem for
//! `w = u_tt / h̃` on the inverse grid.

pub mod htilde;
pub mod operator;
pub mod system;

pub use htilde::{HTilde, HTildePoint};
pub use operator::{
    assemble_dirichlet, assemble_neumann, assemble_penalty, assemble_time_constraint, assemble_wave_operator,
    compute_boundary_data, initial_rate, pde_row_center, pde_row_count, Axis, BoundaryData, OperatorMode,
};
pub use system::{
    assemble_normal_system, normal_matrix, AssemblyConfig, NormalRhs, NormalSystem, QrOperator, RowBlocks, StackedSystem,
};
