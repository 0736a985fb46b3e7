//! Simulation and analysis of the Kac particle system with Maxwell molecules
//! and of its parallel spherical coupling.

pub mod analysis;
pub mod assignment;
pub mod geometry;
pub mod kernels;
pub mod quadrature;
pub mod seeding;
pub mod stats;
pub mod system;

pub use assignment::{solve_assignment, sym_distance, Assignment, AssignmentError, CostMatrix};
pub use geometry::{CollisionFrame, CoupledDirections, Rotation, UnitVec};
pub use kernels::{AngularKernel, KernelError, KernelFamily};
pub use system::{
    initial_pairing, project_to_constraint_sphere, sample_equilibrium, simulate, step_coupled, step_kac, CollisionEvent,
    Configuration, CoupledState, KacState, Process, StepOutcome, SystemError, TrajectoryRecord, TrajectoryRow,
};
