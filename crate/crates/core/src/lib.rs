//! Distributed adaptive Nash equilibrium seeking with a prescribed
//! convergence time.
//!
//! Players of a strongly monotone quadratic game, each with a private affine
//! constraint, exchange estimates of the full action profile over an
//! undirected graph. A `sec²` time gain drives everyone's estimate to the
//! Nash equilibrium before the prescribed time `Tp`, while integral gains
//! adapt the constraint penalty and the consensus weight without any global
//! information.
//!
//! * [`game`]: costs, constraints, penalties, monotonicity constants.
//! * [`network`]: communication graph, Laplacian, algebraic connectivity.
//! * [`dynamics`]: state, gain schedule and vector field.
//! * [`integrator`]: time reparameterization and adaptive integration.
//! * [`oracle`]: exact equilibrium and Lyapunov-analysis quantities.
//! * [`scenario`] / [`experiment`]: scenario files, runs, sweeps and CSV output.

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod game;
pub mod integrator;
pub mod network;
pub mod oracle;
pub mod scenario;

pub use dynamics::{GainSchedule, SeekerState, SeekerSystem};
pub use error::{Error, Result};
pub use game::{Constraint, Coupling, PlayerCost, QuadraticGame};
pub use integrator::{simulate, IntegratorConfig, Status, Trajectory};
pub use network::Graph;
pub use oracle::{solve_kkt, EquilibriumReport};
pub use scenario::{load_scenario, Scenario};

