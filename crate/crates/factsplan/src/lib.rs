//! Planning toolkit for placing and sizing series-capacitor (SC) and static
//! VAR compensator (SVC) devices on AC transmission networks.
//!
//! The planner iterates three steps over a set of load scenarios: analytic
//! linearization of the AC power-flow model around the current operating
//! points, a joint convex QP over per-scenario operational variables plus
//! shared device capacities (with an l1 investment cost promoting sparse
//! placement), and an AC power-flow re-solve per scenario to project the QP
//! step back onto the nonlinear balance equations.

pub mod acpf;
pub mod cli;
pub mod grid;
pub mod initializer;
pub mod linearize;
pub mod planner;
pub mod qp;
pub mod scenarios;
pub mod sparse;

pub use grid::{Branch, Bus, BusKind, CostPoly, Generator, GridError, Network};
pub use linearize::{PlanConfig, QpProblem};
// pub use planner::{InvestmentPlan, PlanOutcome, PlanStatus};
// pub use scenarios::Scenario;
