//! Deterministic simulator, scenario runner and trace checker.

pub mod check;
pub mod net;
pub mod scenario;
pub mod trace;

pub use check::{check, check_all, Report, Suite, Violation};
pub use net::{Network, Received, SimError, Transport};
pub use scenario::{run, RunError, RunOptions, Scenario, Step};
pub use trace::{Entry, Trace};
