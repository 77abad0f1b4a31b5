//! Role-separated multi-agent evaluation harness.
//!
//! The crate runs Planner/Executor/Verifier sessions over seeded task bundles
//! under enforced or prompt-only role boundaries, grades outcomes with
//! deterministic script graders, and computes coordination metrics, statistics,
//! and grader audits over the resulting run ledger.

pub mod audit;
pub mod backend;
pub mod grading;
pub mod metrics;
pub mod runner;
pub mod sandbox;
pub mod scenarios;
pub mod session;
pub mod stats;
pub mod taskgen;

pub use grading::{CheckKind, CheckResult, GradeResult, PromotionRule};
pub use sandbox::{EnforcementMode, GateDecision, PermissionMatrix, Role, ViolationKind};
pub use session::{Condition, SessionConfig, SessionResult};
pub use taskgen::{SeedMode, TaskInstance, TaskTemplate};
