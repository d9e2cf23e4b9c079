//! Simulation of fuzzy fault-tolerant bipartite consensus tracking for
//! stochastic strict-feedback multi-agent systems over signed digraphs.

pub mod controller;
pub mod dynamics;
pub mod engine;
pub mod expr;
pub mod fls;
pub mod ftpf;
pub mod metrics;
pub mod graph;
pub mod scenario;
pub mod trace;

pub use controller::{AgentController, AgentGains, StepGains, TermExponents};
pub use dynamics::{FaultMode, FaultSchedule, FollowerModel, LeaderSignal};
pub use engine::{ClosedLoop, EnsembleResult, IntegratorConfig, SimulationTrace};
pub use fls::{FuzzySystem, MembershipGrid};
pub use ftpf::PerformanceProfile;
pub use graph::{GaugePartition, SignedDigraph};
