//! Closed-form oracles, synthetic populations and the Monte Carlo pipeline.

pub mod example1;
pub mod example2;
pub mod logistic;
pub mod pool;
pub mod rng;
pub mod simulation;

pub use example1::{example1_dgp, example1_oracle, Example1Oracle, Example1Params};
pub use example2::{example2_dataset, Example2};
pub use logistic::{fit_logistic, LogisticFit};
pub use pool::synthetic_pool;
pub use simulation::{run_replication, run_simulation, ReplicationOutcome, SimPlan, SimRow, SimSpec, SimTable};
