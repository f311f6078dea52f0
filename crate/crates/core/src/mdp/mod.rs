//! Discounted MDP data model, Bellman operators and exact oracles.

mod instance;
mod ops;
mod oracle;
mod vectors;

pub use instance::{Action, Instance, MdpShape, Row, ValidationOptions, ROW_SUM_TOLERANCE};
pub use ops::{bellman, bellman_policy, q_values, transition_product, truncate_median};
pub use oracle::{
    epsilon_optimality_gap, exact_optimal_values, exact_policy_values, solve_policy_system,
    value_iteration_steps, DENSE_SOLVE_LIMIT,
};
pub use vectors::{Policy, QValues, Values};
