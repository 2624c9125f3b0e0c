//! Cooperative two-player kitchen gridworld with a sub-task abstraction and
//! hierarchical (manager/worker) ad hoc agents.

pub mod agents;
pub mod evaluation;
pub mod kitchen;
pub mod nn;
pub mod observations;
pub mod subtasks;
pub mod training;
