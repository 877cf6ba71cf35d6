//! Closed-loop execution monitoring for classical PDDL plans.
//!
//! The agent plans with a grounded forward search, queries the predicates in
//! each action's preconditions and effects against a perception oracle,
//! repairs its symbolic belief from the answers and replans when the belief
//! contradicts the plan. A stochastic symbolic world injects action-level
//! failure situations so strategies can be compared by success rate.

pub mod bench;
pub mod monitor;
pub mod pddl;
pub mod perception;
pub mod planner;
pub mod tasks;
pub mod vlmclient;
pub mod world;
