//! Natural-language orchestration of wireless resource allocation.
//!
//! A query is planned into typed tasks ([`planner`]), each task is matched
//! to an expert model from the [`registry`] ([`selector`]), dispatched as a
//! JSON tool call and summarized ([`executor`]). The experts are the
//! numerical optimizers in [`solvers`], fed by the seeded multi-cell
//! scenarios of [`simenv`]. Past interactions live in [`memory`]; [`llmgw`]
//! lets an external LLM do the planning; [`cli`] is the terminal front end.

pub mod canonical;
pub mod cli;
pub mod executor;
pub mod llmgw;
pub mod memory;
pub mod planner;
pub mod registry;
pub mod selector;
pub mod simenv;
pub mod solvers;
