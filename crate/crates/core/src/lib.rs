//! Law-governed online community: a law language and evaluator, per-member
//! controllers, support services, member nodes, gossip search and a
//! deterministic network simulator.

pub mod law;
pub mod state;
pub mod syntax;
pub mod term;
pub mod controller;
pub mod member;
pub mod search;
pub mod support;
pub mod wire;
pub mod law_be;
pub mod sim;
