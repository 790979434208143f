//! Security decision models (MDPs, POMDPs and zero-sum Markov games), the
//! learners used to solve them, observation-model identification from alert
//! traces, misspecification analysis and a steppable episode debugger.

pub mod analysis;
pub mod debugger;
pub mod decision;
pub mod experiment;
pub mod learning;
pub mod par;
pub mod seed;
pub mod sysid;
pub mod usecase;
