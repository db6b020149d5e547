//! Parametric reachability analysis of discrete-time Markov chains by
//! fragmentation, per-fragment state elimination and composition.

pub mod casegen;
pub mod compose;
pub mod fragmentation;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod pmc;
pub mod ratfun;
pub mod sampling;
