//! Engine for probabilistic databases under denial constraints.
//!
//! The library decides whether the tuple marginal probabilities of a
//! probabilistic database instance are consistent with a set of denial
//! constraints, and computes cautious answers to conjunctive queries as exact
//! rational probability intervals `[pmin, pmax]` over all models of the
//! instance. Polynomial structural and syntactic rules are applied where the
//! conflict hypergraph or the constraint set licenses them; an exact-rational
//! linear program over possible worlds serves as the general method.

pub mod constraint_lang;
pub mod consistency;
pub mod exact_lp;
pub mod grounding;
pub mod hypergraph_analysis;
pub mod model;
pub mod query_eval;
