//! Stochastic tree-substitution grammars: tree-bank projection, CNF cover
//! grammars, chart parsing over sentences and word-graphs, probabilistic
//! disambiguation, grammar specialization, reductions for hardness checks and
//! bracket evaluation.

pub mod acnf;
pub mod chart;
pub mod disambig;
pub mod eval;
pub mod grammar;
pub mod npc;
pub mod specialize;
pub mod trees;
