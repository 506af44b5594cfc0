pub mod corpus;
pub mod eval;
pub mod formula;
pub mod limits;
pub mod morphism;
pub mod signature;
pub mod structure;
pub mod theory;
