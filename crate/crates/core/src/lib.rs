pub mod constraints;
pub mod corpus;
pub mod dynamics;
pub mod runtime;
pub mod statics;
pub mod syntax;
pub mod typeck;
