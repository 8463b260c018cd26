pub mod cli;
pub mod eval;
pub mod gamma;
pub mod gradcheck;
pub mod kg;
pub mod manifest;
pub mod model;
pub mod quadrature;
pub mod query;
pub mod special;
pub mod synthetic;
pub mod train;
