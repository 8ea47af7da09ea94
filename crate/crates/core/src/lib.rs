pub mod autodiff;
pub mod cli;
pub mod eval;
pub mod model;
pub mod retriever;
pub mod synthetic;
pub mod text;
pub mod training;
